//! Mixed-integer linear programming for the scheduler.
//!
//! Models are built with [`MilpModel`] and solved by any [`MilpBackend`]. The
//! bundled [`BranchAndBound`] needs no native code; [`HighsBackend`] is
//! available with the `highs` feature.

mod bnb;
mod error;
#[cfg(feature = "highs")]
mod highs;
mod model;
mod simplex;
mod solution;

pub use bnb::{BranchAndBound, MilpBackend};
pub use error::{ModelError, SolveError};
#[cfg(feature = "highs")]
pub use highs::HighsBackend;
pub use model::{Constraint, ConstraintId, Direction, LinExpr, MilpModel, Sense, VarId, VarKind, Variable};
pub use solution::{Solution, SolveOptions, SolveStatus};

/// Backend used when the caller does not pick one: HiGHS when compiled in,
/// otherwise the bundled branch and bound.
pub fn default_backend() -> Box<dyn MilpBackend + Send + Sync> {
    #[cfg(feature = "highs")]
    {
        Box::new(HighsBackend::default())
    }
    #[cfg(not(feature = "highs"))]
    {
        Box::new(BranchAndBound::default())
    }
}

/// Looks up a backend by name (`"bnb"` or `"highs"`).
pub fn backend_by_name(name: &str) -> Option<Box<dyn MilpBackend + Send + Sync>> {
    match name {
        "bnb" => Some(Box::new(BranchAndBound::default())),
        #[cfg(feature = "highs")]
        "highs" => Some(Box::new(HighsBackend::default())),
        _ => None,
    }
}
