//! Refits the default polarization curve and rectifier and prints the coefficients.
use p2h_core::calibration::{fit_polarization_curve, fit_rectifier_for_cancellation, CurveTargets};
use p2h_core::rectifier::RectifierParams;

fn main() {
    let curve = fit_polarization_curve(&CurveTargets::default()).expect("curve fit");
    println!("{curve:#?}");
    let base = RectifierParams { turn_ratio: 29.3, x_c: 8.5e-3, ..Default::default() };
    let rect = fit_rectifier_for_cancellation(&curve, &base, 23, (3000.0, 4900.0)).expect("rectifier fit");
    println!("{rect:#?}");
}
