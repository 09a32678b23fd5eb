//! Plant scenarios: electrolyzer fleet, prices, PCC, renewable profile.
//!
//! Scenarios are TOML files. Relative paths inside a scenario (limit tables,
//! profile files) resolve against the scenario's directory. Two scenarios
//! ship with the crate and can be loaded by name with [`Scenario::bundled`].

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasible_region::RegionOptions;
use crate::grid_codes::{GridCodeError, HarmonicLimitTable, LimitEntry, PccSpec};
use crate::rectifier::{ElectrolyzerModel, PolarizationCurve, RectifierError, RectifierParams};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("{origin}: field `{field}`: {message}")]
    Invalid { origin: String, field: String, message: String },
    #[error("{origin}: {source}")]
    Rectifier { origin: String, source: RectifierError },
    #[error("{origin}: {source}")]
    GridCode { origin: String, source: GridCodeError },
    #[error("unknown bundled scenario `{0}` (available: two-elz, twenty-elz)")]
    UnknownBundled(String),
}

const BUNDLED: [(&str, &str); 4] = [
    ("two_elz.toml", include_str!("../scenarios/two_elz.toml")),
    ("twenty_elz.toml", include_str!("../scenarios/twenty_elz.toml")),
    ("limits/gbt14549_10kv.toml", include_str!("../scenarios/limits/gbt14549_10kv.toml")),
    ("limits/gbt14549_220kv.toml", include_str!("../scenarios/limits/gbt14549_220kv.toml")),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ElzState {
    On,
    Standby,
    #[default]
    Idle,
}

impl ElzState {
    pub fn is_powered(self) -> bool {
        self != ElzState::Idle
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ElzState::On => "on",
            ElzState::Standby => "standby",
            ElzState::Idle => "idle",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prices {
    pub hydrogen_per_kg: f64,
    pub grid_per_kwh: f64,
    pub startup: f64,
    #[serde(default = "default_currency")]
    pub currency: String,
}

fn default_currency() -> String {
    "CNY".into()
}

impl Default for Prices {
    fn default() -> Self {
        Self { hydrogen_per_kg: 26.0, grid_per_kwh: 0.6, startup: 1000.0, currency: default_currency() }
    }
}

/// Optional cap on a single electrolyzer's harmonic at the PCC; currents
/// exceeding it are excluded from the schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicExclusion {
    pub order: u32,
    /// A at the PCC.
    pub cap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    /// Relative MILP gap.
    #[serde(default = "default_gap")]
    pub gap: f64,
    #[serde(default)]
    pub time_limit_s: Option<f64>,
    /// `auto`, `bnb` or `highs`.
    #[serde(default = "default_backend")]
    pub backend: String,
    /// Adds ordering binaries to the piecewise-linear stack power.
    #[serde(default)]
    pub pwl_ordering_binaries: bool,
}

fn default_gap() -> f64 {
    1e-3
}
fn default_backend() -> String {
    "auto".into()
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { gap: default_gap(), time_limit_s: None, backend: default_backend(), pwl_ordering_binaries: false }
    }
}

/// Seeded synthetic renewable profile: a mean day shape plus
/// autocorrelated noise, clipped at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticProfile {
    pub seed: u64,
    /// Mean renewable power per step, MW; repeated when `steps` is longer.
    pub shape_mw: Vec<f64>,
    /// Standard scale of the noise, MW.
    #[serde(default)]
    pub noise_mw: f64,
    /// Defaults to the shape length.
    #[serde(default)]
    pub steps: Option<usize>,
}

impl SyntheticProfile {
    /// Renewable power per step, MW.
    pub fn generate(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut wander: f64 = 0.0;
        let steps = self.steps.unwrap_or(self.shape_mw.len());
        (0..steps)
            .map(|t| {
                wander = 0.6 * wander + 0.8 * rng.gen_range(-1.0..1.0);
                (self.shape_mw[t % self.shape_mw.len()] + self.noise_mw * wander).max(0.0)
            })
            .collect()
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    #[serde(default)]
    renewable_mw: Option<Vec<f64>>,
    #[serde(default)]
    file: Option<String>,
    #[serde(default)]
    synthetic: Option<SyntheticProfile>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ElectrolyzerFile {
    current_min: f64,
    current_max: f64,
    aux_power: f64,
    #[serde(default = "one")]
    faraday_efficiency: f64,
    #[serde(default = "six")]
    pwl_segments: usize,
}

fn one() -> f64 {
    1.0
}
fn six() -> usize {
    6
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct PccFile {
    #[serde(flatten)]
    spec: PccSpec,
    #[serde(default)]
    limit_table: Option<String>,
    #[serde(default)]
    limit: Vec<LimitEntry>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default)]
    description: String,
    n_elz: usize,
    step_hours: f64,
    #[serde(default)]
    initial_state: ElzState,
    prices: Prices,
    electrolyzer: ElectrolyzerFile,
    #[serde(default)]
    rectifier: Option<RectifierParams>,
    #[serde(default)]
    curve: Option<PolarizationCurve>,
    pcc: PccFile,
    profile: ProfileFile,
    #[serde(default)]
    region: RegionOptions,
    #[serde(default)]
    exclusion: Vec<HarmonicExclusion>,
    #[serde(default)]
    solver: SolverSettings,
}

/// A validated scenario in SI units (A, W, h).
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub n_elz: usize,
    pub step_hours: f64,
    pub initial_state: ElzState,
    pub prices: Prices,
    pub electrolyzer: ElectrolyzerModel,
    pub pwl_segments: usize,
    pub pcc: PccSpec,
    pub limits: HarmonicLimitTable,
    /// Renewable power per step, W.
    pub renewable: Vec<f64>,
    /// Present when the profile was generated; lets callers regenerate with another seed.
    pub synthetic: Option<SyntheticProfile>,
    pub region: RegionOptions,
    pub exclusions: Vec<HarmonicExclusion>,
    pub solver: SolverSettings,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.renewable.len()
    }

    /// Loads a scenario file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| ScenarioError::Io { path: p.display().to_string(), source })
        };
        let text = read(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &path.display().to_string(), &|rel: &str| read(&dir.join(rel)))
    }

    /// Loads a scenario shipped with the crate: `two-elz` or `twenty-elz`.
    pub fn bundled(name: &str) -> Result<Self, ScenarioError> {
        let file = match name {
            "two-elz" => "two_elz.toml",
            "twenty-elz" => "twenty_elz.toml",
            other => return Err(ScenarioError::UnknownBundled(other.into())),
        };
        let lookup = |rel: &str| {
            let rel = rel.trim_start_matches("./");
            BUNDLED
                .iter()
                .find(|(p, _)| *p == rel)
                .map(|(_, t)| t.to_string())
                .ok_or_else(|| ScenarioError::Io {
                    path: rel.into(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "not bundled"),
                })
        };
        let text = lookup(file)?;
        Self::parse(&text, &format!("bundled:{name}"), &lookup)
    }

    /// Names of the bundled scenario files and their contents.
    pub fn bundled_files() -> &'static [(&'static str, &'static str)] {
        &BUNDLED
    }

    /// Parses scenario text; `include` resolves relative paths.
    pub fn parse(
        text: &str,
        origin: &str,
        include: &dyn Fn(&str) -> Result<String, ScenarioError>,
    ) -> Result<Self, ScenarioError> {
        let f: ScenarioFile =
            toml::from_str(text).map_err(|source| ScenarioError::Parse { path: origin.into(), source })?;
        let invalid = |field: &str, message: String| ScenarioError::Invalid {
            origin: origin.into(),
            field: field.into(),
            message,
        };

        if f.n_elz == 0 || f.n_elz % 2 != 0 {
            return Err(invalid("n_elz", format!("must be a positive even number, got {}", f.n_elz)));
        }
        if !(f.step_hours > 0.0 && f.step_hours.is_finite()) {
            return Err(invalid("step_hours", "must be positive".into()));
        }
        let p = &f.prices;
        for (name, v) in [
            ("prices.hydrogen_per_kg", p.hydrogen_per_kg),
            ("prices.grid_per_kwh", p.grid_per_kwh),
            ("prices.startup", p.startup),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        if f.electrolyzer.pwl_segments == 0 {
            return Err(invalid("electrolyzer.pwl_segments", "must be at least 1".into()));
        }

        f.pcc.spec.validate().map_err(|source| ScenarioError::GridCode { origin: origin.into(), source })?;
        let mut limits = match &f.pcc.limit_table {
            Some(rel) => HarmonicLimitTable::parse(&include(rel)?, rel)
                .map_err(|source| ScenarioError::GridCode { origin: origin.into(), source })?,
            None => HarmonicLimitTable::default(),
        };
        limits.entries.extend(f.pcc.limit.iter().copied());
        limits.validate().map_err(|source| ScenarioError::GridCode { origin: origin.into(), source })?;

        let electrolyzer = ElectrolyzerModel {
            rectifier: f.rectifier.unwrap_or_default(),
            curve: f.curve.unwrap_or_default(),
            current_min: f.electrolyzer.current_min,
            current_max: f.electrolyzer.current_max,
            aux_power: f.electrolyzer.aux_power,
            faraday_efficiency: f.electrolyzer.faraday_efficiency,
            pcc_voltage: f.pcc.spec.rated_voltage,
        };
        electrolyzer.validate().map_err(|source| ScenarioError::Rectifier { origin: origin.into(), source })?;

        let sources = [f.profile.renewable_mw.is_some(), f.profile.file.is_some(), f.profile.synthetic.is_some()];
        if sources.iter().filter(|&&b| b).count() != 1 {
            return Err(invalid("profile", "give exactly one of renewable_mw, file, synthetic".into()));
        }
        let mw = if let Some(v) = &f.profile.renewable_mw {
            v.clone()
        } else if let Some(rel) = &f.profile.file {
            parse_profile_csv(&include(rel)?).map_err(|m| invalid("profile.file", m))?
        } else {
            let s = f.profile.synthetic.as_ref().expect("checked above");
            if s.shape_mw.is_empty() || !(s.noise_mw >= 0.0) {
                return Err(invalid("profile.synthetic", "needs a non-empty shape and non-negative noise".into()));
            }
            s.generate()
        };
        if mw.is_empty() {
            return Err(invalid("profile", "horizon must be at least one step".into()));
        }
        if let Some((t, v)) = mw.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(invalid("profile", format!("step {t}: renewable power must be non-negative, got {v}")));
        }
        if !(f.solver.gap >= 0.0 && f.solver.gap < 1.0) {
            return Err(invalid("solver.gap", format!("must be in [0, 1), got {}", f.solver.gap)));
        }
        if !["auto", "bnb", "highs"].contains(&f.solver.backend.as_str()) {
            return Err(invalid("solver.backend", format!("unknown backend `{}`", f.solver.backend)));
        }
        if !(f.region.resolution > 0.0 && f.region.resolution <= 100.0) {
            return Err(invalid("region.resolution", "must be in (0, 100] A".into()));
        }

        Ok(Scenario {
            name: f.name,
            description: f.description,
            n_elz: f.n_elz,
            step_hours: f.step_hours,
            initial_state: f.initial_state,
            prices: f.prices,
            electrolyzer,
            pwl_segments: f.electrolyzer.pwl_segments,
            pcc: f.pcc.spec,
            limits,
            renewable: mw.iter().map(|v| v * 1e6).collect(),
            synthetic: f.profile.synthetic,
            region: f.region,
            exclusions: f.exclusion,
            solver: f.solver,
        })
    }

    /// Regenerates a synthetic profile with another seed; fixed profiles are left unchanged.
    pub fn reseed(&mut self, seed: u64) -> bool {
        let Some(s) = &mut self.synthetic else {
            return false;
        };
        s.seed = seed;
        self.renewable = s.generate().iter().map(|v| v * 1e6).collect();
        true
    }

    /// Limited harmonic orders and their plant limits at the PCC, A.
    pub fn plant_limits(&self) -> Vec<(u32, f64)> {
        self.limits
            .orders()
            .into_iter()
            .filter(|&h| h > 1 && crate::rectifier::is_characteristic(h))
            .map(|h| (h, crate::grid_codes::harmonic_limit(&self.pcc, &self.limits, h).expect("order from table")))
            .collect()
    }

    /// Directory-independent path helper for error messages.
    pub fn describe(&self) -> String {
        format!("{} ({} electrolyzers, {} steps)", self.name, self.n_elz, self.horizon())
    }
}

/// Reads a one-column CSV (`renewable_mw` header optional).
fn parse_profile_csv(text: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let field = rec.get(rec.len().saturating_sub(1)).unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if k == 0 => continue,
            Err(_) => return Err(format!("line {}: cannot parse `{field}`", k + 1)),
        }
    }
    Ok(out)
}

/// Path of a bundled file relative to the crate, for documentation and tests.
pub fn bundled_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}
