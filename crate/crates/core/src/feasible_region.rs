//! Pairwise harmonic-feasible current regions and the linear rules derived from them.
//!
//! Electrolyzers are paired statically. For each limited order the plant
//! limit is split evenly, giving every pair a budget of `2·limit/N`. Sweeping
//! both currents of a pair over the operating range shows an infeasible band
//! around the diagonal in the medium-current range. It is covered by three
//! current intervals (low, medium, high) and a minimum separation: two
//! electrolyzers of a pair may both sit in the medium interval only if their
//! currents differ by at least `delta_i_m`. The rules only apply when more
//! electrolyzers run than `n_bar`, the count that is compliant whatever
//! their currents.

use std::io::Write;
use std::path::Path;

use p2h_milp::{LinExpr, MilpModel, VarId};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rectifier::{ElectrolyzerModel, HarmonicPhasor, RectifierError};

#[derive(Debug, Error)]
pub enum RegionError {
    #[error(transparent)]
    Rectifier(#[from] RectifierError),
    #[error("invalid region option: {0}")]
    InvalidOption(String),
    #[error(
        "a single electrolyzer reaches {magnitude:.3} A at order {order}, above the pair budget {pair_limit:.3} A; \
         pairwise rules cannot guarantee compliance"
    )]
    LoneExceeds { order: u32, magnitude: f64, pair_limit: f64 },
    #[error("order {order}: no sound thresholds after {attempts} margin enlargements ({false_feasible} false-feasible points)")]
    FitFailure { order: u32, attempts: usize, false_feasible: usize },
    #[error("reading thresholds {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing thresholds {path}: {source}")]
    Parse { path: String, source: toml::de::Error },
}

/// Pair-sum magnitudes over a square current grid.
#[derive(Clone, Debug)]
pub struct PairGrid {
    pub order: u32,
    pub pair_limit: f64,
    pub axis: Vec<f64>,
    magnitude: Vec<f64>,
}

impl PairGrid {
    pub fn size(&self) -> usize {
        self.axis.len()
    }

    pub fn magnitude(&self, i: usize, j: usize) -> f64 {
        self.magnitude[i * self.axis.len() + j]
    }

    pub fn feasible(&self, i: usize, j: usize) -> bool {
        self.magnitude(i, j) <= self.pair_limit
    }

    pub fn resolution(&self) -> f64 {
        if self.axis.len() < 2 {
            0.0
        } else {
            self.axis[1] - self.axis[0]
        }
    }

    pub fn infeasible_fraction(&self) -> f64 {
        let n = self.size();
        let bad = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| !self.feasible(i, j)).count();
        bad as f64 / (n * n) as f64
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.size();
        (0..n).all(|i| (0..i).all(|j| self.feasible(i, j) == self.feasible(j, i)))
    }

    /// Whether the infeasible points form one 4-connected component.
    pub fn infeasible_connected(&self) -> bool {
        let n = self.size();
        let bad: Vec<bool> = (0..n * n).map(|k| !self.feasible(k / n, k % n)).collect();
        let Some(start) = bad.iter().position(|&b| b) else {
            return true;
        };
        let mut seen = vec![false; n * n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(k) = stack.pop() {
            let (i, j) = (k / n, k % n);
            let mut push = |ii: usize, jj: usize| {
                let kk = ii * n + jj;
                if bad[kk] && !seen[kk] {
                    seen[kk] = true;
                    stack.push(kk);
                }
            };
            if i > 0 {
                push(i - 1, j);
            }
            if i + 1 < n {
                push(i + 1, j);
            }
            if j > 0 {
                push(i, j - 1);
            }
            if j + 1 < n {
                push(i, j + 1);
            }
        }
        bad.iter().zip(&seen).all(|(&b, &s)| !b || s)
    }

    /// Writes `i1_A,i2_A,magnitude_A,feasible` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i1_A", "i2_A", "magnitude_A", "feasible"])?;
        let n = self.size();
        for i in 0..n {
            for j in 0..n {
                w.write_record([
                    self.axis[i].to_string(),
                    self.axis[j].to_string(),
                    format!("{:.6}", self.magnitude(i, j)),
                    u8::from(self.feasible(i, j)).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Current axis from `lo` to `hi` inclusive with spacing at most `step`.
pub fn current_axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step - 1e-9).ceil().max(1.0) as usize;
    (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect()
}

fn pcc_phasors(model: &ElectrolyzerModel, order: u32, axis: &[f64]) -> Result<Vec<HarmonicPhasor>, RectifierError> {
    axis.iter().map(|&i| model.pcc_phasor(i, order)).collect()
}

/// Sweeps both currents of a pair over the operating range.
pub fn sweep_pair(model: &ElectrolyzerModel, order: u32, pair_limit: f64, resolution: f64) -> Result<PairGrid, RegionError> {
    if !(resolution > 0.0 && resolution <= 100.0) {
        return Err(RegionError::InvalidOption(format!("resolution must be in (0, 100] A, got {resolution}")));
    }
    if !(pair_limit > 0.0) {
        return Err(RegionError::InvalidOption(format!("pair limit must be positive, got {pair_limit}")));
    }
    let axis = current_axis(model.current_min, model.current_max, resolution);
    let ph = pcc_phasors(model, order, &axis)?;
    let magnitude: Vec<f64> = ph
        .par_iter()
        .flat_map_iter(|a| ph.iter().map(move |b| (a.value + b.value).norm()))
        .collect();
    Ok(PairGrid { order, pair_limit, axis, magnitude })
}

/// Linear rule set for one harmonic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderThresholds {
    pub order: u32,
    /// Plant limit at the PCC, A.
    pub plant_limit: f64,
    /// Budget of one pair, A.
    pub pair_limit: f64,
    pub low: [f64; 2],
    pub medium: [f64; 2],
    pub high: [f64; 2],
    /// Minimum current separation when both electrolyzers are in the medium interval, A.
    pub delta_i_m: f64,
    /// Active electrolyzers that are compliant at any currents.
    pub n_bar: u32,
    /// Margin added around the sampled infeasible set, A.
    pub margin: f64,
    /// Set when the fit had to exclude every medium-medium combination.
    #[serde(default)]
    pub conservative: bool,
}

impl OrderThresholds {
    /// True when no pair constraint is needed.
    pub fn is_vacuous(&self) -> bool {
        self.delta_i_m <= 0.0
    }

    pub fn has_low(&self) -> bool {
        self.low[1] > self.low[0]
    }

    pub fn has_high(&self) -> bool {
        self.high[1] > self.high[0]
    }

    /// Whether a pair running at `(i1, i2)` satisfies the rules when they bind.
    pub fn admits(&self, i1: f64, i2: f64) -> bool {
        if self.is_vacuous() {
            return true;
        }
        let outside = |i: f64| {
            (self.has_low() && i <= self.low[1] && i >= self.low[0])
                || (self.has_high() && i >= self.high[0] && i <= self.high[1])
        };
        outside(i1) || outside(i2) || (i1 - i2).abs() >= self.delta_i_m
    }

    fn vacuous(order: u32, plant_limit: f64, pair_limit: f64, lo: f64, hi: f64) -> Self {
        Self {
            order,
            plant_limit,
            pair_limit,
            low: [lo, hi],
            medium: [lo, lo],
            high: [hi, hi],
            delta_i_m: 0.0,
            n_bar: 0,
            margin: 0.0,
            conservative: false,
        }
    }
}

/// Fits the interval structure to a sweep.
///
/// The medium interval is the hull of the infeasible currents widened by
/// `margin` on both sides, and `delta_i_m` the largest current difference
/// among infeasible points plus `margin`.
pub fn fit_hexagon_thresholds(grid: &PairGrid, lo: f64, hi: f64, margin: f64) -> OrderThresholds {
    let n = grid.size();
    let mut m_lo = f64::INFINITY;
    let mut m_hi = f64::NEG_INFINITY;
    let mut diff: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if !grid.feasible(i, j) {
                let (a, b) = (grid.axis[i], grid.axis[j]);
                m_lo = m_lo.min(a.min(b));
                m_hi = m_hi.max(a.max(b));
                diff = diff.max((a - b).abs());
            }
        }
    }
    if !m_lo.is_finite() {
        return OrderThresholds::vacuous(grid.order, f64::NAN, grid.pair_limit, lo, hi);
    }
    let m_lo = (m_lo - margin).max(lo);
    let m_hi = (m_hi + margin).min(hi);
    let delta = diff + margin;
    let conservative = m_lo <= lo && m_hi >= hi && delta > hi - lo;
    OrderThresholds {
        order: grid.order,
        plant_limit: f64::NAN,
        pair_limit: grid.pair_limit,
        low: [lo, m_lo],
        medium: [m_lo, m_hi],
        high: [m_hi, hi],
        delta_i_m: delta,
        n_bar: 0,
        margin,
        conservative,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub order: u32,
    pub points: usize,
    pub false_feasible: usize,
    /// Largest pair magnitude among admitted points, A.
    pub worst_admitted: f64,
}

/// Counts rule-admitted pairs that violate the pair budget on an
/// `points × points` grid.
pub fn verify_thresholds(
    th: &OrderThresholds,
    model: &ElectrolyzerModel,
    points: usize,
) -> Result<VerificationReport, RegionError> {
    let points = points.max(2);
    let axis: Vec<f64> = (0..points)
        .map(|k| model.current_min + (model.current_max - model.current_min) * k as f64 / (points - 1) as f64)
        .collect();
    let ph = pcc_phasors(model, th.order, &axis)?;
    let (false_feasible, worst_admitted) = (0..points)
        .into_par_iter()
        .map(|i| {
            let mut bad = 0usize;
            let mut worst: f64 = 0.0;
            for j in 0..points {
                if th.admits(axis[i], axis[j]) {
                    let m = (ph[i].value + ph[j].value).norm();
                    worst = worst.max(m);
                    if m > th.pair_limit {
                        bad += 1;
                    }
                }
            }
            (bad, worst)
        })
        .reduce(|| (0, 0.0), |a, b| (a.0 + b.0, a.1.max(b.1)));
    Ok(VerificationReport { order: th.order, points: points * points, false_feasible, worst_admitted })
}

/// Largest single-electrolyzer magnitude at the PCC over the operating range.
pub fn max_single_magnitude(model: &ElectrolyzerModel, order: u32) -> Result<f64, RegionError> {
    let axis = current_axis(model.current_min, model.current_max, 1.0);
    let mags: Vec<f64> = pcc_phasors(model, order, &axis)?.iter().map(|p| p.magnitude()).collect();
    let (k, mut best) = mags.iter().enumerate().fold((0, 0.0), |acc, (k, &m)| if m > acc.1 { (k, m) } else { acc });
    // golden-section refinement around the best sample
    let (mut a, mut b) = (axis[k.saturating_sub(1)], axis[(k + 1).min(axis.len() - 1)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let f = |i: f64| model.pcc_phasor(i, order).map(|p| p.magnitude());
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c)? > f(d)? {
            b = d;
        } else {
            a = c;
        }
    }
    best = best.max(f(0.5 * (a + b))?);
    Ok(best)
}

/// Largest count of simultaneously active electrolyzers that stays within
/// `limit` even when all are co-phased at their worst current.
pub fn compute_auto_comply_count(model: &ElectrolyzerModel, order: u32, limit: f64) -> Result<u32, RegionError> {
    if limit <= 0.0 {
        return Ok(0);
    }
    let worst = max_single_magnitude(model, order)?;
    if worst <= 0.0 {
        return Ok(u32::MAX);
    }
    Ok(auto_comply_count_for(worst, limit))
}

/// `floor(limit / worst)` with a relative tolerance for exact multiples.
pub fn auto_comply_count_for(worst: f64, limit: f64) -> u32 {
    ((limit / worst) * (1.0 + 1e-12)).floor().min(u32::MAX as f64) as u32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionOptions {
    /// Sweep resolution, A.
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    /// Points per axis of the verification grid.
    #[serde(default = "default_verification")]
    pub verification_points: usize,
    /// Spacing of the additional fine verification grid, A.
    #[serde(default = "default_fine")]
    pub fine_resolution: f64,
}

fn default_resolution() -> f64 {
    50.0
}
fn default_verification() -> usize {
    100
}
fn default_fine() -> f64 {
    5.0
}

impl Default for RegionOptions {
    fn default() -> Self {
        Self { resolution: 50.0, verification_points: 100, fine_resolution: 5.0 }
    }
}

/// Fits sound thresholds for one order: sweep, fit, verify, widen the margin
/// until no admitted point on the verification grids violates the budget.
pub fn fit_order(
    model: &ElectrolyzerModel,
    order: u32,
    plant_limit: f64,
    n_elz: usize,
    opts: &RegionOptions,
) -> Result<(OrderThresholds, PairGrid, VerificationReport), RegionError> {
    if n_elz == 0 || n_elz % 2 != 0 {
        return Err(RegionError::InvalidOption(format!("electrolyzer count must be even, got {n_elz}")));
    }
    let pair_limit = 2.0 * plant_limit / n_elz as f64;
    let worst = max_single_magnitude(model, order)?;
    if worst > pair_limit {
        return Err(RegionError::LoneExceeds { order, magnitude: worst, pair_limit });
    }
    let grid = sweep_pair(model, order, pair_limit, opts.resolution)?;
    let (lo, hi) = (model.current_min, model.current_max);
    let fine_points = ((hi - lo) / opts.fine_resolution).ceil() as usize + 1;
    let mut margin = grid.resolution();
    const ATTEMPTS: usize = 30;
    let mut last_bad = 0;
    for _ in 0..ATTEMPTS {
        let mut th = fit_hexagon_thresholds(&grid, lo, hi, margin);
        th.plant_limit = plant_limit;
        th.n_bar = auto_comply_count_for(worst, plant_limit);
        let report = verify_thresholds(&th, model, opts.verification_points)?;
        let fine = verify_thresholds(&th, model, fine_points)?;
        if report.false_feasible == 0 && fine.false_feasible == 0 {
            return Ok((th, grid, report));
        }
        last_bad = report.false_feasible + fine.false_feasible;
        margin += grid.resolution();
    }
    Err(RegionError::FitFailure { order, attempts: ATTEMPTS, false_feasible: last_bad })
}

/// Fits every `(order, plant limit)` of a plant of `n_elz` electrolyzers.
pub fn fit_region(
    model: &ElectrolyzerModel,
    limits: &[(u32, f64)],
    n_elz: usize,
    opts: &RegionOptions,
) -> Result<(RegionThresholds, Vec<VerificationReport>), RegionError> {
    let mut orders = Vec::with_capacity(limits.len());
    let mut reports = Vec::with_capacity(limits.len());
    for &(order, limit) in limits {
        let (th, _, report) = fit_order(model, order, limit, n_elz, opts)?;
        orders.push(th);
        reports.push(report);
    }
    let region = RegionThresholds { n_elz, current_min: model.current_min, current_max: model.current_max, orders };
    Ok((region, reports))
}

/// Fitted rules for every limited order of a plant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionThresholds {
    pub n_elz: usize,
    pub current_min: f64,
    pub current_max: f64,
    #[serde(rename = "order")]
    pub orders: Vec<OrderThresholds>,
}

impl RegionThresholds {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("thresholds serialize")
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, RegionError> {
        toml::from_str(text).map_err(|source| RegionError::Parse { path: origin.into(), source })
    }

    pub fn save(&self, path: &Path) -> Result<(), RegionError> {
        std::fs::write(path, self.to_toml()).map_err(|source| RegionError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, RegionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| RegionError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn get(&self, order: u32) -> Option<&OrderThresholds> {
        self.orders.iter().find(|o| o.order == order)
    }

    /// Whether per-electrolyzer currents (0 for inactive) satisfy every rule.
    pub fn admits(&self, currents: &[f64]) -> bool {
        let active = currents.iter().filter(|&&i| i > 0.0).count();
        self.orders.iter().all(|th| {
            active <= th.n_bar as usize
                || currents
                    .chunks(2)
                    .all(|p| p.len() < 2 || p[0] <= 0.0 || p[1] <= 0.0 || th.admits(p[0], p[1]))
        })
    }
}

/// Decision variables of one electrolyzer at one step.
#[derive(Clone, Copy, Debug)]
pub struct ElzVars {
    pub on: VarId,
    pub current: VarId,
}

/// Handles to the variables created by [`emit_milp_rules`].
#[derive(Clone, Debug, Default)]
pub struct EmittedRules {
    /// `(order, z)` where `z = 1` iff more than `n_bar` electrolyzers run.
    pub mitigation: Vec<(u32, VarId)>,
    /// `(order, pair index, ω)` where `ω = 1` iff both are in the medium interval.
    pub both_medium: Vec<(u32, usize, VarId)>,
    /// `(order, electrolyzer index, [low, medium, high])`; absent intervals are `None`.
    pub intervals: Vec<(u32, usize, [Option<VarId>; 3])>,
    pub constraints: usize,
}

/// Adds the harmonic rules for one time step.
///
/// `unit` is the number of amperes per unit of the current variables.
/// Electrolyzers `2k` and `2k+1` form pair `k`.
pub fn emit_milp_rules(
    milp: &mut MilpModel,
    thresholds: &RegionThresholds,
    elz: &[ElzVars],
    unit: f64,
    tag: &str,
) -> EmittedRules {
    let mut out = EmittedRules::default();
    let n = elz.len();
    let count_on = || LinExpr::sum(elz.iter().map(|e| e.on));
    let scale = |a: f64| a / unit;
    let i_min = scale(thresholds.current_min);
    let i_max = scale(thresholds.current_max);
    for th in &thresholds.orders {
        if th.is_vacuous() || th.n_bar as usize >= n {
            continue;
        }
        let h = th.order;
        let nb = th.n_bar as f64;
        let z = milp.add_binary(format!("{tag}_z{h}"));
        out.mitigation.push((h, z));
        milp.add_le(format!("{tag}_z{h}_up"), count_on(), LinExpr::constant(nb) + LinExpr::term(z, n as f64 - nb));
        milp.add_ge(format!("{tag}_z{h}_down"), count_on(), LinExpr::term(z, nb + 1.0));
        out.constraints += 2;

        let (m_lo, m_hi) = (scale(th.medium[0]), scale(th.medium[1]));
        let delta = scale(th.delta_i_m);
        let mut medium = Vec::with_capacity(n);
        for (k, e) in elz.iter().enumerate() {
            let low = th.has_low().then(|| milp.add_binary(format!("{tag}_e{k}_h{h}_low")));
            let mid = milp.add_binary(format!("{tag}_e{k}_h{h}_mid"));
            let high = th.has_high().then(|| milp.add_binary(format!("{tag}_e{k}_h{h}_high")));
            let mut pick = LinExpr::from(mid);
            let mut floor = LinExpr::term(mid, m_lo);
            let mut ceil = LinExpr::term(mid, m_hi);
            if let Some(l) = low {
                pick.add_term(l, 1.0);
                floor.add_term(l, i_min);
                ceil.add_term(l, m_lo);
            }
            if let Some(hv) = high {
                pick.add_term(hv, 1.0);
                floor.add_term(hv, m_hi);
                ceil.add_term(hv, i_max);
            }
            milp.add_eq(format!("{tag}_e{k}_h{h}_pick"), pick, LinExpr::from(e.on));
            milp.add_ge(format!("{tag}_e{k}_h{h}_floor"), LinExpr::from(e.current), floor);
            milp.add_le(format!("{tag}_e{k}_h{h}_ceil"), LinExpr::from(e.current), ceil);
            out.constraints += 3;
            out.intervals.push((h, k, [low, Some(mid), high]));
            medium.push(mid);
        }
        let big = delta + i_max;
        let big_order = delta + (m_hi - m_lo);
        for p in 0..n / 2 {
            let (a, b) = (2 * p, 2 * p + 1);
            let w = milp.add_continuous(format!("{tag}_p{p}_h{h}_both"), 0.0, 1.0);
            let s = milp.add_binary(format!("{tag}_p{p}_h{h}_order"));
            milp.add_ge(format!("{tag}_p{p}_h{h}_both_lb"), w, LinExpr::from(medium[a]) + medium[b] - 1.0);
            milp.add_le(format!("{tag}_p{p}_h{h}_both_ub1"), w, medium[a]);
            milp.add_le(format!("{tag}_p{p}_h{h}_both_ub2"), w, medium[b]);
            // I_a − I_b ≥ Δ − M(1−ω) − M(1−z) − M_s·s and the mirrored form with 1 − s
            let relax = LinExpr::constant(delta - 2.0 * big) + LinExpr::term(w, big) + LinExpr::term(z, big);
            milp.add_ge(
                format!("{tag}_p{p}_h{h}_sep_ab"),
                LinExpr::from(elz[a].current) - elz[b].current,
                relax.clone() - LinExpr::term(s, big_order),
            );
            milp.add_ge(
                format!("{tag}_p{p}_h{h}_sep_ba"),
                LinExpr::from(elz[b].current) - elz[a].current,
                relax - big_order + LinExpr::term(s, big_order),
            );
            out.constraints += 5;
            out.both_medium.push((h, p, w));
        }
    }
    out
}

/// Current intervals where a single electrolyzer stays at or below `cap` at
/// the PCC, shrunk inwards by one `step` for safety.
pub fn allowed_current_intervals(
    model: &ElectrolyzerModel,
    order: u32,
    cap: f64,
    step: f64,
) -> Result<Vec<[f64; 2]>, RegionError> {
    let axis = current_axis(model.current_min, model.current_max, step);
    let ok: Vec<bool> = pcc_phasors(model, order, &axis)?.iter().map(|p| p.magnitude() <= cap).collect();
    let mut out = Vec::new();
    let mut k = 0;
    while k < axis.len() {
        if !ok[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k + 1 < axis.len() && ok[k + 1] {
            k += 1;
        }
        let lo = if start == 0 { axis[0] } else { axis[start] + step };
        let hi = if k == axis.len() - 1 { axis[k] } else { axis[k] - step };
        if hi >= lo {
            out.push([lo, hi]);
        }
        k += 1;
    }
    Ok(out)
}
