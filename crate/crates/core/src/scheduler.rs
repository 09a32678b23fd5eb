//! Day-ahead scheduling of an electrolyzer plant.
//!
//! Three strategies are available. [`Strategy::Cm1`] maximizes revenue with
//! no harmonic constraints. [`Strategy::Pm`] adds the pairwise rules from
//! [`crate::feasible_region`]. [`Strategy::Cm2`] keeps the on/standby/idle
//! pattern of CM1 and gives every running electrolyzer the same current,
//! moved to the nearest level that is compliant at the PCC.
//!
//! Inside the MILP currents are in kA, powers in MW and the objective in
//! currency units. Stack power is the convex piecewise-linear interpolant
//! returned by [`piecewise_linearize`]; schedules report that same value so
//! the revenue recomputed from a schedule matches the solver objective.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use p2h_milp::{
    backend_by_name, default_backend, Direction, LinExpr, MilpBackend, MilpModel, Solution, SolveError, SolveOptions,
    VarId,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasible_region::{
    allowed_current_intervals, emit_milp_rules, fit_region, ElzVars, RegionError, RegionThresholds,
};
use crate::grid_codes::{aggregate_phasors, check_compliance, ComplianceReport, GridCodeError, LIMIT_TOLERANCE};
use crate::rectifier::{ElectrolyzerModel, HarmonicPhasor, PolarizationCurve, RectifierError, REPORTED_ORDERS};
use crate::scenario::{ElzState, Scenario};

const KA: f64 = 1e3;
const MW: f64 = 1e6;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown solver backend `{0}`")]
    UnknownBackend(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Rectifier(#[from] RectifierError),
    #[error(transparent)]
    GridCode(#[from] GridCodeError),
    #[error("step {step}: no common current keeps {active} running electrolyzers within the harmonic limits")]
    Cm2NoCompliantLoad { step: usize, active: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Cm1,
    Cm2,
    Pm,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Cm1, Strategy::Cm2, Strategy::Pm];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Cm1 => "cm1",
            Strategy::Cm2 => "cm2",
            Strategy::Pm => "pm",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cm1" => Ok(Strategy::Cm1),
            "cm2" => Ok(Strategy::Cm2),
            "pm" => Ok(Strategy::Pm),
            other => Err(format!("unknown strategy `{other}` (expected cm1, cm2 or pm)")),
        }
    }
}

/// Piecewise-linear interpolant of stack power on equally spaced breakpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Pwl {
    /// Breakpoint currents, A.
    pub currents: Vec<f64>,
    /// Exact stack power at the breakpoints, W.
    pub powers: Vec<f64>,
}

impl Pwl {
    pub fn segments(&self) -> usize {
        self.currents.len() - 1
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.currents.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// W per A on each segment.
    pub fn slopes(&self) -> Vec<f64> {
        self.currents
            .windows(2)
            .zip(self.powers.windows(2))
            .map(|(i, p)| (p[1] - p[0]) / (i[1] - i[0]))
            .collect()
    }

    /// Interpolated power, W; the current is clamped to the breakpoint range.
    pub fn eval(&self, current: f64) -> f64 {
        let n = self.currents.len();
        let i = current.clamp(self.currents[0], self.currents[n - 1]);
        let k = self.currents.partition_point(|&b| b <= i).clamp(1, n - 1);
        let (i0, i1) = (self.currents[k - 1], self.currents[k]);
        let (p0, p1) = (self.powers[k - 1], self.powers[k]);
        p0 + (p1 - p0) * (i - i0) / (i1 - i0)
    }

    /// Largest `|pwl − exact|` over `samples` evenly spaced currents, W.
    pub fn max_error(&self, curve: &PolarizationCurve, samples: usize) -> f64 {
        let (lo, hi) = (self.currents[0], self.currents[self.currents.len() - 1]);
        (0..samples.max(2))
            .map(|k| lo + (hi - lo) * k as f64 / (samples.max(2) - 1) as f64)
            .map(|i| (self.eval(i) - curve.stack_power(i)).abs())
            .fold(0.0, f64::max)
    }
}

/// Breakpoints of the stack power `U(I)·I` over `[i_min, i_max]`. The
/// interpolant lies above the convex curve.
pub fn piecewise_linearize(
    curve: &PolarizationCurve,
    i_min: f64,
    i_max: f64,
    n_segments: usize,
) -> Result<Pwl, ScheduleError> {
    if n_segments == 0 || !(i_max > i_min && i_min >= 0.0) {
        return Err(ScheduleError::InvalidInput(format!(
            "piecewise linearization needs at least one segment on a non-empty range, got {n_segments} on [{i_min}, {i_max}]"
        )));
    }
    let currents: Vec<f64> =
        (0..=n_segments).map(|k| i_min + (i_max - i_min) * k as f64 / n_segments as f64).collect();
    let powers = currents.iter().map(|&i| curve.stack_power(i)).collect();
    Ok(Pwl { currents, powers })
}

/// Options that change the MILP formulation.
#[derive(Clone, Debug, Default)]
pub struct ModelOptions {
    /// Restricts currents to `current_min + k·step`, A.
    pub current_step: Option<f64>,
    /// Forces the piecewise segments to fill in order with extra binaries.
    pub ordering_binaries: bool,
}

/// Variables of one electrolyzer at one step.
#[derive(Clone, Debug)]
pub struct ElzHandles {
    pub on: VarId,
    pub standby: VarId,
    pub startup: VarId,
    /// kA.
    pub current: VarId,
    /// kA filled on each piecewise segment.
    pub fill: Vec<VarId>,
}

/// A built MILP with handles for extraction.
#[derive(Clone, Debug)]
pub struct ScheduleModel {
    pub milp: MilpModel,
    pub strategy: Strategy,
    /// `[step][electrolyzer]`.
    pub elz: Vec<Vec<ElzHandles>>,
    /// Grid purchase per step, MW.
    pub grid: Vec<VarId>,
    pub pwl: Pwl,
    pub options: ModelOptions,
}

/// Builds the scheduling MILP. `rules` must be given for PM and only for PM.
pub fn build_model(
    scenario: &Scenario,
    strategy: Strategy,
    rules: Option<&RegionThresholds>,
    options: &ModelOptions,
) -> Result<ScheduleModel, ScheduleError> {
    match (strategy, rules) {
        (Strategy::Pm, None) => return Err(ScheduleError::InvalidInput("PM needs harmonic rules".into())),
        (Strategy::Cm1, Some(_)) => return Err(ScheduleError::InvalidInput("CM1 takes no harmonic rules".into())),
        (Strategy::Cm2, _) => {
            return Err(ScheduleError::InvalidInput("CM2 is derived from CM1 and has no model of its own".into()))
        }
        _ => {}
    }
    if let Some(r) = rules {
        if r.n_elz != scenario.n_elz {
            return Err(ScheduleError::InvalidInput(format!(
                "rules were fitted for {} electrolyzers, scenario has {}",
                r.n_elz, scenario.n_elz
            )));
        }
        if (r.current_min - scenario.electrolyzer.current_min).abs() > 1e-9
            || (r.current_max - scenario.electrolyzer.current_max).abs() > 1e-9
        {
            return Err(ScheduleError::InvalidInput("rules were fitted for another current range".into()));
        }
    }
    let m = &scenario.electrolyzer;
    let (n, horizon, dt) = (scenario.n_elz, scenario.horizon(), scenario.step_hours);
    let pwl = piecewise_linearize(&m.curve, m.current_min, m.current_max, scenario.pwl_segments)?;
    let lengths: Vec<f64> = pwl.lengths().iter().map(|l| l / KA).collect();
    let slopes: Vec<f64> = pwl.slopes().iter().map(|s| s * KA / MW).collect();
    let p_min = pwl.powers[0] / MW;
    let p_aux = m.aux_power / MW;
    let (i_min, i_max) = (m.current_min / KA, m.current_max / KA);
    let kg_per_ka_hour = m.hydrogen_kg_per_hour(KA);
    let step_units = match options.current_step {
        Some(s) if !(s > 0.0) => {
            return Err(ScheduleError::InvalidInput(format!("current step must be positive, got {s}")))
        }
        Some(s) => Some(((m.current_max - m.current_min) / s + 1e-9).floor()),
        None => None,
    };
    let exclusions = match strategy {
        Strategy::Pm => scenario
            .exclusions
            .iter()
            .map(|e| {
                let iv = allowed_current_intervals(m, e.order, e.cap, 1.0)?;
                if iv.is_empty() {
                    return Err(ScheduleError::InvalidInput(format!(
                        "exclusion on order {} leaves no admissible current",
                        e.order
                    )));
                }
                Ok((e.order, iv))
            })
            .collect::<Result<Vec<_>, ScheduleError>>()?,
        _ => Vec::new(),
    };

    let mut milp = MilpModel::new();
    let mut objective = LinExpr::new();
    let mut elz: Vec<Vec<ElzHandles>> = Vec::with_capacity(horizon);
    let mut grid = Vec::with_capacity(horizon);
    let history = if scenario.initial_state.is_powered() { 1.0 } else { 0.0 };
    let powered = |h: &ElzHandles| LinExpr::from(h.on) + h.standby;

    for t in 0..horizon {
        let mut row = Vec::with_capacity(n);
        let mut balance = LinExpr::new();
        for k in 0..n {
            let tag = format!("t{t}_e{k}");
            let on = milp.add_binary(format!("{tag}_on"));
            let standby = milp.add_binary(format!("{tag}_standby"));
            milp.set_priority(on, 2);
            milp.set_priority(standby, 1);
            let startup = milp.add_continuous(format!("{tag}_startup"), 0.0, 1.0);
            let current = milp.add_continuous(format!("{tag}_current"), 0.0, i_max);
            milp.add_le(format!("{tag}_state"), LinExpr::from(on) + standby, 1.0);

            let fill: Vec<VarId> = lengths
                .iter()
                .enumerate()
                .map(|(s, &len)| {
                    let d = milp.add_continuous(format!("{tag}_seg{s}"), 0.0, len);
                    milp.add_le(format!("{tag}_seg{s}_on"), d, LinExpr::term(on, len));
                    d
                })
                .collect();
            milp.add_eq(
                format!("{tag}_current_def"),
                current,
                LinExpr::term(on, i_min) + LinExpr::sum(fill.iter().copied()),
            );
            if options.ordering_binaries {
                for s in 0..fill.len().saturating_sub(1) {
                    let y = milp.add_binary(format!("{tag}_seg{s}_full"));
                    milp.add_ge(format!("{tag}_seg{s}_full_lb"), fill[s], LinExpr::term(y, lengths[s]));
                    milp.add_le(format!("{tag}_seg{s}_next"), fill[s + 1], LinExpr::term(y, lengths[s + 1]));
                }
            }
            if let (Some(units), Some(step)) = (step_units, options.current_step) {
                let level = milp.add_integer(format!("{tag}_level"), 0.0, units);
                milp.add_eq(
                    format!("{tag}_level_def"),
                    LinExpr::sum(fill.iter().copied()),
                    LinExpr::term(level, step / KA),
                );
            }
            for (order, intervals) in &exclusions {
                add_interval_choice(&mut milp, &format!("{tag}_h{order}_cap"), on, current, intervals);
            }

            let h = ElzHandles { on, standby, startup, current, fill };
            // startup when leaving idle
            let prev = if t == 0 { LinExpr::constant(history) } else { powered(&elz[t - 1][k]) };
            milp.add_ge(format!("{tag}_startup_def"), startup, powered(&h) - prev);
            // a(t−2) + a(t) − a(t−1) ≤ 1 with a = 1 − idle
            if t >= 1 {
                let a2 = if t >= 2 { powered(&elz[t - 2][k]) } else { LinExpr::constant(history) };
                let a1 = powered(&elz[t - 1][k]);
                milp.add_le(format!("{tag}_idle_dip"), a2 + powered(&h) - a1, 1.0);
            }

            balance += LinExpr::term(on, p_min + p_aux) + LinExpr::term(standby, p_aux);
            for (&d, &s) in h.fill.iter().zip(&slopes) {
                balance.add_term(d, s);
            }
            objective.add_term(current, scenario.prices.hydrogen_per_kg * kg_per_ka_hour * dt);
            objective.add_term(startup, -scenario.prices.startup * dt);
            row.push(h);
        }
        let g = milp.add_continuous(format!("t{t}_grid"), 0.0, f64::INFINITY);
        milp.add_le(format!("t{t}_balance"), balance - g, scenario.renewable[t] / MW);
        objective.add_term(g, -scenario.prices.grid_per_kwh * 1e3 * dt);
        grid.push(g);
        if let Some(r) = rules {
            let vars: Vec<ElzVars> = row.iter().map(|h| ElzVars { on: h.on, current: h.current }).collect();
            emit_milp_rules(&mut milp, r, &vars, KA, &format!("t{t}"));
        }
        elz.push(row);
    }
    milp.set_objective(Direction::Maximize, objective);
    Ok(ScheduleModel { milp, strategy, elz, grid, pwl, options: options.clone() })
}

/// Restricts a running electrolyzer's current to a union of intervals, A.
fn add_interval_choice(milp: &mut MilpModel, tag: &str, on: VarId, current: VarId, intervals: &[[f64; 2]]) {
    if let [[lo, hi]] = intervals {
        milp.add_ge(format!("{tag}_lo"), current, LinExpr::term(on, lo / KA));
        milp.add_le(format!("{tag}_hi"), current, LinExpr::term(on, hi / KA));
        return;
    }
    let mut pick = LinExpr::new();
    let mut floor = LinExpr::new();
    let mut ceil = LinExpr::new();
    for (j, [lo, hi]) in intervals.iter().enumerate() {
        let b = milp.add_binary(format!("{tag}{j}"));
        pick.add_term(b, 1.0);
        floor.add_term(b, lo / KA);
        ceil.add_term(b, hi / KA);
    }
    milp.add_eq(format!("{tag}_pick"), pick, on);
    milp.add_ge(format!("{tag}_lo"), current, floor);
    milp.add_le(format!("{tag}_hi"), current, ceil);
}

/// Solver statistics attached to a schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub backend: String,
    /// Objective after re-solving with the integer decisions fixed.
    pub objective: f64,
    pub best_bound: f64,
    pub relative_gap: f64,
    pub nodes: usize,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElzStep {
    pub state: ElzState,
    pub startup: bool,
    /// A; zero unless running.
    pub current: f64,
    /// Piecewise-linear stack power, W.
    pub stack_power: f64,
    /// Stack plus auxiliary power, W.
    pub total_power: f64,
    pub h2_kg: f64,
}

impl ElzStep {
    pub fn idle() -> Self {
        Self { state: ElzState::Idle, startup: false, current: 0.0, stack_power: 0.0, total_power: 0.0, h2_kg: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub strategy: Strategy,
    pub step_hours: f64,
    /// `[step][electrolyzer]`.
    pub steps: Vec<Vec<ElzStep>>,
    /// Renewable power available per step, W.
    pub renewable: Vec<f64>,
    /// Grid purchase per step, W.
    pub grid_purchase: Vec<f64>,
    /// Absent for CM2, which is not solved as a MILP.
    pub solve: Option<SolveSummary>,
}

impl Schedule {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn n_elz(&self) -> usize {
        self.steps.first().map_or(0, Vec::len)
    }

    /// Plant consumption per step, W.
    pub fn consumption(&self, t: usize) -> f64 {
        self.steps[t].iter().map(|e| e.total_power).sum()
    }

    /// Currents of step `t`, A, zero for electrolyzers not running.
    pub fn currents(&self, t: usize) -> Vec<f64> {
        self.steps[t].iter().map(|e| e.current).collect()
    }

    /// Writes one row per electrolyzer and step.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "step",
            "elz_id",
            "state",
            "startup",
            "current_A",
            "stack_power_W",
            "total_power_W",
            "h2_kg",
            "renewable_W",
            "grid_purchase_W",
        ])?;
        for (t, row) in self.steps.iter().enumerate() {
            for (k, e) in row.iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    k.to_string(),
                    e.state.as_str().to_string(),
                    u8::from(e.startup).to_string(),
                    format!("{:.3}", e.current),
                    format!("{:.3}", e.stack_power),
                    format!("{:.3}", e.total_power),
                    format!("{:.6}", e.h2_kg),
                    format!("{:.3}", self.renewable[t]),
                    format!("{:.3}", self.grid_purchase[t]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Assembles a schedule from per-step states and currents, deriving
/// startups, powers, hydrogen and grid purchase.
pub fn assemble_schedule(
    scenario: &Scenario,
    pwl: &Pwl,
    strategy: Strategy,
    states: &[Vec<(ElzState, f64)>],
    solve: Option<SolveSummary>,
) -> Schedule {
    let m = &scenario.electrolyzer;
    let dt = scenario.step_hours;
    let mut prev = vec![scenario.initial_state.is_powered(); scenario.n_elz];
    let mut steps = Vec::with_capacity(states.len());
    let mut grid_purchase = Vec::with_capacity(states.len());
    for (t, row) in states.iter().enumerate() {
        let out: Vec<ElzStep> = row
            .iter()
            .enumerate()
            .map(|(k, &(state, current))| {
                let startup = state.is_powered() && !prev[k];
                prev[k] = state.is_powered();
                match state {
                    ElzState::On => {
                        let stack = pwl.eval(current);
                        ElzStep {
                            state,
                            startup,
                            current,
                            stack_power: stack,
                            total_power: stack + m.aux_power,
                            h2_kg: m.hydrogen_kg_per_hour(current) * dt,
                        }
                    }
                    ElzState::Standby => ElzStep { state, startup, total_power: m.aux_power, ..ElzStep::idle() },
                    ElzState::Idle => ElzStep::idle(),
                }
            })
            .collect();
        let load: f64 = out.iter().map(|e| e.total_power).sum();
        grid_purchase.push((load - scenario.renewable[t]).max(0.0));
        steps.push(out);
    }
    Schedule { strategy, step_hours: dt, steps, renewable: scenario.renewable.clone(), grid_purchase, solve }
}

/// Revenue of a schedule from first principles, currency units.
pub fn revenue(schedule: &Schedule, scenario: &Scenario) -> f64 {
    let p = &scenario.prices;
    let dt = schedule.step_hours;
    schedule
        .steps
        .iter()
        .zip(&schedule.grid_purchase)
        .map(|(row, &g)| {
            let elz: f64 = row
                .iter()
                .map(|e| p.hydrogen_per_kg * e.h2_kg - p.startup * dt * f64::from(u8::from(e.startup)))
                .sum();
            elz - p.grid_per_kwh * g / 1e3 * dt
        })
        .sum()
}

/// Run-time choices that override the scenario's solver settings.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub backend: Option<String>,
    pub gap: Option<f64>,
    pub time_limit: Option<Duration>,
    pub model: Option<ModelOptions>,
    /// Reuses already fitted rules for PM.
    pub rules: Option<RegionThresholds>,
}

impl RunOptions {
    fn backend(&self, scenario: &Scenario) -> Result<Box<dyn MilpBackend + Send + Sync>, ScheduleError> {
        let name = self.backend.as_deref().unwrap_or(&scenario.solver.backend);
        if name == "auto" {
            return Ok(default_backend());
        }
        backend_by_name(name).ok_or_else(|| ScheduleError::UnknownBackend(name.into()))
    }

    fn solve_options(&self, scenario: &Scenario) -> SolveOptions {
        let mut o = SolveOptions::default().with_gap(self.gap.unwrap_or(scenario.solver.gap));
        o.time_limit = self.time_limit.or(scenario.solver.time_limit_s.map(Duration::from_secs_f64));
        o
    }

    fn model_options(&self, scenario: &Scenario) -> ModelOptions {
        self.model
            .clone()
            .unwrap_or(ModelOptions { current_step: None, ordering_binaries: scenario.solver.pwl_ordering_binaries })
    }
}

/// Harmonic rules for the scenario's limited orders.
pub fn plant_rules(scenario: &Scenario) -> Result<RegionThresholds, ScheduleError> {
    Ok(fit_region(&scenario.electrolyzer, &scenario.plant_limits(), scenario.n_elz, &scenario.region)?.0)
}

/// Solves a built model, fixes its integer decisions, re-solves the
/// remaining LP and extracts the schedule.
pub fn solve(
    model: &ScheduleModel,
    scenario: &Scenario,
    backend: &dyn MilpBackend,
    opts: &SolveOptions,
) -> Result<Schedule, ScheduleError> {
    let start = Instant::now();
    let sol = backend.solve(&model.milp, opts)?;
    let fixed = model.milp.with_integers_fixed(&sol.values);
    let polished = match backend.solve(&fixed, &SolveOptions { relative_gap: 0.0, ..opts.clone() }) {
        Ok(p) if p.objective >= sol.objective - 1e-9 * sol.objective.abs().max(1.0) => p,
        _ => sol.clone(),
    };
    let summary = SolveSummary {
        backend: backend.name().into(),
        objective: polished.objective,
        best_bound: sol.best_bound.max(polished.objective),
        relative_gap: (sol.best_bound.max(polished.objective) - polished.objective) / polished.objective.abs().max(1.0),
        nodes: sol.nodes,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(extract(model, scenario, &polished, summary))
}

fn extract(model: &ScheduleModel, scenario: &Scenario, sol: &Solution, summary: SolveSummary) -> Schedule {
    let m = &scenario.electrolyzer;
    let states: Vec<Vec<(ElzState, f64)>> = model
        .elz
        .iter()
        .map(|row| {
            row.iter()
                .map(|h| {
                    if sol.value(h.on) > 0.5 {
                        let mut i = (sol.value(h.current) * KA).clamp(m.current_min, m.current_max);
                        if let Some(step) = model.options.current_step {
                            i = m.current_min + ((i - m.current_min) / step).round() * step;
                        }
                        (ElzState::On, i)
                    } else if sol.value(h.standby) > 0.5 {
                        (ElzState::Standby, 0.0)
                    } else {
                        (ElzState::Idle, 0.0)
                    }
                })
                .collect()
        })
        .collect();
    assemble_schedule(scenario, &model.pwl, model.strategy, &states, Some(summary))
}

/// Runs one strategy end to end.
pub fn run_strategy(scenario: &Scenario, strategy: Strategy, opts: &RunOptions) -> Result<Schedule, ScheduleError> {
    match strategy {
        Strategy::Cm1 => solve_strategy(scenario, Strategy::Cm1, None, opts),
        Strategy::Pm => {
            let rules = match &opts.rules {
                Some(r) => r.clone(),
                None => plant_rules(scenario)?,
            };
            solve_strategy(scenario, Strategy::Pm, Some(&rules), opts)
        }
        Strategy::Cm2 => {
            let cm1 = solve_strategy(scenario, Strategy::Cm1, None, opts)?;
            equalize_currents(scenario, &cm1)
        }
    }
}

/// Runs CM1, CM2 and PM; CM2 reuses the CM1 schedule.
pub fn run_all(scenario: &Scenario, opts: &RunOptions) -> Result<[Schedule; 3], ScheduleError> {
    let (cm1, pm) = rayon::join(
        || run_strategy(scenario, Strategy::Cm1, opts),
        || run_strategy(scenario, Strategy::Pm, opts),
    );
    let cm1 = cm1?;
    let cm2 = equalize_currents(scenario, &cm1)?;
    Ok([cm1, cm2, pm?])
}

fn solve_strategy(
    scenario: &Scenario,
    strategy: Strategy,
    rules: Option<&RegionThresholds>,
    opts: &RunOptions,
) -> Result<Schedule, ScheduleError> {
    let model = build_model(scenario, strategy, rules, &opts.model_options(scenario))?;
    let backend = opts.backend(scenario)?;
    solve(&model, scenario, backend.as_ref(), &opts.solve_options(scenario))
}

/// Limited orders with their PCC limits and the single-electrolyzer
/// magnitudes on a 1 A grid over the operating range.
struct CommonCurrentTable {
    currents: Vec<f64>,
    magnitudes: Vec<(f64, Vec<f64>)>,
}

impl CommonCurrentTable {
    fn new(scenario: &Scenario) -> Result<Self, ScheduleError> {
        let m = &scenario.electrolyzer;
        let n = ((m.current_max - m.current_min).floor()) as usize;
        let mut currents: Vec<f64> = (0..=n).map(|k| m.current_min + k as f64).collect();
        if *currents.last().expect("non-empty") < m.current_max {
            currents.push(m.current_max);
        }
        let magnitudes = scenario
            .plant_limits()
            .into_iter()
            .map(|(order, limit)| {
                let mags = currents
                    .iter()
                    .map(|&i| m.pcc_phasor(i, order).map(|p| p.magnitude()))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((limit, mags))
            })
            .collect::<Result<Vec<_>, RectifierError>>()?;
        Ok(Self { currents, magnitudes })
    }

    /// Compliant common current closest to `target` for `active` running units.
    fn closest(&self, active: usize, target: f64) -> Option<f64> {
        let k = active as f64;
        self.currents
            .iter()
            .enumerate()
            .filter(|&(j, _)| self.magnitudes.iter().all(|(lim, mags)| k * mags[j] <= lim + LIMIT_TOLERANCE))
            .map(|(_, &i)| i)
            .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()).then(a.total_cmp(b)))
    }
}

/// CM2: keeps the states of `cm1` and runs every active electrolyzer at the
/// compliant common current closest to CM1's mean current of that step.
pub fn equalize_currents(scenario: &Scenario, cm1: &Schedule) -> Result<Schedule, ScheduleError> {
    let table = CommonCurrentTable::new(scenario)?;
    let mut states = Vec::with_capacity(cm1.horizon());
    for (t, row) in cm1.steps.iter().enumerate() {
        let running: Vec<f64> = row.iter().filter(|e| e.state == ElzState::On).map(|e| e.current).collect();
        let common = if running.is_empty() {
            0.0
        } else {
            let mean = running.iter().sum::<f64>() / running.len() as f64;
            table
                .closest(running.len(), mean)
                .ok_or(ScheduleError::Cm2NoCompliantLoad { step: t, active: running.len() })?
        };
        states.push(
            row.iter().map(|e| (e.state, if e.state == ElzState::On { common } else { 0.0 })).collect::<Vec<_>>(),
        );
    }
    let m = &scenario.electrolyzer;
    let pwl = piecewise_linearize(&m.curve, m.current_min, m.current_max, scenario.pwl_segments)?;
    Ok(assemble_schedule(scenario, &pwl, Strategy::Cm2, &states, None))
}

/// Orders checked by [`validate_schedule`]: the fundamental, the reported
/// orders and every limited order.
pub fn validation_orders(scenario: &Scenario) -> Vec<u32> {
    let mut orders = vec![1];
    orders.extend(REPORTED_ORDERS);
    orders.extend(scenario.limits.orders().into_iter().filter(|&h| crate::rectifier::is_characteristic(h)));
    orders.sort_unstable();
    orders.dedup();
    orders
}

/// Exact PCC compliance of every step.
pub fn validate_schedule(schedule: &Schedule, scenario: &Scenario) -> Result<Vec<ComplianceReport>, ScheduleError> {
    validate_currents(&scenario.electrolyzer, schedule, scenario)
}

fn validate_currents(
    model: &ElectrolyzerModel,
    schedule: &Schedule,
    scenario: &Scenario,
) -> Result<Vec<ComplianceReport>, ScheduleError> {
    let orders = validation_orders(scenario);
    (0..schedule.horizon())
        .map(|t| {
            let currents = schedule.currents(t);
            let aggregates = orders
                .iter()
                .map(|&h| {
                    let phasors = currents
                        .iter()
                        .map(|&i| model.pcc_phasor(i, h))
                        .collect::<Result<Vec<HarmonicPhasor>, _>>()?;
                    Ok(aggregate_phasors(&phasors)?)
                })
                .collect::<Result<Vec<_>, ScheduleError>>()?;
            Ok(check_compliance(&aggregates, &scenario.pcc, &scenario.limits)?)
        })
        .collect()
}

/// Constraint violations of a schedule against the plant logic, empty when
/// the schedule is consistent.
pub fn check_invariants(schedule: &Schedule, scenario: &Scenario) -> Vec<String> {
    let m = &scenario.electrolyzer;
    let mut issues = Vec::new();
    let tol = 1e-6;
    let mut prev2 = vec![scenario.initial_state.is_powered(); scenario.n_elz];
    let mut prev1 = prev2.clone();
    for (t, row) in schedule.steps.iter().enumerate() {
        if row.len() != scenario.n_elz {
            issues.push(format!("step {t}: {} electrolyzers, expected {}", row.len(), scenario.n_elz));
            continue;
        }
        for (k, e) in row.iter().enumerate() {
            let a = e.state.is_powered();
            match e.state {
                ElzState::On if e.current < m.current_min - tol || e.current > m.current_max + tol => {
                    issues.push(format!("step {t} elz {k}: current {} A outside the operating range", e.current))
                }
                ElzState::Standby | ElzState::Idle if e.current != 0.0 || e.h2_kg != 0.0 => {
                    issues.push(format!("step {t} elz {k}: current or hydrogen while not running"))
                }
                _ => {}
            }
            if e.startup != (a && !prev1[k]) {
                issues.push(format!("step {t} elz {k}: startup flag inconsistent with states"));
            }
            if t >= 1 && prev2[k] && !prev1[k] && a {
                issues.push(format!("step {t} elz {k}: restarted one step after going idle"));
            }
            let aux = if a { m.aux_power } else { 0.0 };
            if (e.total_power - e.stack_power - aux).abs() > tol * m.aux_power.max(1.0) {
                issues.push(format!("step {t} elz {k}: total power is not stack plus auxiliary"));
            }
            let h2 = m.hydrogen_kg_per_hour(e.current) * schedule.step_hours;
            if (e.h2_kg - h2).abs() > 1e-9 * h2.max(1.0) {
                issues.push(format!("step {t} elz {k}: hydrogen does not follow the current"));
            }
            prev2[k] = prev1[k];
            prev1[k] = a;
        }
        let load = schedule.consumption(t);
        let g = schedule.grid_purchase[t];
        if g < -tol || load > schedule.renewable[t] + g + 1e-6 * load.max(1.0) {
            issues.push(format!("step {t}: consumption {load} W exceeds renewable plus purchase"));
        }
    }
    issues
}
