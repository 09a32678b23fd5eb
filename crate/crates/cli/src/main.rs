use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use p2h_core::feasible_region::{current_axis, fit_order, sweep_pair, RegionOptions, RegionThresholds};
use p2h_core::milp::SolveError;
use p2h_core::reporting::{
    compare_strategies, export_operating_points, export_phasor_sweep, kpi, write_compliance_csv,
};
use p2h_core::scenario::{Scenario, ScenarioError};
use p2h_core::scheduler::{run_strategy, RunOptions, ScheduleError, Strategy};

#[derive(Parser)]
#[command(name = "p2h", version, about = "Harmonic-aware scheduling of power-to-hydrogen plants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Operating-point and harmonic-phasor sweeps of one electrolyzer.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Current step of the sweep, A.
        #[arg(long, default_value_t = 100.0)]
        resolution: f64,
    },
    /// Pairwise feasible regions and the fitted threshold file.
    Region {
        #[command(flatten)]
        common: Common,
        /// Only this harmonic order (default: every limited order).
        #[arg(long)]
        order: Option<u32>,
        /// Sweep resolution, A (default: the scenario's).
        #[arg(long)]
        resolution: Option<f64>,
    },
    /// Solves one strategy and writes the schedule, compliance and KPIs.
    Schedule {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value = "pm")]
        strategy: Strategy,
    },
    /// Runs CM1, CM2 and PM and writes a comparison table.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file, or `bundled:two-elz` / `bundled:twenty-elz`.
    #[arg(long)]
    scenario: String,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Regenerates a synthetic renewable profile with this seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SolverArgs {
    /// Relative MILP gap (default: the scenario's).
    #[arg(long)]
    gap: Option<f64>,
    /// `auto`, `bnb` or `highs` (default: the scenario's).
    #[arg(long)]
    backend: Option<String>,
    /// Wall-clock limit per MILP solve, seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

impl SolverArgs {
    fn run_options(&self) -> Result<RunOptions> {
        if let Some(g) = self.gap {
            if !(0.0..1.0).contains(&g) {
                bail!(InputError(format!("--gap must be in [0, 1), got {g}")));
            }
        }
        let time_limit = match self.time_limit {
            Some(t) if !(t > 0.0) => bail!(InputError(format!("--time-limit must be positive, got {t}"))),
            t => t.map(Duration::from_secs_f64),
        };
        Ok(RunOptions { backend: self.backend.clone(), gap: self.gap, time_limit, ..Default::default() })
    }
}

/// Bad flags or files detected by the CLI itself.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

impl Common {
    fn load(&self) -> Result<Scenario> {
        let mut sc = match self.scenario.strip_prefix("bundled:") {
            Some(name) => Scenario::bundled(name)?,
            None => Scenario::load(Path::new(&self.scenario))?,
        };
        if let Some(seed) = self.seed {
            if !sc.reseed(seed) {
                bail!(InputError(format!("--seed needs a synthetic profile; {} has a fixed one", self.scenario)));
            }
        }
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(sc)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(f))
    }
}

fn analyze(common: &Common, resolution: f64) -> Result<()> {
    if !(resolution > 0.0) {
        bail!(InputError(format!("--resolution must be positive, got {resolution}")));
    }
    let sc = common.load()?;
    let m = &sc.electrolyzer;
    let grid = current_axis(m.current_min, m.current_max, resolution);
    export_operating_points(m, &grid, common.create("operating_points.csv")?)?;
    let orders = [1, 23, 25, 47, 49];
    let rows = export_phasor_sweep(m, &orders, &grid, common.create("phasor_sweep.csv")?)?;
    println!("{} currents, {rows} phasor rows written to {}", grid.len(), common.out.display());
    Ok(())
}

fn region(common: &Common, order: Option<u32>, resolution: Option<f64>) -> Result<()> {
    let sc = common.load()?;
    let opts = RegionOptions { resolution: resolution.unwrap_or(sc.region.resolution), ..sc.region.clone() };
    if !(opts.resolution > 0.0) {
        bail!(InputError(format!("--resolution must be positive, got {}", opts.resolution)));
    }
    let mut limits = sc.plant_limits();
    if let Some(h) = order {
        limits.retain(|&(o, _)| o == h);
        if limits.is_empty() {
            bail!(InputError(format!("order {h} has no limit in {}", sc.name)));
        }
    }
    let m = &sc.electrolyzer;
    let mut orders = Vec::new();
    for (h, limit) in limits {
        let (th, grid, report) = match fit_order(m, h, limit, sc.n_elz, &opts) {
            Ok(r) => r,
            Err(e) => {
                let grid = sweep_pair(m, h, 2.0 * limit / sc.n_elz as f64, opts.resolution)?;
                grid.write_csv(common.create(&format!("pair_grid_h{h}.csv"))?)?;
                return Err(e).context(format!("order {h}: no sound thresholds; the sweep was written for inspection"));
            }
        };
        grid.write_csv(common.create(&format!("pair_grid_h{h}.csv"))?)?;
        println!(
            "order {h}: medium [{:.0}, {:.0}] A, separation {:.0} A, auto-compliant count {}, {} of {} verification points false-feasible{}",
            th.medium[0],
            th.medium[1],
            th.delta_i_m,
            th.n_bar,
            report.false_feasible,
            report.points,
            if th.conservative { " (conservative fit)" } else { "" }
        );
        orders.push(th);
    }
    let region = RegionThresholds { n_elz: sc.n_elz, current_min: m.current_min, current_max: m.current_max, orders };
    let path = common.out.join("region_thresholds.toml");
    region.save(&path)?;
    println!("thresholds written to {}", path.display());
    Ok(())
}

fn schedule(common: &Common, solver: &SolverArgs, strategy: Strategy) -> Result<()> {
    let sc = common.load()?;
    let opts = solver.run_options()?;
    let s = run_strategy(&sc, strategy, &opts)?;
    let (report, steps) = kpi(&s, &sc)?;
    s.write_csv(common.create(&format!("schedule_{strategy}.csv"))?)?;
    write_compliance_csv(&steps, common.create(&format!("compliance_{strategy}.csv"))?)?;
    serde_json::to_writer_pretty(common.create(&format!("kpi_{strategy}.json"))?, &report)?;
    println!(
        "{strategy}: revenue {:.2} {}, hydrogen {:.1} kg, grid {:.1} kWh, compliant {}",
        report.revenue, report.currency, report.hydrogen_kg, report.grid_purchase_kwh, report.compliant
    );
    Ok(())
}

fn compare(common: &Common, solver: &SolverArgs) -> Result<()> {
    let sc = common.load()?;
    let cmp = compare_strategies(&sc, &solver.run_options()?)?;
    for ((s, r), steps) in cmp.schedules.iter().zip(&cmp.reports).zip(&cmp.compliance) {
        s.write_csv(common.create(&format!("schedule_{}.csv", s.strategy))?)?;
        write_compliance_csv(steps, common.create(&format!("compliance_{}.csv", s.strategy))?)?;
        println!(
            "{:>4}  revenue {:>12.2}  hydrogen {:>10.1} kg  grid {:>10.1} kWh  compliant {}",
            r.strategy, r.revenue, r.hydrogen_kg, r.grid_purchase_kwh, r.compliant
        );
    }
    cmp.write_csv(common.create("comparison.csv")?)?;
    serde_json::to_writer_pretty(common.create("kpi.json")?, &cmp.reports)?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<InputError>() || cause.is::<ScenarioError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<ScheduleError>() {
            return match e {
                ScheduleError::InvalidInput(_) | ScheduleError::UnknownBackend(_) => 2,
                ScheduleError::Solve(SolveError::Infeasible { .. }) | ScheduleError::Cm2NoCompliantLoad { .. } => 3,
                ScheduleError::Solve(SolveError::Timeout { .. }) => 4,
                _ => 5,
            };
        }
    }
    5
}

/// The error chain, skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze { common, resolution } => analyze(common, *resolution),
        Command::Region { common, order, resolution } => region(common, *order, *resolution),
        Command::Schedule { common, solver, strategy } => schedule(common, solver, *strategy),
        Command::Compare { common, solver } => compare(common, solver),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
