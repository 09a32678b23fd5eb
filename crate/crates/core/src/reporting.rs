//! KPI tables, harmonic trajectories and sweep exports.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::grid_codes::ComplianceReport;
use crate::rectifier::{harmonic_phasor_analytic, ElectrolyzerModel, RectifierError, REPORTED_ORDERS};
use crate::scenario::Scenario;
use crate::scheduler::{revenue, run_all, validate_schedule, RunOptions, Schedule, ScheduleError, Strategy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub strategy: Strategy,
    pub currency: String,
    /// Recomputed from the schedule.
    pub revenue: f64,
    /// Objective reported by the solver, when the schedule came from one.
    pub solver_objective: Option<f64>,
    pub hydrogen_kg: f64,
    pub grid_purchase_kwh: f64,
    pub compliant: bool,
    pub violating_steps: Vec<usize>,
    /// Average PCC magnitude per order over all steps, A.
    pub average_harmonics: BTreeMap<u32, f64>,
}

impl KpiReport {
    pub fn average(&self, order: u32) -> f64 {
        self.average_harmonics.get(&order).copied().unwrap_or(0.0)
    }
}

/// KPIs of a schedule together with its per-step compliance.
pub fn kpi(schedule: &Schedule, scenario: &Scenario) -> Result<(KpiReport, Vec<ComplianceReport>), ScheduleError> {
    let steps = validate_schedule(schedule, scenario)?;
    let horizon = steps.len().max(1) as f64;
    let average_harmonics = REPORTED_ORDERS
        .iter()
        .map(|&h| (h, steps.iter().filter_map(|r| r.magnitude(h)).sum::<f64>() / horizon))
        .collect();
    let report = KpiReport {
        strategy: schedule.strategy,
        currency: scenario.prices.currency.clone(),
        revenue: revenue(schedule, scenario),
        solver_objective: schedule.solve.as_ref().map(|s| s.objective),
        hydrogen_kg: schedule.steps.iter().flatten().map(|e| e.h2_kg).sum(),
        grid_purchase_kwh: schedule.grid_purchase.iter().sum::<f64>() / 1e3 * schedule.step_hours,
        compliant: steps.iter().all(|r| r.compliant),
        violating_steps: steps.iter().enumerate().filter(|(_, r)| !r.compliant).map(|(t, _)| t).collect(),
        average_harmonics,
    };
    Ok((report, steps))
}

/// Results of running all three strategies on one scenario.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub schedules: Vec<Schedule>,
    pub reports: Vec<KpiReport>,
    pub compliance: Vec<Vec<ComplianceReport>>,
}

impl Comparison {
    pub fn report(&self, strategy: Strategy) -> &KpiReport {
        self.reports.iter().find(|r| r.strategy == strategy).expect("all strategies present")
    }

    pub fn schedule(&self, strategy: Strategy) -> &Schedule {
        self.schedules.iter().find(|s| s.strategy == strategy).expect("all strategies present")
    }

    /// Relative revenue shortfall of `strategy` against CM1.
    pub fn revenue_loss(&self, strategy: Strategy) -> f64 {
        let base = self.report(Strategy::Cm1).revenue;
        (base - self.report(strategy).revenue) / base.abs().max(1.0)
    }

    /// One column per strategy, one row per KPI.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["kpi".to_string()];
        header.extend(self.reports.iter().map(|r| r.strategy.to_string()));
        w.write_record(&header)?;
        let currency = self.reports.first().map_or("", |r| r.currency.as_str());
        let mut row = |name: String, f: &dyn Fn(&KpiReport) -> String| {
            let mut rec = vec![name];
            rec.extend(self.reports.iter().map(f));
            w.write_record(&rec)
        };
        row(format!("revenue_{currency}"), &|r| format!("{:.2}", r.revenue))?;
        row("hydrogen_kg".into(), &|r| format!("{:.3}", r.hydrogen_kg))?;
        row("grid_purchase_kWh".into(), &|r| format!("{:.3}", r.grid_purchase_kwh))?;
        row("compliant".into(), &|r| r.compliant.to_string())?;
        for h in REPORTED_ORDERS {
            row(format!("avg_i{h}_A"), &|r| format!("{:.4}", r.average(h)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs CM1, CM2 and PM and reports their KPIs in that order.
pub fn compare_strategies(scenario: &Scenario, opts: &RunOptions) -> Result<Comparison, ScheduleError> {
    let schedules = run_all(scenario, opts)?;
    let mut reports = Vec::with_capacity(3);
    let mut compliance = Vec::with_capacity(3);
    for s in &schedules {
        let (r, c) = kpi(s, scenario)?;
        reports.push(r);
        compliance.push(c);
    }
    Ok(Comparison { schedules: schedules.into(), reports, compliance })
}

/// Per-step PCC magnitudes and compliance.
pub fn write_compliance_csv<W: Write>(steps: &[ComplianceReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let orders: Vec<u32> = steps.first().map(|r| r.orders.iter().map(|o| o.order).collect()).unwrap_or_default();
    let mut header = vec!["step".to_string(), "compliant".into(), "thd".into()];
    header.extend(orders.iter().map(|h| format!("i{h}_A")));
    w.write_record(&header)?;
    for (t, r) in steps.iter().enumerate() {
        let mut rec = vec![t.to_string(), r.compliant.to_string(), format!("{:.6}", r.thd)];
        rec.extend(orders.iter().map(|&h| format!("{:.6}", r.magnitude(h).unwrap_or(0.0))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Harmonic phasors at the rectifier's AC terminals, one row per current
/// and order: `current_A, order, magnitude_A, phase_deg`.
pub fn export_phasor_sweep<W: Write>(
    model: &ElectrolyzerModel,
    orders: &[u32],
    currents: &[f64],
    out: W,
) -> Result<usize, ExportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["current_A", "order", "magnitude_A", "phase_deg"])?;
    let mut rows = 0;
    for &i in currents {
        let op = model.operating_point(i)?;
        for &h in orders {
            let p = harmonic_phasor_analytic(&op, h)?;
            w.write_record([
                format!("{i:.3}"),
                h.to_string(),
                format!("{:.6}", p.magnitude()),
                format!("{:.4}", p.phase().to_degrees()),
            ])?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}

/// Operating points over a current grid:
/// `current_A, alpha_deg, gamma_deg, u_stack_V, i_fund_A`.
pub fn export_operating_points<W: Write>(model: &ElectrolyzerModel, currents: &[f64], out: W) -> Result<usize, ExportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["current_A", "alpha_deg", "gamma_deg", "u_stack_V", "i_fund_A"])?;
    for &i in currents {
        let op = model.operating_point(i)?;
        w.write_record([
            format!("{i:.3}"),
            format!("{:.6}", op.alpha.to_degrees()),
            format!("{:.6}", op.gamma.to_degrees()),
            format!("{:.4}", op.u_stack),
            format!("{:.6}", op.i_fund),
        ])?;
    }
    w.flush()?;
    Ok(currents.len())
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error(transparent)]
    Rectifier(#[from] RectifierError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
