//! Harmonic current limits at the PCC and compliance checks.
//!
//! Two limit modes are supported. In GB/T 14549 mode a table of base limits
//! (amperes at the base short-circuit capacity) is scaled by the ratio of the
//! actual to the base short-circuit capacity. In IEEE 519 mode the table holds
//! percentages of the maximum demand current.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rectifier::HarmonicPhasor;

/// Absolute tolerance, A, applied when comparing a magnitude with its limit.
pub const LIMIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GridCodeError {
    #[error("no limit for order {0}")]
    MissingEntry(u32),
    #[error("cannot aggregate phasors of different orders ({0} and {1})")]
    MixedOrders(u32, u32),
    #[error("cannot aggregate an empty phasor set")]
    Empty,
    #[error("invalid PCC specification: {0}")]
    InvalidPcc(String),
    #[error("invalid limit table: {0}")]
    InvalidTable(String),
    #[error("reading limit table {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing limit table {path}: {source}")]
    Parse { path: String, source: toml::de::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LimitMode {
    #[default]
    Gbt14549,
    Ieee519,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PccSpec {
    /// Line voltage at the PCC, V.
    pub rated_voltage: f64,
    /// Short-circuit capacity at the PCC, VA.
    pub s_sc: f64,
    /// Base short-circuit capacity of the limit table, VA.
    pub s_gb: f64,
    #[serde(default)]
    pub mode: LimitMode,
    /// Maximum demand fundamental current, A; required in IEEE 519 mode.
    #[serde(default)]
    pub max_demand_current: Option<f64>,
}

impl PccSpec {
    pub fn validate(&self) -> Result<(), GridCodeError> {
        if !(self.rated_voltage > 0.0 && self.s_sc > 0.0 && self.s_gb > 0.0) {
            return Err(GridCodeError::InvalidPcc("rated_voltage, s_sc and s_gb must be positive".into()));
        }
        if self.mode == LimitMode::Ieee519 && !self.max_demand_current.is_some_and(|i| i > 0.0) {
            return Err(GridCodeError::InvalidPcc("IEEE 519 mode needs a positive max_demand_current".into()));
        }
        Ok(())
    }

    /// Short-circuit current over maximum demand current, the IEEE 519 row selector.
    pub fn short_circuit_ratio(&self) -> Option<f64> {
        let isc = self.s_sc / (3f64.sqrt() * self.rated_voltage);
        self.max_demand_current.map(|il| isc / il)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitEntry {
    pub order: u32,
    /// Amperes at the base capacity (GB/T mode) or percent of demand current (IEEE mode).
    pub value: f64,
}

/// Base limits per harmonic order; orders without an entry are unconstrained.
///
/// File schema (TOML):
///
/// ```toml
/// name = "GB/T 14549-93, 10 kV"
/// [[limit]]
/// order = 23
/// value = 4.5
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct HarmonicLimitTable {
    #[serde(default)]
    pub name: String,
    #[serde(default, rename = "limit")]
    pub entries: Vec<LimitEntry>,
}

impl HarmonicLimitTable {
    pub fn from_entries(name: impl Into<String>, entries: &[(u32, f64)]) -> Self {
        Self {
            name: name.into(),
            entries: entries.iter().map(|&(order, value)| LimitEntry { order, value }).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), GridCodeError> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.entries {
            if !(e.value > 0.0 && e.value.is_finite()) {
                return Err(GridCodeError::InvalidTable(format!("order {}: limit must be positive", e.order)));
            }
            if !seen.insert(e.order) {
                return Err(GridCodeError::InvalidTable(format!("order {} listed twice", e.order)));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, GridCodeError> {
        let t: Self = toml::from_str(text).map_err(|source| GridCodeError::Parse { path: origin.into(), source })?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, GridCodeError> {
        let text = std::fs::read_to_string(path).map_err(|source| GridCodeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("limit table serializes")
    }

    pub fn base_limit(&self, order: u32) -> Option<f64> {
        self.entries.iter().find(|e| e.order == order).map(|e| e.value)
    }

    pub fn orders(&self) -> Vec<u32> {
        let mut o: Vec<u32> = self.entries.iter().map(|e| e.order).collect();
        o.sort_unstable();
        o
    }

    /// GB/T 14549-93 base limits for a 10 kV bus at 100 MVA.
    pub fn gbt14549_10kv() -> Self {
        Self::from_entries("GB/T 14549-93, 10 kV, 100 MVA base", &[(23, 4.5), (25, 4.1)])
    }

    /// IEEE 519 current-distortion limits (percent of demand current) for the
    /// given short-circuit ratio, for every odd order up to 50.
    pub fn ieee519(short_circuit_ratio: f64) -> Self {
        let entries: Vec<(u32, f64)> = (3..=49)
            .step_by(2)
            .map(|h| (h, ieee519_percent(short_circuit_ratio, h)))
            .collect();
        Self::from_entries(format!("IEEE 519, Isc/IL = {short_circuit_ratio:.1}"), &entries)
    }
}

/// IEEE 519 individual odd-harmonic limit in percent of the demand current
/// (systems from 120 V to 69 kV).
pub fn ieee519_percent(short_circuit_ratio: f64, order: u32) -> f64 {
    const ROWS: [[f64; 5]; 5] = [
        [4.0, 2.0, 1.5, 0.6, 0.3],
        [7.0, 3.5, 2.5, 1.0, 0.5],
        [10.0, 4.5, 4.0, 1.5, 0.7],
        [12.0, 5.5, 5.0, 2.0, 1.0],
        [15.0, 7.0, 6.0, 2.5, 1.4],
    ];
    let row = match short_circuit_ratio {
        r if r < 20.0 => 0,
        r if r < 50.0 => 1,
        r if r < 100.0 => 2,
        r if r <= 1000.0 => 3,
        _ => 4,
    };
    let col = match order {
        h if h < 11 => 0,
        h if h < 17 => 1,
        h if h < 23 => 2,
        h if h < 35 => 3,
        _ => 4,
    };
    ROWS[row][col]
}

/// Limit at the PCC for `order`, A.
pub fn harmonic_limit(pcc: &PccSpec, table: &HarmonicLimitTable, order: u32) -> Result<f64, GridCodeError> {
    let base = table.base_limit(order).ok_or(GridCodeError::MissingEntry(order))?;
    match pcc.mode {
        LimitMode::Gbt14549 => Ok(pcc.s_sc / pcc.s_gb * base),
        LimitMode::Ieee519 => {
            let il = pcc
                .max_demand_current
                .ok_or_else(|| GridCodeError::InvalidPcc("IEEE 519 mode needs max_demand_current".into()))?;
            Ok(base / 100.0 * il)
        }
    }
}

/// Complex sum of same-order phasors.
pub fn aggregate_phasors(phasors: &[HarmonicPhasor]) -> Result<HarmonicPhasor, GridCodeError> {
    let first = phasors.first().ok_or(GridCodeError::Empty)?;
    let mut sum = Complex64::new(0.0, 0.0);
    for p in phasors {
        if p.order != first.order {
            return Err(GridCodeError::MixedOrders(first.order, p.order));
        }
        sum += p.value;
    }
    Ok(HarmonicPhasor::new(first.order, sum))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderCompliance {
    pub order: u32,
    pub magnitude: f64,
    /// `None` for unconstrained orders.
    pub limit: Option<f64>,
    pub compliant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub orders: Vec<OrderCompliance>,
    pub compliant: bool,
    /// Harmonic RMS over fundamental; 0 without a fundamental.
    pub thd: f64,
}

impl ComplianceReport {
    pub fn magnitude(&self, order: u32) -> Option<f64> {
        self.orders.iter().find(|o| o.order == order).map(|o| o.magnitude)
    }

    pub fn violations(&self) -> impl Iterator<Item = &OrderCompliance> {
        self.orders.iter().filter(|o| !o.compliant)
    }
}

/// Checks aggregated phasors (one per order, the fundamental included when
/// available) against the limits.
pub fn check_compliance(
    aggregates: &[HarmonicPhasor],
    pcc: &PccSpec,
    table: &HarmonicLimitTable,
) -> Result<ComplianceReport, GridCodeError> {
    let mut by_order: BTreeMap<u32, f64> = BTreeMap::new();
    for p in aggregates {
        if by_order.insert(p.order, p.magnitude()).is_some() {
            return Err(GridCodeError::InvalidTable(format!("order {} given twice", p.order)));
        }
    }
    let fundamental = by_order.get(&1).copied().unwrap_or(0.0);
    let mut orders = Vec::new();
    let mut sum_sq = 0.0;
    for (&order, &magnitude) in &by_order {
        if order == 1 {
            continue;
        }
        sum_sq += magnitude * magnitude;
        let limit = match harmonic_limit(pcc, table, order) {
            Ok(l) => Some(l),
            Err(GridCodeError::MissingEntry(_)) => None,
            Err(e) => return Err(e),
        };
        let compliant = limit.is_none_or(|l| magnitude <= l + LIMIT_TOLERANCE);
        orders.push(OrderCompliance { order, magnitude, limit, compliant });
    }
    let thd = if fundamental > 0.0 { sum_sq.sqrt() / fundamental } else { 0.0 };
    Ok(ComplianceReport { compliant: orders.iter().all(|o| o.compliant), orders, thd })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ieee_bands() {
        assert_eq!(ieee519_percent(10.0, 23), 0.6);
        assert_eq!(ieee519_percent(30.0, 47), 0.5);
        assert_eq!(ieee519_percent(2000.0, 25), 2.5);
        assert_eq!(ieee519_percent(150.0, 5), 12.0);
    }

    #[test]
    fn table_roundtrip() {
        let t = HarmonicLimitTable::gbt14549_10kv();
        let back = HarmonicLimitTable::parse(&t.to_toml(), "mem").unwrap();
        assert_eq!(t, back);
    }
}
