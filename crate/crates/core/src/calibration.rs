//! Fitting of the default polarization curve and rectifier constants.
//!
//! The shipped defaults are reproducible from the targets below: the curve
//! from rated stack power plus two efficiency points, the rectifier from a
//! requirement that two chosen currents produce exactly opposite phasors.

use num_complex::Complex64;
use thiserror::Error;

use crate::rectifier::{
    group_efficiency, harmonic_phasor_analytic, solve_operating_point, PolarizationCurve, RectifierError,
    RectifierParams,
};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("calibration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Rectifier(#[from] RectifierError),
}

#[derive(Clone, Debug)]
pub struct CurveTargets {
    pub n_cell: u32,
    pub u_rev: f64,
    pub current_max: f64,
    /// Stack power at `current_max`, W.
    pub stack_power_at_max: f64,
    pub aux_power: f64,
    pub faraday_efficiency: f64,
    /// Both electrolyzers at this current reach `even_efficiency`.
    pub even_current: f64,
    pub even_efficiency: f64,
    /// The split pair reaches `split_efficiency`.
    pub split_currents: (f64, f64),
    pub split_efficiency: f64,
}

impl Default for CurveTargets {
    fn default() -> Self {
        Self {
            n_cell: 350,
            u_rev: 1.229,
            current_max: 7000.0,
            stack_power_at_max: 5.2e6,
            aux_power: 0.5e6,
            faraday_efficiency: 1.0,
            even_current: 3950.0,
            even_efficiency: 0.578,
            split_currents: (3000.0, 4900.0),
            split_efficiency: 0.572,
        }
    }
}

/// Damped Newton iteration with a forward-difference Jacobian.
fn newton<const N: usize>(
    mut x: [f64; N],
    f: impl Fn(&[f64; N]) -> Result<[f64; N], RectifierError>,
    tol: f64,
) -> Result<[f64; N], CalibrationError> {
    const MAX_ITER: usize = 100;
    let norm = |r: &[f64; N]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut r = f(&x)?;
    for _ in 0..MAX_ITER {
        if norm(&r) < tol {
            return Ok(x);
        }
        let mut jac = [[0.0; N]; N];
        for j in 0..N {
            let h = 1e-7 * x[j].abs().max(1e-7);
            let mut xp = x;
            xp[j] += h;
            let rp = f(&xp)?;
            for i in 0..N {
                jac[i][j] = (rp[i] - r[i]) / h;
            }
        }
        let step = solve_dense(jac, r).ok_or(CalibrationError::NoConvergence { iterations: 0, residual: norm(&r) })?;
        let mut lambda = 1.0;
        loop {
            let mut xn = x;
            for i in 0..N {
                xn[i] -= lambda * step[i];
            }
            if let Ok(rn) = f(&xn) {
                if norm(&rn) < norm(&r) || lambda < 1e-4 {
                    x = xn;
                    r = rn;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return Err(CalibrationError::NoConvergence { iterations: MAX_ITER, residual: norm(&r) });
            }
        }
    }
    if norm(&r) < tol {
        Ok(x)
    } else {
        Err(CalibrationError::NoConvergence { iterations: MAX_ITER, residual: norm(&r) })
    }
}

fn solve_dense<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for c in 0..N {
        let p = (c..N).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..N {
            let f = a[r][c] / a[c][c];
            for k in c..N {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; N];
    for c in (0..N).rev() {
        let s: f64 = (c + 1..N).map(|k| a[c][k] * x[k]).sum();
        x[c] = (b[c] - s) / a[c][c];
    }
    Some(x)
}

/// Fits `r_ohm`, `s_act`, `t_act` so the three targets hold exactly.
pub fn fit_polarization_curve(targets: &CurveTargets) -> Result<PolarizationCurve, CalibrationError> {
    let curve_of = |x: &[f64; 3]| PolarizationCurve {
        n_cell: targets.n_cell,
        u_rev: targets.u_rev,
        r_ohm: x[0] * 1e-4,
        s_act: x[1],
        t_act: 10f64.powf(x[2]),
    };
    let residual = |x: &[f64; 3]| {
        let c = curve_of(x);
        let eff = |i: &[f64]| group_efficiency(&c, targets.faraday_efficiency, targets.aux_power, i);
        Ok([
            c.stack_power(targets.current_max) / targets.stack_power_at_max - 1.0,
            eff(&[targets.even_current, targets.even_current]) - targets.even_efficiency,
            eff(&[targets.split_currents.0, targets.split_currents.1]) - targets.split_efficiency,
        ])
    };
    let x = newton([0.9, 0.19, -2.4], residual, 1e-13)?;
    Ok(curve_of(&x))
}

/// Fits the turn ratio and commutation reactance so the `order` phasors at
/// `currents.0` and `currents.1` cancel exactly.
pub fn fit_rectifier_for_cancellation(
    curve: &PolarizationCurve,
    base: &RectifierParams,
    order: u32,
    currents: (f64, f64),
) -> Result<RectifierParams, CalibrationError> {
    let params_of = |x: &[f64; 2]| RectifierParams { turn_ratio: x[0], x_c: x[1] * 1e-3, ..base.clone() };
    let residual = |x: &[f64; 2]| {
        let p = params_of(x);
        let a = harmonic_phasor_analytic(&solve_operating_point(&p, curve, currents.0)?, order)?;
        let b = harmonic_phasor_analytic(&solve_operating_point(&p, curve, currents.1)?, order)?;
        let s: Complex64 = a.value + b.value;
        Ok([s.re, s.im])
    };
    let x = newton([base.turn_ratio, base.x_c * 1e3], residual, 1e-12)?;
    Ok(params_of(&x))
}
