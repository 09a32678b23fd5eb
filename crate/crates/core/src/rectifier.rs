//! Thyristor-rectifier operating points and harmonic current phasors.
//!
//! A 24-pulse rectifier feeding an electrolyzer stack is described by its AC
//! bus voltage, transformer turn ratio and commutation reactance. Given the DC
//! current, the firing angle α, the overlap γ and the fundamental AC current
//! follow in closed form from the stack voltage. Harmonic phasors are
//! available analytically and, as an independent check, from the FFT of a
//! synthesized line-current waveform.
//!
//! Phasors are RMS values referenced to the phase-a voltage zero crossing:
//! a phasor `I·e^{jφ}` stands for `√2·|I|·sin(hθ + φ)`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pulse number of the modeled rectifier.
pub const PULSE_NUMBER: u32 = 24;
/// Ideal no-load DC voltage factor: `Ud0 = 2.4435·U_AC / K`.
pub const DC_VOLTAGE_FACTOR: f64 = 2.4435;
/// Faraday constant, C/mol.
pub const FARADAY: f64 = 96485.0;
/// Lower heating value of hydrogen, J/mol.
pub const H2_LHV_J_PER_MOL: f64 = 241.8e3;
/// Molar mass of hydrogen, kg/mol.
pub const H2_MOLAR_MASS: f64 = 2.016e-3;
/// Characteristic orders tracked by the reports.
pub const REPORTED_ORDERS: [u32; 4] = [23, 25, 47, 49];
/// Default waveform resolution (samples per fundamental period).
pub const DEFAULT_SAMPLES: usize = 16384;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RectifierError {
    #[error("invalid rectifier parameters: {0}")]
    InvalidParams(String),
    #[error("current must be non-negative and finite, got {0} A")]
    InvalidCurrent(f64),
    #[error("no operating point at {current} A: {reason}")]
    NoSolution { current: f64, reason: String },
    #[error("harmonic order {0} is not characteristic for a {PULSE_NUMBER}-pulse rectifier")]
    UnsupportedOrder(u32),
    #[error("harmonic order {order} is too close to Nyquist for {samples} samples")]
    Aliasing { order: u32, samples: usize },
    #[error("sample count {0} must be a power of two and at least 4096")]
    SampleCount(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectifierParams {
    /// AC bus line voltage, V.
    pub u_ac: f64,
    pub turn_ratio: f64,
    /// Commutation reactance, Ω.
    pub x_c: f64,
    #[serde(default = "default_pulse_number")]
    pub pulse_number: u32,
    /// Stack power at maximum current, W.
    pub rated_stack_power: f64,
}

fn default_pulse_number() -> u32 {
    PULSE_NUMBER
}

impl Default for RectifierParams {
    fn default() -> Self {
        Self {
            u_ac: 10e3,
            turn_ratio: 29.289513837169533,
            x_c: 8.51758709637224e-3,
            pulse_number: PULSE_NUMBER,
            rated_stack_power: 5.2e6,
        }
    }
}

impl RectifierParams {
    pub fn validate(&self) -> Result<(), RectifierError> {
        let bad = |m: &str| Err(RectifierError::InvalidParams(m.to_string()));
        if !(self.u_ac > 0.0 && self.u_ac.is_finite()) {
            return bad("u_ac must be positive");
        }
        if !(self.turn_ratio > 0.0 && self.turn_ratio.is_finite()) {
            return bad("turn_ratio must be positive");
        }
        if !(self.x_c >= 0.0 && self.x_c.is_finite()) {
            return bad("x_c must be non-negative");
        }
        if self.pulse_number != PULSE_NUMBER {
            return bad("pulse_number must be 24");
        }
        if !(self.rated_stack_power > 0.0) {
            return bad("rated_stack_power must be positive");
        }
        Ok(())
    }

    /// Ideal no-load DC voltage at zero firing angle, V.
    pub fn ideal_dc_voltage(&self) -> f64 {
        DC_VOLTAGE_FACTOR * self.u_ac / self.turn_ratio
    }

    /// Commutation voltage drop at DC current `current`, V.
    pub fn commutation_drop(&self, current: f64) -> f64 {
        3.0 / PI * self.x_c * current
    }
}

/// `u_cell(I) = u_rev + r_ohm·I + s_act·log10(t_act·I + 1)`, stack = `n_cell·u_cell`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarizationCurve {
    pub n_cell: u32,
    pub u_rev: f64,
    pub r_ohm: f64,
    pub s_act: f64,
    pub t_act: f64,
}

impl Default for PolarizationCurve {
    fn default() -> Self {
        Self {
            n_cell: 350,
            u_rev: 1.229,
            r_ohm: 8.922734212577594e-5,
            s_act: 0.18628784100208826,
            t_act: 3.8211952784638027e-3,
        }
    }
}

impl PolarizationCurve {
    pub fn validate(&self) -> Result<(), RectifierError> {
        if self.n_cell == 0 {
            return Err(RectifierError::InvalidParams("n_cell must be at least 1".into()));
        }
        let coeffs = [self.u_rev, self.r_ohm, self.s_act, self.t_act];
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) || self.r_ohm + self.s_act * self.t_act <= 0.0 {
            return Err(RectifierError::InvalidParams(
                "curve coefficients must be finite and non-negative with a positive slope".into(),
            ));
        }
        Ok(())
    }

    pub fn cell_voltage(&self, current: f64) -> f64 {
        self.u_rev + self.r_ohm * current + self.s_act * (self.t_act * current + 1.0).log10()
    }

    pub fn stack_power(&self, current: f64) -> f64 {
        self.n_cell as f64 * self.cell_voltage(current) * current
    }
}

/// DC stack voltage at `current`, V.
pub fn stack_voltage(curve: &PolarizationCurve, current: f64) -> Result<f64, RectifierError> {
    if !(current >= 0.0 && current.is_finite()) {
        return Err(RectifierError::InvalidCurrent(current));
    }
    Ok(curve.n_cell as f64 * curve.cell_voltage(current))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// DC electrolytic current, A.
    pub current: f64,
    /// Firing angle, rad.
    pub alpha: f64,
    /// Commutation overlap, rad.
    pub gamma: f64,
    /// DC stack voltage, V.
    pub u_stack: f64,
    /// RMS fundamental AC line current, A.
    pub i_fund: f64,
    /// Commutation voltage drop, V.
    pub delta_u: f64,
}

impl OperatingPoint {
    /// Relative residuals of the DC voltage equation, the overlap relation and
    /// the AC/DC power balance.
    pub fn residuals(&self, params: &RectifierParams) -> [f64; 3] {
        let ud0 = params.ideal_dc_voltage();
        let (ca, cag) = (self.alpha.cos(), (self.alpha + self.gamma).cos());
        let r1 = (ud0 * ca - self.delta_u - self.u_stack) / ud0;
        let r2 = (ca - cag - 2.0 * self.delta_u / ud0).abs()
            + (self.delta_u - params.commutation_drop(self.current)).abs() / ud0;
        let p_dc = self.u_stack * self.current;
        let p_ac = 3f64.sqrt() * params.u_ac * self.i_fund * 0.5 * (ca + cag);
        let r3 = (p_ac - p_dc) / p_dc.abs().max(1.0);
        [r1.abs(), r2, r3.abs()]
    }
}

/// Solves the rectifier operating point at DC current `current`.
///
/// `cos α = (U + ΔU)/Ud0` and `cos(α+γ) = (U − ΔU)/Ud0` with `ΔU = (3/π)·X_c·I`;
/// the fundamental follows from the power balance with displacement factor
/// `(cos α + cos(α+γ))/2`.
pub fn solve_operating_point(
    params: &RectifierParams,
    curve: &PolarizationCurve,
    current: f64,
) -> Result<OperatingPoint, RectifierError> {
    params.validate()?;
    let u = stack_voltage(curve, current)?;
    let ud0 = params.ideal_dc_voltage();
    let du = params.commutation_drop(current);
    let cos_a = (u + du) / ud0;
    let cos_ag = (u - du) / ud0;
    let no_solution = |reason: String| RectifierError::NoSolution { current, reason };
    if cos_a > 1.0 {
        return Err(no_solution(format!(
            "cos α = {cos_a:.6} > 1, AC voltage too low for the stack voltage {u:.1} V"
        )));
    }
    if cos_a <= 0.0 {
        return Err(no_solution(format!("firing angle would reach 90° (cos α = {cos_a:.6})")));
    }
    let alpha = cos_a.acos();
    let gamma = cos_ag.acos() - alpha;
    if alpha + gamma >= PI {
        return Err(no_solution("α + γ reaches π".into()));
    }
    let i_fund = if current == 0.0 { 0.0 } else { 2.0 * u * current / (3f64.sqrt() * params.u_ac * (cos_a + cos_ag)) };
    Ok(OperatingPoint { current, alpha, gamma, u_stack: u, i_fund, delta_u: du })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicPhasor {
    pub order: u32,
    /// RMS complex current, A.
    pub value: Complex64,
}

impl HarmonicPhasor {
    pub fn new(order: u32, value: Complex64) -> Self {
        Self { order, value }
    }

    pub fn zero(order: u32) -> Self {
        Self::new(order, Complex64::new(0.0, 0.0))
    }

    pub fn magnitude(&self) -> f64 {
        self.value.norm()
    }

    /// Phase in radians, `(−π, π]`.
    pub fn phase(&self) -> f64 {
        self.value.arg()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.order, self.value * k)
    }
}

/// True for the fundamental and orders `24k ± 1`.
pub fn is_characteristic(order: u32) -> bool {
    let p = PULSE_NUMBER;
    order == 1 || (order > 1 && (order % p == 1 || order % p == p - 1))
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Closed-form harmonic phasor of order `order`.
///
/// The ideal line current is a 24-level staircase whose characteristic
/// components are `1/h` times the fundamental, all in phase; the linear commutation
/// ramps of width γ multiply it by `sinc(hγ/2)/sinc(γ/2)`, and the delay
/// `α + γ/2` rotates it by `−h(α + γ/2)`.
pub fn harmonic_phasor_analytic(op: &OperatingPoint, order: u32) -> Result<HarmonicPhasor, RectifierError> {
    if !is_characteristic(order) {
        return Err(RectifierError::UnsupportedOrder(order));
    }
    let h = order as f64;
    let ideal = 1.0 / h;
    let overlap = sinc(h * op.gamma / 2.0) / sinc(op.gamma / 2.0);
    let magnitude = op.i_fund * ideal * overlap;
    let phase = -h * (op.alpha + op.gamma / 2.0);
    Ok(HarmonicPhasor::new(order, Complex64::from_polar(magnitude, phase)))
}

/// One fundamental period of a phase current, uniformly sampled from θ = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
}

impl Waveform {
    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    /// Writes `sample_index,angle_rad,current_A` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sample_index", "angle_rad", "current_A"])?;
        let n = self.samples.len() as f64;
        for (k, v) in self.samples.iter().enumerate() {
            w.write_record([k.to_string(), (2.0 * PI * k as f64 / n).to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Full one-sided spectrum as RMS phasors.
    pub fn spectrum(&self) -> Spectrum {
        let n = self.samples.len();
        let mut buf: Vec<Complex64> = self.samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        Spectrum { bins: buf, samples: n }
    }
}

/// DFT of a [`Waveform`].
#[derive(Clone, Debug)]
pub struct Spectrum {
    bins: Vec<Complex64>,
    samples: usize,
}

impl Spectrum {
    pub fn phasor(&self, order: u32) -> Result<HarmonicPhasor, RectifierError> {
        check_order(order, self.samples)?;
        // x = √2·|I|·sin(hθ+φ) puts N·|I|·e^{jφ}/(√2·j) into bin h
        let scale = Complex64::new(0.0, 2f64.sqrt() / self.samples as f64);
        Ok(HarmonicPhasor::new(order, self.bins[order as usize] * scale))
    }

    /// Mean of the waveform.
    pub fn dc(&self) -> f64 {
        self.bins[0].re / self.samples as f64
    }
}

fn check_order(order: u32, samples: usize) -> Result<(), RectifierError> {
    if order == 0 || 4 * order as usize > samples {
        return Err(RectifierError::Aliasing { order, samples });
    }
    Ok(())
}

/// Staircase of the ideal 24-pulse line current and its antiderivative.
struct Staircase {
    levels: Vec<f64>,
    cumulative: Vec<f64>,
    step: f64,
}

impl Staircase {
    fn new(amplitude: f64) -> Self {
        let p = PULSE_NUMBER as usize;
        let step = 2.0 * PI / p as f64;
        let levels: Vec<f64> = (0..p).map(|k| amplitude * ((k as f64 + 0.5) * step).sin()).collect();
        let mut cumulative = vec![0.0; p + 1];
        for k in 0..p {
            cumulative[k + 1] = cumulative[k] + levels[k] * step;
        }
        Self { levels, cumulative, step }
    }

    fn locate(&self, theta: f64) -> (usize, f64) {
        let t = theta.rem_euclid(2.0 * PI);
        let k = ((t / self.step) as usize).min(self.levels.len() - 1);
        (k, t - k as f64 * self.step)
    }

    fn value(&self, theta: f64) -> f64 {
        self.levels[self.locate(theta).0]
    }

    /// Antiderivative; periodic because the staircase has zero mean.
    fn integral(&self, theta: f64) -> f64 {
        let (k, f) = self.locate(theta);
        self.cumulative[k] + self.levels[k] * f
    }
}

/// Samples the AC line current for `op`: a 24-level staircase delayed by α
/// whose transitions are linear ramps of width γ.
pub fn synthesize_ac_waveform(op: &OperatingPoint, sample_count: usize) -> Result<Waveform, RectifierError> {
    if !sample_count.is_power_of_two() || sample_count < 4096 {
        return Err(RectifierError::SampleCount(sample_count));
    }
    let p = PULSE_NUMBER as f64;
    let amplitude = 2f64.sqrt() * op.i_fund / (sinc(PI / p) * sinc(op.gamma / 2.0));
    let stair = Staircase::new(amplitude);
    let n = sample_count as f64;
    let samples = (0..sample_count)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / n;
            if op.gamma > 1e-12 {
                (stair.integral(theta - op.alpha) - stair.integral(theta - op.alpha - op.gamma)) / op.gamma
            } else {
                stair.value(theta - op.alpha)
            }
        })
        .collect();
    Ok(Waveform { samples })
}

/// Harmonic phasor of order `order` from the DFT of `w`.
pub fn harmonic_phasor_fft(w: &Waveform, order: u32) -> Result<HarmonicPhasor, RectifierError> {
    check_order(order, w.sample_count())?;
    w.spectrum().phasor(order)
}

/// Hydrogen production, mol/s.
pub fn hydrogen_rate(curve: &PolarizationCurve, faraday_efficiency: f64, current: f64) -> f64 {
    faraday_efficiency * curve.n_cell as f64 * current / (2.0 * FARADAY)
}

/// LHV efficiency of one electrolyzer including auxiliary power.
pub fn p2h_efficiency(curve: &PolarizationCurve, faraday_efficiency: f64, aux_power: f64, current: f64) -> f64 {
    group_efficiency(curve, faraday_efficiency, aux_power, &[current])
}

/// LHV efficiency of a group of active electrolyzers sharing the hydrogen output.
pub fn group_efficiency(curve: &PolarizationCurve, faraday_efficiency: f64, aux_power: f64, currents: &[f64]) -> f64 {
    let h2: f64 = currents.iter().map(|&i| hydrogen_rate(curve, faraday_efficiency, i)).sum();
    let power: f64 = currents.iter().map(|&i| curve.stack_power(i) + aux_power).sum();
    if power <= 0.0 {
        return 0.0;
    }
    H2_LHV_J_PER_MOL * h2 / power
}

/// One electrolyzer with its rectifier, as seen from the PCC.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectrolyzerModel {
    pub rectifier: RectifierParams,
    pub curve: PolarizationCurve,
    pub current_min: f64,
    pub current_max: f64,
    pub aux_power: f64,
    pub faraday_efficiency: f64,
    /// Line voltage at the PCC; phasors are referred to it by `u_ac / pcc_voltage`.
    pub pcc_voltage: f64,
}

impl Default for ElectrolyzerModel {
    fn default() -> Self {
        let rectifier = RectifierParams::default();
        Self {
            pcc_voltage: rectifier.u_ac,
            rectifier,
            curve: PolarizationCurve::default(),
            current_min: 2000.0,
            current_max: 7000.0,
            aux_power: 0.5e6,
            faraday_efficiency: 1.0,
        }
    }
}

impl ElectrolyzerModel {
    pub fn validate(&self) -> Result<(), RectifierError> {
        self.rectifier.validate()?;
        self.curve.validate()?;
        let ok = self.current_min > 0.0
            && self.current_max > self.current_min
            && self.current_max.is_finite()
            && self.aux_power >= 0.0
            && self.faraday_efficiency > 0.0
            && self.faraday_efficiency <= 1.0
            && self.pcc_voltage > 0.0;
        if !ok {
            return Err(RectifierError::InvalidParams(
                "need 0 < current_min < current_max, aux_power ≥ 0, 0 < faraday_efficiency ≤ 1, pcc_voltage > 0".into(),
            ));
        }
        for i in [self.current_min, self.current_max] {
            self.operating_point(i)?;
        }
        Ok(())
    }

    pub fn operating_point(&self, current: f64) -> Result<OperatingPoint, RectifierError> {
        solve_operating_point(&self.rectifier, &self.curve, current)
    }

    pub fn pcc_scale(&self) -> f64 {
        self.rectifier.u_ac / self.pcc_voltage
    }

    /// Harmonic phasor at the PCC; zero for a de-energized electrolyzer.
    pub fn pcc_phasor(&self, current: f64, order: u32) -> Result<HarmonicPhasor, RectifierError> {
        if current <= 0.0 {
            if !is_characteristic(order) {
                return Err(RectifierError::UnsupportedOrder(order));
            }
            return Ok(HarmonicPhasor::zero(order));
        }
        let op = self.operating_point(current)?;
        Ok(harmonic_phasor_analytic(&op, order)?.scaled(self.pcc_scale()))
    }

    pub fn stack_power(&self, current: f64) -> f64 {
        self.curve.stack_power(current)
    }

    pub fn hydrogen_rate(&self, current: f64) -> f64 {
        hydrogen_rate(&self.curve, self.faraday_efficiency, current)
    }

    /// Hydrogen mass flow, kg/h.
    pub fn hydrogen_kg_per_hour(&self, current: f64) -> f64 {
        self.hydrogen_rate(current) * H2_MOLAR_MASS * 3600.0
    }

    pub fn efficiency(&self, current: f64) -> f64 {
        p2h_efficiency(&self.curve, self.faraday_efficiency, self.aux_power, current)
    }

    pub fn group_efficiency(&self, currents: &[f64]) -> f64 {
        group_efficiency(&self.curve, self.faraday_efficiency, self.aux_power, currents)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_reactance_has_no_overlap() {
        let params = RectifierParams { x_c: 0.0, ..Default::default() };
        let op = solve_operating_point(&params, &PolarizationCurve::default(), 4000.0).unwrap();
        assert_eq!(op.gamma, 0.0);
        assert_eq!(op.delta_u, 0.0);
    }

    #[test]
    fn low_ac_voltage_has_no_solution() {
        let params = RectifierParams { u_ac: 5e3, ..Default::default() };
        let err = solve_operating_point(&params, &PolarizationCurve::default(), 7000.0).unwrap_err();
        assert!(matches!(err, RectifierError::NoSolution { .. }));
    }

    #[test]
    fn negative_current_rejected() {
        assert!(stack_voltage(&PolarizationCurve::default(), -1.0).is_err());
    }

    #[test]
    fn characteristic_orders() {
        let orders: Vec<u32> = (1..60).filter(|&h| is_characteristic(h)).collect();
        assert_eq!(orders, vec![1, 23, 25, 47, 49]);
    }

    #[test]
    fn staircase_integral_is_periodic() {
        let s = Staircase::new(1.0);
        assert!(s.integral(2.0 * PI - 1e-12).abs() < 1e-9);
        assert!((s.integral(0.3) - s.integral(0.3 + 2.0 * PI)).abs() < 1e-12);
    }
}
