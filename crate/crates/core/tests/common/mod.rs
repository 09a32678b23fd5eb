//! Brute-force schedule enumeration used as an oracle for small instances.

#![allow(dead_code)]

use p2h_core::feasible_region::RegionThresholds;
use p2h_core::scenario::{ElzState, Scenario};

/// One electrolyzer's choice at one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Choice {
    Idle,
    Standby,
    On(f64),
}

impl Choice {
    fn powered(self) -> bool {
        self != Choice::Idle
    }
    fn current(self) -> f64 {
        match self {
            Choice::On(i) => i,
            _ => 0.0,
        }
    }
}

/// Best revenue over every state/current combination with currents on
/// `current_min + k·step`. `stack_power` maps A to W. When `rules` is given,
/// only steps the rules admit are considered.
pub fn enumerate_optimum(
    sc: &Scenario,
    step: f64,
    stack_power: &dyn Fn(f64) -> f64,
    rules: Option<&RegionThresholds>,
) -> f64 {
    let m = &sc.electrolyzer;
    let mut choices = vec![Choice::Idle, Choice::Standby];
    let mut i = m.current_min;
    while i <= m.current_max + 1e-9 {
        choices.push(Choice::On(i));
        i += step;
    }
    let n = sc.n_elz;
    let horizon = sc.horizon();
    let slots = n * horizon;
    let total = choices.len().pow(slots as u32);
    let history = sc.initial_state.is_powered();
    let p = &sc.prices;
    let dt = sc.step_hours;
    let kg_per_a = m.hydrogen_kg_per_hour(1.0);
    let mut best = f64::NEG_INFINITY;
    let mut pick = vec![Choice::Idle; slots];
    'outer: for code in 0..total {
        let mut c = code;
        for s in pick.iter_mut() {
            *s = choices[c % choices.len()];
            c /= choices.len();
        }
        let at = |t: isize, k: usize| if t < 0 { history } else { pick[t as usize * n + k].powered() };
        let mut value = 0.0;
        for t in 0..horizon {
            let row = &pick[t * n..(t + 1) * n];
            if let Some(r) = rules {
                let currents: Vec<f64> = row.iter().map(|c| c.current()).collect();
                if !r.admits(&currents) {
                    continue 'outer;
                }
            }
            let mut load = 0.0;
            for (k, ch) in row.iter().enumerate() {
                let ti = t as isize;
                if at(ti - 2, k) && !at(ti - 1, k) && at(ti, k) && t >= 1 {
                    continue 'outer;
                }
                if ch.powered() && !at(ti - 1, k) {
                    value -= p.startup * dt;
                }
                if let Choice::On(i) = ch {
                    load += stack_power(*i) + m.aux_power;
                    value += p.hydrogen_per_kg * kg_per_a * i * dt;
                } else if *ch == Choice::Standby {
                    load += m.aux_power;
                }
            }
            value -= p.grid_per_kwh * (load - sc.renewable[t]).max(0.0) / 1e3 * dt;
        }
        best = best.max(value);
    }
    best
}

/// A two-electrolyzer, short-horizon copy of the bundled 10 kV scenario.
pub fn toy_scenario(renewable_mw: &[f64]) -> Scenario {
    let mut sc = Scenario::bundled("two-elz").expect("bundled scenario");
    sc.renewable = renewable_mw.iter().map(|v| v * 1e6).collect();
    sc.synthetic = None;
    sc.initial_state = ElzState::Idle;
    sc
}
