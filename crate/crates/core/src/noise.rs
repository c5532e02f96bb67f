//! Path benchmarking on instances with a randomly labeled subset `X^δ`.
//!
//! Labels on `X^δ` are fair coins, so every classifier has risk ½ there and
//! the annotators' error distribution puts weight `½·D(x)` on each noisy point
//! next to `D(x)` on each realizable error:
//!
//! ```text
//! D̄_t = (δ/2·D^δ + D(E_t)·(D | E_t)) / (δ/2 + D(E_t))
//! ```

use std::io::Write;

use serde::Serialize;

use crate::domain::{Distribution, Hypothesis, Instance};
use crate::error::{Error, Result};
use crate::measures::{error_set, risk_01};
use crate::minimizer::Minimizer;
use crate::path::{mix_atoms, WeightPolicy};

/// Slack for comparing simulated noise mass against its closed-form bounds.
pub const BOUND_TOLERANCE: f64 = 1e-9;

/// `1 / (2·(1 + 8·(ε/δ)·t))`.
pub fn delta_lower_bound(t: usize, epsilon: f64, delta: f64) -> f64 {
    1.0 / (2.0 * (1.0 + 8.0 * (epsilon / delta) * t as f64))
}

/// `δ/2 + ½ / (1 + 2ε/δ)`, the bound on the noise mass after one round.
pub fn first_round_bound(epsilon: f64, delta: f64) -> f64 {
    delta / 2.0 + 0.5 / (1.0 + 2.0 * epsilon / delta)
}

/// Last round the decay bound covers: `⌊δ/ε⌋`.
pub fn bound_horizon(epsilon: f64, delta: f64) -> usize {
    (delta / epsilon + 1e-9).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisyRound {
    pub round: usize,
    pub distribution: Distribution,
    pub hypothesis: Hypothesis,
    /// `D_t(X^δ)`.
    pub delta_t: f64,
    /// Risk on `D_t` restricted to the realizable part, `R_{D_t^δ̄}(h_t)`.
    pub realizable_risk: f64,
    /// `½·δ_t`.
    pub noisy_risk: f64,
    pub risk_on_dt: f64,
    pub risk_on_d: f64,
    /// Share of `D̄_t` on `X^δ`; absent when the run stopped at this round.
    pub error_noisy_weight: Option<f64>,
    /// `delta_lower_bound(t)` for `1 ≤ t ≤ δ/ε`.
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisyTrace {
    pub epsilon: f64,
    pub delta: f64,
    /// `δ > ε`, the premise of the concentration bounds.
    pub dominant: bool,
    pub rounds: Vec<NoisyRound>,
    pub perfect_round: Option<usize>,
}

impl NoisyTrace {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Error distribution of `h` on a (possibly) noisy instance.
pub fn noisy_error_distribution(inst: &Instance, h: &Hypothesis) -> Result<Distribution> {
    let d = inst.underlying();
    let e = error_set(h, inst);
    let noisy = inst.noisy_set();
    if noisy.is_empty() {
        return d.condition(&e);
    }
    let weights: Vec<f64> = (0..inst.size())
        .map(|x| {
            if noisy.contains(x) {
                0.5 * d.at(x)
            } else if e.contains(x) {
                d.at(x)
            } else {
                0.0
            }
        })
        .collect();
    Distribution::from_weights(weights)
}

pub fn run_noisy_path(inst: &Instance, minimizer: &mut Minimizer, rounds: usize) -> Result<NoisyTrace> {
    if rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    let d = inst.underlying();
    let noisy = inst.noisy_set();
    let delta = inst.delta();
    let epsilon = minimizer.epsilon();
    let horizon = bound_horizon(epsilon, delta.max(f64::MIN_POSITIVE));
    let realizable_part = noisy.complement();
    let mut error_dists: Vec<Distribution> = Vec::new();
    let mut out = Vec::new();
    let mut perfect_round = None;

    for t in 0..rounds {
        let weights = WeightPolicy::Uniform.weights(0, t + 1)?;
        let mut atoms: Vec<&Distribution> = vec![inst.initial()];
        atoms.extend(error_dists.iter());
        let dt = mix_atoms(&atoms, &weights)?;
        let h = minimizer.minimize(inst, &dt)?;
        let e = error_set(&h, inst);
        let delta_t = dt.prob_of(noisy);
        let clean_mass = dt.prob_of(&realizable_part);
        let realizable_risk = if clean_mass > 0.0 { dt.prob_of(&e) / clean_mass } else { 0.0 };
        let stop = noisy.is_empty() && d.prob_of(&e) == 0.0;
        let error_noisy_weight = if stop {
            None
        } else {
            let ed = noisy_error_distribution(inst, &h)?;
            let w = ed.prob_of(noisy);
            error_dists.push(ed);
            Some(w)
        };
        out.push(NoisyRound {
            round: t,
            delta_t,
            realizable_risk,
            noisy_risk: 0.5 * delta_t,
            risk_on_dt: risk_01(&h, &dt, inst),
            risk_on_d: risk_01(&h, d, inst),
            error_noisy_weight,
            bound: (t >= 1 && t <= horizon && delta > 0.0).then(|| delta_lower_bound(t, epsilon, delta)),
            distribution: dt,
            hypothesis: h,
        });
        if stop {
            perfect_round = Some(t);
            break;
        }
    }
    Ok(NoisyTrace {
        epsilon,
        delta,
        dominant: delta > epsilon,
        rounds: out,
        perfect_round,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseReport {
    /// `(1 − δ_t)·R_{D_t^δ̄}(h_t) ≤ ε` at every round.
    pub constraint_ok: bool,
    /// `δ_t ≥ delta_lower_bound(t)` for `1 ≤ t ≤ δ/ε`.
    pub decay_ok: bool,
    /// `δ_1 ≥ δ/2 + ½/(1 + 2ε/δ)` (vacuous for one-round traces).
    pub first_round_ok: bool,
    /// `D̄_t` puts `(δ/2)/(δ/2 + (1−δ)R_{D^δ̄}(h_t))` on `X^δ`.
    pub mixture_weight_ok: bool,
    pub worst_margin: f64,
}

impl NoiseReport {
    pub fn passed(&self) -> bool {
        self.constraint_ok && self.decay_ok && self.first_round_ok && self.mixture_weight_ok
    }
}

/// Checks the concentration bounds on a noisy trace.
///
/// Fails with `DeltaNotDominant` when `δ ≤ ε`: the run itself is still
/// valid, only the bounds do not apply.
pub fn check_noise_bounds(inst: &Instance, trace: &NoisyTrace) -> Result<NoiseReport> {
    if !trace.dominant {
        return Err(Error::DeltaNotDominant {
            delta: trace.delta,
            epsilon: trace.epsilon,
        });
    }
    let eps = trace.epsilon;
    let delta = trace.delta;
    let d = inst.underlying();
    let mut constraint_ok = true;
    let mut decay_ok = true;
    let mut mixture_weight_ok = true;
    let mut worst_margin = f64::INFINITY;
    for r in &trace.rounds {
        if (1.0 - r.delta_t) * r.realizable_risk > eps + BOUND_TOLERANCE {
            constraint_ok = false;
        }
        if let Some(b) = r.bound {
            worst_margin = worst_margin.min(r.delta_t - b);
            if r.delta_t < b - BOUND_TOLERANCE {
                decay_ok = false;
            }
        }
        if let Some(w) = r.error_noisy_weight {
            let clean = d.prob_of(&error_set(&r.hypothesis, inst));
            let expected = (delta / 2.0) / (delta / 2.0 + clean);
            if (w - expected).abs() > BOUND_TOLERANCE {
                mixture_weight_ok = false;
            }
        }
    }
    let first_round_ok = trace
        .rounds
        .get(1)
        .is_none_or(|r| r.delta_t >= first_round_bound(eps, delta) - BOUND_TOLERANCE);
    Ok(NoiseReport {
        constraint_ok,
        decay_ok,
        first_round_ok,
        mixture_weight_ok,
        worst_margin,
    })
}

pub const NOISY_CSV_HEADER: [&str; 6] = ["run_id", "round", "risk_ht_on_Dt", "risk_ht_on_D", "delta_t", "bound_t"];

pub fn write_noisy_csv<W: Write>(out: W, runs: &[(usize, &NoisyTrace)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(NOISY_CSV_HEADER)?;
    for (id, trace) in runs {
        for r in &trace.rounds {
            w.write_record([
                id.to_string(),
                r.round.to_string(),
                r.risk_on_dt.to_string(),
                r.risk_on_d.to_string(),
                r.delta_t.to_string(),
                r.bound.map(|b| b.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
