//! Direct updates of a real-valued score `h: X → ℝ` driven by annotator error
//! distributions: hinge-loss descent and the exponential-loss (boosting) step.
//!
//! On a finite domain every expectation, including the normaliser `Z_h`, is an
//! exact finite sum, which is what makes these updates computable here.

use std::io::Write;

use serde::Serialize;

use crate::domain::{Distribution, Hypothesis, Instance, PointSet};
use crate::error::{Error, Result};
use crate::measures::risk_01;
use crate::minimizer::Minimizer;

/// Default hinge step size.
pub const DEFAULT_HINGE_STEP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealHypothesis {
    values: Vec<f64>,
}

impl RealHypothesis {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDomain);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidHypothesis("scores must be finite".into()));
        }
        Ok(Self { values })
    }

    pub fn zeros(d: usize) -> Self {
        Self { values: vec![0.0; d] }
    }

    pub fn scaled(h: &Hypothesis, c: f64) -> Self {
        Self {
            values: h.labels().iter().map(|&l| c * l as f64).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain_size(&self) -> usize {
        self.values.len()
    }

    /// Prediction `sign(h)`, with `sign(0) = +1`.
    pub fn sign(&self) -> Hypothesis {
        Hypothesis::new(self.values.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect())
            .expect("signs are ±1")
    }

    /// `h + c·g`.
    pub fn add_scaled(&mut self, g: &Hypothesis, c: f64) {
        for (v, &l) in self.values.iter_mut().zip(g.labels()) {
            *v += c * l as f64;
        }
    }

    fn margins<'a>(&'a self, inst: &'a Instance) -> impl Iterator<Item = f64> + 'a {
        self.values
            .iter()
            .zip(inst.truth().labels())
            .map(|(&v, &y)| v * y as f64)
    }
}

fn require_realizable(inst: &Instance) -> Result<()> {
    if inst.is_realizable() {
        Ok(())
    } else {
        Err(Error::InvalidInstance("gradient updates need a realizable instance".into()))
    }
}

/// `Σ_x P(x)·max(1 − h(x)f(x), 0)`.
pub fn hinge_risk(h: &RealHypothesis, inst: &Instance, p: &Distribution) -> f64 {
    h.margins(inst).zip(p.mass()).map(|(m, &w)| w * (1.0 - m).max(0.0)).sum()
}

/// `Σ_x P(x)·exp(−h(x)f(x))`.
pub fn exp_risk(h: &RealHypothesis, inst: &Instance, p: &Distribution) -> f64 {
    h.margins(inst).zip(p.mass()).map(|(m, &w)| w * (-m).exp()).sum()
}

/// Zero-one risk of `sign(h)`.
pub fn zero_one_risk(h: &RealHypothesis, inst: &Instance, p: &Distribution) -> f64 {
    risk_01(&h.sign(), p, inst)
}

/// `{x : h(x)f(x) < 1}`.
pub fn margin_error_set(h: &RealHypothesis, inst: &Instance) -> PointSet {
    PointSet::from_mask(h.margins(inst).map(|m| m < 1.0).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HingeRecord {
    pub round: usize,
    pub hinge_before: f64,
    pub hinge_after: f64,
    /// `⟨h̄, f∘D̄_h⟩`, at least `1 − 2ε` under the oracle contract.
    pub certificate: f64,
    pub step: f64,
    pub zero_one_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HingeOutcome {
    Stepped(HingeRecord),
    /// Every point already has margin at least 1.
    Converged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HingeState {
    pub h: RealHypothesis,
    pub round: usize,
    pub history: Vec<HingeRecord>,
}

impl HingeState {
    pub fn new(d: usize) -> Self {
        Self {
            h: RealHypothesis::zeros(d),
            round: 0,
            history: Vec::new(),
        }
    }
}

/// `h ← h + η·R^hinge_D(h)·h̄` with `h̄ = A(D | E_h)`.
pub fn hinge_step(state: &mut HingeState, inst: &Instance, minimizer: &mut Minimizer, eta: f64) -> Result<HingeOutcome> {
    require_realizable(inst)?;
    let eps = minimizer.epsilon();
    if eps >= 0.5 {
        return Err(Error::Config(format!("hinge descent needs epsilon < 1/2, got {eps}")));
    }
    let d = inst.underlying();
    let e = margin_error_set(&state.h, inst);
    if d.prob_of(&e) == 0.0 {
        return Ok(HingeOutcome::Converged);
    }
    let target = d.condition(&e)?;
    let hbar = minimizer.minimize(inst, &target)?;
    let certificate: f64 = (0..inst.size())
        .map(|x| (hbar.label(x) * inst.truth().label(x)) as f64 * target.at(x))
        .sum();
    let required = 1.0 - 2.0 * eps;
    if certificate < required - 1e-9 {
        return Err(Error::DescentViolation {
            value: certificate,
            required,
        });
    }
    let before = hinge_risk(&state.h, inst, d);
    let step = eta * before;
    state.h.add_scaled(&hbar, step);
    let record = HingeRecord {
        round: state.round,
        hinge_before: before,
        hinge_after: hinge_risk(&state.h, inst, d),
        certificate,
        step,
        zero_one_after: zero_one_risk(&state.h, inst, d),
    };
    state.round += 1;
    state.history.push(record.clone());
    Ok(HingeOutcome::Stepped(record))
}

/// Up to `rounds` hinge steps; stops early on convergence.
pub fn run_hinge(inst: &Instance, minimizer: &mut Minimizer, rounds: usize, eta: f64) -> Result<HingeState> {
    let mut state = HingeState::new(inst.size());
    for _ in 0..rounds {
        if hinge_step(&mut state, inst, minimizer, eta)? == HingeOutcome::Converged {
            break;
        }
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoostRecord {
    /// 1-based count of completed steps.
    pub round: usize,
    pub weak: Hypothesis,
    pub eta: f64,
    /// `R_{D_h}(h̃)`.
    pub weak_risk: f64,
    /// `Z_h = R^exp_D(h)` before the step.
    pub z: f64,
    /// `R^exp_D(h)` after the step.
    pub exp_after: f64,
    pub zero_one_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoostOutcome {
    Stepped(BoostRecord),
    /// The weak learner was exact on `D_h`; it is returned as the final classifier.
    PerfectWeakLearner(Hypothesis),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoostState {
    pub h: RealHypothesis,
    pub round: usize,
    pub history: Vec<BoostRecord>,
}

impl BoostState {
    pub fn new(d: usize) -> Self {
        Self {
            h: RealHypothesis::zeros(d),
            round: 0,
            history: Vec::new(),
        }
    }
}

/// `D_h(x) ∝ D(x)·exp(−h(x)f(x))` and its normaliser `Z_h`.
pub fn reweight(h: &RealHypothesis, inst: &Instance) -> Result<(Distribution, f64)> {
    let d = inst.underlying();
    let w: Vec<f64> = h.margins(inst).zip(d.mass()).map(|(m, &p)| p * (-m).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok((Distribution::from_weights(w)?, z))
}

/// One exponential-loss step with the optimal size `η = ½·ln(1/r − 1)`.
pub fn boost_step(state: &mut BoostState, inst: &Instance, minimizer: &mut Minimizer) -> Result<BoostOutcome> {
    require_realizable(inst)?;
    let eps = minimizer.epsilon();
    if eps >= 0.5 {
        return Err(Error::Config(format!("boosting needs epsilon < 1/2, got {eps}")));
    }
    let (dh, z) = reweight(&state.h, inst)?;
    let weak = minimizer.minimize(inst, &dh)?;
    let r = risk_01(&weak, &dh, inst);
    if r == 0.0 {
        return Ok(BoostOutcome::PerfectWeakLearner(weak));
    }
    if r >= 0.5 {
        return Err(Error::StalledWeakLearner { risk: r });
    }
    let eta = 0.5 * (1.0 / r - 1.0).ln();
    state.h.add_scaled(&weak, eta);
    state.round += 1;
    let d = inst.underlying();
    let record = BoostRecord {
        round: state.round,
        eta,
        weak_risk: r,
        z,
        exp_after: exp_risk(&state.h, inst, d),
        zero_one_after: zero_one_risk(&state.h, inst, d),
        weak,
    };
    state.history.push(record.clone());
    Ok(BoostOutcome::Stepped(record))
}

/// Rate bound `exp(−(1−2ε)²·t/2)` on the zero-one risk after `t` steps.
pub fn boost_rate_bound(epsilon: f64, t: usize) -> f64 {
    (-(1.0 - 2.0 * epsilon).powi(2) * t as f64 / 2.0).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoostRun {
    pub epsilon: f64,
    pub state: BoostState,
    /// Step at which the weak learner was exact, and that learner.
    pub perfect: Option<(usize, Hypothesis)>,
    /// Zero-one risk of the current classifier after steps `1..`.
    pub risks: Vec<f64>,
    pub bounds: Vec<f64>,
    /// Every round has risk within the rate bound.
    pub rate_ok: bool,
    /// Every step has `R^exp_post = 2·Z·√(r(1−r))` within 1e−9.
    pub contraction_ok: bool,
}

pub fn run_boost(inst: &Instance, minimizer: &mut Minimizer, rounds: usize) -> Result<BoostRun> {
    let mut state = BoostState::new(inst.size());
    let mut perfect = None;
    let mut risks = Vec::new();
    for t in 1..=rounds {
        match boost_step(&mut state, inst, minimizer)? {
            BoostOutcome::Stepped(r) => risks.push(r.zero_one_after),
            BoostOutcome::PerfectWeakLearner(h) => {
                risks.push(risk_01(&h, inst.underlying(), inst));
                perfect = Some((t, h));
                break;
            }
        }
    }
    let eps = minimizer.epsilon();
    let bounds: Vec<f64> = (1..=risks.len()).map(|t| boost_rate_bound(eps, t)).collect();
    let rate_ok = risks.iter().zip(&bounds).all(|(r, b)| *r <= b + 1e-12);
    let contraction_ok = state.history.iter().all(|s| {
        let predicted = 2.0 * s.z * (s.weak_risk * (1.0 - s.weak_risk)).sqrt();
        (s.exp_after - predicted).abs() <= 1e-9
    });
    Ok(BoostRun {
        epsilon: eps,
        state,
        perfect,
        risks,
        bounds,
        rate_ok,
        contraction_ok,
    })
}

pub const BOOST_CSV_HEADER: [&str; 7] = ["run_id", "round", "zero_one_risk", "surrogate_risk", "eta", "weak_risk", "Z"];

/// One row per completed step; a terminal exact step is written with empty
/// step columns.
pub fn write_boost_csv<W: Write>(out: W, runs: &[(usize, &BoostRun)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BOOST_CSV_HEADER)?;
    for (id, run) in runs {
        for s in &run.state.history {
            w.write_record([
                id.to_string(),
                s.round.to_string(),
                s.zero_one_after.to_string(),
                s.exp_after.to_string(),
                s.eta.to_string(),
                s.weak_risk.to_string(),
                s.z.to_string(),
            ])?;
        }
        if let Some((t, _)) = &run.perfect {
            w.write_record([id.to_string(), t.to_string(), "0".into(), String::new(), String::new(), "0".into(), String::new()])?;
        }
    }
    w.flush()?;
    Ok(())
}
