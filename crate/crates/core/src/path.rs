//! The path dynamic benchmark: one chain of rounds, each mixing the initial
//! distribution with every error distribution collected so far.
//!
//! ```text
//! h_t     = A(D_t)
//! D̄_t     = D | E_t
//! D_{t+1} = mix(D_0, D̄_0, ..., D̄_t)
//! ```

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{mix, Distribution, Hypothesis, Instance, PointSet};
use crate::error::{Error, Result};
use crate::measures::{error_set, hdh_distance, majority_with, risk_01};
use crate::minimizer::{verify_eps_consistency, Minimizer};

/// How a sequence of weight vectors is chosen.
///
/// `Explicit` holds one vector per use, consumed in execution order; vector
/// `i` must have exactly as many entries as components at use `i`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    #[default]
    Uniform,
    Explicit(Vec<Vec<f64>>),
}

impl WeightPolicy {
    /// Weight vector for the `use_index`-th use over `n` components.
    pub fn weights(&self, use_index: usize, n: usize) -> Result<Vec<f64>> {
        match self {
            WeightPolicy::Uniform => Ok(vec![1.0 / n as f64; n]),
            WeightPolicy::Explicit(schedule) => {
                let w = schedule.get(use_index).ok_or_else(|| {
                    Error::Config(format!("weight schedule has no entry for use {use_index}"))
                })?;
                if w.len() != n {
                    return Err(Error::WeightShape {
                        expected: n,
                        found: w.len(),
                    });
                }
                Ok(w.clone())
            }
        }
    }
}

/// A point drawn uniformly from the `n`-simplex (normalised exponentials).
pub fn random_simplex<R: rand::Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Random mixture schedule for a path run of `rounds` rounds.
pub fn random_path_schedule<R: rand::Rng>(rng: &mut R, rounds: usize) -> Vec<Vec<f64>> {
    (1..rounds).map(|t| random_simplex(rng, t + 1)).collect()
}

/// Mixture over `atoms` with `weights`; a single atom is returned unchanged so
/// the first round's distribution is bit-identical to `D_0`.
pub(crate) fn mix_atoms(atoms: &[&Distribution], weights: &[f64]) -> Result<Distribution> {
    if atoms.len() == 1 && weights.len() == 1 {
        crate::domain::check_weights(weights)?;
        return Ok(atoms[0].clone());
    }
    mix(atoms, weights)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub rounds: usize,
    /// Round `t ≥ 1` uses entry `t − 1`: `[w_{t,0}, w̄_{t,0}, ..., w̄_{t,t−1}]`.
    #[serde(default)]
    pub mixture: WeightPolicy,
    /// Prefix `t` uses entry `t`: weights over `h_0..h_t`.
    #[serde(default)]
    pub majority: WeightPolicy,
}

impl PathConfig {
    pub fn uniform(rounds: usize) -> Self {
        Self {
            rounds,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRound {
    pub round: usize,
    pub distribution: Distribution,
    /// Weights that produced `distribution` (`[1.0]` for round 0).
    pub mixture_weights: Vec<f64>,
    pub hypothesis: Hypothesis,
    pub error_set: PointSet,
    pub risk_on_dt: f64,
    pub risk_on_d: f64,
    /// Risk on `D` of the majority over `h_0..h_t`.
    pub majority_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkTrace {
    pub epsilon: f64,
    pub planned_rounds: usize,
    pub rounds: Vec<PathRound>,
    /// Round whose error set had zero `D`-mass, ending the run.
    pub perfect_round: Option<usize>,
}

impl BenchmarkTrace {
    pub fn hypotheses(&self) -> Vec<Hypothesis> {
        self.rounds.iter().map(|r| r.hypothesis.clone()).collect()
    }

    pub fn final_majority_risk(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.majority_risk)
    }

    /// Risk on `D` of the benchmark's output: the full majority, or the
    /// perfect classifier that ended the run early.
    pub fn output_risk(&self) -> f64 {
        if self.perfect_round.is_some() {
            0.0
        } else {
            self.final_majority_risk()
        }
    }

    /// Majority-risk series padded to `planned_rounds` with [`Self::output_risk`].
    pub fn padded_majority_series(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.rounds.iter().map(|r| r.majority_risk).collect();
        s.resize(self.planned_rounds, self.output_risk());
        s
    }

    /// Re-checks every recorded step against the ε contract.
    pub fn verify(&self, inst: &Instance) -> Result<bool> {
        for r in &self.rounds {
            if !verify_eps_consistency(&r.distribution, &r.hypothesis, inst, self.epsilon)?.consistent {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Risk on `D` of the weighted majority over every recorded round.
    pub fn majority_risk_with(&self, inst: &Instance, weights: &[f64]) -> Result<f64> {
        let m = majority_with(&self.hypotheses(), weights)?;
        Ok(risk_01(&m, inst.underlying(), inst))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn run_path(inst: &Instance, minimizer: &mut Minimizer, cfg: &PathConfig) -> Result<BenchmarkTrace> {
    if !inst.is_realizable() {
        return Err(Error::InvalidInstance(
            "path runs need a realizable instance; use the noisy engine".into(),
        ));
    }
    if cfg.rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    let d = inst.underlying();
    let mut error_dists: Vec<Distribution> = Vec::new();
    let mut hyps: Vec<Hypothesis> = Vec::new();
    let mut rounds = Vec::new();
    let mut perfect_round = None;

    for t in 0..cfg.rounds {
        let weights = if t == 0 {
            vec![1.0]
        } else {
            cfg.mixture.weights(t - 1, t + 1)?
        };
        let mut atoms: Vec<&Distribution> = vec![inst.initial()];
        atoms.extend(error_dists.iter());
        let dt = mix_atoms(&atoms, &weights)?;

        let h = minimizer.minimize(inst, &dt)?;
        let e = error_set(&h, inst);
        hyps.push(h.clone());
        let maj = majority_with(&hyps, &cfg.majority.weights(t, t + 1)?)?;
        rounds.push(PathRound {
            round: t,
            risk_on_dt: risk_01(&h, &dt, inst),
            risk_on_d: risk_01(&h, d, inst),
            majority_risk: risk_01(&maj, d, inst),
            distribution: dt,
            mixture_weights: weights,
            hypothesis: h,
            error_set: e.clone(),
        });
        if d.prob_of(&e) == 0.0 {
            perfect_round = Some(t);
            break;
        }
        error_dists.push(d.condition(&e)?);
    }

    Ok(BenchmarkTrace {
        epsilon: minimizer.epsilon(),
        planned_rounds: cfg.rounds,
        rounds,
        perfect_round,
    })
}

fn bad_count(trace: &BenchmarkTrace, alpha: f64) -> usize {
    trace.rounds.iter().filter(|r| r.risk_on_d > alpha).count()
}

/// At most `1/α` classifiers of a perfect-minimizer trace have risk above `α`.
pub fn check_bad_round_count(trace: &BenchmarkTrace, alpha: f64) -> bool {
    bad_count(trace, alpha) as f64 <= 1.0 / alpha
}

/// A uniformly drawn round is `α`-bad with probability at most `δ`.
///
/// Intended for perfect-minimizer traces with `planned_rounds ≥ 1/(δα)`;
/// rounds skipped after an early stop count as good.
pub fn check_random_pick(trace: &BenchmarkTrace, alpha: f64, delta: f64) -> bool {
    (bad_count(trace, alpha) as f64) / (trace.planned_rounds as f64) <= delta
}

/// Outcome of comparing a measured risk against a closed-form bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub value: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Risk on `D` of the uniform majority over the first three rounds, padding
/// an early-stopped trace with its final (perfect) classifier.
pub fn first_three_majority_risk(inst: &Instance, trace: &BenchmarkTrace) -> Result<f64> {
    let mut hs = trace.hypotheses();
    if hs.len() < 3 {
        if trace.perfect_round.is_none() {
            return Err(Error::Config("trace needs at least three rounds".into()));
        }
        let last = hs.last().cloned().ok_or_else(|| Error::Config("empty trace".into()))?;
        hs.resize(3, last);
    }
    hs.truncate(3);
    let m = majority_with(&hs, &[1.0 / 3.0; 3])?;
    Ok(risk_01(&m, inst.underlying(), inst))
}

/// `R_D(maj(h_0, h_1, h_2)) ≤ 11ε² + 8ε·d_{HΔH}(D_0, D)`.
pub fn check_path_bound(inst: &Instance, trace: &BenchmarkTrace) -> Result<BoundCheck> {
    let eps = trace.epsilon;
    let shift = hdh_distance(inst.initial(), inst.underlying(), inst.class())?;
    let value = first_three_majority_risk(inst, trace)?;
    let bound = 11.0 * eps * eps + 8.0 * eps * shift;
    Ok(BoundCheck {
        value,
        bound,
        holds: value <= bound + 1e-12,
    })
}

pub const PATH_CSV_HEADER: [&str; 6] = [
    "run_id",
    "round",
    "risk_ht_on_Dt",
    "risk_ht_on_D",
    "maj_risk",
    "perfect_round",
];

fn opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV row per recorded round of every trace.
pub fn write_path_csv<W: Write>(out: W, runs: &[(usize, &BenchmarkTrace)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PATH_CSV_HEADER)?;
    for (id, trace) in runs {
        for r in &trace.rounds {
            w.write_record([
                id.to_string(),
                r.round.to_string(),
                r.risk_on_dt.to_string(),
                r.risk_on_d.to_string(),
                r.majority_risk.to_string(),
                opt(trace.perfect_round),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
