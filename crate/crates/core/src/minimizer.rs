//! The ε-approximate risk minimizer oracle.
//!
//! Every call returns `h ∈ H` with `R_P(h) ≤ min_{h′∈H} R_P(h′) + ε`, and the
//! contract is re-checked on the returned hypothesis before it leaves
//! [`Minimizer::minimize`].

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Distribution, Hypothesis, HypothesisClass, Instance, PointSet};
use crate::error::{Error, Result};
use crate::measures::{error_set, risk_01};

/// Float slack on the `min + ε` boundary. The boundary itself is inclusive.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MinimizerMode {
    /// Exact argmin, ties broken by lowest enumeration index.
    Perfect,
    /// Uniform draw from the ε-feasible set (constructive sampler on complete classes).
    Random { seed: u64 },
    /// Feasible hypothesis erring on as much of `target` as possible.
    Adversarial { target: Vec<usize> },
    /// Replays a fixed sequence, rejecting infeasible entries.
    Scripted { sequence: Vec<Hypothesis> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerSpec {
    pub epsilon: f64,
    #[serde(flatten)]
    pub mode: MinimizerMode,
}

impl MinimizerSpec {
    pub fn perfect() -> Self {
        Self {
            epsilon: 0.0,
            mode: MinimizerMode::Perfect,
        }
    }

    pub fn random(epsilon: f64, seed: u64) -> Self {
        Self {
            epsilon,
            mode: MinimizerMode::Random { seed },
        }
    }

    pub fn adversarial(epsilon: f64, target: Vec<usize>) -> Self {
        Self {
            epsilon,
            mode: MinimizerMode::Adversarial { target },
        }
    }

    pub fn scripted(epsilon: f64, sequence: Vec<Hypothesis>) -> Self {
        Self {
            epsilon,
            mode: MinimizerMode::Scripted { sequence },
        }
    }

    /// Same spec with the random seed replaced; other modes are unchanged.
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut spec = self.clone();
        if let MinimizerMode::Random { seed: s } = &mut spec.mode {
            *s = seed;
        }
        spec
    }
}

/// Result of checking one `(P, h)` step against the ε contract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub consistent: bool,
    pub risk: f64,
    pub minimum: f64,
    pub epsilon: f64,
}

/// `min_{h∈H} R_P(h)`.
///
/// When `f ∈ H` the minimum is attained by `f` (realizable part zero, random
/// part fixed), so no enumeration is needed.
pub fn min_risk(inst: &Instance, p: &Distribution) -> Result<f64> {
    if inst.class().contains(inst.truth()) {
        return Ok(risk_01(inst.truth(), p, inst));
    }
    let mut best = f64::INFINITY;
    for h in inst.class().enumerate()? {
        best = best.min(risk_01(&h, p, inst));
    }
    Ok(best)
}

/// `{h ∈ H : R_P(h) ≤ min + ε}` in enumeration order.
pub fn eps_feasible_set(inst: &Instance, p: &Distribution, epsilon: f64) -> Result<Vec<Hypothesis>> {
    let scored: Vec<(Hypothesis, f64)> = inst
        .class()
        .enumerate()?
        .map(|h| {
            let r = risk_01(&h, p, inst);
            (h, r)
        })
        .collect();
    let minimum = scored.iter().map(|(_, r)| *r).fold(f64::INFINITY, f64::min);
    Ok(scored
        .into_iter()
        .filter(|(_, r)| *r <= minimum + epsilon + FEASIBILITY_SLACK)
        .map(|(h, _)| h)
        .collect())
}

pub fn verify_eps_consistency(
    p: &Distribution,
    h: &Hypothesis,
    inst: &Instance,
    epsilon: f64,
) -> Result<ConsistencyReport> {
    let minimum = min_risk(inst, p)?;
    let risk = risk_01(h, p, inst);
    Ok(ConsistencyReport {
        consistent: inst.class().contains(h) && risk <= minimum + epsilon + FEASIBILITY_SLACK,
        risk,
        minimum,
        epsilon,
    })
}

/// Stateful oracle: owns the call counter and the seeded RNG.
#[derive(Debug, Clone)]
pub struct Minimizer {
    spec: MinimizerSpec,
    calls: usize,
    rng: ChaCha8Rng,
}

impl Minimizer {
    pub fn new(spec: MinimizerSpec) -> Result<Self> {
        if !(0.0..1.0).contains(&spec.epsilon) {
            return Err(Error::Config(format!(
                "epsilon {} must lie in [0, 1)",
                spec.epsilon
            )));
        }
        if let MinimizerMode::Scripted { sequence } = &spec.mode {
            if sequence.is_empty() {
                return Err(Error::Config("scripted sequence is empty".into()));
            }
        }
        let seed = match spec.mode {
            MinimizerMode::Random { seed } => seed,
            _ => 0,
        };
        Ok(Self {
            spec,
            calls: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn spec(&self) -> &MinimizerSpec {
        &self.spec
    }

    pub fn epsilon(&self) -> f64 {
        self.spec.epsilon
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn minimize(&mut self, inst: &Instance, p: &Distribution) -> Result<Hypothesis> {
        if p.domain_size() != inst.size() {
            return Err(Error::DomainMismatch {
                expected: inst.size(),
                found: p.domain_size(),
            });
        }
        let call = self.calls;
        self.calls += 1;
        let epsilon = self.spec.epsilon;
        let h = match &self.spec.mode {
            MinimizerMode::Perfect => perfect(inst, p)?,
            MinimizerMode::Random { .. } => random_feasible(inst, p, epsilon, &mut self.rng)?,
            MinimizerMode::Adversarial { target } => {
                let target = PointSet::from_indices(inst.size(), target.iter().copied())?;
                adversarial(inst, p, epsilon, &target)?
            }
            MinimizerMode::Scripted { sequence } => {
                let h = sequence
                    .get(call)
                    .cloned()
                    .ok_or(Error::ScriptExhausted(call))?;
                let report = verify_eps_consistency(p, &h, inst, epsilon)?;
                if !report.consistent {
                    return Err(Error::InfeasibleScript {
                        call,
                        achieved: report.risk,
                        minimum: report.minimum,
                        epsilon,
                    });
                }
                return Ok(h);
            }
        };
        let report = verify_eps_consistency(p, &h, inst, epsilon)?;
        if !report.consistent {
            return Err(Error::OracleContract {
                achieved: report.risk,
                minimum: report.minimum,
                epsilon,
            });
        }
        Ok(h)
    }
}

fn is_complete(inst: &Instance) -> bool {
    matches!(inst.class(), HypothesisClass::Complete { .. })
}

fn perfect(inst: &Instance, p: &Distribution) -> Result<Hypothesis> {
    if is_complete(inst) {
        // lowest-index argmin: agree with f on the realizable support, +1 elsewhere
        let noisy = inst.noisy_set();
        let labels = (0..inst.size())
            .map(|x| {
                if p.at(x) > 0.0 && !noisy.contains(x) {
                    inst.truth().label(x)
                } else {
                    1
                }
            })
            .collect();
        return Hypothesis::new(labels);
    }
    let mut best: Option<(Hypothesis, f64)> = None;
    for h in inst.class().enumerate()? {
        let r = risk_01(&h, p, inst);
        if best.as_ref().is_none_or(|(_, b)| r < *b) {
            best = Some((h, r));
        }
    }
    Ok(best.expect("class is non-empty").0)
}

fn random_feasible(
    inst: &Instance,
    p: &Distribution,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Hypothesis> {
    if !is_complete(inst) {
        let feasible = eps_feasible_set(inst, p, epsilon)?;
        let i = rng.random_range(0..feasible.len());
        return Ok(feasible[i].clone());
    }
    let mut order: Vec<usize> = (0..inst.size()).collect();
    order.shuffle(rng);
    let noisy = inst.noisy_set();
    let mut labels = inst.truth().labels().to_vec();
    let mut spent = 0.0;
    for x in order {
        let m = p.at(x);
        if m == 0.0 || noisy.contains(x) {
            if rng.random::<bool>() {
                labels[x] = -labels[x];
            }
        } else if spent + m <= epsilon {
            labels[x] = -labels[x];
            spent += m;
        }
    }
    Hypothesis::new(labels)
}

/// On complete classes: flip every free point, then greedily flip on-support
/// target points and finally other on-support points, each phase in order of
/// decreasing `D(x)/P(x)`, while the flipped `P`-mass stays within ε.
fn adversarial(
    inst: &Instance,
    p: &Distribution,
    epsilon: f64,
    target: &PointSet,
) -> Result<Hypothesis> {
    let d_mass = inst.underlying();
    if !is_complete(inst) {
        let feasible = eps_feasible_set(inst, p, epsilon)?;
        let score = |h: &Hypothesis| {
            let e = error_set(h, inst);
            (d_mass.prob_of(&e.intersection(target)), d_mass.prob_of(&e))
        };
        let mut best = &feasible[0];
        let mut best_score = score(best);
        for h in &feasible[1..] {
            let s = score(h);
            let better = match cmp_with_tol(s.0, best_score.0) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => cmp_with_tol(s.1, best_score.1) == Ordering::Greater,
            };
            if better {
                best = h;
                best_score = s;
            }
        }
        return Ok(best.clone());
    }

    let noisy = inst.noisy_set();
    let mut labels = inst.truth().labels().to_vec();
    let mut on_support = Vec::new();
    for (x, label) in labels.iter_mut().enumerate() {
        if noisy.contains(x) {
            continue;
        }
        if p.at(x) == 0.0 {
            *label = -*label;
        } else {
            on_support.push(x);
        }
    }
    let ratio = |x: usize| d_mass.at(x) / p.at(x);
    let mut spent = 0.0;
    for want_target in [true, false] {
        let mut phase: Vec<usize> = on_support
            .iter()
            .copied()
            .filter(|&x| target.contains(x) == want_target)
            .collect();
        phase.sort_by(|&a, &b| ratio(b).total_cmp(&ratio(a)).then(a.cmp(&b)));
        for x in phase {
            let m = p.at(x);
            if spent + m <= epsilon {
                labels[x] = -labels[x];
                spent += m;
            }
        }
    }
    Hypothesis::new(labels)
}

fn cmp_with_tol(a: f64, b: f64) -> Ordering {
    if (a - b).abs() <= 1e-15 {
        Ordering::Equal
    } else {
        a.total_cmp(&b)
    }
}
