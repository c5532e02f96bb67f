//! Risk, error sets, weighted majority votes and the H∆H distance.

use serde::Serialize;

use crate::domain::{check_weights, Distribution, Hypothesis, HypothesisClass, Instance, PointSet};
use crate::error::{Error, Result};

/// Realizable-part disagreement set `{x ∉ X^δ : h(x) ≠ f(x)}`.
///
/// Points of the randomly labeled subset never appear here; their risk
/// contribution is carried analytically by [`risk_01`].
pub fn error_set(h: &Hypothesis, inst: &Instance) -> PointSet {
    let noisy = inst.noisy_set();
    PointSet::from_mask(
        h.labels()
            .iter()
            .zip(inst.truth().labels())
            .enumerate()
            .map(|(x, (a, b))| a != b && !noisy.contains(x))
            .collect(),
    )
}

/// Zero-one risk of `h` under `p`: disagreement mass outside `X^δ` plus
/// one half of the mass on `X^δ`.
pub fn risk_01(h: &Hypothesis, p: &Distribution, inst: &Instance) -> f64 {
    let noisy = inst.noisy_set();
    let f = inst.truth().labels();
    let mut realizable = 0.0;
    let mut random = 0.0;
    for (x, &m) in p.mass().iter().enumerate() {
        if noisy.contains(x) {
            random += m;
        } else if h.label(x) != f[x] {
            realizable += m;
        }
    }
    realizable + 0.5 * random
}

/// `Pr_D(E_{h1} ∩ E_{h2})`.
pub fn joint_error_mass(h1: &Hypothesis, h2: &Hypothesis, inst: &Instance) -> f64 {
    let joint = error_set(h1, inst).intersection(&error_set(h2, inst));
    inst.underlying().prob_of(&joint)
}

/// Weighted majority vote over ±1 hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleVote {
    members: Vec<Hypothesis>,
    weights: Vec<f64>,
}

impl EnsembleVote {
    pub fn new(members: Vec<Hypothesis>, weights: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidHypothesis("empty ensemble".into()));
        }
        if members.len() != weights.len() {
            return Err(Error::WeightShape {
                expected: members.len(),
                found: weights.len(),
            });
        }
        check_weights(&weights)?;
        let d = members[0].domain_size();
        if let Some(h) = members.iter().find(|h| h.domain_size() != d) {
            return Err(Error::DomainMismatch {
                expected: d,
                found: h.domain_size(),
            });
        }
        Ok(Self { members, weights })
    }

    pub fn uniform(members: Vec<Hypothesis>) -> Result<Self> {
        let n = members.len().max(1);
        Self::new(members, vec![1.0 / n as f64; n])
    }

    pub fn members(&self) -> &[Hypothesis] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Per-point vote; a zero score resolves to +1.
    pub fn majority(&self) -> Hypothesis {
        let d = self.members[0].domain_size();
        let labels = (0..d)
            .map(|x| {
                let score: f64 = self
                    .members
                    .iter()
                    .zip(&self.weights)
                    .map(|(h, w)| w * f64::from(h.label(x)))
                    .sum();
                if score >= 0.0 {
                    1
                } else {
                    -1
                }
            })
            .collect();
        Hypothesis::new(labels).expect("votes are ±1")
    }
}

pub fn majority(vote: &EnsembleVote) -> Hypothesis {
    vote.majority()
}

/// Majority over `members` with `weights` renormalized; all-zero weights
/// fall back to a uniform vote.
pub fn majority_with(members: &[Hypothesis], weights: &[f64]) -> Result<Hypothesis> {
    let sum: f64 = weights.iter().sum();
    let weights = if sum > 0.0 {
        weights.iter().map(|w| w / sum).collect()
    } else {
        vec![1.0 / members.len() as f64; members.len()]
    };
    Ok(EnsembleVote::new(members.to_vec(), weights)?.majority())
}

/// `sup_{h,h′∈H} |P1(h ≠ h′) − P2(h ≠ h′)|`.
///
/// Uses the total-variation closed form for the complete class and pair
/// enumeration otherwise.
pub fn hdh_distance(p1: &Distribution, p2: &Distribution, class: &HypothesisClass) -> Result<f64> {
    match class {
        HypothesisClass::Complete { .. } => p1.total_variation(p2),
        _ => hdh_distance_by_pairs(p1, p2, class),
    }
}

/// Pair-enumeration route for any enumerable class.
pub fn hdh_distance_by_pairs(
    p1: &Distribution,
    p2: &Distribution,
    class: &HypothesisClass,
) -> Result<f64> {
    if p1.domain_size() != p2.domain_size() {
        return Err(Error::DomainMismatch {
            expected: p1.domain_size(),
            found: p2.domain_size(),
        });
    }
    let members: Vec<Hypothesis> = class.enumerate()?.collect();
    let diff: Vec<f64> = p1.mass().iter().zip(p2.mass()).map(|(a, b)| a - b).collect();
    let mut best = 0.0f64;
    for (i, h) in members.iter().enumerate() {
        for g in &members[i + 1..] {
            let gap: f64 = h
                .labels()
                .iter()
                .zip(g.labels())
                .zip(&diff)
                .filter(|((a, b), _)| a != b)
                .map(|(_, d)| d)
                .sum();
            best = best.max(gap.abs());
        }
    }
    Ok(best)
}
