//! Explicit ε-consistent classifier sequences whose majority keeps a fixed
//! error mass, for the path and the depth-2 hierarchical designs.
//!
//! Block layouts are written in 1-based coordinates on the ordered domain,
//! `(a, b]` meaning points `a+1..=b`, and stored 0-based.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{Distribution, FiniteDomain, Hypothesis, HypothesisClass, Instance, PointSet};
use crate::error::{Error, Result};
use crate::hier::{HierConfig, HierTrace};
use crate::measures::{error_set, majority_with, risk_01};
use crate::minimizer::{verify_eps_consistency, MinimizerSpec};
use crate::path::{BenchmarkTrace, PathConfig, WeightPolicy};

/// Agreement slack between closed-form and engine-computed risks.
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-9;

/// `1/ε` when it is an integer of at least 2.
pub fn inverse_epsilon(epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    let inv = 1.0 / epsilon;
    let n = inv.round();
    if (inv - n).abs() > 1e-9 || n < 2.0 {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    Ok(n as usize)
}

/// 1-based `[1, b]`.
fn prefix(b: usize) -> std::ops::Range<usize> {
    0..b
}

/// 1-based `(a, b]`.
fn open_closed(a: usize, b: usize) -> std::ops::Range<usize> {
    a..b
}

fn set_of(d: usize, ranges: &[std::ops::Range<usize>]) -> Result<PointSet> {
    PointSet::from_indices(d, ranges.iter().flat_map(|r| r.clone()))
}

/// Maximal runs of a set as 1-based closed intervals.
pub fn runs_one_based(set: &PointSet) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for x in 0..=set.domain_size() {
        let inside = x < set.domain_size() && set.contains(x);
        match (inside, start) {
            (true, None) => start = Some(x),
            (false, Some(s)) => {
                out.push((s + 1, x));
                start = None;
            }
            _ => {}
        }
    }
    out
}

fn describe(set: &PointSet) -> String {
    runs_one_based(set)
        .iter()
        .map(|&(a, b)| if a == b { format!("{{{a}}}") } else { format!("[{a},{b}]") })
        .collect::<Vec<_>>()
        .join(" ∪ ")
}

fn bar(set: &PointSet) -> String {
    (0..set.domain_size()).map(|x| if set.contains(x) { '#' } else { '.' }).collect()
}

fn layout(rows: &[(String, &PointSet)], d: usize) -> String {
    let width = rows.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    for (name, set) in rows {
        let pad = width - name.chars().count();
        if d <= 80 {
            let _ = writeln!(out, "{name}{} |{}| {}", " ".repeat(pad), bar(set), describe(set));
        } else {
            let _ = writeln!(out, "{name}{} {}", " ".repeat(pad), describe(set));
        }
    }
    out
}

/// Reassignment of a late round to the least-loaded early block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiEntry {
    pub round: usize,
    /// Total mixture weight already placed on each early block's error distribution.
    pub tallies: Vec<f64>,
    pub choice: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathWitness {
    pub epsilon: f64,
    pub d: usize,
    pub k: usize,
    pub k_prime: usize,
    /// Number of distinct blocks, `2/ε`.
    pub horizon: usize,
    pub rounds: usize,
    pub common: PointSet,
    /// `K_0 .. K_{horizon−1}`.
    pub blocks: Vec<PointSet>,
    /// Block flipped by `h_t`, for every round.
    pub assignment: Vec<usize>,
    pub phi: Vec<PhiEntry>,
    /// Mixture weights of rounds `1..rounds`.
    pub schedule: Vec<Vec<f64>>,
}

impl PathWitness {
    pub fn hypothesis(&self, t: usize) -> Hypothesis {
        Hypothesis::constant(self.d, 1).flipped_on(&self.blocks[self.assignment[t]])
    }

    /// `w_{t,0}·D_0(K_t) + Σ_{t′<t} w̄_{t,t′}·D(K_t ∩ K_{t′})/D(K_{t′})`.
    pub fn closed_form_risk(&self, inst: &Instance, t: usize) -> f64 {
        let d = inst.underlying();
        let kt = &self.blocks[self.assignment[t]];
        if t == 0 {
            return inst.initial().prob_of(kt);
        }
        let w = &self.schedule[t - 1];
        let mut total = w[0] * inst.initial().prob_of(kt);
        for tp in 0..t {
            let kp = &self.blocks[self.assignment[tp]];
            total += w[tp + 1] * d.prob_of(&kt.intersection(kp)) / d.prob_of(kp);
        }
        total
    }

    /// Aligned text of the block layout in 1-based coordinates.
    pub fn layout_text(&self) -> String {
        let mut rows: Vec<(String, &PointSet)> = vec![("K".into(), &self.common)];
        for (t, b) in self.blocks.iter().enumerate() {
            rows.push((format!("K_{t}"), b));
        }
        let mut out = format!(
            "path witness: eps={} d={} k={} k'={} T={} rounds={}\n",
            self.epsilon, self.d, self.k, self.k_prime, self.horizon, self.rounds
        );
        out.push_str(&layout(&rows, self.d));
        for e in &self.phi {
            let _ = writeln!(out, "phi({}) = {}", e.round, e.choice);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct PathWitnessBuild {
    pub witness: PathWitness,
    pub instance: Instance,
    pub minimizer: MinimizerSpec,
    pub config: PathConfig,
}

/// Builds the path witness for `1/ε ∈ ℕ` with `d = 8/ε²` and uniform `D`.
///
/// `initial` defaults to uniform and must be ascending with `D_0(K_t) ≤ ε/2`
/// for every block. The mixture policy fixes the weights the reassignment of
/// rounds `t ≥ 2/ε` is computed against; the returned config replays it.
pub fn build_path_witness(
    epsilon: f64,
    rounds: usize,
    initial: Option<Distribution>,
    mixture: WeightPolicy,
) -> Result<PathWitnessBuild> {
    let n = inverse_epsilon(epsilon)?;
    if rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    let d = 8 * n * n;
    let k = 1;
    let k_prime = 2 * n;
    let horizon = 2 * n;
    let domain = FiniteDomain::new(d)?;
    let under = Distribution::uniform(domain);
    let initial = initial.unwrap_or_else(|| under.clone());
    if initial.domain_size() != d {
        return Err(Error::DomainMismatch {
            expected: d,
            found: initial.domain_size(),
        });
    }
    if !initial.is_ascending() {
        return Err(Error::WitnessInfeasible(
            "initial distribution must be ascending in index order".into(),
        ));
    }

    let common = set_of(d, &[prefix(k)])?;
    let mut blocks = vec![set_of(d, &[prefix(k_prime)])?];
    let step = k_prime - k;
    for t in 1..horizon {
        blocks.push(set_of(
            d,
            &[prefix(k), open_closed(k_prime + (t - 1) * step, k_prime + t * step)],
        )?);
    }
    for (t, b) in blocks.iter().enumerate() {
        let m = initial.prob_of(b);
        if m > epsilon / 2.0 + 1e-12 {
            return Err(Error::WitnessInfeasible(format!(
                "initial mass {m} of block {t} exceeds eps/2"
            )));
        }
    }

    let schedule: Vec<Vec<f64>> = (1..rounds)
        .map(|t| mixture.weights(t - 1, t + 1))
        .collect::<Result<_>>()?;
    for w in &schedule {
        crate::domain::check_weights(w)?;
    }

    let mut assignment: Vec<usize> = (0..rounds.min(horizon)).collect();
    let mut phi = Vec::new();
    for t in horizon..rounds {
        let w = &schedule[t - 1];
        let mut tallies: Vec<f64> = (0..horizon).map(|tau| w[tau + 1]).collect();
        for tp in horizon..t {
            tallies[assignment[tp]] += w[tp + 1];
        }
        let mut choice = 0;
        for tau in 1..horizon {
            if tallies[tau] < tallies[choice] {
                choice = tau;
            }
        }
        assignment.push(choice);
        phi.push(PhiEntry {
            round: t,
            tallies,
            choice,
        });
    }

    let witness = PathWitness {
        epsilon,
        d,
        k,
        k_prime,
        horizon,
        rounds,
        common,
        blocks,
        assignment,
        phi,
        schedule,
    };
    let f = Hypothesis::constant(d, 1);
    let sequence: Vec<Hypothesis> = (0..rounds).map(|t| witness.hypothesis(t)).collect();
    let mut members = vec![f.clone()];
    members.extend(sequence.iter().take(horizon).cloned());
    let instance = Instance::new(under, initial, f, HypothesisClass::explicit(members)?, PointSet::empty(d))?;
    Ok(PathWitnessBuild {
        witness,
        instance,
        minimizer: MinimizerSpec::scripted(epsilon, sequence),
        config: PathConfig {
            rounds,
            mixture,
            majority: WeightPolicy::Uniform,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessRoundCheck {
    pub step: usize,
    pub closed_form: f64,
    pub engine_risk: f64,
    pub consistent: bool,
    pub agree: bool,
    pub common_contained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathWitnessReport {
    pub rounds: Vec<WitnessRoundCheck>,
    pub complete: bool,
    pub tallies_ok: bool,
    /// Majority risks: uniform first, then each extra weighting.
    pub majority_risks: Vec<f64>,
    /// `D(K)`, i.e. `ε²/8` under uniform `D`.
    pub claimed: f64,
    pub bound_attained: bool,
}

impl PathWitnessReport {
    pub fn passed(&self) -> bool {
        self.complete
            && self.tallies_ok
            && self.bound_attained
            && self.rounds.iter().all(|r| r.consistent && r.agree && r.common_contained)
    }
}

/// Audits a path-engine trace of the witness's scripted minimizer.
pub fn verify_path_witness(
    witness: &PathWitness,
    inst: &Instance,
    trace: &BenchmarkTrace,
    majority_weightings: &[Vec<f64>],
) -> Result<PathWitnessReport> {
    let mut rounds = Vec::new();
    for r in &trace.rounds {
        let closed = witness.closed_form_risk(inst, r.round);
        let report = verify_eps_consistency(&r.distribution, &r.hypothesis, inst, witness.epsilon)?;
        rounds.push(WitnessRoundCheck {
            step: r.round,
            closed_form: closed,
            engine_risk: r.risk_on_dt,
            consistent: report.consistent && closed <= witness.epsilon + CLOSED_FORM_TOLERANCE,
            agree: (closed - r.risk_on_dt).abs() <= CLOSED_FORM_TOLERANCE,
            common_contained: witness.common.is_subset(&r.error_set),
        });
    }
    let slots = 1.0 / witness.horizon as f64;
    let tallies_ok = witness.phi.iter().all(|e| {
        e.tallies.iter().sum::<f64>() <= 1.0 + 1e-12 && e.tallies[e.choice] <= slots + 1e-12
    });
    let mut majority_risks = vec![trace.final_majority_risk()];
    for w in majority_weightings {
        majority_risks.push(trace.majority_risk_with(inst, w)?);
    }
    let claimed = inst.underlying().prob_of(&witness.common);
    Ok(PathWitnessReport {
        complete: trace.rounds.len() == witness.rounds && trace.perfect_round.is_none(),
        tallies_ok,
        bound_attained: majority_risks.iter().all(|&r| r == claimed),
        majority_risks,
        claimed,
        rounds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierWitness {
    pub epsilon: f64,
    pub d: usize,
    /// `1/ε³ + 2/ε² − 1`, the smallest admissible `d`.
    pub required_d: usize,
    /// True unless `ε = ½` and `d = 16`, the configuration the layout was derived for.
    pub extrapolated: bool,
    /// `K_0 .. K_8` in leaf execution order.
    pub blocks: Vec<PointSet>,
    /// `K_{g_0}, K_{g_1}, K_{g_2}`.
    pub groups: Vec<PointSet>,
}

impl HierWitness {
    pub fn hypotheses(&self) -> Vec<Hypothesis> {
        let f = Hypothesis::constant(self.d, 1);
        self.blocks.iter().map(|b| f.flipped_on(b)).collect()
    }

    pub fn layout_text(&self) -> String {
        let mut rows: Vec<(String, &PointSet)> = Vec::new();
        for j in 0..3 {
            for i in 0..3 {
                let t = 3 * j + i;
                rows.push((format!("K_{t}"), &self.blocks[t]));
            }
            rows.push((format!("K_g{j}"), &self.groups[j]));
        }
        let mut out = format!(
            "hierarchical witness: eps={} d={} (needs d >= {}){}\n",
            self.epsilon,
            self.d,
            self.required_d,
            if self.extrapolated { " [extrapolated layout]" } else { "" }
        );
        out.push_str(&layout(&rows, self.d));
        out
    }
}

#[derive(Debug, Clone)]
pub struct HierWitnessBuild {
    pub witness: HierWitness,
    pub instance: Instance,
    pub minimizer: MinimizerSpec,
    pub config: HierConfig,
}

/// Depth-2, width-3 witness at `d = 2/ε³` with uniform `D = D_0`.
pub fn build_hier_witness(epsilon: f64) -> Result<HierWitnessBuild> {
    build_hier_witness_with(epsilon, None)
}

/// Same layout on a chosen domain size. Anything other than `ε = ½`, `d = 16`
/// is flagged as extrapolated.
pub fn build_hier_witness_with(epsilon: f64, d: Option<usize>) -> Result<HierWitnessBuild> {
    let n = inverse_epsilon(epsilon)?;
    let n2 = n * n;
    let d = d.unwrap_or(2 * n2 * n);
    let required_d = n2 * n + 2 * n2 - 1;
    if d < required_d {
        return Err(Error::WitnessInfeasible(format!(
            "domain size {d} is below the required {required_d}"
        )));
    }
    if d < 3 * n2 - 2 {
        return Err(Error::WitnessInfeasible(format!(
            "domain size {d} cannot hold the block layout"
        )));
    }
    let blocks = vec![
        set_of(d, &[prefix(n2)])?,
        set_of(d, &[prefix(n), open_closed(n2, 2 * n2 - n)])?,
        set_of(d, &[prefix(n), open_closed(2 * n2 - n, 3 * n2 - 2 * n)])?,
        set_of(d, &[prefix(1), open_closed(n, n2 + n - 1)])?,
        set_of(d, &[prefix(1), open_closed(n, 2 * n - 1), open_closed(n2 + n - 1, 2 * n2 - 1)])?,
        set_of(d, &[prefix(1), open_closed(n, 2 * n - 1), open_closed(2 * n2 - 1, 3 * n2 - n - 1)])?,
        set_of(d, &[prefix(1), open_closed(2 * n - 1, n2 + 2 * n - 2)])?,
        set_of(
            d,
            &[prefix(1), open_closed(2 * n - 1, 3 * n - 2), open_closed(n2 + 2 * n - 2, 2 * n2 + n - 2)],
        )?,
        set_of(
            d,
            &[prefix(1), open_closed(2 * n - 1, 3 * n - 2), open_closed(2 * n2 + n - 2, 3 * n2 - 2)],
        )?,
    ];
    let groups = vec![
        set_of(d, &[prefix(n)])?,
        set_of(d, &[prefix(1), open_closed(n, 2 * n - 1)])?,
        set_of(d, &[prefix(1), open_closed(2 * n - 1, 3 * n - 2)])?,
    ];
    let witness = HierWitness {
        epsilon,
        d,
        required_d,
        extrapolated: !(n == 2 && d == 16),
        blocks,
        groups,
    };
    let f = Hypothesis::constant(d, 1);
    let sequence = witness.hypotheses();
    let mut members = vec![f.clone()];
    members.extend(sequence.iter().cloned());
    let under = Distribution::uniform(FiniteDomain::new(d)?);
    let instance = Instance::realizable(under, f, HypothesisClass::explicit(members)?)?;
    Ok(HierWitnessBuild {
        witness,
        instance,
        minimizer: MinimizerSpec::scripted(epsilon, sequence),
        config: HierConfig::new(2, 3),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierWitnessReport {
    pub leaves: Vec<WitnessRoundCheck>,
    pub complete: bool,
    /// `K_{g_j}` equals every pairwise intersection of its three blocks.
    pub intersections_ok: bool,
    /// Each child majority errs exactly on `K_{g_j}`.
    pub groups_match: bool,
    pub final_errs_on_first_point: bool,
    pub final_risk: f64,
    /// `1/d`, i.e. `ε³/2` at `d = 2/ε³`.
    pub claimed: f64,
    pub bound_attained: bool,
}

impl HierWitnessReport {
    pub fn passed(&self) -> bool {
        self.complete
            && self.intersections_ok
            && self.groups_match
            && self.final_errs_on_first_point
            && self.bound_attained
            && self.leaves.iter().all(|l| l.consistent && l.agree && l.common_contained)
    }
}

fn uniform_leaf_risk(witness: &HierWitness, inst: &Instance, t: usize) -> f64 {
    // atoms: D0, then the g's of earlier groups, then earlier siblings in this group
    let d = inst.underlying();
    let group = t / 3;
    let kt = &witness.blocks[t];
    let mut terms = vec![inst.initial().prob_of(kt)];
    let conditional = |k: &PointSet| d.prob_of(&kt.intersection(k)) / d.prob_of(k);
    for g in &witness.groups[..group] {
        terms.push(conditional(g));
    }
    for s in 3 * group..t {
        terms.push(conditional(&witness.blocks[s]));
    }
    terms.iter().sum::<f64>() / terms.len() as f64
}

/// Audits a uniform-weight hierarchical trace of the witness's scripted minimizer.
pub fn verify_hier_witness(witness: &HierWitness, inst: &Instance, trace: &HierTrace) -> Result<HierWitnessReport> {
    let first = PointSet::from_indices(witness.d, [0])?;
    let mut leaves = Vec::new();
    for (t, leaf) in trace.leaves().iter().enumerate() {
        let p = leaf.distribution.as_ref().expect("leaves record their input");
        let closed = uniform_leaf_risk(witness, inst, t);
        let report = verify_eps_consistency(p, &leaf.output, inst, witness.epsilon)?;
        leaves.push(WitnessRoundCheck {
            step: t,
            closed_form: closed,
            engine_risk: leaf.risk_on_input,
            consistent: report.consistent,
            agree: (closed - leaf.risk_on_input).abs() <= CLOSED_FORM_TOLERANCE,
            common_contained: first.is_subset(&error_set(&leaf.output, inst)),
        });
    }
    let intersections_ok = (0..3).all(|j| {
        let b = &witness.blocks[3 * j..3 * j + 3];
        let g = &witness.groups[j];
        b[0].intersection(&b[1]) == *g && b[0].intersection(&b[2]) == *g && b[1].intersection(&b[2]) == *g
    });
    let gs = trace.top_level_outputs();
    let groups_match = gs.len() == 3
        && gs
            .iter()
            .zip(&witness.groups)
            .all(|(g, k)| error_set(g, inst) == *k);
    let final_errors = error_set(trace.final_classifier(), inst);
    let claimed = inst.underlying().prob_of(&first);
    let final_risk = trace.final_risk();
    Ok(HierWitnessReport {
        complete: leaves.len() == 9,
        intersections_ok,
        groups_match,
        final_errs_on_first_point: first.is_subset(&final_errors),
        bound_attained: final_risk == claimed,
        final_risk,
        claimed,
        leaves,
    })
}

/// Risk of the weighted majority of the three group outputs.
pub fn hier_majority_risk_with(inst: &Instance, trace: &HierTrace, weights: &[f64]) -> Result<f64> {
    let m = majority_with(&trace.top_level_outputs(), weights)?;
    Ok(risk_01(&m, inst.underlying(), inst))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    Path,
    Hier,
}

#[derive(Debug, Clone)]
pub enum IntervalWitness {
    Path(PathWitnessBuild),
    Hier(HierWitnessBuild),
}

fn check_membership(class: &HypothesisClass, sequence: &[Hypothesis]) -> Result<()> {
    for (step, h) in sequence.iter().enumerate() {
        if !class.contains(h) {
            return Err(Error::MembershipViolation { step });
        }
    }
    Ok(())
}

fn scripted_sequence(spec: &MinimizerSpec) -> &[Hypothesis] {
    match &spec.mode {
        crate::minimizer::MinimizerMode::Scripted { sequence } => sequence,
        _ => &[],
    }
}

/// Re-expresses a built witness over an interval class on the index line:
/// unions of two intervals for the path layout, three for the hierarchical one.
pub fn into_interval_class(witness: IntervalWitness) -> Result<IntervalWitness> {
    match witness {
        IntervalWitness::Path(mut b) => {
            let class = HypothesisClass::TwoIntervals { d: b.witness.d, base: 1 };
            check_membership(&class, scripted_sequence(&b.minimizer))?;
            b.instance = b.instance.with_class(class)?;
            Ok(IntervalWitness::Path(b))
        }
        IntervalWitness::Hier(mut b) => {
            let class = HypothesisClass::ThreeIntervals { d: b.witness.d, base: 1 };
            check_membership(&class, scripted_sequence(&b.minimizer))?;
            b.instance = b.instance.with_class(class)?;
            Ok(IntervalWitness::Hier(b))
        }
    }
}

/// Builds the witness of `kind` directly over its interval class.
pub fn build_interval_witness(kind: WitnessKind, epsilon: f64, rounds: usize) -> Result<IntervalWitness> {
    let built = match kind {
        WitnessKind::Path => IntervalWitness::Path(build_path_witness(epsilon, rounds, None, WeightPolicy::Uniform)?),
        WitnessKind::Hier => IntervalWitness::Hier(build_hier_witness(epsilon)?),
    };
    into_interval_class(built)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hier::run_hier;
    use crate::minimizer::Minimizer;
    use crate::path::{random_path_schedule, random_simplex, run_path};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_based(set: &PointSet) -> Vec<usize> {
        set.iter().map(|x| x + 1).collect()
    }

    #[test]
    fn epsilon_must_have_integer_inverse() {
        assert_eq!(inverse_epsilon(0.1).unwrap(), 10);
        assert_eq!(inverse_epsilon(0.5).unwrap(), 2);
        assert!(matches!(inverse_epsilon(0.3), Err(Error::InvalidEpsilon(_))));
        assert!(inverse_epsilon(0.0).is_err());
        assert!(inverse_epsilon(1.0).is_err());
    }

    #[test]
    fn path_layout_parameters() {
        let b = build_path_witness(0.1, 30, None, WeightPolicy::Uniform).unwrap();
        let w = &b.witness;
        assert_eq!((w.d, w.k, w.k_prime, w.horizon), (800, 1, 20, 20));
        assert_eq!(b.instance.underlying().prob_of(&w.common), 0.00125);

        let b = build_path_witness(0.5, 6, None, WeightPolicy::Uniform).unwrap();
        let w = &b.witness;
        assert_eq!((w.d, w.k, w.k_prime, w.horizon), (32, 1, 4, 4));
        assert_eq!(one_based(&w.blocks[0]), [1, 2, 3, 4]);
        assert_eq!(one_based(&w.blocks[1]), [1, 5, 6, 7]);
        assert_eq!(one_based(&w.blocks[2]), [1, 8, 9, 10]);
        assert_eq!(one_based(&w.blocks[3]), [1, 11, 12, 13]);
        assert_eq!(w.assignment.len(), 6);
    }

    #[test]
    fn path_blocks_share_exactly_the_common_set() {
        let b = build_path_witness(0.1, 20, None, WeightPolicy::Uniform).unwrap();
        let w = &b.witness;
        let d = b.instance.underlying();
        for (i, a) in w.blocks.iter().enumerate() {
            assert!(d.prob_of(&w.common) / d.prob_of(a) <= 0.05 + 1e-15);
            assert!(b.instance.initial().prob_of(a) <= 0.05 + 1e-15);
            for c in &w.blocks[i + 1..] {
                assert_eq!(a.intersection(c), w.common);
            }
        }
    }

    #[test]
    fn late_rounds_reuse_the_least_loaded_block() {
        let b = build_path_witness(0.5, 12, None, WeightPolicy::Uniform).unwrap();
        let w = &b.witness;
        assert_eq!(w.phi.len(), 8);
        for e in &w.phi {
            let min = e.tallies.iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(e.tallies[e.choice], min);
            assert!(e.tallies[e.choice] <= 0.25 + 1e-12);
        }
        // round 4 sees uniform weight 1/5 on every early block: lowest index wins
        assert_eq!(w.phi[0].choice, 0);
        assert_eq!(w.assignment[4], 0);
    }

    #[test]
    fn uniform_path_witness_attains_its_bound() {
        let b = build_path_witness(0.5, 10, None, WeightPolicy::Uniform).unwrap();
        let mut m = Minimizer::new(b.minimizer.clone()).unwrap();
        let trace = run_path(&b.instance, &mut m, &b.config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let weightings: Vec<Vec<f64>> = (0..5).map(|_| random_simplex(&mut rng, 10)).collect();
        let report = verify_path_witness(&b.witness, &b.instance, &trace, &weightings).unwrap();
        assert!(report.passed(), "{report:#?}");
        assert_eq!(report.claimed, 1.0 / 32.0);
    }

    #[test]
    fn random_schedules_stay_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let schedule = random_path_schedule(&mut rng, 12);
            let b = build_path_witness(0.5, 12, None, WeightPolicy::Explicit(schedule)).unwrap();
            let mut m = Minimizer::new(b.minimizer.clone()).unwrap();
            let trace = run_path(&b.instance, &mut m, &b.config).unwrap();
            let report = verify_path_witness(&b.witness, &b.instance, &trace, &[]).unwrap();
            assert!(report.passed(), "{report:#?}");
        }
    }

    #[test]
    fn short_runs_use_a_prefix_of_the_blocks() {
        let b = build_path_witness(0.5, 2, None, WeightPolicy::Uniform).unwrap();
        assert_eq!(b.witness.assignment, [0, 1]);
        assert!(b.witness.phi.is_empty());
    }

    #[test]
    fn non_ascending_initial_is_rejected() {
        let mut mass = vec![1.0; 32];
        mass[0] = 5.0;
        let d0 = Distribution::from_weights(mass).unwrap();
        assert!(matches!(
            build_path_witness(0.5, 4, Some(d0), WeightPolicy::Uniform),
            Err(Error::WitnessInfeasible(_))
        ));
        // ascending mass piled on the last point is admissible
        let mut mass = vec![0.0; 32];
        mass[31] = 1.0;
        let tail = Distribution::new(mass).unwrap();
        assert!(build_path_witness(0.5, 4, Some(tail), WeightPolicy::Uniform).is_ok());
        let small = Distribution::uniform(FiniteDomain::new(16).unwrap());
        assert!(matches!(
            build_path_witness(0.5, 4, Some(small), WeightPolicy::Uniform),
            Err(Error::DomainMismatch { expected: 32, found: 16 })
        ));
    }

    #[test]
    fn hier_layout_at_one_half() {
        let b = build_hier_witness(0.5).unwrap();
        let w = &b.witness;
        assert_eq!(w.d, 16);
        assert_eq!(w.required_d, 15);
        assert!(!w.extrapolated);
        let expect: [&[usize]; 9] = [
            &[1, 2, 3, 4],
            &[1, 2, 5, 6],
            &[1, 2, 7, 8],
            &[1, 3, 4, 5],
            &[1, 3, 6, 7],
            &[1, 3, 8, 9],
            &[1, 4, 5, 6],
            &[1, 4, 7, 8],
            &[1, 4, 9, 10],
        ];
        for (blk, e) in w.blocks.iter().zip(expect) {
            assert_eq!(one_based(blk), e);
        }
        assert_eq!(one_based(&w.groups[0]), [1, 2]);
        assert_eq!(one_based(&w.groups[1]), [1, 3]);
        assert_eq!(one_based(&w.groups[2]), [1, 4]);
    }

    #[test]
    fn hier_witness_attains_its_bound() {
        let b = build_hier_witness(0.5).unwrap();
        let mut m = Minimizer::new(b.minimizer.clone()).unwrap();
        let trace = run_hier(&b.instance, &mut m, &b.config).unwrap();
        let report = verify_hier_witness(&b.witness, &b.instance, &trace).unwrap();
        assert!(report.passed(), "{report:#?}");
        assert_eq!(report.final_risk, 0.0625);
        let risks: Vec<f64> = report.leaves.iter().map(|l| l.engine_risk).collect();
        let expect = [0.25, 0.375, 5.0 / 12.0, 0.375, 5.0 / 12.0, 0.4375, 5.0 / 12.0, 0.4375, 0.45];
        for (r, e) in risks.iter().zip(expect) {
            assert!((r - e).abs() < 1e-12, "{risks:?}");
        }
    }

    #[test]
    fn extrapolated_hier_layouts_are_flagged() {
        let b = build_hier_witness(1.0 / 3.0).unwrap();
        assert!(b.witness.extrapolated);
        assert_eq!(b.witness.d, 54);
        assert!(build_hier_witness_with(0.5, Some(14)).is_err());
        assert!(build_hier_witness_with(0.5, Some(20)).unwrap().witness.extrapolated);
    }

    #[test]
    fn interval_variants_accept_the_script() {
        let f = Hypothesis::constant(32, 1);
        assert!(HypothesisClass::TwoIntervals { d: 32, base: 1 }.contains(&f));
        match build_interval_witness(WitnessKind::Path, 0.5, 8).unwrap() {
            IntervalWitness::Path(b) => assert_eq!(b.instance.class().kind_name(), "two_intervals"),
            _ => unreachable!(),
        }
        match build_interval_witness(WitnessKind::Hier, 0.5, 0).unwrap() {
            IntervalWitness::Hier(b) => assert_eq!(b.instance.class().kind_name(), "three_intervals"),
            _ => unreachable!(),
        }
        // the hierarchical script needs three intervals, so two are not enough
        let mut b = build_hier_witness(0.5).unwrap();
        b.instance = b.instance.with_class(HypothesisClass::Complete { d: 16 }).unwrap();
        let two = HypothesisClass::TwoIntervals { d: 16, base: 1 };
        assert!(matches!(
            check_membership(&two, scripted_sequence(&b.minimizer)),
            Err(Error::MembershipViolation { step: 4 })
        ));
    }

    #[test]
    fn layout_text_uses_one_based_intervals() {
        let b = build_path_witness(0.5, 4, None, WeightPolicy::Uniform).unwrap();
        let text = b.witness.layout_text();
        assert!(text.contains("K_1 |#...###"));
        assert!(text.contains("{1} ∪ [5,7]"));
        let h = build_hier_witness(0.5).unwrap().witness.layout_text();
        assert!(h.contains("K_g2 |#..#"));
    }
}
