//! Finite domains, exact discrete distributions, ±1 hypotheses and the
//! instance bundle consumed by every engine.
//!
//! Points of a domain of size `d` are the indices `0..d`. Probabilities are
//! `f64` and are renormalized after every `mix` and `condition` so that
//! accumulated drift never exceeds [`NORMALIZATION_TOLERANCE`].

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on `Σ mass = 1`.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Largest `d` for which `Complete(d)` is enumerated.
pub const COMPLETE_ENUMERATION_CAP: usize = 20;

/// Largest `d` for which interval classes are enumerated.
pub const INTERVAL_ENUMERATION_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FiniteDomain {
    size: usize,
}

impl FiniteDomain {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::EmptyDomain);
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn points(&self) -> std::ops::Range<usize> {
        0..self.size
    }
}

/// A subset of domain points, stored as a membership mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PointSet {
    mask: Vec<bool>,
}

impl PointSet {
    pub fn empty(d: usize) -> Self {
        Self { mask: vec![false; d] }
    }

    pub fn full(d: usize) -> Self {
        Self { mask: vec![true; d] }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(d: usize, indices: I) -> Result<Self> {
        let mut mask = vec![false; d];
        for i in indices {
            if i >= d {
                return Err(Error::DomainMismatch {
                    expected: d,
                    found: i + 1,
                });
            }
            mask[i] = true;
        }
        Ok(Self { mask })
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    pub fn domain_size(&self) -> usize {
        self.mask.len()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.mask.get(x).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn intersection(&self, other: &PointSet) -> PointSet {
        PointSet {
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(&a, &b)| a && b)
                .collect(),
        }
    }

    pub fn union(&self, other: &PointSet) -> PointSet {
        PointSet {
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(&a, &b)| a || b)
                .collect(),
        }
    }

    pub fn complement(&self) -> PointSet {
        PointSet {
            mask: self.mask.iter().map(|&b| !b).collect(),
        }
    }

    pub fn is_subset(&self, other: &PointSet) -> bool {
        self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }
}

impl Serialize for PointSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

/// Probability mass function over a finite domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    mass: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;
    fn try_from(mass: Vec<f64>) -> Result<Self> {
        Distribution::new(mass)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.mass
    }
}

impl Distribution {
    /// Validates non-negativity and normalization within [`NORMALIZATION_TOLERANCE`].
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::EmptyDomain);
        }
        if let Some(bad) = mass.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "mass {bad} is negative or not finite"
            )));
        }
        let sum: f64 = mass.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("masses sum to {sum}")));
        }
        Ok(Self { mass })
    }

    /// Normalizes arbitrary non-negative weights into a distribution.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        Ok(Self {
            mass: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn uniform(domain: FiniteDomain) -> Self {
        let d = domain.size();
        Self {
            mass: vec![1.0 / d as f64; d],
        }
    }

    pub fn point_mass(d: usize, x: usize) -> Result<Self> {
        let mut mass = vec![0.0; d];
        *mass.get_mut(x).ok_or(Error::DomainMismatch {
            expected: d,
            found: x + 1,
        })? = 1.0;
        Ok(Self { mass })
    }

    pub fn domain_size(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn at(&self, x: usize) -> f64 {
        self.mass[x]
    }

    pub fn support(&self) -> PointSet {
        PointSet::from_mask(self.mass.iter().map(|&m| m > 0.0).collect())
    }

    pub fn prob_of(&self, event: &PointSet) -> f64 {
        self.mass
            .iter()
            .zip(event.mask())
            .filter(|(_, &b)| b)
            .map(|(m, _)| m)
            .sum()
    }

    /// `P(· | event)`. Fails with [`Error::ZeroMassEvent`] when `P(event) = 0`.
    pub fn condition(&self, event: &PointSet) -> Result<Self> {
        self.check_set(event)?;
        let p = self.prob_of(event);
        if p <= 0.0 {
            return Err(Error::ZeroMassEvent);
        }
        let mass = self
            .mass
            .iter()
            .zip(event.mask())
            .map(|(&m, &b)| if b { m / p } else { 0.0 })
            .collect();
        Ok(renormalized(mass))
    }

    /// Total variation distance `½ Σ |P1 − P2|`.
    pub fn total_variation(&self, other: &Distribution) -> Result<f64> {
        self.check_same(other)?;
        Ok(0.5
            * self
                .mass
                .iter()
                .zip(&other.mass)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    /// True when masses are non-decreasing in index order.
    pub fn is_ascending(&self) -> bool {
        self.mass.windows(2).all(|w| w[0] <= w[1])
    }

    fn check_same(&self, other: &Distribution) -> Result<()> {
        if self.domain_size() != other.domain_size() {
            return Err(Error::DomainMismatch {
                expected: self.domain_size(),
                found: other.domain_size(),
            });
        }
        Ok(())
    }

    fn check_set(&self, set: &PointSet) -> Result<()> {
        if set.domain_size() != self.domain_size() {
            return Err(Error::DomainMismatch {
                expected: self.domain_size(),
                found: set.domain_size(),
            });
        }
        Ok(())
    }
}

fn renormalized(mut mass: Vec<f64>) -> Distribution {
    let sum: f64 = mass.iter().sum();
    if sum > 0.0 && sum != 1.0 {
        mass.iter_mut().for_each(|m| *m /= sum);
    }
    Distribution { mass }
}

/// `Σ_t w_t · P_t`, renormalized.
pub fn mix(components: &[&Distribution], weights: &[f64]) -> Result<Distribution> {
    let first = components
        .first()
        .ok_or_else(|| Error::InvalidDistribution("mixture of zero components".into()))?;
    if weights.len() != components.len() {
        return Err(Error::WeightShape {
            expected: components.len(),
            found: weights.len(),
        });
    }
    check_weights(weights)?;
    let d = first.domain_size();
    let mut mass = vec![0.0; d];
    for (component, &w) in components.iter().zip(weights) {
        first.check_same(component)?;
        for (acc, m) in mass.iter_mut().zip(component.mass()) {
            *acc += w * m;
        }
    }
    Ok(renormalized(mass))
}

/// Uniform mixture over the given components.
pub fn mix_uniform(components: &[&Distribution]) -> Result<Distribution> {
    let n = components.len();
    mix(components, &vec![1.0 / n as f64; n])
}

/// Non-negative and summing to 1 within [`NORMALIZATION_TOLERANCE`].
pub fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidDistribution(
            "weights must be finite and non-negative".into(),
        ));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::WeightSum { sum });
    }
    Ok(())
}

/// A ±1 labeling of every domain point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct Hypothesis {
    labels: Vec<i8>,
}

impl TryFrom<Vec<i8>> for Hypothesis {
    type Error = Error;
    fn try_from(labels: Vec<i8>) -> Result<Self> {
        Hypothesis::new(labels)
    }
}

impl From<Hypothesis> for Vec<i8> {
    fn from(h: Hypothesis) -> Self {
        h.labels
    }
}

impl Hypothesis {
    pub fn new(labels: Vec<i8>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDomain);
        }
        if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
            return Err(Error::InvalidHypothesis(format!("label {bad} is not ±1")));
        }
        Ok(Self { labels })
    }

    pub fn constant(d: usize, sign: i8) -> Self {
        Self {
            labels: vec![if sign >= 0 { 1 } else { -1 }; d],
        }
    }

    pub fn domain_size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn label(&self, x: usize) -> i8 {
        self.labels[x]
    }

    /// Copy of `self` with labels negated on `set`.
    pub fn flipped_on(&self, set: &PointSet) -> Hypothesis {
        Hypothesis {
            labels: self
                .labels
                .iter()
                .zip(set.mask())
                .map(|(&l, &b)| if b { -l } else { l })
                .collect(),
        }
    }

    pub fn negated(&self) -> Hypothesis {
        Hypothesis {
            labels: self.labels.iter().map(|l| -l).collect(),
        }
    }

    /// Points where `self` and `other` disagree.
    pub fn disagreement(&self, other: &Hypothesis) -> PointSet {
        PointSet::from_mask(
            self.labels
                .iter()
                .zip(&other.labels)
                .map(|(a, b)| a != b)
                .collect(),
        )
    }
}

/// Number of maximal index runs on which `labels` differ from `base`.
pub fn flipped_runs(labels: &[i8], base: i8) -> usize {
    let mut runs = 0;
    let mut inside = false;
    for &l in labels {
        let flipped = l != base;
        if flipped && !inside {
            runs += 1;
        }
        inside = flipped;
    }
    runs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HypothesisClass {
    Explicit { members: Vec<Hypothesis> },
    /// All `2^d` labelings.
    Complete { d: usize },
    /// Labelings that differ from the constant `base` on at most two index intervals.
    TwoIntervals { d: usize, base: i8 },
    /// Labelings that differ from the constant `base` on at most three index intervals.
    ThreeIntervals { d: usize, base: i8 },
}

impl HypothesisClass {
    pub fn explicit(members: Vec<Hypothesis>) -> Result<Self> {
        let class = HypothesisClass::Explicit { members };
        class.validate()?;
        Ok(class)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HypothesisClass::Explicit { members } => {
                let first = members.first().ok_or_else(|| {
                    Error::InvalidInstance("explicit class must be non-empty".into())
                })?;
                let d = first.domain_size();
                if let Some(h) = members.iter().find(|h| h.domain_size() != d) {
                    return Err(Error::DomainMismatch {
                        expected: d,
                        found: h.domain_size(),
                    });
                }
                if !members.iter().all_unique() {
                    return Err(Error::InvalidInstance(
                        "explicit class contains duplicates".into(),
                    ));
                }
            }
            HypothesisClass::Complete { d } => {
                if *d == 0 {
                    return Err(Error::EmptyDomain);
                }
            }
            HypothesisClass::TwoIntervals { d, base } | HypothesisClass::ThreeIntervals { d, base } => {
                if *d == 0 {
                    return Err(Error::EmptyDomain);
                }
                if *base != 1 && *base != -1 {
                    return Err(Error::InvalidInstance(format!("interval base {base} is not ±1")));
                }
            }
        }
        Ok(())
    }

    pub fn domain_size(&self) -> usize {
        match self {
            HypothesisClass::Explicit { members } => members.first().map_or(0, |h| h.domain_size()),
            HypothesisClass::Complete { d }
            | HypothesisClass::TwoIntervals { d, .. }
            | HypothesisClass::ThreeIntervals { d, .. } => *d,
        }
    }

    fn interval_params(&self) -> Option<(usize, i8)> {
        match self {
            HypothesisClass::TwoIntervals { base, .. } => Some((2, *base)),
            HypothesisClass::ThreeIntervals { base, .. } => Some((3, *base)),
            _ => None,
        }
    }

    pub fn contains(&self, h: &Hypothesis) -> bool {
        if h.domain_size() != self.domain_size() {
            return false;
        }
        match self {
            HypothesisClass::Explicit { members } => members.contains(h),
            HypothesisClass::Complete { .. } => true,
            _ => {
                let (max_runs, base) = self.interval_params().expect("interval class");
                flipped_runs(h.labels(), base) <= max_runs
            }
        }
    }

    pub fn is_enumerable(&self) -> bool {
        match self {
            HypothesisClass::Explicit { .. } => true,
            HypothesisClass::Complete { d } => *d <= COMPLETE_ENUMERATION_CAP,
            HypothesisClass::TwoIntervals { d, .. } | HypothesisClass::ThreeIntervals { d, .. } => {
                *d <= INTERVAL_ENUMERATION_CAP
            }
        }
    }

    /// Iterates every member exactly once, in a fixed order.
    ///
    /// `Complete(d)` member `i` carries label −1 at `x` iff bit `x` of `i` is set.
    /// Interval members are ordered by run count, then lexicographically by
    /// their run boundaries.
    pub fn enumerate(&self) -> Result<Box<dyn Iterator<Item = Hypothesis> + '_>> {
        if !self.is_enumerable() {
            return Err(Error::NotEnumerable(format!(
                "{} over {} points",
                self.kind_name(),
                self.domain_size()
            )));
        }
        Ok(match self {
            HypothesisClass::Explicit { members } => Box::new(members.iter().cloned()),
            HypothesisClass::Complete { d } => {
                let d = *d;
                Box::new((0u64..(1u64 << d)).map(move |i| Hypothesis {
                    labels: (0..d)
                        .map(|x| if (i >> x) & 1 == 1 { -1 } else { 1 })
                        .collect(),
                }))
            }
            _ => {
                let (max_runs, base) = self.interval_params().expect("interval class");
                let d = self.domain_size();
                Box::new((0..=max_runs).flat_map(move |runs| {
                    (0..=d).combinations(2 * runs).map(move |cuts| {
                        let mut labels = vec![base; d];
                        for pair in cuts.chunks(2) {
                            for l in &mut labels[pair[0]..pair[1]] {
                                *l = -base;
                            }
                        }
                        Hypothesis { labels }
                    })
                }))
            }
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            HypothesisClass::Explicit { .. } => "explicit",
            HypothesisClass::Complete { .. } => "complete",
            HypothesisClass::TwoIntervals { .. } => "two_intervals",
            HypothesisClass::ThreeIntervals { .. } => "three_intervals",
        }
    }
}

/// Everything a benchmark run needs: the domain, underlying distribution `D`,
/// initial distribution `D₀`, true labeling `f`, hypothesis class `H`, and
/// the randomly labeled subset (empty for realizable instances).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceDoc", into = "InstanceDoc")]
pub struct Instance {
    domain: FiniteDomain,
    underlying: Distribution,
    initial: Distribution,
    truth: Hypothesis,
    class: HypothesisClass,
    noisy_set: PointSet,
}

impl Instance {
    pub fn new(
        underlying: Distribution,
        initial: Distribution,
        truth: Hypothesis,
        class: HypothesisClass,
        noisy_set: PointSet,
    ) -> Result<Self> {
        let domain = FiniteDomain::new(underlying.domain_size())?;
        let d = domain.size();
        for found in [
            initial.domain_size(),
            truth.domain_size(),
            class.domain_size(),
            noisy_set.domain_size(),
        ] {
            if found != d {
                return Err(Error::DomainMismatch { expected: d, found });
            }
        }
        class.validate()?;
        if !initial.support().is_subset(&underlying.support()) {
            return Err(Error::InvalidInstance(
                "support of the initial distribution must lie inside the support of the underlying distribution".into(),
            ));
        }
        if noisy_set.is_empty() && !class.contains(&truth) {
            return Err(Error::InvalidInstance(
                "realizable instance requires the true labeling to be in the class".into(),
            ));
        }
        let delta = underlying.prob_of(&noisy_set);
        if delta >= 1.0 {
            return Err(Error::InvalidInstance(format!(
                "noisy mass {delta} must be below 1"
            )));
        }
        Ok(Self {
            domain,
            underlying,
            initial,
            truth,
            class,
            noisy_set,
        })
    }

    /// Realizable instance with `D₀ = D`.
    pub fn realizable(underlying: Distribution, truth: Hypothesis, class: HypothesisClass) -> Result<Self> {
        let d = underlying.domain_size();
        Self::new(underlying.clone(), underlying, truth, class, PointSet::empty(d))
    }

    pub fn domain(&self) -> FiniteDomain {
        self.domain
    }

    pub fn size(&self) -> usize {
        self.domain.size()
    }

    pub fn underlying(&self) -> &Distribution {
        &self.underlying
    }

    pub fn initial(&self) -> &Distribution {
        &self.initial
    }

    pub fn truth(&self) -> &Hypothesis {
        &self.truth
    }

    pub fn class(&self) -> &HypothesisClass {
        &self.class
    }

    pub fn noisy_set(&self) -> &PointSet {
        &self.noisy_set
    }

    pub fn is_realizable(&self) -> bool {
        self.noisy_set.is_empty()
    }

    /// `Pr_D(x ∈ X^δ)`.
    pub fn delta(&self) -> f64 {
        self.underlying.prob_of(&self.noisy_set)
    }

    pub fn with_initial(&self, initial: Distribution) -> Result<Self> {
        Self::new(
            self.underlying.clone(),
            initial,
            self.truth.clone(),
            self.class.clone(),
            self.noisy_set.clone(),
        )
    }

    pub fn with_class(&self, class: HypothesisClass) -> Result<Self> {
        Self::new(
            self.underlying.clone(),
            self.initial.clone(),
            self.truth.clone(),
            class,
            self.noisy_set.clone(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// On-disk form of an [`Instance`]; masses are decimal strings that round-trip exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub d: usize,
    #[serde(rename = "D")]
    pub underlying: Vec<String>,
    #[serde(rename = "D0")]
    pub initial: Vec<String>,
    pub f: Vec<i8>,
    pub class: HypothesisClass,
    #[serde(default)]
    pub noisy_set: Vec<usize>,
}

fn parse_masses(values: &[String], d: usize, what: &str) -> Result<Distribution> {
    if values.len() != d {
        return Err(Error::DomainMismatch {
            expected: d,
            found: values.len(),
        });
    }
    let mass = values
        .iter()
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("{what}: cannot parse mass {s:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Distribution::new(mass)
}

impl TryFrom<InstanceDoc> for Instance {
    type Error = Error;
    fn try_from(doc: InstanceDoc) -> Result<Self> {
        let underlying = parse_masses(&doc.underlying, doc.d, "D")?;
        let initial = parse_masses(&doc.initial, doc.d, "D0")?;
        let truth = Hypothesis::new(doc.f)?;
        let noisy = PointSet::from_indices(doc.d, doc.noisy_set)?;
        Instance::new(underlying, initial, truth, doc.class, noisy)
    }
}

impl From<Instance> for InstanceDoc {
    fn from(inst: Instance) -> Self {
        let fmt = |p: &Distribution| p.mass().iter().map(|m| format!("{m}")).collect();
        InstanceDoc {
            d: inst.size(),
            underlying: fmt(&inst.underlying),
            initial: fmt(&inst.initial),
            f: inst.truth.labels.clone(),
            class: inst.class.clone(),
            noisy_set: inst.noisy_set.to_vec(),
        }
    }
}
