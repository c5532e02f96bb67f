//! Rollout orchestration: many seeded executions of one benchmark design on a
//! fixed instance, the `z_T` similarity score, and summary statistics.
//!
//! Set sizes in `z_T` are measured as `D`-probability mass, the population
//! analogue of sample counts. Pairs of rounds whose joint error set has no
//! mass are left out of the average; when every pair is left out the score is
//! undefined.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Distribution, FiniteDomain, Hypothesis, HypothesisClass, Instance, PointSet};
use crate::error::{Error, Result};
use crate::gradient::{run_boost, run_hinge, BoostRun, HingeState, DEFAULT_HINGE_STEP};
use crate::hier::{check_hier_bound, run_hier, write_hier_csv, HierConfig, HierTrace};
use crate::measures::{error_set, majority_with, risk_01, EnsembleVote};
use crate::minimizer::{Minimizer, MinimizerSpec};
use crate::noise::{check_noise_bounds, run_noisy_path, write_noisy_csv, NoisyTrace};
use crate::path::{check_path_bound, random_path_schedule, run_path, write_path_csv, BenchmarkTrace, PathConfig, WeightPolicy};
use crate::witness::{
    build_hier_witness, build_path_witness, into_interval_class, verify_hier_witness, verify_path_witness,
    IntervalWitness, WitnessKind,
};

/// Early round at which `z_T` is reported unless configured otherwise.
pub const DEFAULT_Z_ROUND: usize = 4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    #[default]
    Complete,
    TwoIntervals,
    ThreeIntervals,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    #[default]
    Uniform,
    Random,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialShape {
    /// `D_0 = D`.
    #[default]
    Same,
    Uniform,
    Random,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthShape {
    #[default]
    Random,
    Positive,
}

/// Parameters of the synthetic instance generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub d: usize,
    pub class: ClassKind,
    pub underlying: Shape,
    pub initial: InitialShape,
    pub truth: TruthShape,
    /// Mass `δ` of the randomly labeled subset; 0 gives a realizable instance.
    pub noise_mass: f64,
    /// Size of the randomly labeled subset; defaults to `max(1, d/4)`.
    pub noise_points: Option<usize>,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            d: 12,
            class: ClassKind::Complete,
            underlying: Shape::Uniform,
            initial: InitialShape::Same,
            truth: TruthShape::Random,
            noise_mass: 0.0,
            noise_points: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum InstanceSource {
    Generate(GeneratorConfig),
    File { path: PathBuf },
}

impl Default for InstanceSource {
    fn default() -> Self {
        InstanceSource::Generate(GeneratorConfig::default())
    }
}

impl InstanceSource {
    pub fn load(&self) -> Result<Instance> {
        match self {
            InstanceSource::Generate(g) => generate_instance(g),
            InstanceSource::File { path } => Instance::from_json(&fs::read_to_string(path)?),
        }
    }
}

fn random_mass(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() + 0.05).collect()
}

fn random_interval_labels(rng: &mut ChaCha8Rng, d: usize, intervals: usize) -> Vec<i8> {
    let mut labels = vec![1i8; d];
    for _ in 0..intervals {
        let a = rng.random_range(0..d);
        let b = rng.random_range(a..d);
        for l in &mut labels[a..=b] {
            *l = -1;
        }
    }
    labels
}

/// Builds a seeded synthetic instance. With `noise_mass > 0`, masses are
/// rescaled so the randomly labeled subset carries exactly that mass.
pub fn generate_instance(cfg: &GeneratorConfig) -> Result<Instance> {
    let d = cfg.d;
    let domain = FiniteDomain::new(d)?;
    if !(0.0..1.0).contains(&cfg.noise_mass) {
        return Err(Error::Config(format!("noise_mass must lie in [0, 1), got {}", cfg.noise_mass)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mass = match cfg.underlying {
        Shape::Uniform => vec![1.0; d],
        Shape::Random => random_mass(&mut rng, d),
    };
    let mut noisy = PointSet::empty(d);
    if cfg.noise_mass > 0.0 {
        let k = cfg.noise_points.unwrap_or((d / 4).max(1));
        if k == 0 || k >= d {
            return Err(Error::Config(format!("noise_points must lie in [1, {d}), got {k}")));
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(&mut rng);
        noisy = PointSet::from_indices(d, order[..k].iter().copied())?;
        let noisy_total: f64 = noisy.iter().map(|x| mass[x]).sum();
        let clean_total: f64 = mass.iter().sum::<f64>() - noisy_total;
        for (x, m) in mass.iter_mut().enumerate() {
            *m = if noisy.contains(x) {
                *m / noisy_total * cfg.noise_mass
            } else {
                *m / clean_total * (1.0 - cfg.noise_mass)
            };
        }
    }
    let underlying = match cfg.underlying {
        Shape::Uniform if cfg.noise_mass == 0.0 => Distribution::uniform(domain),
        _ => Distribution::from_weights(mass)?,
    };
    let (class, truth) = match cfg.class {
        ClassKind::Complete => {
            let labels = match cfg.truth {
                TruthShape::Random => (0..d).map(|_| if rng.random() { 1 } else { -1 }).collect(),
                TruthShape::Positive => vec![1; d],
            };
            (HypothesisClass::Complete { d }, labels)
        }
        ClassKind::TwoIntervals | ClassKind::ThreeIntervals => {
            let intervals = if cfg.class == ClassKind::TwoIntervals { 2 } else { 3 };
            let labels = match cfg.truth {
                TruthShape::Random => random_interval_labels(&mut rng, d, intervals),
                TruthShape::Positive => vec![1; d],
            };
            let class = if intervals == 2 {
                HypothesisClass::TwoIntervals { d, base: 1 }
            } else {
                HypothesisClass::ThreeIntervals { d, base: 1 }
            };
            (class, labels)
        }
    };
    let initial = match cfg.initial {
        InitialShape::Same => underlying.clone(),
        InitialShape::Uniform => Distribution::uniform(domain),
        InitialShape::Random => Distribution::from_weights(random_mass(&mut rng, d))?,
    };
    Instance::new(underlying, initial, Hypothesis::new(truth)?, class, noisy)
}

fn default_hier_depth() -> usize {
    2
}

fn default_hier_width() -> usize {
    3
}

fn default_hinge_eta() -> f64 {
    DEFAULT_HINGE_STEP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    Path {
        rounds: usize,
        #[serde(default)]
        mixture: WeightPolicy,
        #[serde(default)]
        majority: WeightPolicy,
    },
    Hier {
        #[serde(default = "default_hier_depth")]
        depth: usize,
        #[serde(default = "default_hier_width")]
        width: usize,
    },
    Noisy {
        rounds: usize,
    },
    Boost {
        rounds: usize,
    },
    Hinge {
        rounds: usize,
        #[serde(default = "default_hinge_eta")]
        eta: f64,
    },
    /// A scripted lower-bound sequence; the instance and minimizer come from
    /// the witness itself. With `random_schedule` each rollout draws its own
    /// mixture weights from its seed.
    Witness {
        witness: WitnessKind,
        epsilon: f64,
        #[serde(default)]
        rounds: Option<usize>,
        #[serde(default)]
        intervals: bool,
        #[serde(default)]
        random_schedule: bool,
    },
}

impl Design {
    pub fn name(&self) -> &'static str {
        match self {
            Design::Path { .. } => "path",
            Design::Hier { .. } => "hier",
            Design::Noisy { .. } => "noisy",
            Design::Boost { .. } => "boost",
            Design::Hinge { .. } => "hinge",
            Design::Witness { .. } => "witness",
        }
    }
}

/// One minimizer spec, or several used round-robin across rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MinimizerChoice {
    One(MinimizerSpec),
    Many(Vec<MinimizerSpec>),
}

impl MinimizerChoice {
    pub fn specs(&self) -> &[MinimizerSpec] {
        match self {
            MinimizerChoice::One(s) => std::slice::from_ref(s),
            MinimizerChoice::Many(v) => v,
        }
    }
}

impl Default for MinimizerChoice {
    fn default() -> Self {
        MinimizerChoice::One(MinimizerSpec::perfect())
    }
}

fn default_rollouts() -> usize {
    1
}

fn default_z_round() -> usize {
    DEFAULT_Z_ROUND
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub instance: InstanceSource,
    #[serde(default)]
    pub minimizer: MinimizerChoice,
    pub design: Design,
    #[serde(default = "default_rollouts")]
    pub rollouts: usize,
    /// Rollout `i` reseeds its random minimizer with `base_seed + i`.
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_z_round")]
    pub z_round: usize,
}

impl ExperimentConfig {
    pub fn new(instance: InstanceSource, minimizer: MinimizerChoice, design: Design) -> Self {
        Self {
            instance,
            minimizer,
            design,
            rollouts: 1,
            base_seed: 0,
            z_round: DEFAULT_Z_ROUND,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rollouts == 0 {
            return Err(Error::Config("rollouts must be at least 1".into()));
        }
        if self.minimizer.specs().is_empty() {
            return Err(Error::Config("at least one minimizer spec is required".into()));
        }
        if self.z_round < 2 {
            return Err(Error::Config("z_round must be at least 2".into()));
        }
        match &self.design {
            Design::Path { rounds, .. }
            | Design::Noisy { rounds }
            | Design::Boost { rounds }
            | Design::Hinge { rounds, .. }
                if *rounds == 0 =>
            {
                Err(Error::Config("rounds must be at least 1".into()))
            }
            Design::Hier { depth, width } => HierConfig::new(*depth, *width).validate(),
            _ => Ok(()),
        }
    }

    /// Minimizer spec used by rollout `index`.
    pub fn rollout_spec(&self, index: usize) -> MinimizerSpec {
        let specs = self.minimizer.specs();
        specs[index % specs.len()].reseeded(self.seed(index))
    }

    pub fn seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }
}

/// Average of `D(E_{t1} ∩ E_{t2} ∩ E_m) / D(E_{t1} ∩ E_{t2})` over ordered pairs
/// of distinct rounds below `t`, where `E_m` is the error set of the
/// unweighted majority over the whole trace.
pub fn z_score(inst: &Instance, trace: &BenchmarkTrace, t: usize) -> Result<f64> {
    if trace.rounds.len() < t {
        return Err(Error::Config(format!(
            "z score at T={t} needs {t} rounds, trace has {}",
            trace.rounds.len()
        )));
    }
    let hyps = trace.hypotheses();
    let em = error_set(&EnsembleVote::uniform(hyps.clone())?.majority(), inst);
    let errs: Vec<PointSet> = hyps[..t].iter().map(|h| error_set(h, inst)).collect();
    z_from_sets(inst.underlying(), &errs, &em)
}

fn z_from_sets(d: &Distribution, errs: &[PointSet], em: &PointSet) -> Result<f64> {
    let mut total = 0.0;
    let mut counted = 0usize;
    for (i, a) in errs.iter().enumerate() {
        for (j, b) in errs.iter().enumerate() {
            if i == j {
                continue;
            }
            let joint = a.intersection(b);
            let denom = d.prob_of(&joint);
            if denom == 0.0 {
                continue;
            }
            total += d.prob_of(&joint.intersection(em)) / denom;
            counted += 1;
        }
    }
    if counted == 0 {
        return Err(Error::UndefinedScore);
    }
    Ok(total / counted as f64)
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Config(format!(
            "pearson needs equal lengths, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Config("pearson needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Full record of one rollout.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum RolloutTrace {
    Path(BenchmarkTrace),
    Hier(HierTrace),
    Noisy(NoisyTrace),
    Boost(BoostRun),
    Hinge(HingeState),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub index: usize,
    pub seed: u64,
    pub minimizer: String,
    pub final_risk: f64,
    /// Risk on `D` per round, padded to the planned length with the final value.
    pub series: Vec<f64>,
    pub z: Option<f64>,
    pub perfect_round: Option<usize>,
    /// Outcome of the design's bound or witness check, where one applies.
    pub bound_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub design: String,
    pub z_round: usize,
    pub rollouts: Vec<RolloutRecord>,
    pub mean: Vec<f64>,
    pub stdev: Vec<f64>,
    /// Correlation between `z` and final risk over rollouts with a defined `z`.
    pub pearson_z_final: Option<f64>,
}

impl RolloutSummary {
    pub fn final_risks(&self) -> Vec<f64> {
        self.rollouts.iter().map(|r| r.final_risk).collect()
    }

    pub fn all_bounds_hold(&self) -> bool {
        self.rollouts.iter().all(|r| r.bound_ok != Some(false))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRun {
    pub summary: RolloutSummary,
    pub traces: Vec<RolloutTrace>,
}

fn pad(mut series: Vec<f64>, len: usize) -> Vec<f64> {
    let last = series.last().copied().unwrap_or(0.0);
    if series.len() < len {
        series.resize(len, last);
    }
    series
}

fn mode_name(spec: &MinimizerSpec) -> String {
    serde_json::to_value(spec)
        .ok()
        .and_then(|v| v.get("mode").and_then(|m| m.as_str().map(str::to_string)))
        .unwrap_or_default()
}

fn path_record(inst: &Instance, trace: &BenchmarkTrace, z_round: usize, bound_ok: Option<bool>) -> RolloutRecord {
    RolloutRecord {
        index: 0,
        seed: 0,
        minimizer: String::new(),
        final_risk: trace.output_risk(),
        series: trace.padded_majority_series(),
        z: z_score(inst, trace, z_round).ok(),
        perfect_round: trace.perfect_round,
        bound_ok,
    }
}

fn hier_series(inst: &Instance, trace: &HierTrace, width: usize) -> Result<Vec<f64>> {
    let outputs = trace.top_level_outputs();
    let mut series = Vec::new();
    for t in 1..=outputs.len() {
        let m = majority_with(&outputs[..t], &vec![1.0 / t as f64; t])?;
        series.push(risk_01(&m, inst.underlying(), inst));
    }
    if trace.root.early_stop.is_some() {
        series.push(trace.final_risk());
    }
    Ok(pad(series, width))
}

/// Executes rollout `index` of `cfg` on `inst`.
pub fn run_single(cfg: &ExperimentConfig, inst: &Instance, index: usize) -> Result<(RolloutRecord, RolloutTrace)> {
    let spec = cfg.rollout_spec(index);
    let mut minimizer = Minimizer::new(spec.clone())?;
    let (mut record, trace) = match &cfg.design {
        Design::Path {
            rounds,
            mixture,
            majority,
        } => {
            let pc = PathConfig {
                rounds: *rounds,
                mixture: mixture.clone(),
                majority: majority.clone(),
            };
            let trace = run_path(inst, &mut minimizer, &pc)?;
            let bound = check_path_bound(inst, &trace)?.holds;
            (path_record(inst, &trace, cfg.z_round, Some(bound)), RolloutTrace::Path(trace))
        }
        Design::Hier { depth, width } => {
            let hc = HierConfig::new(*depth, *width);
            let trace = run_hier(inst, &mut minimizer, &hc)?;
            let bound = if *depth == 2 && *width == 3 {
                Some(check_hier_bound(inst, &trace)?.holds)
            } else {
                None
            };
            let record = RolloutRecord {
                index,
                seed: 0,
                minimizer: String::new(),
                final_risk: trace.final_risk(),
                series: hier_series(inst, &trace, *width)?,
                z: None,
                perfect_round: None,
                bound_ok: bound,
            };
            (record, RolloutTrace::Hier(trace))
        }
        Design::Noisy { rounds } => {
            let trace = run_noisy_path(inst, &mut minimizer, *rounds)?;
            let bound = match check_noise_bounds(inst, &trace) {
                Ok(report) => Some(report.passed()),
                Err(Error::DeltaNotDominant { .. }) => None,
                Err(e) => return Err(e),
            };
            let series = pad(trace.rounds.iter().map(|r| r.risk_on_d).collect(), *rounds);
            let record = RolloutRecord {
                index,
                seed: 0,
                minimizer: String::new(),
                final_risk: *series.last().expect("at least one round"),
                series,
                z: None,
                perfect_round: trace.perfect_round,
                bound_ok: bound,
            };
            (record, RolloutTrace::Noisy(trace))
        }
        Design::Boost { rounds } => {
            let run = run_boost(inst, &mut minimizer, *rounds)?;
            let series = pad(run.risks.clone(), *rounds);
            let record = RolloutRecord {
                index,
                seed: 0,
                minimizer: String::new(),
                final_risk: *series.last().unwrap_or(&0.0),
                series,
                z: None,
                perfect_round: run.perfect.as_ref().map(|(t, _)| *t),
                bound_ok: Some(run.rate_ok && run.contraction_ok),
            };
            (record, RolloutTrace::Boost(run))
        }
        Design::Hinge { rounds, eta } => {
            let state = run_hinge(inst, &mut minimizer, *rounds, *eta)?;
            let mut series: Vec<f64> = state.history.iter().map(|r| r.zero_one_after).collect();
            if series.is_empty() {
                series.push(crate::gradient::zero_one_risk(&state.h, inst, inst.underlying()));
            }
            let series = pad(series, *rounds);
            let monotone = state.history.iter().all(|r| r.hinge_after <= r.hinge_before);
            let record = RolloutRecord {
                index,
                seed: 0,
                minimizer: String::new(),
                final_risk: *series.last().expect("non-empty"),
                series,
                z: None,
                perfect_round: None,
                bound_ok: Some(monotone),
            };
            (record, RolloutTrace::Hinge(state))
        }
        Design::Witness { .. } => {
            return Err(Error::Config("witness designs run through run_witness_rollout".into()));
        }
    };
    record.index = index;
    record.seed = cfg.seed(index);
    record.minimizer = mode_name(&spec);
    Ok((record, trace))
}

fn witness_schedule(seed: u64, rounds: usize, random: bool) -> WeightPolicy {
    if random {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        WeightPolicy::Explicit(random_path_schedule(&mut rng, rounds))
    } else {
        WeightPolicy::Uniform
    }
}

/// Executes rollout `index` of a witness design; the witness supplies both
/// the instance and the scripted minimizer.
pub fn run_witness_rollout(cfg: &ExperimentConfig, index: usize) -> Result<(RolloutRecord, RolloutTrace)> {
    let Design::Witness {
        witness,
        epsilon,
        rounds,
        intervals,
        random_schedule,
    } = &cfg.design
    else {
        return Err(Error::Config("not a witness design".into()));
    };
    let seed = cfg.seed(index);
    let (mut record, trace) = match witness {
        WitnessKind::Path => {
            let n = crate::witness::inverse_epsilon(*epsilon)?;
            let rounds = rounds.unwrap_or(3 * n);
            let mixture = witness_schedule(seed, rounds, *random_schedule);
            let mut build = build_path_witness(*epsilon, rounds, None, mixture)?;
            if *intervals {
                build = match into_interval_class(IntervalWitness::Path(build))? {
                    IntervalWitness::Path(b) => b,
                    IntervalWitness::Hier(_) => unreachable!("kind is preserved"),
                };
            }
            let mut m = Minimizer::new(build.minimizer.clone())?;
            let trace = run_path(&build.instance, &mut m, &build.config)?;
            let report = verify_path_witness(&build.witness, &build.instance, &trace, &[])?;
            (
                path_record(&build.instance, &trace, cfg.z_round, Some(report.passed())),
                RolloutTrace::Path(trace),
            )
        }
        WitnessKind::Hier => {
            let mut build = build_hier_witness(*epsilon)?;
            if *intervals {
                build = match into_interval_class(IntervalWitness::Hier(build))? {
                    IntervalWitness::Hier(b) => b,
                    IntervalWitness::Path(_) => unreachable!("kind is preserved"),
                };
            }
            let mut m = Minimizer::new(build.minimizer.clone())?;
            let trace = run_hier(&build.instance, &mut m, &build.config)?;
            let report = verify_hier_witness(&build.witness, &build.instance, &trace)?;
            let record = RolloutRecord {
                index,
                seed,
                minimizer: String::new(),
                final_risk: trace.final_risk(),
                series: hier_series(&build.instance, &trace, build.config.width)?,
                z: None,
                perfect_round: None,
                bound_ok: Some(report.passed()),
            };
            (record, RolloutTrace::Hier(trace))
        }
    };
    record.index = index;
    record.seed = seed;
    record.minimizer = "scripted".into();
    Ok((record, trace))
}

fn mean_and_stdev(records: &[RolloutRecord]) -> (Vec<f64>, Vec<f64>) {
    let len = records.iter().map(|r| r.series.len()).max().unwrap_or(0);
    let series: Vec<Vec<f64>> = records.iter().map(|r| pad(r.series.clone(), len)).collect();
    let n = series.len() as f64;
    let mut mean = Vec::with_capacity(len);
    let mut stdev = Vec::with_capacity(len);
    for t in 0..len {
        let m = series.iter().map(|s| s[t]).sum::<f64>() / n;
        let var = if series.len() > 1 {
            series.iter().map(|s| (s[t] - m).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        mean.push(m);
        stdev.push(var.sqrt());
    }
    (mean, stdev)
}

/// Aggregates rollout records in index order.
pub fn summarize(design: &str, z_round: usize, records: Vec<RolloutRecord>) -> RolloutSummary {
    let (mean, stdev) = mean_and_stdev(&records);
    let (zs, finals): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter_map(|r| r.z.map(|z| (z, r.final_risk)))
        .unzip();
    RolloutSummary {
        design: design.to_string(),
        z_round,
        pearson_z_final: pearson(&zs, &finals).ok(),
        rollouts: records,
        mean,
        stdev,
    }
}

/// Runs every rollout of `cfg` in parallel; results are ordered by rollout index.
pub fn run_rollouts(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let results: Vec<(RolloutRecord, RolloutTrace)> = if matches!(cfg.design, Design::Witness { .. }) {
        (0..cfg.rollouts)
            .into_par_iter()
            .map(|i| run_witness_rollout(cfg, i))
            .collect::<Result<_>>()?
    } else {
        let inst = cfg.instance.load()?;
        (0..cfg.rollouts)
            .into_par_iter()
            .map(|i| run_single(cfg, &inst, i))
            .collect::<Result<_>>()?
    };
    let (records, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(ExperimentRun {
        summary: summarize(cfg.design.name(), cfg.z_round, records),
        traces,
    })
}

pub const ROLLOUT_CSV_HEADER: [&str; 7] = ["run_id", "seed", "minimizer", "final_risk", "z", "perfect_round", "bound_ok"];
pub const AGGREGATE_CSV_HEADER: [&str; 4] = ["round", "mean_risk", "stdev_risk", "rollouts"];
pub const HINGE_CSV_HEADER: [&str; 7] = [
    "run_id",
    "round",
    "hinge_before",
    "hinge_after",
    "certificate",
    "step",
    "zero_one_risk",
];

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

pub fn write_rollouts_csv<W: Write>(out: W, summary: &RolloutSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROLLOUT_CSV_HEADER)?;
    for r in &summary.rollouts {
        w.write_record([
            r.index.to_string(),
            r.seed.to_string(),
            r.minimizer.clone(),
            r.final_risk.to_string(),
            opt(&r.z),
            opt(&r.perfect_round),
            opt(&r.bound_ok),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(out: W, summary: &RolloutSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_CSV_HEADER)?;
    for (t, (m, s)) in summary.mean.iter().zip(&summary.stdev).enumerate() {
        w.write_record([t.to_string(), m.to_string(), s.to_string(), summary.rollouts.len().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_hinge_csv<W: Write>(out: W, runs: &[(usize, &HingeState)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HINGE_CSV_HEADER)?;
    for (id, state) in runs {
        for r in &state.history {
            w.write_record([
                id.to_string(),
                r.round.to_string(),
                r.hinge_before.to_string(),
                r.hinge_after.to_string(),
                r.certificate.to_string(),
                r.step.to_string(),
                r.zero_one_after.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-round trace CSV for whichever design the traces come from.
pub fn write_trace_csv<W: Write>(out: W, traces: &[RolloutTrace]) -> Result<()> {
    macro_rules! collect {
        ($variant:ident) => {
            traces
                .iter()
                .enumerate()
                .filter_map(|(i, t)| match t {
                    RolloutTrace::$variant(x) => Some((i, x)),
                    _ => None,
                })
                .collect::<Vec<_>>()
        };
    }
    match traces.first() {
        None => Ok(()),
        Some(RolloutTrace::Path(_)) => write_path_csv(out, &collect!(Path)),
        Some(RolloutTrace::Hier(_)) => write_hier_csv(out, &collect!(Hier)),
        Some(RolloutTrace::Noisy(_)) => write_noisy_csv(out, &collect!(Noisy)),
        Some(RolloutTrace::Boost(_)) => crate::gradient::write_boost_csv(out, &collect!(Boost)),
        Some(RolloutTrace::Hinge(_)) => write_hinge_csv(out, &collect!(Hinge)),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

pub const TRACE_FILE: &str = "trace";
pub const ROLLOUTS_FILE: &str = "rollouts";
pub const AGGREGATE_FILE: &str = "aggregate";
pub const SUMMARY_FILE: &str = "summary.json";

/// Writes a run to `dir` and returns the paths written. `summary.json` is
/// always written so that `report` can read any output directory back.
pub fn write_outputs(run: &ExperimentRun, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        OutputFormat::Csv => {
            let trace = dir.join(format!("{TRACE_FILE}.csv"));
            write_trace_csv(fs::File::create(&trace)?, &run.traces)?;
            let rollouts = dir.join(format!("{ROLLOUTS_FILE}.csv"));
            write_rollouts_csv(fs::File::create(&rollouts)?, &run.summary)?;
            let aggregate = dir.join(format!("{AGGREGATE_FILE}.csv"));
            write_aggregate_csv(fs::File::create(&aggregate)?, &run.summary)?;
            written.extend([trace, rollouts, aggregate]);
        }
        OutputFormat::Json => {
            let trace = dir.join(format!("{TRACE_FILE}.json"));
            fs::write(&trace, serde_json::to_string_pretty(&run.traces)?)?;
            written.push(trace);
        }
    }
    let summary = dir.join(SUMMARY_FILE);
    fs::write(&summary, serde_json::to_string_pretty(&run.summary)?)?;
    written.push(summary);
    Ok(written)
}

pub fn read_summary(dir: &Path) -> Result<RolloutSummary> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join(SUMMARY_FILE))?)?)
}

/// Plain-text digest of a summary.
pub fn report_text(summary: &RolloutSummary) -> String {
    use std::fmt::Write as _;
    let finals = summary.final_risks();
    let n = finals.len().max(1) as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let max = finals.iter().copied().fold(0.0, f64::max);
    let min = finals.iter().copied().fold(f64::INFINITY, f64::min);
    let zs: Vec<f64> = summary.rollouts.iter().filter_map(|r| r.z).collect();
    let perfect = summary.rollouts.iter().filter(|r| r.perfect_round.is_some()).count();
    let failed = summary.rollouts.iter().filter(|r| r.bound_ok == Some(false)).count();
    let mut out = String::new();
    let _ = writeln!(out, "design: {}", summary.design);
    let _ = writeln!(out, "rollouts: {}", summary.rollouts.len());
    let _ = writeln!(out, "final risk: mean {mean} min {min} max {max}");
    let _ = writeln!(out, "stopped early (zero-mass error set): {perfect}");
    let _ = writeln!(out, "bound or witness check failures: {failed}");
    let _ = writeln!(
        out,
        "z at T={}: defined in {} rollouts{}",
        summary.z_round,
        zs.len(),
        if zs.is_empty() {
            String::new()
        } else {
            format!(", mean {}", zs.iter().sum::<f64>() / zs.len() as f64)
        }
    );
    match summary.pearson_z_final {
        Some(r) => {
            let _ = writeln!(out, "pearson(z, final risk): {r}");
        }
        None => {
            let _ = writeln!(out, "pearson(z, final risk): undefined");
        }
    }
    for (t, (m, s)) in summary.mean.iter().zip(&summary.stdev).enumerate() {
        let _ = writeln!(out, "round {t}: mean {m} stdev {s}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;

    fn brute_z(d: &Distribution, errs: &[PointSet], em: &PointSet) -> Option<f64> {
        let mut vals = Vec::new();
        for (i, j) in (0..errs.len()).cartesian_product(0..errs.len()) {
            if i == j {
                continue;
            }
            let joint: Vec<usize> = (0..d.domain_size()).filter(|&x| errs[i].contains(x) && errs[j].contains(x)).collect();
            let den: f64 = joint.iter().map(|&x| d.at(x)).sum();
            if den > 0.0 {
                let num: f64 = joint.iter().filter(|&&x| em.contains(x)).map(|&x| d.at(x)).sum();
                vals.push(num / den);
            }
        }
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    #[test]
    fn pearson_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((pearson(&xs, &xs).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &neg).unwrap() + 1.0).abs() < 1e-15);
        // hand computation: mean x = 3, mean y = 4; Sxy = 7, Sxx = 10, Syy = 10
        let ys = [2.0, 5.0, 3.0, 4.0, 6.0];
        assert!((pearson(&xs, &ys).unwrap() - 0.7).abs() < 1e-12);
        assert!(matches!(pearson(&xs, &[1.0; 5]), Err(Error::DegenerateVariance)));
        assert!(pearson(&xs[..1], &ys[..1]).is_err());
        assert!(pearson(&xs, &ys[..4]).is_err());
    }

    #[test]
    fn hand_built_trace_matches_pair_enumeration() {
        let d = Distribution::new(vec![0.1, 0.2, 0.3, 0.1, 0.2, 0.1]).unwrap();
        let sets = [
            PointSet::from_indices(6, [0, 1, 2]).unwrap(),
            PointSet::from_indices(6, [1, 2, 3]).unwrap(),
            PointSet::from_indices(6, [2, 4]).unwrap(),
        ];
        let em = PointSet::from_indices(6, [1, 2]).unwrap();
        // pairs: (0,1) joint {1,2} → 1; (0,2) joint {2} → 1; (1,2) joint {2} → 1
        assert_eq!(z_from_sets(&d, &sets, &em).unwrap(), 1.0);
        let em = PointSet::from_indices(6, [2]).unwrap();
        // (0,1): 0.3/0.5 = 0.6, the others 1
        let z = z_from_sets(&d, &sets, &em).unwrap();
        assert!((z - (0.6 + 1.0 + 1.0) / 3.0).abs() < 1e-15);
        assert_eq!(Some(z), brute_z(&d, &sets, &em));
    }

    #[test]
    fn disjoint_errors_leave_z_undefined() {
        // D_0 only sees x=0, so h_0 is wrong on 1..6 and h_1 is exact
        let d = Distribution::uniform(FiniteDomain::new(6).unwrap());
        let inst = Instance::new(
            d,
            Distribution::point_mass(6, 0).unwrap(),
            Hypothesis::constant(6, -1),
            HypothesisClass::Complete { d: 6 },
            PointSet::empty(6),
        )
        .unwrap();
        let mut m = Minimizer::new(MinimizerSpec::perfect()).unwrap();
        let trace = run_path(&inst, &mut m, &PathConfig::uniform(5)).unwrap();
        assert_eq!(trace.rounds.len(), 2);
        assert_eq!(trace.rounds[0].error_set.len(), 5);
        assert!(matches!(z_score(&inst, &trace, 2), Err(Error::UndefinedScore)));
        assert!(z_score(&inst, &trace, 3).is_err());
    }

    #[test]
    fn generated_instances_follow_their_config() {
        let cfg = GeneratorConfig {
            d: 9,
            class: ClassKind::TwoIntervals,
            underlying: Shape::Random,
            initial: InitialShape::Random,
            seed: 11,
            ..GeneratorConfig::default()
        };
        let inst = generate_instance(&cfg).unwrap();
        assert!(inst.is_realizable());
        assert!(inst.class().contains(inst.truth()));
        assert_ne!(inst.initial(), inst.underlying());
        assert_eq!(inst, generate_instance(&cfg).unwrap());

        let noisy = GeneratorConfig {
            d: 12,
            noise_mass: 0.2,
            noise_points: Some(3),
            seed: 2,
            ..GeneratorConfig::default()
        };
        let inst = generate_instance(&noisy).unwrap();
        assert_eq!(inst.noisy_set().len(), 3);
        assert!((inst.delta() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let text = r#"{
            "instance": {"source": "generate", "d": 8, "seed": 5},
            "minimizer": [{"epsilon": 0.1, "mode": "random", "seed": 0}, {"epsilon": 0.1, "mode": "adversarial", "target": [0]}],
            "design": {"kind": "path", "rounds": 5},
            "rollouts": 4,
            "base_seed": 100
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.z_round, DEFAULT_Z_ROUND);
        assert_eq!(cfg.rollout_spec(0), MinimizerSpec::random(0.1, 100));
        assert_eq!(cfg.rollout_spec(2), MinimizerSpec::random(0.1, 102));
        assert_eq!(cfg.rollout_spec(1), MinimizerSpec::adversarial(0.1, vec![0]));
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);

        let hier: ExperimentConfig = serde_json::from_str(r#"{"design": {"kind": "hier"}}"#).unwrap();
        assert_eq!(hier.design, Design::Hier { depth: 2, width: 3 });
        assert_eq!(hier.rollouts, 1);
        assert!(ExperimentConfig::from_json(r#"{"design": {"kind": "path", "rounds": 3}, "rollouts": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"design": {"kind": "boost", "rounds": 0}}"#).is_err());
    }

    #[test]
    fn perfect_rollouts_have_zero_risk_and_spread() {
        let mut cfg = ExperimentConfig::new(
            InstanceSource::Generate(GeneratorConfig {
                d: 12,
                underlying: Shape::Random,
                seed: 1,
                ..GeneratorConfig::default()
            }),
            MinimizerChoice::One(MinimizerSpec::perfect()),
            Design::Path {
                rounds: 10,
                mixture: WeightPolicy::Uniform,
                majority: WeightPolicy::Uniform,
            },
        );
        cfg.rollouts = 100;
        let run = run_rollouts(&cfg).unwrap();
        assert!(run.summary.final_risks().iter().all(|&r| r == 0.0));
        assert_eq!(run.summary.stdev.len(), 10);
        assert!(run.summary.stdev.iter().all(|&s| s == 0.0));
        assert!(run.summary.all_bounds_hold());
    }

    #[test]
    fn random_rollouts_respect_the_first_round_bound() {
        let eps = 0.1;
        let mut cfg = ExperimentConfig::new(
            InstanceSource::Generate(GeneratorConfig {
                d: 12,
                underlying: Shape::Random,
                seed: 9,
                ..GeneratorConfig::default()
            }),
            MinimizerChoice::One(MinimizerSpec::random(eps, 0)),
            Design::Path {
                rounds: 25,
                mixture: WeightPolicy::Uniform,
                majority: WeightPolicy::Uniform,
            },
        );
        cfg.rollouts = 100;
        let run = run_rollouts(&cfg).unwrap();
        for r in &run.summary.rollouts {
            assert_eq!(r.series.len(), 25);
            assert_eq!(r.bound_ok, Some(true));
            assert!(r.series[2] <= 11.0 * eps * eps + 1e-12);
        }
        assert!(run.summary.mean.iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn adversarial_final_risk_covers_persistent_target_errors() {
        let inst = generate_instance(&GeneratorConfig {
            d: 40,
            seed: 4,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let target = vec![0, 1];
        let mut m = Minimizer::new(MinimizerSpec::adversarial(0.2, target.clone())).unwrap();
        let trace = run_path(&inst, &mut m, &PathConfig::uniform(15)).unwrap();
        let k = PointSet::from_indices(40, target).unwrap();
        let common = trace
            .rounds
            .iter()
            .fold(k, |acc, r| acc.intersection(&r.error_set));
        assert!(trace.output_risk() >= inst.underlying().prob_of(&common));
    }

    #[test]
    fn witness_rollouts_score_one() {
        let mut cfg = ExperimentConfig::new(
            InstanceSource::default(),
            MinimizerChoice::default(),
            Design::Witness {
                witness: WitnessKind::Path,
                epsilon: 0.25,
                rounds: Some(10),
                intervals: false,
                random_schedule: true,
            },
        );
        cfg.rollouts = 5;
        let run = run_rollouts(&cfg).unwrap();
        for r in &run.summary.rollouts {
            assert_eq!(r.z, Some(1.0));
            assert_eq!(r.final_risk, 0.25 * 0.25 / 8.0);
            assert_eq!(r.bound_ok, Some(true));
        }
    }

    #[test]
    fn outputs_are_reproducible() {
        let dir = std::env::temp_dir().join(format!("dynbench-exp-{}", std::process::id()));
        let mut cfg = ExperimentConfig::new(
            InstanceSource::Generate(GeneratorConfig {
                d: 10,
                underlying: Shape::Random,
                seed: 2,
                ..GeneratorConfig::default()
            }),
            MinimizerChoice::Many(vec![MinimizerSpec::random(0.2, 0), MinimizerSpec::adversarial(0.2, vec![3])]),
            Design::Path {
                rounds: 8,
                mixture: WeightPolicy::Uniform,
                majority: WeightPolicy::Uniform,
            },
        );
        cfg.rollouts = 6;
        let a = write_outputs(&run_rollouts(&cfg).unwrap(), &dir.join("a"), OutputFormat::Csv).unwrap();
        let b = write_outputs(&run_rollouts(&cfg).unwrap(), &dir.join("b"), OutputFormat::Csv).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
        let summary = read_summary(&dir.join("a")).unwrap();
        assert_eq!(summary.rollouts.len(), 6);
        assert!(report_text(&summary).contains("rollouts: 6"));
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn every_design_runs() {
        let inst = InstanceSource::Generate(GeneratorConfig {
            d: 10,
            underlying: Shape::Random,
            seed: 6,
            ..GeneratorConfig::default()
        });
        let noisy = InstanceSource::Generate(GeneratorConfig {
            d: 10,
            noise_mass: 0.3,
            seed: 6,
            ..GeneratorConfig::default()
        });
        let spec = MinimizerChoice::One(MinimizerSpec::random(0.1, 0));
        for (source, design) in [
            (inst.clone(), Design::Hier { depth: 2, width: 3 }),
            (noisy, Design::Noisy { rounds: 5 }),
            (inst.clone(), Design::Boost { rounds: 5 }),
            (inst, Design::Hinge { rounds: 5, eta: 0.05 }),
        ] {
            let mut cfg = ExperimentConfig::new(source, spec.clone(), design);
            cfg.rollouts = 3;
            let run = run_rollouts(&cfg).unwrap();
            assert_eq!(run.traces.len(), 3);
            let mut buf = Vec::new();
            write_trace_csv(&mut buf, &run.traces).unwrap();
            assert!(!buf.is_empty());
        }
    }
}
