//! Hierarchical dynamic benchmarking `A^(k)`.
//!
//! A depth-`k`, width-`w` node runs `w` path-style steps whose model builder
//! is a depth-`(k−1)` node, then returns the majority of the `w` results.
//! Every distribution handed to a leaf is a mixture over a flat atom list: the
//! atoms the node inherited (starting from `[D_0]` at the root) followed by
//! the error distributions of the node's own earlier children.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{Distribution, Hypothesis, Instance};
use crate::error::{Error, Result};
use crate::measures::{error_set, hdh_distance, majority_with, risk_01};
use crate::minimizer::{verify_eps_consistency, Minimizer};
use crate::path::{mix_atoms, BoundCheck, WeightPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierConfig {
    pub depth: usize,
    pub width: usize,
    /// Consumed once per leaf mixture (leaves over a single atom skip it).
    #[serde(default)]
    pub mixture: WeightPolicy,
    /// Consumed once per node majority, in completion order.
    #[serde(default)]
    pub majority: WeightPolicy,
}

impl Default for HierConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            width: 3,
            mixture: WeightPolicy::Uniform,
            majority: WeightPolicy::Uniform,
        }
    }
}

impl HierConfig {
    pub fn new(depth: usize, width: usize) -> Self {
        Self {
            depth,
            width,
            ..Self::default()
        }
    }

    /// Number of leaf minimizer calls in a run that never stops early.
    pub fn leaf_budget(&self) -> usize {
        self.width.pow(self.depth as u32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if self.width < 2 {
            return Err(Error::Config("width must be at least 2".into()));
        }
        Ok(())
    }

    /// Human-readable caveats about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.depth > 2 {
            out.push(format!(
                "depth {} is supported by the recursion but no risk bound is checked beyond depth 2",
                self.depth
            ));
        }
        out
    }
}

/// One node of the execution tree. Leaves are single minimizer calls.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierNode {
    /// Child indices from the root, e.g. `[1, 0]`.
    pub path: Vec<usize>,
    pub level: usize,
    /// Labels of the atoms mixed to form this node's input distribution.
    pub atoms: Vec<String>,
    pub weights: Vec<f64>,
    /// Present on leaves only.
    pub distribution: Option<Distribution>,
    pub children: Vec<HierNode>,
    pub output: Hypothesis,
    pub risk_on_input: f64,
    pub risk_on_d: f64,
    /// Child step whose output had zero `D`-mass error, ending this node.
    pub early_stop: Option<usize>,
}

impl HierNode {
    pub fn label(&self) -> String {
        path_label(&self.path)
    }

    pub fn is_leaf(&self) -> bool {
        self.level == 0
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a HierNode>) {
        if self.is_leaf() {
            out.push(self);
        }
        for c in &self.children {
            c.collect_leaves(out);
        }
    }

    fn collect_all<'a>(&'a self, out: &mut Vec<&'a HierNode>) {
        out.push(self);
        for c in &self.children {
            c.collect_all(out);
        }
    }
}

fn path_label(path: &[usize]) -> String {
    if path.is_empty() {
        "root".to_string()
    } else {
        path.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(".")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierTrace {
    pub epsilon: f64,
    pub depth: usize,
    pub width: usize,
    pub root: HierNode,
}

impl HierTrace {
    /// Leaves in execution order.
    pub fn leaves(&self) -> Vec<&HierNode> {
        let mut out = Vec::new();
        self.root.collect_leaves(&mut out);
        out
    }

    /// Every node in pre-order.
    pub fn nodes(&self) -> Vec<&HierNode> {
        let mut out = Vec::new();
        self.root.collect_all(&mut out);
        out
    }

    pub fn final_classifier(&self) -> &Hypothesis {
        &self.root.output
    }

    pub fn final_risk(&self) -> f64 {
        self.root.risk_on_d
    }

    /// Outputs of the root's children (`g_0, g_1, ...` at depth 2).
    pub fn top_level_outputs(&self) -> Vec<Hypothesis> {
        self.root.children.iter().map(|c| c.output.clone()).collect()
    }

    pub fn verify(&self, inst: &Instance) -> Result<bool> {
        for leaf in self.leaves() {
            let p = leaf.distribution.as_ref().expect("leaves record their input");
            if !verify_eps_consistency(p, &leaf.output, inst, self.epsilon)?.consistent {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

struct Atom {
    label: String,
    dist: Distribution,
}

struct Runner<'a> {
    inst: &'a Instance,
    minimizer: &'a mut Minimizer,
    cfg: &'a HierConfig,
    mixes: usize,
    majorities: usize,
}

impl Runner<'_> {
    fn node(&mut self, level: usize, inherited: &[&Atom], path: Vec<usize>) -> Result<HierNode> {
        let atom_labels: Vec<String> = inherited.iter().map(|a| a.label.clone()).collect();
        let d = self.inst.underlying();

        if level == 0 {
            let weights = if inherited.len() == 1 {
                vec![1.0]
            } else {
                let w = self.cfg.mixture.weights(self.mixes, inherited.len())?;
                self.mixes += 1;
                w
            };
            let dists: Vec<&Distribution> = inherited.iter().map(|a| &a.dist).collect();
            let p = mix_atoms(&dists, &weights)?;
            let h = self.minimizer.minimize(self.inst, &p)?;
            return Ok(HierNode {
                path,
                level,
                atoms: atom_labels,
                weights,
                risk_on_input: risk_01(&h, &p, self.inst),
                risk_on_d: risk_01(&h, d, self.inst),
                distribution: Some(p),
                children: Vec::new(),
                output: h,
                early_stop: None,
            });
        }

        let mut own: Vec<Atom> = Vec::new();
        let mut children = Vec::new();
        let mut early_stop = None;
        for t in 0..self.cfg.width {
            let mut atoms: Vec<&Atom> = inherited.to_vec();
            atoms.extend(own.iter());
            let mut child_path = path.clone();
            child_path.push(t);
            let child = self.node(level - 1, &atoms, child_path)?;
            let e = error_set(&child.output, self.inst);
            let label = format!("E[{}]", child.label());
            children.push(child);
            if d.prob_of(&e) == 0.0 {
                early_stop = Some(t);
                break;
            }
            own.push(Atom {
                label,
                dist: d.condition(&e)?,
            });
        }

        let output = if let Some(t) = early_stop {
            children[t].output.clone()
        } else {
            let hs: Vec<Hypothesis> = children.iter().map(|c| c.output.clone()).collect();
            let w = self.cfg.majority.weights(self.majorities, hs.len())?;
            self.majorities += 1;
            majority_with(&hs, &w)?
        };
        let dists: Vec<&Distribution> = inherited.iter().map(|a| &a.dist).collect();
        let uniform = vec![1.0 / dists.len() as f64; dists.len()];
        let input = mix_atoms(&dists, &uniform)?;
        Ok(HierNode {
            path,
            level,
            atoms: atom_labels,
            weights: uniform,
            distribution: None,
            risk_on_input: risk_01(&output, &input, self.inst),
            risk_on_d: risk_01(&output, d, self.inst),
            children,
            output,
            early_stop,
        })
    }
}

pub fn run_hier(inst: &Instance, minimizer: &mut Minimizer, cfg: &HierConfig) -> Result<HierTrace> {
    cfg.validate()?;
    if !inst.is_realizable() {
        return Err(Error::InvalidInstance(
            "hierarchical runs need a realizable instance".into(),
        ));
    }
    let root_atom = Atom {
        label: "D0".into(),
        dist: inst.initial().clone(),
    };
    let mut runner = Runner {
        inst,
        minimizer,
        cfg,
        mixes: 0,
        majorities: 0,
    };
    let root = runner.node(cfg.depth, &[&root_atom], Vec::new())?;
    Ok(HierTrace {
        epsilon: runner.minimizer.epsilon(),
        depth: cfg.depth,
        width: cfg.width,
        root,
    })
}

/// `R_D(maj(g_0, g_1, g_2)) ≤ 543ε³ + 300ε²·d_{HΔH}(D_0, D)` for depth 2, width 3.
pub fn check_hier_bound(inst: &Instance, trace: &HierTrace) -> Result<BoundCheck> {
    if trace.depth != 2 || trace.width != 3 {
        return Err(Error::Config("the depth-2 bound needs depth 2 and width 3".into()));
    }
    let eps = trace.epsilon;
    let shift = hdh_distance(inst.initial(), inst.underlying(), inst.class())?;
    let value = trace.final_risk();
    let bound = 543.0 * eps.powi(3) + 300.0 * eps * eps * shift;
    Ok(BoundCheck {
        value,
        bound,
        holds: value <= bound + 1e-12,
    })
}

pub const HIER_CSV_HEADER: [&str; 6] = ["run_id", "node_path", "level", "step", "risk_on_input", "risk_on_d"];

/// One CSV row per node, pre-order; `step` is the node's index within its parent.
pub fn write_hier_csv<W: Write>(out: W, runs: &[(usize, &HierTrace)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HIER_CSV_HEADER)?;
    for (id, trace) in runs {
        for n in trace.nodes() {
            w.write_record([
                id.to_string(),
                n.label(),
                n.level.to_string(),
                n.path.last().map(|s| s.to_string()).unwrap_or_default(),
                n.risk_on_input.to_string(),
                n.risk_on_d.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{FiniteDomain, HypothesisClass};
    use crate::minimizer::MinimizerSpec;
    use crate::path::{run_path, PathConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, d: usize) -> Instance {
        let under = Distribution::from_weights((0..d).map(|_| rng.random::<f64>() + 0.05).collect()).unwrap();
        let f = Hypothesis::new((0..d).map(|_| if rng.random() { 1 } else { -1 }).collect()).unwrap();
        Instance::realizable(under, f, HypothesisClass::Complete { d }).unwrap()
    }

    #[test]
    fn depth_one_matches_the_path_engine() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..30 {
            let d = rng.random_range(4..=12);
            let inst = random_instance(&mut rng, d);
            let w = rng.random_range(2..=5);
            let mut a = Minimizer::new(MinimizerSpec::random(0.2, seed)).unwrap();
            let mut b = Minimizer::new(MinimizerSpec::random(0.2, seed)).unwrap();
            let path = run_path(&inst, &mut a, &PathConfig::uniform(w)).unwrap();
            let hier = run_hier(&inst, &mut b, &HierConfig::new(1, w)).unwrap();
            let leaves = hier.leaves();
            assert_eq!(leaves.len(), path.rounds.len());
            for (leaf, round) in leaves.iter().zip(&path.rounds) {
                assert_eq!(leaf.distribution.as_ref().unwrap(), &round.distribution);
                assert_eq!(leaf.output, round.hypothesis);
                assert_eq!(leaf.weights, round.mixture_weights);
            }
            assert_eq!(hier.final_risk(), path.final_majority_risk());
        }
    }

    #[test]
    fn flattened_atoms_follow_execution_order() {
        let inst = Instance::realizable(
            Distribution::uniform(FiniteDomain::new(200).unwrap()),
            Hypothesis::constant(200, 1),
            HypothesisClass::Complete { d: 200 },
        )
        .unwrap();
        // wide error sets keep every node from stopping early
        let mut m = Minimizer::new(MinimizerSpec::random(0.45, 4)).unwrap();
        let trace = run_hier(&inst, &mut m, &HierConfig::default()).unwrap();
        let leaves = trace.leaves();
        assert_eq!(leaves.len(), 9);
        let atoms: Vec<Vec<&str>> = leaves
            .iter()
            .map(|l| l.atoms.iter().map(String::as_str).collect())
            .collect();
        assert_eq!(atoms[0], ["D0"]);
        assert_eq!(atoms[2], ["D0", "E[0.0]", "E[0.1]"]);
        assert_eq!(atoms[3], ["D0", "E[0]"]);
        assert_eq!(leaves[3].weights, [0.5, 0.5]);
        assert_eq!(atoms[5], ["D0", "E[0]", "E[1.0]", "E[1.1]"]);
        assert_eq!(leaves[5].weights, [0.25; 4]);
        assert_eq!(atoms[6], ["D0", "E[0]", "E[1]"]);
        assert_eq!(atoms[8], ["D0", "E[0]", "E[1]", "E[2.0]", "E[2.1]"]);
        assert_eq!(leaves[8].weights, [0.2; 5]);
        assert!(trace.verify(&inst).unwrap());
    }

    #[test]
    fn perfect_minimizer_reaches_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..30 {
            let d = rng.random_range(3..=12);
            let inst = random_instance(&mut rng, d);
            let inst = inst.with_initial(Distribution::point_mass(d, 0).unwrap()).unwrap();
            let mut m = Minimizer::new(MinimizerSpec::perfect()).unwrap();
            let trace = run_hier(&inst, &mut m, &HierConfig::default()).unwrap();
            assert_eq!(trace.final_risk(), 0.0);
            assert!(check_hier_bound(&inst, &trace).unwrap().holds);
        }
    }

    #[test]
    fn hier_bound_holds_for_random_minimizers() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for seed in 0..60 {
            let d = rng.random_range(3..=12);
            let inst = random_instance(&mut rng, d);
            let eps = [0.05, 0.1, 0.2][seed as usize % 3];
            let mut m = Minimizer::new(MinimizerSpec::random(eps, seed)).unwrap();
            let trace = run_hier(&inst, &mut m, &HierConfig::default()).unwrap();
            assert!(trace.verify(&inst).unwrap());
            let check = check_hier_bound(&inst, &trace).unwrap();
            assert!(check.holds, "{check:?}");
        }
    }

    #[test]
    fn config_validation_and_warnings() {
        assert!(HierConfig::new(0, 3).validate().is_err());
        assert!(HierConfig::new(2, 1).validate().is_err());
        assert!(HierConfig::new(2, 3).warnings().is_empty());
        assert_eq!(HierConfig::new(3, 2).warnings().len(), 1);
        assert_eq!(HierConfig::new(2, 3).leaf_budget(), 9);
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let inst = random_instance(&mut rng, 30);
        let mut m = Minimizer::new(MinimizerSpec::random(0.1, 2)).unwrap();
        let trace = run_hier(&inst, &mut m, &HierConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_hier_csv(&mut buf, &[(0, &trace)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + trace.nodes().len());
        assert!(text.lines().nth(1).unwrap().starts_with("0,root,2,,"));
    }
}
