use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dynbench::experiments::{
    read_summary, report_text, run_rollouts, write_outputs, Design, ExperimentConfig, ExperimentRun, GeneratorConfig,
    InstanceSource, MinimizerChoice, OutputFormat, Shape,
};
use dynbench::hier::HierConfig;
use dynbench::path::WeightPolicy;
use dynbench::witness::{build_hier_witness, build_path_witness, WitnessKind};
use dynbench::{Error, MinimizerSpec};

const EXIT_CONFIG: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;
const EXIT_ORACLE: u8 = 4;

#[derive(Parser)]
#[command(name = "dynbench", version, about = "Exact simulation of dynamic benchmarking designs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Path benchmark: each round mixes D0 with every earlier error distribution.
    RunPath(RunArgs),
    /// Hierarchical benchmark of the given depth and width.
    RunHier(RunArgs),
    /// Path benchmark on an instance with a randomly labeled subset.
    RunNoisy(RunArgs),
    /// Exponential-loss updates driven by the minimizer as weak learner.
    RunBoost(RunArgs),
    /// Build, print and verify a lower-bound witness sequence.
    Witness(WitnessArgs),
    /// Run the experiment described by a config file.
    Rollouts(RunArgs),
    /// Summarise an output directory written by an earlier run.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment config (JSON); flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for CSV/JSON output; without it a text report is printed.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Base seed: rollout i reseeds a random minimizer with seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rollouts: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Minimizer accuracy; 0 selects the exact minimizer.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// Round T at which the z score is taken.
    #[arg(long)]
    z_round: Option<usize>,
    /// Domain size of the generated instance.
    #[arg(long)]
    d: Option<usize>,
    /// Mass of the randomly labeled subset for run-noisy.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Path,
    Hier,
}

#[derive(Args)]
struct WitnessArgs {
    #[arg(value_enum)]
    kind: Kind,
    /// Express the sequence over unions of intervals instead of an explicit class.
    #[arg(long)]
    intervals: bool,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long)]
    rounds: Option<usize>,
    /// Draw random mixture weights from this seed instead of uniform ones.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    z_round: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of an earlier run.
    #[arg(long)]
    out_dir: PathBuf,
}

enum Failure {
    Lib(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn minimizer_from_eps(eps: f64, seed: u64) -> MinimizerSpec {
    if eps == 0.0 {
        MinimizerSpec::perfect()
    } else {
        MinimizerSpec::random(eps, seed)
    }
}

fn load_config(args: &RunArgs) -> Result<Option<ExperimentConfig>, Error> {
    match &args.config {
        Some(path) => Ok(Some(ExperimentConfig::from_json(&fs::read_to_string(path)?)?)),
        None => Ok(None),
    }
}

/// Builds the config for a `run-*` subcommand: the design kind is fixed by
/// the subcommand, everything else comes from the config file or the flags.
fn run_config(args: &RunArgs, kind: &str) -> Result<ExperimentConfig, Error> {
    let base = load_config(args)?;
    if let Some(cfg) = &base {
        if cfg.design.name() != kind {
            return Err(Error::Config(format!(
                "config describes a {} design, subcommand expects {kind}",
                cfg.design.name()
            )));
        }
    }
    let mut cfg = match base {
        Some(cfg) => cfg,
        None => {
            let generator = GeneratorConfig {
                d: args.d.unwrap_or(12),
                underlying: Shape::Random,
                noise_mass: if kind == "noisy" { args.delta.unwrap_or(0.2) } else { 0.0 },
                seed: args.seed.unwrap_or(0),
                ..GeneratorConfig::default()
            };
            let design = match kind {
                "path" => Design::Path {
                    rounds: 10,
                    mixture: WeightPolicy::Uniform,
                    majority: WeightPolicy::Uniform,
                },
                "hier" => Design::Hier { depth: 2, width: 3 },
                "noisy" => Design::Noisy { rounds: 20 },
                _ => Design::Boost { rounds: 30 },
            };
            let eps = args.eps.unwrap_or(if kind == "noisy" { 0.01 } else { 0.1 });
            ExperimentConfig::new(
                InstanceSource::Generate(generator),
                MinimizerChoice::One(minimizer_from_eps(eps, 0)),
                design,
            )
        }
    };
    if let Some(eps) = args.eps {
        let specs: Vec<MinimizerSpec> = cfg
            .minimizer
            .specs()
            .iter()
            .map(|s| MinimizerSpec {
                epsilon: eps,
                ..s.clone()
            })
            .collect();
        cfg.minimizer = MinimizerChoice::Many(specs);
    }
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(n) = args.rollouts {
        cfg.rollouts = n;
    }
    if let Some(z) = args.z_round {
        cfg.z_round = z;
    }
    match &mut cfg.design {
        Design::Path { rounds, .. } | Design::Noisy { rounds } | Design::Boost { rounds } | Design::Hinge { rounds, .. } => {
            if let Some(r) = args.rounds {
                *rounds = r;
            }
        }
        Design::Hier { depth, width } => {
            if let Some(k) = args.depth {
                *depth = k;
            }
            if let Some(w) = args.width {
                *width = w;
            }
            for w in HierConfig::new(*depth, *width).warnings() {
                eprintln!("warning: {w}");
            }
        }
        Design::Witness { epsilon, rounds, .. } => {
            if let Some(e) = args.eps {
                *epsilon = e;
            }
            if args.rounds.is_some() {
                *rounds = args.rounds;
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish(run: &ExperimentRun, out_dir: Option<&PathBuf>, format: Format) -> Result<(), Failure> {
    match out_dir {
        Some(dir) => {
            for path in write_outputs(run, dir, format.into())? {
                println!("wrote {}", path.display());
            }
        }
        None => print!("{}", report_text(&run.summary)),
    }
    let failed: Vec<usize> = run
        .summary
        .rollouts
        .iter()
        .filter(|r| r.bound_ok == Some(false))
        .map(|r| r.index)
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("check failed in rollouts {failed:?}")))
    }
}

fn run_kind(args: &RunArgs, kind: &str) -> Result<(), Failure> {
    let cfg = run_config(args, kind)?;
    let run = run_rollouts(&cfg)?;
    finish(&run, args.out_dir.as_ref(), args.format)
}

fn rollouts(args: &RunArgs) -> Result<(), Failure> {
    let Some(mut cfg) = load_config(args)? else {
        return Err(Error::Config("rollouts needs --config".into()).into());
    };
    let kind = cfg.design.name();
    if kind != "witness" {
        cfg = run_config(args, kind)?;
    } else {
        if let Some(seed) = args.seed {
            cfg.base_seed = seed;
        }
        if let Some(n) = args.rollouts {
            cfg.rollouts = n;
        }
        cfg.validate()?;
    }
    let run = run_rollouts(&cfg)?;
    finish(&run, args.out_dir.as_ref(), args.format)
}

fn witness(args: &WitnessArgs) -> Result<(), Failure> {
    let (kind, layout) = match args.kind {
        Kind::Path => {
            let rounds = args.rounds.unwrap_or(30);
            let b = build_path_witness(args.eps, rounds, None, WeightPolicy::Uniform)?;
            (WitnessKind::Path, b.witness.layout_text())
        }
        Kind::Hier => (WitnessKind::Hier, build_hier_witness(args.eps)?.witness.layout_text()),
    };
    print!("{layout}");
    let mut cfg = ExperimentConfig::new(
        InstanceSource::default(),
        MinimizerChoice::default(),
        Design::Witness {
            witness: kind,
            epsilon: args.eps,
            rounds: args.rounds.or(Some(30)),
            intervals: args.intervals,
            random_schedule: args.seed.is_some(),
        },
    );
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(z) = args.z_round {
        cfg.z_round = z;
    }
    let run = run_rollouts(&cfg)?;
    let r = &run.summary.rollouts[0];
    println!("final majority risk: {}", r.final_risk);
    if let Some(z) = r.z {
        println!("z at T={}: {z}", cfg.z_round);
    }
    println!("verified: {}", r.bound_ok == Some(true));
    if let Some(dir) = &args.out_dir {
        for path in write_outputs(&run, dir, args.format.into())? {
            println!("wrote {}", path.display());
        }
    }
    if r.bound_ok == Some(true) {
        Ok(())
    } else {
        Err(Failure::Check("witness verification failed".into()))
    }
}

fn report(args: &ReportArgs) -> Result<(), Failure> {
    print!("{}", report_text(&read_summary(&args.out_dir)?));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::RunPath(a) => run_kind(a, "path"),
        Command::RunHier(a) => run_kind(a, "hier"),
        Command::RunNoisy(a) => run_kind(a, "noisy"),
        Command::RunBoost(a) => run_kind(a, "boost"),
        Command::Witness(a) => witness(a),
        Command::Rollouts(a) => rollouts(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CHECK_FAILED)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            if e.is_oracle_violation() {
                ExitCode::from(EXIT_ORACLE)
            } else {
                ExitCode::from(EXIT_CONFIG)
            }
        }
    }
}
