use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use watermark_core::attack::ReplaySchedule;
use watermark_core::design::{Budget, LqgWeights};
use watermark_core::harness::{
    compute_metrics, read_trace, run_offline_design, run_online_experiment_with, write_json, EvalOptions,
    ExperimentConfig, ExperimentResult, Metrics, ModelSource, TraceWriter, SLOPE_START,
};
use watermark_core::{Error, Result};

#[derive(Parser)]
#[command(name = "watermark", version, about = "Physical watermarking for replay-attack detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Offline optimal watermark for a known plant, as a JSON report.
    Design {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        budget: BudgetArgs,
        /// Write design.json into this directory instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Online identification and detection, optionally under replay.
    Simulate(RunArgs),
    /// Online run with a replay attack (defaults: record 10001..10100, replay from 10101).
    AttackDemo(RunArgs),
    /// Recompute metrics from stored traces.
    Eval {
        /// Trace CSV files.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[command(flatten)]
        attack: AttackArgs,
        /// First step of the log-log slope fit.
        #[arg(long, default_value_t = SLOPE_START)]
        slope_start: u64,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Plant JSON file.
    #[arg(long, conflicts_with = "random", required_unless_present = "random")]
    model: Option<PathBuf>,
    /// Draw a random stable plant.
    #[arg(long)]
    random: bool,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = 2)]
    p: usize,
    /// Spectral radius of the random plant.
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn source(&self) -> ModelSource {
        match &self.model {
            Some(path) => ModelSource::File(path.clone()),
            None => ModelSource::Random {
                n: self.n,
                m: self.m,
                p: self.p,
                rho: self.rho,
            },
        }
    }
}

#[derive(Args)]
struct BudgetArgs {
    /// Absolute LQG budget.
    #[arg(long, conflicts_with = "delta_frac")]
    delta: Option<f64>,
    /// Budget as a fraction of the watermark-free LQG cost (default 0.1).
    #[arg(long)]
    delta_frac: Option<f64>,
}

impl BudgetArgs {
    fn budget(&self) -> Budget {
        match (self.delta, self.delta_frac) {
            (Some(d), _) => Budget::Absolute(d),
            (None, Some(f)) => Budget::FractionOfJ0(f),
            (None, None) => Budget::FractionOfJ0(0.1),
        }
    }
}

#[derive(Args)]
struct AttackArgs {
    /// First recorded step.
    #[arg(long)]
    record_start: Option<u64>,
    /// Number of recorded (and replayed) samples.
    #[arg(long)]
    record_len: Option<u64>,
    /// First replayed step.
    #[arg(long)]
    replay_start: Option<u64>,
}

impl AttackArgs {
    fn schedule(&self, demo: bool) -> Result<Option<ReplaySchedule>> {
        let any = self.record_start.is_some() || self.record_len.is_some() || self.replay_start.is_some();
        if !any && !demo {
            return Ok(None);
        }
        let k1 = self.record_start.unwrap_or(10_001);
        let len = self.record_len.unwrap_or(100);
        let k2 = self.replay_start.unwrap_or(k1 + len);
        ReplaySchedule::from_len(k1, len, k2).map(Some)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    attack: AttackArgs,
    /// Steps to simulate (default 10000, or through the end of the replay).
    #[arg(long)]
    steps: Option<u64>,
    /// Assumed number of distinct plant eigenvalues (default n).
    #[arg(long)]
    nbar: Option<usize>,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    beta: f64,
    /// Target false-alarm rate of the online detector.
    #[arg(long, default_value_t = 0.05)]
    far: f64,
    #[arg(long, default_value_t = 1)]
    fit_every: usize,
    /// Inject no watermark.
    #[arg(long)]
    no_watermark: bool,
    /// Number of runs with consecutive seeds.
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// Worker threads for multiple runs (0 = all cores).
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn run_one(config: &ExperimentConfig, dir: &Path) -> Result<ExperimentResult> {
    std::fs::create_dir_all(dir)?;
    let mut writer = TraceWriter::create(&dir.join("trace.csv"))?;
    let outcome = run_online_experiment_with(config, &mut |r| writer.push(r));
    writer.finish()?;
    let result = outcome?;
    write_json(&dir.join("summary.json"), &result.summary)?;
    result.model.save(dir.join("model.json"))?;
    Ok(result)
}

fn simulate(args: &RunArgs, demo: bool) -> Result<()> {
    let attack = args.attack.schedule(demo)?;
    let steps = args
        .steps
        .unwrap_or_else(|| attack.map_or(10_000, |s| s.k2() + s.t() + 1));
    let mut config = ExperimentConfig::new(args.model.seed, steps, args.model.source());
    config.nbar = args.nbar;
    config.beta = args.beta;
    config.budget = args.budget.budget();
    config.attack = attack;
    config.fit_every = args.fit_every;
    config.far = args.far;
    config.no_watermark = args.no_watermark;
    config.validate()?;

    let seeds: Vec<u64> = (0..args.runs.max(1)).map(|i| args.model.seed + i).collect();
    let dir_for = |seed: u64| {
        if seeds.len() == 1 {
            args.out.clone()
        } else {
            args.out.join(format!("seed-{seed}"))
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.parallel)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let results: Vec<Result<ExperimentResult>> = pool.install(|| {
        use rayon::prelude::*;
        seeds
            .par_iter()
            .map(|&seed| run_one(&ExperimentConfig { seed, ..config.clone() }, &dir_for(seed)))
            .collect()
    });
    for (seed, result) in seeds.iter().zip(results) {
        let result = result?;
        println!("{}", serde_json::to_string(&SeedLine { seed: *seed, dir: dir_for(*seed), metrics: result.summary.metrics })?);
    }
    Ok(())
}

#[derive(Serialize)]
struct SeedLine {
    seed: u64,
    dir: PathBuf,
    metrics: Metrics,
}

#[derive(Serialize)]
struct EvalReport {
    runs: Vec<EvalEntry>,
    /// All traces pooled into one sample.
    pooled: Metrics,
}

#[derive(Serialize)]
struct EvalEntry {
    path: PathBuf,
    metrics: Metrics,
}

fn eval(traces: &[PathBuf], attack: &AttackArgs, slope_start: u64) -> Result<()> {
    let opts = EvalOptions {
        attack: attack.schedule(false)?,
        slope_start,
    };
    let mut runs = Vec::new();
    let mut all = Vec::new();
    for path in traces {
        let records = read_trace(path)?;
        runs.push(EvalEntry {
            path: path.clone(),
            metrics: compute_metrics(&records, &opts),
        });
        all.extend(records);
    }
    let report = EvalReport {
        runs,
        pooled: compute_metrics(&all, &opts),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn design(model: &ModelArgs, budget: &BudgetArgs, out: Option<&Path>) -> Result<()> {
    let plant = model.source().resolve(model.seed)?;
    let report = run_offline_design(&plant, &LqgWeights::identity(plant.m(), plant.p()), budget.budget())?;
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            write_json(&dir.join("design.json"), &report)?;
            plant.save(dir.join("model.json"))
        }
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Design { model, budget, out } => design(model, budget, out.as_deref()),
        Command::Simulate(args) => simulate(args, false),
        Command::AttackDemo(args) => simulate(args, true),
        Command::Eval {
            traces,
            attack,
            slope_start,
        } => eval(traces, attack, *slope_start),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
