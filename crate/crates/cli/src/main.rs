use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hitl_stream::learner::auc::Average;
use hitl_stream::oracle::{fit_forgetting_params, load_observations, ErrorType, FitOptions};
use hitl_stream::runner::{
    grid, run_experiment_with, sweep, write_metrics_csv, write_metrics_json, ExperimentConfig,
    IntervalMetrics, RegimeName, RunOptions, SyntheticConfig,
};
use hitl_stream::sampling::SamplerKind;
use hitl_stream::schedule::{
    crowd_schedules, generate_schedule, last_vs_earlier_test, position_error_counts, ProportionTest,
    ResponseSet, Schedule, ScheduleJson,
};
use hitl_stream::stream::{generate_synthetic_stream, write_jsonl, ClassSet};
use hitl_stream::Error;

#[derive(Parser)]
#[command(
    name = "hitl-stream",
    version,
    about = "Active learning over data streams with forgetful annotators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write per-interval metrics.
    Run(RunArgs),
    /// Run every sampler x regime x seed combination of a config.
    Sweep(SweepArgs),
    /// Fit forgetting-curve parameters to `t,erred` observations.
    FitForgetting(FitArgs),
    /// Emit an annotation schedule as JSON.
    Schedule(ScheduleArgs),
    /// Per-position error rates and the last-vs-earlier test for crowd responses.
    Responses(ResponsesArgs),
    /// Emit a synthetic labelled stream as JSONL.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Random,
    Uncertainty,
    #[value(name = "error_mitigating", alias = "error-mitigating")]
    ErrorMitigating,
}

impl From<SamplerArg> for SamplerKind {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::Random => SamplerKind::Random,
            SamplerArg::Uncertainty => SamplerKind::Uncertainty,
            SamplerArg::ErrorMitigating => SamplerKind::ErrorMitigating,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    None,
    Slow,
    Fast,
    Custom,
}

impl From<RegimeArg> for RegimeName {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::None => RegimeName::None,
            RegimeArg::Slow => RegimeName::Slow,
            RegimeArg::Fast => RegimeName::Fast,
            RegimeArg::Custom => RegimeName::Custom,
        }
    }
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum FormatArg {
    #[default]
    Csv,
    Json,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Override any config key, e.g. `--set learner.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let overrides = self
            .overrides
            .iter()
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| Error::Config(format!("override `{kv}` is not KEY=VALUE")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        ExperimentConfig::from_file(&self.config, &overrides)
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Defaults to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: FormatArg,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum)]
    sampler: Option<SamplerArg>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
    /// Write the error matrix after every interval into this directory.
    #[arg(long, value_name = "DIR")]
    dump_matrices: Option<PathBuf>,
    /// Write every oracle query (truth, given label, elapsed time) as JSON.
    #[arg(long, value_name = "PATH")]
    audit: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Defaults to all samplers.
    #[arg(long, value_enum, value_delimiter = ',')]
    samplers: Vec<SamplerArg>,
    /// Defaults to the config's regime.
    #[arg(long, value_enum, value_delimiter = ',')]
    regimes: Vec<RegimeArg>,
    /// Defaults to the config's seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with header `t,erred`.
    #[arg(long)]
    observations: PathBuf,
    #[arg(long, default_value_t = FitOptions::default().bins)]
    bins: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Slip,
    Mistake,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Generate a new schedule of this length instead of the fixed 20-item one.
    #[arg(long)]
    length: Option<usize>,
    /// Number of target positions in a generated schedule.
    #[arg(long, default_value_t = 3)]
    targets: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Target class name.
    #[arg(long, default_value = "c3")]
    target: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum TestArg {
    #[default]
    Z,
    Fisher,
}

#[derive(Args)]
struct ResponsesArgs {
    /// Schedule JSON as written by `schedule`.
    #[arg(long)]
    schedule: PathBuf,
    /// CSV with header `judge_id,position,chosen_label`.
    #[arg(long)]
    responses: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    test: TestArg,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Take `[dataset.synthetic]` and the seed from this config; flags are ignored.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = SyntheticConfig::default().num_classes)]
    classes: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().n)]
    n: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().dim)]
    dim: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().span_days)]
    span_days: u64,
    #[arg(long, default_value_t = SyntheticConfig::default().noise_sigma)]
    noise: f64,
    #[arg(long, default_value_t = SyntheticConfig::default().separation)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn finish(mut out: Box<dyn Write>, path: Option<&Path>) -> Result<(), Error> {
    out.flush().map_err(|e| Error::Io {
        path: path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf),
        source: e,
    })
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<(), Error> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(|e| Error::Io {
        path: path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf),
        source: e,
    })?;
    finish(out, path)
}

fn write_metrics(rows: &[IntervalMetrics], average: Average, args: &OutputArgs) -> Result<(), Error> {
    let path = args.output.as_deref();
    let mut out = open_output(path)?;
    match args.format {
        FormatArg::Csv => write_metrics_csv(rows, average, &mut out)?,
        FormatArg::Json => write_metrics_json(rows, average, &mut out)?,
    }
    finish(out, path)
}

fn run(args: &RunArgs) -> Result<(), Error> {
    let mut config = args.config.load()?;
    if let Some(s) = args.sampler {
        config.sampler = s.into();
    }
    if let Some(r) = args.regime {
        config.regime = r.into();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let options = RunOptions {
        matrix_dump: args.dump_matrices.clone(),
    };
    let report = run_experiment_with(&config, &options)?;
    log::info!(
        "{} intervals of {} instances, warm-up AUC {:.4}, final AUC {:.4}",
        report.plan.num_intervals,
        report.plan.per_interval,
        report.warmup_auc,
        report.final_auc()
    );
    write_metrics(&report.metrics, config.evaluation.average, &args.output)?;
    if let Some(path) = &args.audit {
        write_json(&report.audit, Some(path))?;
    }
    Ok(())
}

fn run_sweep(args: &SweepArgs) -> Result<(), Error> {
    let base = args.config.load()?;
    let samplers: Vec<SamplerKind> = if args.samplers.is_empty() {
        SamplerKind::ALL.to_vec()
    } else {
        args.samplers.iter().map(|&s| s.into()).collect()
    };
    let regimes: Vec<RegimeName> = if args.regimes.is_empty() {
        vec![base.regime]
    } else {
        args.regimes.iter().map(|&r| r.into()).collect()
    };
    let seeds = if args.seeds.is_empty() {
        vec![base.seed]
    } else {
        args.seeds.clone()
    };
    let table = sweep(&grid(&base, &samplers, &regimes, &seeds))?;
    for f in &table.failures {
        eprintln!("run {} failed: {}", f.run_id, f.error);
    }
    write_metrics(&table.rows, base.evaluation.average, &args.output)?;
    if table.failures.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{} of the runs failed",
            table.failures.len()
        )))
    }
}

fn fit(args: &FitArgs) -> Result<(), Error> {
    let observations = load_observations(&args.observations)?;
    let opts = FitOptions {
        bins: args.bins,
        ..FitOptions::default()
    };
    let params = fit_forgetting_params(&observations, &opts)?;
    write_json(&params, args.output.as_deref())
}

fn schedule(args: &ScheduleArgs) -> Result<(), Error> {
    let classes = ClassSet::numbered(args.classes);
    let kind = match args.kind {
        KindArg::Slip => ErrorType::Slip,
        KindArg::Mistake => ErrorType::Mistake,
    };
    let schedule = match args.length {
        None => {
            let (slip, mistake) = crowd_schedules();
            match kind {
                ErrorType::Slip => slip,
                ErrorType::Mistake => mistake,
            }
        }
        Some(length) => {
            let target = classes
                .id_of(&args.target)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown target class `{}`", args.target)))?;
            generate_schedule(kind, &classes, target, length, args.targets, args.seed)?
        }
    };
    let names = if args.length.is_none() {
        ClassSet::numbered(4)
    } else {
        classes
    };
    write_json(&schedule.to_json(&names), args.output.as_deref())
}

fn responses(args: &ResponsesArgs) -> Result<(), Error> {
    let file = File::open(&args.schedule).map_err(|e| Error::Io {
        path: args.schedule.clone(),
        source: e,
    })?;
    let json: ScheduleJson = serde_json::from_reader(io::BufReader::new(file))?;
    let mut names: Vec<String> = json.sequence.clone();
    names.sort();
    names.dedup();
    let classes = ClassSet::new(names)?;
    let schedule = Schedule::from_json(&json, &classes)?;
    let set = ResponseSet::load_csv(&args.responses, &classes, schedule.len())?;
    let counts = position_error_counts(&set, &schedule)?;
    let test = match args.test {
        TestArg::Z => ProportionTest::Z,
        TestArg::Fisher => ProportionTest::Fisher,
    };
    let p_value = if counts.len() >= 2 {
        Some(last_vs_earlier_test(&counts, test)?)
    } else {
        None
    };
    let summary = serde_json::json!({
        "judges": set.responses.len(),
        "target_positions": schedule.target_positions,
        "errors": counts.iter().map(|c| c.0).collect::<Vec<_>>(),
        "error_rates": counts.iter().map(|&(w, n)| w as f64 / n as f64).collect::<Vec<_>>(),
        "last_vs_earlier_p": p_value,
    });
    write_json(&summary, args.output.as_deref())
}

fn synth(args: &SynthArgs) -> Result<(), Error> {
    let spec = match &args.config {
        Some(path) => {
            let config = ExperimentConfig::from_file(path, &[])?;
            let synthetic = config.dataset.synthetic.ok_or_else(|| {
                Error::Config(format!("{} has no [dataset.synthetic] table", path.display()))
            })?;
            synthetic.to_spec(config.seed)?
        }
        None => SyntheticConfig {
            num_classes: args.classes,
            n: args.n,
            dim: args.dim,
            span_days: args.span_days,
            noise_sigma: args.noise,
            separation: args.separation,
            ..SyntheticConfig::default()
        }
        .to_spec(args.seed)?,
    };
    let dataset = generate_synthetic_stream(&spec)?;
    let path = args.output.as_deref();
    let mut out = open_output(path)?;
    write_jsonl(&dataset, &mut out)?;
    finish(out, path)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => run_sweep(a),
        Command::FitForgetting(a) => fit(a),
        Command::Schedule(a) => schedule(a),
        Command::Responses(a) => responses(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ").trim().to_string();
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
