//! Experiment orchestration: the per-interval active learning loop, sweeps
//! over many configurations, and metric output.

mod config;
mod output;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{
    apply_override, DatasetConfig, EvaluationConfig, ExperimentConfig, FeatureConfig, FeatureMode,
    LearnerConfig, OracleConfig, RegimeName, SamplingConfig, SplitConfig, SyntheticConfig, TimeUnit,
};
pub use output::{write_metrics_csv, write_metrics_json, OutputFormat};

use crate::error::{Error, Result};
use crate::features::{load_embeddings, FeatureVector, FeaturedInstance, Featurizer};
use crate::learner::{auc_with, LinearModel, TrainMode};
use crate::oracle::OracleState;
use crate::par::{self, Execution};
use crate::sampling::{
    error_mitigating_sample, random_sample, uncertainty_region, ContextWindow, ErrorMatrix, SamplerKind,
    WindowEntry,
};
use crate::stream::{
    bin_stream, compute_interval_size, generate_synthetic_stream, load_dataset, split_dataset, ClassSet,
    Dataset, DatasetFormat, IntervalPlan, SECONDS_PER_DAY,
};

/// One row of run output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntervalMetrics {
    pub run_id: usize,
    /// 1-based.
    pub interval: usize,
    pub sampler: SamplerKind,
    pub regime: String,
    pub seed: u64,
    /// Arrivals in this interval.
    pub batch_size: usize,
    /// Size of the uncertainty region.
    pub region_size: usize,
    /// Instances sent to the oracle.
    pub annotated: usize,
    pub discarded_class: Option<String>,
    /// Oracle annotations so far, warm-up excluded.
    pub cumulative_annotated: usize,
    /// Test AUC after this interval's update.
    pub auc: f64,
    /// Oracle labels that differed from the truth in this interval.
    pub label_errors: usize,
}

/// One oracle query, for auditing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRecord {
    pub interval: usize,
    pub id: String,
    pub truth: String,
    pub given: String,
    pub elapsed: f64,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub classes: ClassSet,
    pub plan: IntervalPlan,
    pub warmup_size: usize,
    pub test_size: usize,
    pub warmup_auc: f64,
    pub metrics: Vec<IntervalMetrics>,
    pub audit: Vec<AuditRecord>,
}

impl RunReport {
    pub fn final_auc(&self) -> f64 {
        self.metrics.last().map_or(self.warmup_auc, |m| m.auc)
    }

    /// Mean AUC over the 1-based intervals `from..=to` that exist.
    pub fn mean_auc(&self, from: usize, to: usize) -> Option<f64> {
        let picked: Vec<f64> = self
            .metrics
            .iter()
            .filter(|m| (from..=to).contains(&m.interval))
            .map(|m| m.auc)
            .collect();
        (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
    }
}

fn load_configured_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    if let Some(path) = &config.dataset.path {
        let format = match config.dataset.format {
            Some(f) => f,
            None => DatasetFormat::from_path(path)
                .ok_or_else(|| Error::Config(format!("cannot infer dataset format of {}", path.display())))?,
        };
        return load_dataset(path, format);
    }
    let synthetic = config
        .dataset
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset configured".into()))?;
    generate_synthetic_stream(&synthetic.to_spec(config.seed)?)
}

fn build_featurizer(config: &ExperimentConfig, dataset: &Dataset) -> Result<Featurizer> {
    let f = &config.features;
    let hashed = || Featurizer::Hashed {
        dim: f.dim,
        seed: f.hash_seed,
    };
    let embeddings = |path: &std::path::Path| -> Result<Featurizer> {
        let (table, _) = load_embeddings(path, f.dim)?;
        Ok(Featurizer::Embeddings(table))
    };
    match f.mode {
        FeatureMode::Hashed => Ok(hashed()),
        FeatureMode::Embeddings => embeddings(f.path.as_deref().expect("validated")),
        FeatureMode::Auto => {
            let first_dim = dataset
                .instances
                .first()
                .and_then(|i| i.features.as_ref())
                .map(Vec::len);
            match first_dim {
                Some(dim) if dataset.instances.iter().all(|i| i.features.is_some()) => {
                    Ok(Featurizer::Precomputed { dim })
                }
                _ => match &f.path {
                    Some(p) => embeddings(p),
                    None => Ok(hashed()),
                },
            }
        }
    }
}

fn random_seed_for(seed: u64, interval: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(interval as u64)
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Directory for per-interval error matrix CSV dumps
    /// (`error_matrix_NNN.csv`, error-mitigating runs only).
    pub matrix_dump: Option<PathBuf>,
}

/// Runs one simulation: split, warm-up training, then one sampling and
/// annotation round per arrival interval, evaluated on the fixed test set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    run_experiment_with(config, &RunOptions::default())
}

pub fn run_experiment_with(config: &ExperimentConfig, options: &RunOptions) -> Result<RunReport> {
    config.validate()?;
    let dataset = load_configured_dataset(config)?;
    let classes = dataset.classes.clone();
    if classes.len() < 2 {
        return Err(Error::invalid("the dataset needs at least two classes"));
    }
    let featurizer = build_featurizer(config, &dataset)?;
    let split = split_dataset(&dataset.instances, &classes, &config.split_options())?;

    let featurize_all = |items: Vec<crate::stream::Instance>| -> Result<Vec<FeaturedInstance>> {
        par::map_owned_with(Execution::default(), items, |instance| {
            let x = featurizer.featurize_instance(&instance)?;
            Ok(FeaturedInstance { instance, x })
        })
        .into_iter()
        .collect()
    };
    let warmup = featurize_all(split.warmup)?;
    let train = featurize_all(split.train)?;
    let test = featurize_all(split.test)?;
    if warmup.is_empty() {
        return Err(Error::invalid("warm-up set is empty"));
    }
    if train.is_empty() {
        return Err(Error::invalid("train stream is empty after splitting"));
    }

    let regime = config.oracle_regime()?;
    let band = config.band();
    let clock = config.forget_clock();
    let average = config.evaluation.average;
    let exec = Execution::default();

    let mut annotated: Vec<(FeatureVector, crate::stream::ClassId)> =
        warmup.iter().map(|w| (w.x.clone(), w.instance.label)).collect();
    let mut model = LinearModel::new(classes.len(), featurizer.dim(), config.hyper())?
        .train(&annotated, TrainMode::FullRetrain)?;
    let warmup_auc = auc_with(&model, &test, average, exec)?;

    let train_instances: Vec<_> = train.iter().map(|f| f.instance.clone()).collect();
    let plan = compute_interval_size(&train_instances)?;
    let bins: Vec<&[FeaturedInstance]> = train.chunks(plan.per_interval).collect();
    debug_assert_eq!(bins.len(), bin_stream(&train_instances, &plan).len());

    let stream_start_day = train
        .first()
        .map_or(0.0, |f| f.instance.timestamp as f64 / SECONDS_PER_DAY as f64);
    let mut oracle =
        OracleState::new(classes.len(), config.seed).starting_at(match config.oracle.time_unit {
            TimeUnit::Instance => 0.0,
            TimeUnit::Day => stream_start_day,
        });
    let mut window = ContextWindow::new(config.sampling.window)?;
    let mut matrix = ErrorMatrix::new(classes.len())?;
    let mut position = 0usize;
    let mut metrics = Vec::with_capacity(bins.len());
    let mut audit = Vec::new();

    for (i, batch) in bins.into_iter().enumerate() {
        let interval = i + 1;
        window.advance_to(interval)?;
        matrix.prune(&window);

        let (selected, region_size, discarded) = match config.sampler {
            SamplerKind::Uncertainty => {
                let region = uncertainty_region(&model, batch, band);
                let n = region.len();
                (region, n, None)
            }
            SamplerKind::Random => {
                let n = uncertainty_region(&model, batch, band).len();
                (
                    random_sample(batch, n, random_seed_for(config.seed, interval)),
                    n,
                    None,
                )
            }
            SamplerKind::ErrorMitigating => {
                let s = error_mitigating_sample(&model, batch, &matrix, &window, interval, band, clock);
                (s.selected, s.region_size, s.discarded_class)
            }
        };

        let mut running = model.clone();
        let mut new_examples = Vec::with_capacity(selected.len());
        let mut label_errors = 0;
        for item in &selected {
            let time = match config.oracle.time_unit {
                TimeUnit::Instance => position as f64,
                TimeUnit::Day => item.instance.timestamp as f64 / SECONDS_PER_DAY as f64,
            };
            oracle.advance_to(time)?;
            let truth = item.instance.label;
            let answer = oracle.annotate(truth, &regime)?;
            label_errors += usize::from(answer.label != truth);
            audit.push(AuditRecord {
                interval,
                id: item.instance.id.clone(),
                truth: classes.name(truth).to_string(),
                given: classes.name(answer.label).to_string(),
                elapsed: answer.elapsed,
            });
            if config.sampler == SamplerKind::ErrorMitigating {
                running = matrix.append(
                    &running,
                    &item.instance.id,
                    interval,
                    item.x.as_slice(),
                    answer.label,
                    &window,
                )?;
                window.push(WindowEntry {
                    id: item.instance.id.clone(),
                    interval,
                    position,
                    x: item.x.clone(),
                    label: answer.label,
                })?;
            }
            new_examples.push((item.x.clone(), answer.label));
            position += 1;
        }

        if let (Some(dir), SamplerKind::ErrorMitigating) = (&options.matrix_dump, config.sampler) {
            dump_matrix(dir, interval, &matrix, &classes)?;
        }

        if !new_examples.is_empty() {
            annotated.extend(new_examples.iter().cloned());
            model = match config.learner.training {
                TrainMode::FullRetrain => model.train(&annotated, TrainMode::FullRetrain)?,
                TrainMode::Incremental => model.train(&new_examples, TrainMode::Incremental)?,
            };
        }
        let auc = auc_with(&model, &test, average, exec)?;
        metrics.push(IntervalMetrics {
            run_id: 0,
            interval,
            sampler: config.sampler,
            regime: regime.name().to_string(),
            seed: config.seed,
            batch_size: batch.len(),
            region_size,
            annotated: new_examples.len(),
            discarded_class: discarded.map(|c| classes.name(c).to_string()),
            cumulative_annotated: position,
            auc,
            label_errors,
        });
    }

    Ok(RunReport {
        classes,
        plan,
        warmup_size: warmup.len(),
        test_size: test.len(),
        warmup_auc,
        metrics,
        audit,
    })
}

fn dump_matrix(dir: &Path, interval: usize, matrix: &ErrorMatrix, classes: &ClassSet) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("error_matrix_{interval:03}.csv"));
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    matrix.write_csv(classes, std::io::BufWriter::new(file))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunFailure {
    pub run_id: usize,
    pub error: String,
}

#[derive(Clone, Debug, Default)]
pub struct SweepTable {
    /// Sorted by `(run_id, interval)`.
    pub rows: Vec<IntervalMetrics>,
    pub failures: Vec<RunFailure>,
}

/// Every combination of sampler, regime and seed over a base config, in
/// sampler-major order.
pub fn grid(
    base: &ExperimentConfig,
    samplers: &[SamplerKind],
    regimes: &[RegimeName],
    seeds: &[u64],
) -> Vec<ExperimentConfig> {
    let mut out = Vec::with_capacity(samplers.len() * regimes.len() * seeds.len());
    for &sampler in samplers {
        for &regime in regimes {
            for &seed in seeds {
                out.push(ExperimentConfig {
                    sampler,
                    regime,
                    seed,
                    ..base.clone()
                });
            }
        }
    }
    out
}

pub fn sweep(configs: &[ExperimentConfig]) -> Result<SweepTable> {
    sweep_with(configs, Execution::default())
}

/// Runs every config (concurrently when `exec` allows); run ids are the
/// config indices. A failing run is recorded and the rest proceed.
pub fn sweep_with(configs: &[ExperimentConfig], exec: Execution) -> Result<SweepTable> {
    if configs.is_empty() {
        return Err(Error::invalid("sweep needs at least one config"));
    }
    let indexed: Vec<(usize, &ExperimentConfig)> = configs.iter().enumerate().collect();
    let results = par::map_with(exec, &indexed, |(id, c)| (*id, run_experiment(c)));
    let mut table = SweepTable::default();
    for (run_id, result) in results {
        match result {
            Ok(report) => table.rows.extend(report.metrics.into_iter().map(|mut m| {
                m.run_id = run_id;
                m
            })),
            Err(e) => {
                log::warn!("run {run_id} failed: {e}");
                table.failures.push(RunFailure {
                    run_id,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(table)
}
