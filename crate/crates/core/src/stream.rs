//! Dataset ingestion, train/test/warm-up splitting and interval planning.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, streams};

pub const SECONDS_PER_DAY: u64 = 86_400;

/// Index of a class within its [`ClassSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassId(pub usize);

impl ClassId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, duplicate-free class names. `ClassId(i)` names `names[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSet {
    names: Vec<String>,
}

impl ClassSet {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate class name `{name}`")));
            }
        }
        Ok(ClassSet { names })
    }

    /// `c1`, `c2`, ... `ck`.
    pub fn numbered(count: usize) -> Self {
        ClassSet {
            names: (1..=count).map(|i| format!("c{i}")).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: ClassId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id_of(&self, name: &str) -> Option<ClassId> {
        self.names.iter().position(|n| n == name).map(ClassId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ClassId> {
        (0..self.names.len()).map(ClassId)
    }
}

/// One stream item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub text: String,
    pub features: Option<Vec<f64>>,
    pub label: ClassId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub classes: ClassSet,
    pub instances: Vec<Instance>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Csv,
    Jsonl,
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(DatasetFormat::Csv),
            "jsonl" | "ndjson" => Some(DatasetFormat::Jsonl),
            _ => None,
        }
    }
}

struct RawRecord {
    line: usize,
    id: String,
    timestamp: u64,
    text: String,
    features: Option<Vec<f64>>,
    label: String,
}

/// Reads a dataset file. Classes are the distinct label names in sorted order.
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let raw = match format {
        DatasetFormat::Csv => read_csv_records(file)?,
        DatasetFormat::Jsonl => read_jsonl_records(path, file)?,
    };

    let names: BTreeSet<&str> = raw.iter().map(|r| r.label.as_str()).collect();
    let classes = ClassSet::new(names.into_iter().map(str::to_string).collect())?;

    let mut ids = HashSet::with_capacity(raw.len());
    let mut instances = Vec::with_capacity(raw.len());
    for r in raw {
        if !ids.insert(r.id.clone()) {
            return Err(Error::DuplicateId(r.id));
        }
        if r.text.trim().is_empty() && r.features.is_none() {
            return Err(Error::parse(r.line, "text", "neither text nor features given"));
        }
        let label = classes.id_of(&r.label).expect("label collected above");
        instances.push(Instance {
            id: r.id,
            timestamp: r.timestamp,
            text: r.text,
            features: r.features,
            label,
        });
    }
    Ok(Dataset { classes, instances })
}

fn read_csv_records(file: File) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::parse(1, name, "missing column in header"))
    };
    let (c_id, c_ts, c_text, c_label) = (
        column("id")?,
        column("timestamp")?,
        column("text")?,
        column("label")?,
    );

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |idx: usize, name: &str| {
            record
                .get(idx)
                .ok_or_else(|| Error::parse(line, name, "missing value"))
        };
        let id = field(c_id, "id")?.to_string();
        if id.is_empty() {
            return Err(Error::parse(line, "id", "empty id"));
        }
        let ts_raw = field(c_ts, "timestamp")?;
        let timestamp = ts_raw.trim().parse::<u64>().map_err(|_| {
            Error::parse(
                line,
                "timestamp",
                format!("`{ts_raw}` is not a non-negative integer"),
            )
        })?;
        let text = field(c_text, "text")?.to_string();
        let label = field(c_label, "label")?.trim().to_string();
        if label.is_empty() {
            return Err(Error::parse(line, "label", "empty label"));
        }
        out.push(RawRecord {
            line,
            id,
            timestamp,
            text,
            features: None,
            label,
        });
    }
    Ok(out)
}

fn read_jsonl_records(path: &Path, file: File) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::parse(line_no, "<record>", e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::parse(line_no, "<record>", "not a JSON object"))?;

        let string_field = |name: &str, required: bool| -> Result<String> {
            match obj.get(name) {
                Some(serde_json::Value::String(s)) => Ok(s.clone()),
                None if !required => Ok(String::new()),
                None => Err(Error::parse(line_no, name, "missing")),
                Some(_) => Err(Error::parse(line_no, name, "expected a string")),
            }
        };
        let id = string_field("id", true)?;
        let timestamp = obj
            .get("timestamp")
            .ok_or_else(|| Error::parse(line_no, "timestamp", "missing"))?
            .as_u64()
            .ok_or_else(|| Error::parse(line_no, "timestamp", "expected a non-negative integer"))?;
        let text = string_field("text", false)?;
        let label = string_field("label", true)?;
        let features = match obj.get("features") {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::Array(values)) => Some(
                values
                    .iter()
                    .map(|v| v.as_f64().filter(|x| x.is_finite()))
                    .collect::<Option<Vec<f64>>>()
                    .ok_or_else(|| Error::parse(line_no, "features", "expected finite numbers"))?,
            ),
            Some(_) => return Err(Error::parse(line_no, "features", "expected an array")),
        };
        out.push(RawRecord {
            line: line_no,
            id,
            timestamp,
            text,
            features,
            label,
        });
    }
    Ok(out)
}

/// Writes instances as JSONL using the ingestion schema.
pub fn write_jsonl<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    for inst in &dataset.instances {
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), inst.id.clone().into());
        obj.insert("timestamp".into(), inst.timestamp.into());
        obj.insert("text".into(), inst.text.clone().into());
        obj.insert("label".into(), dataset.classes.name(inst.label).into());
        if let Some(f) = &inst.features {
            obj.insert("features".into(), serde_json::to_value(f)?);
        }
        serde_json::to_writer(&mut out, &serde_json::Value::Object(obj))?;
        out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

/// How the held-out test set is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Holdout {
    #[default]
    Random,
    /// The latest instances by timestamp.
    Chronological,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitOptions {
    pub test_frac: f64,
    pub z: usize,
    pub seed: u64,
    pub holdout: Holdout,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub warmup: Vec<Instance>,
    /// Sorted by `(timestamp, id)`.
    pub train: Vec<Instance>,
    pub test: Vec<Instance>,
    /// Classes with no instance at all in the input.
    pub absent_classes: Vec<ClassId>,
}

fn by_time_then_id(a: &Instance, b: &Instance) -> std::cmp::Ordering {
    a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id))
}

/// Splits `data` into test, warm-up (up to `z` per class) and time-sorted train.
pub fn split_dataset(data: &[Instance], classes: &ClassSet, opts: &SplitOptions) -> Result<DatasetSplit> {
    if !(opts.test_frac > 0.0 && opts.test_frac < 1.0) {
        return Err(Error::invalid(format!(
            "test_frac must lie in (0, 1), got {}",
            opts.test_frac
        )));
    }
    if opts.z == 0 {
        return Err(Error::invalid("z must be at least 1"));
    }
    let mut rng = seeded(opts.seed, streams::SPLIT);
    let test_count = (opts.test_frac * data.len() as f64).round() as usize;

    let mut order: Vec<usize> = (0..data.len()).collect();
    match opts.holdout {
        Holdout::Random => order.shuffle(&mut rng),
        Holdout::Chronological => {
            order.sort_by(|&a, &b| by_time_then_id(&data[b], &data[a]));
        }
    }
    let mut is_test = vec![false; data.len()];
    for &i in &order[..test_count] {
        is_test[i] = true;
    }

    let mut per_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for (i, inst) in data.iter().enumerate() {
        if !is_test[i] {
            per_class.entry(inst.label).or_default().push(i);
        }
    }
    let mut is_warmup = vec![false; data.len()];
    let mut warmup = Vec::new();
    for members in per_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter().take(opts.z) {
            is_warmup[i] = true;
            warmup.push(data[i].clone());
        }
    }

    let mut absent_classes = Vec::new();
    for class in classes.ids() {
        if !data.iter().any(|inst| inst.label == class) {
            log::warn!("class `{}` has no instances", classes.name(class));
            absent_classes.push(class);
        }
    }

    let test = (0..data.len())
        .filter(|&i| is_test[i])
        .map(|i| data[i].clone())
        .collect();
    let mut train: Vec<Instance> = (0..data.len())
        .filter(|&i| !is_test[i] && !is_warmup[i])
        .map(|i| data[i].clone())
        .collect();
    train.sort_by(by_time_then_id);

    Ok(DatasetSplit {
        warmup,
        train,
        test,
        absent_classes,
    })
}

/// Fixed number of arrivals per interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalPlan {
    pub per_interval: usize,
    pub num_intervals: usize,
    /// Whole days between the first and last arrival, floored at 1.
    pub span_days: u64,
}

/// Instances per interval: train size divided by its span in whole days,
/// rounded up. A span shorter than one day counts as one day.
pub fn compute_interval_size(train: &[Instance]) -> Result<IntervalPlan> {
    if train.is_empty() {
        return Err(Error::invalid("cannot plan intervals for an empty train set"));
    }
    let t_min = train.iter().map(|i| i.timestamp).min().unwrap_or(0);
    let t_max = train.iter().map(|i| i.timestamp).max().unwrap_or(0);
    let span_days = ((t_max - t_min) / SECONDS_PER_DAY).max(1);
    let len = train.len() as u64;
    let per_interval = len.div_ceil(span_days) as usize;
    let num_intervals = train.len().div_ceil(per_interval);
    Ok(IntervalPlan {
        per_interval,
        num_intervals,
        span_days,
    })
}

/// Consecutive slices of `plan.per_interval` instances; the last may be shorter.
pub fn bin_stream<'a>(train: &'a [Instance], plan: &IntervalPlan) -> Vec<&'a [Instance]> {
    train.chunks(plan.per_interval.max(1)).collect()
}

/// Parameters of a Gaussian-blob stream with timestamps spread over a span of days.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub priors: Vec<f64>,
    pub centroids: Vec<Vec<f64>>,
    pub noise_sigma: f64,
    pub n: usize,
    pub span_days: u64,
    #[serde(default)]
    pub start_timestamp: u64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Uniform priors; class `k` sits at `separation` along axis `k`.
    pub fn axis_aligned(
        num_classes: usize,
        dim: usize,
        separation: f64,
        noise_sigma: f64,
        n: usize,
        span_days: u64,
        seed: u64,
    ) -> Result<Self> {
        if dim < num_classes {
            return Err(Error::invalid(format!(
                "dim {dim} cannot hold {num_classes} axis-aligned centroids"
            )));
        }
        let centroids = (0..num_classes)
            .map(|k| {
                let mut c = vec![0.0; dim];
                c[k] = separation;
                c
            })
            .collect();
        Ok(SyntheticSpec {
            priors: vec![1.0 / num_classes as f64; num_classes],
            centroids,
            noise_sigma,
            n,
            span_days,
            start_timestamp: 0,
            seed,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.priors.len()
    }
}

pub fn generate_synthetic_stream(spec: &SyntheticSpec) -> Result<Dataset> {
    let k = spec.priors.len();
    if k == 0 || spec.centroids.len() != k {
        return Err(Error::invalid(format!(
            "{} priors but {} centroids",
            k,
            spec.centroids.len()
        )));
    }
    if spec.priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invalid("priors must be finite and non-negative"));
    }
    let total: f64 = spec.priors.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("priors sum to {total}, not 1")));
    }
    let dim = spec.centroids[0].len();
    if dim == 0 || spec.centroids.iter().any(|c| c.len() != dim) {
        return Err(Error::invalid("centroids must share one positive dimension"));
    }
    if !(spec.noise_sigma.is_finite() && spec.noise_sigma >= 0.0) {
        return Err(Error::invalid("noise_sigma must be finite and non-negative"));
    }
    if spec.span_days == 0 {
        return Err(Error::invalid("span_days must be at least 1"));
    }

    let mut cumulative = Vec::with_capacity(k);
    let mut acc = 0.0;
    for p in &spec.priors {
        acc += p;
        cumulative.push(acc);
    }
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let span_secs = spec.span_days * SECONDS_PER_DAY;
    let mut rng = seeded(spec.seed, streams::SYNTHETIC);

    let instances = (0..spec.n)
        .map(|i| {
            let u: f64 = rng.random::<f64>() * acc;
            let label = cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or_else(|| spec.priors.iter().rposition(|&p| p > 0.0).unwrap_or(k - 1));
            let features = if spec.noise_sigma == 0.0 {
                spec.centroids[label].clone()
            } else {
                spec.centroids[label]
                    .iter()
                    .map(|c| c + noise.sample(&mut rng))
                    .collect()
            };
            let timestamp = spec.start_timestamp + rng.random_range(0..span_secs);
            Instance {
                id: format!("s{i:06}"),
                timestamp,
                text: String::new(),
                features: Some(features),
                label: ClassId(label),
            }
        })
        .collect();

    Ok(Dataset {
        classes: ClassSet::numbered(k),
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(id: &str, ts: u64, label: usize) -> Instance {
        Instance {
            id: id.to_string(),
            timestamp: ts,
            text: format!("text {id}"),
            features: None,
            label: ClassId(label),
        }
    }

    fn write_tmp(suffix: &str, body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_rows_load_in_file_order() {
        let f = write_tmp(
            ".csv",
            "id,timestamp,text,label\nb,20,flood water rising,c2\na,10,need help,c1\nc,5,\"roads, closed\",c2\n",
        );
        let ds = load_dataset(f.path(), DatasetFormat::Csv).unwrap();
        let ids: Vec<_> = ds.instances.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
        assert_eq!(ds.classes.names(), ["c1", "c2"]);
        assert_eq!(ds.instances[2].text, "roads, closed");
        assert_eq!(ds.instances[0].label, ClassId(1));
    }

    #[test]
    fn csv_bad_timestamp_names_line_and_field() {
        let f = write_tmp(".csv", "id,timestamp,text,label\na,10,x,c1\nb,yesterday,y,c1\n");
        match load_dataset(f.path(), DatasetFormat::Csv).unwrap_err() {
            Error::Parse { line, field, .. } => {
                assert_eq!(line, 3);
                assert_eq!(field, "timestamp");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let f = write_tmp(".csv", "");
        assert!(load_dataset(f.path(), DatasetFormat::Csv)
            .unwrap()
            .instances
            .is_empty());
        let f = write_tmp(".jsonl", "");
        assert!(load_dataset(f.path(), DatasetFormat::Jsonl)
            .unwrap()
            .instances
            .is_empty());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let f = write_tmp(".csv", "id,timestamp,text,label\na,1,x,c1\na,2,y,c2\n");
        assert!(matches!(
            load_dataset(f.path(), DatasetFormat::Csv),
            Err(Error::DuplicateId(id)) if id == "a"
        ));
    }

    #[test]
    fn jsonl_with_features() {
        let f = write_tmp(
            ".jsonl",
            "{\"id\":\"x\",\"timestamp\":3,\"text\":\"\",\"label\":\"pos\",\"features\":[1.0,2.5]}\n\n{\"id\":\"y\",\"timestamp\":4,\"text\":\"hi\",\"label\":\"neg\"}\n",
        );
        let ds = load_dataset(f.path(), DatasetFormat::Jsonl).unwrap();
        assert_eq!(ds.instances.len(), 2);
        assert_eq!(ds.instances[0].features.as_deref(), Some(&[1.0, 2.5][..]));
        assert_eq!(ds.classes.names(), ["neg", "pos"]);

        let bad = write_tmp(
            ".jsonl",
            "{\"id\":\"x\",\"timestamp\":-3,\"label\":\"a\",\"text\":\"t\"}\n",
        );
        assert!(matches!(
            load_dataset(bad.path(), DatasetFormat::Jsonl),
            Err(Error::Parse { line: 1, ref field, .. }) if field == "timestamp"
        ));
    }

    #[test]
    fn missing_file_error_carries_path() {
        let err = load_dataset("/nonexistent/stream.csv", DatasetFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/stream.csv"));
    }

    fn four_by_25() -> Vec<Instance> {
        (0..100)
            .map(|i| inst(&format!("i{i:03}"), 1000 + (i as u64 * 37) % 500, i % 4))
            .collect()
    }

    #[test]
    fn split_counts_for_100_instances() {
        let data = four_by_25();
        let opts = SplitOptions {
            test_frac: 0.2,
            z: 20,
            seed: 11,
            holdout: Holdout::Random,
        };
        let s = split_dataset(&data, &ClassSet::numbered(4), &opts).unwrap();
        assert_eq!(s.test.len(), 20);
        // Enumerate the warm-up per class: min(z, non-test members of that class).
        let mut expected_warmup = 0;
        for c in 0..4 {
            let remaining = 25 - s.test.iter().filter(|i| i.label == ClassId(c)).count();
            let got = s.warmup.iter().filter(|i| i.label == ClassId(c)).count();
            assert_eq!(got, remaining.min(20));
            expected_warmup += remaining.min(20);
        }
        assert_eq!(s.warmup.len(), expected_warmup);
        assert!(s.warmup.len() <= 80);
        assert_eq!(s.train.len(), 100 - 20 - s.warmup.len());
        assert!(s.train.windows(2).all(|w| by_time_then_id(&w[0], &w[1]).is_le()));
        assert!(s.absent_classes.is_empty());
    }

    #[test]
    fn z_larger_than_class_takes_everything() {
        let data = four_by_25();
        let opts = SplitOptions {
            test_frac: 0.2,
            z: 1000,
            seed: 3,
            holdout: Holdout::Random,
        };
        let s = split_dataset(&data, &ClassSet::numbered(4), &opts).unwrap();
        assert_eq!(s.warmup.len(), 80);
        assert!(s.train.is_empty());
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let data = four_by_25();
        let opts = SplitOptions {
            test_frac: 0.25,
            z: 5,
            seed: 99,
            holdout: Holdout::Random,
        };
        let a = split_dataset(&data, &ClassSet::numbered(5), &opts).unwrap();
        let b = split_dataset(&data, &ClassSet::numbered(5), &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.absent_classes, vec![ClassId(4)]);
        let mut ids: Vec<&str> = a
            .warmup
            .iter()
            .chain(&a.train)
            .chain(&a.test)
            .map(|i| i.id.as_str())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 100);
    }

    #[test]
    fn chronological_holdout_takes_latest() {
        let data = four_by_25();
        let opts = SplitOptions {
            test_frac: 0.1,
            z: 2,
            seed: 0,
            holdout: Holdout::Chronological,
        };
        let s = split_dataset(&data, &ClassSet::numbered(4), &opts).unwrap();
        let latest_test = s.test.iter().map(|i| i.timestamp).min().unwrap();
        assert!(s
            .train
            .iter()
            .chain(&s.warmup)
            .all(|i| i.timestamp <= latest_test));
    }

    #[test]
    fn split_rejects_bad_args() {
        let data = four_by_25();
        let classes = ClassSet::numbered(4);
        let mut opts = SplitOptions {
            test_frac: 1.0,
            z: 1,
            seed: 0,
            holdout: Holdout::Random,
        };
        assert!(split_dataset(&data, &classes, &opts).is_err());
        opts.test_frac = 0.2;
        opts.z = 0;
        assert!(split_dataset(&data, &classes, &opts).is_err());
    }

    fn spread(n: usize, days: u64) -> Vec<Instance> {
        (0..n)
            .map(|i| {
                let ts = if n == 1 {
                    0
                } else {
                    (i as u64 * days * SECONDS_PER_DAY) / (n as u64 - 1)
                };
                inst(&format!("{i:05}"), ts, 0)
            })
            .collect()
    }

    #[test]
    fn interval_size_examples() {
        let plan = compute_interval_size(&spread(1000, 10)).unwrap();
        assert_eq!((plan.per_interval, plan.num_intervals), (100, 10));

        let same: Vec<_> = (0..37).map(|i| inst(&i.to_string(), 500, 0)).collect();
        let plan = compute_interval_size(&same).unwrap();
        assert_eq!(
            (plan.per_interval, plan.num_intervals, plan.span_days),
            (37, 1, 1)
        );

        let train = spread(95, 10);
        let plan = compute_interval_size(&train).unwrap();
        assert_eq!((plan.per_interval, plan.num_intervals), (10, 10));
        assert_eq!(bin_stream(&train, &plan).last().unwrap().len(), 5);

        assert!(compute_interval_size(&[]).is_err());
    }

    #[test]
    fn bins_examples() {
        let train = spread(10, 1);
        let plan = IntervalPlan {
            per_interval: 5,
            num_intervals: 2,
            span_days: 1,
        };
        let bins = bin_stream(&train, &plan);
        assert_eq!(bins.len(), 2);
        assert_eq!(bins[0], &train[..5]);

        let sizes: Vec<_> = bin_stream(&train[..7], &plan).iter().map(|b| b.len()).collect();
        assert_eq!(sizes, [5, 2]);

        let big = IntervalPlan {
            per_interval: 50,
            ..plan
        };
        assert_eq!(bin_stream(&train, &big), vec![&train[..]]);
    }

    #[test]
    fn synthetic_degenerate_cases() {
        let mut spec = SyntheticSpec::axis_aligned(3, 4, 2.0, 0.0, 50, 2, 1).unwrap();
        spec.priors = vec![1.0, 0.0, 0.0];
        let ds = generate_synthetic_stream(&spec).unwrap();
        assert!(ds.instances.iter().all(|i| i.label == ClassId(0)));
        assert!(ds
            .instances
            .iter()
            .all(|i| i.features.as_deref() == Some(&spec.centroids[0][..])));
        assert!(ds.instances.iter().all(|i| i.timestamp < 2 * SECONDS_PER_DAY));

        spec.priors = vec![0.5, 0.6, 0.0];
        assert!(generate_synthetic_stream(&spec).is_err());
        spec.priors = vec![0.5, 0.5];
        assert!(generate_synthetic_stream(&spec).is_err());
    }

    #[test]
    fn synthetic_class_counts_within_binomial_bound() {
        let spec = SyntheticSpec::axis_aligned(4, 8, 3.0, 1.0, 4000, 10, 2024).unwrap();
        let ds = generate_synthetic_stream(&spec).unwrap();
        // Binomial(4000, 1/4): mean 1000, sd sqrt(4000 * 0.25 * 0.75) ~ 27.39.
        let sd = (4000.0f64 * 0.25 * 0.75).sqrt();
        for c in 0..4 {
            let count = ds.instances.iter().filter(|i| i.label == ClassId(c)).count() as f64;
            assert!((count - 1000.0).abs() <= 3.0 * sd, "class {c}: {count}");
        }
        assert_eq!(ds, generate_synthetic_stream(&spec).unwrap());
    }
}
