//! Metric writers. CSV and JSON carry the same records and the same keys.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::IntervalMetrics;
use crate::error::{Error, Result};
use crate::learner::Average;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Serialize)]
struct Record<'a> {
    run_id: usize,
    interval: usize,
    sampler: &'static str,
    regime: &'a str,
    seed: u64,
    #[serde(rename = "N")]
    batch_size: usize,
    n: usize,
    m: usize,
    discarded_class: Option<&'a str>,
    cumulative_annotated: usize,
    /// One entry keyed `auc_micro` or `auc_macro`.
    #[serde(flatten)]
    auc: BTreeMap<&'static str, f64>,
}

impl<'a> Record<'a> {
    fn new(m: &'a IntervalMetrics, average: Average) -> Self {
        Record {
            run_id: m.run_id,
            interval: m.interval,
            sampler: m.sampler.name(),
            regime: &m.regime,
            seed: m.seed,
            batch_size: m.batch_size,
            n: m.region_size,
            m: m.annotated,
            discarded_class: m.discarded_class.as_deref(),
            cumulative_annotated: m.cumulative_annotated,
            auc: BTreeMap::from([(auc_key(average), m.auc)]),
        }
    }
}

fn auc_key(average: Average) -> &'static str {
    match average {
        Average::Micro => "auc_micro",
        Average::Macro => "auc_macro",
    }
}

/// One header line, then one line per record. An absent discard class is an
/// empty field.
pub fn write_metrics_csv<W: Write>(rows: &[IntervalMetrics], average: Average, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "run_id",
        "interval",
        "sampler",
        "regime",
        "seed",
        "N",
        "n",
        "m",
        "discarded_class",
        "cumulative_annotated",
        auc_key(average),
    ])?;
    for m in rows {
        let r = Record::new(m, average);
        w.write_record([
            r.run_id.to_string(),
            r.interval.to_string(),
            r.sampler.to_string(),
            r.regime.to_string(),
            r.seed.to_string(),
            r.batch_size.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            r.discarded_class.unwrap_or("").to_string(),
            r.cumulative_annotated.to_string(),
            m.auc.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<metrics output>", e))?;
    Ok(())
}

/// A JSON array of records, keyed like the CSV columns.
pub fn write_metrics_json<W: Write>(rows: &[IntervalMetrics], average: Average, mut out: W) -> Result<()> {
    let records: Vec<Record> = rows.iter().map(|m| Record::new(m, average)).collect();
    serde_json::to_writer_pretty(&mut out, &records)?;
    writeln!(out).map_err(|e| Error::io("<metrics output>", e))?;
    Ok(())
}
