//! Annotation sampling: random, uncertainty, and error-mitigating.
//!
//! The error-mitigating sampler keeps a context window of recently annotated
//! instances and an error matrix with one row per annotated instance and one
//! column per ordered class pair `(c_j, c_k)`. For a row annotated `c_k`,
//! cell `(c_j, c_k)` is the fraction of window instances annotated `c_j`
//! that the model misclassifies after one update on the new instance. A
//! class's bias score sums its rows' cells; its forget score is
//! `exp(-dT)` over the gap between its last two window appearances. The
//! class with the largest product is skipped for the interval.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, FeaturedInstance};
use crate::learner::LinearModel;
use crate::par;
use crate::rng::{seeded, streams};
use crate::stream::{ClassId, ClassSet};

/// Discarding only starts once this many intervals have passed.
pub const DISCARD_WARMUP_INTERVALS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Random,
    Uncertainty,
    ErrorMitigating,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 3] = [
        SamplerKind::Random,
        SamplerKind::Uncertainty,
        SamplerKind::ErrorMitigating,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Random => "random",
            SamplerKind::Uncertainty => "uncertainty",
            SamplerKind::ErrorMitigating => "error_mitigating",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "random" => Ok(SamplerKind::Random),
            "uncertainty" => Ok(SamplerKind::Uncertainty),
            "error_mitigating" | "mitigating" => Ok(SamplerKind::ErrorMitigating),
            other => Err(Error::invalid(format!(
                "unknown sampler `{other}` (expected random, uncertainty or error_mitigating)"
            ))),
        }
    }
}

/// Closed confidence band `[lo, hi]` on the top class probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Band {
    fn default() -> Self {
        Band { lo: 0.30, hi: 0.70 }
    }
}

impl Band {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::invalid(format!(
                "band needs 0 <= lo < hi <= 1, got [{lo}, {hi}]"
            )));
        }
        Ok(Band { lo, hi })
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }
}

/// Items whose top class probability lies inside `band`, in input order.
pub fn uncertainty_region<'a>(
    model: &LinearModel,
    batch: &'a [FeaturedInstance],
    band: Band,
) -> Vec<&'a FeaturedInstance> {
    let inside = par::map(batch, |item| {
        band.contains(model.predict_proba(item.x.as_slice()).max_prob())
    });
    batch
        .iter()
        .zip(inside)
        .filter_map(|(item, keep)| keep.then_some(item))
        .collect()
}

/// Uniform sample of `n` items without replacement, kept in input order.
/// `n` larger than the batch is clamped.
pub fn random_sample<T>(batch: &[T], n: usize, seed: u64) -> Vec<&T> {
    let n = if n > batch.len() {
        log::warn!("random sample of {n} clamped to batch size {}", batch.len());
        batch.len()
    } else {
        n
    };
    let mut rng = seeded(seed, streams::RANDOM_SAMPLER);
    let mut picked = rand::seq::index::sample(&mut rng, batch.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| &batch[i]).collect()
}

/// Unit of the gap between a class's last two appearances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaUnit {
    /// Difference of arrival interval indices.
    #[default]
    Interval,
    /// Difference of positions in the annotated sequence.
    Instance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgetClock {
    pub unit: DeltaUnit,
    /// Multiplies the raw index difference.
    pub scale: f64,
}

impl Default for ForgetClock {
    fn default() -> Self {
        ForgetClock {
            unit: DeltaUnit::Interval,
            scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowEntry {
    pub id: String,
    pub interval: usize,
    /// Position in the annotated sequence.
    pub position: usize,
    pub x: FeatureVector,
    /// Label given by the annotator, not necessarily the truth.
    pub label: ClassId,
}

/// Annotated instances from the most recent `length` intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextWindow {
    length: usize,
    current: usize,
    entries: VecDeque<WindowEntry>,
}

impl ContextWindow {
    pub fn new(length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::invalid("context window must span at least one interval"));
        }
        Ok(ContextWindow {
            length,
            current: 0,
            entries: VecDeque::new(),
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn current(&self) -> usize {
        self.current
    }

    /// Oldest interval still inside the window.
    pub fn oldest_interval(&self) -> usize {
        (self.current + 1).saturating_sub(self.length)
    }

    pub fn contains_interval(&self, interval: usize) -> bool {
        interval >= self.oldest_interval() && interval <= self.current
    }

    /// Moves to `interval` and drops entries that fell out of the window.
    pub fn advance_to(&mut self, interval: usize) -> Result<()> {
        if interval < self.current {
            return Err(Error::invalid(format!(
                "window cannot move back from interval {} to {interval}",
                self.current
            )));
        }
        self.current = interval;
        let oldest = self.oldest_interval();
        while self.entries.front().is_some_and(|e| e.interval < oldest) {
            self.entries.pop_front();
        }
        Ok(())
    }

    /// Appends an entry of the current interval.
    pub fn push(&mut self, entry: WindowEntry) -> Result<()> {
        if entry.interval != self.current {
            return Err(Error::invalid(format!(
                "entry from interval {} pushed into window at interval {}",
                entry.interval, self.current
            )));
        }
        if self.entries.back().is_some_and(|e| e.position > entry.position) {
            return Err(Error::invalid("window entries must arrive in annotation order"));
        }
        self.entries.push_back(entry);
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = &WindowEntry> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub id: String,
    pub interval: usize,
    pub label: ClassId,
    pub cells: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMatrix {
    class_count: usize,
    columns: Vec<(ClassId, ClassId)>,
    rows: Vec<ErrorRow>,
    /// Cells of the most recently appended row, kept across pruning.
    carry: Vec<f64>,
}

impl ErrorMatrix {
    pub fn new(class_count: usize) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::invalid("error matrix needs at least two classes"));
        }
        let columns: Vec<(ClassId, ClassId)> = (0..class_count)
            .flat_map(|j| {
                (0..class_count)
                    .filter(move |&k| k != j)
                    .map(move |k| (ClassId(j), ClassId(k)))
            })
            .collect();
        let width = columns.len();
        Ok(ErrorMatrix {
            class_count,
            columns,
            rows: Vec::new(),
            carry: vec![0.0; width],
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Ordered pairs `(c_j, c_k)`, `j != k`, sorted by `j` then `k`.
    pub fn columns(&self) -> &[(ClassId, ClassId)] {
        &self.columns
    }

    pub fn rows(&self) -> &[ErrorRow] {
        &self.rows
    }

    pub fn column_index(&self, j: ClassId, k: ClassId) -> Option<usize> {
        let (j, k) = (j.index(), k.index());
        if j == k || j >= self.class_count || k >= self.class_count {
            return None;
        }
        Some(j * (self.class_count - 1) + if k < j { k } else { k - 1 })
    }

    pub fn cell(&self, row: usize, j: ClassId, k: ClassId) -> Option<f64> {
        Some(self.rows.get(row)?.cells[self.column_index(j, k)?])
    }

    /// Drops rows whose interval is outside `window`.
    pub fn prune(&mut self, window: &ContextWindow) {
        self.rows.retain(|r| window.contains_interval(r.interval));
    }

    /// Appends the row for an instance annotated `label` and returns the model
    /// updated on that instance. The window should not yet hold the instance.
    pub fn append(
        &mut self,
        model: &LinearModel,
        id: &str,
        interval: usize,
        x: &[f64],
        label: ClassId,
        window: &ContextWindow,
    ) -> Result<LinearModel> {
        if label.index() >= self.class_count {
            return Err(Error::invalid(format!(
                "label {} outside the matrix classes",
                label.index()
            )));
        }
        let updated = model.clone_and_update(x, label)?;
        let entries: Vec<&WindowEntry> = window.entries().collect();
        let wrong = par::map(&entries, |e| {
            updated.predict_proba(e.x.as_slice()).argmax() != e.label
        });
        let mut totals = vec![0usize; self.class_count];
        let mut misses = vec![0usize; self.class_count];
        for (e, w) in entries.iter().zip(wrong) {
            totals[e.label.index()] += 1;
            misses[e.label.index()] += usize::from(w);
        }

        let mut cells = self.carry.clone();
        for j in 0..self.class_count {
            if j == label.index() || totals[j] == 0 {
                continue;
            }
            let col = self.column_index(ClassId(j), label).expect("j != k");
            cells[col] = misses[j] as f64 / totals[j] as f64;
        }
        self.carry.clone_from(&cells);
        self.rows.push(ErrorRow {
            id: id.to_string(),
            interval,
            label,
            cells,
        });
        Ok(updated)
    }

    /// CSV dump: `row_id,class,interval`, then one column per class pair.
    pub fn write_csv<W: Write>(&self, classes: &ClassSet, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["row_id".to_string(), "class".to_string(), "interval".to_string()];
        header.extend(
            self.columns
                .iter()
                .map(|(j, k)| format!("({},{})", classes.name(*j), classes.name(*k))),
        );
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.id.clone(),
                classes.name(r.label).to_string(),
                r.interval.to_string(),
            ];
            rec.extend(r.cells.iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<error matrix>", e))?;
        Ok(())
    }
}

fn row_bias(matrix: &ErrorMatrix, row: &ErrorRow) -> f64 {
    (0..matrix.class_count)
        .filter(|&j| j != row.label.index())
        .map(|j| row.cells[matrix.column_index(ClassId(j), row.label).expect("j != k")])
        .sum()
}

/// Sum over rows annotated `class` of their `(c_j, class)` cells.
pub fn bias_score(matrix: &ErrorMatrix, class: ClassId) -> f64 {
    matrix
        .rows
        .iter()
        .filter(|r| r.label == class)
        .map(|r| row_bias(matrix, r))
        .sum()
}

/// [`bias_score`] restricted to rows from intervals inside `window`.
pub fn bias_score_in_window(matrix: &ErrorMatrix, window: &ContextWindow, class: ClassId) -> f64 {
    matrix
        .rows
        .iter()
        .filter(|r| r.label == class && window.contains_interval(r.interval))
        .map(|r| row_bias(matrix, r))
        .sum()
}

/// `exp(-dT)` for the gap between the last two window entries annotated `class`;
/// 0 when the class appears fewer than twice.
pub fn forget_score_class(window: &ContextWindow, class: ClassId, clock: ForgetClock) -> f64 {
    let mut last_two = window.entries.iter().rev().filter(|e| e.label == class).take(2);
    let (Some(latest), Some(previous)) = (last_two.next(), last_two.next()) else {
        return 0.0;
    };
    let raw = match clock.unit {
        DeltaUnit::Interval => latest.interval - previous.interval,
        DeltaUnit::Instance => latest.position - previous.position,
    };
    (-(raw as f64 * clock.scale)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassScore {
    pub class: ClassId,
    pub bias: f64,
    pub forget: f64,
    pub score: f64,
}

pub fn class_scores(matrix: &ErrorMatrix, window: &ContextWindow, clock: ForgetClock) -> Vec<ClassScore> {
    (0..matrix.class_count)
        .map(ClassId)
        .map(|class| {
            let bias = bias_score_in_window(matrix, window, class);
            let forget = forget_score_class(window, class, clock);
            ClassScore {
                class,
                bias,
                forget,
                score: forget * bias,
            }
        })
        .collect()
}

/// Highest-scoring class, or `None` during the first three intervals or
/// when every score is zero. Ties go to the smallest class index.
pub fn class_to_discard(
    matrix: &ErrorMatrix,
    window: &ContextWindow,
    interval_index: usize,
    clock: ForgetClock,
) -> Option<ClassId> {
    if interval_index <= DISCARD_WARMUP_INTERVALS {
        return None;
    }
    argmax_positive(&class_scores(matrix, window, clock))
}

fn argmax_positive(scores: &[ClassScore]) -> Option<ClassId> {
    let mut best: Option<&ClassScore> = None;
    for s in scores {
        if s.score > 0.0 && best.is_none_or(|b| s.score > b.score) {
            best = Some(s);
        }
    }
    best.map(|s| s.class)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MitigatedSelection<'a> {
    pub selected: Vec<&'a FeaturedInstance>,
    /// Size of the uncertainty region before discarding.
    pub region_size: usize,
    pub discarded_class: Option<ClassId>,
}

/// Uncertainty region minus the items `model` predicts as the discard class.
pub fn error_mitigating_sample<'a>(
    model: &LinearModel,
    batch: &'a [FeaturedInstance],
    matrix: &ErrorMatrix,
    window: &ContextWindow,
    interval_index: usize,
    band: Band,
    clock: ForgetClock,
) -> MitigatedSelection<'a> {
    let region = uncertainty_region(model, batch, band);
    let region_size = region.len();
    let discarded_class = class_to_discard(matrix, window, interval_index, clock);
    let selected = match discarded_class {
        None => region,
        Some(c) => {
            let predicted = par::map(&region, |item| model.predict_proba(item.x.as_slice()).argmax());
            region
                .into_iter()
                .zip(predicted)
                .filter_map(|(item, p)| (p != c).then_some(item))
                .collect()
        }
    };
    MitigatedSelection {
        selected,
        region_size,
        discarded_class,
    }
}
