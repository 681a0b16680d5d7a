//! Crowd annotation schedules: fixed and generated sequences, permutation of
//! target items, per-position error rates and the significance test.

use std::fs::File;
use std::path::Path;

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::{erf::erfc, factorial::ln_binomial};

use crate::error::{Error, Result};
use crate::oracle::ErrorType;
use crate::rng::{seeded, streams};
use crate::stream::{ClassId, ClassSet};

/// Ordered classes shown to an annotator, with the positions of the target class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub sequence: Vec<ClassId>,
    pub target: ClassId,
    pub target_positions: Vec<usize>,
}

impl Schedule {
    pub fn new(sequence: Vec<ClassId>, target: ClassId, target_positions: Vec<usize>) -> Result<Self> {
        if target_positions.is_empty() || target_positions.len() > sequence.len() {
            return Err(Error::invalid("schedule needs between 1 and L target positions"));
        }
        if target_positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("target positions must be strictly increasing"));
        }
        if target_positions.iter().any(|&p| sequence.get(p) != Some(&target)) {
            return Err(Error::invalid("every target position must hold the target class"));
        }
        Ok(Schedule {
            sequence,
            target,
            target_positions,
        })
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    /// Distances between consecutive target positions.
    pub fn gaps(&self) -> Vec<usize> {
        self.target_positions.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn to_json(&self, classes: &ClassSet) -> ScheduleJson {
        ScheduleJson {
            sequence: self
                .sequence
                .iter()
                .map(|c| classes.name(*c).to_string())
                .collect(),
            target: classes.name(self.target).to_string(),
            target_positions: self.target_positions.clone(),
        }
    }

    pub fn from_json(json: &ScheduleJson, classes: &ClassSet) -> Result<Self> {
        let id = |name: &str| {
            classes
                .id_of(name)
                .ok_or_else(|| Error::invalid(format!("unknown class `{name}` in schedule")))
        };
        let sequence = json.sequence.iter().map(|n| id(n)).collect::<Result<Vec<_>>>()?;
        Schedule::new(sequence, id(&json.target)?, json.target_positions.clone())
    }
}

/// Interchange form: `{sequence, target, target_positions}` with class names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleJson {
    pub sequence: Vec<String>,
    pub target: String,
    pub target_positions: Vec<usize>,
}

fn parse_classes(classes: &ClassSet, names: &[&str]) -> Vec<ClassId> {
    names.iter().map(|n| classes.id_of(n).expect("c1..c4")).collect()
}

/// The two 20-item crowd schedules over classes `c1..c4`, target `c3`.
/// Returns `(slip, mistake)`.
pub fn crowd_schedules() -> (Schedule, Schedule) {
    let classes = ClassSet::numbered(4);
    let target = classes.id_of("c3").expect("c3");
    let slip = parse_classes(
        &classes,
        &[
            "c4", "c1", "c2", "c3", "c1", "c3", "c4", "c1", "c4", "c1", "c4", "c2", "c1", "c4", "c1", "c2",
            "c4", "c2", "c4", "c3",
        ],
    );
    let mistake = parse_classes(
        &classes,
        &[
            "c4", "c1", "c2", "c1", "c4", "c2", "c1", "c4", "c3", "c1", "c2", "c4", "c3", "c1", "c2", "c1",
            "c3", "c2", "c4", "c4",
        ],
    );
    (
        Schedule::new(slip, target, vec![3, 5, 19]).expect("valid slip schedule"),
        Schedule::new(mistake, target, vec![8, 12, 16]).expect("valid mistake schedule"),
    )
}

/// Builds a schedule of `length` items with `target_count` target positions.
///
/// `Mistake` spaces targets evenly with gap `length / target_count`, leaving
/// the remainder at the tail. `Slip` packs targets with gap 2 after a seeded
/// lead-in and puts the last one at the end of the sequence, giving one long
/// gap of at least twice the short one. Other positions draw uniformly from
/// the non-target classes.
pub fn generate_schedule(
    kind: ErrorType,
    classes: &ClassSet,
    target: ClassId,
    length: usize,
    target_count: usize,
    seed: u64,
) -> Result<Schedule> {
    if classes.len() < 2 || target.index() >= classes.len() {
        return Err(Error::invalid("need at least two classes including the target"));
    }
    if target_count < 2 || length < 2 * target_count {
        return Err(Error::invalid(format!(
            "infeasible schedule: {target_count} targets in {length} items"
        )));
    }
    let mut rng = seeded(seed, streams::SCHEDULE);
    let positions: Vec<usize> = match kind {
        ErrorType::Mistake => {
            let gap = length / target_count;
            (0..target_count).map(|i| gap - 1 + i * gap).collect()
        }
        ErrorType::Slip => {
            const SHORT: usize = 2;
            if target_count < 3 {
                return Err(Error::invalid(
                    "infeasible slip schedule: non-uniform gaps need at least 3 targets",
                ));
            }
            // Last target at length - 1, long gap >= 2 * SHORT.
            let packed = SHORT * (target_count - 2);
            let max_start = (length - 1).checked_sub(packed + 2 * SHORT).ok_or_else(|| {
                Error::invalid(format!(
                    "infeasible slip schedule: {target_count} targets in {length} items"
                ))
            })?;
            let start = rng.random_range(0..=max_start / 2);
            let mut p: Vec<usize> = (0..target_count - 1).map(|i| start + SHORT * i).collect();
            p.push(length - 1);
            p
        }
    };
    let others: Vec<ClassId> = classes.ids().filter(|c| *c != target).collect();
    let mut sequence: Vec<ClassId> = (0..length)
        .map(|_| others[rng.random_range(0..others.len())])
        .collect();
    for &p in &positions {
        sequence[p] = target;
    }
    Schedule::new(sequence, target, positions)
}

/// One assignment of target items to target positions: `(position, item)`.
pub type Assignment = Vec<(usize, String)>;

/// Every assignment of `items` to the target positions, in lexicographic
/// permutation order of the items.
pub fn permute_target_positions(schedule: &Schedule, items: &[String]) -> Result<Vec<Assignment>> {
    if items.len() != schedule.target_positions.len() {
        return Err(Error::invalid(format!(
            "{} items for {} target positions",
            items.len(),
            schedule.target_positions.len()
        )));
    }
    if items.iter().unique().count() != items.len() {
        return Err(Error::invalid("target items must be distinct"));
    }
    Ok((0..items.len())
        .permutations(items.len())
        .map(|perm| {
            schedule
                .target_positions
                .iter()
                .zip(perm)
                .map(|(&pos, i)| (pos, items[i].clone()))
                .collect()
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Response {
    pub judge: String,
    /// Chosen class per schedule position.
    pub labels: Vec<ClassId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResponseSet {
    pub responses: Vec<Response>,
}

impl ResponseSet {
    /// Reads `judge_id,position,chosen_label` rows; every judge must cover
    /// positions `0..length` exactly once.
    pub fn load_csv(path: impl AsRef<Path>, classes: &ClassSet, length: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let mut judges: Vec<(String, Vec<Option<ClassId>>)> = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let judge = rec
                .get(0)
                .ok_or_else(|| Error::parse(line, "judge_id", "missing"))?
                .to_string();
            let position: usize = rec
                .get(1)
                .and_then(|v| v.trim().parse().ok())
                .filter(|p| *p < length)
                .ok_or_else(|| Error::parse(line, "position", format!("expected an index below {length}")))?;
            let name = rec.get(2).map(str::trim).unwrap_or_default();
            let label = classes
                .id_of(name)
                .ok_or_else(|| Error::parse(line, "chosen_label", format!("unknown class `{name}`")))?;
            let slot = match judges.iter().position(|(j, _)| *j == judge) {
                Some(i) => i,
                None => {
                    judges.push((judge.clone(), vec![None; length]));
                    judges.len() - 1
                }
            };
            if judges[slot].1[position].replace(label).is_some() {
                return Err(Error::parse(
                    line,
                    "position",
                    format!("judge `{judge}` answered twice"),
                ));
            }
        }
        let responses = judges
            .into_iter()
            .map(|(judge, labels)| {
                let labels = labels
                    .into_iter()
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| Error::invalid(format!("judge `{judge}` skipped positions")))?;
                Ok(Response { judge, labels })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ResponseSet { responses })
    }
}

/// `(wrong, total)` at each target position.
pub fn position_error_counts(responses: &ResponseSet, schedule: &Schedule) -> Result<Vec<(usize, usize)>> {
    if responses.responses.is_empty() {
        return Err(Error::invalid("no responses"));
    }
    if responses
        .responses
        .iter()
        .any(|r| r.labels.len() != schedule.len())
    {
        return Err(Error::invalid("every response must cover the whole schedule"));
    }
    Ok(schedule
        .target_positions
        .iter()
        .map(|&p| {
            let wrong = responses
                .responses
                .iter()
                .filter(|r| r.labels[p] != schedule.target)
                .count();
            (wrong, responses.responses.len())
        })
        .collect())
}

/// Fraction of responses not choosing the target class, per target position.
pub fn position_error_rates(responses: &ResponseSet, schedule: &Schedule) -> Result<Vec<f64>> {
    Ok(position_error_counts(responses, schedule)?
        .into_iter()
        .map(|(w, n)| w as f64 / n as f64)
        .collect())
}

/// Per-position rates over several response sets (e.g. the permutation
/// cases of one schedule), pooling judges before dividing.
pub fn pooled_position_error_rates(cases: &[(&ResponseSet, &Schedule)]) -> Result<Vec<f64>> {
    let mut pooled: Option<Vec<(usize, usize)>> = None;
    for (responses, schedule) in cases {
        let counts = position_error_counts(responses, schedule)?;
        pooled = Some(match pooled {
            None => counts,
            Some(acc) if acc.len() == counts.len() => acc
                .iter()
                .zip(&counts)
                .map(|(a, c)| (a.0 + c.0, a.1 + c.1))
                .collect(),
            Some(_) => return Err(Error::invalid("cases differ in number of target positions")),
        });
    }
    let pooled = pooled.ok_or_else(|| Error::invalid("no cases"))?;
    Ok(pooled.into_iter().map(|(w, n)| w as f64 / n as f64).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProportionTest {
    /// Pooled two-proportion z-test.
    #[default]
    Z,
    /// Fisher's exact test on the 2x2 table.
    Fisher,
}

/// Two-tailed p-value for the difference of two error proportions.
pub fn two_tailed_position_test(
    first: (usize, usize),
    second: (usize, usize),
    test: ProportionTest,
) -> Result<f64> {
    let ((w1, n1), (w2, n2)) = (first, second);
    if n1 == 0 || n2 == 0 {
        return Err(Error::invalid("both groups need at least one response"));
    }
    if w1 > n1 || w2 > n2 {
        return Err(Error::invalid("wrong count exceeds total"));
    }
    Ok(match test {
        ProportionTest::Z => pooled_z_test(w1, n1, w2, n2),
        ProportionTest::Fisher => fisher_exact(w1, n1, w2, n2),
    })
}

fn pooled_z_test(w1: usize, n1: usize, w2: usize, n2: usize) -> f64 {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    // Cross-multiplied comparison so equal proportions are detected exactly.
    if w1 * n2 == w2 * n1 {
        return 1.0;
    }
    let pooled = (w1 + w2) as f64 / (n1f + n2f);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = (w1 as f64 / n1f - w2 as f64 / n2f) / se;
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

fn fisher_exact(w1: usize, n1: usize, w2: usize, n2: usize) -> f64 {
    let wrong = w1 + w2;
    let total = (n1 + n2) as u64;
    let ln_p = |a: usize| {
        ln_binomial(n1 as u64, a as u64) + ln_binomial(n2 as u64, (wrong - a) as u64)
            - ln_binomial(total, wrong as u64)
    };
    let lo = wrong.saturating_sub(n2);
    let hi = wrong.min(n1);
    let observed = ln_p(w1);
    let p: f64 = (lo..=hi)
        .map(ln_p)
        .filter(|&lp| lp <= observed + 1e-7)
        .map(f64::exp)
        .sum();
    p.min(1.0)
}

/// Last target position against the union of the earlier ones.
pub fn last_vs_earlier_test(counts: &[(usize, usize)], test: ProportionTest) -> Result<f64> {
    let (last, earlier) = counts
        .split_last()
        .filter(|(_, e)| !e.is_empty())
        .ok_or_else(|| Error::invalid("need at least two target positions"))?;
    let union = earlier.iter().fold((0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1));
    two_tailed_position_test(*last, union, test)
}
