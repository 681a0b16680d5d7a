//! Rank-based ROC AUC with midrank tie correction.
//!
//! Ranks are kept doubled so every midrank is an integer; the Mann-Whitney
//! numerator is therefore exact and the only rounding happens in the final
//! division.

use serde::{Deserialize, Serialize};

use super::{Example, LinearModel};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::stream::ClassId;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Average {
    /// Pool one-vs-rest pairs of all classes into a single ranking.
    #[default]
    Micro,
    /// Unweighted mean of per-class one-vs-rest AUCs.
    Macro,
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half. `None` when either side is empty.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len(), "scores and labels differ in length");
    let n_pos = positive.iter().filter(|&&p| p).count() as u128;
    let n_neg = positive.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum over positives of 2 * midrank (1-based ranks).
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]].total_cmp(&scores[order[start]]).is_eq() {
            end += 1;
        }
        // Ranks start+1 ..= end share the midrank (start + 1 + end) / 2.
        let doubled_midrank = (start + 1 + end) as u128;
        let group_pos = order[start..end].iter().filter(|&&i| positive[i]).count() as u128;
        doubled_rank_sum += group_pos * doubled_midrank;
        start = end;
    }
    let doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    Some(doubled_u as f64 / (2 * n_pos * n_neg) as f64)
}

fn distinct_labels<E: Example>(test: &[E]) -> usize {
    let mut seen: Vec<ClassId> = test.iter().map(Example::y).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

pub fn auc_micro<E: Example>(model: &LinearModel, test: &[E]) -> Result<f64> {
    auc_with(model, test, Average::Micro, Execution::default())
}

pub fn auc_macro<E: Example>(model: &LinearModel, test: &[E]) -> Result<f64> {
    auc_with(model, test, Average::Macro, Execution::default())
}

pub fn auc_with<E: Example>(
    model: &LinearModel,
    test: &[E],
    average: Average,
    exec: Execution,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::UndefinedAuc("empty test set".into()));
    }
    if distinct_labels(test) < 2 {
        return Err(Error::UndefinedAuc("test set holds a single class".into()));
    }
    for e in test {
        if e.y().index() >= model.num_classes() {
            return Err(Error::invalid(format!(
                "label {} outside the model's classes",
                e.y().index()
            )));
        }
    }
    let probs = par::map_with(exec, test, |e| model.predict_proba(e.x()).probs);
    let k = model.num_classes();
    match average {
        Average::Micro => {
            let mut scores = Vec::with_capacity(test.len() * k);
            let mut positive = Vec::with_capacity(test.len() * k);
            for (e, p) in test.iter().zip(&probs) {
                for (c, &prob) in p.iter().enumerate() {
                    scores.push(prob);
                    positive.push(e.y().index() == c);
                }
            }
            Ok(roc_auc(&scores, &positive).expect("two labels present"))
        }
        Average::Macro => {
            let per_class: Vec<f64> = (0..k)
                .filter_map(|c| {
                    let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
                    let positive: Vec<bool> = test.iter().map(|e| e.y().index() == c).collect();
                    roc_auc(&scores, &positive)
                })
                .collect();
            Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
        }
    }
}
