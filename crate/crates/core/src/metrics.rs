//! Multi-label evaluation metrics.
//!
//! Scores are an n x C matrix of real values (higher means more likely) and
//! targets an n x C 0/1 matrix. Ranking-based metrics break score ties
//! toward the lowest label (or sample) index; ranking loss counts tied
//! relevant/irrelevant pairs as mis-ordered.

use crate::error::fsx;
use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::{label_matrix, Dataset};
use crate::{Error, Result};

/// Anything that maps an n x d feature matrix to n x C label scores.
pub trait Scorer {
    fn scores(&self, features: &Array2<f64>) -> Result<Array2<f64>>;
}

fn check_shapes<A, B>(context: &str, a: &Array2<A>, b: &Array2<B>) -> Result<()> {
    if a.dim() != b.dim() {
        let (r, c) = a.dim();
        let (r2, c2) = b.dim();
        return Err(Error::shape(context, &[r, c], &[r2, c2]));
    }
    if a.is_empty() {
        return Err(Error::Empty(format!("{context}: no entries")));
    }
    Ok(())
}

fn check_scores(scores: &Array2<f64>) -> Result<()> {
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("score matrix".into()));
    }
    Ok(())
}

fn check_binary(context: &str, m: &Array2<u8>) -> Result<()> {
    if m.iter().any(|&v| v > 1) {
        return Err(Error::InvalidParameter(format!("{context} must be 0/1")));
    }
    Ok(())
}

/// Label indices sorted by descending score, lowest index first on ties.
pub fn descending_order(row: ArrayView1<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx
}

/// Global fraction of disagreeing positions.
pub fn hamming_loss(predictions: &Array2<u8>, targets: &Array2<u8>) -> Result<f64> {
    check_shapes("hamming_loss", predictions, targets)?;
    check_binary("hamming_loss predictions", predictions)?;
    check_binary("hamming_loss targets", targets)?;
    let wrong = predictions
        .iter()
        .zip(targets.iter())
        .filter(|(p, t)| p != t)
        .count();
    Ok(wrong as f64 / targets.len() as f64)
}

/// Per-row ranking loss, or `None` when the row has no relevant or no irrelevant label.
pub fn ranking_loss_row(scores: ArrayView1<f64>, targets: ArrayView1<u8>) -> Option<f64> {
    let relevant: Vec<f64> = scores
        .iter()
        .zip(targets)
        .filter(|(_, &t)| t == 1)
        .map(|(&s, _)| s)
        .collect();
    let irrelevant: Vec<f64> = scores
        .iter()
        .zip(targets)
        .filter(|(_, &t)| t == 0)
        .map(|(&s, _)| s)
        .collect();
    if relevant.is_empty() || irrelevant.is_empty() {
        return None;
    }
    // count pairs with relevant <= irrelevant via a sorted sweep
    let mut irr = irrelevant.clone();
    irr.sort_by(f64::total_cmp);
    let bad: usize = relevant
        .iter()
        .map(|&r| irr.len() - irr.partition_point(|&x| x < r))
        .sum();
    Some(bad as f64 / (relevant.len() * irrelevant.len()) as f64)
}

pub fn ranking_loss(scores: &Array2<f64>, targets: &Array2<u8>) -> Result<f64> {
    check_shapes("ranking_loss", scores, targets)?;
    check_scores(scores)?;
    check_binary("ranking_loss targets", targets)?;
    let mut total = 0.0;
    for (i, (s, t)) in scores.rows().into_iter().zip(targets.rows()).enumerate() {
        total += ranking_loss_row(s, t).ok_or(Error::InvalidRow {
            metric: "ranking_loss",
            row: i,
            reason: "needs at least one relevant and one irrelevant label",
        })?;
    }
    Ok(total / scores.nrows() as f64)
}

/// Whether any of the `n_rank` top-scored labels is relevant.
fn top_hit(scores: ArrayView1<f64>, targets: ArrayView1<u8>, n_rank: usize) -> bool {
    descending_order(scores)[..n_rank]
        .iter()
        .any(|&l| targets[l] == 1)
}

fn has_relevant(targets: ArrayView1<u8>) -> bool {
    targets.iter().any(|&t| t == 1)
}

pub fn one_error(scores: &Array2<f64>, targets: &Array2<u8>) -> Result<f64> {
    check_shapes("one_error", scores, targets)?;
    check_scores(scores)?;
    check_binary("one_error targets", targets)?;
    let mut misses = 0usize;
    for (i, (s, t)) in scores.rows().into_iter().zip(targets.rows()).enumerate() {
        if !has_relevant(t) {
            return Err(Error::InvalidRow {
                metric: "one_error",
                row: i,
                reason: "has no relevant label",
            });
        }
        misses += !top_hit(s, t, 1) as usize;
    }
    Ok(misses as f64 / scores.nrows() as f64)
}

/// Fraction of samples whose `n_rank` best-scored labels overlap the relevant set.
pub fn top_n_accuracy(scores: &Array2<f64>, targets: &Array2<u8>, n_rank: usize) -> Result<f64> {
    check_shapes("top_n_accuracy", scores, targets)?;
    check_scores(scores)?;
    check_binary("top_n_accuracy targets", targets)?;
    if n_rank < 1 || n_rank > scores.ncols() {
        return Err(Error::InvalidParameter(format!(
            "n_rank {n_rank} outside 1..={}",
            scores.ncols()
        )));
    }
    let hits = scores
        .rows()
        .into_iter()
        .zip(targets.rows())
        .filter(|(s, t)| top_hit(*s, *t, n_rank))
        .count();
    Ok(hits as f64 / scores.nrows() as f64)
}

/// Rank-precision average precision of one class column.
///
/// Samples are ranked by descending score with ties broken by lowest
/// sample index; AP averages `positives_so_far / rank` over the positives.
/// Returns `None` for a class without positives.
pub fn average_precision(scores: ArrayView1<f64>, targets: ArrayView1<u8>) -> Option<f64> {
    let positives = targets.iter().filter(|&&t| t == 1).count();
    if positives == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in descending_order(scores).iter().enumerate() {
        if targets[i] == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

/// Macro mAP plus the classes skipped for having no positive sample.
pub fn mean_average_precision_detailed(
    scores: &Array2<f64>,
    targets: &Array2<u8>,
) -> Result<(f64, Vec<usize>)> {
    check_shapes("mean_average_precision", scores, targets)?;
    check_scores(scores)?;
    check_binary("mean_average_precision targets", targets)?;
    let mut skipped = Vec::new();
    let mut aps = Vec::new();
    for (c, (s, t)) in scores
        .columns()
        .into_iter()
        .zip(targets.columns())
        .enumerate()
    {
        match average_precision(s, t) {
            Some(ap) => aps.push(ap),
            None => skipped.push(c),
        }
    }
    if aps.is_empty() {
        return Err(Error::Empty("no class has a positive sample".into()));
    }
    Ok((aps.iter().sum::<f64>() / aps.len() as f64, skipped))
}

pub fn mean_average_precision(scores: &Array2<f64>, targets: &Array2<u8>) -> Result<f64> {
    mean_average_precision_detailed(scores, targets).map(|(m, _)| m)
}

pub fn binarize(scores: &Array2<f64>, threshold: f64) -> Array2<u8> {
    scores.mapv(|s| (s >= threshold) as u8)
}

/// One row of the evaluation tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub top1_acc: f64,
    pub top3_acc: f64,
    pub top5_acc: f64,
    pub map: f64,
    pub hamming_loss: f64,
    pub ranking_loss: f64,
    pub one_error: f64,
    pub n: usize,
    #[serde(rename = "C")]
    pub num_labels: usize,
    pub threshold: f64,
    /// Rows left out of a metric because they violate its precondition.
    pub excluded_rows: BTreeMap<String, usize>,
    /// Classes without a positive sample, left out of mAP.
    pub skipped_classes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_n: Option<TopN>,
    /// Settings of the run that produced the report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopN {
    pub n: usize,
    pub acc: f64,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fsx::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fsx::read_to_string(path)?)?)
    }
}

fn mean_over<F>(scores: &Array2<f64>, targets: &Array2<u8>, f: F) -> (f64, usize)
where
    F: Fn(ArrayView1<f64>, ArrayView1<u8>) -> Option<f64>,
{
    let mut sum = 0.0;
    let mut used = 0usize;
    for (s, t) in scores.rows().into_iter().zip(targets.rows()) {
        if let Some(v) = f(s, t) {
            sum += v;
            used += 1;
        }
    }
    let mean = if used == 0 {
        f64::NAN
    } else {
        sum / used as f64
    };
    (mean, scores.nrows() - used)
}

/// Full report from precomputed scores.
///
/// Rows without a relevant label are excluded from top-n and one-error;
/// rows without a relevant or without an irrelevant label from ranking
/// loss. Top-n ranks larger than C are clamped to C. `extra_top_n` adds
/// one more top-n accuracy to the report.
pub fn evaluate_scores(
    scores: &Array2<f64>,
    targets: &Array2<u8>,
    threshold: f64,
    extra_top_n: Option<usize>,
) -> Result<MetricsReport> {
    check_shapes("evaluate", scores, targets)?;
    check_scores(scores)?;
    check_binary("evaluate targets", targets)?;
    let c = scores.ncols();
    if let Some(n) = extra_top_n {
        if n < 1 || n > c {
            return Err(Error::InvalidParameter(format!(
                "top-n {n} outside 1..={c}"
            )));
        }
    }

    let top = |n: usize| {
        let n = n.min(c);
        mean_over(scores, targets, |s, t| {
            has_relevant(t).then(|| top_hit(s, t, n) as u8 as f64)
        })
    };
    let (top1, top_excluded) = top(1);
    let (top3, _) = top(3);
    let (top5, _) = top(5);
    let (ranking, ranking_excluded) = mean_over(scores, targets, ranking_loss_row);
    let (map, skipped) = mean_average_precision_detailed(scores, targets)?;
    let hamming = hamming_loss(&binarize(scores, threshold), targets)?;

    let mut excluded = BTreeMap::new();
    excluded.insert("top_n".to_string(), top_excluded);
    excluded.insert("one_error".to_string(), top_excluded);
    excluded.insert("ranking_loss".to_string(), ranking_excluded);

    Ok(MetricsReport {
        top1_acc: top1,
        top3_acc: top3,
        top5_acc: top5,
        map,
        hamming_loss: hamming,
        ranking_loss: ranking,
        one_error: 1.0 - top1,
        n: scores.nrows(),
        num_labels: c,
        threshold,
        excluded_rows: excluded,
        skipped_classes: skipped,
        top_n: extra_top_n.map(|n| TopN { n, acc: top(n).0 }),
        run: None,
    })
}

/// Scores the dataset once and reports every metric against its label sets.
pub fn evaluate(scorer: &dyn Scorer, dataset: &Dataset, threshold: f64) -> Result<MetricsReport> {
    let scores = scorer.scores(&dataset.feature_matrix())?;
    evaluate_scores(&scores, &label_matrix(dataset), threshold, None)
}
