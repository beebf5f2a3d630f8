//! Exact ranking and confusion-matrix metrics for imbalanced binary tasks:
//! AUC-ROC (Mann-Whitney with tie handling), AUC-PRC (interpolation-free
//! step-curve summation), and MCC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores with binary labels.
#[derive(Debug, Clone)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Metric(format!(
                "{} scores vs {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Metric("labels must be 0 or 1".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Metric("scores must be finite".into()));
        }
        Ok(ScoredSet { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie), computed via
/// average ranks in O(n log n). Requires both classes.
pub fn auc_roc(scored: &ScoredSet) -> Result<f64> {
    let n_pos = scored.n_positive();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric(
            "AUC-ROC needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored.scores[a].total_cmp(&scored.scores[b]));
    // average ranks over tie groups, 1-based
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scored.scores[order[j]] == scored.scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1..=j
        for &idx in &order[i..j] {
            if scored.labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let np = n_pos as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// One point of the precision-recall step curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision-recall curve over descending distinct score thresholds; at each
/// threshold t predictions are `score >= t`. Tied scores enter together.
pub fn pr_curve(scored: &ScoredSet) -> Result<Vec<PrPoint>> {
    let n_pos = scored.n_positive();
    if n_pos == 0 {
        return Err(Error::Metric("PR curve needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored.scores[b].total_cmp(&scored.scores[a]));
    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let t = scored.scores[order[i]];
        let mut j = i;
        while j < order.len() && scored.scores[order[j]] == t {
            if scored.labels[order[j]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push(PrPoint {
            threshold: t,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / n_pos as f64,
        });
        i = j;
    }
    Ok(points)
}

/// Area under the precision-recall step curve: sum of
/// (R_k - R_{k-1}) * P_k with R_0 = 0, no interpolation.
pub fn auc_prc(scored: &ScoredSet) -> Result<f64> {
    let curve = pr_curve(scored)?;
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for p in curve {
        area += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    Ok(area)
}

/// Binary confusion counts at a threshold (`score >= threshold` is positive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

pub fn confusion(scored: &ScoredSet, threshold: f64) -> Confusion {
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
    };
    for (s, &l) in scored.scores.iter().zip(&scored.labels) {
        match (*s >= threshold, l == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

impl Confusion {
    /// Matthews correlation coefficient; 0 when any marginal is zero.
    pub fn mcc(&self) -> f64 {
        let (tp, fp, fn_, tn) = (
            self.tp as f64,
            self.fp as f64,
            self.fn_ as f64,
            self.tn as f64,
        );
        let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if denom == 0.0 {
            return 0.0;
        }
        (tp * tn - fp * fn_) / denom.sqrt()
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            return 0.0;
        }
        2.0 * self.tp as f64 / denom as f64
    }
}

pub fn mcc(scored: &ScoredSet, threshold: f64) -> f64 {
    confusion(scored, threshold).mcc()
}

/// One row of a metric report, mirroring the result-table layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub dataset: String,
    pub metric: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}
