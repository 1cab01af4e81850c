use serde::{Deserialize, Serialize};

use super::kendall::kendall_tau;
use super::truth::{bootstrap_ties, ground_truth_ranking, unordered, GroundTruth};
use crate::error::{Error, Result};
use crate::matrix::ScoreMatrix;
use crate::ranker::RankingResult;

/// Tie-detection confusion counts over all unordered pairs. A "positive" is
/// a tie.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TieMetrics {
    pub confusion: Confusion,
    pub adapt_tie_pct: f64,
    pub gt_tie_pct: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Fraction of non-tie predictions with the ground-truth direction;
    /// `None` when every pair was predicted tied.
    pub confident_accuracy: Option<f64>,
    pub n_confident: usize,
}

/// Compare predicted ties and directions with the ground truth.
///
/// Empty-set conventions: precision is 1 when nothing is predicted tied and
/// the truth has no ties, else 0; recall likewise with the roles swapped.
/// A confident call on a ground-truth tie counts as incorrect.
pub fn tie_metrics(result: &RankingResult, gt: &GroundTruth) -> Result<TieMetrics> {
    let mut a: Vec<&String> = result.order.iter().collect();
    let mut b: Vec<&String> = gt.order.iter().collect();
    a.sort();
    b.sort();
    if a != b {
        return Err(Error::MismatchedIds("result and ground truth cover different models".into()));
    }
    let mut c = Confusion::default();
    let (mut n_confident, mut n_correct) = (0usize, 0usize);
    let order = &result.order;
    for x in 0..order.len() {
        for y in x + 1..order.len() {
            // `order[x]` is predicted above `order[y]`.
            let (hi, lo) = (&order[x], &order[y]);
            let predicted_tie = result.is_tie(hi, lo);
            let gt_tie = gt.gt_ties.contains(&unordered(hi, lo));
            match (predicted_tie, gt_tie) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
            if !predicted_tie {
                n_confident += 1;
                let right = !gt_tie && gt.rank_of(hi) < gt.rank_of(lo);
                n_correct += usize::from(right);
            }
        }
    }
    let n_pairs = (c.tp + c.fp + c.fn_ + c.tn) as f64;
    let predicted = c.tp + c.fp;
    let actual = c.tp + c.fn_;
    let precision = if predicted == 0 {
        f64::from(u8::from(actual == 0))
    } else {
        c.tp as f64 / predicted as f64
    };
    let recall = if actual == 0 {
        f64::from(u8::from(predicted == 0))
    } else {
        c.tp as f64 / actual as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(TieMetrics {
        confusion: c,
        adapt_tie_pct: predicted as f64 / n_pairs,
        gt_tie_pct: actual as f64 / n_pairs,
        precision,
        recall,
        f1,
        confident_accuracy: (n_confident > 0).then(|| n_correct as f64 / n_confident as f64),
        n_confident,
    })
}

/// Ranking quality of one run against full evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tau: f64,
    pub adapt_tie_pct: f64,
    pub gt_tie_pct: f64,
    pub tie_precision: f64,
    pub tie_recall: f64,
    pub tie_f1: f64,
    pub confident_accuracy: Option<f64>,
    pub confusion: Confusion,
    /// Items administered over `bank size x number of models`.
    pub items_pct: f64,
    pub items_total: usize,
    pub items_per_model: f64,
    pub cost_total: f64,
    pub truth_order: Vec<String>,
    pub predicted_order: Vec<String>,
}

/// Build the full report for `result` using `truth` (a complete matrix over
/// at least the result's models).
pub fn evaluate(
    result: &RankingResult,
    truth: &ScoreMatrix,
    n_boot: usize,
    level: f64,
    seed: u64,
) -> Result<EvalReport> {
    let holdout = truth.select_models(&result.order)?;
    let mut gt = ground_truth_ranking(&holdout)?;
    gt.gt_ties = bootstrap_ties(&holdout, n_boot, level, seed)?;
    let tau = kendall_tau(&result.order, &gt.order)?;
    let tm = tie_metrics(result, &gt)?;
    let n_models = result.order.len();
    Ok(EvalReport {
        tau,
        adapt_tie_pct: tm.adapt_tie_pct,
        gt_tie_pct: tm.gt_tie_pct,
        tie_precision: tm.precision,
        tie_recall: tm.recall,
        tie_f1: tm.f1,
        confident_accuracy: tm.confident_accuracy,
        confusion: tm.confusion,
        items_pct: result.items_total as f64 / (result.bank_size * n_models) as f64,
        items_total: result.items_total,
        items_per_model: result.items_total as f64 / n_models as f64,
        cost_total: result.cost_total,
        truth_order: gt.order,
        predicted_order: result.order.clone(),
    })
}
