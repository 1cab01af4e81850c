use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::ScoreMatrix;

pub const DEFAULT_N_BOOT: usize = 1000;

/// Unordered model pair, stored with the smaller id first.
pub type TiePair = (String, String);

pub fn unordered(a: &str, b: &str) -> TiePair {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Full-evaluation ranking of the models in a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Best first; equal means are ordered by id.
    pub order: Vec<String>,
    /// Mean score per model, aligned with `order`.
    pub means: Vec<f64>,
    /// Pairs with exactly equal means.
    pub exact_ties: BTreeSet<TiePair>,
    /// Statistically tied pairs; filled by [`bootstrap_ties`].
    pub gt_ties: BTreeSet<TiePair>,
}

impl GroundTruth {
    pub fn mean_of(&self, id: &str) -> Option<f64> {
        self.order.iter().position(|m| m == id).map(|r| self.means[r])
    }

    pub fn rank_of(&self, id: &str) -> Option<usize> {
        self.order.iter().position(|m| m == id)
    }
}

/// Order models by their mean score over every item.
pub fn ground_truth_ranking(matrix: &ScoreMatrix) -> Result<GroundTruth> {
    matrix.require_complete()?;
    let means = matrix.model_means()?;
    let mut idx: Vec<usize> = (0..matrix.n_models()).collect();
    idx.sort_by(|&a, &b| {
        means[b]
            .total_cmp(&means[a])
            .then_with(|| matrix.models()[a].cmp(&matrix.models()[b]))
    });
    let mut exact_ties = BTreeSet::new();
    for w in idx.windows(2) {
        if means[w[0]] == means[w[1]] {
            exact_ties.insert(unordered(&matrix.models()[w[0]], &matrix.models()[w[1]]));
        }
    }
    Ok(GroundTruth {
        order: idx.iter().map(|&m| matrix.models()[m].clone()).collect(),
        means: idx.iter().map(|&m| means[m]).collect(),
        exact_ties,
        gt_ties: BTreeSet::new(),
    })
}

/// Pairs whose paired-bootstrap percentile interval for the mean score
/// difference contains zero.
///
/// Each replicate resamples item indices with replacement and reuses them for
/// every model, so pairs keep their per-item pairing.
pub fn bootstrap_ties(matrix: &ScoreMatrix, n_boot: usize, level: f64, seed: u64) -> Result<BTreeSet<TiePair>> {
    if n_boot < 100 {
        return Err(invalid("n_boot", format!("must be >= 100, got {n_boot}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid("level", format!("must lie in (0, 1), got {level}")));
    }
    matrix.require_complete()?;
    let (n_models, n_items) = (matrix.n_models(), matrix.n_items());
    let rows: Vec<Vec<f64>> = (0..n_models)
        .map(|m| matrix.row(m).map(|(_, v)| v).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut replicate_means = vec![vec![0.0; n_boot]; n_models];
    let mut sample = vec![0usize; n_items];
    for r in 0..n_boot {
        for s in sample.iter_mut() {
            *s = rng.random_range(0..n_items);
        }
        for (m, row) in rows.iter().enumerate() {
            replicate_means[m][r] = sample.iter().map(|&i| row[i]).sum::<f64>() / n_items as f64;
        }
    }

    let alpha = 1.0 - level;
    let mut ties = BTreeSet::new();
    let mut diffs = vec![0.0; n_boot];
    for a in 0..n_models {
        for b in a + 1..n_models {
            for r in 0..n_boot {
                diffs[r] = replicate_means[a][r] - replicate_means[b][r];
            }
            diffs.sort_by(f64::total_cmp);
            let lo = quantile_sorted(&diffs, alpha / 2.0);
            let hi = quantile_sorted(&diffs, 1.0 - alpha / 2.0);
            if lo <= 0.0 && 0.0 <= hi {
                ties.insert(unordered(&matrix.models()[a], &matrix.models()[b]));
            }
        }
    }
    Ok(ties)
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
