use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::calibration::{estimate_abilities, CalibrationArtifact};
use crate::error::{invalid, Error, Result};
use crate::irt::{logistic_mean, NoiseParam};
use crate::matrix::ScoreMatrix;

pub const DEFAULT_BINS: usize = 20;
pub const MIN_BIN_CELLS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceBin {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub mean_mu: f64,
    pub observed: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceReport {
    /// `1 - SS_res / SS_tot` of observed against predicted bin variance; may
    /// be negative.
    pub r2: f64,
    pub k: f64,
    pub n_cells: usize,
    /// Bins with at least [`MIN_BIN_CELLS`] cells.
    pub bins: Vec<ConformanceBin>,
}

/// Fit of the variance model `k mu (1 - mu)` to `(score, predicted mean)`
/// cells grouped into equal-width bins of `mu`.
pub fn conformance_from_cells(cells: &[(f64, f64)], k: NoiseParam, n_bins: usize) -> Result<ConformanceReport> {
    if n_bins < 2 {
        return Err(invalid("bins", format!("need at least 2, got {n_bins}")));
    }
    let mut groups: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_bins];
    for &(y, mu) in cells {
        let b = ((mu * n_bins as f64) as usize).min(n_bins - 1);
        groups[b].push((y, mu));
    }
    let width = 1.0 / n_bins as f64;
    let bins: Vec<ConformanceBin> = groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.len() >= MIN_BIN_CELLS)
        .map(|(b, g)| {
            let n = g.len() as f64;
            let mean_mu = g.iter().map(|c| c.1).sum::<f64>() / n;
            let mean_r = g.iter().map(|c| c.0 - c.1).sum::<f64>() / n;
            let observed = g.iter().map(|c| (c.0 - c.1 - mean_r).powi(2)).sum::<f64>() / n;
            ConformanceBin {
                lo: b as f64 * width,
                hi: (b + 1) as f64 * width,
                n: g.len(),
                mean_mu,
                observed,
                predicted: k.get() * mean_mu * (1.0 - mean_mu),
            }
        })
        .collect();
    if bins.len() < 2 {
        return Err(Error::Conformance(format!(
            "need at least 2 bins with >= {MIN_BIN_CELLS} cells, found {}",
            bins.len()
        )));
    }
    let mean_obs = bins.iter().map(|b| b.observed).sum::<f64>() / bins.len() as f64;
    let ss_res: f64 = bins.iter().map(|b| (b.observed - b.predicted).powi(2)).sum();
    let ss_tot: f64 = bins.iter().map(|b| (b.observed - mean_obs).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Conformance("observed variance is identical in every bin".into()));
    }
    Ok(ConformanceReport {
        r2: 1.0 - ss_res / ss_tot,
        k: k.get(),
        n_cells: cells.len(),
        bins,
    })
}

/// Conformance of `matrix` to a calibration. Abilities come from the
/// calibration's normalization applied to each model's mean score; cells of
/// items unknown to the calibration are skipped.
pub fn conformance(matrix: &ScoreMatrix, calib: &CalibrationArtifact, n_bins: usize) -> Result<ConformanceReport> {
    let theta = estimate_abilities(matrix, &calib.transform)?;
    let by_id: HashMap<&str, f64> = calib.items.iter().map(|it| (it.id.as_str(), it.b)).collect();
    let b: Vec<Option<f64>> = matrix
        .items()
        .iter()
        .map(|id| by_id.get(id.as_str()).copied())
        .collect();
    let cells: Vec<(f64, f64)> = matrix
        .cells()
        .filter_map(|(m, i, y)| b[i].map(|b| (y, logistic_mean(theta[m], b))))
        .collect();
    conformance_from_cells(&cells, calib.k, n_bins)
}
