//! Item difficulty, noise and discrimination-filter estimation from a
//! historical score matrix.
//!
//! The pipeline is closed-form:
//!
//! 1. mean score per item, `p_i`;
//! 2. a min-max transform mapping the item means onto `[eps, 1 - eps]`;
//! 3. `b_i = -logit(T(p_i))`;
//! 4. `theta_j = logit(T(mean score of model j))`, same transform;
//! 5. method-of-moments noise `k = sum (y - mu)^2 / sum mu (1 - mu)`;
//! 6. Pearson correlation of each item with the abilities; negatively
//!    correlated items are deactivated.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::irt::{logistic_mean, ItemParams, NoiseParam};
use crate::matrix::{mean, ScoreMatrix};

pub const DEFAULT_EPSILON: f64 = 0.01;
pub const NOISE_FLOOR: f64 = 1e-6;
pub const CALIBRATION_FORMAT_VERSION: u32 = 1;

/// Affine map of `[lo, hi]` onto `[epsilon, 1 - epsilon]`, clamping outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationTransform {
    pub lo: f64,
    pub hi: f64,
    pub epsilon: f64,
}

impl NormalizationTransform {
    pub fn fit(values: &[f64], epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if values.len() < 2 {
            return Err(Error::TooSmall {
                what: "values for normalization",
                needed: 2,
                found: values.len(),
            });
        }
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !(hi > lo) {
            return Err(Error::DegenerateRange(lo));
        }
        Ok(Self { lo, hi, epsilon })
    }

    pub fn apply(&self, x: f64) -> f64 {
        let t = ((x - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0);
        self.epsilon + t * (1.0 - 2.0 * self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        if !(self.lo.is_finite() && self.hi.is_finite() && self.hi > self.lo) {
            return Err(invalid(
                "normalization range",
                format!("need finite hi > lo, got [{}, {}]", self.lo, self.hi),
            ));
        }
        Ok(())
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 0.5 {
        Ok(())
    } else {
        Err(invalid("epsilon", format!("must lie in (0, 0.5), got {epsilon}")))
    }
}

#[inline]
pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Mean observed score of each item, aligned with `matrix.items()`.
pub fn estimate_item_means(matrix: &ScoreMatrix) -> Result<Vec<f64>> {
    (0..matrix.n_items())
        .map(|i| {
            mean(matrix.column(i).map(|(_, v)| v))
                .ok_or_else(|| Error::EmptyItem(matrix.items()[i].clone()))
        })
        .collect()
}

/// `b_i = log((1 - p) / p)` with `p` the transformed item mean.
pub fn estimate_difficulties(item_means: &[f64], transform: &NormalizationTransform) -> Vec<f64> {
    item_means
        .iter()
        .map(|&p| -logit(transform.apply(p)))
        .collect()
}

/// `theta_j = logit(T(mean score of model j))`, aligned with
/// `matrix.models()`.
pub fn estimate_abilities(
    matrix: &ScoreMatrix,
    transform: &NormalizationTransform,
) -> Result<Vec<f64>> {
    Ok(matrix
        .model_means()?
        .into_iter()
        .map(|y| logit(transform.apply(y)))
        .collect())
}

/// Method-of-moments noise estimate over the observed cells.
pub fn estimate_noise(matrix: &ScoreMatrix, b: &[f64], theta: &[f64]) -> Result<NoiseParam> {
    if b.len() != matrix.n_items() || theta.len() != matrix.n_models() {
        return Err(invalid(
            "parameter vectors",
            format!(
                "expected {} difficulties and {} abilities, got {} and {}",
                matrix.n_items(),
                matrix.n_models(),
                b.len(),
                theta.len()
            ),
        ));
    }
    let (mut num, mut den, mut n) = (0.0, 0.0, 0usize);
    for (m, i, y) in matrix.cells() {
        let mu = logistic_mean(theta[m], b[i]);
        num += (y - mu) * (y - mu);
        den += mu * (1.0 - mu);
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    let k = num / den;
    if !(k >= NOISE_FLOOR) {
        log::warn!("noise estimate {k} below floor; using {NOISE_FLOOR}");
        return NoiseParam::new(NOISE_FLOOR);
    }
    NoiseParam::new(k)
}

/// Correlation of an item with model ability and the resulting filter flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemFilter {
    pub correlation: f64,
    pub active: bool,
}

/// Pearson correlation of each item's scores with the abilities of the models
/// that answered it. Undefined correlations are recorded as 0 and kept.
pub fn filter_items(matrix: &ScoreMatrix, theta: &[f64]) -> Vec<ItemFilter> {
    (0..matrix.n_items())
        .map(|i| {
            let pairs: Vec<(f64, f64)> = matrix.column(i).map(|(m, y)| (y, theta[m])).collect();
            let correlation = pearson(&pairs).unwrap_or(0.0);
            ItemFilter {
                correlation,
                active: correlation >= 0.0,
            }
        })
        .collect()
}

/// Pearson correlation, `None` with fewer than 3 pairs or zero variance.
pub fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 3 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibratedItem {
    pub id: String,
    pub b: f64,
    /// Raw mean score across calibration models.
    pub mean: f64,
    pub correlation: f64,
    pub active: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationMetadata {
    pub dataset: Option<String>,
    pub metric: Option<String>,
    pub n_models: usize,
    pub n_items: usize,
    /// Left empty by [`calibrate`] so artifacts stay reproducible.
    pub created: Option<String>,
}

/// Everything the adaptive engine needs from a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationArtifact {
    pub format_version: u32,
    pub items: Vec<CalibratedItem>,
    pub k: NoiseParam,
    /// Discrimination `1 / sqrt(k)`.
    pub a: f64,
    pub transform: NormalizationTransform,
    pub metadata: CalibrationMetadata,
}

impl CalibrationArtifact {
    /// Check the artifact invariants, naming the first offending field.
    pub fn check(&self) -> std::result::Result<(), (String, String)> {
        if self.format_version != CALIBRATION_FORMAT_VERSION {
            return Err((
                "format_version".into(),
                format!("expected {CALIBRATION_FORMAT_VERSION}"),
            ));
        }
        if (self.a - self.k.discrimination()).abs() > 1e-12 {
            return Err(("a".into(), format!("{} != 1/sqrt(k)", self.a)));
        }
        if let Err(e) = self.transform.validate() {
            return Err(("transform".into(), e.to_string()));
        }
        let mut seen = std::collections::HashSet::new();
        for (n, item) in self.items.iter().enumerate() {
            if !seen.insert(item.id.as_str()) {
                return Err((format!("items[{n}].id"), format!("duplicate id `{}`", item.id)));
            }
            if !item.b.is_finite() {
                return Err((format!("items[{n}].b"), "must be finite".into()));
            }
            if item.active != (item.correlation >= 0.0) {
                return Err((
                    format!("items[{n}].active"),
                    "must equal correlation >= 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// Parameters of every item in artifact order.
    pub fn item_params(&self) -> Vec<ItemParams> {
        self.items
            .iter()
            .map(|it| ItemParams {
                id: it.id.clone(),
                b: it.b,
                active: it.active,
            })
            .collect()
    }

    pub fn n_active(&self) -> usize {
        self.items.iter().filter(|i| i.active).count()
    }
}

/// Run the whole calibration pipeline.
pub fn calibrate(matrix: &ScoreMatrix, epsilon: f64) -> Result<CalibrationArtifact> {
    check_epsilon(epsilon)?;
    if matrix.n_models() < 2 {
        return Err(Error::TooSmall {
            what: "models",
            needed: 2,
            found: matrix.n_models(),
        });
    }
    if matrix.n_items() < 2 {
        return Err(Error::TooSmall {
            what: "items",
            needed: 2,
            found: matrix.n_items(),
        });
    }
    let means = estimate_item_means(matrix)?;
    let transform = NormalizationTransform::fit(&means, epsilon)?;
    let b = estimate_difficulties(&means, &transform);
    let theta = estimate_abilities(matrix, &transform)?;
    let k = estimate_noise(matrix, &b, &theta)?;
    let filters = filter_items(matrix, &theta);

    let items = matrix
        .items()
        .iter()
        .zip(b.iter().zip(&means).zip(&filters))
        .map(|(id, ((&b, &mean), f))| CalibratedItem {
            id: id.clone(),
            b,
            mean,
            correlation: f.correlation,
            active: f.active,
        })
        .collect();
    Ok(CalibrationArtifact {
        format_version: CALIBRATION_FORMAT_VERSION,
        items,
        k,
        a: k.discrimination(),
        transform,
        metadata: CalibrationMetadata {
            n_models: matrix.n_models(),
            n_items: matrix.n_items(),
            ..Default::default()
        },
    })
}
