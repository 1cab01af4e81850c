//! Heteroskedastic normal response model for scores in `[0, 1]`.
//!
//! A response to an item with difficulty `b` from a test-taker with ability
//! `theta` is modelled as `N(mu, k * mu * (1 - mu))` where
//! `mu = logistic(theta - b)`. The noise parameter `k` plays the role of
//! `1 / a^2` in the binary one-parameter logistic model, so both models share
//! the same Fisher information up to that reparameterization.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Lower/upper clamp applied to the mean inside variance-dependent terms of
/// the likelihood.
pub const MU_CLAMP: f64 = 1e-9;

/// Latent ability on the logit scale.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ability(pub f64);

/// Variance inflation factor `k > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct NoiseParam(f64);

impl NoiseParam {
    pub fn new(k: f64) -> Result<Self> {
        if k.is_finite() && k > 0.0 {
            Ok(Self(k))
        } else {
            Err(invalid("noise parameter k", format!("must be finite and > 0, got {k}")))
        }
    }

    /// Noise parameter equivalent to a binary-model discrimination `a`.
    pub fn from_discrimination(a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(invalid("discrimination a", format!("must be > 0, got {a}")));
        }
        Self::new(1.0 / (a * a))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// `a = 1 / sqrt(k)`.
    pub fn discrimination(self) -> f64 {
        1.0 / self.0.sqrt()
    }
}

impl TryFrom<f64> for NoiseParam {
    type Error = crate::Error;

    fn try_from(k: f64) -> Result<Self> {
        Self::new(k)
    }
}

impl From<NoiseParam> for f64 {
    fn from(k: NoiseParam) -> f64 {
        k.0
    }
}

/// One calibrated item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemParams {
    pub id: String,
    /// Difficulty on the logit scale.
    pub b: f64,
    /// Whether the item passed the discrimination filter.
    pub active: bool,
}

impl ItemParams {
    pub fn new(id: impl Into<String>, b: f64) -> Self {
        Self {
            id: id.into(),
            b,
            active: true,
        }
    }
}

/// Checked score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContinuousScore(f64);

impl ContinuousScore {
    pub fn new(y: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&y) {
            Ok(Self(y))
        } else {
            Err(invalid("score", format!("must lie in [0, 1], got {y}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// Expected score `1 / (1 + exp(-(theta - b)))`.
#[inline]
pub fn logistic_mean(theta: f64, b: f64) -> f64 {
    let x = theta - b;
    // Branches keep exp() from overflowing for large |x|.
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of [`logistic_mean`] with respect to `theta`.
#[inline]
pub fn logistic_slope(theta: f64, b: f64) -> f64 {
    let mu = logistic_mean(theta, b);
    mu * (1.0 - mu)
}

/// `k * mu * (1 - mu)`.
pub fn response_variance(mu: f64, k: NoiseParam) -> Result<f64> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(invalid("mean", format!("must lie in [0, 1], got {mu}")));
    }
    Ok(k.get() * mu * (1.0 - mu))
}

/// Fisher information `mu (1 - mu) / k` of one continuous response.
#[inline]
pub fn fisher_information(theta: f64, b: f64, k: NoiseParam) -> f64 {
    logistic_slope(theta, b) / k.get()
}

/// Binary 1PL information in the form `a^2 P (1 - P)` with
/// `P = logistic(theta - b)`, the form under which it coincides with
/// [`fisher_information`] at `k = 1 / a^2`.
pub fn binary_fisher_information(theta: f64, a: f64, b: f64) -> Result<f64> {
    if !(a.is_finite() && a > 0.0) {
        return Err(invalid("discrimination a", format!("must be > 0, got {a}")));
    }
    let p = logistic_mean(theta, b);
    Ok(a * a * p * (1.0 - p))
}

/// `1 / sqrt(k)`.
pub fn discrimination_from_noise(k: f64) -> Result<f64> {
    Ok(NoiseParam::new(k)?.discrimination())
}

/// Log density of score `y` under the response model.
pub fn log_likelihood(y: f64, theta: f64, b: f64, k: NoiseParam) -> Result<f64> {
    ContinuousScore::new(y)?;
    Ok(log_likelihood_unchecked(y, theta, b, k.get()))
}

/// [`log_likelihood`] without the score range check; used on hot paths
/// where the score has already been validated.
#[inline]
pub(crate) fn log_likelihood_unchecked(y: f64, theta: f64, b: f64, k: f64) -> f64 {
    let mu = logistic_mean(theta, b).clamp(MU_CLAMP, 1.0 - MU_CLAMP);
    let var = k * mu * (1.0 - mu);
    let r = y - mu;
    -0.5 * (2.0 * PI * var).ln() - r * r / (2.0 * var)
}
