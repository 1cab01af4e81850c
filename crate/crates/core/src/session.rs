//! Single-model adaptive testing on a discretized ability posterior.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationArtifact;
use crate::error::{invalid, Error, Result};
use crate::irt::{fisher_information, log_likelihood_unchecked, ContinuousScore, ItemParams, NoiseParam};

pub const GRID_LO: f64 = -10.0;
pub const GRID_HI: f64 = 10.0;
pub const GRID_POINTS: usize = 1001;
pub const DEFAULT_PRIOR_VARIANCE: f64 = 25.0;

/// Calibrated items with a noise parameter per item.
#[derive(Debug, Clone)]
pub struct ItemBank {
    items: Vec<ItemParams>,
    noise: Vec<NoiseParam>,
    index: HashMap<String, usize>,
}

impl ItemBank {
    /// Bank sharing one global noise parameter.
    pub fn new(items: Vec<ItemParams>, k: NoiseParam) -> Result<Self> {
        let noise = vec![k; items.len()];
        Self::with_item_noise(items, noise)
    }

    pub fn with_item_noise(items: Vec<ItemParams>, noise: Vec<NoiseParam>) -> Result<Self> {
        if items.len() != noise.len() {
            return Err(invalid("item bank", "one noise parameter per item required"));
        }
        let mut index = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if !item.b.is_finite() {
                return Err(invalid("difficulty", format!("item `{}` has b = {}", item.id, item.b)));
            }
            if index.insert(item.id.clone(), i).is_some() {
                return Err(Error::Duplicate {
                    what: "item",
                    id: item.id.clone(),
                });
            }
        }
        Ok(Self { items, noise, index })
    }

    pub fn from_artifact(artifact: &CalibrationArtifact) -> Result<Self> {
        Self::new(artifact.item_params(), artifact.k)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, idx: usize) -> &ItemParams {
        &self.items[idx]
    }

    pub fn items(&self) -> &[ItemParams] {
        &self.items
    }

    pub fn noise(&self, idx: usize) -> NoiseParam {
        self.noise[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.items.len()).filter(|&i| self.items[i].active)
    }

    pub fn n_active(&self) -> usize {
        self.active_indices().count()
    }

    /// Median difficulty of the active items.
    pub fn median_active_difficulty(&self) -> Option<f64> {
        let mut bs: Vec<f64> = self.active_indices().map(|i| self.items[i].b).collect();
        if bs.is_empty() {
            return None;
        }
        bs.sort_by(f64::total_cmp);
        let n = bs.len();
        Some(if n % 2 == 1 {
            bs[n / 2]
        } else {
            0.5 * (bs[n / 2 - 1] + bs[n / 2])
        })
    }
}

/// Normal prior over ability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mean: f64,
    pub variance: f64,
}

impl PriorSpec {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !(variance.is_finite() && variance > 0.0) {
            return Err(invalid(
                "prior",
                format!("need finite mean and variance > 0, got N({mean}, {variance})"),
            ));
        }
        Ok(Self { mean, variance })
    }

    /// `N(median active b, 25)`.
    pub fn default_for(bank: &ItemBank) -> Result<Self> {
        let median = bank.median_active_difficulty().ok_or(Error::EmptyBank)?;
        Self::new(median, DEFAULT_PRIOR_VARIANCE)
    }
}

/// Ability posterior on an equally spaced grid, stored as normalized log
/// weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    points: Vec<f64>,
    log_weights: Vec<f64>,
}

impl PosteriorGrid {
    pub fn new(prior: PriorSpec, n_points: usize) -> Self {
        assert!(n_points >= 2, "grid needs at least two points");
        let step = (GRID_HI - GRID_LO) / (n_points - 1) as f64;
        let points: Vec<f64> = (0..n_points).map(|g| GRID_LO + g as f64 * step).collect();
        let log_weights = points
            .iter()
            .map(|&t| -(t - prior.mean).powi(2) / (2.0 * prior.variance))
            .collect();
        let mut grid = Self {
            points,
            log_weights,
        };
        grid.normalize();
        grid
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_weights.iter().map(|w| w.exp())
    }

    fn normalize(&mut self) {
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + self.log_weights.iter().map(|w| (w - max).exp()).sum::<f64>().ln();
        for w in &mut self.log_weights {
            *w -= lse;
        }
    }

    /// Multiply in the likelihood of one observed score.
    pub fn update(&mut self, y: f64, b: f64, k: NoiseParam) {
        let k = k.get();
        for (w, &t) in self.log_weights.iter_mut().zip(&self.points) {
            *w += log_likelihood_unchecked(y, t, b, k);
        }
        self.normalize();
    }

    /// Posterior mean and standard deviation.
    pub fn moments(&self) -> (f64, f64) {
        let weights: Vec<f64> = self.weights().collect();
        let m: f64 = weights.iter().zip(&self.points).map(|(w, t)| w * t).sum();
        let var: f64 = weights
            .iter()
            .zip(&self.points)
            .map(|(w, t)| w * (t - m) * (t - m))
            .sum();
        (m, var.sqrt())
    }
}

/// Which standard error an estimate reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeMode {
    /// Posterior standard deviation on the grid.
    #[default]
    Posterior,
    /// `1 / sqrt(1 / prior variance + accumulated Fisher information)`.
    Fisher,
}

impl std::str::FromStr for SeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "posterior" => Ok(Self::Posterior),
            "fisher" => Ok(Self::Fisher),
            _ => Err(invalid("SE mode", format!("expected posterior|fisher, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbilityEstimate {
    pub theta_hat: f64,
    pub se: f64,
    pub n_items: usize,
    pub mode: SeMode,
}

/// Adaptive test state for one model.
#[derive(Debug, Clone)]
pub struct CatSession {
    model: String,
    prior: PriorSpec,
    posterior: PosteriorGrid,
    administered: Vec<(usize, f64)>,
    remaining: BTreeSet<usize>,
    fisher_sum: f64,
    mean: f64,
    sd: f64,
}

impl CatSession {
    pub fn new(model: impl Into<String>, bank: &ItemBank, prior: PriorSpec) -> Result<Self> {
        Self::with_grid(model, bank, prior, GRID_POINTS)
    }

    /// Session with the default `N(median b, 25)` prior.
    pub fn with_default_prior(model: impl Into<String>, bank: &ItemBank) -> Result<Self> {
        let prior = PriorSpec::default_for(bank)?;
        Self::new(model, bank, prior)
    }

    pub fn with_grid(
        model: impl Into<String>,
        bank: &ItemBank,
        prior: PriorSpec,
        grid_points: usize,
    ) -> Result<Self> {
        let remaining: BTreeSet<usize> = bank.active_indices().collect();
        if remaining.is_empty() {
            return Err(Error::EmptyBank);
        }
        let posterior = PosteriorGrid::new(prior, grid_points);
        let (mean, sd) = posterior.moments();
        Ok(Self {
            model: model.into(),
            prior,
            posterior,
            administered: Vec::new(),
            remaining,
            fisher_sum: 0.0,
            mean,
            sd,
        })
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn prior(&self) -> PriorSpec {
        self.prior
    }

    pub fn posterior(&self) -> &PosteriorGrid {
        &self.posterior
    }

    /// `(bank index, score)` in administration order.
    pub fn administered(&self) -> &[(usize, f64)] {
        &self.administered
    }

    pub fn remaining(&self) -> &BTreeSet<usize> {
        &self.remaining
    }

    pub fn n_items(&self) -> usize {
        self.administered.len()
    }

    pub fn fisher_sum(&self) -> f64 {
        self.fisher_sum
    }

    /// Current posterior mean.
    pub fn theta_hat(&self) -> f64 {
        self.mean
    }

    /// Remaining item with maximal Fisher information at the current
    /// estimate; ties go to the lowest bank index.
    pub fn select_item(&self, bank: &ItemBank) -> Result<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &i in &self.remaining {
            let info = fisher_information(self.mean, bank.item(i).b, bank.noise(i));
            if best.is_none_or(|(_, v)| info > v) {
                best = Some((i, info));
            }
        }
        best.map(|(i, _)| i).ok_or(Error::PoolExhausted)
    }

    pub fn record_response(&mut self, bank: &ItemBank, item: usize, score: f64) -> Result<()> {
        let score = ContinuousScore::new(score)?.get();
        if item >= bank.len() {
            return Err(Error::UnknownItem(format!("#{item}")));
        }
        let params = bank.item(item);
        if !self.remaining.contains(&item) {
            return Err(if !params.active {
                Error::InactiveItem(params.id.clone())
            } else {
                Error::AlreadyAdministered(params.id.clone())
            });
        }
        let k = bank.noise(item);
        self.posterior.update(score, params.b, k);
        let (mean, sd) = self.posterior.moments();
        self.mean = mean;
        self.sd = sd;
        self.remaining.remove(&item);
        self.administered.push((item, score));
        self.fisher_sum += fisher_information(mean, params.b, k);
        Ok(())
    }

    /// Like [`record_response`](Self::record_response) with the item named
    /// by id.
    pub fn record_response_by_id(&mut self, bank: &ItemBank, item: &str, score: f64) -> Result<()> {
        let idx = bank
            .index_of(item)
            .ok_or_else(|| Error::UnknownItem(item.to_string()))?;
        self.record_response(bank, idx, score)
    }

    pub fn estimate(&self, mode: SeMode) -> AbilityEstimate {
        let se = match mode {
            SeMode::Posterior => self.sd,
            SeMode::Fisher => 1.0 / (1.0 / self.prior.variance + self.fisher_sum).sqrt(),
        };
        AbilityEstimate {
            theta_hat: self.mean,
            se,
            n_items: self.administered.len(),
            mode,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irt::logistic_mean;

    fn bank(bs: &[f64], k: f64) -> ItemBank {
        let items = bs
            .iter()
            .enumerate()
            .map(|(i, &b)| ItemParams::new(format!("i{i:03}"), b))
            .collect();
        ItemBank::new(items, NoiseParam::new(k).unwrap()).unwrap()
    }

    #[test]
    fn default_prior_uses_median() {
        let bank = bank(&[-1.0, 0.0, 3.0], 0.1);
        let prior = PriorSpec::default_for(&bank).unwrap();
        assert_eq!(prior, PriorSpec { mean: 0.0, variance: 25.0 });
        let s = CatSession::new("m", &bank, prior).unwrap();
        let est = s.estimate(SeMode::Posterior);
        assert!(est.theta_hat.abs() < 1e-3);
        // The grid truncates the prior at two prior sds.
        let c: f64 = 2.0;
        let phi = (-0.5 * c * c).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mass = statrs::function::erf::erf(c / 2f64.sqrt());
        let truncated_sd = 5.0 * (1.0 - 2.0 * c * phi / mass).sqrt();
        assert!((est.se - truncated_sd).abs() < 0.01, "{}", est.se);
        assert_eq!(est.n_items, 0);
        let f = s.estimate(SeMode::Fisher);
        assert!((f.se - 5.0).abs() < 1e-12);
    }

    #[test]
    fn grid_weights_normalized() {
        let g = PosteriorGrid::new(PriorSpec::new(1.0, 4.0).unwrap(), GRID_POINTS);
        assert!((g.weights().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(g.points().len(), GRID_POINTS);
        assert_eq!(g.points()[0], GRID_LO);
        assert!((g.points()[GRID_POINTS - 1] - GRID_HI).abs() < 1e-12);
    }

    #[test]
    fn inactive_items_excluded() {
        let mut items: Vec<ItemParams> = (0..3).map(|i| ItemParams::new(format!("i{i}"), 0.0)).collect();
        items[1].active = false;
        let bank = ItemBank::new(items, NoiseParam::new(0.1).unwrap()).unwrap();
        let mut s = CatSession::with_default_prior("m", &bank).unwrap();
        assert!(!s.remaining().contains(&1));
        assert!(matches!(s.record_response(&bank, 1, 0.5), Err(Error::InactiveItem(_))));

        let mut none = (0..2).map(|i| ItemParams::new(format!("i{i}"), 0.0)).collect::<Vec<_>>();
        none.iter_mut().for_each(|i| i.active = false);
        let empty = ItemBank::new(none, NoiseParam::new(0.1).unwrap()).unwrap();
        assert!(matches!(CatSession::with_default_prior("m", &empty), Err(Error::EmptyBank)));
    }

    #[test]
    fn selection_rules() {
        let bank = bank(&[-2.0, 0.1, 3.0, 0.1], 0.1);
        let mut s = CatSession::new("m", &bank, PriorSpec::new(0.0, 25.0).unwrap()).unwrap();
        assert_eq!(s.select_item(&bank).unwrap(), 1);
        // Responding at the prior mean keeps the estimate near zero.
        s.record_response(&bank, 1, logistic_mean(0.0, 0.1)).unwrap();
        assert_eq!(s.select_item(&bank).unwrap(), 3);
        let before = s.clone();
        let _ = s.select_item(&bank).unwrap();
        assert_eq!(s.administered(), before.administered());
    }

    #[test]
    fn second_closest_after_best() {
        let bank = bank(&[-2.0, 0.1, 3.0], 0.1);
        let mut s = CatSession::new("m", &bank, PriorSpec::new(0.0, 25.0).unwrap()).unwrap();
        let first = s.select_item(&bank).unwrap();
        s.record_response(&bank, first, logistic_mean(0.0, 0.1)).unwrap();
        assert_eq!(s.select_item(&bank).unwrap(), 0);
    }

    #[test]
    fn exhaustion_and_duplicates() {
        let bank = bank(&[0.0], 0.1);
        let mut s = CatSession::with_default_prior("m", &bank).unwrap();
        s.record_response(&bank, 0, 0.5).unwrap();
        assert!(matches!(s.select_item(&bank), Err(Error::PoolExhausted)));
        assert!(matches!(s.record_response(&bank, 0, 0.5), Err(Error::AlreadyAdministered(_))));
        assert!(matches!(s.record_response(&bank, 7, 0.5), Err(Error::UnknownItem(_))));
        assert!(matches!(s.record_response_by_id(&bank, "nope", 0.5), Err(Error::UnknownItem(_))));
    }

    #[test]
    fn rejects_scores_outside_unit_interval() {
        let bank = bank(&[0.0], 0.1);
        let mut s = CatSession::with_default_prior("m", &bank).unwrap();
        assert!(s.record_response(&bank, 0, 1.5).is_err());
        assert_eq!(s.n_items(), 0);
    }

    #[test]
    fn response_at_prior_mean_keeps_location_and_shrinks_sd() {
        let bank = bank(&[0.3, -0.4, 1.2], 0.1);
        let prior = PriorSpec::new(0.3, 25.0).unwrap();
        let mut s = CatSession::new("m", &bank, prior).unwrap();
        let sd0 = s.estimate(SeMode::Posterior).se;
        s.record_response(&bank, 0, logistic_mean(0.3, 0.3)).unwrap();
        let est = s.estimate(SeMode::Posterior);
        assert!((est.theta_hat - 0.3).abs() < 0.05);
        assert!(est.se < sd0);
        assert!(s.fisher_sum() > 0.0);
    }

    #[test]
    fn fisher_se_uses_prior_precision() {
        let bank = bank(&[0.0], 0.1);
        let mut s = CatSession::with_default_prior("m", &bank).unwrap();
        s.fisher_sum = 3.96;
        assert!((s.estimate(SeMode::Fisher).se - 0.5).abs() < 1e-12);
    }

    #[test]
    fn conservation_of_items() {
        let bank = bank(&[-1.0, -0.5, 0.0, 0.5, 1.0], 0.2);
        let mut s = CatSession::with_default_prior("m", &bank).unwrap();
        let total = s.remaining().len();
        for step in 0..5 {
            let i = s.select_item(&bank).unwrap();
            s.record_response(&bank, i, 0.2 + 0.1 * step as f64).unwrap();
            assert_eq!(s.administered().len() + s.remaining().len(), total);
        }
    }
}
