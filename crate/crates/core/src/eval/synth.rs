use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::irt::{logistic_mean, ItemParams, NoiseParam};
use crate::matrix::ScoreMatrix;
use crate::ranker::ScoreOracle;
use crate::session::ItemBank;

/// How model abilities are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ThetaGen {
    /// Explicit abilities; the list length must equal the model count.
    Fixed { values: Vec<f64> },
    Normal { mean: f64, sd: f64 },
}

/// How item difficulties are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DifficultyGen {
    Fixed { values: Vec<f64> },
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_models: usize,
    pub n_items: usize,
    pub theta: ThetaGen,
    pub b: DifficultyGen,
    pub k_true: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_models: 8,
            n_items: 500,
            theta: ThetaGen::Normal { mean: 0.0, sd: 1.0 },
            b: DifficultyGen::Uniform { lo: -2.0, hi: 2.0 },
            k_true: 0.1,
            seed: 0,
        }
    }
}

/// A generated matrix with the parameters that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub matrix: ScoreMatrix,
    /// Ability per model, aligned with `matrix.models()`.
    pub theta: Vec<f64>,
    /// Difficulty per item, aligned with `matrix.items()`.
    pub b: Vec<f64>,
    pub k: NoiseParam,
}

impl SyntheticData {
    /// Model ids by true ability, best first.
    pub fn true_order(&self) -> Vec<String> {
        let mut idx: Vec<usize> = (0..self.theta.len()).collect();
        idx.sort_by(|&a, &b| self.theta[b].total_cmp(&self.theta[a]));
        idx.into_iter().map(|m| self.matrix.models()[m].clone()).collect()
    }

    /// Bank built from the generating difficulties and noise.
    pub fn true_bank(&self) -> ItemBank {
        let items = self
            .matrix
            .items()
            .iter()
            .zip(&self.b)
            .map(|(id, &b)| ItemParams::new(id.clone(), b))
            .collect();
        ItemBank::new(items, self.k).expect("generated ids are unique")
    }

    pub fn oracle(&self) -> MatrixOracle<'_> {
        MatrixOracle::new(&self.matrix)
    }
}

pub(crate) fn model_ids(n: usize) -> Vec<String> {
    let w = digits(n).max(2);
    (0..n).map(|i| format!("m{i:0w$}")).collect()
}

pub(crate) fn item_ids(n: usize) -> Vec<String> {
    let w = digits(n).max(4);
    (0..n).map(|i| format!("i{i:0w$}")).collect()
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).to_string().len()
}

fn draw_score(rng: &mut impl Rng, theta: f64, b: f64, k: f64) -> f64 {
    let mu = logistic_mean(theta, b);
    let z: f64 = rng.sample(StandardNormal);
    (mu + (k * mu * (1.0 - mu)).sqrt() * z).clamp(0.0, 1.0)
}

/// Sample a score matrix from the heteroskedastic normal model. Draws are
/// clamped to `[0, 1]`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticData> {
    if config.n_models < 2 || config.n_items < 2 {
        return Err(invalid("synthetic size", "need at least 2 models and 2 items"));
    }
    let k = NoiseParam::new(config.k_true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let b: Vec<f64> = match &config.b {
        DifficultyGen::Fixed { values } => {
            if values.len() != config.n_items {
                return Err(invalid("difficulties", format!("need {} values", config.n_items)));
            }
            values.clone()
        }
        DifficultyGen::Normal { mean, sd } => (0..config.n_items)
            .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
            .collect(),
        DifficultyGen::Uniform { lo, hi } => {
            if !(hi > lo) {
                return Err(invalid("difficulty range", format!("need hi > lo, got [{lo}, {hi}]")));
            }
            (0..config.n_items).map(|_| rng.random_range(*lo..*hi)).collect()
        }
    };
    let theta: Vec<f64> = match &config.theta {
        ThetaGen::Fixed { values } => {
            if values.len() != config.n_models {
                return Err(invalid("abilities", format!("need {} values", config.n_models)));
            }
            values.clone()
        }
        ThetaGen::Normal { mean, sd } => (0..config.n_models)
            .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    };

    let mut matrix = ScoreMatrix::new(model_ids(config.n_models), item_ids(config.n_items))?;
    for (m, &t) in theta.iter().enumerate() {
        for (i, &bi) in b.iter().enumerate() {
            matrix.set(m, i, draw_score(&mut rng, t, bi, k.get()))?;
        }
    }
    Ok(SyntheticData {
        matrix,
        theta,
        b,
        k,
    })
}

/// Replays recorded scores.
#[derive(Debug, Clone, Copy)]
pub struct MatrixOracle<'a> {
    matrix: &'a ScoreMatrix,
}

impl<'a> MatrixOracle<'a> {
    pub fn new(matrix: &'a ScoreMatrix) -> Self {
        Self { matrix }
    }
}

impl ScoreOracle for MatrixOracle<'_> {
    fn respond(&mut self, model: &str, item: &str) -> Result<f64> {
        self.matrix
            .get_by_id(model, item)
            .ok_or_else(|| Error::MissingScore {
                model: model.to_string(),
                item: item.to_string(),
            })
    }
}

/// Draws scores from the response model on demand. Each `(model, item)` cell
/// has its own seeded stream, so a cell's score does not depend on query
/// order.
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    models: HashMap<String, (u64, f64)>,
    items: HashMap<String, (u64, f64)>,
    k: NoiseParam,
    seed: u64,
}

impl SyntheticOracle {
    pub fn new(models: &[(String, f64)], items: &[(String, f64)], k: NoiseParam, seed: u64) -> Self {
        let index = |v: &[(String, f64)]| {
            v.iter()
                .enumerate()
                .map(|(n, (id, x))| (id.clone(), (n as u64, *x)))
                .collect()
        };
        Self {
            models: index(models),
            items: index(items),
            k,
            seed,
        }
    }

    /// Oracle over `bank`'s items with the given model abilities.
    pub fn for_bank(models: &[(String, f64)], bank: &ItemBank, k: NoiseParam, seed: u64) -> Self {
        let items: Vec<(String, f64)> = bank.items().iter().map(|it| (it.id.clone(), it.b)).collect();
        Self::new(models, &items, k, seed)
    }
}

fn mix(mut x: u64) -> u64 {
    // splitmix64 finalizer
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl ScoreOracle for SyntheticOracle {
    fn respond(&mut self, model: &str, item: &str) -> Result<f64> {
        let &(mi, theta) = self
            .models
            .get(model)
            .ok_or_else(|| Error::UnknownModel(model.to_string()))?;
        let &(ii, b) = self
            .items
            .get(item)
            .ok_or_else(|| Error::UnknownItem(item.to_string()))?;
        let cell_seed = mix(mix(self.seed ^ mix(mi)) ^ ii);
        let mut rng = ChaCha8Rng::seed_from_u64(cell_seed);
        Ok(draw_score(&mut rng, theta, b, self.k.get()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanishing_noise_reproduces_the_mean() {
        let cfg = SyntheticConfig {
            n_models: 5,
            n_items: 50,
            k_true: 1e-8,
            ..Default::default()
        };
        let d = generate_synthetic(&cfg).unwrap();
        for (m, i, y) in d.matrix.cells() {
            assert!((y - logistic_mean(d.theta[m], d.b[i])).abs() < 1e-3);
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let cfg = SyntheticConfig::default();
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.matrix, b.matrix);
        let c = generate_synthetic(&SyntheticConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.matrix, c.matrix);
    }

    #[test]
    fn ids_sort_numerically() {
        let ids = item_ids(12_000);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(model_ids(3), vec!["m00", "m01", "m02"]);
    }

    #[test]
    fn fixed_parameter_lengths_checked() {
        let cfg = SyntheticConfig {
            n_models: 3,
            theta: ThetaGen::Fixed { values: vec![0.0, 1.0] },
            ..Default::default()
        };
        assert!(generate_synthetic(&cfg).is_err());
    }

    // Empirical cell variance near mu = 0.5 matches k/4.
    #[test]
    fn central_variance_matches_k() {
        let k = 0.1;
        let cfg = SyntheticConfig {
            n_models: 100,
            n_items: 1000,
            theta: ThetaGen::Normal { mean: 0.0, sd: 0.2 },
            b: DifficultyGen::Normal { mean: 0.0, sd: 0.2 },
            k_true: k,
            seed: 11,
        };
        let d = generate_synthetic(&cfg).unwrap();
        let (mut s, mut n) = (0.0, 0usize);
        for (m, i, y) in d.matrix.cells() {
            let mu = logistic_mean(d.theta[m], d.b[i]);
            if (mu - 0.5).abs() < 0.05 {
                s += (y - mu) * (y - mu) / (mu * (1.0 - mu));
                n += 1;
            }
        }
        assert!(n > 10_000);
        let k_hat = s / n as f64;
        assert!((k_hat - k).abs() < 0.1 * k, "{k_hat}");
    }

    #[test]
    fn synthetic_oracle_is_order_independent() {
        let models = vec![("a".to_string(), 0.3), ("b".to_string(), -0.2)];
        let items = vec![("x".to_string(), 0.0), ("y".to_string(), 1.0)];
        let k = NoiseParam::new(0.1).unwrap();
        let mut o1 = SyntheticOracle::new(&models, &items, k, 5);
        let mut o2 = SyntheticOracle::new(&models, &items, k, 5);
        let first = o1.respond("a", "y").unwrap();
        let _ = o2.respond("b", "x").unwrap();
        assert_eq!(o2.respond("a", "y").unwrap(), first);
        assert_ne!(o1.respond("a", "x").unwrap(), o1.respond("b", "x").unwrap());
        assert!(o1.respond("c", "x").is_err());
    }

    #[test]
    fn matrix_oracle_reports_missing_cells() {
        let mut m = ScoreMatrix::new(vec!["a".into()], vec!["x".into(), "y".into()]).unwrap();
        m.set(0, 0, 0.25).unwrap();
        let mut o = MatrixOracle::new(&m);
        assert_eq!(o.respond("a", "x").unwrap(), 0.25);
        assert!(matches!(o.respond("a", "y"), Err(Error::MissingScore { .. })));
    }
}
