//! Adaptive multi-model ranking with pairwise stopping and cost-aware
//! allocation, plus the random-allocation baseline.
//!
//! Each model runs its own [`CatSession`]. After a warm-up of `n_init`
//! maximum-information items per model, the ranker repeatedly orders models
//! by ability estimate, looks for adjacent pairs whose ordering is not yet
//! confident, and gives one more item to the member of those pairs with the
//! largest `SE^2 / ((n + 1) * cost)`. It stops once every adjacent pair is
//! confident, the budget cannot pay for another item, the undecided pairs
//! have hit `n_max`, or the item pools run dry.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};
use crate::session::{AbilityEstimate, CatSession, ItemBank, PriorSpec, SeMode};

pub const DEFAULT_GAMMA: f64 = 0.95;
pub const DEFAULT_N_INIT: usize = 10;
pub const DEFAULT_N_MAX: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    pub cost_per_item: f64,
}

impl ModelSpec {
    pub fn new(id: impl Into<String>, cost_per_item: f64) -> Self {
        Self {
            id: id.into(),
            cost_per_item,
        }
    }

    /// Models with unit cost.
    pub fn uniform<S: AsRef<str>>(ids: &[S]) -> Vec<Self> {
        ids.iter().map(|id| Self::new(id.as_ref(), 1.0)).collect()
    }
}

/// Threshold applied to `P(theta_i > theta_j)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfidenceRule {
    /// Confident when `p >= gamma` or `p <= 1 - gamma`.
    #[default]
    Band,
    /// Confident when `p >= 1 - (1 - gamma) / 2` or `p <= (1 - gamma) / 2`.
    TwoSided,
}

impl std::str::FromStr for ConfidenceRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "band" | "one-sided-gamma" => Ok(Self::Band),
            "two-sided" => Ok(Self::TwoSided),
            _ => Err(invalid(
                "confidence rule",
                format!("expected band|two-sided, got `{s}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerConfig {
    pub gamma: f64,
    pub n_init: usize,
    pub n_max: usize,
    /// Total spend allowed, in the same units as the per-item costs.
    pub budget: f64,
    pub seed: u64,
    pub confidence_rule: ConfidenceRule,
    pub se_mode: SeMode,
    /// Prior variance around the median active difficulty.
    pub prior_variance: f64,
}

impl Default for RankerConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            n_init: DEFAULT_N_INIT,
            n_max: DEFAULT_N_MAX,
            budget: f64::INFINITY,
            seed: 0,
            confidence_rule: ConfidenceRule::Band,
            se_mode: SeMode::Posterior,
            prior_variance: crate::session::DEFAULT_PRIOR_VARIANCE,
        }
    }
}

impl RankerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.5 && self.gamma < 1.0) {
            return Err(invalid("gamma", format!("must lie in (0.5, 1), got {}", self.gamma)));
        }
        if self.n_init == 0 {
            return Err(invalid("n_init", "must be at least 1"));
        }
        if self.n_max < self.n_init {
            return Err(invalid(
                "n_max",
                format!("must be >= n_init ({}), got {}", self.n_init, self.n_max),
            ));
        }
        if !(self.budget > 0.0) {
            return Err(invalid("budget", format!("must be > 0, got {}", self.budget)));
        }
        Ok(())
    }
}

/// Source of scores for `(model, item)` administrations.
pub trait ScoreOracle {
    fn respond(&mut self, model: &str, item: &str) -> Result<f64>;
}

impl<F> ScoreOracle for F
where
    F: FnMut(&str, &str) -> Result<f64>,
{
    fn respond(&mut self, model: &str, item: &str) -> Result<f64> {
        self(model, item)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `P(theta_i > theta_j)` under independent normal approximations.
pub fn pairwise_confidence(est_i: &AbilityEstimate, est_j: &AbilityEstimate) -> f64 {
    let scale = (est_i.se * est_i.se + est_j.se * est_j.se).sqrt();
    normal_cdf((est_i.theta_hat - est_j.theta_hat) / scale)
}

pub fn is_confident(p: f64, gamma: f64, rule: ConfidenceRule) -> bool {
    let hi = match rule {
        ConfidenceRule::Band => gamma,
        ConfidenceRule::TwoSided => 1.0 - (1.0 - gamma) / 2.0,
    };
    p >= hi || p <= 1.0 - hi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairConfidence {
    pub i: String,
    pub j: String,
    /// `P(theta_i > theta_j)`.
    pub p_i_gt_j: f64,
    pub confident: bool,
}

/// One model's position in the current ranking.
#[derive(Debug, Clone, Copy)]
pub struct RankedModel {
    pub estimate: AbilityEstimate,
    pub items_used: usize,
}

/// Indices `(r, r + 1)` of adjacent pairs in `ranked` (best first) that are
/// not confident and whose members both have fewer than `n_max` items.
pub fn uncertain_pairs(ranked: &[RankedModel], config: &RankerConfig) -> Vec<(usize, usize)> {
    ranked
        .windows(2)
        .enumerate()
        .filter(|(_, w)| {
            let p = pairwise_confidence(&w[0].estimate, &w[1].estimate);
            !is_confident(p, config.gamma, config.confidence_rule)
                && w[0].items_used < config.n_max
                && w[1].items_used < config.n_max
        })
        .map(|(r, _)| (r, r + 1))
        .collect()
}

/// Expected uncertainty reduction per unit cost, `SE^2 / ((n + 1) c)`.
pub fn allocation_value(se: f64, n_items: usize, cost: f64) -> f64 {
    se * se / ((n_items as f64 + 1.0) * cost)
}

#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub id: &'a str,
    pub se: f64,
    pub n_items: usize,
    pub cost: f64,
}

/// Index of the affordable candidate with the highest allocation value,
/// ties to the lower id; `None` when nobody is affordable.
pub fn select_model(candidates: &[Candidate<'_>], remaining_budget: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (n, c) in candidates.iter().enumerate() {
        if c.cost > remaining_budget {
            continue;
        }
        let v = allocation_value(c.se, c.n_items, c.cost);
        best = match best {
            Some((bn, bv)) if bv > v || (bv == v && candidates[bn].id <= c.id) => Some((bn, bv)),
            _ => Some((n, v)),
        };
    }
    best.map(|(n, _)| n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    AllConfident,
    BudgetExhausted,
    NMaxEverywhere,
    PoolExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Adaptive,
    RandomBaseline,
    FixedLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Administration {
    pub model: String,
    pub item: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub id: String,
    pub estimate: AbilityEstimate,
    pub items_used: usize,
    pub cost_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub method: Method,
    /// Model ids, highest estimated ability first.
    pub order: Vec<String>,
    /// Per-model outcome in `order`.
    pub models: Vec<ModelOutcome>,
    /// Every unordered pair, `i` ranked above `j`.
    pub pairs: Vec<PairConfidence>,
    /// Pairs whose confidence fails the configured rule.
    pub ties: Vec<(String, String)>,
    pub items_total: usize,
    pub cost_total: f64,
    pub bank_size: usize,
    pub stop_reason: StopReason,
    pub trace: Vec<Administration>,
}

impl RankingResult {
    pub fn outcome(&self, id: &str) -> Option<&ModelOutcome> {
        self.models.iter().find(|m| m.id == id)
    }

    pub fn items_used(&self, id: &str) -> usize {
        self.outcome(id).map_or(0, |m| m.items_used)
    }

    pub fn max_items_per_model(&self) -> usize {
        self.models.iter().map(|m| m.items_used).max().unwrap_or(0)
    }

    pub fn is_tie(&self, a: &str, b: &str) -> bool {
        self.ties
            .iter()
            .any(|(x, y)| (x == a && y == b) || (x == b && y == a))
    }
}

/// Per-run bookkeeping shared by the adaptive ranker, the random baseline
/// and the fixed-length ablation.
pub(crate) struct Engine<'a, O: ScoreOracle> {
    bank: &'a ItemBank,
    oracle: &'a mut O,
    pub(crate) models: Vec<ModelSpec>,
    pub(crate) sessions: Vec<CatSession>,
    pub(crate) spent: f64,
    budget: f64,
    trace: Vec<Administration>,
}

impl<'a, O: ScoreOracle> Engine<'a, O> {
    pub(crate) fn new(
        models: &[ModelSpec],
        bank: &'a ItemBank,
        oracle: &'a mut O,
        config: &RankerConfig,
        min_models: usize,
    ) -> Result<Self> {
        if models.len() < min_models {
            return Err(Error::TooSmall {
                what: "models",
                needed: min_models,
                found: models.len(),
            });
        }
        let mut seen = HashSet::new();
        for m in models {
            if !seen.insert(m.id.as_str()) {
                return Err(Error::Duplicate {
                    what: "model",
                    id: m.id.clone(),
                });
            }
            if !(m.cost_per_item.is_finite() && m.cost_per_item > 0.0) {
                return Err(invalid(
                    "cost",
                    format!("model `{}` has cost {}", m.id, m.cost_per_item),
                ));
            }
        }
        let mut models = models.to_vec();
        models.sort_by(|a, b| a.id.cmp(&b.id));
        let median = bank.median_active_difficulty().ok_or(Error::EmptyBank)?;
        let prior = PriorSpec::new(median, config.prior_variance)?;
        let sessions = models
            .iter()
            .map(|m| CatSession::new(m.id.clone(), bank, prior))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            bank,
            oracle,
            models,
            sessions,
            spent: 0.0,
            budget: config.budget,
            trace: Vec::new(),
        })
    }

    pub(crate) fn remaining_budget(&self) -> f64 {
        self.budget - self.spent
    }

    pub(crate) fn administer(&mut self, m: usize, item: usize) -> Result<()> {
        let model = &self.models[m].id;
        let item_id = &self.bank.item(item).id;
        let score = self.oracle.respond(model, item_id)?;
        self.sessions[m].record_response(self.bank, item, score)?;
        self.spent += self.models[m].cost_per_item;
        self.trace.push(Administration {
            model: model.clone(),
            item: item_id.clone(),
            score,
        });
        Ok(())
    }

    pub(crate) fn administer_mfi(&mut self, m: usize) -> Result<()> {
        let item = self.sessions[m].select_item(self.bank)?;
        self.administer(m, item)
    }

    /// Model indices sorted by estimate, best first, ties by id.
    pub(crate) fn ranking(&self, mode: SeMode) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.models.len()).collect();
        idx.sort_by(|&a, &b| {
            let ta = self.sessions[a].estimate(mode).theta_hat;
            let tb = self.sessions[b].estimate(mode).theta_hat;
            tb.total_cmp(&ta).then_with(|| self.models[a].id.cmp(&self.models[b].id))
        });
        idx
    }

    pub(crate) fn finish(self, method: Method, stop_reason: StopReason, config: &RankerConfig) -> RankingResult {
        let order = self.ranking(config.se_mode);
        let outcomes: Vec<ModelOutcome> = order
            .iter()
            .map(|&m| {
                let n = self.sessions[m].n_items();
                ModelOutcome {
                    id: self.models[m].id.clone(),
                    estimate: self.sessions[m].estimate(config.se_mode),
                    items_used: n,
                    cost_used: n as f64 * self.models[m].cost_per_item,
                }
            })
            .collect();
        let mut pairs = Vec::new();
        let mut ties = Vec::new();
        for a in 0..outcomes.len() {
            for b in a + 1..outcomes.len() {
                let p = pairwise_confidence(&outcomes[a].estimate, &outcomes[b].estimate);
                let confident = is_confident(p, config.gamma, config.confidence_rule);
                if !confident {
                    ties.push((outcomes[a].id.clone(), outcomes[b].id.clone()));
                }
                pairs.push(PairConfidence {
                    i: outcomes[a].id.clone(),
                    j: outcomes[b].id.clone(),
                    p_i_gt_j: p,
                    confident,
                });
            }
        }
        RankingResult {
            method,
            order: outcomes.iter().map(|o| o.id.clone()).collect(),
            items_total: outcomes.iter().map(|o| o.items_used).sum(),
            cost_total: outcomes.iter().map(|o| o.cost_used).sum(),
            models: outcomes,
            pairs,
            ties,
            bank_size: self.bank.n_active(),
            stop_reason,
            trace: self.trace,
        }
    }
}

fn check_preconditions(models: &[ModelSpec], bank: &ItemBank, config: &RankerConfig) -> Result<()> {
    config.validate()?;
    let available = bank.n_active();
    if available < config.n_init {
        return Err(Error::BankTooSmall {
            available,
            needed: config.n_init,
        });
    }
    let warmup: f64 = models
        .iter()
        .map(|m| config.n_init as f64 * m.cost_per_item)
        .sum();
    if warmup > config.budget {
        return Err(Error::BudgetBelowWarmup {
            budget: config.budget,
            needed: warmup,
        });
    }
    Ok(())
}

/// Adaptive ranking of `models` on `bank`.
pub fn run_ranker<O: ScoreOracle>(
    models: &[ModelSpec],
    bank: &ItemBank,
    oracle: &mut O,
    config: &RankerConfig,
) -> Result<RankingResult> {
    check_preconditions(models, bank, config)?;
    let mut engine = Engine::new(models, bank, oracle, config, 2)?;

    for m in 0..engine.models.len() {
        for _ in 0..config.n_init {
            engine.administer_mfi(m)?;
        }
    }

    let stop = loop {
        let order = engine.ranking(config.se_mode);
        let ranked: Vec<RankedModel> = order
            .iter()
            .map(|&m| RankedModel {
                estimate: engine.sessions[m].estimate(config.se_mode),
                items_used: engine.sessions[m].n_items(),
            })
            .collect();
        let all_confident = ranked.windows(2).all(|w| {
            is_confident(
                pairwise_confidence(&w[0].estimate, &w[1].estimate),
                config.gamma,
                config.confidence_rule,
            )
        });
        if all_confident {
            break StopReason::AllConfident;
        }
        let uncertain = uncertain_pairs(&ranked, config);
        if uncertain.is_empty() {
            break StopReason::NMaxEverywhere;
        }

        let mut members: Vec<usize> = uncertain
            .iter()
            .flat_map(|&(a, b)| [order[a], order[b]])
            .collect();
        members.sort_unstable();
        members.dedup();
        members.retain(|&m| !engine.sessions[m].remaining().is_empty());
        if members.is_empty() {
            break StopReason::PoolExhausted;
        }

        let candidates: Vec<Candidate<'_>> = members
            .iter()
            .map(|&m| {
                let est = engine.sessions[m].estimate(config.se_mode);
                Candidate {
                    id: &engine.models[m].id,
                    se: est.se,
                    n_items: est.n_items,
                    cost: engine.models[m].cost_per_item,
                }
            })
            .collect();
        let Some(pick) = select_model(&candidates, engine.remaining_budget()) else {
            break StopReason::BudgetExhausted;
        };
        let m = members[pick];
        engine.administer_mfi(m)?;
    };

    Ok(engine.finish(Method::Adaptive, stop, config))
}

/// Random allocation: a uniformly random affordable model below `n_max`,
/// then a uniformly random item it has not seen, until nothing is eligible.
pub fn run_random_baseline<O: ScoreOracle>(
    models: &[ModelSpec],
    bank: &ItemBank,
    oracle: &mut O,
    config: &RankerConfig,
) -> Result<RankingResult> {
    check_preconditions(models, bank, config)?;
    let mut engine = Engine::new(models, bank, oracle, config, 2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let stop = loop {
        let open: Vec<usize> = (0..engine.models.len())
            .filter(|&m| {
                engine.sessions[m].n_items() < config.n_max
                    && !engine.sessions[m].remaining().is_empty()
            })
            .collect();
        let eligible: Vec<usize> = open
            .iter()
            .copied()
            .filter(|&m| engine.models[m].cost_per_item <= engine.remaining_budget())
            .collect();
        if eligible.is_empty() {
            let all_capped = engine.sessions.iter().all(|s| s.n_items() >= config.n_max);
            break if !open.is_empty() {
                StopReason::BudgetExhausted
            } else if all_capped {
                StopReason::NMaxEverywhere
            } else {
                StopReason::PoolExhausted
            };
        }
        let m = eligible[rng.random_range(0..eligible.len())];
        let remaining = engine.sessions[m].remaining();
        let item = *remaining
            .iter()
            .nth(rng.random_range(0..remaining.len()))
            .expect("non-empty pool");
        engine.administer(m, item)?;
    };

    Ok(engine.finish(Method::RandomBaseline, stop, config))
}

/// Per-model item counts from a result, keyed by model id.
pub fn items_by_model(result: &RankingResult) -> BTreeMap<String, usize> {
    result
        .models
        .iter()
        .map(|m| (m.id.clone(), m.items_used))
        .collect()
}
