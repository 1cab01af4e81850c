use crate::error::{invalid, Error, Result};
use crate::ranker::{Engine, Method, ModelSpec, RankerConfig, RankingResult, ScoreOracle, StopReason};
use crate::session::ItemBank;

/// Fixed-length CAT: every model gets exactly `n` maximum-information items.
/// Ranking, pair confidences and ties follow `config` exactly as in
/// [`run_ranker`](crate::ranker::run_ranker); budget and `n_max` are ignored.
pub fn fixed_length_cat<O: ScoreOracle>(
    models: &[ModelSpec],
    bank: &ItemBank,
    oracle: &mut O,
    n: usize,
    config: &RankerConfig,
) -> Result<RankingResult> {
    if n == 0 {
        return Err(invalid("n", "fixed-length CAT needs at least one item"));
    }
    let available = bank.n_active();
    if n > available {
        return Err(Error::BankTooSmall { available, needed: n });
    }
    let mut engine = Engine::new(models, bank, oracle, config, 2)?;
    for m in 0..engine.models.len() {
        for _ in 0..n {
            engine.administer_mfi(m)?;
        }
    }
    Ok(engine.finish(Method::FixedLength, StopReason::NMaxEverywhere, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{generate_synthetic, SyntheticConfig, ThetaGen};
    use crate::ranker::run_ranker;

    #[test]
    fn matches_adaptive_max_usage() {
        let data = generate_synthetic(&SyntheticConfig {
            n_models: 3,
            n_items: 400,
            theta: ThetaGen::Fixed { values: vec![-1.0, 0.0, 0.1] },
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let bank = data.true_bank();
        let models = ModelSpec::uniform(data.matrix.models());
        let cfg = RankerConfig {
            n_max: 60,
            ..Default::default()
        };
        let adaptive = run_ranker(&models, &bank, &mut data.oracle(), &cfg).unwrap();
        let n = adaptive.max_items_per_model();
        let fixed = fixed_length_cat(&models, &bank, &mut data.oracle(), n, &cfg).unwrap();
        assert!(fixed.models.iter().all(|m| m.items_used == n));
        assert_eq!(fixed.items_total, 3 * n);
        assert!(fixed.items_total >= adaptive.items_total);
    }

    #[test]
    fn full_bank_recovers_order() {
        let data = generate_synthetic(&SyntheticConfig {
            n_models: 3,
            n_items: 60,
            theta: ThetaGen::Fixed { values: vec![1.5, -1.5, 0.0] },
            seed: 9,
            ..Default::default()
        })
        .unwrap();
        let bank = data.true_bank();
        let models = ModelSpec::uniform(data.matrix.models());
        let r = fixed_length_cat(&models, &bank, &mut data.oracle(), 60, &RankerConfig::default()).unwrap();
        let gt = crate::eval::ground_truth_ranking(&data.matrix).unwrap();
        assert_eq!(r.order, gt.order);
    }

    #[test]
    fn rejects_zero_and_oversized_lengths() {
        let data = generate_synthetic(&SyntheticConfig {
            n_models: 2,
            n_items: 10,
            ..Default::default()
        })
        .unwrap();
        let bank = data.true_bank();
        let models = ModelSpec::uniform(data.matrix.models());
        let cfg = RankerConfig::default();
        assert!(fixed_length_cat(&models, &bank, &mut data.oracle(), 0, &cfg).is_err());
        assert!(fixed_length_cat(&models, &bank, &mut data.oracle(), 11, &cfg).is_err());
    }
}
