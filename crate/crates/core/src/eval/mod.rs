//! Ground truth, synthetic data, ranking-quality metrics, conformance and
//! the fixed-length ablation.

mod conformance;
mod fixed;
mod kendall;
mod metrics;
mod synth;
mod truth;

pub use conformance::{conformance, conformance_from_cells, ConformanceBin, ConformanceReport, DEFAULT_BINS, MIN_BIN_CELLS};
pub use fixed::fixed_length_cat;
pub use kendall::{kendall_tau, tau_b};
pub use metrics::{evaluate, tie_metrics, Confusion, EvalReport, TieMetrics};
pub use synth::{generate_synthetic, DifficultyGen, MatrixOracle, SyntheticConfig, SyntheticData, SyntheticOracle, ThetaGen};
pub use truth::{bootstrap_ties, ground_truth_ranking, unordered, GroundTruth, TiePair, DEFAULT_N_BOOT};
