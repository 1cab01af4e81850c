//! Adaptive ranking of models on continuous-score benchmarks.
//!
//! Scores in `[0, 1]` are modelled with a heteroskedastic normal item
//! response model ([`irt`]). A historical score matrix is calibrated in
//! closed form ([`calibration`]); new models are then tested adaptively
//! ([`session`]) and ranked against each other with as few items as the
//! requested confidence allows ([`ranker`]). [`eval`] holds ground-truth
//! construction, ranking metrics and synthetic data, and [`io`] the file
//! formats.

pub mod calibration;
pub mod error;
pub mod eval;
pub mod io;
pub mod irt;
pub mod matrix;
pub mod ranker;
pub mod session;

pub use calibration::{calibrate, CalibrationArtifact, NormalizationTransform};
pub use error::{Error, Result};
pub use irt::{Ability, ContinuousScore, ItemParams, NoiseParam};
pub use matrix::{LongScoreRecord, RawScoreTable, ScoreMatrix};
pub use ranker::{
    run_random_baseline, run_ranker, ConfidenceRule, ModelSpec, RankerConfig, RankingResult, ScoreOracle,
    StopReason,
};
pub use session::{AbilityEstimate, CatSession, ItemBank, PriorSpec, SeMode};
