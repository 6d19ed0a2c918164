//! Regime-aware one-step volatility forecasting with pairwise filters.
//!
//! The crate turns 1-minute prices into hourly volatility features, filters
//! a discrete latent state whose transition weights condition on the full
//! observation pair (current and next), mixes per-state forecasters with the
//! filtered posterior, and trains everything end to end by reverse-mode
//! differentiation of the one-step prediction error. A classical
//! hidden-Markov variant, GARCH(1,1), and small feedforward nets serve as
//! baselines under the identical training loop.

pub mod autodiff;
pub mod data;
pub mod hmc;
pub mod io;
pub mod models;
pub mod optim;
pub mod pmc;
pub mod synth;
pub mod train;

pub use autodiff::{Engine, Eval, Recorder, Tape};
pub use data::{FeatureSeries, NormalizationParams, PriceSeries, SplitSpec};
pub use hmc::{HeadMode, HmcModel};
pub use models::{BaseKind, BaseModel, GarchParams};
pub use pmc::{FilterRun, FilteredPosterior, PmcModel};
pub use train::{
    evaluate_test, train, Dataset, ExperimentReport, ForecastModel, ModelSpec, TrainConfig,
};
