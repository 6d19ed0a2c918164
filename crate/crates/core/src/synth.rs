//! Regime-switching GARCH simulator with known ground truth.
//!
//! Each hour lives in one of K regimes; the active regime's GARCH(1,1)
//! recursion drives that hour's conditional variance, and the hour is
//! realized as 60 i.i.d. normal minute log-returns whose variances sum to
//! it. Prices integrate the minute returns, so the generated series feeds
//! straight back into the feature pipeline, and the true regime path stays
//! available for diagnostic scoring.

use crate::data::{PricePoint, PriceSeries};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("price construction failed: {0}")]
    Prices(#[from] crate::data::PipelineError),
}

/// One regime's GARCH(1,1) coefficients, constrained to a stationary
/// positive-variance process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchRegime {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GarchRegime {
    pub fn validate(&self) -> Result<(), SynthError> {
        let ok = self.omega > 0.0
            && self.alpha >= 0.0
            && self.beta >= 0.0
            && self.alpha + self.beta < 1.0
            && self.omega.is_finite()
            && self.alpha.is_finite()
            && self.beta.is_finite();
        if !ok {
            return Err(SynthError::InvalidSpec(format!(
                "regime (ω={}, α={}, β={}) violates ω>0, α≥0, β≥0, α+β<1",
                self.omega, self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Long-run variance ω/(1−α−β).
    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.alpha - self.beta)
    }
}

/// Full simulator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub regimes: Vec<GarchRegime>,
    /// Row-stochastic K×K matrix; `transition[from][to]`.
    pub transition: Vec<Vec<f64>>,
    /// Regime of the first hour.
    pub initial_regime: usize,
    pub seed: u64,
}

impl RegimeSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let k = self.regimes.len();
        if k == 0 {
            return Err(SynthError::InvalidSpec("no regimes".into()));
        }
        for regime in &self.regimes {
            regime.validate()?;
        }
        if self.transition.len() != k {
            return Err(SynthError::InvalidSpec(format!(
                "transition matrix has {} rows for {k} regimes",
                self.transition.len()
            )));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != k {
                return Err(SynthError::InvalidSpec(format!(
                    "transition row {i} has {} entries",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
                return Err(SynthError::InvalidSpec(format!(
                    "transition row {i} has a negative or nonfinite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(SynthError::InvalidSpec(format!(
                    "transition row {i} sums to {sum}"
                )));
            }
        }
        if self.initial_regime >= k {
            return Err(SynthError::InvalidSpec(format!(
                "initial regime {} out of range for {k} regimes",
                self.initial_regime
            )));
        }
        Ok(())
    }

    /// The default two-regime benchmark: a calm, persistent regime and a
    /// louder, choppier one, with symmetric 2%-per-hour switching.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            regimes: vec![
                GarchRegime {
                    omega: 1e-6,
                    alpha: 0.05,
                    beta: 0.90,
                },
                GarchRegime {
                    omega: 5e-6,
                    alpha: 0.15,
                    beta: 0.80,
                },
            ],
            transition: vec![vec![0.98, 0.02], vec![0.02, 0.98]],
            initial_regime: 0,
            seed,
        }
    }
}

/// Hours of data the benchmark generates by default.
pub const BENCHMARK_HOURS: usize = 6000;

/// A generated series with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSeries {
    /// 1-minute prices, `hours * minutes_per_hour + 1` points.
    pub prices: PriceSeries,
    /// True regime per hour.
    pub regimes: Vec<usize>,
    /// Conditional variance per hour (simulator internal, for closure
    /// checks).
    pub hourly_variance: Vec<f64>,
}

/// Simulates `hours` hours of minute prices. Deterministic in the spec:
/// each hour past the first draws one regime transition, then its minute
/// innovations, from a single seeded stream.
pub fn generate(
    spec: &RegimeSpec,
    hours: usize,
    minutes_per_hour: usize,
) -> Result<SynthSeries, SynthError> {
    spec.validate()?;
    if hours == 0 || minutes_per_hour == 0 {
        return Err(SynthError::InvalidSpec(format!(
            "need positive sizes, got {hours} hours × {minutes_per_hour} minutes"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut regime = spec.initial_regime;
    let mut variance = spec.regimes[regime].unconditional_variance();
    let mut regimes = Vec::with_capacity(hours);
    let mut hourly_variance = Vec::with_capacity(hours);
    let mut log_price = 100.0_f64.ln();
    let mut opens = Vec::with_capacity(hours * minutes_per_hour + 1);
    opens.push(log_price.exp());
    let mut prev_return = 0.0;
    for hour in 0..hours {
        if hour > 0 {
            regime = next_regime(&spec.transition[regime], &mut rng);
            let r = &spec.regimes[regime];
            variance = r.omega + r.alpha * prev_return * prev_return + r.beta * variance;
        }
        regimes.push(regime);
        hourly_variance.push(variance);
        let minute_sd = (variance / minutes_per_hour as f64).sqrt();
        let mut hour_return = 0.0;
        for _ in 0..minutes_per_hour {
            let z: f64 = rng.sample(StandardNormal);
            let minute_return = minute_sd * z;
            hour_return += minute_return;
            log_price += minute_return;
            opens.push(log_price.exp());
        }
        prev_return = hour_return;
    }
    Ok(SynthSeries {
        prices: PriceSeries::new(
            opens
                .into_iter()
                .enumerate()
                .map(|(i, open)| PricePoint {
                    timestamp: i as i64,
                    open,
                })
                .collect(),
        )?,
        regimes,
        hourly_variance,
    })
}

fn next_regime(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut u: f64 = rng.random_range(0.0..1.0);
    for (i, &p) in row.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    row.len() - 1
}
