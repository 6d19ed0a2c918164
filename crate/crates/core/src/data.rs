//! Price-to-feature pipeline.
//!
//! Turns a 1-minute open-price series into aligned per-hour feature pairs
//! (historic volatility, squared windowed log-return), normalizes them on a
//! training segment, and cuts chronological train/validation/test splits.
//! All transforms are pure and deterministic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Values below this are clamped up before the log transform so that flat
/// windows (all-zero returns) stay finite.
pub const FEATURE_CLAMP_FLOOR: f64 = 1e-12;

/// Minutes aggregated into one feature sample.
pub const DEFAULT_WINDOW: usize = 60;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("price at index {index} is not positive ({value})")]
    NonPositivePrice { index: usize, value: f64 },
    #[error("timestamps not strictly increasing at index {index}")]
    UnsortedTimestamps { index: usize },
    #[error("series too short: need at least {needed}, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid window {window} for length {len}")]
    InvalidWindow { window: usize, len: usize },
    #[error("fit segment {start}..{end} is invalid for length {len}")]
    BadFitSegment {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("channel {channel} has zero variance on the fit segment")]
    DegenerateChannel { channel: &'static str },
    #[error("split fractions ({0}, {1}, {2}) do not sum to 1")]
    BadSplitFractions(f64, f64, f64),
    #[error("series is not normalized; fit normalization before use")]
    NotNormalized,
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
}

/// One 1-minute bar: integer epoch-minutes and the open price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub timestamp: i64,
    pub open: f64,
}

/// Validated 1-minute open-price series.
///
/// Construction enforces strictly increasing timestamps and positive opens.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    points: Vec<PricePoint>,
}

impl PriceSeries {
    pub fn new(points: Vec<PricePoint>) -> Result<Self, PipelineError> {
        for (i, p) in points.iter().enumerate() {
            if !(p.open.is_finite() && p.open > 0.0) {
                return Err(PipelineError::NonPositivePrice {
                    index: i,
                    value: p.open,
                });
            }
            if i > 0 && p.timestamp <= points[i - 1].timestamp {
                return Err(PipelineError::UnsortedTimestamps { index: i });
            }
        }
        Ok(Self { points })
    }

    /// Convenience constructor for series indexed by consecutive minutes.
    pub fn from_opens(opens: &[f64]) -> Result<Self, PipelineError> {
        Self::new(
            opens
                .iter()
                .enumerate()
                .map(|(i, &open)| PricePoint {
                    timestamp: i as i64,
                    open,
                })
                .collect(),
        )
    }

    pub fn points(&self) -> &[PricePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of timestamp gaps larger than one minute, for ingest warnings.
    pub fn gap_count(&self) -> usize {
        self.points
            .windows(2)
            .filter(|w| w[1].timestamp - w[0].timestamp > 1)
            .count()
    }
}

/// 1-minute log-returns; one element shorter than its price series.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    values: Vec<f64>,
}

impl ReturnSeries {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// u[t] = ln(S[t+1] / S[t]) for each adjacent pair of opens.
pub fn log_returns(prices: &PriceSeries) -> Result<ReturnSeries, PipelineError> {
    if prices.len() < 2 {
        return Err(PipelineError::TooShort {
            needed: 2,
            got: prices.len(),
        });
    }
    let opens = prices.points();
    let values = opens
        .windows(2)
        .map(|w| (w[1].open / w[0].open).ln())
        .collect();
    Ok(ReturnSeries { values })
}

/// Root of the mean squared 1-minute return over each non-overlapping
/// window: output[t] = sqrt(mean of u² over [window·t, window·(t+1))).
///
/// The square root is part of the definition; the result is used as the
/// "historic volatility" feature as-is.
pub fn historic_volatility(
    returns: &ReturnSeries,
    window: usize,
) -> Result<Vec<f64>, PipelineError> {
    if window == 0 || window > returns.len() {
        return Err(PipelineError::InvalidWindow {
            window,
            len: returns.len(),
        });
    }
    Ok(returns
        .values()
        .chunks_exact(window)
        .map(|chunk| {
            let mean_sq = chunk.iter().map(|u| u * u).sum::<f64>() / window as f64;
            mean_sq.sqrt()
        })
        .collect())
}

/// Log-return over each non-overlapping window of prices:
/// output[t] = ln(S[window·(t+1)] / S[window·t]).
pub fn window_log_return(prices: &PriceSeries, window: usize) -> Result<Vec<f64>, PipelineError> {
    if window == 0 || prices.len() < window + 1 {
        return Err(PipelineError::InvalidWindow {
            window,
            len: prices.len(),
        });
    }
    let opens = prices.points();
    let count = (prices.len() - 1) / window;
    Ok((0..count)
        .map(|t| (opens[window * (t + 1)].open / opens[window * t].open).ln())
        .collect())
}

/// One per-hour feature pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolatilitySample {
    /// Historic volatility of the window.
    pub sigma2: f64,
    /// Squared windowed log-return of the window.
    pub u60sq: f64,
}

/// Per-channel normalization statistics in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

/// Parameters of the feature transform v ↦ (ln max(v, floor) − mean)/std.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    /// Records that ln was applied before centering and scaling.
    pub log_transform: bool,
    pub clamp_floor: f64,
    pub sigma2: ChannelStats,
    pub u60sq: ChannelStats,
}

impl NormalizationParams {
    pub fn apply(&self, sample: VolatilitySample) -> [f64; 2] {
        [
            (sample.sigma2.max(self.clamp_floor).ln() - self.sigma2.mean) / self.sigma2.std,
            (sample.u60sq.max(self.clamp_floor).ln() - self.u60sq.mean) / self.u60sq.std,
        ]
    }

    /// Inverts the sigma2-channel transform back to the original scale.
    pub fn invert_sigma2(&self, normalized: f64) -> f64 {
        (normalized * self.sigma2.std + self.sigma2.mean).exp()
    }

    /// Inverts the u60sq-channel transform back to the original scale.
    pub fn invert_u60sq(&self, normalized: f64) -> f64 {
        (normalized * self.u60sq.std + self.u60sq.mean).exp()
    }
}

/// Aligned feature samples plus (once fit) their normalization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    samples: Vec<VolatilitySample>,
    norm: Option<NormalizationParams>,
}

impl FeatureSeries {
    pub fn from_samples(samples: Vec<VolatilitySample>) -> Self {
        Self {
            samples,
            norm: None,
        }
    }

    /// Reassembles a series from previously computed parts, for file reload.
    pub fn with_norm(samples: Vec<VolatilitySample>, norm: NormalizationParams) -> Self {
        Self {
            samples,
            norm: Some(norm),
        }
    }

    pub fn samples(&self) -> &[VolatilitySample] {
        &self.samples
    }

    pub fn norm(&self) -> Option<&NormalizationParams> {
        self.norm.as_ref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Normalized (sigma2, u60sq) pairs, the model-facing representation.
    pub fn normalized_pairs(&self) -> Result<Vec<[f64; 2]>, PipelineError> {
        let norm = self.norm.ok_or(PipelineError::NotNormalized)?;
        Ok(self.samples.iter().map(|&s| norm.apply(s)).collect())
    }
}

/// Derives per-hour features from a 1-minute price series.
pub fn features_from_prices(
    prices: &PriceSeries,
    window: usize,
) -> Result<FeatureSeries, PipelineError> {
    let returns = log_returns(prices)?;
    let vol = historic_volatility(&returns, window)?;
    let wlr = window_log_return(prices, window)?;
    debug_assert_eq!(vol.len(), wlr.len());
    let samples = vol
        .into_iter()
        .zip(wlr)
        .map(|(sigma2, w)| VolatilitySample {
            sigma2,
            u60sq: w * w,
        })
        .collect();
    Ok(FeatureSeries::from_samples(samples))
}

fn fit_channel(
    values: impl Iterator<Item = f64>,
    channel: &'static str,
    floor: f64,
) -> Result<ChannelStats, PipelineError> {
    let logs: Vec<f64> = values.map(|v| v.max(floor).ln()).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    // Population convention: divide by n, not n - 1.
    let var = logs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if !(mean.is_finite() && var.is_finite()) {
        return Err(PipelineError::NonFinite {
            context: "normalization statistics",
        });
    }
    if var == 0.0 {
        return Err(PipelineError::DegenerateChannel { channel });
    }
    Ok(ChannelStats {
        mean,
        std: var.sqrt(),
    })
}

/// Fits log-space center/scale statistics on `fit_segment` and attaches them
/// to the series. Values are clamped at [`FEATURE_CLAMP_FLOOR`] before ln.
pub fn normalize(
    series: &FeatureSeries,
    fit_segment: std::ops::Range<usize>,
) -> Result<FeatureSeries, PipelineError> {
    if fit_segment.start >= fit_segment.end || fit_segment.end > series.len() {
        return Err(PipelineError::BadFitSegment {
            start: fit_segment.start,
            end: fit_segment.end,
            len: series.len(),
        });
    }
    let fit = &series.samples[fit_segment];
    let norm = NormalizationParams {
        log_transform: true,
        clamp_floor: FEATURE_CLAMP_FLOOR,
        sigma2: fit_channel(fit.iter().map(|s| s.sigma2), "sigma2", FEATURE_CLAMP_FLOOR)?,
        u60sq: fit_channel(fit.iter().map(|s| s.u60sq), "u60sq", FEATURE_CLAMP_FLOOR)?,
    };
    Ok(FeatureSeries {
        samples: series.samples.clone(),
        norm: Some(norm),
    })
}

/// Chronological split fractions; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.4,
            val_frac: 0.4,
            test_frac: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let sum = self.train_frac + self.val_frac + self.test_frac;
        let in_range = |f: f64| f > 0.0 && f < 1.0;
        if !(in_range(self.train_frac) && in_range(self.val_frac) && in_range(self.test_frac))
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(PipelineError::BadSplitFractions(
                self.train_frac,
                self.val_frac,
                self.test_frac,
            ));
        }
        Ok(())
    }

    /// End indices of the train and validation segments for a length-`total`
    /// series; the test segment is the remainder.
    pub fn boundaries(&self, total: usize) -> Result<SplitBoundaries, PipelineError> {
        self.validate()?;
        if total < 3 {
            return Err(PipelineError::TooShort {
                needed: 3,
                got: total,
            });
        }
        let train_end = (self.train_frac * total as f64).floor() as usize;
        let val_end = train_end + (self.val_frac * total as f64).floor() as usize;
        Ok(SplitBoundaries {
            train_end,
            val_end,
            total,
        })
    }
}

/// Materialized segment boundaries: [0, train_end), [train_end, val_end),
/// [val_end, total).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBoundaries {
    pub train_end: usize,
    pub val_end: usize,
    pub total: usize,
}

/// Cuts a feature series into contiguous train/validation/test segments.
pub fn split(
    series: &FeatureSeries,
    spec: &SplitSpec,
) -> Result<(FeatureSeries, FeatureSeries, FeatureSeries), PipelineError> {
    let b = spec.boundaries(series.len())?;
    let cut = |range: std::ops::Range<usize>| FeatureSeries {
        samples: series.samples[range].to_vec(),
        norm: series.norm,
    };
    Ok((
        cut(0..b.train_end),
        cut(b.train_end..b.val_end),
        cut(b.val_end..b.total),
    ))
}
