//! Trainable scalar parameters and the Adam update rule.
//!
//! A [`Param`] couples a value with its accumulated gradient and per-scalar
//! Adam state. [`adam_step`] applies one bias-corrected update to a batch of
//! parameters and zeroes their gradients. Optimizer state is deliberately
//! not serialized: a saved model restores with fresh moments.

use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    /// A gradient fed into the update was NaN or infinite.
    #[error("non-finite gradient {grad} for parameter at value {value}")]
    NonFiniteGradient { value: f64, grad: f64 },
    /// The update itself produced a non-finite parameter value.
    #[error("parameter became non-finite after update (was {before})")]
    NonFiniteUpdate { before: f64 },
    #[error("invalid optimizer config: {0}")]
    Config(String),
}

/// Hyperparameters for [`adam_step`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(OptimError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(OptimError::Config(format!(
                    "{name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(OptimError::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// One trainable scalar with its gradient and Adam moments.
///
/// Serializes as a bare number; gradient and moments are runtime state.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Param {
    pub value: f64,
    pub grad: f64,
    m: f64,
    v: f64,
    step: u64,
}

impl Param {
    pub fn new(value: f64) -> Self {
        Self {
            value,
            ..Self::default()
        }
    }
}

impl Serialize for Param {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value)
    }
}

impl<'de> Deserialize<'de> for Param {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        f64::deserialize(deserializer).map(Param::new)
    }
}

/// One Adam update over a batch of parameters; gradients are zeroed after.
pub fn adam_step<'a>(
    params: impl IntoIterator<Item = &'a mut Param>,
    config: &AdamConfig,
) -> Result<(), OptimError> {
    config.validate()?;
    for p in params {
        if !p.grad.is_finite() {
            return Err(OptimError::NonFiniteGradient {
                value: p.value,
                grad: p.grad,
            });
        }
        p.step += 1;
        p.m = config.beta1 * p.m + (1.0 - config.beta1) * p.grad;
        p.v = config.beta2 * p.v + (1.0 - config.beta2) * p.grad * p.grad;
        let m_hat = p.m / (1.0 - config.beta1.powi(p.step as i32));
        let v_hat = p.v / (1.0 - config.beta2.powi(p.step as i32));
        let before = p.value;
        p.value -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        if !p.value.is_finite() {
            return Err(OptimError::NonFiniteUpdate { before });
        }
        p.grad = 0.0;
    }
    Ok(())
}

/// Central-difference gradient of `f` at `at`, one coordinate at a time.
///
/// Used as the independent oracle when validating backward passes.
pub fn central_differences<F, E>(mut f: F, at: &[f64], h: f64) -> Result<Vec<f64>, E>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    let mut grads = Vec::with_capacity(at.len());
    let mut point = at.to_vec();
    for i in 0..at.len() {
        let orig = point[i];
        point[i] = orig + h;
        let hi = f(&point)?;
        point[i] = orig - h;
        let lo = f(&point)?;
        point[i] = orig;
        grads.push((hi - lo) / (2.0 * h));
    }
    Ok(grads)
}

/// Relative error between an analytic and a reference gradient, with a
/// scale floor so near-zero gradients compare sanely. Checking the result
/// against a tolerance `tol` enforces the relative tolerance away from zero
/// and an absolute tolerance of `tol · floor` below the floor scale.
pub fn gradient_relative_error(analytic: f64, reference: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(reference.abs()).max(floor);
    (analytic - reference).abs() / denom
}
