//! Pairwise-chain regime filter and its prediction rule.
//!
//! The model keeps a filtered posterior over N hidden states and updates it
//! from one observation to the next with a single positive-output network:
//! the update needs no explicit observation law. One step computes
//!
//! ```text
//! unnorm(x') = Σ_x posterior(x) · w(x, x', y_t, y_next)
//! ```
//!
//! and renormalizes. Predictions mix N per-state base forecasters under the
//! current posterior. With one state the machinery collapses exactly to the
//! lone base forecaster.

pub mod explicit;

use crate::autodiff::{Engine, Eval, TapeError};
use crate::models::{
    bias_toward_state_persistence, BaseKind, BaseModel, BoundBase, BoundLayer, DenseLayer,
};
use crate::optim::Param;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Additive floor on transition weights; keeps every step's normalizer
/// strictly positive.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Half-width of the initial spread between expert output levels, in
/// normalized target units.
pub const EXPERT_LEVEL_SPREAD: f64 = 0.7;

/// Tolerance on posterior normalization.
pub const POSTERIOR_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error("all transition weights collapsed to zero at step {step}")]
    Degenerate { step: usize },
    #[error("invalid posterior: {0}")]
    InvalidPosterior(String),
    #[error("need at least 2 samples to filter, got {got}")]
    TooShort { got: usize },
    #[error("model has {experts} experts but {n_states} states")]
    ExpertMismatch { experts: usize, n_states: usize },
    #[error("experts must all share one architecture kind")]
    MixedExperts,
    #[error("state count must be at least 1")]
    NoStates,
}

/// Probability vector p(x_t | y_{1:t}) over the hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredPosterior(Vec<f64>);

impl FilteredPosterior {
    pub fn new(probs: Vec<f64>) -> Result<Self, FilterError> {
        if probs.is_empty() {
            return Err(FilterError::InvalidPosterior("empty vector".into()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(p.is_finite() && p >= 0.0) {
                return Err(FilterError::InvalidPosterior(format!("entry {i} is {p}")));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > POSTERIOR_SUM_TOL {
            return Err(FilterError::InvalidPosterior(format!(
                "entries sum to {sum}"
            )));
        }
        Ok(Self(probs))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the most probable state (first maximum on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.0.iter().enumerate().skip(1) {
            if p.total_cmp(&self.0[best]).is_gt() {
                best = i;
            }
        }
        best
    }
}

/// Positive-output network scoring one transition (x_t, x_{t+1}) given the
/// feature pairs (y_t, y_{t+1}).
///
/// Input layout is the concatenation (one-hot x_t, one-hot x_{t+1}, y_t,
/// y_next); one tanh hidden layer of the same width 2N+4, then an affine
/// map to one scalar through softplus plus [`WEIGHT_FLOOR`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionWeightNet {
    pub n_states: usize,
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

impl TransitionWeightNet {
    pub fn init(n_states: usize, rng: &mut ChaCha8Rng) -> Self {
        let width = 2 * n_states + 4;
        let mut hidden = DenseLayer::init(width, width, rng);
        let mut output = DenseLayer::init(1, width, rng);
        bias_toward_state_persistence(&mut hidden, &mut output, n_states);
        Self {
            n_states,
            hidden,
            output,
        }
    }

    pub fn bind<E: Engine>(&self, eng: &mut E) -> Result<BoundWeightNet<E::Value>, TapeError> {
        Ok(BoundWeightNet {
            n_states: self.n_states,
            hidden: self.hidden.bind(eng)?,
            output: self.output.bind(eng)?,
        })
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.hidden
            .params_mut()
            .chain(self.output.params_mut())
            .collect()
    }

    /// Plain scalar evaluation of one transition weight.
    pub fn eval(
        &self,
        x: usize,
        x_next: usize,
        y_t: [f64; 2],
        y_next: [f64; 2],
    ) -> Result<f64, TapeError> {
        let mut eval = Eval::new();
        let bound = self.bind(&mut eval)?;
        bound.eval(&mut eval, x, x_next, &y_t, &y_next)
    }
}

#[derive(Debug, Clone)]
pub struct BoundWeightNet<V> {
    n_states: usize,
    hidden: BoundLayer<V>,
    output: BoundLayer<V>,
}

impl<V: Copy> BoundWeightNet<V> {
    /// w(x, x_next, y_t, y_next) > 0. The one-hot state inputs select
    /// weight columns directly rather than multiplying by 0/1 literals.
    pub fn eval<E: Engine<Value = V>>(
        &self,
        eng: &mut E,
        x: usize,
        x_next: usize,
        y_t: &[V; 2],
        y_next: &[V; 2],
    ) -> Result<V, TapeError> {
        let n = self.n_states;
        debug_assert!(x < n && x_next < n);
        let mut hidden_out = Vec::with_capacity(self.hidden.weights.len());
        for (row, &b) in self.hidden.weights.iter().zip(&self.hidden.bias) {
            let mut acc = eng.add(b, row[x])?;
            acc = eng.add(acc, row[n + x_next])?;
            for (k, &feat) in y_t.iter().chain(y_next.iter()).enumerate() {
                let term = eng.mul(row[2 * n + k], feat)?;
                acc = eng.add(acc, term)?;
            }
            hidden_out.push(eng.tanh(acc)?);
        }
        let mut acc = self.output.bias[0];
        for (&w, &h) in self.output.weights[0].iter().zip(&hidden_out) {
            let term = eng.mul(w, h)?;
            acc = eng.add(acc, term)?;
        }
        let sp = eng.softplus(acc)?;
        let floor = eng.lit(WEIGHT_FLOOR)?;
        eng.add(sp, floor)
    }
}

/// One posterior update from an N×N matrix of positive transition weights
/// (row-major, `weights[x * n + x_next]`), shared by every filter variant.
pub(crate) fn step_with_weights<E: Engine>(
    eng: &mut E,
    posterior: &[E::Value],
    weights: &[E::Value],
    step: usize,
) -> Result<Vec<E::Value>, FilterError> {
    let n = posterior.len();
    debug_assert_eq!(weights.len(), n * n);
    let mut unnorm = Vec::with_capacity(n);
    for x_next in 0..n {
        let mut terms = Vec::with_capacity(n);
        for x in 0..n {
            terms.push(eng.mul(posterior[x], weights[x * n + x_next])?);
        }
        unnorm.push(eng.sum(&terms)?);
    }
    let total = eng.sum(&unnorm)?;
    let total_value = eng.value(total);
    if !(total_value.is_finite() && total_value > 0.0) {
        return Err(FilterError::Degenerate { step });
    }
    unnorm
        .into_iter()
        .map(|g| eng.div(g, total).map_err(Into::into))
        .collect()
}

/// Plain-value posterior update from an explicit weight matrix. Exposed so
/// exact (table-derived) weight functions can drive the very same update
/// path the neural filter uses.
pub fn update_posterior_with_weights(
    posterior: &FilteredPosterior,
    weights: &[f64],
) -> Result<FilteredPosterior, FilterError> {
    let mut eval = Eval::new();
    let next = step_with_weights(&mut eval, posterior.probs(), weights, 0)?;
    FilteredPosterior::new(next)
}

/// One filtered-posterior update through the transition weight net.
pub fn update_posterior(
    posterior: &FilteredPosterior,
    y_t: [f64; 2],
    y_next: [f64; 2],
    net: &TransitionWeightNet,
) -> Result<FilteredPosterior, FilterError> {
    let n = posterior.len();
    let mut eval = Eval::new();
    let bound = net.bind(&mut eval)?;
    let yt = [eval.lit(y_t[0])?, eval.lit(y_t[1])?];
    let yn = [eval.lit(y_next[0])?, eval.lit(y_next[1])?];
    let mut weights = Vec::with_capacity(n * n);
    for x in 0..n {
        for x_next in 0..n {
            weights.push(bound.eval(&mut eval, x, x_next, &yt, &yn)?);
        }
    }
    let next = step_with_weights(&mut eval, posterior.probs(), &weights, 0)?;
    FilteredPosterior::new(next)
}

/// Posterior-weighted mix of the per-state forecasters:
/// Σ_x posterior(x) · expert_x(y_t).
pub fn predict(
    posterior: &FilteredPosterior,
    y_t: [f64; 2],
    experts: &[BaseModel],
) -> Result<f64, FilterError> {
    if experts.len() != posterior.len() {
        return Err(FilterError::ExpertMismatch {
            experts: experts.len(),
            n_states: posterior.len(),
        });
    }
    let mut eval = Eval::new();
    let y = [eval.lit(y_t[0])?, eval.lit(y_t[1])?];
    let mut terms = Vec::with_capacity(experts.len());
    for (expert, &p) in experts.iter().zip(posterior.probs()) {
        let bound = expert.bind(&mut eval)?;
        let f = bound.forward(&mut eval, y[0], y[1])?;
        let p = eval.lit(p)?;
        terms.push(eval.mul(p, f)?);
    }
    eval.sum(&terms).map_err(Into::into)
}

/// Full posterior path and prediction sequence of one filtering run.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    /// One posterior per observation, length T.
    pub posteriors: Vec<FilteredPosterior>,
    /// prediction[t] targets the σ² channel at t+1, length T−1.
    pub predictions: Vec<f64>,
}

/// N-state mixture of base forecasters driven by the weight-net filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmcModel {
    pub n_states: usize,
    pub experts: Vec<BaseModel>,
    pub weight_net: TransitionWeightNet,
    /// Unconstrained; the initial posterior is their normalized exponential.
    pub init_logits: Vec<Param>,
}

impl PmcModel {
    /// Deterministic initialization: experts drawn first from the seed
    /// stream (so the sole expert of a one-state filter equals the plain
    /// base model of the same seed), then the weight net; logits start at
    /// zero (uniform). With two or more states the experts' output levels
    /// are staggered across ±[`EXPERT_LEVEL_SPREAD`].
    pub fn init(n_states: usize, base: BaseKind, seed: u64) -> Result<Self, FilterError> {
        if n_states == 0 {
            return Err(FilterError::NoStates);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut experts: Vec<BaseModel> = (0..n_states)
            .map(|_| BaseModel::init_with(base, &mut rng))
            .collect();
        if n_states > 1 {
            let half = (n_states - 1) as f64 / 2.0;
            for (k, expert) in experts.iter_mut().enumerate() {
                expert.shift_output_level(EXPERT_LEVEL_SPREAD * (k as f64 - half) / half);
            }
        }
        let weight_net = TransitionWeightNet::init(n_states, &mut rng);
        Ok(Self {
            n_states,
            experts,
            weight_net,
            init_logits: vec![Param::new(0.0); n_states],
        })
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if self.n_states == 0 {
            return Err(FilterError::NoStates);
        }
        if self.experts.len() != self.n_states || self.init_logits.len() != self.n_states {
            return Err(FilterError::ExpertMismatch {
                experts: self.experts.len(),
                n_states: self.n_states,
            });
        }
        let kind = self.experts[0].kind();
        if self.experts.iter().any(|e| e.kind() != kind) {
            return Err(FilterError::MixedExperts);
        }
        Ok(())
    }

    pub fn base_kind(&self) -> BaseKind {
        self.experts[0].kind()
    }

    pub fn bind<E: Engine>(&self, eng: &mut E) -> Result<BoundPmc<E::Value>, TapeError> {
        let mut experts = Vec::with_capacity(self.experts.len());
        for expert in &self.experts {
            experts.push(expert.bind(eng)?);
        }
        let net = self.weight_net.bind(eng)?;
        let mut logits = Vec::with_capacity(self.init_logits.len());
        for l in &self.init_logits {
            logits.push(eng.param(l.value)?);
        }
        Ok(BoundPmc {
            n_states: self.n_states,
            experts,
            net,
            logits,
        })
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut params: Vec<&mut Param> = Vec::new();
        for expert in &mut self.experts {
            params.extend(expert.params_mut());
        }
        params.extend(self.weight_net.params_mut());
        params.extend(self.init_logits.iter_mut());
        params
    }

    pub fn initial_posterior(&self) -> Result<FilteredPosterior, FilterError> {
        let mut eval = Eval::new();
        let bound = self.bind(&mut eval)?;
        let probs = bound.initial_posterior(&mut eval)?;
        FilteredPosterior::new(probs)
    }

    /// Runs the filter over a normalized feature sequence.
    pub fn filter(&self, features: &[[f64; 2]]) -> Result<FilterRun, FilterError> {
        self.validate()?;
        let mut eval = Eval::new();
        let bound = self.bind(&mut eval)?;
        let feats = lit_features(&mut eval, features)?;
        let (posteriors, predictions) = bound.filter(&mut eval, &feats)?;
        Ok(FilterRun {
            posteriors: posteriors
                .into_iter()
                .map(FilteredPosterior::new)
                .collect::<Result<_, _>>()?,
            predictions,
        })
    }
}

/// Lifts a feature slice into engine values.
pub(crate) fn lit_features<E: Engine>(
    eng: &mut E,
    features: &[[f64; 2]],
) -> Result<Vec<[E::Value; 2]>, TapeError> {
    features
        .iter()
        .map(|&[a, b]| Ok([eng.lit(a)?, eng.lit(b)?]))
        .collect()
}

#[derive(Debug, Clone)]
pub struct BoundPmc<V> {
    pub n_states: usize,
    pub experts: Vec<BoundBase<V>>,
    pub net: BoundWeightNet<V>,
    pub logits: Vec<V>,
}

impl<V: Copy> BoundPmc<V> {
    /// Normalized exponential of the initial logits.
    pub fn initial_posterior<E: Engine<Value = V>>(
        &self,
        eng: &mut E,
    ) -> Result<Vec<V>, FilterError> {
        let mut exps = Vec::with_capacity(self.logits.len());
        for &l in &self.logits {
            exps.push(eng.exp(l)?);
        }
        let total = eng.sum(&exps)?;
        exps.into_iter()
            .map(|e| eng.div(e, total).map_err(Into::into))
            .collect()
    }

    fn step_weights<E: Engine<Value = V>>(
        &self,
        eng: &mut E,
        y_t: &[V; 2],
        y_next: &[V; 2],
    ) -> Result<Vec<V>, TapeError> {
        let n = self.n_states;
        let mut weights = Vec::with_capacity(n * n);
        for x in 0..n {
            for x_next in 0..n {
                weights.push(self.net.eval(eng, x, x_next, y_t, y_next)?);
            }
        }
        Ok(weights)
    }

    pub fn predict<E: Engine<Value = V>>(
        &self,
        eng: &mut E,
        posterior: &[V],
        y_t: &[V; 2],
    ) -> Result<V, FilterError> {
        let mut terms = Vec::with_capacity(self.experts.len());
        for (expert, &p) in self.experts.iter().zip(posterior) {
            let f = expert.forward(eng, y_t[0], y_t[1])?;
            terms.push(eng.mul(p, f)?);
        }
        eng.sum(&terms).map_err(Into::into)
    }

    /// Posterior path (length T) and predictions (length T−1); the update
    /// to t+1 happens only after y_{t+1} enters, so prediction t never sees
    /// its own target.
    pub fn filter<E: Engine<Value = V>>(
        &self,
        eng: &mut E,
        features: &[[V; 2]],
    ) -> Result<(Vec<Vec<V>>, Vec<V>), FilterError> {
        if features.len() < 2 {
            return Err(FilterError::TooShort {
                got: features.len(),
            });
        }
        let mut posterior = self.initial_posterior(eng)?;
        let mut posteriors = vec![posterior.clone()];
        let mut predictions = Vec::with_capacity(features.len() - 1);
        for t in 0..features.len() - 1 {
            predictions.push(self.predict(eng, &posterior, &features[t])?);
            let weights = self.step_weights(eng, &features[t], &features[t + 1])?;
            posterior = step_with_weights(eng, &posterior, &weights, t)?;
            posteriors.push(posterior.clone());
        }
        Ok((posteriors, predictions))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GarchParams;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::RngExt;

    fn constant_garch(c: f64) -> BaseModel {
        BaseModel::Garch(GarchParams::new(c, 0.0, 0.0))
    }

    fn zeroed_net(n: usize) -> TransitionWeightNet {
        let mut net = TransitionWeightNet::init(n, &mut ChaCha8Rng::seed_from_u64(0));
        for p in net.params_mut() {
            p.value = 0.0;
        }
        net
    }

    #[test]
    fn single_state_posterior_is_exactly_one() {
        let net = TransitionWeightNet::init(1, &mut ChaCha8Rng::seed_from_u64(3));
        let post = FilteredPosterior::new(vec![1.0]).unwrap();
        let next = update_posterior(&post, [0.3, -0.2], [1.1, 0.4], &net).unwrap();
        assert_eq!(next.probs(), &[1.0]);
    }

    #[test]
    fn constant_net_flattens_any_posterior() {
        // All parameters zero: every weight is softplus(0) + floor, the
        // same constant for every (x, x') pair.
        let net = zeroed_net(2);
        let post = FilteredPosterior::new(vec![0.3, 0.7]).unwrap();
        let next = update_posterior(&post, [0.0, 0.0], [1.0, 1.0], &net).unwrap();
        assert_relative_eq!(next.probs()[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(next.probs()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn weight_net_output_is_strictly_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..=4 {
            let net = TransitionWeightNet::init(n, &mut rng);
            for _ in 0..20 {
                let y = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                let z = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                for x in 0..n {
                    for x_next in 0..n {
                        let w = net.eval(x, x_next, y, z).unwrap();
                        assert!(w >= WEIGHT_FLOOR && w.is_finite());
                    }
                }
            }
        }
    }

    #[test]
    fn predict_averages_expert_outputs() {
        let post = FilteredPosterior::new(vec![0.5, 0.5]).unwrap();
        let experts = vec![constant_garch(2.0), constant_garch(4.0)];
        let got = predict(&post, [0.0, 0.0], &experts).unwrap();
        assert_relative_eq!(got, 3.0, epsilon = 1e-15);
    }

    #[test]
    fn predict_single_state_is_expert_itself() {
        let post = FilteredPosterior::new(vec![1.0]).unwrap();
        let expert = BaseModel::Garch(GarchParams::new(-0.0155, 0.1674, 0.7221));
        let got = predict(&post, [1.0, 1.0], std::slice::from_ref(&expert)).unwrap();
        assert_eq!(
            got.to_bits(),
            expert.forecast([1.0, 1.0]).unwrap().to_bits()
        );
    }

    #[test]
    fn predict_mixes_reported_parameter_sets() {
        let post = FilteredPosterior::new(vec![0.2, 0.8]).unwrap();
        let experts = vec![
            BaseModel::Garch(GarchParams::new(0.1730, 0.0161, 0.6508)),
            BaseModel::Garch(GarchParams::new(-0.3346, -0.0432, 0.4853)),
        ];
        let got = predict(&post, [1.0, 1.0], &experts).unwrap();
        assert_relative_eq!(got, 0.25398, epsilon = 1e-12);
    }

    #[test]
    fn predict_rejects_mismatched_experts() {
        let post = FilteredPosterior::new(vec![0.5, 0.5]).unwrap();
        let experts = vec![constant_garch(1.0)];
        assert!(matches!(
            predict(&post, [0.0, 0.0], &experts),
            Err(FilterError::ExpertMismatch { .. })
        ));
    }

    #[test]
    fn scale_invariance_of_the_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = rng.random_range(2..=4usize);
            let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let total: f64 = probs.iter().sum();
            let post = FilteredPosterior::new(probs.iter().map(|p| p / total).collect()).unwrap();
            let weights: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.001..5.0)).collect();
            let baseline = update_posterior_with_weights(&post, &weights).unwrap();
            for c in [1e-6, 3.7, 1e6] {
                let scaled: Vec<f64> = weights.iter().map(|w| w * c).collect();
                let got = update_posterior_with_weights(&post, &scaled).unwrap();
                for (a, b) in got.probs().iter().zip(baseline.probs()) {
                    assert!((a - b).abs() <= 1e-12, "c={c}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn all_zero_weights_raise_degenerate_step() {
        let post = FilteredPosterior::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            update_posterior_with_weights(&post, &[0.0; 4]),
            Err(FilterError::Degenerate { .. })
        ));
    }

    #[test]
    fn posterior_type_rejects_bad_vectors() {
        assert!(FilteredPosterior::new(vec![]).is_err());
        assert!(FilteredPosterior::new(vec![0.5, 0.6]).is_err());
        assert!(FilteredPosterior::new(vec![-0.1, 1.1]).is_err());
        assert!(FilteredPosterior::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn long_chain_posteriors_stay_normalized() {
        let model = PmcModel::init(3, BaseKind::Garch, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let features: Vec<[f64; 2]> = (0..1000)
            .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let run = model.filter(&features).unwrap();
        assert_eq!(run.posteriors.len(), features.len());
        assert_eq!(run.predictions.len(), features.len() - 1);
        for post in &run.posteriors {
            let sum: f64 = post.probs().iter().sum();
            assert!((sum - 1.0).abs() <= POSTERIOR_SUM_TOL);
        }
    }

    #[test]
    fn single_state_filter_reduces_to_lone_expert_bitwise() {
        for kind in BaseKind::ALL {
            let model = PmcModel::init(1, kind, 11).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(29);
            let features: Vec<[f64; 2]> = (0..40)
                .map(|_| [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)])
                .collect();
            let run = model.filter(&features).unwrap();
            for (t, pred) in run.predictions.iter().enumerate() {
                let lone = model.experts[0].forecast(features[t]).unwrap();
                assert_eq!(pred.to_bits(), lone.to_bits(), "kind {:?} t {t}", kind);
            }
            for post in &run.posteriors {
                assert_eq!(post.probs(), &[1.0]);
            }
        }
    }

    #[test]
    fn identical_experts_make_posterior_irrelevant() {
        let mut model = PmcModel::init(3, BaseKind::Fnn(crate::models::FnnArch::Fnn2), 2).unwrap();
        let shared = model.experts[0].clone();
        for e in &mut model.experts {
            *e = shared.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let features: Vec<[f64; 2]> = (0..30)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let run = model.filter(&features).unwrap();
        for (t, pred) in run.predictions.iter().enumerate() {
            let f = shared.forecast(features[t]).unwrap();
            assert_relative_eq!(*pred, f, epsilon = 1e-12);
        }
    }

    #[test]
    fn initial_posterior_is_uniform_at_zero_logits() {
        let model = PmcModel::init(4, BaseKind::Garch, 0).unwrap();
        let post = model.initial_posterior().unwrap();
        for &p in post.probs() {
            assert_relative_eq!(p, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn init_validates_and_is_deterministic() {
        assert!(matches!(
            PmcModel::init(0, BaseKind::Garch, 0),
            Err(FilterError::NoStates)
        ));
        let a = PmcModel::init(2, BaseKind::Garch, 7).unwrap();
        let b = PmcModel::init(2, BaseKind::Garch, 7).unwrap();
        assert_eq!(a, b);
        // The sole expert of a one-state filter matches the standalone
        // base-model initialization.
        let lone = BaseModel::init(BaseKind::Garch, 7);
        let single = PmcModel::init(1, BaseKind::Garch, 7).unwrap();
        assert_eq!(single.experts[0], lone);
    }

    #[test]
    fn multi_state_experts_start_at_staggered_levels() {
        for seed in 0..5 {
            let model = PmcModel::init(2, BaseKind::Garch, seed).unwrap();
            let levels: Vec<f64> = model
                .experts
                .iter()
                .map(|e| match e {
                    BaseModel::Garch(p) => p.omega.value,
                    BaseModel::Fnn(_) => unreachable!(),
                })
                .collect();
            // Random draws live in ±0.1, so the ±spread shift dominates.
            assert!(
                levels[1] - levels[0] > EXPERT_LEVEL_SPREAD,
                "seed {seed}: expert levels {levels:?} not staggered"
            );
        }
        let fnn = PmcModel::init(3, BaseKind::Fnn(crate::models::FnnArch::Fnn2), 1).unwrap();
        let biases: Vec<f64> = fnn
            .experts
            .iter()
            .map(|e| match e {
                BaseModel::Fnn(p) => p.layers.last().unwrap().bias[0].value,
                BaseModel::Garch(_) => unreachable!(),
            })
            .collect();
        assert!(biases[0] < biases[1] && biases[1] < biases[2]);
    }

    #[test]
    fn fresh_weight_nets_favor_state_persistence() {
        for n_states in [2usize, 3] {
            for seed in 0..10 {
                let net = TransitionWeightNet::init(n_states, &mut ChaCha8Rng::seed_from_u64(seed));
                let origin = [0.0, 0.0];
                let mut same_min = f64::INFINITY;
                let mut cross_max = f64::NEG_INFINITY;
                for x in 0..n_states {
                    for x_next in 0..n_states {
                        let w = net.eval(x, x_next, origin, origin).unwrap();
                        if x == x_next {
                            same_min = same_min.min(w);
                        } else {
                            cross_max = cross_max.max(w);
                        }
                    }
                }
                assert!(
                    same_min > cross_max,
                    "N={n_states} seed {seed}: same-state floor {same_min} \
                     below cross-state ceiling {cross_max}"
                );
            }
        }
    }

    #[test]
    fn validate_rejects_mixed_expert_kinds() {
        let mut model = PmcModel::init(2, BaseKind::Garch, 3).unwrap();
        model.experts[1] = BaseModel::init(BaseKind::Fnn(crate::models::FnnArch::Fnn2), 3);
        assert!(matches!(model.validate(), Err(FilterError::MixedExperts)));
    }

    #[test]
    fn model_json_round_trips() {
        let model = PmcModel::init(2, BaseKind::Fnn(crate::models::FnnArch::Fnn23), 13).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: PmcModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
    }

    proptest! {
        #[test]
        fn predictions_are_convex_combinations(
            seed in 0u64..200,
            p0 in 0.0f64..1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let experts = vec![
                BaseModel::init_with(BaseKind::Garch, &mut rng),
                BaseModel::init_with(BaseKind::Garch, &mut rng),
                BaseModel::init_with(BaseKind::Garch, &mut rng),
            ];
            let p1 = (1.0 - p0) * rng.random_range(0.0..1.0);
            let p2 = 1.0 - p0 - p1;
            let post = FilteredPosterior::new(vec![p0, p1, p2]).unwrap();
            let y = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let outputs: Vec<f64> = experts
                .iter()
                .map(|e| e.forecast(y).unwrap())
                .collect();
            let lo = outputs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = outputs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mixed = predict(&post, y, &experts).unwrap();
            prop_assert!(mixed >= lo - 1e-12 && mixed <= hi + 1e-12);
        }

        #[test]
        fn update_preserves_normalization(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..=4usize);
            let net = TransitionWeightNet::init(n, &mut rng);
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut post =
                FilteredPosterior::new(raw.iter().map(|p| p / total).collect()).unwrap();
            for _ in 0..20 {
                let y = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                let z = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                post = update_posterior(&post, y, z, &net).unwrap();
                let sum: f64 = post.probs().iter().sum();
                prop_assert!((sum - 1.0).abs() <= POSTERIOR_SUM_TOL);
            }
        }
    }
}
