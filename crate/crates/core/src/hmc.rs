//! Hidden-chain baseline filter.
//!
//! Shares the posterior-update normalization and the mixture prediction
//! rule with the pairwise filter, but its transition network scores
//! (x_t, x_{t+1}) from the incoming observation alone: y_t is structurally
//! absent from the update into t+1. Predictions come from per-state affine
//! heads (optionally constants only) instead of full base forecasters.

use crate::autodiff::{Engine, Eval, TapeError};
use crate::models::{bias_toward_state_persistence, BoundLayer, DenseLayer};
use crate::optim::Param;
use crate::pmc::{
    lit_features, step_with_weights, FilterError, FilterRun, FilteredPosterior, EXPERT_LEVEL_SPREAD,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Positive-output network scoring one transition (x_t, x_{t+1}) from the
/// next feature pair only. Input layout is (one-hot x_t, one-hot x_{t+1},
/// y_next); one tanh hidden layer of the same width 2N+2, then an affine
/// map to one scalar through softplus plus the shared weight floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaWeightNet {
    pub n_states: usize,
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

impl DeltaWeightNet {
    pub fn init(n_states: usize, rng: &mut ChaCha8Rng) -> Self {
        let width = 2 * n_states + 2;
        let mut hidden = DenseLayer::init(width, width, rng);
        let mut output = DenseLayer::init(1, width, rng);
        bias_toward_state_persistence(&mut hidden, &mut output, n_states);
        Self {
            n_states,
            hidden,
            output,
        }
    }

    pub fn bind<E: Engine>(&self, eng: &mut E) -> Result<BoundDeltaNet<E::Value>, TapeError> {
        Ok(BoundDeltaNet {
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

    pub fn eval(&self, x: usize, x_next: usize, y_next: [f64; 2]) -> Result<f64, TapeError> {
        let mut eval = Eval::new();
        let bound = self.bind(&mut eval)?;
        let y = [eval.lit(y_next[0])?, eval.lit(y_next[1])?];
        bound.eval(&mut eval, x, x_next, &y)
    }
}

#[derive(Debug, Clone)]
pub struct BoundDeltaNet<V> {
    n_states: usize,
    hidden: BoundLayer<V>,
    output: BoundLayer<V>,
}

impl<V: Copy> BoundDeltaNet<V> {
    pub fn eval<E: Engine<Value = V>>(
        &self,
        eng: &mut E,
        x: usize,
        x_next: usize,
        y_next: &[V; 2],
    ) -> Result<V, TapeError> {
        let n = self.n_states;
        debug_assert!(x < n && x_next < n);
        let mut hidden_out = Vec::with_capacity(self.hidden.weights.len());
        for (row, &b) in self.hidden.weights.iter().zip(&self.hidden.bias) {
            let mut acc = eng.add(b, row[x])?;
            acc = eng.add(acc, row[n + x_next])?;
            for (k, &feat) in y_next.iter().enumerate() {
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
        let floor = eng.lit(crate::pmc::WEIGHT_FLOOR)?;
        eng.add(sp, floor)
    }
}

/// Per-state prediction heads: full affine maps of the feature pair, or
/// trainable constants with the linear part pinned at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    #[default]
    Affine,
    ConstantsOnly,
}

/// N-state filter with per-state affine heads and an update network that
/// conditions on the new observation only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmcModel {
    pub n_states: usize,
    pub delta_net: DeltaWeightNet,
    /// One 1×2 affine map per state.
    pub heads: Vec<DenseLayer>,
    pub head_mode: HeadMode,
    pub init_logits: Vec<Param>,
}

impl HmcModel {
    /// Deterministic initialization: heads drawn first from the seed
    /// stream, then the update net; logits start at zero (uniform). In
    /// constants-only mode the linear head coefficients are pinned at zero.
    pub fn init(n_states: usize, head_mode: HeadMode, seed: u64) -> Result<Self, FilterError> {
        if n_states == 0 {
            return Err(FilterError::NoStates);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut heads: Vec<DenseLayer> = (0..n_states)
            .map(|_| DenseLayer::init(1, 2, &mut rng))
            .collect();
        if head_mode == HeadMode::ConstantsOnly {
            for head in &mut heads {
                for w in &mut head.weights[0] {
                    w.value = 0.0;
                }
            }
        }
        if n_states > 1 {
            let half = (n_states - 1) as f64 / 2.0;
            for (k, head) in heads.iter_mut().enumerate() {
                head.bias[0].value += EXPERT_LEVEL_SPREAD * (k as f64 - half) / half;
            }
        }
        let delta_net = DeltaWeightNet::init(n_states, &mut rng);
        Ok(Self {
            n_states,
            delta_net,
            heads,
            head_mode,
            init_logits: vec![Param::new(0.0); n_states],
        })
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if self.n_states == 0 {
            return Err(FilterError::NoStates);
        }
        if self.heads.len() != self.n_states || self.init_logits.len() != self.n_states {
            return Err(FilterError::ExpertMismatch {
                experts: self.heads.len(),
                n_states: self.n_states,
            });
        }
        Ok(())
    }

    pub fn bind<E: Engine>(&self, eng: &mut E) -> Result<BoundHmc<E::Value>, TapeError> {
        let mut heads = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            heads.push(match self.head_mode {
                HeadMode::Affine => {
                    let bound = head.bind(eng)?;
                    BoundHead::Affine {
                        weights: [bound.weights[0][0], bound.weights[0][1]],
                        bias: bound.bias[0],
                    }
                }
                HeadMode::ConstantsOnly => BoundHead::Constant {
                    bias: eng.param(head.bias[0].value)?,
                },
            });
        }
        let net = self.delta_net.bind(eng)?;
        let mut logits = Vec::with_capacity(self.init_logits.len());
        for l in &self.init_logits {
            logits.push(eng.param(l.value)?);
        }
        Ok(BoundHmc {
            n_states: self.n_states,
            heads,
            net,
            logits,
        })
    }

    /// Trainable parameters, in bind order. Constants-only heads expose
    /// their biases only.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut params: Vec<&mut Param> = Vec::new();
        for head in &mut self.heads {
            match self.head_mode {
                HeadMode::Affine => params.extend(head.params_mut()),
                HeadMode::ConstantsOnly => params.extend(head.bias.iter_mut()),
            }
        }
        params.extend(self.delta_net.params_mut());
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

#[derive(Debug, Clone)]
pub enum BoundHead<V> {
    Affine { weights: [V; 2], bias: V },
    Constant { bias: V },
}

impl<V: Copy> BoundHead<V> {
    pub fn forward<E: Engine<Value = V>>(&self, eng: &mut E, y: &[V; 2]) -> Result<V, TapeError> {
        match self {
            BoundHead::Affine { weights, bias } => {
                let a = eng.mul(weights[0], y[0])?;
                let b = eng.mul(weights[1], y[1])?;
                let acc = eng.add(*bias, a)?;
                eng.add(acc, b)
            }
            BoundHead::Constant { bias } => Ok(*bias),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundHmc<V> {
    pub n_states: usize,
    pub heads: Vec<BoundHead<V>>,
    pub net: BoundDeltaNet<V>,
    pub logits: Vec<V>,
}

impl<V: Copy> BoundHmc<V> {
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

    pub fn predict<E: Engine<Value = V>>(
        &self,
        eng: &mut E,
        posterior: &[V],
        y_t: &[V; 2],
    ) -> Result<V, FilterError> {
        let mut terms = Vec::with_capacity(self.heads.len());
        for (head, &p) in self.heads.iter().zip(posterior) {
            let f = head.forward(eng, y_t)?;
            terms.push(eng.mul(p, f)?);
        }
        eng.sum(&terms).map_err(Into::into)
    }

    /// Posterior path (length T) and predictions (length T−1). The update
    /// into t+1 consumes y_{t+1} only.
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
        let n = self.n_states;
        let mut posterior = self.initial_posterior(eng)?;
        let mut posteriors = vec![posterior.clone()];
        let mut predictions = Vec::with_capacity(features.len() - 1);
        for t in 0..features.len() - 1 {
            predictions.push(self.predict(eng, &posterior, &features[t])?);
            let mut weights = Vec::with_capacity(n * n);
            for x in 0..n {
                for x_next in 0..n {
                    weights.push(self.net.eval(eng, x, x_next, &features[t + 1])?);
                }
            }
            posterior = step_with_weights(eng, &posterior, &weights, t)?;
            posteriors.push(posterior.clone());
        }
        Ok((posteriors, predictions))
    }
}

/// One filtered-posterior update through the delta network.
pub fn update_posterior(
    posterior: &FilteredPosterior,
    y_next: [f64; 2],
    net: &DeltaWeightNet,
) -> Result<FilteredPosterior, FilterError> {
    let n = posterior.len();
    let mut eval = Eval::new();
    let bound = net.bind(&mut eval)?;
    let y = [eval.lit(y_next[0])?, eval.lit(y_next[1])?];
    let mut weights = Vec::with_capacity(n * n);
    for x in 0..n {
        for x_next in 0..n {
            weights.push(bound.eval(&mut eval, x, x_next, &y)?);
        }
    }
    let next = step_with_weights(&mut eval, posterior.probs(), &weights, 0)?;
    FilteredPosterior::new(next)
}

/// Posterior-weighted mix of the per-state heads.
pub fn predict(
    posterior: &FilteredPosterior,
    y_t: [f64; 2],
    model: &HmcModel,
) -> Result<f64, FilterError> {
    if model.heads.len() != posterior.len() {
        return Err(FilterError::ExpertMismatch {
            experts: model.heads.len(),
            n_states: posterior.len(),
        });
    }
    let mut eval = Eval::new();
    let bound = model.bind(&mut eval)?;
    let mut post = Vec::with_capacity(posterior.len());
    for &p in posterior.probs() {
        post.push(eval.lit(p)?);
    }
    let y = [eval.lit(y_t[0])?, eval.lit(y_t[1])?];
    bound.predict(&mut eval, &post, &y).map(|v| eval.value(v))
}
