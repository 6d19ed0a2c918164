//! Pluggable one-step volatility forecasters f: (σ², u²) → σ²-hat.
//!
//! Two families: GARCH(1,1) as an affine recursion on its inputs, and small
//! tanh feedforward networks. Both evaluate through the [`Engine`]
//! abstraction so the same arithmetic serves plain inference and taped
//! training. No positivity or stationarity constraints are imposed on GARCH
//! parameters; the models run on normalized features where such constraints
//! do not apply.

use crate::autodiff::{Engine, Eval, TapeError};
use crate::optim::Param;
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// GARCH(1,1) one-step forecast parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: Param,
    pub alpha: Param,
    pub beta: Param,
}

/// Parameter handles bound onto an engine, ready for forward evaluation.
#[derive(Debug, Clone, Copy)]
pub struct BoundGarch<V> {
    omega: V,
    alpha: V,
    beta: V,
}

impl GarchParams {
    pub fn new(omega: f64, alpha: f64, beta: f64) -> Self {
        Self {
            omega: Param::new(omega),
            alpha: Param::new(alpha),
            beta: Param::new(beta),
        }
    }

    /// ω + α·u² + β·σ².
    pub fn forecast(&self, sigma2: f64, u2: f64) -> f64 {
        let mut eval = Eval::new();
        let bound = self.bind(&mut eval).expect("finite parameters");
        bound
            .forward(&mut eval, sigma2, u2)
            .expect("affine form is total on finite inputs")
    }

    pub fn bind<E: Engine>(&self, eng: &mut E) -> Result<BoundGarch<E::Value>, TapeError> {
        Ok(BoundGarch {
            omega: eng.param(self.omega.value)?,
            alpha: eng.param(self.alpha.value)?,
            beta: eng.param(self.beta.value)?,
        })
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.omega, &mut self.alpha, &mut self.beta]
    }
}

impl<V: Copy> BoundGarch<V> {
    pub fn forward<E: Engine<Value = V>>(
        &self,
        eng: &mut E,
        sigma2: V,
        u2: V,
    ) -> Result<V, TapeError> {
        let au = eng.mul(self.alpha, u2)?;
        let bs = eng.mul(self.beta, sigma2)?;
        let partial = eng.add(self.omega, au)?;
        eng.add(partial, bs)
    }
}

/// Feedforward architecture tags: hidden dimensions between the 2-wide
/// input and the 1-wide output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FnnArch {
    Fnn2,
    Fnn3,
    Fnn23,
}

impl FnnArch {
    pub fn hidden_dims(self) -> &'static [usize] {
        match self {
            FnnArch::Fnn2 => &[2],
            FnnArch::Fnn3 => &[3],
            FnnArch::Fnn23 => &[3, 3],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FnnArch::Fnn2 => "fnn2",
            FnnArch::Fnn3 => "fnn3",
            FnnArch::Fnn23 => "fnn23",
        }
    }

    pub fn kind(self) -> BaseKind {
        BaseKind::Fnn(self)
    }
}

/// One dense layer; `weights[out][in]` plus one bias per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Vec<Vec<Param>>,
    pub bias: Vec<Param>,
}

impl DenseLayer {
    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn init(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..out_dim)
            .map(|_| {
                (0..in_dim)
                    .map(|_| Param::new(rng.random_range(-bound..bound)))
                    .collect()
            })
            .collect();
        let bias = vec![Param::new(0.0); out_dim];
        Self { weights, bias }
    }

    pub fn out_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn bind<E: Engine>(&self, eng: &mut E) -> Result<BoundLayer<E::Value>, TapeError> {
        let mut weights = Vec::with_capacity(self.weights.len());
        for row in &self.weights {
            let mut bound_row = Vec::with_capacity(row.len());
            for w in row {
                bound_row.push(eng.param(w.value)?);
            }
            weights.push(bound_row);
        }
        let mut bias = Vec::with_capacity(self.bias.len());
        for b in &self.bias {
            bias.push(eng.param(b.value)?);
        }
        Ok(BoundLayer { weights, bias })
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.weights
            .iter_mut()
            .flat_map(|row| row.iter_mut())
            .chain(self.bias.iter_mut())
    }
}

const PERSIST_SLOPE: f64 = 2.0;
const PERSIST_MARGIN: f64 = 1.0;
const PERSIST_READOUT: f64 = 2.5;
const PERSIST_OFFSET: f64 = -2.0;

/// Rewires hidden units 0 and 1 and the output head of a freshly drawn
/// transition-weight net so same-state weights start several times larger
/// than cross-state ones. The two units read `±slope · (index(x) −
/// index(x_next))` plus a shared margin; their tanh sum is even in the
/// index difference and peaks when the states match, and a positive
/// readout turns that peak into a diagonal-dominant transition pattern.
/// Feature columns keep their random draws, so the weights stay
/// input-sensitive from the first step.
pub(crate) fn bias_toward_state_persistence(
    hidden: &mut DenseLayer,
    output: &mut DenseLayer,
    n_states: usize,
) {
    for (unit, sign) in [(0usize, 1.0f64), (1, -1.0)] {
        for state in 0..n_states {
            let tilt = sign * PERSIST_SLOPE * state as f64;
            hidden.weights[unit][state].value = tilt;
            hidden.weights[unit][n_states + state].value = -tilt;
        }
        hidden.bias[unit].value = PERSIST_MARGIN;
        output.weights[0][unit].value = PERSIST_READOUT;
    }
    output.bias[0].value = PERSIST_OFFSET;
}

#[derive(Debug, Clone)]
pub struct BoundLayer<V> {
    pub weights: Vec<Vec<V>>,
    pub bias: Vec<V>,
}

impl<V: Copy> BoundLayer<V> {
    /// Affine map of `input`, no activation.
    pub fn affine<E: Engine<Value = V>>(
        &self,
        eng: &mut E,
        input: &[V],
    ) -> Result<Vec<V>, TapeError> {
        let mut out = Vec::with_capacity(self.weights.len());
        for (row, &b) in self.weights.iter().zip(&self.bias) {
            debug_assert_eq!(row.len(), input.len());
            let mut acc = b;
            for (&w, &x) in row.iter().zip(input) {
                let term = eng.mul(w, x)?;
                acc = eng.add(acc, term)?;
            }
            out.push(acc);
        }
        Ok(out)
    }
}

/// A tanh feedforward network from (σ², u²) to a single forecast value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnnParams {
    pub arch: FnnArch,
    pub layers: Vec<DenseLayer>,
}

impl FnnParams {
    pub fn init(arch: FnnArch, rng: &mut ChaCha8Rng) -> Self {
        let mut dims = vec![2];
        dims.extend_from_slice(arch.hidden_dims());
        dims.push(1);
        let layers = dims
            .windows(2)
            .map(|pair| DenseLayer::init(pair[1], pair[0], rng))
            .collect();
        Self { arch, layers }
    }

    pub fn bind<E: Engine>(&self, eng: &mut E) -> Result<BoundFnn<E::Value>, TapeError> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            layers.push(layer.bind(eng)?);
        }
        Ok(BoundFnn { layers })
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn forecast(&self, sigma2: f64, u2: f64) -> Result<f64, TapeError> {
        let mut eval = Eval::new();
        let bound = self.bind(&mut eval)?;
        bound.forward(&mut eval, sigma2, u2)
    }
}

#[derive(Debug, Clone)]
pub struct BoundFnn<V> {
    layers: Vec<BoundLayer<V>>,
}

impl<V: Copy> BoundFnn<V> {
    /// Alternating affine/tanh with an affine-only final layer.
    pub fn forward<E: Engine<Value = V>>(
        &self,
        eng: &mut E,
        sigma2: V,
        u2: V,
    ) -> Result<V, TapeError> {
        let mut activ = vec![sigma2, u2];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = layer.affine(eng, &activ)?;
            if i < last {
                for v in &mut out {
                    *v = eng.tanh(*v)?;
                }
            }
            activ = out;
        }
        debug_assert_eq!(activ.len(), 1);
        Ok(activ[0])
    }
}

/// Which base forecaster to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseKind {
    Garch,
    Fnn(FnnArch),
}

impl BaseKind {
    pub const ALL: [BaseKind; 4] = [
        BaseKind::Garch,
        BaseKind::Fnn(FnnArch::Fnn2),
        BaseKind::Fnn(FnnArch::Fnn3),
        BaseKind::Fnn(FnnArch::Fnn23),
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "garch" => Some(BaseKind::Garch),
            "fnn2" => Some(BaseKind::Fnn(FnnArch::Fnn2)),
            "fnn3" => Some(BaseKind::Fnn(FnnArch::Fnn3)),
            "fnn23" => Some(BaseKind::Fnn(FnnArch::Fnn23)),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BaseKind::Garch => "garch",
            BaseKind::Fnn(arch) => arch.name(),
        }
    }

    /// Display label, e.g. for report tables.
    pub fn label(self) -> &'static str {
        match self {
            BaseKind::Garch => "GARCH(1,1)",
            BaseKind::Fnn(FnnArch::Fnn2) => "FNN(2)",
            BaseKind::Fnn(FnnArch::Fnn3) => "FNN(3)",
            BaseKind::Fnn(FnnArch::Fnn23) => "FNN(2,3)",
        }
    }
}

/// One base forecaster with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseModel {
    Garch(GarchParams),
    Fnn(FnnParams),
}

/// Engine-bound counterpart of [`BaseModel`].
#[derive(Debug, Clone)]
pub enum BoundBase<V> {
    Garch(BoundGarch<V>),
    Fnn(BoundFnn<V>),
}

impl BaseModel {
    /// Draws fresh parameters from `rng`. GARCH: ω, α uniform(−0.1, 0.1),
    /// β uniform(0.3, 0.9). FNN: per [`DenseLayer::init`].
    pub fn init_with(kind: BaseKind, rng: &mut ChaCha8Rng) -> Self {
        match kind {
            BaseKind::Garch => BaseModel::Garch(GarchParams {
                omega: Param::new(rng.random_range(-0.1..0.1)),
                alpha: Param::new(rng.random_range(-0.1..0.1)),
                beta: Param::new(rng.random_range(0.3..0.9)),
            }),
            BaseKind::Fnn(arch) => BaseModel::Fnn(FnnParams::init(arch, rng)),
        }
    }

    /// Deterministic initialization from a seed.
    pub fn init(kind: BaseKind, seed: u64) -> Self {
        Self::init_with(kind, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Shifts the model's output level by `delta`: the GARCH intercept, or
    /// the final-layer bias of an FNN. Used to stagger the experts of a
    /// multi-state filter so they start at distinct output levels.
    pub(crate) fn shift_output_level(&mut self, delta: f64) {
        match self {
            BaseModel::Garch(p) => p.omega.value += delta,
            BaseModel::Fnn(p) => {
                if let Some(last) = p.layers.last_mut() {
                    last.bias[0].value += delta;
                }
            }
        }
    }

    pub fn kind(&self) -> BaseKind {
        match self {
            BaseModel::Garch(_) => BaseKind::Garch,
            BaseModel::Fnn(p) => BaseKind::Fnn(p.arch),
        }
    }

    pub fn bind<E: Engine>(&self, eng: &mut E) -> Result<BoundBase<E::Value>, TapeError> {
        Ok(match self {
            BaseModel::Garch(p) => BoundBase::Garch(p.bind(eng)?),
            BaseModel::Fnn(p) => BoundBase::Fnn(p.bind(eng)?),
        })
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            BaseModel::Garch(p) => p.params_mut(),
            BaseModel::Fnn(p) => p.params_mut(),
        }
    }

    /// Plain one-step forecast on a normalized feature pair.
    pub fn forecast(&self, y: [f64; 2]) -> Result<f64, TapeError> {
        let mut eval = Eval::new();
        let bound = self.bind(&mut eval)?;
        bound.forward(&mut eval, y[0], y[1])
    }
}

impl<V: Copy> BoundBase<V> {
    pub fn forward<E: Engine<Value = V>>(
        &self,
        eng: &mut E,
        sigma2: V,
        u2: V,
    ) -> Result<V, TapeError> {
        match self {
            BoundBase::Garch(g) => g.forward(eng, sigma2, u2),
            BoundBase::Fnn(f) => f.forward(eng, sigma2, u2),
        }
    }
}
