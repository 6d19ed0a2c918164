//! Training, evaluation, and multi-seed experiment orchestration.
//!
//! Every model trains the same way: full-sequence one-step-ahead MSE on
//! the normalized σ² channel, Adam updates once per epoch, early stopping
//! on a held-out segment whose filter starts fresh at the segment boundary,
//! and the best-validation parameters returned. Test scoring runs the
//! filter over the full series so the test segment is entered warm.

use crate::autodiff::{Engine, Eval, Recorder, Tape, TapeError};
use crate::data::{
    features_from_prices, normalize, FeatureSeries, PipelineError, PriceSeries, SplitBoundaries,
    SplitSpec,
};
use crate::hmc::{BoundHmc, HeadMode, HmcModel};
use crate::models::{BaseKind, BaseModel, BoundBase, FnnParams, GarchParams};
use crate::optim::{adam_step, AdamConfig, OptimError, Param};
use crate::pmc::{lit_features, BoundPmc, FilterError, FilterRun, PmcModel};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("epoch {epoch}: {source}")]
    Epoch { epoch: usize, source: FilterError },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("length mismatch: {truth} truths vs {predictions} predictions")]
    LengthMismatch { truth: usize, predictions: usize },
    #[error("empty sequence")]
    Empty,
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl From<TapeError> for TrainError {
    fn from(e: TapeError) -> Self {
        TrainError::Filter(FilterError::Tape(e))
    }
}

/// Any trainable forecaster in this crate, under one serialization tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForecastModel {
    Garch(GarchParams),
    Fnn(FnnParams),
    Pmc(PmcModel),
    Hmc(HmcModel),
}

impl From<BaseModel> for ForecastModel {
    fn from(base: BaseModel) -> Self {
        match base {
            BaseModel::Garch(p) => ForecastModel::Garch(p),
            BaseModel::Fnn(p) => ForecastModel::Fnn(p),
        }
    }
}

impl ForecastModel {
    pub fn validate(&self) -> Result<(), FilterError> {
        match self {
            ForecastModel::Garch(_) | ForecastModel::Fnn(_) => Ok(()),
            ForecastModel::Pmc(m) => m.validate(),
            ForecastModel::Hmc(m) => m.validate(),
        }
    }

    /// Short machine name: "garch", "fnn2", "fnn3", "fnn23", "pmc", "hmc".
    pub fn kind_name(&self) -> &'static str {
        match self {
            ForecastModel::Garch(_) => "garch",
            ForecastModel::Fnn(p) => p.arch.kind().name(),
            ForecastModel::Pmc(_) => "pmc",
            ForecastModel::Hmc(_) => "hmc",
        }
    }

    pub fn label(&self) -> String {
        match self {
            ForecastModel::Garch(_) => BaseKind::Garch.label().to_string(),
            ForecastModel::Fnn(p) => p.arch.kind().label().to_string(),
            ForecastModel::Pmc(m) => {
                format!("PMC({})-{}", m.n_states, m.base_kind().label())
            }
            ForecastModel::Hmc(m) => match m.head_mode {
                HeadMode::Affine => format!("HMC({})", m.n_states),
                HeadMode::ConstantsOnly => format!("HMC({})-const", m.n_states),
            },
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            ForecastModel::Garch(_) | ForecastModel::Fnn(_) => 1,
            ForecastModel::Pmc(m) => m.n_states,
            ForecastModel::Hmc(m) => m.n_states,
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            ForecastModel::Garch(p) => p.params_mut(),
            ForecastModel::Fnn(p) => p.params_mut(),
            ForecastModel::Pmc(m) => m.params_mut(),
            ForecastModel::Hmc(m) => m.params_mut(),
        }
    }

    pub fn bind<E: Engine>(&self, eng: &mut E) -> Result<BoundForecast<E::Value>, TapeError> {
        Ok(match self {
            ForecastModel::Garch(p) => BoundForecast::Base(BoundBase::Garch(p.bind(eng)?)),
            ForecastModel::Fnn(p) => BoundForecast::Base(BoundBase::Fnn(p.bind(eng)?)),
            ForecastModel::Pmc(m) => BoundForecast::Pmc(m.bind(eng)?),
            ForecastModel::Hmc(m) => BoundForecast::Hmc(m.bind(eng)?),
        })
    }

    /// One-step-ahead predictions over a normalized feature sequence,
    /// length T−1; prediction t targets the σ² channel at t+1.
    pub fn predictions(&self, features: &[[f64; 2]]) -> Result<Vec<f64>, FilterError> {
        let mut eval = Eval::new();
        let bound = self.bind(&mut eval)?;
        let feats = lit_features(&mut eval, features)?;
        bound.predictions(&mut eval, &feats)
    }

    /// Posterior path and predictions, for models that carry a filter.
    pub fn filter_run(&self, features: &[[f64; 2]]) -> Result<Option<FilterRun>, FilterError> {
        match self {
            ForecastModel::Garch(_) | ForecastModel::Fnn(_) => Ok(None),
            ForecastModel::Pmc(m) => m.filter(features).map(Some),
            ForecastModel::Hmc(m) => m.filter(features).map(Some),
        }
    }
}

/// Engine-bound view of a [`ForecastModel`].
pub enum BoundForecast<V> {
    Base(BoundBase<V>),
    Pmc(BoundPmc<V>),
    Hmc(BoundHmc<V>),
}

impl<V: Copy> BoundForecast<V> {
    pub fn predictions<E: Engine<Value = V>>(
        &self,
        eng: &mut E,
        features: &[[V; 2]],
    ) -> Result<Vec<V>, FilterError> {
        if features.len() < 2 {
            return Err(FilterError::TooShort {
                got: features.len(),
            });
        }
        match self {
            BoundForecast::Base(b) => features[..features.len() - 1]
                .iter()
                .map(|y| b.forward(eng, y[0], y[1]).map_err(Into::into))
                .collect(),
            BoundForecast::Pmc(m) => m.filter(eng, features).map(|(_, preds)| preds),
            BoundForecast::Hmc(m) => m.filter(eng, features).map(|(_, preds)| preds),
        }
    }
}

/// Mean squared error between aligned sequences.
pub fn mse(truth: &[f64], predictions: &[f64]) -> Result<f64, TrainError> {
    if truth.len() != predictions.len() {
        return Err(TrainError::LengthMismatch {
            truth: truth.len(),
            predictions: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(TrainError::Empty);
    }
    let sum: f64 = truth
        .iter()
        .zip(predictions)
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    Ok(sum / truth.len() as f64)
}

/// One-step targets of a feature window: the normalized σ² channel shifted
/// by one, length T−1.
pub fn one_step_targets(features: &[[f64; 2]]) -> Vec<f64> {
    features[1..].iter().map(|y| y[0]).collect()
}

/// Builds the training objective on the given engine: mean squared
/// one-step error on the σ² channel over the whole sequence.
fn sequence_loss<E: Engine>(
    eng: &mut E,
    model: &ForecastModel,
    features: &[[f64; 2]],
) -> Result<E::Value, FilterError> {
    let bound = model.bind(eng)?;
    let feats = lit_features(eng, features)?;
    let predictions = bound.predictions(eng, &feats)?;
    let mut squares = Vec::with_capacity(predictions.len());
    for (t, &pred) in predictions.iter().enumerate() {
        let target = eng.lit(features[t + 1][0])?;
        let diff = eng.sub(pred, target)?;
        squares.push(eng.square(diff)?);
    }
    let total = eng.sum(&squares)?;
    let count = eng.lit(predictions.len() as f64)?;
    eng.div(total, count).map_err(Into::into)
}

/// The training objective evaluated on plain floats.
pub fn training_loss(model: &ForecastModel, features: &[[f64; 2]]) -> Result<f64, TrainError> {
    let mut eval = Eval::new();
    let loss = sequence_loss(&mut eval, model, features)?;
    Ok(eval.value(loss))
}

/// Records the objective on the tape, runs the backward pass, and scatters
/// the gradients into the model's parameters. Returns the loss value.
pub fn loss_and_gradients(
    model: &mut ForecastModel,
    features: &[[f64; 2]],
    tape: &mut Tape,
) -> Result<f64, TrainError> {
    tape.clear();
    let (loss, param_ids) = {
        let mut rec = Recorder::new(tape);
        let loss = sequence_loss(&mut rec, model, features)?;
        (loss, rec.params)
    };
    let grads = tape.backward(loss)?;
    let mut params = model.params_mut();
    if params.len() != param_ids.len() {
        return Err(TrainError::Config(format!(
            "bound {} parameters but the model owns {}",
            param_ids.len(),
            params.len()
        )));
    }
    for (p, id) in params.iter_mut().zip(&param_ids) {
        p.grad = grads.get(*id);
    }
    Ok(tape.value(loss))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stop after this many epochs without a new validation best.
    pub patience: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            patience: 50,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.patience == 0 || self.patience > self.epochs {
            return Err(TrainError::Config(format!(
                "patience must be in 1..={}, got {}",
                self.epochs, self.patience
            )));
        }
        self.adam.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    /// Parameters from the epoch with the lowest validation MSE.
    pub model: ForecastModel,
    /// Objective value per epoch, before that epoch's update.
    pub train_losses: Vec<f64>,
    /// Validation MSE per epoch, after that epoch's update.
    pub val_losses: Vec<f64>,
    /// Index into the loss curves of the selected epoch.
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Full-sequence gradient training with early stopping.
///
/// The validation filter restarts at the segment boundary each epoch, so
/// the score never depends on training-segment state.
pub fn train(
    model: &ForecastModel,
    train_features: &[[f64; 2]],
    val_features: &[[f64; 2]],
    config: &TrainConfig,
) -> Result<TrainResult, TrainError> {
    config.validate()?;
    model.validate()?;
    if train_features.len() < 2 || val_features.len() < 2 {
        return Err(TrainError::Config(format!(
            "need at least 2 samples per segment, got {} train / {} val",
            train_features.len(),
            val_features.len()
        )));
    }
    let mut current = model.clone();
    let mut tape = Tape::new();
    let val_targets = one_step_targets(val_features);
    let mut train_losses = Vec::with_capacity(config.epochs);
    let mut val_losses = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, ForecastModel, usize)> = None;
    let mut since_best = 0;
    for epoch in 0..config.epochs {
        let loss = loss_and_gradients(&mut current, train_features, &mut tape)
            .map_err(|e| wrap_epoch(epoch, e))?;
        train_losses.push(loss);
        adam_step(current.params_mut(), &config.adam)?;
        let val_preds = current
            .predictions(val_features)
            .map_err(|e| wrap_epoch(epoch, TrainError::Filter(e)))?;
        let val = mse(&val_targets, &val_preds)?;
        val_losses.push(val);
        if best.as_ref().is_none_or(|(b, _, _)| val < *b) {
            best = Some((val, current.clone(), epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let (_, model, best_epoch) = best.expect("at least one epoch ran");
    Ok(TrainResult {
        model,
        epochs_run: train_losses.len(),
        train_losses,
        val_losses,
        best_epoch,
    })
}

fn wrap_epoch(epoch: usize, e: TrainError) -> TrainError {
    match e {
        TrainError::Filter(source) => TrainError::Epoch { epoch, source },
        other => other,
    }
}

/// A normalized feature series with its chronological split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: FeatureSeries,
    pub boundaries: SplitBoundaries,
    pub split_spec: SplitSpec,
    pub window: usize,
}

impl Dataset {
    /// Runs the whole pipeline: features from prices, split boundaries,
    /// normalization statistics fitted on the training segment only.
    pub fn from_prices(
        prices: &PriceSeries,
        window: usize,
        split_spec: SplitSpec,
    ) -> Result<Self, PipelineError> {
        let raw = features_from_prices(prices, window)?;
        Self::from_features(raw, window, split_spec)
    }

    /// Same, starting from raw (unnormalized) features.
    pub fn from_features(
        raw: FeatureSeries,
        window: usize,
        split_spec: SplitSpec,
    ) -> Result<Self, PipelineError> {
        let boundaries = split_spec.boundaries(raw.len())?;
        let features = normalize(&raw, 0..boundaries.train_end)?;
        Ok(Self {
            features,
            boundaries,
            split_spec,
            window,
        })
    }

    /// A dataset whose features already carry normalization statistics.
    pub fn from_normalized(
        features: FeatureSeries,
        window: usize,
        split_spec: SplitSpec,
    ) -> Result<Self, PipelineError> {
        features.normalized_pairs()?;
        let boundaries = split_spec.boundaries(features.len())?;
        Ok(Self {
            features,
            boundaries,
            split_spec,
            window,
        })
    }

    pub fn all_pairs(&self) -> Result<Vec<[f64; 2]>, PipelineError> {
        self.features.normalized_pairs()
    }

    pub fn train_pairs(&self) -> Result<Vec<[f64; 2]>, PipelineError> {
        Ok(self.all_pairs()?[..self.boundaries.train_end].to_vec())
    }

    pub fn val_pairs(&self) -> Result<Vec<[f64; 2]>, PipelineError> {
        Ok(self.all_pairs()?[self.boundaries.train_end..self.boundaries.val_end].to_vec())
    }
}

/// Test-segment score in both spaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestScore {
    pub mse_normalized: f64,
    pub mse_original: f64,
    pub n_targets: usize,
}

/// Scores the test segment. The filter runs over the full series, so it
/// enters the test segment warm; only targets inside the segment count.
/// Original-scale errors compare denormalized predictions against the raw
/// σ² samples.
pub fn evaluate_test(model: &ForecastModel, dataset: &Dataset) -> Result<TestScore, TrainError> {
    let pairs = dataset.all_pairs()?;
    let predictions = model.predictions(&pairs)?;
    let norm = *dataset
        .features
        .norm()
        .ok_or(PipelineError::NotNormalized)?;
    let (val_end, total) = (dataset.boundaries.val_end, dataset.boundaries.total);
    let mut se_norm = 0.0;
    let mut se_orig = 0.0;
    for t in val_end..total {
        let pred = predictions[t - 1];
        let diff = pred - pairs[t][0];
        se_norm += diff * diff;
        let diff_orig = norm.invert_sigma2(pred) - dataset.features.samples()[t].sigma2;
        se_orig += diff_orig * diff_orig;
    }
    let n_targets = total - val_end;
    Ok(TestScore {
        mse_normalized: se_norm / n_targets as f64,
        mse_original: se_orig / n_targets as f64,
        n_targets,
    })
}

/// What to initialize for one experiment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    Base(BaseKind),
    Pmc {
        n_states: usize,
        base: BaseKind,
    },
    Hmc {
        n_states: usize,
        head_mode: HeadMode,
    },
}

impl ModelSpec {
    pub fn init(&self, seed: u64) -> Result<ForecastModel, FilterError> {
        Ok(match *self {
            ModelSpec::Base(kind) => BaseModel::init(kind, seed).into(),
            ModelSpec::Pmc { n_states, base } => {
                ForecastModel::Pmc(PmcModel::init(n_states, base, seed)?)
            }
            ModelSpec::Hmc {
                n_states,
                head_mode,
            } => ForecastModel::Hmc(HmcModel::init(n_states, head_mode, seed)?),
        })
    }

    pub fn label(&self) -> String {
        match *self {
            ModelSpec::Base(kind) => kind.label().to_string(),
            ModelSpec::Pmc { n_states, base } => {
                format!("PMC({n_states})-{}", base.label())
            }
            ModelSpec::Hmc {
                n_states,
                head_mode,
            } => match head_mode {
                HeadMode::Affine => format!("HMC({n_states})"),
                HeadMode::ConstantsOnly => format!("HMC({n_states})-const"),
            },
        }
    }
}

/// Mean and, for two or more values, the 95% normal-approximation
/// confidence halfwidth 1.96·s/√n with the sample (n−1) standard deviation.
pub fn mean_and_ci95(values: &[f64]) -> Result<(f64, Option<f64>), TrainError> {
    if values.is_empty() {
        return Err(TrainError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Ok((mean, None));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, Some(1.96 * var.sqrt() / n.sqrt())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub ci95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub mse_normalized: f64,
    pub mse_original: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Aggregated result of one experiment arm across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub model: String,
    pub dataset: String,
    pub epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub n_seeds: usize,
    pub seeds: Vec<u64>,
    pub mse_normalized: SummaryStat,
    pub mse_original: SummaryStat,
    pub per_seed: Vec<SeedSummary>,
}

/// One trained seed with its artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub model: ForecastModel,
    pub score: TestScore,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub runs: Vec<SeedRun>,
}

/// Worker-count resolution: an explicit request wins, then the
/// PMC_THREADS environment variable, then the machine's parallelism.
pub fn thread_budget(requested: Option<usize>) -> usize {
    if let Some(n) = requested {
        return n.max(1);
    }
    if let Ok(raw) = std::env::var("PMC_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Trains one arm across seeds (in parallel up to `threads` workers) and
/// aggregates test scores. Results are deterministic in the seed list and
/// independent of the worker count.
pub fn run_experiment(
    dataset: &Dataset,
    spec: ModelSpec,
    config: &TrainConfig,
    seeds: &[u64],
    threads: usize,
    dataset_label: &str,
) -> Result<ExperimentOutcome, TrainError> {
    if seeds.is_empty() {
        return Err(TrainError::Config("need at least one seed".into()));
    }
    config.validate()?;
    let train_features = dataset.train_pairs()?;
    let val_features = dataset.val_pairs()?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<SeedRun, TrainError>>>> =
        Mutex::new((0..seeds.len()).map(|_| None).collect());
    let workers = threads.clamp(1, seeds.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= seeds.len() {
                    break;
                }
                let run = run_one_seed(
                    spec,
                    seeds[i],
                    &train_features,
                    &val_features,
                    dataset,
                    config,
                );
                slots.lock().expect("no panics hold this lock")[i] = Some(run);
            });
        }
    });
    let mut runs = Vec::with_capacity(seeds.len());
    for slot in slots.into_inner().expect("scope joined all workers") {
        runs.push(slot.expect("every index was claimed")?);
    }
    let norm_values: Vec<f64> = runs.iter().map(|r| r.score.mse_normalized).collect();
    let orig_values: Vec<f64> = runs.iter().map(|r| r.score.mse_original).collect();
    let (norm_mean, norm_ci) = mean_and_ci95(&norm_values)?;
    let (orig_mean, orig_ci) = mean_and_ci95(&orig_values)?;
    let report = ExperimentReport {
        model: spec.label(),
        dataset: dataset_label.to_string(),
        epochs: config.epochs,
        patience: config.patience,
        learning_rate: config.adam.learning_rate,
        n_seeds: seeds.len(),
        seeds: seeds.to_vec(),
        mse_normalized: SummaryStat {
            mean: norm_mean,
            ci95: norm_ci,
        },
        mse_original: SummaryStat {
            mean: orig_mean,
            ci95: orig_ci,
        },
        per_seed: runs
            .iter()
            .map(|r| SeedSummary {
                seed: r.seed,
                mse_normalized: r.score.mse_normalized,
                mse_original: r.score.mse_original,
                best_epoch: r.best_epoch,
                epochs_run: r.epochs_run,
            })
            .collect(),
    };
    Ok(ExperimentOutcome { report, runs })
}

fn run_one_seed(
    spec: ModelSpec,
    seed: u64,
    train_features: &[[f64; 2]],
    val_features: &[[f64; 2]],
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<SeedRun, TrainError> {
    let model = spec.init(seed)?;
    let result = train(&model, train_features, val_features, config)?;
    let score = evaluate_test(&result.model, dataset)?;
    Ok(SeedRun {
        seed,
        model: result.model,
        score,
        best_epoch: result.best_epoch,
        epochs_run: result.epochs_run,
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                extend(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Fraction of positions where the predicted state path matches the true
/// one, maximized over relabelings of the predicted states.
pub fn state_agreement(
    predicted: &[usize],
    truth: &[usize],
    n_states: usize,
) -> Result<f64, TrainError> {
    if predicted.len() != truth.len() {
        return Err(TrainError::LengthMismatch {
            truth: truth.len(),
            predictions: predicted.len(),
        });
    }
    if predicted.is_empty() {
        return Err(TrainError::Empty);
    }
    if predicted.iter().chain(truth).any(|&s| s >= n_states) {
        return Err(TrainError::Config(format!(
            "state label out of range for {n_states} states"
        )));
    }
    let best = permutations(n_states)
        .into_iter()
        .map(|perm| {
            predicted
                .iter()
                .zip(truth)
                .filter(|(&p, &t)| perm[p] == t)
                .count()
        })
        .max()
        .unwrap_or(0);
    Ok(best as f64 / predicted.len() as f64)
}

fn format_stat(stat: &SummaryStat, scientific: bool) -> String {
    let one = |v: f64| {
        if scientific {
            format!("{v:.3e}")
        } else {
            format!("{v:.4}")
        }
    };
    match stat.ci95 {
        Some(ci) => format!("{} ± {}", one(stat.mean), one(ci)),
        None => one(stat.mean),
    }
}

/// Renders one dataset's experiment arms as a Markdown table, lowest mean
/// per column in bold.
pub fn markdown_table(reports: &[ExperimentReport]) -> String {
    let mut out = String::new();
    if reports.is_empty() {
        return out;
    }
    out.push_str(&format!("#### {}\n\n", reports[0].dataset));
    out.push_str("| Model | MSE (normalized) | MSE (original scale) |\n");
    out.push_str("|---|---|---|\n");
    let best_norm = reports
        .iter()
        .map(|r| r.mse_normalized.mean)
        .fold(f64::INFINITY, f64::min);
    let best_orig = reports
        .iter()
        .map(|r| r.mse_original.mean)
        .fold(f64::INFINITY, f64::min);
    for r in reports {
        let norm = format_stat(&r.mse_normalized, false);
        let orig = format_stat(&r.mse_original, true);
        let norm = if r.mse_normalized.mean == best_norm {
            format!("**{norm}**")
        } else {
            norm
        };
        let orig = if r.mse_original.mean == best_orig {
            format!("**{orig}**")
        } else {
            orig
        };
        out.push_str(&format!("| {} | {} | {} |\n", r.model, norm, orig));
    }
    out
}
