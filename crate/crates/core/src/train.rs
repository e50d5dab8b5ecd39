//! Mini-batch training with binary cross-entropy, Adam or SGD with momentum,
//! early stopping and learning-rate reduction on plateau.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::{augment_batch, zca_fit, AugmentConfig, ZcaTransform};
use crate::dataio::{make_batches, BatchPlan, DatasetSplit};
use crate::error::{Error, Result};
use crate::eval::{predict_records_with, DECISION_THRESHOLD};
use crate::model::{Model, ModelSpec, BN_MOMENTUM};
use crate::tensor::{Scalar, Tensor};

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before logs.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

/// Monitors validation loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopConfig {
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        Self {
            patience: 10,
            min_delta: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            factor: 0.5,
            patience: 5,
            min_delta: 1e-4,
            min_lr: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub batch_size: usize,
    /// Zero is allowed and freezes every trainable parameter.
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub early_stop: Option<EarlyStopConfig>,
    pub plateau: Option<PlateauConfig>,
    pub seed: u64,
    pub augment: Option<AugmentConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_max: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            early_stop: Some(EarlyStopConfig::default()),
            plateau: Some(PlateauConfig::default()),
            seed: 0,
            augment: None,
        }
    }
}

impl TrainConfig {
    /// Settings for datasets of a few hundred images: batch size 4 with the
    /// default optimizer, learning rate and callbacks.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            batch_size: 4,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs_max < 1 {
            return bad("epochs_max must be at least 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if let Some(es) = &self.early_stop {
            if es.patience < 1 || es.min_delta.is_nan() || es.min_delta < 0.0 {
                return bad("early_stop needs patience >= 1 and min_delta >= 0".into());
            }
        }
        if let Some(p) = &self.plateau {
            if !(p.factor > 0.0 && p.factor < 1.0) {
                return bad(format!("plateau factor must be in (0, 1), got {}", p.factor));
            }
            if p.patience < 1 || [p.min_delta, p.min_lr].iter().any(|v| v.is_nan() || *v < 0.0) {
                return bad("plateau needs patience >= 1, min_delta >= 0, min_lr >= 0".into());
            }
        }
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }
}

/// Mean binary cross-entropy over the batch.
pub fn bce_loss<T: Scalar>(probs: &[T], labels: &[T]) -> Result<T> {
    check_bce_inputs(probs, labels)?;
    let lo = T::from_f64_lossy(BCE_CLAMP);
    let hi = T::one() - lo;
    let sum = probs.iter().zip(labels).fold(T::zero(), |acc, (&p, &y)| {
        let p = p.max(lo).min(hi);
        acc - (y * p.ln() + (T::one() - y) * (T::one() - p).ln())
    });
    Ok(sum / T::from_usize_lossy(probs.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BceGrads<T> {
    /// Derivative of the mean loss with respect to each (clamped) probability.
    pub grad_probs: Vec<T>,
    /// Fused sigmoid-plus-loss derivative `(p - y) / B`.
    pub grad_logits: Vec<T>,
}

pub fn bce_backward<T: Scalar>(probs: &[T], labels: &[T]) -> Result<BceGrads<T>> {
    check_bce_inputs(probs, labels)?;
    let b = T::from_usize_lossy(probs.len());
    let lo = T::from_f64_lossy(BCE_CLAMP);
    let hi = T::one() - lo;
    let grad_probs = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.max(lo).min(hi);
            (-y / p + (T::one() - y) / (T::one() - p)) / b
        })
        .collect();
    let grad_logits = probs.iter().zip(labels).map(|(&p, &y)| (p - y) / b).collect();
    Ok(BceGrads {
        grad_probs,
        grad_logits,
    })
}

fn check_bce_inputs<T: Scalar>(probs: &[T], labels: &[T]) -> Result<()> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::invalid(format!(
            "need equal, non-empty probs and labels, got {} and {}",
            probs.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|&y| y != T::zero() && y != T::one()) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    Ok(())
}

/// Training-mode loss and gradients for one batch, in
/// [`crate::model::ParamStore::trainable`] order.
pub fn loss_and_gradients<T: Scalar>(
    model: &Model<T>,
    images: &Tensor<T>,
    labels: &[T],
) -> Result<(T, Vec<Vec<T>>)> {
    let fwd = model.forward_train(images)?;
    let loss = bce_loss(&fwd.probs, labels)?;
    let grads = model.backward_from_logits(&fwd, &bce_backward(&fwd.probs, labels)?.grad_logits)?;
    Ok((loss, grads))
}

pub const SGD_MOMENTUM: f32 = 0.9;
pub const ADAM_BETA1: f32 = 0.9;
pub const ADAM_BETA2: f32 = 0.999;
pub const ADAM_EPSILON: f32 = 1e-8;

/// Per-buffer optimizer memory, allocated on first use.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step: u64,
    /// Velocity for SGD, first moment for Adam.
    pub first: Vec<Vec<f32>>,
    /// Second moment, Adam only.
    pub second: Vec<Vec<f32>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }
}

/// Applies one update in place. Rejects non-finite gradients before touching
/// any parameter.
pub fn optimizer_step(
    params: &mut [&mut [f32]],
    grads: &[Vec<f32>],
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len()
        || params.iter().zip(grads).any(|(p, g)| p.len() != g.len())
    {
        return Err(Error::shape("gradient buffers do not match parameter buffers"));
    }
    if let Some(i) = grads.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numeric(format!("non-finite gradient in parameter buffer {i}")));
    }
    if state.first.is_empty() {
        state.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        if state.kind == OptimizerKind::Adam {
            state.second = state.first.clone();
        }
    }
    state.step += 1;
    let lr = lr as f32;
    match state.kind {
        OptimizerKind::SgdMomentum => {
            for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.first) {
                for ((w, &g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                    *v = SGD_MOMENTUM * *v - lr * g;
                    *w += *v;
                }
            }
        }
        OptimizerKind::Adam => {
            let t = state.step as i32;
            let c1 = 1.0 - ADAM_BETA1.powi(t);
            let c2 = 1.0 - ADAM_BETA2.powi(t);
            for (((p, g), m), v) in params
                .iter_mut()
                .zip(grads)
                .zip(&mut state.first)
                .zip(&mut state.second)
            {
                for (((w, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
                }
            }
        }
    }
    Ok(())
}

/// Early-stopping memory. `best_val_loss` is the lowest loss seen so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStopState {
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
    pub epochs_seen: usize,
    pub stopped: bool,
}

impl Default for EarlyStopState {
    fn default() -> Self {
        Self {
            best_val_loss: f64::INFINITY,
            best_epoch: 0,
            epochs_since_improvement: 0,
            epochs_seen: 0,
            stopped: false,
        }
    }
}

/// Feeds one epoch's validation loss. An epoch counts as an improvement when
/// `val_loss < best - min_delta`; training stops once `patience` epochs in a
/// row fail to improve.
///
/// Returns `true` when `val_loss` is a new lowest loss, which is when the
/// caller should snapshot the weights that get restored at the end.
pub fn early_stopping_update(state: &mut EarlyStopState, val_loss: f64, cfg: &EarlyStopConfig) -> bool {
    state.epochs_seen += 1;
    if val_loss < state.best_val_loss - cfg.min_delta {
        state.epochs_since_improvement = 0;
    } else {
        state.epochs_since_improvement += 1;
    }
    let new_best = val_loss < state.best_val_loss;
    if new_best {
        state.best_val_loss = val_loss;
        state.best_epoch = state.epochs_seen;
    }
    if state.epochs_since_improvement >= cfg.patience {
        state.stopped = true;
    }
    new_best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauState {
    pub best_val_loss: f64,
    pub epochs_since_improvement: usize,
    pub current_lr: f64,
}

impl PlateauState {
    pub fn new(lr: f64) -> Self {
        Self {
            best_val_loss: f64::INFINITY,
            epochs_since_improvement: 0,
            current_lr: lr,
        }
    }
}

/// Feeds one epoch's validation loss and returns the learning rate for the
/// next epoch. After `patience` epochs without improvement the rate becomes
/// `max(lr * factor, min_lr)` and the counter restarts. A rate already at or
/// below `min_lr` is left alone.
pub fn reduce_lr_on_plateau(state: &mut PlateauState, val_loss: f64, cfg: &PlateauConfig) -> f64 {
    if val_loss < state.best_val_loss - cfg.min_delta {
        state.epochs_since_improvement = 0;
    } else {
        state.epochs_since_improvement += 1;
    }
    state.best_val_loss = state.best_val_loss.min(val_loss);
    if state.epochs_since_improvement >= cfg.patience && state.current_lr > cfg.min_lr {
        state.current_lr = (state.current_lr * cfg.factor).max(cfg.min_lr);
        state.epochs_since_improvement = 0;
    }
    state.current_lr
}

/// Both callbacks side by side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallbackState {
    pub early_stop: EarlyStopState,
    pub plateau: PlateauState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Rate used during this epoch.
    pub lr: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub model: Model,
    pub logs: Vec<EpochLog>,
    /// 1-based epoch whose weights were restored.
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Fitted on the training split when augmentation enables whitening.
    pub zca: Option<ZcaTransform>,
}

/// Initializes a model from `cfg.seed` and trains it.
pub fn fit(spec: &ModelSpec, data: &DatasetSplit, cfg: &TrainConfig) -> Result<FitOutcome> {
    fit_from(Model::init(spec.clone(), cfg.seed)?, data, cfg)
}

/// Trains an already initialized model.
pub fn fit_from(mut model: Model, data: &DatasetSplit, cfg: &TrainConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    if data.train.is_empty() || data.validation.is_empty() {
        return Err(Error::invalid("training and validation splits must be non-empty"));
    }
    let zca = match &cfg.augment {
        Some(a) if a.zca => {
            let imgs: Vec<&Tensor> = data.train.iter().map(|r| &r.pixels).collect();
            Some(zca_fit(&imgs, a.zca_epsilon)?)
        }
        _ => None,
    };
    let n_train = data.train.len();
    let mut opt = OptimizerState::new(cfg.optimizer);
    let mut early = EarlyStopState::default();
    let mut plateau = PlateauState::new(cfg.learning_rate);
    let mut lr = cfg.learning_rate;
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut logs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs_max {
        let started = Instant::now();
        let last_good = model.clone();
        let plan = BatchPlan::shuffled(cfg.batch_size, epoch_seed(cfg.seed, epoch));
        let mut loss_sum = 0.0f64;
        let mut position = 0usize;
        for batch in make_batches(&data.train, &plan)? {
            let b = batch.labels.len();
            let images = match &cfg.augment {
                Some(a) => {
                    let first = ((epoch - 1) * n_train + position) as u64;
                    augment_batch(a, &batch.images, zca.as_ref(), first)?
                }
                None => batch.images,
            };
            position += b;
            let fwd = model.forward_train(&images)?;
            let loss = bce_loss(&fwd.probs, &batch.labels)?;
            if !loss.is_finite() {
                return Err(diverged(epoch, "training loss is not finite".into(), last_good));
            }
            let grads = model.backward_from_logits(
                &fwd,
                &bce_backward(&fwd.probs, &batch.labels)?.grad_logits,
            )?;
            // Initial moving statistics are placeholders; replacing them with
            // the first batch avoids a bias that decays only as 0.99^steps.
            let momentum = if model.moving_stats_untouched() { 0.0 } else { BN_MOMENTUM };
            model.update_moving_stats(&fwd, momentum);
            if let Err(e) = optimizer_step(&mut model.params.trainable_mut(), &grads, &mut opt, lr) {
                return Err(match e {
                    Error::Numeric(reason) => diverged(epoch, reason, last_good),
                    other => other,
                });
            }
            loss_sum += loss as f64 * b as f64;
        }
        let train_loss = loss_sum / n_train as f64;

        let probs = predict_records_with(&model, &data.validation, zca.as_ref())?;
        let labels: Vec<f32> = data.validation.iter().map(|r| r.label.as_f32()).collect();
        let val_loss = bce_loss(&probs, &labels)? as f64;
        if !val_loss.is_finite() {
            return Err(diverged(epoch, "validation loss is not finite".into(), last_good));
        }
        let correct = probs
            .iter()
            .zip(&labels)
            .filter(|(&p, &y)| (p >= DECISION_THRESHOLD) == (y == 1.0))
            .count();
        logs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_accuracy: correct as f64 / labels.len() as f64,
            lr,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        log::info!("epoch {epoch}: train_loss {train_loss:.5} val_loss {val_loss:.5} lr {lr:e}");

        let es_cfg = cfg.early_stop.unwrap_or(EarlyStopConfig {
            patience: usize::MAX,
            min_delta: 0.0,
        });
        if early_stopping_update(&mut early, val_loss, &es_cfg) {
            best = model.clone();
            best_epoch = epoch;
        }
        if let Some(p) = &cfg.plateau {
            lr = reduce_lr_on_plateau(&mut plateau, val_loss, p);
        }
        if early.stopped {
            stopped_early = true;
            break;
        }
    }
    Ok(FitOutcome {
        model: best,
        logs,
        best_epoch,
        stopped_early,
        zca,
    })
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64)
}

fn diverged(epoch: usize, reason: String, last_good: Model) -> Error {
    Error::Diverged {
        epoch,
        reason,
        last_good: Box::new(last_good),
    }
}

pub fn write_training_log(path: &Path, logs: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for l in logs {
        w.serialize(l)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_training_log(path: &Path) -> Result<Vec<EpochLog>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| Ok(row?)).collect()
}
