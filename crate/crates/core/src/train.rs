//! Loss functions, the Adam optimizer, plateau learning-rate scheduling,
//! early stopping, and the generic training loop.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sigmoid, Mat};
use crate::nn::{backward, forward, Gradients, Mode, ModelParams, ParamSet};
use crate::seed::derive_seed;
use crate::types::WindowSet;

/// Modulation parameters of the shrinkage loss.
///
/// `a` and `c` act on errors scaled by `error_scale`; the pipeline sets the
/// scale to the training glucose range so the canonical (a=10, c=0.2)
/// values keep their meaning while predictions stay in raw mg/dL.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageParams {
    pub a: f64,
    pub c: f64,
    pub error_scale: f64,
}

impl Default for ShrinkageParams {
    fn default() -> Self {
        ShrinkageParams {
            a: 10.0,
            c: 0.2,
            error_scale: 1.0,
        }
    }
}

impl ShrinkageParams {
    pub fn with_error_scale(scale: f64) -> Self {
        ShrinkageParams {
            error_scale: scale,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.a <= 0.0 || self.c < 0.0 || self.error_scale <= 0.0 {
            return Err(Error::InvalidInput(
                "shrinkage params require a > 0, c >= 0, error_scale > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Squared error modulated by a sigmoid that suppresses small errors:
/// per element `L = e² / (1 + exp(a·(c − e)))` with `e = |ĝ − g|` divided
/// by `error_scale`. Returns the mean loss and the exact gradient w.r.t.
/// the predictions (zero at e = 0).
pub fn shrinkage_loss(pred: &Mat, target: &Mat, p: &ShrinkageParams) -> Result<(f64, Mat)> {
    p.validate()?;
    if pred.rows() != target.rows() || pred.cols() != target.cols() {
        return Err(Error::Shape(format!(
            "shrinkage_loss: pred [{} x {}] vs target [{} x {}]",
            pred.rows(),
            pred.cols(),
            target.rows(),
            target.cols()
        )));
    }
    let n = pred.len() as f64;
    let mut grad = Mat::zeros(pred.rows(), pred.cols());
    let mut total = 0.0;
    for (i, (&y, &t)) in pred.as_slice().iter().zip(target.as_slice()).enumerate() {
        let raw = y - t;
        let e = raw.abs() / p.error_scale;
        let s = sigmoid(p.a * (e - p.c));
        total += e * e * s;
        let g = if raw == 0.0 {
            0.0
        } else {
            let dl_de = 2.0 * e * s + p.a * e * e * s * (1.0 - s);
            dl_de / p.error_scale * raw.signum() / n
        };
        grad.as_mut_slice()[i] = g;
    }
    Ok((total / n, grad))
}

/// Mean cross-entropy over rows of logits, with max-subtraction
/// stabilization. Gradient is `(softmax − onehot) / B`.
pub fn cross_entropy_loss(logits: &Mat, labels: &[usize]) -> Result<(f64, Mat)> {
    if logits.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "cross_entropy_loss: {} logit rows vs {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let classes = logits.cols();
    let batch = logits.rows() as f64;
    let mut grad = Mat::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for r in 0..logits.rows() {
        let label = labels[r];
        if label >= classes {
            return Err(Error::InvalidInput(format!(
                "cross_entropy_loss: label {label} out of range [0, {classes})"
            )));
        }
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp_sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + exp_sum.ln();
        total += log_z - row[label];
        for c in 0..classes {
            let softmax = (row[c] - max).exp() / exp_sum;
            let onehot = if c == label { 1.0 } else { 0.0 };
            grad.set(r, c, (softmax - onehot) / batch);
        }
    }
    Ok((total / batch, grad))
}

/// Hyperparameters of the training loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub init_lr: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// The full-scale configuration: batch 1024, 3200 epochs, early-stop
    /// patience 200, plateau patience 15 with factor 0.5.
    pub fn full(seed: u64) -> Self {
        TrainConfig {
            batch_size: 1024,
            init_lr: 2e-4,
            max_epochs: 3200,
            early_stop_patience: 200,
            plateau_patience: 15,
            plateau_factor: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed,
        }
    }

    /// Desk-scale preset: batch 64, 200 epochs, patience 20.
    pub fn desk(seed: u64) -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 200,
            early_stop_patience: 20,
            ..Self::full(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0
            || self.max_epochs == 0
            || self.early_stop_patience == 0
            || self.plateau_patience == 0
        {
            return Err(Error::InvalidInput(
                "train config counts must be positive".into(),
            ));
        }
        if self.init_lr <= 0.0 || self.adam_eps <= 0.0 {
            return Err(Error::InvalidInput("learning rate and eps must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.plateau_factor)
            || !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
        {
            return Err(Error::InvalidInput(
                "plateau factor and betas must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// First and second moment accumulators plus the step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: ParamSet,
    v: ParamSet,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    for (name, g) in grads.tensors() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient tensor {name}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.adam_beta1.powi(t);
    let bc2 = 1.0 - cfg.adam_beta2.powi(t);
    let mut p_tensors = params.tensors_mut();
    let mut m_tensors = state.m.tensors_mut();
    let mut v_tensors = state.v.tensors_mut();
    for (((_, p), (_, m)), ((_, v), (_, g))) in p_tensors
        .iter_mut()
        .zip(m_tensors.iter_mut())
        .zip(v_tensors.iter_mut().zip(grads.tensors().iter()))
    {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * gi;
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

/// Loss driving [`fit`].
#[derive(Clone, Debug, PartialEq)]
pub enum LossKind {
    Shrinkage(ShrinkageParams),
    CrossEntropy,
}

/// One row of the training history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

/// Output of [`fit`]: the parameters achieving the best validation loss,
/// plus the full per-epoch history.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub model: ModelParams,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Map subject ids (sorted) to classification class indices.
pub fn subject_classes(sets: &[&WindowSet]) -> BTreeMap<String, usize> {
    let mut ids: Vec<&str> = sets
        .iter()
        .flat_map(|s| s.iter().map(|w| w.subject_id.as_str()))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), i))
        .collect()
}

/// Validation-loss improvements must beat the best by at least this much.
const IMPROVEMENT_EPS: f64 = 1e-8;
/// Samples per forward/backward slice inside a mini-batch, to bound cache
/// memory at the full batch size of 1024.
const TRAIN_CHUNK: usize = 128;

struct TargetBuilder<'a> {
    loss: &'a LossKind,
    classes: BTreeMap<String, usize>,
}

impl<'a> TargetBuilder<'a> {
    fn new(loss: &'a LossKind, train: &WindowSet, val: &WindowSet) -> Self {
        let classes = match loss {
            LossKind::CrossEntropy => subject_classes(&[train, val]),
            LossKind::Shrinkage(_) => BTreeMap::new(),
        };
        TargetBuilder { loss, classes }
    }

    fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Loss and prediction gradient for one already-forwarded chunk.
    fn loss_and_grad(&self, set: &WindowSet, idxs: &[usize], pred: &Mat) -> Result<(f64, Mat)> {
        match self.loss {
            LossKind::Shrinkage(p) => {
                let h = pred.cols();
                let mut target = Mat::zeros(idxs.len(), h);
                for (r, &i) in idxs.iter().enumerate() {
                    let w = &set.windows[i];
                    if w.target_deltas.len() != h {
                        return Err(Error::Shape(format!(
                            "window has {} targets, model outputs {h}",
                            w.target_deltas.len()
                        )));
                    }
                    target.row_mut(r).copy_from_slice(&w.target_deltas);
                }
                shrinkage_loss(pred, &target, p)
            }
            LossKind::CrossEntropy => {
                let labels: Vec<usize> = idxs
                    .iter()
                    .map(|&i| self.classes[&set.windows[i].subject_id])
                    .collect();
                cross_entropy_loss(pred, &labels)
            }
        }
    }
}

fn chunk_inputs<'a>(set: &'a WindowSet, idxs: &[usize]) -> Vec<&'a Mat> {
    idxs.iter().map(|&i| &set.windows[i].obs).collect()
}

/// Mean loss of the model over a window set, eval mode, fixed chunk order.
fn eval_loss(
    model: &ModelParams,
    set: &WindowSet,
    targets: &TargetBuilder,
) -> Result<f64> {
    let idxs: Vec<usize> = (0..set.len()).collect();
    let mut total = 0.0;
    for chunk in idxs.chunks(TRAIN_CHUNK) {
        let inputs = chunk_inputs(set, chunk);
        let (pred, _) = forward(model, &inputs, Mode::Eval, 0)?;
        let (loss, _) = targets.loss_and_grad(set, chunk, &pred)?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / set.len() as f64)
}

/// Train with seeded shuffling, plateau LR halving and early stopping.
///
/// After each epoch the validation loss is compared against the best seen;
/// `plateau_patience` stale epochs halve the learning rate and
/// `early_stop_patience` stale epochs stop training. The returned model is
/// the snapshot from the best epoch.
pub fn fit(
    model: &ModelParams,
    train: &WindowSet,
    val: &WindowSet,
    cfg: &TrainConfig,
    loss: &LossKind,
) -> Result<FitResult> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidInput("fit: empty train or val set".into()));
    }
    let targets = TargetBuilder::new(loss, train, val);
    if matches!(loss, LossKind::CrossEntropy) && targets.n_classes() != model.config.output_dim {
        return Err(Error::InvalidInput(format!(
            "fit: {} subject classes but model outputs {}",
            targets.n_classes(),
            model.config.output_dim
        )));
    }

    let mut current = model.clone();
    let mut adam = AdamState::new(&current.params);
    let mut lr = cfg.init_lr;
    let mut history: Vec<EpochStats> = Vec::new();
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut stale_epochs = 0usize;
    let mut plateau_epochs = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &format!("shuffle/{epoch}")));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads: Option<Gradients> = None;
            let mut batch_loss = 0.0;
            for (ci, chunk) in batch.chunks(TRAIN_CHUNK).enumerate() {
                let inputs = chunk_inputs(train, chunk);
                let drop_seed = derive_seed(cfg.seed, &format!("drop/{epoch}/{bi}/{ci}"));
                let (pred, cache) = forward(&current, &inputs, Mode::Train, drop_seed)?;
                let (chunk_loss, mut grad) = targets.loss_and_grad(train, chunk, &pred)?;
                let weight = chunk.len() as f64 / batch.len() as f64;
                batch_loss += chunk_loss * weight;
                for g in grad.as_mut_slice() {
                    *g *= weight;
                }
                let g = backward(&current, &cache, &grad)?;
                match grads.as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => grads = Some(g),
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { history });
            }
            loss_sum += batch_loss * batch.len() as f64;
            adam_step(&mut current.params, &grads.unwrap(), &mut adam, lr, cfg)?;
        }
        let train_loss = loss_sum / train.len() as f64;

        let val_loss = eval_loss(&current, val, &targets)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { history });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            lr,
        });

        let improved = match &best {
            None => true,
            Some((_, best_val, _)) => val_loss < best_val - IMPROVEMENT_EPS,
        };
        if improved {
            best = Some((epoch, val_loss, current.clone()));
            stale_epochs = 0;
            plateau_epochs = 0;
        } else {
            stale_epochs += 1;
            plateau_epochs += 1;
            if plateau_epochs >= cfg.plateau_patience {
                lr *= cfg.plateau_factor;
                plateau_epochs = 0;
            }
            if stale_epochs >= cfg.early_stop_patience {
                break;
            }
        }
    }

    let (best_epoch, best_val_loss, best_model) = best.expect("at least one epoch ran");
    Ok(FitResult {
        model: best_model,
        history,
        best_epoch,
        best_val_loss,
    })
}

/// Training history as CSV (`epoch,train_loss,val_loss,lr`).
pub fn history_to_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,lr\n");
    for row in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.epoch, row.train_loss, row.val_loss, row.lr
        ));
    }
    out
}
