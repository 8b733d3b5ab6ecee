//! The recurrent forecasting network: Bi-GRU, unidirectional GRU, dropout,
//! a ReLU dense layer, temporal average pooling, and a linear head.
//!
//! Forward and backward are exact and deterministic: dropout masks come
//! from per-sample seeded streams, and batch gradients merge in a fixed
//! chunk order regardless of thread count.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::nn::gru::{fill_uniform, gru_backward_seq, gru_forward_seq, GruCellParams, GruStepCache};
use crate::seed::derive_seed;

/// Temporal pooling applied after the dense layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pooling {
    /// Non-overlapping averages of two consecutive steps (window 2, stride 2).
    Window2,
    /// One global average over all steps.
    Global,
}

/// Layer sizes of the network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Features per timestep (1 for CGM-only, 4 multimodal).
    pub input_dim: usize,
    /// Timesteps per window.
    pub seq_len: usize,
    /// Hidden units per Bi-GRU direction.
    pub bigru_hidden: usize,
    /// Hidden units of the unidirectional GRU.
    pub gru_hidden: usize,
    /// Width of the dense layer.
    pub fc_dim: usize,
    /// Regression: prediction steps. Classification: number of subjects.
    pub output_dim: usize,
    pub dropout: f64,
    pub pooling: Pooling,
}

impl ModelConfig {
    /// Full-size layer widths: Bi-GRU 128 per direction, GRU 256, dense 64,
    /// dropout 0.4.
    pub fn full(input_dim: usize, seq_len: usize, output_dim: usize) -> Self {
        ModelConfig {
            input_dim,
            seq_len,
            bigru_hidden: 128,
            gru_hidden: 256,
            fc_dim: 64,
            output_dim,
            dropout: 0.4,
            pooling: Pooling::Window2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.seq_len == 0
            || self.bigru_hidden == 0
            || self.gru_hidden == 0
            || self.fc_dim == 0
            || self.output_dim == 0
        {
            return Err(Error::InvalidInput("model dimensions must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidInput(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.pooling == Pooling::Window2 && self.seq_len < 2 {
            return Err(Error::InvalidInput(
                "window-2 pooling needs seq_len >= 2".into(),
            ));
        }
        Ok(())
    }

    /// Steps remaining after pooling.
    pub fn pooled_len(&self) -> usize {
        match self.pooling {
            Pooling::Window2 => self.seq_len / 2,
            Pooling::Global => 1,
        }
    }

    /// Width of the flattened head input.
    pub fn head_in(&self) -> usize {
        self.pooled_len() * self.fc_dim
    }
}

/// The flat tree of trainable tensors. Gradients share this shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub fwd: GruCellParams,
    pub bwd: GruCellParams,
    pub gru: GruCellParams,
    pub fc1_w: Mat,
    pub fc1_b: Vec<f64>,
    pub head_w: Mat,
    pub head_b: Vec<f64>,
}

/// Gradients are shape-congruent with the parameters.
pub type Gradients = ParamSet;

impl ParamSet {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        ParamSet {
            fwd: GruCellParams::zeros(cfg.bigru_hidden, cfg.input_dim),
            bwd: GruCellParams::zeros(cfg.bigru_hidden, cfg.input_dim),
            gru: GruCellParams::zeros(cfg.gru_hidden, 2 * cfg.bigru_hidden),
            fc1_w: Mat::zeros(cfg.fc_dim, cfg.gru_hidden),
            fc1_b: vec![0.0; cfg.fc_dim],
            head_w: Mat::zeros(cfg.output_dim, cfg.head_in()),
            head_b: vec![0.0; cfg.output_dim],
        }
    }

    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(cfg);
        p.fwd = GruCellParams::init(cfg.bigru_hidden, cfg.input_dim, &mut rng);
        p.bwd = GruCellParams::init(cfg.bigru_hidden, cfg.input_dim, &mut rng);
        p.gru = GruCellParams::init(cfg.gru_hidden, 2 * cfg.bigru_hidden, &mut rng);
        fill_uniform(p.fc1_w.as_mut_slice(), cfg.gru_hidden, &mut rng);
        fill_uniform(p.head_w.as_mut_slice(), cfg.head_in(), &mut rng);
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Named flat views over every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (prefix, cell) in [("fwd", &self.fwd), ("bwd", &self.bwd), ("gru", &self.gru)] {
            for (name, t) in cell.tensors() {
                out.push((format!("{prefix}.{name}"), t));
            }
        }
        out.push(("fc1_w".into(), self.fc1_w.as_slice()));
        out.push(("fc1_b".into(), &self.fc1_b));
        out.push(("head_w".into(), self.head_w.as_slice()));
        out.push(("head_b".into(), &self.head_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (prefix, cell) in [
            ("fwd", &mut self.fwd),
            ("bwd", &mut self.bwd),
            ("gru", &mut self.gru),
        ] {
            for (name, t) in cell.tensors_mut() {
                out.push((format!("{prefix}.{name}"), t));
            }
        }
        out.push(("fc1_w".into(), self.fc1_w.as_mut_slice()));
        out.push(("fc1_b".into(), &mut self.fc1_b));
        out.push(("head_w".into(), self.head_w.as_mut_slice()));
        out.push(("head_b".into(), &mut self.head_b));
        out
    }

    pub fn add_assign(&mut self, other: &ParamSet) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Configuration plus trainable weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl ModelParams {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(ModelParams {
            config,
            params: ParamSet::init(&config, derive_seed(seed, "init")),
        })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(ModelParams {
            config,
            params: ParamSet::zeros(&config),
        })
    }
}

/// Whether dropout is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted-dropout mask: kept units scale by 1/(1−p) so eval needs no
/// rescaling; dropped units are 0.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if rate == 0.0 {
        return vec![1.0; len];
    }
    let keep_scale = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep_scale
            }
        })
        .collect()
}

struct SampleCache {
    xs: Vec<Vec<f64>>,
    fwd_steps: Vec<GruStepCache>,
    bwd_steps: Vec<GruStepCache>,
    bi: Vec<Vec<f64>>,
    uni_steps: Vec<GruStepCache>,
    /// uni output after dropout 1 (the dense layer input).
    d1: Vec<Vec<f64>>,
    mask1: Option<Vec<Vec<f64>>>,
    fc_pre: Vec<Vec<f64>>,
    mask2: Option<Vec<Vec<f64>>>,
    flat: Vec<f64>,
}

/// Opaque intermediates from [`forward`], consumed by [`backward`].
pub struct ForwardCache {
    config: ModelConfig,
    samples: Vec<SampleCache>,
}

fn ensure_finite(values: &[f64], layer: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(layer.to_string()));
    }
    Ok(())
}

/// Both directional passes plus the per-step concatenation
/// `bi[t] = [fwd state at t ; bwd state at t]`, where the backward cell has
/// consumed steps L-1..=t and therefore sits at reversed index L-1-t.
pub(crate) fn bigru_states(
    p: &ParamSet,
    hb: usize,
    xs_ref: &[&[f64]],
    xs_rev: &[&[f64]],
) -> (Vec<GruStepCache>, Vec<GruStepCache>, Vec<Vec<f64>>) {
    let len = xs_ref.len();
    let fwd_steps = gru_forward_seq(&p.fwd, xs_ref);
    let bwd_steps = gru_forward_seq(&p.bwd, xs_rev);
    let mut bi = vec![vec![0.0; 2 * hb]; len];
    for t in 0..len {
        bi[t][..hb].copy_from_slice(&fwd_steps[t].h);
        bi[t][hb..].copy_from_slice(&bwd_steps[len - 1 - t].h);
    }
    (fwd_steps, bwd_steps, bi)
}

fn forward_sample(
    model: &ModelParams,
    x: &Mat,
    mode: Mode,
    sample_seed: u64,
) -> Result<(Vec<f64>, SampleCache)> {
    let cfg = &model.config;
    let p = &model.params;
    let len = cfg.seq_len;
    if x.rows() != len || x.cols() != cfg.input_dim {
        return Err(Error::Shape(format!(
            "forward: sample is [{} x {}], model expects [{} x {}]",
            x.rows(),
            x.cols(),
            len,
            cfg.input_dim
        )));
    }

    let xs: Vec<Vec<f64>> = (0..len).map(|t| x.row(t).to_vec()).collect();
    let xs_ref: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let xs_rev: Vec<&[f64]> = xs.iter().rev().map(|v| v.as_slice()).collect();

    let (fwd_steps, bwd_steps, bi) = bigru_states(p, cfg.bigru_hidden, &xs_ref, &xs_rev);
    for step in &bi {
        ensure_finite(step, "bigru")?;
    }

    let bi_ref: Vec<&[f64]> = bi.iter().map(|v| v.as_slice()).collect();
    let uni_steps = gru_forward_seq(&p.gru, &bi_ref);

    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let (mask1, mask2) = match mode {
        Mode::Train => {
            let m1: Vec<Vec<f64>> = (0..len)
                .map(|_| dropout_mask(cfg.gru_hidden, cfg.dropout, &mut rng))
                .collect();
            let m2: Vec<Vec<f64>> = (0..len)
                .map(|_| dropout_mask(cfg.fc_dim, cfg.dropout, &mut rng))
                .collect();
            (Some(m1), Some(m2))
        }
        Mode::Eval => (None, None),
    };

    let mut d1 = vec![vec![0.0; cfg.gru_hidden]; len];
    for t in 0..len {
        ensure_finite(&uni_steps[t].h, "gru")?;
        match &mask1 {
            Some(m) => {
                for i in 0..cfg.gru_hidden {
                    d1[t][i] = uni_steps[t].h[i] * m[t][i];
                }
            }
            None => d1[t].copy_from_slice(&uni_steps[t].h),
        }
    }

    let mut fc_pre = vec![vec![0.0; cfg.fc_dim]; len];
    let mut d2 = vec![vec![0.0; cfg.fc_dim]; len];
    for t in 0..len {
        let pre = &mut fc_pre[t];
        pre.copy_from_slice(&p.fc1_b);
        p.fc1_w.matvec_add(&d1[t], pre);
        ensure_finite(pre, "fc1")?;
        for i in 0..cfg.fc_dim {
            let relu = pre[i].max(0.0);
            d2[t][i] = match &mask2 {
                Some(m) => relu * m[t][i],
                None => relu,
            };
        }
    }

    let pooled_len = cfg.pooled_len();
    let mut flat = vec![0.0; cfg.head_in()];
    match cfg.pooling {
        Pooling::Window2 => {
            for j in 0..pooled_len {
                for c in 0..cfg.fc_dim {
                    flat[j * cfg.fc_dim + c] = 0.5 * (d2[2 * j][c] + d2[2 * j + 1][c]);
                }
            }
        }
        Pooling::Global => {
            for step in &d2 {
                for (c, v) in step.iter().enumerate() {
                    flat[c] += v;
                }
            }
            for v in flat.iter_mut() {
                *v /= len as f64;
            }
        }
    }

    let mut out = p.head_b.clone();
    p.head_w.matvec_add(&flat, &mut out);
    ensure_finite(&out, "head")?;

    Ok((
        out,
        SampleCache {
            xs,
            fwd_steps,
            bwd_steps,
            bi,
            uni_steps,
            d1,
            mask1,
            fc_pre,
            mask2,
            flat,
        },
    ))
}

/// Run the network over a batch of `[L x F]` samples.
///
/// Eval mode is a pure function of (params, batch); train mode draws one
/// dropout stream per sample from `rng_seed`, so the same seed reproduces
/// outputs bitwise.
pub fn forward(
    model: &ModelParams,
    batch: &[&Mat],
    mode: Mode,
    rng_seed: u64,
) -> Result<(Mat, ForwardCache)> {
    model.config.validate()?;
    if batch.is_empty() {
        return Err(Error::InvalidInput("forward: empty batch".into()));
    }
    let results: Result<Vec<(Vec<f64>, SampleCache)>> = batch
        .par_iter()
        .enumerate()
        .map(|(b, x)| forward_sample(model, x, mode, derive_seed(rng_seed, &format!("drop/{b}"))))
        .collect();
    let results = results?;
    let mut out = Mat::zeros(batch.len(), model.config.output_dim);
    let mut samples = Vec::with_capacity(batch.len());
    for (b, (row, cache)) in results.into_iter().enumerate() {
        out.row_mut(b).copy_from_slice(&row);
        samples.push(cache);
    }
    Ok((
        out,
        ForwardCache {
            config: model.config,
            samples,
        },
    ))
}

fn backward_sample(
    model: &ModelParams,
    cache: &SampleCache,
    dout: &[f64],
    grads: &mut Gradients,
) {
    let cfg = &model.config;
    let p = &model.params;
    let len = cfg.seq_len;

    // head
    grads.head_w.outer_add(dout, &cache.flat);
    for (g, d) in grads.head_b.iter_mut().zip(dout) {
        *g += d;
    }
    let mut dflat = vec![0.0; cfg.head_in()];
    p.head_w.tr_matvec_add(dout, &mut dflat);

    // un-pool
    let mut dd2 = vec![vec![0.0; cfg.fc_dim]; len];
    match cfg.pooling {
        Pooling::Window2 => {
            for j in 0..cfg.pooled_len() {
                for c in 0..cfg.fc_dim {
                    let g = 0.5 * dflat[j * cfg.fc_dim + c];
                    dd2[2 * j][c] = g;
                    dd2[2 * j + 1][c] = g;
                }
            }
        }
        Pooling::Global => {
            let inv = 1.0 / len as f64;
            for step in dd2.iter_mut() {
                for (c, v) in step.iter_mut().enumerate() {
                    *v = dflat[c] * inv;
                }
            }
        }
    }

    // dropout 2, ReLU, dense
    let mut dd1 = vec![vec![0.0; cfg.gru_hidden]; len];
    for t in 0..len {
        let mut dpre = vec![0.0; cfg.fc_dim];
        for i in 0..cfg.fc_dim {
            let g2 = match &cache.mask2 {
                Some(m) => dd2[t][i] * m[t][i],
                None => dd2[t][i],
            };
            dpre[i] = if cache.fc_pre[t][i] > 0.0 { g2 } else { 0.0 };
        }
        grads.fc1_w.outer_add(&dpre, &cache.d1[t]);
        for (g, d) in grads.fc1_b.iter_mut().zip(&dpre) {
            *g += d;
        }
        p.fc1_w.tr_matvec_add(&dpre, &mut dd1[t]);
        if let Some(m) = &cache.mask1 {
            for i in 0..cfg.gru_hidden {
                dd1[t][i] *= m[t][i];
            }
        }
    }

    // unidirectional GRU
    let bi_ref: Vec<&[f64]> = cache.bi.iter().map(|v| v.as_slice()).collect();
    let dbi = gru_backward_seq(&p.gru, &bi_ref, &cache.uni_steps, &dd1, &mut grads.gru);

    // split the concatenation back into the two directions
    let hb = cfg.bigru_hidden;
    let mut dhf = vec![vec![0.0; hb]; len];
    let mut dhb = vec![vec![0.0; hb]; len];
    for t in 0..len {
        dhf[t].copy_from_slice(&dbi[t][..hb]);
        dhb[len - 1 - t].copy_from_slice(&dbi[t][hb..]);
    }

    let xs_ref: Vec<&[f64]> = cache.xs.iter().map(|v| v.as_slice()).collect();
    let xs_rev: Vec<&[f64]> = cache.xs.iter().rev().map(|v| v.as_slice()).collect();
    gru_backward_seq(&p.fwd, &xs_ref, &cache.fwd_steps, &dhf, &mut grads.fwd);
    gru_backward_seq(&p.bwd, &xs_rev, &cache.bwd_steps, &dhb, &mut grads.bwd);
}

/// Number of contiguous gradient chunks; fixed so the merge order (and the
/// bits of every sum) never depends on thread count.
const GRAD_CHUNKS: usize = 16;

/// Exact gradients of every parameter for the given output gradient.
pub fn backward(model: &ModelParams, cache: &ForwardCache, output_grad: &Mat) -> Result<Gradients> {
    if cache.config != model.config {
        return Err(Error::Shape(
            "backward: cache was produced by a different model configuration".into(),
        ));
    }
    let batch = cache.samples.len();
    if output_grad.rows() != batch || output_grad.cols() != model.config.output_dim {
        return Err(Error::Shape(format!(
            "backward: output_grad [{} x {}] vs batch {} x out {}",
            output_grad.rows(),
            output_grad.cols(),
            batch,
            model.config.output_dim
        )));
    }
    let chunk_size = batch.div_ceil(GRAD_CHUNKS).max(1);
    let chunk_grads: Vec<Gradients> = (0..batch)
        .collect::<Vec<_>>()
        .par_chunks(chunk_size)
        .map(|idxs| {
            let mut g = model.params.zeros_like();
            for &b in idxs {
                backward_sample(model, &cache.samples[b], output_grad.row(b), &mut g);
            }
            g
        })
        .collect();
    let mut total = model.params.zeros_like();
    for g in &chunk_grads {
        total.add_assign(g);
    }
    Ok(total)
}

/// Eval-mode predictions for a window batch, chunked to bound cache memory.
pub fn predict(model: &ModelParams, inputs: &[&Mat]) -> Result<Mat> {
    let mut out = Mat::zeros(inputs.len(), model.config.output_dim);
    const CHUNK: usize = 256;
    for (ci, chunk) in inputs.chunks(CHUNK).enumerate() {
        let (o, _) = forward(model, chunk, Mode::Eval, 0)?;
        for r in 0..o.rows() {
            out.row_mut(ci * CHUNK + r).copy_from_slice(o.row(r));
        }
    }
    Ok(out)
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    model: ModelParams,
}

/// Write model weights as a versioned JSON tree of named tensors.
/// Floats serialize in shortest round-trip form, so load is bit-exact.
pub fn save_checkpoint(model: &ModelParams, path: &Path) -> Result<()> {
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        model: model.clone(),
    };
    let json = serde_json::to_string(&ckpt)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Validation(format!(
            "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    ckpt.model.config.validate()?;
    Ok(ckpt.model)
}
