//! GRU cell: parameters, single-step recurrence, and exact
//! backpropagation through a full sequence.
//!
//! Recurrence (reset-before-candidate formulation):
//!   z = σ(W_z x + U_z h_prev + b_z)
//!   r = σ(W_r x + U_r h_prev + b_r)
//!   h̃ = tanh(W_h x + U_h (r ⊙ h_prev) + b_h)
//!   h = (1 − z) ⊙ h_prev + z ⊙ h̃

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sigmoid, Mat};

/// Trainable weights of one GRU cell. `W_*` are `[hidden x input]`,
/// `U_*` are `[hidden x hidden]`, biases are `[hidden]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruCellParams {
    pub w_z: Mat,
    pub w_r: Mat,
    pub w_h: Mat,
    pub u_z: Mat,
    pub u_r: Mat,
    pub u_h: Mat,
    pub b_z: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_h: Vec<f64>,
}

impl GruCellParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        GruCellParams {
            w_z: Mat::zeros(hidden, input),
            w_r: Mat::zeros(hidden, input),
            w_h: Mat::zeros(hidden, input),
            u_z: Mat::zeros(hidden, hidden),
            u_r: Mat::zeros(hidden, hidden),
            u_h: Mat::zeros(hidden, hidden),
            b_z: vec![0.0; hidden],
            b_r: vec![0.0; hidden],
            b_h: vec![0.0; hidden],
        }
    }

    /// Seeded init: weights uniform in ±1/√fan_in, biases zero.
    pub fn init(hidden: usize, input: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut cell = Self::zeros(hidden, input);
        for m in [&mut cell.w_z, &mut cell.w_r, &mut cell.w_h] {
            fill_uniform(m.as_mut_slice(), input, rng);
        }
        for m in [&mut cell.u_z, &mut cell.u_r, &mut cell.u_h] {
            fill_uniform(m.as_mut_slice(), hidden, rng);
        }
        cell
    }

    pub fn hidden(&self) -> usize {
        self.w_z.rows()
    }

    pub fn input(&self) -> usize {
        self.w_z.cols()
    }

    /// Weight matrices paired with names, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("w_z", self.w_z.as_slice()),
            ("w_r", self.w_r.as_slice()),
            ("w_h", self.w_h.as_slice()),
            ("u_z", self.u_z.as_slice()),
            ("u_r", self.u_r.as_slice()),
            ("u_h", self.u_h.as_slice()),
            ("b_z", &self.b_z),
            ("b_r", &self.b_r),
            ("b_h", &self.b_h),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w_z", self.w_z.as_mut_slice()),
            ("w_r", self.w_r.as_mut_slice()),
            ("w_h", self.w_h.as_mut_slice()),
            ("u_z", self.u_z.as_mut_slice()),
            ("u_r", self.u_r.as_mut_slice()),
            ("u_h", self.u_h.as_mut_slice()),
            ("b_z", &mut self.b_z),
            ("b_r", &mut self.b_r),
            ("b_h", &mut self.b_h),
        ]
    }
}

pub(crate) fn fill_uniform(t: &mut [f64], fan_in: usize, rng: &mut ChaCha8Rng) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in t.iter_mut() {
        *v = (rng.random::<f64>() * 2.0 - 1.0) * bound;
    }
}

/// One recurrence step. Exposed for direct use and for hand-checked tests;
/// the sequence runner below keeps the caches backward needs.
pub fn gru_cell_step(params: &GruCellParams, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    let hidden = params.hidden();
    if x.len() != params.input() || h_prev.len() != hidden {
        return Err(Error::Shape(format!(
            "gru_cell_step: x[{}] h_prev[{}] vs cell [{} x {}]",
            x.len(),
            h_prev.len(),
            hidden,
            params.input()
        )));
    }
    let step = step_with_cache(params, x, h_prev);
    Ok(step.h)
}

/// Intermediates of one step, retained for backprop.
#[derive(Clone, Debug)]
pub struct GruStepCache {
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub h_cand: Vec<f64>,
    /// r ⊙ h_prev, the input to U_h.
    pub rh: Vec<f64>,
    pub h: Vec<f64>,
}

fn step_with_cache(p: &GruCellParams, x: &[f64], h_prev: &[f64]) -> GruStepCache {
    let hidden = p.hidden();
    let mut z = p.b_z.clone();
    p.w_z.matvec_add(x, &mut z);
    p.u_z.matvec_add(h_prev, &mut z);
    for v in z.iter_mut() {
        *v = sigmoid(*v);
    }
    let mut r = p.b_r.clone();
    p.w_r.matvec_add(x, &mut r);
    p.u_r.matvec_add(h_prev, &mut r);
    for v in r.iter_mut() {
        *v = sigmoid(*v);
    }
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut h_cand = p.b_h.clone();
    p.w_h.matvec_add(x, &mut h_cand);
    p.u_h.matvec_add(&rh, &mut h_cand);
    for v in h_cand.iter_mut() {
        *v = v.tanh();
    }
    let mut h = vec![0.0; hidden];
    for i in 0..hidden {
        h[i] = (1.0 - z[i]) * h_prev[i] + z[i] * h_cand[i];
    }
    GruStepCache { z, r, h_cand, rh, h }
}

/// Run a cell over a sequence from a zero initial state, caching every step.
pub fn gru_forward_seq(params: &GruCellParams, xs: &[&[f64]]) -> Vec<GruStepCache> {
    let hidden = params.hidden();
    let zero = vec![0.0; hidden];
    let mut steps: Vec<GruStepCache> = Vec::with_capacity(xs.len());
    for (t, &x) in xs.iter().enumerate() {
        let h_prev = if t == 0 { &zero } else { &steps[t - 1].h };
        steps.push(step_with_cache(params, x, h_prev));
    }
    steps
}

/// Exact reverse-mode differentiation of [`gru_forward_seq`].
///
/// `dh_out[t]` is the downstream gradient on the step-`t` hidden output.
/// Gradients accumulate into `grads`; the per-step input gradients are
/// returned for the layer below.
pub fn gru_backward_seq(
    params: &GruCellParams,
    xs: &[&[f64]],
    steps: &[GruStepCache],
    dh_out: &[Vec<f64>],
    grads: &mut GruCellParams,
) -> Vec<Vec<f64>> {
    let hidden = params.hidden();
    let input = params.input();
    let len = xs.len();
    debug_assert_eq!(steps.len(), len);
    debug_assert_eq!(dh_out.len(), len);
    let zero = vec![0.0; hidden];

    let mut dxs = vec![vec![0.0; input]; len];
    let mut carry = vec![0.0; hidden];
    for t in (0..len).rev() {
        let cache = &steps[t];
        let h_prev = if t == 0 { &zero } else { &steps[t - 1].h };
        let mut dh = dh_out[t].clone();
        for (a, b) in dh.iter_mut().zip(&carry) {
            *a += b;
        }

        let mut dh_prev = vec![0.0; hidden];
        let mut da_z = vec![0.0; hidden];
        let mut da_h = vec![0.0; hidden];
        for i in 0..hidden {
            let dz = dh[i] * (cache.h_cand[i] - h_prev[i]);
            let dhc = dh[i] * cache.z[i];
            dh_prev[i] = dh[i] * (1.0 - cache.z[i]);
            da_z[i] = dz * cache.z[i] * (1.0 - cache.z[i]);
            da_h[i] = dhc * (1.0 - cache.h_cand[i] * cache.h_cand[i]);
        }

        // candidate path: a_h = W_h x + U_h (r ⊙ h_prev) + b_h
        grads.w_h.outer_add(&da_h, xs[t]);
        grads.u_h.outer_add(&da_h, &cache.rh);
        for (g, d) in grads.b_h.iter_mut().zip(&da_h) {
            *g += d;
        }
        let mut d_rh = vec![0.0; hidden];
        params.u_h.tr_matvec_add(&da_h, &mut d_rh);
        let mut da_r = vec![0.0; hidden];
        for i in 0..hidden {
            let dr = d_rh[i] * h_prev[i];
            dh_prev[i] += d_rh[i] * cache.r[i];
            da_r[i] = dr * cache.r[i] * (1.0 - cache.r[i]);
        }

        // gate paths
        grads.w_z.outer_add(&da_z, xs[t]);
        grads.u_z.outer_add(&da_z, h_prev);
        for (g, d) in grads.b_z.iter_mut().zip(&da_z) {
            *g += d;
        }
        params.u_z.tr_matvec_add(&da_z, &mut dh_prev);

        grads.w_r.outer_add(&da_r, xs[t]);
        grads.u_r.outer_add(&da_r, h_prev);
        for (g, d) in grads.b_r.iter_mut().zip(&da_r) {
            *g += d;
        }
        params.u_r.tr_matvec_add(&da_r, &mut dh_prev);

        let dx = &mut dxs[t];
        params.w_z.tr_matvec_add(&da_z, dx);
        params.w_r.tr_matvec_add(&da_r, dx);
        params.w_h.tr_matvec_add(&da_h, dx);

        carry = dh_prev;
    }
    dxs
}
