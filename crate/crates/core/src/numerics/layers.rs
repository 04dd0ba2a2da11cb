//! Elementary layers with hand-derived backward passes.
//!
//! Every layer reads its weights from [`Params`] and writes parameter
//! gradients into a [`Grads`] accumulator; backward returns the gradient
//! with respect to the layer input.

use super::params::{Grads, ParamId, ParamStore, Params};
use super::rng::Rng;
use super::tensor::Tensor;
use crate::error::{dim_err, Result};

pub const LN_EPS: f64 = 1e-9;

/// `y = x·W + b` with `W: in×out`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Result<Self> {
        let std = 1.0 / (in_dim as f64).sqrt();
        let w = store.add_normal(&format!("{name}.w"), &[in_dim, out_dim], std, rng)?;
        let b = store.add(&format!("{name}.b"), Tensor::zeros(&[out_dim]))?;
        Ok(Self { w, b, in_dim, out_dim })
    }

    pub fn forward(&self, p: &Params, x: &Tensor) -> Result<Tensor> {
        linear_fwd(x, p.get(self.w), p.get(self.b))
    }

    pub fn backward(&self, p: &Params, x: &Tensor, dy: &Tensor, g: &mut Grads) -> Result<Tensor> {
        let (dx, dw, db) = linear_bwd(x, p.get(self.w), dy)?;
        g.accumulate(self.w, dw.data());
        g.accumulate(self.b, &db);
        Ok(dx)
    }
}

pub fn linear_fwd(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if w.shape().len() != 2 || b.numel() != w.cols() {
        return Err(dim_err(
            "linear",
            format!("w {:?}, b {:?}", w.shape(), b.shape()),
        ));
    }
    x.matmul(w)?.add_row(b.data())
}

/// Returns `(dx, dW, db)`.
pub fn linear_bwd(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor, Vec<f64>)> {
    let dx = dy.matmul_t(w)?;
    let dw = x.t_matmul(dy)?;
    Ok((dx, dw, dy.sum_rows()))
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let c = x.cols();
    for row in out.data_mut().chunks_mut(c) {
        softmax_in_place(row);
    }
    out
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Backward of row-wise softmax given its output `y`.
pub fn softmax_rows_bwd(y: &Tensor, dy: &Tensor) -> Tensor {
    let c = y.cols();
    let mut dx = dy.clone();
    for (drow, yrow) in dx.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
        let s: f64 = drow.iter().zip(yrow).map(|(d, y)| d * y).sum();
        for (d, y) in drow.iter_mut().zip(yrow) {
            *d = y * (*d - s);
        }
    }
    dx
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub struct LayerNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        let gamma = store.add(&format!("{name}.gamma"), Tensor::full(&[dim], 1.0))?;
        let beta = store.add(&format!("{name}.beta"), Tensor::zeros(&[dim]))?;
        Ok(Self { gamma, beta, dim })
    }

    pub fn forward(&self, p: &Params, x: &Tensor) -> Result<(Tensor, LayerNormCache)> {
        if x.cols() != self.dim {
            return Err(dim_err("layernorm", format!("cols {} vs {}", x.cols(), self.dim)));
        }
        let (xhat, inv_std) = normalize_rows(x);
        let gamma = p.get(self.gamma).data();
        let beta = p.get(self.beta).data();
        let mut y = xhat.clone();
        for row in y.data_mut().chunks_mut(self.dim) {
            for ((v, g), b) in row.iter_mut().zip(gamma).zip(beta) {
                *v = *v * g + b;
            }
        }
        Ok((y, LayerNormCache { xhat, inv_std }))
    }

    pub fn backward(&self, p: &Params, cache: &LayerNormCache, dy: &Tensor, g: &mut Grads) -> Tensor {
        let d = self.dim;
        let gamma = p.get(self.gamma).data();
        let mut dgamma = vec![0.0; d];
        let mut dbeta = vec![0.0; d];
        let mut dx = Tensor::zeros(dy.shape());
        let rows = dy.rows();
        for r in 0..rows {
            let dyr = dy.row(r);
            let xh = cache.xhat.row(r);
            let mut dxhat = vec![0.0; d];
            for j in 0..d {
                dgamma[j] += dyr[j] * xh[j];
                dbeta[j] += dyr[j];
                dxhat[j] = dyr[j] * gamma[j];
            }
            let mean_d = dxhat.iter().sum::<f64>() / d as f64;
            let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            let inv = cache.inv_std[r];
            for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
                *o = inv * (dxhat[j] - mean_d - xh[j] * mean_dx);
            }
        }
        g.accumulate(self.gamma, &dgamma);
        g.accumulate(self.beta, &dbeta);
        dx
    }
}

/// Zero-mean, unit-variance rows (before affine); returns the per-row inverse std.
pub fn normalize_rows(x: &Tensor) -> (Tensor, Vec<f64>) {
    let d = x.cols();
    let mut out = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for row in out.data_mut().chunks_mut(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * inv;
        }
        inv_std.push(inv);
    }
    (out, inv_std)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub fn gelu_fwd(x: &Tensor) -> Tensor {
    x.map(gelu)
}

pub fn gelu_bwd(x: &Tensor, dy: &Tensor) -> Tensor {
    x.zip_map(dy, |x, d| gelu_grad(x) * d)
}

/// Two-layer perceptron `fc2(gelu(fc1(x)))`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Clone, Debug)]
pub struct MlpCache {
    x: Tensor,
    pre: Tensor,
    act: Tensor,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(store, &format!("{name}.fc1"), in_dim, hidden, rng)?,
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, out_dim, rng)?,
        })
    }

    pub fn forward(&self, p: &Params, x: &Tensor) -> Result<(Tensor, MlpCache)> {
        let pre = self.fc1.forward(p, x)?;
        let act = gelu_fwd(&pre);
        let y = self.fc2.forward(p, &act)?;
        Ok((
            y,
            MlpCache {
                x: x.clone(),
                pre,
                act,
            },
        ))
    }

    pub fn backward(&self, p: &Params, cache: &MlpCache, dy: &Tensor, g: &mut Grads) -> Result<Tensor> {
        let dact = self.fc2.backward(p, &cache.act, dy, g)?;
        let dpre = gelu_bwd(&cache.pre, &dact);
        self.fc1.backward(p, &cache.x, &dpre, g)
    }
}
