//! Multi-head attention and pre-norm transformer blocks.
//!
//! One attention implementation serves both variants: self-attention passes
//! the same sequence as queries and memory, cross-attention passes a
//! separate memory sequence.

use super::layers::{softmax_rows, softmax_rows_bwd, LayerNorm, LayerNormCache, Linear, Mlp, MlpCache};
use super::params::{Grads, ParamStore, Params};
use super::rng::Rng;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    xq: Tensor,
    xkv: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    probs: Vec<Tensor>,
    concat: Tensor,
}

impl AttentionCache {
    /// Attention weights of head `h` (queries × memory).
    pub fn probs(&self, h: usize) -> &Tensor {
        &self.probs[h]
    }
}

fn head_cols(x: &Tensor, h: usize, dh: usize) -> Tensor {
    let rows = x.rows();
    let mut data = Vec::with_capacity(rows * dh);
    for r in 0..rows {
        data.extend_from_slice(&x.row(r)[h * dh..(h + 1) * dh]);
    }
    Tensor::new(vec![rows, dh], data).expect("head slice shape")
}

fn put_head_cols(dst: &mut Tensor, src: &Tensor, h: usize, dh: usize) {
    for r in 0..src.rows() {
        dst.row_mut(r)[h * dh..(h + 1) * dh].copy_from_slice(src.row(r));
    }
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!(
                "attention width {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            wq: Linear::new(store, &format!("{name}.q"), dim, dim, rng)?,
            wk: Linear::new(store, &format!("{name}.k"), dim, dim, rng)?,
            wv: Linear::new(store, &format!("{name}.v"), dim, dim, rng)?,
            wo: Linear::new(store, &format!("{name}.o"), dim, dim, rng)?,
            heads,
            dim,
        })
    }

    /// Queries `xq` (Nq×D) attend over memory `xkv` (Nk×D).
    pub fn forward(&self, p: &Params, xq: &Tensor, xkv: &Tensor) -> Result<(Tensor, AttentionCache)> {
        let q = self.wq.forward(p, xq)?;
        let k = self.wk.forward(p, xkv)?;
        let v = self.wv.forward(p, xkv)?;
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut concat = Tensor::zeros(&[xq.rows(), self.dim]);
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = head_cols(&q, h, dh);
            let kh = head_cols(&k, h, dh);
            let vh = head_cols(&v, h, dh);
            let scores = qh.matmul_t(&kh)?.scale(scale);
            let a = softmax_rows(&scores);
            let oh = a.matmul(&vh)?;
            put_head_cols(&mut concat, &oh, h, dh);
            probs.push(a);
        }
        let out = self.wo.forward(p, &concat)?;
        Ok((
            out,
            AttentionCache {
                xq: xq.clone(),
                xkv: xkv.clone(),
                q,
                k,
                v,
                probs,
                concat,
            },
        ))
    }

    /// Returns `(d xq, d xkv)`.
    pub fn backward(
        &self,
        p: &Params,
        cache: &AttentionCache,
        dy: &Tensor,
        g: &mut Grads,
    ) -> Result<(Tensor, Tensor)> {
        let dconcat = self.wo.backward(p, &cache.concat, dy, g)?;
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Tensor::zeros(cache.q.shape());
        let mut dk = Tensor::zeros(cache.k.shape());
        let mut dv = Tensor::zeros(cache.v.shape());
        for h in 0..self.heads {
            let qh = head_cols(&cache.q, h, dh);
            let kh = head_cols(&cache.k, h, dh);
            let vh = head_cols(&cache.v, h, dh);
            let doh = head_cols(&dconcat, h, dh);
            let a = &cache.probs[h];
            let da = doh.matmul_t(&vh)?;
            let dvh = a.t_matmul(&doh)?;
            let ds = softmax_rows_bwd(a, &da).scale(scale);
            let dqh = ds.matmul(&kh)?;
            let dkh = ds.t_matmul(&qh)?;
            put_head_cols(&mut dq, &dqh, h, dh);
            put_head_cols(&mut dk, &dkh, h, dh);
            put_head_cols(&mut dv, &dvh, h, dh);
        }
        let dxq = self.wq.backward(p, &cache.xq, &dq, g)?;
        let mut dxkv = self.wk.backward(p, &cache.xkv, &dk, g)?;
        dxkv.add_assign(&self.wv.backward(p, &cache.xkv, &dv, g)?)?;
        Ok((dxq, dxkv))
    }
}

/// Multi-head self-attention: the sequence attends to itself.
pub fn mhsa_fwd(attn: &MultiHeadAttention, p: &Params, x: &Tensor) -> Result<(Tensor, AttentionCache)> {
    attn.forward(p, x, x)
}

pub fn mhsa_bwd(
    attn: &MultiHeadAttention,
    p: &Params,
    cache: &AttentionCache,
    dy: &Tensor,
    g: &mut Grads,
) -> Result<Tensor> {
    let (dq, mut dkv) = attn.backward(p, cache, dy, g)?;
    dkv.add_assign(&dq)?;
    Ok(dkv)
}

/// Multi-head cross-attention: `queries` attend over `memory`.
pub fn mhca_fwd(
    attn: &MultiHeadAttention,
    p: &Params,
    queries: &Tensor,
    memory: &Tensor,
) -> Result<(Tensor, AttentionCache)> {
    attn.forward(p, queries, memory)
}

pub fn mhca_bwd(
    attn: &MultiHeadAttention,
    p: &Params,
    cache: &AttentionCache,
    dy: &Tensor,
    g: &mut Grads,
) -> Result<(Tensor, Tensor)> {
    attn.backward(p, cache, dy, g)
}

/// Pre-norm self-attention block: `h = x + MHSA(LN(x))`, `y = h + MLP(LN(h))`.
#[derive(Clone, Debug)]
pub struct SelfBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

#[derive(Clone, Debug)]
pub struct SelfBlockCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    ln2: LayerNormCache,
    mlp: MlpCache,
}

impl SelfBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        mlp_ratio: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim)?,
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim)?,
            mlp: Mlp::new(store, &format!("{name}.mlp"), dim, dim * mlp_ratio, dim, rng)?,
        })
    }

    pub fn forward(&self, p: &Params, x: &Tensor) -> Result<(Tensor, SelfBlockCache)> {
        let (a, ln1) = self.ln1.forward(p, x)?;
        let (att, attn) = mhsa_fwd(&self.attn, p, &a)?;
        let h = x.add(&att)?;
        let (b, ln2) = self.ln2.forward(p, &h)?;
        let (m, mlp) = self.mlp.forward(p, &b)?;
        let y = h.add(&m)?;
        Ok((y, SelfBlockCache { ln1, attn, ln2, mlp }))
    }

    pub fn backward(&self, p: &Params, cache: &SelfBlockCache, dy: &Tensor, g: &mut Grads) -> Result<Tensor> {
        let db = self.mlp.backward(p, &cache.mlp, dy, g)?;
        let mut dh = self.ln2.backward(p, &cache.ln2, &db, g);
        dh.add_assign(dy)?;
        let da = mhsa_bwd(&self.attn, p, &cache.attn, &dh, g)?;
        let mut dx = self.ln1.backward(p, &cache.ln1, &da, g);
        dx.add_assign(&dh)?;
        Ok(dx)
    }
}

/// Pre-norm cross-attention block. The memory enters attention un-normalized.
#[derive(Clone, Debug)]
pub struct CrossBlock {
    pub ln_q: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

#[derive(Clone, Debug)]
pub struct CrossBlockCache {
    ln_q: LayerNormCache,
    attn: AttentionCache,
    ln2: LayerNormCache,
    mlp: MlpCache,
}

impl CrossBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        mlp_ratio: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Self {
            ln_q: LayerNorm::new(store, &format!("{name}.ln_q"), dim)?,
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim)?,
            mlp: Mlp::new(store, &format!("{name}.mlp"), dim, dim * mlp_ratio, dim, rng)?,
        })
    }

    pub fn forward(&self, p: &Params, q: &Tensor, memory: &Tensor) -> Result<(Tensor, CrossBlockCache)> {
        let (a, ln_q) = self.ln_q.forward(p, q)?;
        let (att, attn) = mhca_fwd(&self.attn, p, &a, memory)?;
        let h = q.add(&att)?;
        let (b, ln2) = self.ln2.forward(p, &h)?;
        let (m, mlp) = self.mlp.forward(p, &b)?;
        Ok((h.add(&m)?, CrossBlockCache { ln_q, attn, ln2, mlp }))
    }

    /// Returns `(d queries, d memory)`.
    pub fn backward(
        &self,
        p: &Params,
        cache: &CrossBlockCache,
        dy: &Tensor,
        g: &mut Grads,
    ) -> Result<(Tensor, Tensor)> {
        let db = self.mlp.backward(p, &cache.mlp, dy, g)?;
        let mut dh = self.ln2.backward(p, &cache.ln2, &db, g);
        dh.add_assign(dy)?;
        let (da, dmem) = mhca_bwd(&self.attn, p, &cache.attn, &dh, g)?;
        let mut dq = self.ln_q.backward(p, &cache.ln_q, &da, g);
        dq.add_assign(&dh)?;
        Ok((dq, dmem))
    }
}

/// Sequence of self-attention blocks.
#[derive(Clone, Debug, Default)]
pub struct SelfStack {
    pub blocks: Vec<SelfBlock>,
}

impl SelfStack {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        depth: usize,
        dim: usize,
        heads: usize,
        mlp_ratio: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let blocks = (0..depth)
            .map(|i| SelfBlock::new(store, &format!("{name}.{i}"), dim, heads, mlp_ratio, rng))
            .collect::<Result<_>>()?;
        Ok(Self { blocks })
    }

    pub fn forward(&self, p: &Params, x: &Tensor) -> Result<(Tensor, Vec<SelfBlockCache>)> {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, c) = b.forward(p, &h)?;
            caches.push(c);
            h = y;
        }
        Ok((h, caches))
    }

    pub fn backward(&self, p: &Params, caches: &[SelfBlockCache], dy: &Tensor, g: &mut Grads) -> Result<Tensor> {
        let mut d = dy.clone();
        for (b, c) in self.blocks.iter().zip(caches).rev() {
            d = b.backward(p, c, &d, g)?;
        }
        Ok(d)
    }
}

/// Sequence of cross-attention blocks sharing one memory.
#[derive(Clone, Debug, Default)]
pub struct CrossStack {
    pub blocks: Vec<CrossBlock>,
}

impl CrossStack {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        depth: usize,
        dim: usize,
        heads: usize,
        mlp_ratio: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let blocks = (0..depth)
            .map(|i| CrossBlock::new(store, &format!("{name}.{i}"), dim, heads, mlp_ratio, rng))
            .collect::<Result<_>>()?;
        Ok(Self { blocks })
    }

    pub fn forward(&self, p: &Params, q: &Tensor, memory: &Tensor) -> Result<(Tensor, Vec<CrossBlockCache>)> {
        let mut h = q.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, c) = b.forward(p, &h, memory)?;
            caches.push(c);
            h = y;
        }
        Ok((h, caches))
    }

    /// Returns `(d queries, d memory)`; memory gradients are summed over blocks.
    pub fn backward(
        &self,
        p: &Params,
        caches: &[CrossBlockCache],
        dy: &Tensor,
        memory_shape: &[usize],
        g: &mut Grads,
    ) -> Result<(Tensor, Tensor)> {
        let mut d = dy.clone();
        let mut dmem = Tensor::zeros(memory_shape);
        for (b, c) in self.blocks.iter().zip(caches).rev() {
            let (dq, dm) = b.backward(p, c, &d, g)?;
            dmem.add_assign(&dm)?;
            d = dq;
        }
        Ok((d, dmem))
    }
}
