//! Deterministic dense numerics: tensors, a fixed layer vocabulary with
//! analytic backward passes, AdamW with a cosine schedule, gradient checking
//! and the binary tensor container.

mod attention;
mod checkpoint;
mod gradcheck;
mod layers;
mod optim;
mod params;
mod rng;
mod tensor;

pub use attention::{
    mhca_bwd, mhca_fwd, mhsa_bwd, mhsa_fwd, AttentionCache, CrossBlock, CrossBlockCache, CrossStack,
    MultiHeadAttention, SelfBlock, SelfBlockCache, SelfStack,
};
pub use checkpoint::{TensorFile, MAGIC, VERSION};
pub use gradcheck::{grad_check, GradCheckReport, GroupReport};
pub use layers::{
    gelu, gelu_bwd, gelu_fwd, gelu_grad, linear_bwd, linear_fwd, normalize_rows, softmax, softmax_in_place,
    softmax_rows, softmax_rows_bwd, LayerNorm, LayerNormCache, Linear, Mlp, MlpCache, LN_EPS,
};
pub use optim::{adamw_step, cosine_lr, AdamW};
pub use params::{Grads, ParamId, ParamStore, Params};
pub use rng::Rng;
pub use tensor::{dot, Tensor};

use crate::error::Result;
use std::path::Path;

/// Saves every parameter of `params` as a named record.
pub fn save_params(params: &Params, path: &Path) -> Result<()> {
    let mut f = TensorFile::new();
    for (name, t) in params.iter() {
        f.push(name, t.clone());
    }
    f.write(path)?;
    Ok(())
}

/// Copies matching records from a checkpoint file into `store`; returns the count.
pub fn load_params(store: &mut ParamStore, path: &Path) -> Result<usize> {
    let f = TensorFile::read(path)?;
    let mut tmp = ParamStore::new();
    for (name, t) in f.records {
        tmp.add(&name, t)?;
    }
    Ok(store.load_matching(&tmp.params))
}

/// Stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
