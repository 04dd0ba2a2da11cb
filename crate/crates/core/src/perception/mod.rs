//! Stage-1 predictive temporal perception.
//!
//! A shared temporal encoder `f` maps every view of a video to latents; a
//! predictor `g` maps each local view's latents (plus a learned embedding of
//! the view type) to the full-length global latents, whose branch is treated
//! as a constant target. A sliced Gaussianity regularizer on the pooled
//! latents keeps the representation from collapsing.

pub mod sigreg;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use sigreg::{sample_directions, sigreg, sigreg_with_directions, Divergence, Reference, MIN_SAMPLES};

use crate::error::{Error, Result};
use crate::numerics::{
    adamw_step, cosine_lr, AdamW, Grads, LayerNorm, LayerNormCache, Linear, ParamId, ParamStore, Params, Rng,
    SelfBlockCache, SelfStack, Tensor,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalModuleConfig {
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub pred_depth: usize,
    pub view_types: usize,
    /// Weight of the regularizer in `(1 − λ)·L_pred + λ·L_SIG`.
    pub lambda: f64,
    pub directions: usize,
    pub divergence: Divergence,
    /// Amplitude of the additive sinusoidal position code.
    pub pos_scale: f64,
}

impl Default for TemporalModuleConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            depth: 2,
            heads: 2,
            mlp_ratio: 2,
            pred_depth: 1,
            view_types: 3,
            lambda: 0.1,
            directions: 64,
            divergence: Divergence::default(),
            pos_scale: 0.5,
        }
    }
}

impl TemporalModuleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0,1]", self.lambda)));
        }
        if self.directions == 0 {
            return Err(Error::Config("SIGReg needs at least one direction".into()));
        }
        if self.view_types == 0 {
            return Err(Error::Config("at least one view type is required".into()));
        }
        if self.dim == 0 || self.dim % 2 != 0 {
            return Err(Error::Config(format!("latent width {} must be even and positive", self.dim)));
        }
        if self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::Config(format!("{} heads do not divide width {}", self.heads, self.dim)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViewKind {
    Global,
    Local,
}

/// A strided window of timesteps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub kind: ViewKind,
    pub start: usize,
    pub length: usize,
    pub stride: usize,
    /// Crop/stride pattern class; indexes the predictor's view embedding.
    pub view_type: usize,
}

impl ViewSpec {
    /// Full-range view of an `n`-step sequence.
    pub fn global(n: usize, stride: usize) -> Self {
        let stride = stride.max(1);
        Self {
            kind: ViewKind::Global,
            start: 0,
            length: (n.max(1) - 1) / stride + 1,
            stride,
            view_type: 0,
        }
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.length).map(|i| self.start + i * self.stride).collect()
    }

    /// Number of timesteps between the first and last index, inclusive.
    pub fn span(&self) -> usize {
        (self.length.max(1) - 1) * self.stride + 1
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.length == 0 || self.stride == 0 || self.start + self.span() > n {
            return Err(Error::Sampling(format!("view {self:?} does not fit a {n}-step sequence")));
        }
        Ok(())
    }
}

/// How local views are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewPolicy {
    pub local_views: usize,
    /// Allowed range of the observed fraction `length / N` of a local view.
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Stride of each view type; the view type id is the index.
    pub strides: Vec<usize>,
    pub global_stride: usize,
}

impl Default for ViewPolicy {
    fn default() -> Self {
        Self {
            local_views: 4,
            min_ratio: 0.15,
            max_ratio: 0.5,
            strides: vec![1, 2, 3],
            global_stride: 1,
        }
    }
}

impl ViewPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.min_ratio && self.min_ratio <= self.max_ratio && self.max_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "local ratio range [{}, {}] is not inside (0, 1]",
                self.min_ratio, self.max_ratio
            )));
        }
        if self.strides.is_empty() || self.strides.contains(&0) {
            return Err(Error::Config("view strides must be non-empty and positive".into()));
        }
        if self.global_stride == 0 {
            return Err(Error::Config("global stride must be positive".into()));
        }
        Ok(())
    }

    /// Feasible local lengths `[lo, hi]` for view type `v` on `n` steps.
    fn length_range(&self, n: usize, v: usize) -> Option<(usize, usize)> {
        let s = self.strides[v];
        let lo = ((self.min_ratio * n as f64) - 1e-9).ceil().max(2.0) as usize;
        let hi = (((self.max_ratio * n as f64) + 1e-9).floor() as usize).min((n.max(1) - 1) / s + 1);
        (lo <= hi).then_some((lo, hi))
    }
}

/// One global view and `policy.local_views` local views of an `n`-step sequence.
pub fn sample_views(n: usize, rng: &mut Rng, policy: &ViewPolicy) -> Result<(ViewSpec, Vec<ViewSpec>)> {
    policy.validate()?;
    let global = ViewSpec::global(n, policy.global_stride);
    let mut locals = Vec::with_capacity(policy.local_views);
    for _ in 0..policy.local_views {
        let v = rng.int_range(0, policy.strides.len() - 1);
        let (lo, hi) = policy.length_range(n, v).ok_or_else(|| {
            Error::Sampling(format!(
                "a {n}-step sequence is too short for a stride-{} local view with ratio in [{}, {}]",
                policy.strides[v], policy.min_ratio, policy.max_ratio
            ))
        })?;
        let length = rng.int_range(lo, hi);
        let stride = policy.strides[v];
        let span = (length - 1) * stride + 1;
        let start = rng.int_range(0, n - span);
        locals.push(ViewSpec {
            kind: ViewKind::Local,
            start,
            length,
            stride,
            view_type: v,
        });
    }
    Ok((global, locals))
}

/// Sinusoidal code of normalized position `(i + 0.5) / n` for each index.
///
/// Frequencies are geometric from π/2 to 32π so both coarse and fine
/// absolute position are representable.
pub fn positional_encoding(indices: &[usize], n: usize, dim: usize, scale: f64) -> Tensor {
    let half = dim / 2;
    let mut out = Tensor::zeros(&[indices.len(), dim]);
    for (r, &i) in indices.iter().enumerate() {
        let pos = (i as f64 + 0.5) / n.max(1) as f64;
        let row = out.row_mut(r);
        for j in 0..half {
            let frac = if half > 1 { j as f64 / (half - 1) as f64 } else { 0.0 };
            let w = std::f64::consts::FRAC_PI_2 * 64f64.powf(frac);
            row[2 * j] = scale * (w * pos).sin();
            row[2 * j + 1] = scale * (w * pos).cos();
        }
    }
    out
}

/// Shared temporal encoder: input projection + position code, self-attention
/// stack, final layer norm.
#[derive(Clone, Debug)]
pub struct TemporalModule {
    pub input: Linear,
    pub stack: SelfStack,
    pub norm: LayerNorm,
    pub dim: usize,
    pub pos_scale: f64,
}

#[derive(Clone, Debug)]
pub struct EncodeCache {
    x: Tensor,
    blocks: Vec<SelfBlockCache>,
    norm: LayerNormCache,
}

impl TemporalModule {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &TemporalModuleConfig, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            input: Linear::new(store, &format!("{name}.in"), cfg.dim, cfg.dim, rng)?,
            stack: SelfStack::new(store, &format!("{name}.blocks"), cfg.depth, cfg.dim, cfg.heads, cfg.mlp_ratio, rng)?,
            norm: LayerNorm::new(store, &format!("{name}.norm"), cfg.dim)?,
            dim: cfg.dim,
            pos_scale: cfg.pos_scale,
        })
    }

    /// Latents (view length × D) of the timesteps selected by `view` from `x` (N × D).
    pub fn encode(&self, p: &Params, view: &ViewSpec, x: &Tensor) -> Result<(Tensor, EncodeCache)> {
        view.validate(x.rows())?;
        if x.cols() != self.dim {
            return Err(Error::Dimension {
                op: "encode",
                detail: format!("feature width {} vs model width {}", x.cols(), self.dim),
            });
        }
        let idx = view.indices();
        let xv = x.gather_rows(&idx)?;
        let h0 = self
            .input
            .forward(p, &xv)?
            .add(&positional_encoding(&idx, x.rows(), self.dim, self.pos_scale))?;
        let (h, blocks) = self.stack.forward(p, &h0)?;
        let (u, norm) = self.norm.forward(p, &h)?;
        Ok((u, EncodeCache { x: xv, blocks, norm }))
    }

    /// Accumulates parameter gradients; returns the gradient w.r.t. the view's input rows.
    pub fn backward(&self, p: &Params, cache: &EncodeCache, du: &Tensor, g: &mut Grads) -> Result<Tensor> {
        let dh = self.norm.backward(p, &cache.norm, du, g);
        let dh0 = self.stack.backward(p, &cache.blocks, &dh, g)?;
        self.input.backward(p, &cache.x, &dh0, g)
    }
}

/// Linear interpolation of rows sampled at timestep indices `src` (strictly
/// increasing) onto the timestep indices `dst`; targets outside the sampled
/// range take the nearest edge row.
pub fn resample_time(y: &Tensor, src: &[usize], dst: &[usize]) -> Result<Tensor> {
    let d = y.cols();
    if y.rows() == 0 || y.rows() != src.len() || dst.is_empty() {
        return Err(Error::Dimension {
            op: "resample_time",
            detail: format!("{} rows at {} positions onto {} targets", y.rows(), src.len(), dst.len()),
        });
    }
    let mut out = Tensor::zeros(&[dst.len(), d]);
    for (j, &t) in dst.iter().enumerate() {
        let (i0, i1, w) = interp_weights(t, src);
        let row = out.row_mut(j);
        for c in 0..d {
            row[c] = (1.0 - w) * y.row(i0)[c] + w * y.row(i1)[c];
        }
    }
    Ok(out)
}

/// Adjoint of [`resample_time`].
pub fn resample_time_bwd(dy: &Tensor, src: &[usize], dst: &[usize]) -> Tensor {
    let d = dy.cols();
    let mut dx = Tensor::zeros(&[src.len(), d]);
    for (j, &t) in dst.iter().enumerate() {
        let (i0, i1, w) = interp_weights(t, src);
        for c in 0..d {
            let v = dy.row(j)[c];
            dx.row_mut(i0)[c] += (1.0 - w) * v;
            dx.row_mut(i1)[c] += w * v;
        }
    }
    dx
}

fn interp_weights(t: usize, src: &[usize]) -> (usize, usize, f64) {
    let last = src.len() - 1;
    if t <= src[0] {
        return (0, 0, 0.0);
    }
    if t >= src[last] {
        return (last, last, 0.0);
    }
    let i1 = src.partition_point(|&s| s <= t);
    let i0 = i1 - 1;
    let w = (t - src[i0]) as f64 / (src[i1] - src[i0]) as f64;
    (i0, i1, w)
}

/// Predictor from local latents to the global latent sequence.
#[derive(Clone, Debug)]
pub struct Predictor {
    pub view_emb: ParamId,
    pub stack: SelfStack,
    pub out: Linear,
    pub view_types: usize,
}

#[derive(Clone, Debug)]
pub struct PredictCache {
    view_type: usize,
    blocks: Vec<SelfBlockCache>,
    h: Tensor,
    src: Vec<usize>,
    dst: Vec<usize>,
}

impl Predictor {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &TemporalModuleConfig, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            view_emb: store.add_normal(&format!("{name}.view_emb"), &[cfg.view_types, cfg.dim], 0.02, rng)?,
            stack: SelfStack::new(
                store,
                &format!("{name}.blocks"),
                cfg.pred_depth,
                cfg.dim,
                cfg.heads,
                cfg.mlp_ratio,
                rng,
            )?,
            out: Linear::new(store, &format!("{name}.out"), cfg.dim, cfg.dim, rng)?,
            view_types: cfg.view_types,
        })
    }

    /// `g(u_local + e_v)` interpolated from the local view's timesteps onto the target view's.
    pub fn predict(&self, p: &Params, u_local: &Tensor, local: &ViewSpec, target: &ViewSpec) -> Result<(Tensor, PredictCache)> {
        let view_type = local.view_type;
        if view_type >= self.view_types {
            return Err(Error::Config(format!(
                "unknown view type {view_type} (have {})",
                self.view_types
            )));
        }
        let e = p.get(self.view_emb).row(view_type).to_vec();
        let x = u_local.add_row(&e)?;
        let (h, blocks) = self.stack.forward(p, &x)?;
        let y = self.out.forward(p, &h)?;
        let (src, dst) = (local.indices(), target.indices());
        let pred = resample_time(&y, &src, &dst)?;
        Ok((
            pred,
            PredictCache {
                view_type,
                blocks,
                h,
                src,
                dst,
            },
        ))
    }

    /// Accumulates parameter gradients (including `e_v`); returns d u_local.
    pub fn backward(&self, p: &Params, cache: &PredictCache, dpred: &Tensor, g: &mut Grads) -> Result<Tensor> {
        let dy = resample_time_bwd(dpred, &cache.src, &cache.dst);
        let dh = self.out.backward(p, &cache.h, &dy, g)?;
        let dx = self.stack.backward(p, &cache.blocks, &dh, g)?;
        let d = dx.cols();
        let mut de = vec![0.0; self.view_types * d];
        for (slot, v) in de[cache.view_type * d..(cache.view_type + 1) * d]
            .iter_mut()
            .zip(dx.sum_rows())
        {
            *slot = v;
        }
        g.accumulate(self.view_emb, &de);
        Ok(dx)
    }
}

/// Sum over views of the mean squared error against a constant target.
///
/// Returns the loss and its gradient w.r.t. each prediction. The target
/// receives no gradient.
pub fn loss_pred(target: &Tensor, preds: &[Tensor]) -> Result<(f64, Vec<Tensor>)> {
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(preds.len());
    for pred in preds {
        if pred.shape() != target.shape() {
            return Err(Error::Dimension {
                op: "loss_pred",
                detail: format!("prediction {:?} vs target {:?}", pred.shape(), target.shape()),
            });
        }
        let n = target.numel() as f64;
        let diff = pred.sub(target)?;
        total += diff.data().iter().map(|d| d * d).sum::<f64>() / n;
        grads.push(diff.scale(2.0 / n));
    }
    Ok((total, grads))
}

/// Encoder and predictor registered under the `f.` and `g.` prefixes.
#[derive(Clone, Debug)]
pub struct PerceptionModel {
    pub cfg: TemporalModuleConfig,
    pub f: TemporalModule,
    pub g: Predictor,
}

pub const ENCODER_PREFIX: &str = "f";
pub const PREDICTOR_PREFIX: &str = "g";

impl PerceptionModel {
    pub fn new(store: &mut ParamStore, cfg: &TemporalModuleConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            f: TemporalModule::new(store, ENCODER_PREFIX, cfg, &mut rng.fork_str("f"))?,
            g: Predictor::new(store, PREDICTOR_PREFIX, cfg, &mut rng.fork_str("g"))?,
        })
    }
}

/// Full-sequence latents (N × D) for downstream stages.
pub fn encode_full(f: &TemporalModule, p: &Params, x: &Tensor) -> Result<Tensor> {
    Ok(f.encode(p, &ViewSpec::global(x.rows(), 1), x)?.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stage1Losses {
    pub l_pred: f64,
    pub l_sig: f64,
    pub total: f64,
}

/// Random choices of one Stage-1 step, fixed so the objective is a
/// deterministic function of the parameters.
#[derive(Clone, Debug)]
pub struct Stage1Plan {
    pub views: Vec<(ViewSpec, Vec<ViewSpec>)>,
    pub directions: Tensor,
}

impl Stage1Plan {
    pub fn sample(
        batch: &[&Tensor],
        cfg: &TemporalModuleConfig,
        policy: &ViewPolicy,
        rng: &mut Rng,
    ) -> Result<Self> {
        let views = batch
            .iter()
            .map(|x| sample_views(x.rows(), rng, policy))
            .collect::<Result<Vec<_>>>()?;
        if let Some(v) = views.iter().flat_map(|(_, l)| l).find(|v| v.view_type >= cfg.view_types) {
            return Err(Error::Config(format!(
                "view policy produces type {} but the predictor has {} view embeddings",
                v.view_type, cfg.view_types
            )));
        }
        let directions = sample_directions(cfg.directions, cfg.dim, rng);
        Ok(Self { views, directions })
    }
}

/// Stage-1 objective `(1 − λ)·L_pred + λ·L_SIG` and its gradients.
///
/// `L_pred` is averaged over the batch; the regularizer sees every timestep
/// of the (constant) global latents and the local latents of the whole batch,
/// and its gradient flows only into the local branch.
pub fn stage1_objective(
    model: &PerceptionModel,
    p: &Params,
    batch: &[&Tensor],
    plan: &Stage1Plan,
) -> Result<(Stage1Losses, Grads)> {
    let lambda = model.cfg.lambda;
    let b = batch.len().max(1) as f64;
    let mut grads = Grads::zeros_like(p);
    let mut l_pred = 0.0;
    let mut pool: Vec<Tensor> = Vec::new();
    let mut local_rows = Vec::new(); // (video, view, first row in pool)
    let mut caches = Vec::new();
    let mut offset = 0usize;
    for (vi, (x, (global, locals))) in batch.iter().zip(&plan.views).enumerate() {
        let (u_g, _) = model.f.encode(p, global, x)?;
        let mut preds = Vec::with_capacity(locals.len());
        let mut vcaches = Vec::with_capacity(locals.len());
        offset += u_g.rows();
        pool.push(u_g.clone());
        for (li, local) in locals.iter().enumerate() {
            let (u_l, ec) = model.f.encode(p, local, x)?;
            let (pred, pc) = model.g.predict(p, &u_l, local, global)?;
            preds.push(pred);
            local_rows.push((vi, li, offset));
            offset += u_l.rows();
            pool.push(u_l);
            vcaches.push((ec, pc));
        }
        let (lp, dpreds) = loss_pred(&u_g, &preds)?;
        l_pred += lp / b;
        caches.push((vcaches, dpreds));
    }
    let refs: Vec<&Tensor> = pool.iter().collect();
    let samples = Tensor::vstack(&refs)?;
    let (l_sig, dsamples) = sigreg_with_directions(&samples, &plan.directions, &model.cfg.divergence)?;
    let total = (1.0 - lambda) * l_pred + lambda * l_sig;
    for &(vi, li, start) in &local_rows {
        let (vcaches, dpreds) = &caches[vi];
        let (ec, pc) = &vcaches[li];
        let mut du = if lambda < 1.0 {
            model.g.backward(p, pc, &dpreds[li].scale((1.0 - lambda) / b), &mut grads)?
        } else {
            Tensor::zeros(&[ec_rows(ec), model.cfg.dim])
        };
        if lambda > 0.0 {
            let dsig = dsamples.slice_rows(start, start + du.rows())?.scale(lambda);
            du.add_assign(&dsig)?;
        }
        model.f.backward(p, ec, &du, &mut grads)?;
    }
    Ok((Stage1Losses { l_pred, l_sig, total }, grads))
}

fn ec_rows(c: &EncodeCache) -> usize {
    c.x.rows()
}

/// One optimizer step of the Stage-1 objective on `batch` (pooled features, N × D each).
pub fn stage1_step(
    store: &mut ParamStore,
    model: &PerceptionModel,
    batch: &[&Tensor],
    policy: &ViewPolicy,
    opt: &AdamW,
    rng: &mut Rng,
) -> Result<Stage1Losses> {
    let plan = Stage1Plan::sample(batch, &model.cfg, policy, rng)?;
    let (losses, grads) = stage1_objective(model, &store.params, batch, &plan)?;
    if !(losses.l_pred.is_finite() && losses.l_sig.is_finite() && losses.total.is_finite()) {
        return Err(Error::NonFinite {
            what: format!(
                "Stage-1 loss at step {} (L_pred={}, L_SIG={}, total={})",
                store.step() + 1,
                losses.l_pred,
                losses.l_sig,
                losses.total
            ),
        });
    }
    store.grads = grads;
    adamw_step(store, opt)?;
    Ok(losses)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub steps: usize,
    pub batch: usize,
    pub peak_lr: f64,
    pub warmup_frac: f64,
    pub weight_decay: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stage1LogRow {
    pub step: usize,
    pub losses: Stage1Losses,
    pub lr: f64,
}

/// Runs the Stage-1 loop over `videos` with a cosine schedule.
pub fn train_stage1(
    store: &mut ParamStore,
    model: &PerceptionModel,
    videos: &[Tensor],
    policy: &ViewPolicy,
    schedule: &TrainSchedule,
    rng: &mut Rng,
) -> Result<Vec<Stage1LogRow>> {
    if videos.is_empty() {
        return Err(Error::Empty("Stage-1 training set"));
    }
    let mut log = Vec::with_capacity(schedule.steps);
    for step in 0..schedule.steps {
        let lr = cosine_lr(step, schedule.steps, schedule.peak_lr, schedule.warmup_frac)?;
        let opt = AdamW {
            lr,
            weight_decay: schedule.weight_decay,
            ..AdamW::default()
        };
        let batch: Vec<&Tensor> = (0..schedule.batch.max(1))
            .map(|_| &videos[rng.int_range(0, videos.len() - 1)])
            .collect();
        let losses = stage1_step(store, model, &batch, policy, &opt, rng)?;
        log::debug!(
            "stage1 step {step}: L_pred={:.5} L_SIG={:.5} total={:.5} lr={lr:.2e}",
            losses.l_pred,
            losses.l_sig,
            losses.total
        );
        log.push(Stage1LogRow { step: step + 1, losses, lr });
    }
    Ok(log)
}

/// Appends rows to a `step,L_pred,L_SIG,total,lr` CSV, writing the header for a new file.
pub fn append_loss_csv(path: &Path, rows: &[Stage1LogRow]) -> Result<()> {
    let exists = path.exists() && std::fs::metadata(path)?.len() > 0;
    let mut f = std::io::BufWriter::new(std::fs::OpenOptions::new().create(true).append(true).open(path)?);
    if !exists {
        writeln!(f, "step,L_pred,L_SIG,total,lr")?;
    }
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{}",
            r.step, r.losses.l_pred, r.losses.l_sig, r.losses.total, r.lr
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Per-dimension variance of full-sequence latents pooled over all timesteps of `videos`.
pub fn latent_variance(f: &TemporalModule, p: &Params, videos: &[Tensor]) -> Result<Vec<f64>> {
    let lat = videos.iter().map(|x| encode_full(f, p, x)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Tensor> = lat.iter().collect();
    let all = Tensor::vstack(&refs)?;
    let mean = all.mean_rows();
    let n = all.rows() as f64;
    let mut var = vec![0.0; all.cols()];
    for r in 0..all.rows() {
        for (c, v) in all.row(r).iter().enumerate() {
            var[c] += (v - mean[c]).powi(2) / n;
        }
    }
    Ok(var)
}
