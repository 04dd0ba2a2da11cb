//! Stage-2 proposals and the evidence pool.
//!
//! A light self-attention head turns full-sequence latents into one
//! candidate span and objectness logit per timestep. The Top-K spans are
//! mapped to seconds, their latents cropped, and a set of learned queries
//! cross-attends to each crop to give a fixed number of evidence tokens.

mod io;

use serde::{Deserialize, Serialize};

pub use io::{read_pools, write_pools, PoolRecord, UnitRecord};

use crate::error::{Error, Result};
use crate::eval::{iou, IOU_EPS};
use crate::numerics::{
    adamw_step, cosine_lr, sigmoid, AdamW, CrossBlockCache, CrossStack, Grads, Mlp, MlpCache, ParamId,
    ParamStore, Params, Rng, SelfBlockCache, SelfStack, Tensor,
};
use crate::perception::{encode_full, EncodeCache, TemporalModule, ViewSpec};
use crate::syndata::{round_dec, step_time, VideoSample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalConfig {
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// Evidence units per pool.
    pub k: usize,
    /// Evidence tokens per unit.
    pub m: usize,
    pub see_depth: usize,
    /// Timesteps inside this central fraction of an event are positives.
    pub center_frac: f64,
    /// Weight of the objectness term.
    pub eta: f64,
    /// Half-width (normalized) of the span each timestep starts from.
    pub anchor_half_width: f64,
    /// Greedy overlap suppression during Top-K; off when `None`.
    pub diversity_iou: Option<f64>,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            heads: 2,
            mlp_ratio: 2,
            k: 8,
            m: 4,
            see_depth: 2,
            center_frac: 0.5,
            eta: 1.0,
            anchor_half_width: 0.05,
            diversity_iou: None,
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m == 0 {
            return Err(Error::Config("K and M must be at least 1".into()));
        }
        if !(self.center_frac > 0.0 && self.center_frac <= 1.0) {
            return Err(Error::Config(format!("center fraction {} outside (0,1]", self.center_frac)));
        }
        if self.eta < 0.0 {
            return Err(Error::Config(format!("eta {} is negative", self.eta)));
        }
        if !(self.anchor_half_width > 0.0 && self.anchor_half_width < 0.5) {
            return Err(Error::Config("anchor half width must lie in (0, 0.5)".into()));
        }
        if let Some(t) = self.diversity_iou {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("diversity IoU {t} outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// One dense candidate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    /// Normalized `(start, end)` with `0 ≤ start ≤ end ≤ 1`.
    pub span: (f64, f64),
    /// Raw objectness logit.
    pub objectness: f64,
    pub source_index: usize,
    /// Set when the entry repeats the best proposal to fill a short pool.
    pub padded: bool,
}

/// Normalized center time of every timestep.
pub fn timestep_positions(n: usize, fps: f64, duration_s: f64) -> Vec<f64> {
    (0..n).map(|i| step_time(i, fps, duration_s) / duration_s).collect()
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-4, 1.0 - 1e-4);
    (p / (1.0 - p)).ln()
}

/// Dense proposal head: self-attention stack then an MLP with three outputs
/// (start offset, end offset, objectness).
#[derive(Clone, Debug)]
pub struct ProposalHead {
    pub stack: SelfStack,
    pub mlp: Mlp,
    pub anchor_half_width: f64,
}

#[derive(Clone, Debug)]
pub struct ProposeCache {
    blocks: Vec<SelfBlockCache>,
    mlp: MlpCache,
    /// `(σ'(start), σ'(end), swapped)` per timestep.
    jac: Vec<(f64, f64, bool)>,
}

pub const HEAD_PREFIX: &str = "h";
pub const SEE_PREFIX: &str = "see";

impl ProposalHead {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, cfg: &ProposalConfig, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            stack: SelfStack::new(store, &format!("{name}.blocks"), cfg.depth, dim, cfg.heads, cfg.mlp_ratio, rng)?,
            mlp: Mlp::new(store, &format!("{name}.mlp"), dim, dim * cfg.mlp_ratio, 3, rng)?,
            anchor_half_width: cfg.anchor_half_width,
        })
    }

    /// One proposal per row of `u`. Each span is `σ(o + anchor)` per endpoint,
    /// where the anchors are the logits of a short window around the
    /// timestep's own position, followed by the ordering fix.
    pub fn propose(&self, p: &Params, u: &Tensor, positions: &[f64]) -> Result<(Vec<Proposal>, ProposeCache)> {
        if positions.len() != u.rows() {
            return Err(Error::Dimension {
                op: "propose",
                detail: format!("{} positions for {} timesteps", positions.len(), u.rows()),
            });
        }
        let (h, blocks) = self.stack.forward(p, u)?;
        let (out, mlp) = self.mlp.forward(p, &h)?;
        let mut props = Vec::with_capacity(u.rows());
        let mut jac = Vec::with_capacity(u.rows());
        for (i, &pos) in positions.iter().enumerate() {
            let o = out.row(i);
            let a = sigmoid(o[0] + logit(pos - self.anchor_half_width));
            let b = sigmoid(o[1] + logit(pos + self.anchor_half_width));
            let swapped = a > b;
            let span = if swapped { (b, a) } else { (a, b) };
            jac.push((a * (1.0 - a), b * (1.0 - b), swapped));
            props.push(Proposal {
                span,
                objectness: o[2],
                source_index: i,
                padded: false,
            });
        }
        Ok((props, ProposeCache { blocks, mlp, jac }))
    }

    /// Backward from per-proposal gradients `(d start, d end, d objectness)`; returns d u.
    pub fn backward(&self, p: &Params, cache: &ProposeCache, dprops: &[[f64; 3]], g: &mut Grads) -> Result<Tensor> {
        let mut dout = Tensor::zeros(&[dprops.len(), 3]);
        for (i, (d, &(ja, jb, swapped))) in dprops.iter().zip(&cache.jac).enumerate() {
            let (da, db) = if swapped { (d[1], d[0]) } else { (d[0], d[1]) };
            dout.row_mut(i).copy_from_slice(&[da * ja, db * jb, d[2]]);
        }
        let dh = self.mlp.backward(p, &cache.mlp, &dout, g)?;
        self.stack.backward(p, &cache.blocks, &dh, g)
    }
}

/// Descending objectness (`-0.0 == 0.0`), then ascending source index.
fn rank_order(a: &Proposal, b: &Proposal) -> std::cmp::Ordering {
    b.objectness
        .partial_cmp(&a.objectness)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.source_index.cmp(&b.source_index))
}

/// `K` highest-objectness proposals, ties to the lower source index.
///
/// With `diversity_iou = Some(t)`, a candidate whose span overlaps an already
/// selected one with IoU above `t` is deferred; deferred candidates fill any
/// remaining slots in score order. When fewer than `K` proposals exist the
/// best one is repeated and flagged as padding.
pub fn topk_select(proposals: &[Proposal], k: usize, diversity_iou: Option<f64>) -> Result<Vec<Proposal>> {
    if proposals.is_empty() {
        return Err(Error::Empty("proposal list"));
    }
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let mut order: Vec<&Proposal> = proposals.iter().collect();
    order.sort_by(|a, b| rank_order(a, b));
    let mut picked: Vec<Proposal> = Vec::with_capacity(k);
    match diversity_iou {
        None => picked.extend(order.iter().take(k).map(|p| **p)),
        Some(t) => {
            let mut deferred = Vec::new();
            for p in &order {
                if picked.len() == k {
                    break;
                }
                if picked.iter().any(|q| iou(q.span, p.span) > t) {
                    deferred.push(**p);
                } else {
                    picked.push(**p);
                }
            }
            let room = k - picked.len();
            picked.extend(deferred.into_iter().take(room));
            picked.sort_by(|a, b| rank_order(a, b));
        }
    }
    let best = picked[0];
    while picked.len() < k {
        picked.push(Proposal { padded: true, ..best });
    }
    Ok(picked)
}

/// Index of the interval whose central `frac` contains `pos`, if any.
pub fn center_match(pos: f64, gt: &[(f64, f64)], frac: f64) -> Option<usize> {
    gt.iter().position(|&(s, e)| {
        let c = 0.5 * (s + e);
        (pos - c).abs() <= 0.5 * frac * (e - s) + 1e-12
    })
}

/// Stage-2 loss terms and the gradient w.r.t. each proposal's
/// `(start, end, objectness)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Loss {
    pub total: f64,
    pub reg: f64,
    pub score: f64,
    pub positives: usize,
    /// Set when no timestep is a positive (regression term is zero).
    pub no_positives: bool,
    pub grads: Vec<[f64; 3]>,
}

/// `(1 − IoU)` and its gradient w.r.t. the predicted endpoints.
fn iou_loss_grad(a: (f64, f64), b: (f64, f64)) -> (f64, f64, f64) {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union <= 0.0 {
        return (1.0 - iou(a, b), 0.0, 0.0);
    }
    let (di_ds, di_de) = if inter > 0.0 {
        (if a.0 > b.0 { -1.0 } else { 0.0 }, if a.1 < b.1 { 1.0 } else { 0.0 })
    } else {
        (0.0, 0.0)
    };
    let du_ds = -1.0 - di_ds;
    let du_de = 1.0 - di_de;
    let v = inter / union;
    let dv_ds = (di_ds * union - inter * du_ds) / (union * union);
    let dv_de = (di_de * union - inter * du_de) / (union * union);
    (1.0 - v, -dv_ds, -dv_de)
}

/// Regression over center positives (mean of `|Δstart| + |Δend| + (1 − IoU)`)
/// plus `η` times the mean binary cross-entropy of every timestep's
/// objectness against `IoU(span, matched interval)` for positives and 0
/// otherwise. The soft targets are constants.
pub fn stage2_loss(
    proposals: &[Proposal],
    positions: &[f64],
    gt: &[(f64, f64)],
    center_frac: f64,
    eta: f64,
) -> Result<Stage2Loss> {
    if gt.is_empty() {
        return Err(Error::Empty("ground-truth intervals"));
    }
    if proposals.len() != positions.len() {
        return Err(Error::Dimension {
            op: "stage2_loss",
            detail: format!("{} proposals for {} positions", proposals.len(), positions.len()),
        });
    }
    let n = proposals.len() as f64;
    let matched: Vec<Option<usize>> = positions.iter().map(|&t| center_match(t, gt, center_frac)).collect();
    let positives = matched.iter().filter(|m| m.is_some()).count();
    let mut grads = vec![[0.0; 3]; proposals.len()];
    let mut reg = 0.0;
    let mut score = 0.0;
    for (i, (prop, m)) in proposals.iter().zip(&matched).enumerate() {
        let target = match m {
            Some(j) => {
                let g = gt[*j];
                let (s, e) = prop.span;
                let np = positives as f64;
                let (l_iou, ds, de) = iou_loss_grad(prop.span, g);
                reg += ((s - g.0).abs() + (e - g.1).abs() + l_iou) / np;
                grads[i][0] += (sign(s - g.0) + ds) / np;
                grads[i][1] += (sign(e - g.1) + de) / np;
                iou(prop.span, g)
            }
            None => 0.0,
        };
        let c = prop.objectness;
        // BCE with logits: softplus(c) − y·c
        let softplus = c.max(0.0) + (-c.abs()).exp().ln_1p();
        score += (softplus - target * c) / n;
        grads[i][2] = eta * (sigmoid(c) - target) / n;
    }
    if positives == 0 {
        log::warn!("stage-2 batch has no positive timesteps; regression term is zero");
    }
    Ok(Stage2Loss {
        total: reg + eta * score,
        reg,
        score,
        positives,
        no_positives: positives == 0,
        grads,
    })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Normalized span to seconds on a 0.1 s grid inside `[0, duration]`, widening
/// a collapsed interval to 0.1 s.
pub fn to_metric_time(span: (f64, f64), duration_s: f64) -> (f64, f64) {
    let last = (duration_s * 10.0 + 1e-9).floor() / 10.0;
    let mut s = round_dec(span.0 * duration_s, 1).clamp(0.0, last);
    let mut e = round_dec(span.1 * duration_s, 1).clamp(0.0, last);
    if e <= s {
        if round_dec(s + 0.1, 1) <= last {
            e = round_dec(s + 0.1, 1);
        } else {
            e = last;
            s = round_dec(last - 0.1, 1).max(0.0);
        }
    }
    (s, e)
}

/// Row range `[first, last]` of `u` covered by `interval_s`:
/// `floor(start·fps) ..= ceil(end·fps) − 1`, clamped, at least one row.
pub fn crop_rows(n: usize, interval_s: (f64, f64), fps: f64) -> (usize, usize) {
    let last_row = n.saturating_sub(1) as i64;
    let first = ((interval_s.0 * fps + 1e-9).floor() as i64).clamp(0, last_row);
    let last = (((interval_s.1 * fps - 1e-9).ceil() as i64) - 1).clamp(0, last_row);
    let first = first as usize;
    (first, (last as usize).max(first))
}

pub fn crop_segment(u: &Tensor, interval_s: (f64, f64), fps: f64) -> Result<Tensor> {
    let (a, b) = crop_rows(u.rows(), interval_s, fps);
    u.slice_rows(a, b + 1)
}

/// Span evidence encoder: `M` learned queries cross-attending to a crop.
#[derive(Clone, Debug)]
pub struct SpanEvidenceEncoder {
    pub queries: ParamId,
    pub stack: CrossStack,
    pub m: usize,
}

impl SpanEvidenceEncoder {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, cfg: &ProposalConfig, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            queries: store.add_normal(&format!("{name}.queries"), &[cfg.m, dim], 1.0, rng)?,
            stack: CrossStack::new(store, &format!("{name}.blocks"), cfg.see_depth, dim, cfg.heads, cfg.mlp_ratio, rng)?,
            m: cfg.m,
        })
    }

    /// Evidence tokens (M × D) of a crop `u_k` (N_k × D, N_k ≥ 1).
    pub fn encode(&self, p: &Params, u_k: &Tensor) -> Result<(Tensor, Vec<CrossBlockCache>)> {
        if u_k.rows() == 0 {
            return Err(Error::Empty("evidence crop"));
        }
        self.stack.forward(p, p.get(self.queries), u_k)
    }

    /// Accumulates parameter gradients (including the queries); returns d u_k.
    pub fn backward(
        &self,
        p: &Params,
        caches: &[CrossBlockCache],
        dtokens: &Tensor,
        crop_shape: &[usize],
        g: &mut Grads,
    ) -> Result<Tensor> {
        let (dq, dmem) = self.stack.backward(p, caches, dtokens, crop_shape, g)?;
        g.accumulate(self.queries, dq.data());
        Ok(dmem)
    }
}

/// One citable candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct EvidenceUnit {
    /// 1-based id rendered as `<Span_k>`.
    pub span_id: usize,
    pub interval: (f64, f64),
    pub tokens: Tensor,
    pub objectness: f64,
    pub span: (f64, f64),
    pub padded: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvidencePool {
    pub video_id: String,
    pub duration_s: f64,
    pub fps: f64,
    pub units: Vec<EvidenceUnit>,
}

impl EvidencePool {
    pub fn k(&self) -> usize {
        self.units.len()
    }

    pub fn intervals(&self) -> Vec<(f64, f64)> {
        self.units.iter().map(|u| u.interval).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, u) in self.units.iter().enumerate() {
            let ok = u.span_id == i + 1
                && 0.0 <= u.interval.0
                && u.interval.0 < u.interval.1
                && u.interval.1 <= self.duration_s + 1e-9
                && u.tokens.is_finite();
            if !ok {
                return Err(Error::Config(format!(
                    "pool {} unit {} violates the evidence-unit invariants",
                    self.video_id,
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Modules that turn features into an evidence pool.
#[derive(Clone, Debug)]
pub struct PoolModel {
    pub f: TemporalModule,
    pub h: ProposalHead,
    pub see: SpanEvidenceEncoder,
    pub cfg: ProposalConfig,
}

impl PoolModel {
    /// Registers the head and SEE under `h.` / `see.` next to an existing encoder.
    pub fn new(store: &mut ParamStore, f: TemporalModule, cfg: &ProposalConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let dim = f.dim;
        Ok(Self {
            h: ProposalHead::new(store, HEAD_PREFIX, dim, cfg, &mut rng.fork_str("h"))?,
            see: SpanEvidenceEncoder::new(store, SEE_PREFIX, dim, cfg, &mut rng.fork_str("see"))?,
            f,
            cfg: cfg.clone(),
        })
    }

    /// Dense proposals of a pooled feature sequence.
    pub fn dense(&self, p: &Params, x: &Tensor, fps: f64, duration_s: f64) -> Result<(Tensor, Vec<Proposal>)> {
        let u = encode_full(&self.f, p, x)?;
        let pos = timestep_positions(u.rows(), fps, duration_s);
        let (props, _) = self.h.propose(p, &u, &pos)?;
        Ok((u, props))
    }

    /// Query-agnostic evidence pool of one video.
    pub fn build_pool(&self, p: &Params, video: &VideoSample) -> Result<EvidencePool> {
        let x = video.pooled();
        let duration = video.script.duration_s;
        let (u, props) = self.dense(p, &x, video.fps, duration)?;
        let top = topk_select(&props, self.cfg.k, self.cfg.diversity_iou)?;
        let units = top
            .iter()
            .enumerate()
            .map(|(i, prop)| {
                let interval = to_metric_time(prop.span, duration);
                let crop = crop_segment(&u, interval, video.fps)?;
                let (tokens, _) = self.see.encode(p, &crop)?;
                Ok(EvidenceUnit {
                    span_id: i + 1,
                    interval,
                    tokens,
                    objectness: prop.objectness,
                    span: prop.span,
                    padded: prop.padded,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let pool = EvidencePool {
            video_id: video.id.clone(),
            duration_s: duration,
            fps: video.fps,
            units,
        };
        pool.validate()?;
        Ok(pool)
    }
}

/// Everything needed to backpropagate a Stage-2 loss into `f` and `h`.
pub struct Stage2Forward {
    pub proposals: Vec<Proposal>,
    pub positions: Vec<f64>,
    enc: EncodeCache,
    prop: ProposeCache,
}

impl PoolModel {
    pub fn stage2_forward(&self, p: &Params, x: &Tensor, fps: f64, duration_s: f64) -> Result<Stage2Forward> {
        let (u, enc) = self.f.encode(p, &ViewSpec::global(x.rows(), 1), x)?;
        let positions = timestep_positions(u.rows(), fps, duration_s);
        let (proposals, prop) = self.h.propose(p, &u, &positions)?;
        Ok(Stage2Forward {
            proposals,
            positions,
            enc,
            prop,
        })
    }

    pub fn stage2_backward(&self, p: &Params, fwd: &Stage2Forward, dprops: &[[f64; 3]], g: &mut Grads) -> Result<()> {
        let du = self.h.backward(p, &fwd.prop, dprops, g)?;
        self.f.backward(p, &fwd.enc, &du, g)?;
        Ok(())
    }

    /// Stage-2 loss of one video and its parameter gradients.
    pub fn stage2_objective(&self, p: &Params, x: &Tensor, fps: f64, duration_s: f64, gt: &[(f64, f64)]) -> Result<(Stage2Loss, Grads)> {
        let fwd = self.stage2_forward(p, x, fps, duration_s)?;
        let loss = stage2_loss(&fwd.proposals, &fwd.positions, gt, self.cfg.center_frac, self.cfg.eta)?;
        let mut g = Grads::zeros_like(p);
        self.stage2_backward(p, &fwd, &loss.grads, &mut g)?;
        Ok((loss, g))
    }
}

/// Labeled video for Stage-2: pooled features plus normalized event intervals.
#[derive(Clone, Debug)]
pub struct LabeledVideo {
    pub features: Tensor,
    pub gt: Vec<(f64, f64)>,
    pub fps: f64,
    pub duration_s: f64,
}

impl LabeledVideo {
    pub fn from_video(v: &VideoSample) -> Self {
        Self {
            features: v.pooled(),
            gt: v.script.normalized_intervals(),
            fps: v.fps,
            duration_s: v.script.duration_s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stage2LogRow {
    pub step: usize,
    pub total: f64,
    pub reg: f64,
    pub score: f64,
    pub lr: f64,
}

/// Stage-2 schedule; `encoder_lr_scale` multiplies the temporal encoder's rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage2Schedule {
    pub steps: usize,
    pub batch: usize,
    pub peak_lr: f64,
    pub warmup_frac: f64,
    pub weight_decay: f64,
    pub encoder_lr_scale: f64,
}

pub fn train_stage2(
    store: &mut ParamStore,
    model: &PoolModel,
    data: &[LabeledVideo],
    schedule: &Stage2Schedule,
    rng: &mut Rng,
) -> Result<Vec<Stage2LogRow>> {
    if data.is_empty() {
        return Err(Error::Empty("Stage-2 training set"));
    }
    store.set_lr_scale(&format!("{}.", crate::perception::ENCODER_PREFIX), schedule.encoder_lr_scale);
    store.set_lr_scale(&format!("{SEE_PREFIX}."), 0.0);
    let mut log = Vec::with_capacity(schedule.steps);
    let b = schedule.batch.max(1);
    for step in 0..schedule.steps {
        let lr = cosine_lr(step, schedule.steps, schedule.peak_lr, schedule.warmup_frac)?;
        let mut grads = store.zero_grads();
        let (mut total, mut reg, mut score) = (0.0, 0.0, 0.0);
        for _ in 0..b {
            let v = &data[rng.int_range(0, data.len() - 1)];
            let (loss, g) = model.stage2_objective(&store.params, &v.features, v.fps, v.duration_s, &v.gt)?;
            grads.merge(&g);
            total += loss.total / b as f64;
            reg += loss.reg / b as f64;
            score += loss.score / b as f64;
        }
        if !total.is_finite() {
            return Err(Error::NonFinite {
                what: format!("Stage-2 loss at step {} (reg={reg}, score={score})", step + 1),
            });
        }
        grads.scale(1.0 / b as f64);
        store.grads = grads;
        let opt = AdamW {
            lr,
            weight_decay: schedule.weight_decay,
            ..AdamW::default()
        };
        adamw_step(store, &opt)?;
        log::debug!("stage2 step {step}: total={total:.5} reg={reg:.5} score={score:.5}");
        log.push(Stage2LogRow {
            step: step + 1,
            total,
            reg,
            score,
            lr,
        });
    }
    store.set_lr_scale("", 1.0);
    Ok(log)
}

/// Average precision of `scores` against binary `labels`. Tied scores are
/// ranked together: every item in a tie group sees the group's precision.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let total_pos = labels.iter().filter(|&&l| l).count();
    if total_pos == 0 {
        return Err(Error::Empty("positive labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut seen, mut tp, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut group_tp = 0;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            group_tp += labels[order[j]] as usize;
            j += 1;
        }
        seen += j - i;
        tp += group_tp;
        ap += group_tp as f64 / total_pos as f64 * (tp as f64 / seen as f64);
        i = j;
    }
    Ok(ap)
}

/// Average precision of dense objectness against center labels.
pub fn center_ap(scores: &[f64], positions: &[f64], gt: &[(f64, f64)], center_frac: f64) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::Empty("ground-truth intervals"));
    }
    let labels: Vec<bool> = positions.iter().map(|&t| center_match(t, gt, center_frac).is_some()).collect();
    average_precision(scores, &labels)
}

/// Greedy one-to-one matching by descending IoU; returns the IoU assigned to
/// each ground-truth interval (0 when unmatched).
pub fn greedy_match(spans: &[(f64, f64)], gt: &[(f64, f64)]) -> Vec<f64> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(spans.len() * gt.len());
    for (j, &g) in gt.iter().enumerate() {
        for (i, &s) in spans.iter().enumerate() {
            pairs.push((iou(s, g), j, i));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_used = vec![false; gt.len()];
    let mut sp_used = vec![false; spans.len()];
    let mut out = vec![0.0; gt.len()];
    for (v, j, i) in pairs {
        if !gt_used[j] && !sp_used[i] {
            gt_used[j] = true;
            sp_used[i] = true;
            out[j] = v;
        }
    }
    out
}

/// Mean over ground-truth intervals of the greedily matched IoU.
pub fn matched_miou(spans: &[(f64, f64)], gt: &[(f64, f64)]) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::Empty("ground-truth intervals"));
    }
    let m = greedy_match(spans, gt);
    Ok(m.iter().sum::<f64>() / gt.len() as f64)
}

/// Standalone proposal quality on held-out videos.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalMetrics {
    pub videos: usize,
    pub events: usize,
    /// Fraction of events with a pool unit at IoU ≥ `retrieve_iou`.
    pub retrieve_at_k: f64,
    pub retrieve_iou: f64,
    /// Mean per-video AP of dense objectness against center labels.
    pub center_ap: f64,
    /// Mean per-video greedily matched IoU of the Top-K spans.
    pub matched_miou: f64,
}

pub fn evaluate_proposals(model: &PoolModel, p: &Params, videos: &[VideoSample], retrieve_iou: f64) -> Result<ProposalMetrics> {
    if videos.is_empty() {
        return Err(Error::Empty("proposal evaluation set"));
    }
    let (mut hits, mut events, mut ap, mut mm) = (0usize, 0usize, 0.0, 0.0);
    for v in videos {
        let duration = v.script.duration_s;
        let (_, dense) = model.dense(p, &v.pooled(), v.fps, duration)?;
        let gt = v.script.normalized_intervals();
        let positions = timestep_positions(dense.len(), v.fps, duration);
        let scores: Vec<f64> = dense.iter().map(|d| d.objectness).collect();
        ap += center_ap(&scores, &positions, &gt, model.cfg.center_frac)?;
        let pool = model.build_pool(p, v)?;
        let spans: Vec<(f64, f64)> = pool.units.iter().map(|u| u.span).collect();
        mm += matched_miou(&spans, &gt)?;
        for e in &v.script.events {
            let best = pool.units.iter().map(|u| iou(u.interval, (e.start_s, e.end_s))).fold(0.0, f64::max);
            hits += (best >= retrieve_iou - IOU_EPS) as usize;
            events += 1;
        }
    }
    let n = videos.len() as f64;
    Ok(ProposalMetrics {
        videos: videos.len(),
        events,
        retrieve_at_k: hits as f64 / events.max(1) as f64,
        retrieve_iou,
        center_ap: ap / n,
        matched_miou: mm / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prop(i: usize, s: f64) -> Proposal {
        Proposal {
            span: (0.0, 1.0),
            objectness: s,
            source_index: i,
            padded: false,
        }
    }

    #[test]
    fn topk_tie_break_and_padding() {
        let props: Vec<_> = [0.1, 0.9, 0.5, 0.9, 0.2].iter().enumerate().map(|(i, &s)| prop(i, s)).collect();
        let top = topk_select(&props, 2, None).unwrap();
        assert_eq!(top.iter().map(|p| p.source_index).collect::<Vec<_>>(), vec![1, 3]);
        let all = topk_select(&props, 5, None).unwrap();
        assert_eq!(all.iter().map(|p| p.source_index).collect::<Vec<_>>(), vec![1, 3, 2, 4, 0]);
        let padded = topk_select(&props[..2], 4, None).unwrap();
        assert_eq!(padded.iter().filter(|p| p.padded).count(), 2);
        assert!(padded[2..].iter().all(|p| p.source_index == 1));
        assert!(topk_select(&[], 3, None).is_err());
    }

    #[test]
    fn diversity_defers_overlapping_spans() {
        let mut props = vec![prop(0, 0.9), prop(1, 0.8), prop(2, 0.1)];
        props[2].span = (0.0, 0.1);
        let top = topk_select(&props, 2, Some(0.5)).unwrap();
        assert_eq!(top.iter().map(|p| p.source_index).collect::<Vec<_>>(), vec![0, 2]);
        let top = topk_select(&props, 3, Some(0.5)).unwrap();
        assert_eq!(top.iter().map(|p| p.source_index).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn single_positive_loss_arithmetic() {
        let p = Proposal {
            span: (0.2, 0.5),
            objectness: 0.0,
            source_index: 0,
            padded: false,
        };
        let l = stage2_loss(&[p], &[0.45], &[(0.3, 0.6)], 0.5, 0.0).unwrap();
        assert!((l.reg - (0.2 + 0.5)).abs() < 1e-12, "{}", l.reg);
        assert_eq!(l.total, l.reg);
        let exact = Proposal { span: (0.3, 0.6), ..p };
        assert_eq!(stage2_loss(&[exact], &[0.45], &[(0.3, 0.6)], 0.5, 1.0).unwrap().reg, 0.0);
        let none = stage2_loss(&[p], &[0.05], &[(0.3, 0.6)], 0.5, 1.0).unwrap();
        assert!(none.no_positives && none.reg == 0.0);
    }

    #[test]
    fn metric_time_rules() {
        assert_eq!(to_metric_time((0.0, 1.0), 60.0), (0.0, 60.0));
        assert_eq!(to_metric_time((0.5, 0.5), 60.0), (30.0, 30.1));
        assert_eq!(to_metric_time((0.333, 0.667), 55.15), (18.4, 36.8));
        assert_eq!(to_metric_time((1.0, 1.0), 55.15), (55.0, 55.1));
    }

    #[test]
    fn crop_rules() {
        assert_eq!(crop_rows(10, (0.0, 10.0), 1.0), (0, 9));
        assert_eq!(crop_rows(10, (2.0, 5.0), 1.0), (2, 4));
        assert_eq!(crop_rows(10, (3.0, 3.0), 1.0), (3, 3));
        assert_eq!(crop_rows(10, (12.0, 15.0), 1.0), (9, 9));
    }

    #[test]
    fn perfect_scores_give_unit_ap() {
        let labels = [true, false, true, false];
        assert_eq!(average_precision(&[1.0, 0.0, 1.0, 0.0], &labels).unwrap(), 1.0);
        // all tied: precision is the base rate
        assert_eq!(average_precision(&[0.5; 4], &labels).unwrap(), 0.5);
    }
}
