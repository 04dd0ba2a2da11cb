//! Identify-then-measure grounding over an evidence pool.
//!
//! A small surrogate stands in for the language model: an identify head
//! scores every unit against the query embedding and a measure head shifts
//! the cited unit's endpoints by bounded fractions of its length. Responses
//! go through the same text interface a language model would use, so a
//! prediction is always exactly one `<Span_k>` citation plus an interval.

mod template;

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use template::{
    parse_response, render_answer, render_response, serialize_instruction, span_token, ParsedResponse, PromptMode,
};

use crate::error::{Error, Result};
use crate::eval::iou;
use crate::numerics::{
    adamw_step, cosine_lr, softmax, AdamW, CrossBlockCache, Grads, Linear, Mlp, MlpCache, ParamStore, Params, Rng,
    Tensor,
};
use crate::perception::{ViewSpec, ENCODER_PREFIX};
use crate::proposal::{
    crop_rows, stage2_loss, timestep_positions, to_metric_time, topk_select, EvidencePool, EvidenceUnit,
    LabeledVideo, PoolModel, HEAD_PREFIX, SEE_PREFIX,
};
use crate::syndata::QuerySample;

pub const GROUNDER_PREFIX: &str = "ground";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrounderConfig {
    pub hidden: usize,
    /// Sinusoid frequencies per endpoint in the interval code.
    pub interval_freqs: usize,
    /// Each endpoint moves by at most this fraction of the cited length.
    pub offset_range: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Learning-rate multiplier of the encoder and proposal head during joint training.
    pub perception_lr_scale: f64,
}

impl Default for GrounderConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            interval_freqs: 4,
            offset_range: 0.5,
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.1,
            perception_lr_scale: 0.1,
        }
    }
}

impl GrounderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.interval_freqs == 0 {
            return Err(Error::Config("grounder hidden width and interval_freqs must be >= 1".into()));
        }
        // Beyond one half the two endpoints could cross.
        if !(self.offset_range > 0.0 && self.offset_range <= 0.5) {
            return Err(Error::Config(format!("offset_range {} outside (0, 0.5]", self.offset_range)));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("perception_lr_scale", self.perception_lr_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which unit the grounder should cite for a ground-truth interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CitationTarget {
    pub id: usize,
    pub iou: f64,
    /// No unit overlaps the target; the nearest center was used instead.
    pub fallback: bool,
}

/// Best-overlapping unit (lowest id on ties); nearest center when nothing overlaps.
pub fn assign_citation_target(pool: &EvidencePool, gt: (f64, f64)) -> Result<CitationTarget> {
    if pool.units.is_empty() {
        return Err(Error::Empty("evidence pool"));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, u) in pool.units.iter().enumerate() {
        let v = iou(u.interval, gt);
        if v > best.1 {
            best = (i, v);
        }
    }
    if best.1 > 0.0 {
        return Ok(CitationTarget {
            id: pool.units[best.0].span_id,
            iou: best.1,
            fallback: false,
        });
    }
    let center = |iv: (f64, f64)| 0.5 * (iv.0 + iv.1);
    let mut near = (0, f64::INFINITY);
    for (i, u) in pool.units.iter().enumerate() {
        let d = (center(u.interval) - center(gt)).abs();
        if d < near.1 {
            near = (i, d);
        }
    }
    Ok(CitationTarget {
        id: pool.units[near.0].span_id,
        iou: 0.0,
        fallback: true,
    })
}

/// Sinusoidal code of a duration-normalized interval.
pub fn interval_code(interval: (f64, f64), duration_s: f64, freqs: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(4 * freqs);
    for x in [interval.0 / duration_s, interval.1 / duration_s] {
        for j in 0..freqs {
            let w = std::f64::consts::PI * (1u64 << j) as f64;
            out.push((w * x).sin());
            out.push((w * x).cos());
        }
    }
    out
}

fn mean_token(tokens: &Tensor) -> Vec<f64> {
    tokens.mean_rows()
}

/// `[q, p̄, q ⊙ p̄, code]`
fn unit_features(q: &[f64], pbar: &[f64], code: &[f64]) -> Vec<f64> {
    let mut f = Vec::with_capacity(3 * q.len() + code.len());
    f.extend_from_slice(q);
    f.extend_from_slice(pbar);
    f.extend(q.iter().zip(pbar).map(|(a, b)| a * b));
    f.extend_from_slice(code);
    f
}

/// Accumulates `(dq, dp̄)` from the gradient of one feature row.
fn unit_features_bwd(q: &[f64], pbar: &[f64], df: &[f64], dq: &mut [f64], dpbar: &mut [f64]) {
    let d = q.len();
    for j in 0..d {
        dq[j] += df[j] + df[2 * d + j] * pbar[j];
        dpbar[j] += df[d + j] + df[2 * d + j] * q[j];
    }
}

/// Trainable identify/measure heads.
#[derive(Clone, Debug)]
pub struct SurrogateGrounder {
    pub query: Linear,
    pub identify: Mlp,
    pub measure: Mlp,
    pub dim: usize,
    /// Evidence tokens per unit; the measure head reads them unpooled.
    pub m: usize,
    pub query_dim: usize,
    pub interval_freqs: usize,
    pub offset_range: f64,
}

#[derive(Clone, Debug)]
pub struct IdentifyCache {
    q_in: Tensor,
    q: Vec<f64>,
    pbars: Vec<Vec<f64>>,
    mlp: MlpCache,
    pub logits: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MeasureCache {
    q: Vec<f64>,
    pbar: Vec<f64>,
    mlp: MlpCache,
    /// `dT/do` per endpoint, zero where clamped.
    jac: [f64; 2],
    pub z: usize,
}

impl SurrogateGrounder {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        m: usize,
        query_dim: usize,
        cfg: &GrounderConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let feat = 3 * dim + 4 * cfg.interval_freqs;
        Ok(Self {
            query: Linear::new(store, &format!("{name}.query"), query_dim, dim, &mut rng.fork(1))?,
            identify: Mlp::new(store, &format!("{name}.identify"), feat, cfg.hidden, 1, &mut rng.fork(2))?,
            // mean pooling hides which token saw which part of the crop; boundaries need that
            measure: Mlp::new(store, &format!("{name}.measure"), feat + m * dim, cfg.hidden, 2, &mut rng.fork(3))?,
            dim,
            m,
            query_dim,
            interval_freqs: cfg.interval_freqs,
            offset_range: cfg.offset_range,
        })
    }

    fn check(&self, pool: &EvidencePool, query: &Tensor) -> Result<()> {
        if pool.units.is_empty() {
            return Err(Error::Empty("evidence pool"));
        }
        if query.numel() != self.query_dim {
            return Err(Error::Dimension {
                op: "grounder",
                detail: format!("query width {} != {}", query.numel(), self.query_dim),
            });
        }
        if let Some(u) = pool.units.iter().find(|u| u.tokens.shape() != [self.m, self.dim]) {
            return Err(Error::Dimension {
                op: "grounder",
                detail: format!("unit {} tokens {:?} != [{}, {}]", u.span_id, u.tokens.shape(), self.m, self.dim),
            });
        }
        Ok(())
    }

    fn project_query(&self, p: &Params, query: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let q_in = Tensor::new(vec![1, self.query_dim], query.data().to_vec())?;
        let q = self.query.forward(p, &q_in)?.into_data();
        Ok((q_in, q))
    }

    /// Raw identify logits, one per unit in pool order.
    pub fn identify_logits(&self, p: &Params, pool: &EvidencePool, query: &Tensor) -> Result<(Vec<f64>, IdentifyCache)> {
        self.check(pool, query)?;
        let (q_in, q) = self.project_query(p, query)?;
        let pbars: Vec<Vec<f64>> = pool.units.iter().map(|u| mean_token(&u.tokens)).collect();
        let rows: Vec<Vec<f64>> = pool
            .units
            .iter()
            .zip(&pbars)
            .map(|(u, pb)| unit_features(&q, pb, &interval_code(u.interval, pool.duration_s, self.interval_freqs)))
            .collect();
        let (out, mlp) = self.identify.forward(p, &Tensor::from_rows(&rows)?)?;
        let logits = out.into_data();
        Ok((
            logits.clone(),
            IdentifyCache {
                q_in,
                q,
                pbars,
                mlp,
                logits,
            },
        ))
    }

    /// Identification distribution over the pool.
    pub fn identify(&self, p: &Params, pool: &EvidencePool, query: &Tensor) -> Result<Vec<f64>> {
        Ok(softmax(&self.identify_logits(p, pool, query)?.0))
    }

    /// Continuous interval measured from unit `z` (1-based), clamped to the video.
    pub fn measure(&self, p: &Params, pool: &EvidencePool, z: usize, query: &Tensor) -> Result<((f64, f64), MeasureCache)> {
        self.check(pool, query)?;
        let unit = unit_by_id(pool, z)?;
        let (_, q) = self.project_query(p, query)?;
        let pbar = mean_token(&unit.tokens);
        let mut feat = unit_features(&q, &pbar, &interval_code(unit.interval, pool.duration_s, self.interval_freqs));
        feat.extend_from_slice(unit.tokens.data());
        let (out, mlp) = self.measure.forward(p, &Tensor::from_rows(&[feat])?)?;
        let len = unit.interval.1 - unit.interval.0;
        let base = [unit.interval.0, unit.interval.1];
        let mut t = [0.0; 2];
        let mut jac = [0.0; 2];
        for j in 0..2 {
            let th = out.data()[j].tanh();
            let raw = base[j] + self.offset_range * th * len;
            t[j] = raw.clamp(0.0, pool.duration_s);
            if t[j] == raw {
                jac[j] = self.offset_range * (1.0 - th * th) * len;
            }
        }
        Ok((
            (t[0], t[1]),
            MeasureCache {
                q,
                pbar,
                mlp,
                jac,
                z,
            },
        ))
    }
}

fn unit_by_id(pool: &EvidencePool, z: usize) -> Result<&EvidenceUnit> {
    pool.units
        .iter()
        .find(|u| u.span_id == z)
        .ok_or(Error::InvalidSpanId { id: z, k: pool.k() })
}

/// Stage-3 loss terms for one query plus gradients w.r.t. the evidence tokens.
#[derive(Clone, Debug)]
pub struct Stage3Loss {
    pub total: f64,
    pub id_loss: f64,
    pub time_loss: f64,
    pub target: CitationTarget,
    /// d total / d tokens, one `M × D` tensor per unit.
    pub dtokens: Vec<Tensor>,
}

/// Cross-entropy of the identify distribution against the citation target
/// plus the duration-normalized L1 error of the interval measured from the
/// target unit. Parameter gradients of `grad_scale · total` go into `g`.
pub fn stage3_loss(
    grounder: &SurrogateGrounder,
    p: &Params,
    pool: &EvidencePool,
    query: &QuerySample,
    alpha: f64,
    beta: f64,
    grad_scale: f64,
    g: &mut Grads,
) -> Result<Stage3Loss> {
    let emb = &query.query_embedding;
    let target = assign_citation_target(pool, query.target)?;
    let zi = pool.units.iter().position(|u| u.span_id == target.id).expect("target is a pool unit");
    let (logits, icache) = grounder.identify_logits(p, pool, emb)?;
    let probs = softmax(&logits);
    let id_loss = -probs[zi].max(1e-300).ln();

    let (t, mcache) = grounder.measure(p, pool, target.id, emb)?;
    let dur = pool.duration_s;
    let gt = query.target;
    let time_loss = ((t.0 - gt.0).abs() + (t.1 - gt.1).abs()) / dur;
    let total = alpha * id_loss + beta * time_loss;

    let k = pool.k();
    let d = grounder.dim;
    let mut dq = vec![0.0; d];
    let mut dpbar = vec![vec![0.0; d]; k];

    let dlogits: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(i, &pr)| grad_scale * alpha * (pr - if i == zi { 1.0 } else { 0.0 }))
        .collect();
    let dfeat = grounder.identify.backward(p, &icache.mlp, &Tensor::new(vec![k, 1], dlogits)?, g)?;
    for i in 0..k {
        unit_features_bwd(&icache.q, &icache.pbars[i], dfeat.row(i), &mut dq, &mut dpbar[i]);
    }

    let sgn = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
    let dt = [sgn(t.0 - gt.0), sgn(t.1 - gt.1)];
    let dout: Vec<f64> = (0..2).map(|j| grad_scale * beta * dt[j] / dur * mcache.jac[j]).collect();
    let dfeat = grounder.measure.backward(p, &mcache.mlp, &Tensor::new(vec![1, 2], dout)?, g)?;
    let dmeasure = dfeat.row(0);
    unit_features_bwd(&mcache.q, &mcache.pbar, dmeasure, &mut dq, &mut dpbar[zi]);
    let dflat = &dmeasure[dmeasure.len() - grounder.m * d..];

    grounder.query.backward(p, &icache.q_in, &Tensor::new(vec![1, d], dq)?, g)?;

    let m = grounder.m;
    let dtokens = dpbar
        .iter()
        .enumerate()
        .map(|(i, dp)| {
            let row: Vec<f64> = dp.iter().map(|v| v / m as f64).collect();
            let mut dt = row.repeat(m);
            if i == zi {
                dt.iter_mut().zip(dflat).for_each(|(a, b)| *a += b);
            }
            Tensor::new(vec![m, d], dt)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Stage3Loss {
        total,
        id_loss,
        time_loss,
        target,
        dtokens,
    })
}

/// Output of one grounding call.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundingOutput {
    pub cited_id: usize,
    pub interval: (f64, f64),
    pub answer: String,
    pub response: String,
    pub distribution: Vec<f64>,
    pub temperature: f64,
}

#[derive(Clone, Copy, Debug)]
pub enum Grounder<'a> {
    /// Cites the best-overlapping unit for the query's target and reports its interval unrefined.
    Oracle,
    Surrogate {
        model: &'a SurrogateGrounder,
        params: &'a Params,
    },
}

/// Index of the first maximum.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Samples from `softmax(logits / temperature)`; argmax at temperature 0.
pub fn sample_citation(logits: &[f64], temperature: f64, rng: &mut Rng) -> usize {
    if temperature <= 0.0 {
        return argmax(logits);
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let probs = softmax(&scaled);
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Cites one unit, measures its interval on the 0.1 s grid and renders the response.
pub fn ground(grounder: Grounder<'_>, pool: &EvidencePool, query: &QuerySample, temperature: f64, rng: &mut Rng) -> Result<GroundingOutput> {
    if pool.units.is_empty() {
        return Err(Error::Empty("evidence pool"));
    }
    let (cited_id, interval, distribution) = match grounder {
        Grounder::Oracle => {
            let t = assign_citation_target(pool, query.target)?;
            let dist = pool.units.iter().map(|u| if u.span_id == t.id { 1.0 } else { 0.0 }).collect();
            (t.id, unit_by_id(pool, t.id)?.interval, dist)
        }
        Grounder::Surrogate { model, params } => {
            let (logits, _) = model.identify_logits(params, pool, &query.query_embedding)?;
            let z = pool.units[sample_citation(&logits, temperature, rng)].span_id;
            let (t, _) = model.measure(params, pool, z, &query.query_embedding)?;
            let d = pool.duration_s;
            (z, to_metric_time((t.0 / d, t.1 / d), d), softmax(&logits))
        }
    };
    let answer = render_answer(&query.text, interval);
    let response = render_response(&answer, cited_id);
    Ok(GroundingOutput {
        cited_id,
        interval,
        answer,
        response,
        distribution,
        temperature,
    })
}

/// Proposal pipeline plus surrogate grounder, trained jointly in Stage 3.
#[derive(Clone, Debug)]
pub struct GroundingModel {
    pub pool: PoolModel,
    pub grounder: SurrogateGrounder,
    pub cfg: GrounderConfig,
}

/// A training video with its queries.
#[derive(Clone, Debug)]
pub struct GroundingItem {
    pub video_id: String,
    pub video: LabeledVideo,
    pub queries: Vec<QuerySample>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stage3Breakdown {
    pub total: f64,
    pub id_loss: f64,
    pub time_loss: f64,
    pub reg: f64,
    pub fallbacks: usize,
}

struct UnitTrace {
    rows: (usize, usize),
    caches: Vec<CrossBlockCache>,
}

impl GroundingModel {
    pub fn new(store: &mut ParamStore, pool: PoolModel, query_dim: usize, cfg: &GrounderConfig, rng: &mut Rng) -> Result<Self> {
        let grounder = SurrogateGrounder::new(store, GROUNDER_PREFIX, pool.f.dim, pool.cfg.m, query_dim, cfg, rng)?;
        Ok(Self {
            pool,
            grounder,
            cfg: cfg.clone(),
        })
    }

    /// Stage-3 objective of one video: mean query loss plus `γ ·` the
    /// Stage-2 regression term, backpropagated through the rebuilt pool into
    /// the evidence encoder, proposal head and temporal encoder.
    pub fn stage3_objective(&self, p: &Params, item: &GroundingItem) -> Result<(Stage3Breakdown, Grads)> {
        if item.queries.is_empty() {
            return Err(Error::Empty("queries of a Stage-3 item"));
        }
        let pm = &self.pool;
        let v = &item.video;
        let n = v.features.rows();
        let (u, enc) = pm.f.encode(p, &ViewSpec::global(n, 1), &v.features)?;
        let positions = timestep_positions(n, v.fps, v.duration_s);
        let (props, pcache) = pm.h.propose(p, &u, &positions)?;
        let top = topk_select(&props, pm.cfg.k, pm.cfg.diversity_iou)?;
        let mut units = Vec::with_capacity(top.len());
        let mut traces = Vec::with_capacity(top.len());
        for (i, prop) in top.iter().enumerate() {
            let interval = to_metric_time(prop.span, v.duration_s);
            let rows = crop_rows(n, interval, v.fps);
            let crop = u.slice_rows(rows.0, rows.1 + 1)?;
            let (tokens, caches) = pm.see.encode(p, &crop)?;
            units.push(EvidenceUnit {
                span_id: i + 1,
                interval,
                tokens,
                objectness: prop.objectness,
                span: prop.span,
                padded: prop.padded,
            });
            traces.push(UnitTrace { rows, caches });
        }
        let pool = EvidencePool {
            video_id: item.video_id.clone(),
            duration_s: v.duration_s,
            fps: v.fps,
            units,
        };

        let mut g = Grads::zeros_like(p);
        let w = 1.0 / item.queries.len() as f64;
        let mut out = Stage3Breakdown::default();
        let mut dtokens: Vec<Tensor> = pool.units.iter().map(|u| Tensor::zeros(u.tokens.shape())).collect();
        for q in &item.queries {
            let l = stage3_loss(&self.grounder, p, &pool, q, self.cfg.alpha, self.cfg.beta, w, &mut g)?;
            out.total += w * l.total;
            out.id_loss += w * l.id_loss;
            out.time_loss += w * l.time_loss;
            out.fallbacks += l.target.fallback as usize;
            for (acc, d) in dtokens.iter_mut().zip(&l.dtokens) {
                acc.add_assign(d)?;
            }
        }

        let mut du = Tensor::zeros(u.shape());
        for (trace, dt) in traces.iter().zip(&dtokens) {
            let (a, b) = trace.rows;
            let dcrop = pm.see.backward(p, &trace.caches, dt, &[b + 1 - a, pm.f.dim], &mut g)?;
            for r in a..=b {
                for (x, y) in du.row_mut(r).iter_mut().zip(dcrop.row(r - a)) {
                    *x += y;
                }
            }
        }
        if self.cfg.gamma > 0.0 {
            let s2 = stage2_loss(&props, &positions, &v.gt, pm.cfg.center_frac, 0.0)?;
            out.reg = s2.reg;
            out.total += self.cfg.gamma * s2.reg;
            let dprops: Vec<[f64; 3]> = s2
                .grads
                .iter()
                .map(|d| [self.cfg.gamma * d[0], self.cfg.gamma * d[1], self.cfg.gamma * d[2]])
                .collect();
            du.add_assign(&pm.h.backward(p, &pcache, &dprops, &mut g)?)?;
        }
        pm.f.backward(p, &enc, &du, &mut g)?;
        Ok((out, g))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage3Schedule {
    pub steps: usize,
    /// Videos per step.
    pub batch: usize,
    pub peak_lr: f64,
    pub warmup_frac: f64,
    pub weight_decay: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stage3LogRow {
    pub step: usize,
    pub losses: Stage3Breakdown,
    pub lr: f64,
}

/// Joint Stage-3 training. The encoder and proposal head run at
/// `perception_lr_scale` times the base rate; the evidence encoder and the
/// grounder at the full rate.
pub fn train_stage3(
    store: &mut ParamStore,
    model: &GroundingModel,
    data: &[GroundingItem],
    schedule: &Stage3Schedule,
    rng: &mut Rng,
) -> Result<Vec<Stage3LogRow>> {
    if data.is_empty() {
        return Err(Error::Empty("Stage-3 training set"));
    }
    store.set_lr_scale("", 1.0);
    store.set_lr_scale(&format!("{ENCODER_PREFIX}."), model.cfg.perception_lr_scale);
    store.set_lr_scale(&format!("{HEAD_PREFIX}."), model.cfg.perception_lr_scale);
    store.set_lr_scale(&format!("{SEE_PREFIX}."), 1.0);
    let b = schedule.batch.max(1);
    let mut log = Vec::with_capacity(schedule.steps);
    for step in 0..schedule.steps {
        let lr = cosine_lr(step, schedule.steps, schedule.peak_lr, schedule.warmup_frac)?;
        let mut grads = store.zero_grads();
        let mut sum = Stage3Breakdown::default();
        for _ in 0..b {
            let item = &data[rng.int_range(0, data.len() - 1)];
            let (l, g) = model.stage3_objective(&store.params, item)?;
            grads.merge(&g);
            sum.total += l.total / b as f64;
            sum.id_loss += l.id_loss / b as f64;
            sum.time_loss += l.time_loss / b as f64;
            sum.reg += l.reg / b as f64;
            sum.fallbacks += l.fallbacks;
        }
        if !sum.total.is_finite() {
            return Err(Error::NonFinite {
                what: format!(
                    "Stage-3 loss at step {} (id={}, time={}, reg={})",
                    step + 1,
                    sum.id_loss,
                    sum.time_loss,
                    sum.reg
                ),
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
        log::debug!("stage3 step {step}: {sum:?}");
        log.push(Stage3LogRow {
            step: step + 1,
            losses: sum,
            lr,
        });
    }
    store.set_lr_scale("", 1.0);
    Ok(log)
}

/// One line of the predictions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub video_id: String,
    /// 0-based decode index when a query is grounded several times.
    pub repeat: usize,
    pub cited_id: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub identify: Vec<f64>,
    pub response: String,
}

impl PredictionRecord {
    pub fn new(query: &QuerySample, repeat: usize, out: &GroundingOutput) -> Self {
        Self {
            id: query.id.clone(),
            video_id: query.video_id.clone(),
            repeat,
            cited_id: out.cited_id,
            t_start: out.interval.0,
            t_end: out.interval.1,
            identify: out.distribution.clone(),
            response: out.response.clone(),
        }
    }
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut out = Vec::new();
    for (i, line) in BufReader::new(std::fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool_of(intervals: &[(f64, f64)]) -> EvidencePool {
        EvidencePool {
            video_id: "v".into(),
            duration_s: 30.0,
            fps: 1.0,
            units: intervals
                .iter()
                .enumerate()
                .map(|(i, &iv)| EvidenceUnit {
                    span_id: i + 1,
                    interval: iv,
                    tokens: Tensor::zeros(&[2, 4]),
                    objectness: 0.0,
                    span: (iv.0 / 30.0, iv.1 / 30.0),
                    padded: false,
                })
                .collect(),
        }
    }

    #[test]
    fn citation_target_examples() {
        let pool = pool_of(&[(0.0, 10.0), (10.0, 20.0), (18.0, 30.0)]);
        let t = assign_citation_target(&pool, (17.0, 29.0)).unwrap();
        assert_eq!((t.id, t.fallback), (3, false));
        assert!((t.iou - 11.0 / 13.0).abs() < 1e-12);
        assert_eq!(assign_citation_target(&pool, (10.0, 20.0)).unwrap().id, 2);

        let pool = pool_of(&[(0.0, 2.0), (20.0, 22.0), (27.0, 30.0)]);
        let t = assign_citation_target(&pool, (23.0, 25.0)).unwrap();
        assert_eq!((t.id, t.fallback), (2, true));
    }

    #[test]
    fn tied_overlap_prefers_lower_id() {
        let pool = pool_of(&[(0.0, 10.0), (0.0, 10.0)]);
        assert_eq!(assign_citation_target(&pool, (0.0, 5.0)).unwrap().id, 1);
    }

    #[test]
    fn zero_temperature_is_argmax() {
        let mut rng = Rng::new(1);
        assert_eq!(sample_citation(&[0.1, 2.0, 2.0, -1.0], 0.0, &mut rng), 1);
    }

    #[test]
    fn sampling_follows_distribution() {
        let mut rng = Rng::new(2);
        let logits = [0.0, (3.0f64).ln()];
        let hits = (0..20_000).filter(|_| sample_citation(&logits, 1.0, &mut rng) == 1).count();
        let frac = hits as f64 / 20_000.0;
        assert!((frac - 0.75).abs() < 0.015, "{frac}");
    }
}
