//! Synthetic "videos": feature sequences with planted event structure.
//!
//! Each archetype owns a base vector and a low-rank sinusoid mixture; an
//! event of that archetype renders as `base + Pᵀ·sin(ω·τ + φ)` where `τ` is
//! the time elapsed since the event started. Gaps between events use a
//! dedicated background archetype, so every timestep is either inside one
//! event or in the background. Spatial tokens are noisy copies of the
//! per-timestep feature.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor, TensorFile};

const ARCHETYPE_NAMES: [&str; 16] = [
    "a person juggling three balls",
    "a dog chasing a frisbee",
    "someone chopping vegetables",
    "a cyclist riding uphill",
    "two people shaking hands",
    "a child jumping on a trampoline",
    "a man lifting a barbell",
    "a woman playing the violin",
    "a car parking in a garage",
    "a cat climbing a shelf",
    "someone pouring coffee",
    "a group dancing in a circle",
    "a skateboarder doing a kickflip",
    "a person painting a wall",
    "a boat leaving the harbor",
    "someone tying their shoes",
];

/// Human-readable name of an archetype.
pub fn archetype_name(a: usize) -> String {
    match ARCHETYPE_NAMES.get(a) {
        Some(n) => (*n).to_string(),
        None => format!("a pattern of kind {a}"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynConfig {
    pub fps: f64,
    pub dim: usize,
    pub spatial_tokens: usize,
    pub archetypes: usize,
    pub min_events: usize,
    pub max_events: usize,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub min_event_s: f64,
    pub max_event_s: f64,
    pub min_gap_s: f64,
    /// Per-token Gaussian noise std.
    pub noise: f64,
    /// Noise std added to the archetype descriptor to form a query embedding.
    pub query_noise: f64,
    /// Rank of the per-archetype sinusoid mixture.
    pub latent_rank: usize,
    pub base_scale: f64,
    pub trajectory_scale: f64,
    /// Seed of the archetype bank; shared by every split of one corpus.
    pub world_seed: u64,
}

impl Default for SynConfig {
    fn default() -> Self {
        Self {
            fps: 1.0,
            dim: 16,
            spatial_tokens: 4,
            archetypes: 12,
            min_events: 2,
            max_events: 5,
            min_duration_s: 60.0,
            max_duration_s: 120.0,
            min_event_s: 6.0,
            max_event_s: 30.0,
            min_gap_s: 2.0,
            noise: 0.5,
            query_noise: 0.3,
            latent_rank: 3,
            base_scale: 1.0,
            trajectory_scale: 1.0,
            world_seed: 1234,
        }
    }
}

impl SynConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if self.dim == 0 || self.spatial_tokens == 0 || self.latent_rank == 0 {
            return bad("dim, spatial_tokens and latent_rank must be >= 1".into());
        }
        if self.min_events == 0 || self.min_events > self.max_events {
            return bad(format!("event range {}..={} invalid", self.min_events, self.max_events));
        }
        if self.max_events > self.archetypes {
            return bad(format!(
                "max_events {} exceeds archetype count {} (archetypes are distinct per video)",
                self.max_events, self.archetypes
            ));
        }
        if !(self.min_duration_s > 0.0 && self.min_duration_s <= self.max_duration_s) {
            return bad("duration range invalid".into());
        }
        if !(self.min_event_s >= 1.0 && self.min_event_s <= self.max_event_s) {
            return bad("event length range invalid (min_event_s must be >= 1)".into());
        }
        if self.noise < 0.0 || self.query_noise < 0.0 || self.min_gap_s < 0.0 {
            return bad("noise levels and min_gap_s must be non-negative".into());
        }
        let need = self.max_events as f64 * self.min_event_s + (self.max_events as f64 - 1.0) * self.min_gap_s;
        if need > 0.95 * self.min_duration_s {
            return Err(Error::Generation(format!(
                "{} events of at least {} s with {} s gaps need {need} s, more than 95% of the shortest video ({} s)",
                self.max_events, self.min_event_s, self.min_gap_s, self.min_duration_s
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub start_s: f64,
    pub end_s: f64,
    pub archetype: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventScript {
    pub duration_s: f64,
    pub events: Vec<Event>,
    pub archetypes: usize,
}

impl EventScript {
    /// Checks ordering, bounds and non-overlap.
    pub fn validate(&self, max_events: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Generation(m));
        if self.events.is_empty() || self.events.len() > max_events {
            return fail(format!("{} events outside 1..={max_events}", self.events.len()));
        }
        let mut prev_end = 0.0;
        for (i, e) in self.events.iter().enumerate() {
            if !(0.0 <= e.start_s && e.start_s < e.end_s && e.end_s <= self.duration_s) {
                return fail(format!("event {i} [{}, {}] outside [0, {}]", e.start_s, e.end_s, self.duration_s));
            }
            if e.start_s < prev_end {
                return fail(format!("event {i} overlaps or is out of order"));
            }
            if e.archetype >= self.archetypes {
                return fail(format!("event {i} archetype {} out of range", e.archetype));
            }
            prev_end = e.end_s;
        }
        Ok(())
    }

    /// Event intervals normalized by the duration.
    pub fn normalized_intervals(&self) -> Vec<(f64, f64)> {
        self.events
            .iter()
            .map(|e| (e.start_s / self.duration_s, e.end_s / self.duration_s))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoSample {
    pub id: String,
    pub script: EventScript,
    pub fps: f64,
    /// `N × S × D`
    pub features: Tensor,
    pub seed: u64,
}

impl VideoSample {
    pub fn num_steps(&self) -> usize {
        self.features.shape()[0]
    }

    /// Spatially pooled `N × D` sequence.
    pub fn pooled(&self) -> Tensor {
        pool_spatial(&self.features).expect("video features are N×S×D")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuerySample {
    pub id: String,
    pub video_id: String,
    pub query_embedding: Tensor,
    pub target: (f64, f64),
    pub text: String,
    pub duration_s: f64,
}

impl QuerySample {
    /// Attaches an embedding to a parsed evaluation record.
    pub fn from_record(record: &QueryRecord, embedding: Tensor) -> Result<Self> {
        if embedding.data().iter().map(|v| v * v).sum::<f64>() <= 0.0 {
            return Err(Error::Config(format!("query {} has a zero embedding", record.id)));
        }
        Ok(Self {
            id: record.id.clone(),
            video_id: video_id_of(&record.video),
            query_embedding: embedding,
            target: (record.start_time, record.end_time),
            text: record.query.clone(),
            duration_s: record.duration,
        })
    }
}

/// Strips a file extension from a `video` field (`"v_x.mp4"` → `"v_x"`).
pub fn video_id_of(video: &str) -> String {
    match video.rsplit_once('.') {
        Some((stem, ext)) if !stem.is_empty() && !ext.contains('/') && ext.len() <= 5 => stem.to_string(),
        _ => video.to_string(),
    }
}

/// One line of the evaluation JSONL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub video: String,
    pub start_time: f64,
    pub end_time: f64,
    pub query: String,
    pub duration: f64,
}

impl QueryRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.duration > 0.0) {
            return Err(format!("duration {} must be positive", self.duration));
        }
        if !(0.0 <= self.start_time && self.start_time < self.end_time) {
            return Err(format!("start_time {} must be < end_time {}", self.start_time, self.end_time));
        }
        if self.end_time > self.duration {
            return Err(format!("end_time {} exceeds duration {}", self.end_time, self.duration));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Corpus {
    pub items: Vec<(VideoSample, Vec<QuerySample>)>,
}

impl Corpus {
    pub fn videos(&self) -> impl Iterator<Item = &VideoSample> {
        self.items.iter().map(|(v, _)| v)
    }

    pub fn queries(&self) -> impl Iterator<Item = &QuerySample> {
        self.items.iter().flat_map(|(_, q)| q)
    }

    pub fn num_queries(&self) -> usize {
        self.items.iter().map(|(_, q)| q.len()).sum()
    }
}

#[derive(Clone, Debug)]
struct Archetype {
    base: Vec<f64>,
    /// rank × D
    proj: Vec<Vec<f64>>,
    freq: Vec<f64>,
    phase: Vec<f64>,
}

impl Archetype {
    fn sample(cfg: &SynConfig, rng: &mut Rng) -> Self {
        let d = cfg.dim;
        let r = cfg.latent_rank;
        let base = (0..d).map(|_| rng.normal() * cfg.base_scale).collect();
        let proj = (0..r)
            .map(|_| (0..d).map(|_| rng.normal() * cfg.trajectory_scale / (r as f64).sqrt()).collect())
            .collect();
        let two_pi = std::f64::consts::TAU;
        let freq = (0..r).map(|_| rng.uniform_range(two_pi / 40.0, two_pi / 8.0)).collect();
        let phase = (0..r).map(|_| rng.uniform_range(0.0, two_pi)).collect();
        Self { base, proj, freq, phase }
    }

    /// Noiseless feature at `tau` seconds into a segment of this archetype.
    fn at(&self, tau: f64) -> Vec<f64> {
        let mut x = self.base.clone();
        for ((row, w), p) in self.proj.iter().zip(&self.freq).zip(&self.phase) {
            let z = (w * tau + p).sin();
            for (xi, r) in x.iter_mut().zip(row) {
                *xi += r * z;
            }
        }
        x
    }
}

/// Archetype definitions shared by all splits generated from one config.
#[derive(Clone, Debug)]
pub struct ArchetypeBank {
    kinds: Vec<Archetype>,
}

impl ArchetypeBank {
    /// `archetypes` event kinds plus one background kind (last index).
    pub fn new(cfg: &SynConfig) -> Self {
        let root = Rng::new(cfg.world_seed);
        let kinds = (0..=cfg.archetypes)
            .map(|a| Archetype::sample(cfg, &mut root.fork(a as u64)))
            .collect();
        Self { kinds }
    }

    pub fn background(&self) -> usize {
        self.kinds.len() - 1
    }

    /// Noiseless trajectory point of archetype `a` at elapsed time `tau`.
    pub fn trajectory(&self, a: usize, tau: f64) -> Vec<f64> {
        self.kinds[a].at(tau)
    }

    pub fn descriptor(&self, a: usize) -> &[f64] {
        &self.kinds[a].base
    }
}

/// Rounds to `decimals` places so the result prints back as the short decimal.
pub fn round_dec(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

fn sample_script(cfg: &SynConfig, rng: &mut Rng) -> Result<EventScript> {
    let duration = round_dec(rng.uniform_range(cfg.min_duration_s, cfg.max_duration_s), 2);
    let n = rng.int_range(cfg.min_events, cfg.max_events);
    let budget = duration - (n as f64 - 1.0) * cfg.min_gap_s;
    if n as f64 * cfg.min_event_s > budget {
        return Err(Error::Generation(format!(
            "{n} events of at least {} s with {} s gaps do not fit in {duration} s",
            cfg.min_event_s, cfg.min_gap_s
        )));
    }
    let mut lengths: Vec<f64> = (0..n)
        .map(|_| rng.uniform_range(cfg.min_event_s, cfg.max_event_s))
        .collect();
    let target = 0.95 * budget;
    let total: f64 = lengths.iter().sum();
    if total > target {
        let excess_now = total - n as f64 * cfg.min_event_s;
        let excess_allowed = (target - n as f64 * cfg.min_event_s).max(0.0);
        let f = if excess_now > 0.0 { excess_allowed / excess_now } else { 0.0 };
        for l in &mut lengths {
            *l = cfg.min_event_s + (*l - cfg.min_event_s) * f;
        }
    }
    let free = (budget - lengths.iter().sum::<f64>()).max(0.0);
    let weights: Vec<f64> = (0..=n).map(|_| rng.uniform() + 1e-3).collect();
    let wsum: f64 = weights.iter().sum();
    let mut kinds: Vec<usize> = (0..cfg.archetypes).collect();
    rng.shuffle(&mut kinds);

    let mut events = Vec::with_capacity(n);
    let mut t = 0.0;
    let max_end = (duration * 10.0).floor() / 10.0;
    for i in 0..n {
        t += free * weights[i] / wsum;
        if i > 0 {
            t += cfg.min_gap_s;
        }
        let start = round_dec(t, 1).max(events.last().map_or(0.0, |e: &Event| e.end_s));
        t += lengths[i];
        let end = round_dec(t, 1).min(max_end);
        events.push(Event {
            start_s: start,
            end_s: end,
            archetype: kinds[i],
        });
    }
    let script = EventScript {
        duration_s: duration,
        events,
        archetypes: cfg.archetypes,
    };
    script.validate(cfg.max_events)?;
    Ok(script)
}

/// Number of timesteps for a duration at `fps`.
pub fn num_steps(duration_s: f64, fps: f64) -> usize {
    ((duration_s * fps) - 1e-9).ceil().max(1.0) as usize
}

/// Center time (seconds) of timestep `i`, clamped into the video.
pub fn step_time(i: usize, fps: f64, duration_s: f64) -> f64 {
    ((i as f64 + 0.5) / fps).min(duration_s)
}

/// Archetype and elapsed segment time at `t`.
fn segment_at(script: &EventScript, background: usize, t: f64) -> (usize, f64) {
    let mut seg_start = 0.0;
    for e in &script.events {
        if t < e.start_s {
            break;
        }
        if t < e.end_s {
            return (e.archetype, t - e.start_s);
        }
        seg_start = e.end_s;
    }
    (background, t - seg_start)
}

fn render_features(cfg: &SynConfig, bank: &ArchetypeBank, script: &EventScript, rng: &mut Rng) -> Tensor {
    let n = num_steps(script.duration_s, cfg.fps);
    let (s, d) = (cfg.spatial_tokens, cfg.dim);
    let mut data = Vec::with_capacity(n * s * d);
    for i in 0..n {
        let t = step_time(i, cfg.fps, script.duration_s);
        let (a, tau) = segment_at(script, bank.background(), t);
        let x = bank.trajectory(a, tau);
        for _ in 0..s {
            data.extend(x.iter().map(|v| v + cfg.noise * rng.normal()));
        }
    }
    Tensor::new(vec![n, s, d], data).expect("feature shape")
}

/// Generates `count` videos with one query per event. Deterministic in `(cfg, seed)`.
pub fn generate_corpus(cfg: &SynConfig, count: usize, seed: u64) -> Result<Corpus> {
    cfg.validate()?;
    let bank = ArchetypeBank::new(cfg);
    let root = Rng::new(seed);
    let mut items = Vec::with_capacity(count);
    for i in 0..count {
        let video_seed = root.fork(i as u64).next_u64();
        let rng = Rng::new(video_seed);
        let script = sample_script(cfg, &mut rng.fork(1))?;
        let features = render_features(cfg, &bank, &script, &mut rng.fork(2));
        let id = format!("v{seed}_{i:04}");
        let mut qrng = rng.fork(3);
        let queries = script
            .events
            .iter()
            .enumerate()
            .map(|(j, e)| {
                let emb = bank
                    .descriptor(e.archetype)
                    .iter()
                    .map(|v| v + cfg.query_noise * qrng.normal())
                    .collect();
                QuerySample {
                    id: format!("{id}_q{j}"),
                    video_id: id.clone(),
                    query_embedding: Tensor::vector(emb),
                    target: (e.start_s, e.end_s),
                    text: archetype_name(e.archetype),
                    duration_s: script.duration_s,
                }
            })
            .collect();
        items.push((
            VideoSample {
                id,
                script,
                fps: cfg.fps,
                features,
                seed: video_seed,
            },
            queries,
        ));
    }
    Ok(Corpus { items })
}

/// Mean over the spatial axis of an `N × S × D` tensor.
pub fn pool_spatial(h: &Tensor) -> Result<Tensor> {
    let shape = h.shape();
    if shape.len() != 3 || shape[1] == 0 {
        return Err(Error::Dimension {
            op: "pool_spatial",
            detail: format!("expected N×S×D with S ≥ 1, got {shape:?}"),
        });
    }
    let (n, s, d) = (shape[0], shape[1], shape[2]);
    let mut out = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..s {
            let base = (i * s + j) * d;
            for k in 0..d {
                out[i * d + k] += h.data()[base + k];
            }
        }
    }
    for v in &mut out {
        *v /= s as f64;
    }
    Tensor::new(vec![n, d], out)
}

/// Mean adjacent-timestep distance `(across event boundaries, within segments)`
/// of the pooled features.
pub fn boundary_contrast(video: &VideoSample, background: usize) -> (f64, f64) {
    let x = video.pooled();
    let dur = video.script.duration_s;
    let (mut across, mut na, mut within, mut nw) = (0.0, 0, 0.0, 0);
    for i in 1..x.rows() {
        let t0 = step_time(i - 1, video.fps, dur);
        let t1 = step_time(i, video.fps, dur);
        let (a0, tau0) = segment_at(&video.script, background, t0);
        let (a1, tau1) = segment_at(&video.script, background, t1);
        let dist = x
            .row(i)
            .iter()
            .zip(x.row(i - 1))
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        if a0 == a1 && tau1 > tau0 {
            within += dist;
            nw += 1;
        } else {
            across += dist;
            na += 1;
        }
    }
    (across / na.max(1) as f64, within / nw.max(1) as f64)
}

#[derive(Serialize, Deserialize)]
struct VideoManifest {
    id: String,
    duration: f64,
    fps: f64,
    seed: u64,
    archetypes: usize,
    events: Vec<(f64, f64, usize)>,
    features: String,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Writes `queries.jsonl`, `videos.jsonl` and one `features/<id>.f2gd` per video.
pub fn write_dataset(dir: &Path, corpus: &Corpus) -> Result<()> {
    fs::create_dir_all(dir.join("features"))?;
    let mut qw = BufWriter::new(File::create(dir.join("queries.jsonl"))?);
    let mut vw = BufWriter::new(File::create(dir.join("videos.jsonl"))?);
    for (video, queries) in &corpus.items {
        let feature_file = format!("features/{}.f2gd", video.id);
        let mut tf = TensorFile::new();
        tf.push("features", video.features.clone());
        for q in queries {
            tf.push(format!("query/{}", q.id), q.query_embedding.clone());
            let rec = QueryRecord {
                id: q.id.clone(),
                video: video.id.clone(),
                start_time: q.target.0,
                end_time: q.target.1,
                query: q.text.clone(),
                duration: video.script.duration_s,
            };
            serde_json::to_writer(&mut qw, &rec)?;
            qw.write_all(b"\n")?;
        }
        tf.write(&dir.join(&feature_file))?;
        let manifest = VideoManifest {
            id: video.id.clone(),
            duration: video.script.duration_s,
            fps: video.fps,
            seed: video.seed,
            archetypes: video.script.archetypes,
            events: video
                .script
                .events
                .iter()
                .map(|e| (e.start_s, e.end_s, e.archetype))
                .collect(),
            features: feature_file,
        };
        serde_json::to_writer(&mut vw, &manifest)?;
        vw.write_all(b"\n")?;
    }
    qw.flush()?;
    vw.flush()?;
    Ok(())
}

/// Parses evaluation records, validating interval invariants per line.
pub fn read_query_records(path: &Path) -> Result<Vec<QueryRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QueryRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        rec.validate().map_err(|m| parse_err(path, i + 1, m))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_dataset(dir: &Path) -> Result<Corpus> {
    let vpath = dir.join("videos.jsonl");
    let qpath = dir.join("queries.jsonl");
    let records = read_query_records(&qpath)?;
    let mut by_video: BTreeMap<String, Vec<QueryRecord>> = BTreeMap::new();
    for r in records {
        by_video.entry(video_id_of(&r.video)).or_default().push(r);
    }
    let reader = BufReader::new(File::open(&vpath)?);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m: VideoManifest =
            serde_json::from_str(&line).map_err(|e| parse_err(&vpath, i + 1, e.to_string()))?;
        let script = EventScript {
            duration_s: m.duration,
            events: m
                .events
                .iter()
                .map(|&(start_s, end_s, archetype)| Event {
                    start_s,
                    end_s,
                    archetype,
                })
                .collect(),
            archetypes: m.archetypes,
        };
        script
            .validate(usize::MAX)
            .map_err(|e| parse_err(&vpath, i + 1, e.to_string()))?;
        let mut tf = TensorFile::read(&dir.join(&m.features))?;
        let features = tf
            .take("features")
            .ok_or_else(|| parse_err(&vpath, i + 1, format!("{} has no features record", m.features)))?;
        if features.shape().len() != 3 || features.shape()[0] != num_steps(m.duration, m.fps) {
            return Err(parse_err(&vpath, i + 1, "feature shape does not match duration"));
        }
        let mut queries = Vec::new();
        for rec in by_video.remove(&m.id).unwrap_or_default() {
            let emb = tf
                .take(&format!("query/{}", rec.id))
                .ok_or_else(|| parse_err(&qpath, 0, format!("no embedding for query {}", rec.id)))?;
            queries.push(QuerySample::from_record(&rec, emb)?);
        }
        items.push((
            VideoSample {
                id: m.id,
                script,
                fps: m.fps,
                features,
                seed: m.seed,
            },
            queries,
        ));
    }
    if let Some(orphan) = by_video.keys().next() {
        return Err(parse_err(&qpath, 0, format!("queries reference unknown video {orphan}")));
    }
    Ok(Corpus { items })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SynConfig {
        SynConfig {
            min_duration_s: 30.0,
            max_duration_s: 40.0,
            max_events: 3,
            ..SynConfig::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let cfg = small_cfg();
        let a = generate_corpus(&cfg, 5, 9).unwrap();
        let b = generate_corpus(&cfg, 5, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(&cfg, 5, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_single_token_lies_on_trajectory() {
        let cfg = SynConfig {
            noise: 0.0,
            spatial_tokens: 1,
            ..small_cfg()
        };
        let bank = ArchetypeBank::new(&cfg);
        let corpus = generate_corpus(&cfg, 3, 4).unwrap();
        for v in corpus.videos() {
            let x = v.pooled();
            for e in &v.script.events {
                for i in 0..x.rows() {
                    let t = step_time(i, v.fps, v.script.duration_s);
                    if t >= e.start_s && t < e.end_s {
                        let expected = bank.trajectory(e.archetype, t - e.start_s);
                        assert_eq!(x.row(i), expected.as_slice());
                    }
                }
            }
        }
    }

    #[test]
    fn infeasible_packing_is_reported() {
        let cfg = SynConfig {
            min_duration_s: 10.0,
            max_duration_s: 10.0,
            min_events: 3,
            max_events: 3,
            min_event_s: 5.0,
            ..SynConfig::default()
        };
        assert!(matches!(generate_corpus(&cfg, 1, 0), Err(Error::Generation(_))));
    }

    #[test]
    fn pool_spatial_examples() {
        let h = Tensor::new(vec![1, 2, 1], vec![1.0, 3.0]).unwrap();
        assert_eq!(pool_spatial(&h).unwrap().data(), &[2.0]);
        let h = Tensor::new(vec![2, 1, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(pool_spatial(&h).unwrap().data(), h.data());
        assert!(pool_spatial(&Tensor::zeros(&[2, 3])).is_err());
    }

    #[test]
    fn video_id_strips_extension() {
        assert_eq!(video_id_of("v_uqiMw7tQ1Cc.mp4"), "v_uqiMw7tQ1Cc");
        assert_eq!(video_id_of("v1_0003"), "v1_0003");
    }
}
