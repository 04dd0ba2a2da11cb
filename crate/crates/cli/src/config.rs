//! Flat `key = value` run configuration.
//!
//! Every key has a default in [`KEYS`]. Values are layered default < file <
//! command line, unknown keys are rejected, and the resolved set is written
//! back as `config.echo` in the same format so it can be fed to `--config`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use evground_core::grounding::{GrounderConfig, Stage3Schedule};
use evground_core::perception::{Divergence, TemporalModuleConfig, TrainSchedule, ViewPolicy};
use evground_core::proposal::{ProposalConfig, Stage2Schedule};
use evground_core::syndata::SynConfig;
use evground_core::{Error, Result};

/// `(key, default, description)`
pub const KEYS: &[(&str, &str, &str)] = &[
    ("run.dir", "run", "run directory (checkpoints/, pools/, preds/, reports/, logs/)"),
    ("run.seed", "7", "seed of model initialization and every training stream"),
    ("data.dir", "", "dataset directory; empty means <run.dir>/data"),
    ("data.seed", "1", "corpus seed; the three splits use seed+1, seed+2, seed+3"),
    ("data.unlabeled", "300", "unlabeled videos for Stage 1"),
    ("data.train", "300", "labeled training videos for Stages 2 and 3"),
    ("data.test", "200", "held-out labeled videos"),
    ("syn.fps", "1", "pooled timesteps per second"),
    ("syn.dim", "16", "feature width"),
    ("syn.spatial_tokens", "4", "tokens per timestep before spatial pooling"),
    ("syn.archetypes", "12", "number of event archetypes"),
    ("syn.min_events", "2", "fewest events per video"),
    ("syn.max_events", "5", "most events per video"),
    ("syn.min_duration", "60", "shortest video in seconds"),
    ("syn.max_duration", "120", "longest video in seconds"),
    ("syn.min_event", "6", "shortest event in seconds"),
    ("syn.max_event", "30", "longest event in seconds"),
    ("syn.min_gap", "2", "smallest gap between events in seconds"),
    ("syn.noise", "0.5", "per-token feature noise std"),
    ("syn.query_noise", "0.3", "query embedding noise std"),
    ("syn.latent_rank", "3", "sinusoids per archetype trajectory"),
    ("syn.base_scale", "1", "amplitude of the archetype base vector"),
    ("syn.trajectory_scale", "1", "amplitude of the within-event trajectory"),
    ("syn.world_seed", "1234", "seed of the archetype bank shared by all splits"),
    ("model.dim", "16", "latent width (must equal syn.dim)"),
    ("model.depth", "2", "temporal encoder blocks"),
    ("model.heads", "2", "attention heads everywhere"),
    ("model.mlp_ratio", "2", "MLP expansion everywhere"),
    ("model.pred_depth", "1", "Stage-1 predictor blocks"),
    ("model.pos_scale", "0.5", "amplitude of the sinusoidal position code"),
    ("stage1.lambda", "0.5", "regularizer weight in (1-lambda)*L_pred + lambda*L_SIG"),
    ("stage1.directions", "64", "random directions per regularizer evaluation"),
    ("stage1.divergence", "epps_pulley", "1-D goodness-of-fit statistic"),
    ("stage1.local_views", "4", "local views per sequence"),
    ("stage1.min_ratio", "0.15", "smallest observed fraction of a local view"),
    ("stage1.max_ratio", "0.5", "largest observed fraction of a local view"),
    ("stage1.strides", "1,2,3", "stride of each view type"),
    ("stage1.steps", "1000", "Stage-1 optimizer steps"),
    ("stage1.batch", "4", "videos per Stage-1 step"),
    ("stage1.lr", "0.001", "Stage-1 peak learning rate"),
    ("stage1.warmup_frac", "0.05", "Stage-1 warm-up fraction"),
    ("stage1.weight_decay", "0.01", "Stage-1 decoupled weight decay"),
    ("proposal.depth", "2", "proposal head blocks"),
    ("proposal.k", "8", "evidence units per pool"),
    ("proposal.m", "4", "evidence tokens per unit"),
    ("proposal.see_depth", "2", "evidence encoder blocks"),
    ("proposal.center_frac", "0.5", "central fraction of an event whose timesteps are positives"),
    ("proposal.eta", "1", "objectness loss weight"),
    ("proposal.anchor_half_width", "0.05", "half width of each timestep's anchor span"),
    ("proposal.diversity_iou", "0.5", "defer Top-K candidates overlapping a pick above this IoU; 'none' disables"),
    ("stage2.init", "stage1", "encoder initialization: stage1 or random"),
    ("stage2.steps", "10000", "Stage-2 optimizer steps"),
    ("stage2.batch", "4", "videos per Stage-2 step"),
    ("stage2.lr", "0.001", "Stage-2 peak learning rate"),
    ("stage2.warmup_frac", "0.05", "Stage-2 warm-up fraction"),
    ("stage2.weight_decay", "0.01", "Stage-2 decoupled weight decay"),
    ("stage2.encoder_lr_scale", "1", "encoder learning-rate multiplier in Stage 2"),
    ("stage2.retrieve_iou", "0.5", "IoU threshold of the standalone Retrieve@K metric"),
    ("grounder.hidden", "64", "hidden width of the identify and measure MLPs"),
    ("grounder.interval_freqs", "4", "sinusoid frequencies per endpoint in the interval code"),
    ("grounder.offset_range", "0.5", "largest endpoint move as a fraction of the cited length"),
    ("grounder.alpha", "1", "identification loss weight"),
    ("grounder.beta", "1", "measurement loss weight"),
    ("grounder.gamma", "0.1", "weight of the proposal regression term during Stage 3"),
    ("grounder.perception_lr_scale", "0.1", "encoder and proposal head learning-rate multiplier in Stage 3"),
    ("stage3.steps", "6000", "Stage-3 optimizer steps"),
    ("stage3.batch", "4", "videos per Stage-3 step"),
    ("stage3.lr", "0.001", "Stage-3 peak learning rate"),
    ("stage3.warmup_frac", "0.05", "Stage-3 warm-up fraction"),
    ("stage3.weight_decay", "0.01", "Stage-3 decoupled weight decay"),
    ("pool.split", "test", "split whose evidence pools are built: train or test"),
    ("pool.checkpoint", "latest", "checkpoint that builds pools: latest, stage2 or stage3"),
    ("ground.split", "test", "split to ground"),
    ("ground.grounder", "surrogate", "surrogate or oracle (cites the best unit, no refinement)"),
    ("ground.repeats", "1", "decodes per query"),
    ("ground.temperature", "0", "citation sampling temperature; 0 is argmax"),
    ("ground.prompts", "false", "also write the rendered inference prompts"),
    ("ground.seed", "0", "sampling seed for temperature > 0"),
    ("diagnose.video", "0", "index of the test video whose latents are projected"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn known(key: &str) -> Result<()> {
    if KEYS.iter().any(|(k, _, _)| *k == key) {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown configuration key '{key}'")))
    }
}

/// Parses `key = value` lines; `#` starts a comment.
fn parse_lines(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Defaults, then `file`, then `overrides` (`key=value` strings).
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            if !path.exists() {
                return Err(Error::MissingArtifact(path.to_path_buf()));
            }
            let text = std::fs::read_to_string(path)?;
            for (k, v) in parse_lines(&text, &path.display().to_string())? {
                cfg.set(&k, &v)?;
            }
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        known(key)?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key {key} is not in the table"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key);
        v.parse()
            .map_err(|e| Error::Config(format!("{key} = '{v}': {e}")))
    }

    /// Resolved configuration in file format, keys sorted.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// Table of keys, defaults and descriptions.
    pub fn describe() -> String {
        KEYS.iter().map(|(k, d, doc)| format!("{k} = {d}    # {doc}\n")).collect()
    }

    pub fn run_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("run.dir"))
    }

    pub fn data_dir(&self) -> PathBuf {
        match self.raw("data.dir") {
            "" => self.run_dir().join("data"),
            d => PathBuf::from(d),
        }
    }

    /// Checks every typed value and cross-module constraint before any work.
    pub fn validate(&self) -> Result<()> {
        let syn = self.syn()?;
        syn.validate()?;
        let t = self.temporal()?;
        t.validate()?;
        if t.dim != syn.dim {
            return Err(Error::Config(format!(
                "model.dim {} must equal syn.dim {} (the encoder input is the pooled feature)",
                t.dim, syn.dim
            )));
        }
        self.view_policy()?.validate()?;
        self.proposal()?.validate()?;
        self.grounder()?.validate()?;
        self.stage1_schedule()?;
        self.stage2_schedule()?;
        self.stage3_schedule()?;
        for key in ["data.unlabeled", "data.train", "data.test"] {
            if self.get::<usize>(key)? == 0 {
                return Err(Error::Config(format!("{key} must be at least 1")));
            }
        }
        self.get::<u64>("run.seed")?;
        self.get::<u64>("data.seed")?;
        self.get::<u64>("ground.seed")?;
        self.get::<usize>("diagnose.video")?;
        self.get::<bool>("ground.prompts")?;
        self.stage2_init()?;
        self.split("pool.split")?;
        self.split("ground.split")?;
        match self.raw("pool.checkpoint") {
            "latest" | "stage2" | "stage3" => {}
            other => return Err(Error::Config(format!("pool.checkpoint must be latest, stage2 or stage3, got '{other}'"))),
        }
        match self.raw("ground.grounder") {
            "surrogate" | "oracle" => {}
            other => return Err(Error::Config(format!("ground.grounder must be surrogate or oracle, got '{other}'"))),
        }
        if self.get::<usize>("ground.repeats")? == 0 {
            return Err(Error::Config("ground.repeats must be at least 1".into()));
        }
        let temp: f64 = self.get("ground.temperature")?;
        if !(temp >= 0.0 && temp.is_finite()) {
            return Err(Error::Config(format!("ground.temperature {temp} must be finite and >= 0")));
        }
        let r: f64 = self.get("stage2.retrieve_iou")?;
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Config(format!("stage2.retrieve_iou {r} outside [0,1]")));
        }
        Ok(())
    }

    pub fn split(&self, key: &str) -> Result<&str> {
        match self.raw(key) {
            s @ ("train" | "test") => Ok(s),
            other => Err(Error::Config(format!("{key} must be train or test, got '{other}'"))),
        }
    }

    /// `true` when Stage 2 starts from the Stage-1 encoder.
    pub fn stage2_init(&self) -> Result<bool> {
        match self.raw("stage2.init") {
            "stage1" => Ok(true),
            "random" => Ok(false),
            other => Err(Error::Config(format!("stage2.init must be stage1 or random, got '{other}'"))),
        }
    }

    pub fn syn(&self) -> Result<SynConfig> {
        Ok(SynConfig {
            fps: self.get("syn.fps")?,
            dim: self.get("syn.dim")?,
            spatial_tokens: self.get("syn.spatial_tokens")?,
            archetypes: self.get("syn.archetypes")?,
            min_events: self.get("syn.min_events")?,
            max_events: self.get("syn.max_events")?,
            min_duration_s: self.get("syn.min_duration")?,
            max_duration_s: self.get("syn.max_duration")?,
            min_event_s: self.get("syn.min_event")?,
            max_event_s: self.get("syn.max_event")?,
            min_gap_s: self.get("syn.min_gap")?,
            noise: self.get("syn.noise")?,
            query_noise: self.get("syn.query_noise")?,
            latent_rank: self.get("syn.latent_rank")?,
            base_scale: self.get("syn.base_scale")?,
            trajectory_scale: self.get("syn.trajectory_scale")?,
            world_seed: self.get("syn.world_seed")?,
        })
    }

    pub fn temporal(&self) -> Result<TemporalModuleConfig> {
        let strides = self.strides()?;
        Ok(TemporalModuleConfig {
            dim: self.get("model.dim")?,
            depth: self.get("model.depth")?,
            heads: self.get("model.heads")?,
            mlp_ratio: self.get("model.mlp_ratio")?,
            pred_depth: self.get("model.pred_depth")?,
            view_types: strides.len(),
            lambda: self.get("stage1.lambda")?,
            directions: self.get("stage1.directions")?,
            divergence: Divergence::from_id(self.raw("stage1.divergence"))?,
            pos_scale: self.get("model.pos_scale")?,
        })
    }

    fn strides(&self) -> Result<Vec<usize>> {
        self.raw("stage1.strides")
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| Error::Config(format!("stage1.strides entry '{s}': {e}")))
            })
            .collect()
    }

    pub fn view_policy(&self) -> Result<ViewPolicy> {
        Ok(ViewPolicy {
            local_views: self.get("stage1.local_views")?,
            min_ratio: self.get("stage1.min_ratio")?,
            max_ratio: self.get("stage1.max_ratio")?,
            strides: self.strides()?,
            global_stride: 1,
        })
    }

    pub fn proposal(&self) -> Result<ProposalConfig> {
        let diversity_iou = match self.raw("proposal.diversity_iou") {
            "none" | "" => None,
            _ => Some(self.get("proposal.diversity_iou")?),
        };
        Ok(ProposalConfig {
            depth: self.get("proposal.depth")?,
            heads: self.get("model.heads")?,
            mlp_ratio: self.get("model.mlp_ratio")?,
            k: self.get("proposal.k")?,
            m: self.get("proposal.m")?,
            see_depth: self.get("proposal.see_depth")?,
            center_frac: self.get("proposal.center_frac")?,
            eta: self.get("proposal.eta")?,
            anchor_half_width: self.get("proposal.anchor_half_width")?,
            diversity_iou,
        })
    }

    pub fn grounder(&self) -> Result<GrounderConfig> {
        Ok(GrounderConfig {
            hidden: self.get("grounder.hidden")?,
            interval_freqs: self.get("grounder.interval_freqs")?,
            offset_range: self.get("grounder.offset_range")?,
            alpha: self.get("grounder.alpha")?,
            beta: self.get("grounder.beta")?,
            gamma: self.get("grounder.gamma")?,
            perception_lr_scale: self.get("grounder.perception_lr_scale")?,
        })
    }

    fn schedule_parts(&self, stage: &str) -> Result<(usize, usize, f64, f64, f64)> {
        let steps: usize = self.get(&format!("{stage}.steps"))?;
        let batch: usize = self.get(&format!("{stage}.batch"))?;
        let lr: f64 = self.get(&format!("{stage}.lr"))?;
        let warm: f64 = self.get(&format!("{stage}.warmup_frac"))?;
        let wd: f64 = self.get(&format!("{stage}.weight_decay"))?;
        if steps == 0 || batch == 0 {
            return Err(Error::Config(format!("{stage}.steps and {stage}.batch must be at least 1")));
        }
        if !(lr > 0.0 && (0.0..1.0).contains(&warm) && wd >= 0.0) {
            return Err(Error::Config(format!("{stage} schedule needs lr > 0, warmup_frac in [0,1), weight_decay >= 0")));
        }
        Ok((steps, batch, lr, warm, wd))
    }

    pub fn stage1_schedule(&self) -> Result<TrainSchedule> {
        let (steps, batch, peak_lr, warmup_frac, weight_decay) = self.schedule_parts("stage1")?;
        Ok(TrainSchedule {
            steps,
            batch,
            peak_lr,
            warmup_frac,
            weight_decay,
        })
    }

    pub fn stage2_schedule(&self) -> Result<Stage2Schedule> {
        let (steps, batch, peak_lr, warmup_frac, weight_decay) = self.schedule_parts("stage2")?;
        Ok(Stage2Schedule {
            steps,
            batch,
            peak_lr,
            warmup_frac,
            weight_decay,
            encoder_lr_scale: self.get("stage2.encoder_lr_scale")?,
        })
    }

    pub fn stage3_schedule(&self) -> Result<Stage3Schedule> {
        let (steps, batch, peak_lr, warmup_frac, weight_decay) = self.schedule_parts("stage3")?;
        Ok(Stage3Schedule {
            steps,
            batch,
            peak_lr,
            warmup_frac,
            weight_decay,
        })
    }
}
