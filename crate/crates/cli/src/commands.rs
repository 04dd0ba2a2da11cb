//! One function per pipeline stage. Each reads its prerequisites from the
//! run directory, echoes the resolved configuration and writes its outputs
//! under fixed names.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use evground_core::eval::{
    build_report, export_report, histogram, histogram_density, pca_project, separability_probe, write_pca_csv,
    MetricReport, QueryTruth, StageTriple, StabilityReport,
};
use evground_core::grounding::{
    ground, read_predictions, serialize_instruction, train_stage3, write_predictions, Grounder, GroundingItem,
    GroundingModel, PredictionRecord, PromptMode,
};
use evground_core::numerics::{save_params, ParamStore, Rng, TensorFile};
use evground_core::perception::{
    append_loss_csv, encode_full, latent_variance, train_stage1, PerceptionModel, TemporalModule, ENCODER_PREFIX,
};
use evground_core::proposal::{
    evaluate_proposals, read_pools, train_stage2, write_pools, EvidencePool, LabeledVideo, PoolModel, ProposalMetrics,
    HEAD_PREFIX, SEE_PREFIX,
};
use evground_core::syndata::{generate_corpus, read_dataset, write_dataset, Corpus};
use evground_core::{Error, Result};

use crate::config::RunConfig;

pub const SPLITS: [&str; 3] = ["unlabeled", "train", "test"];

/// Fixed locations inside a run directory.
#[derive(Clone, Debug)]
pub struct RunPaths {
    pub root: PathBuf,
    pub data: PathBuf,
}

impl RunPaths {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            root: cfg.run_dir(),
            data: cfg.data_dir(),
        }
    }

    pub fn split(&self, name: &str) -> PathBuf {
        self.data.join(name)
    }

    pub fn checkpoint(&self, stage: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{stage}.ckpt"))
    }

    pub fn pools(&self) -> PathBuf {
        self.root.join("pools")
    }

    pub fn pool_source(&self, split: &str) -> PathBuf {
        self.pools().join(format!("{split}.source.json"))
    }

    pub fn predictions(&self, split: &str) -> PathBuf {
        self.root.join("preds").join(format!("{split}.jsonl"))
    }

    pub fn prompts(&self, split: &str) -> PathBuf {
        self.root.join("preds").join(format!("{split}_prompts.txt"))
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn echo(&self) -> PathBuf {
        self.root.join("config.echo")
    }
}

/// Creates the run layout, writes `config.echo` and opens the command's log.
fn start(cfg: &RunConfig, command: &str) -> Result<(RunPaths, CommandLog)> {
    let paths = RunPaths::new(cfg);
    for d in ["checkpoints", "pools", "preds", "reports", "logs"] {
        fs::create_dir_all(paths.root.join(d))?;
    }
    fs::write(paths.echo(), cfg.echo())?;
    let log = CommandLog::open(&paths.logs().join(format!("{command}.log")))?;
    log::info!("{command}: run directory {}", paths.root.display());
    Ok((paths, log))
}

/// Plain-text per-command log; truncated at the start of each invocation.
struct CommandLog {
    file: fs::File,
    started: Instant,
}

impl CommandLog {
    fn open(path: &Path) -> Result<Self> {
        Ok(Self {
            file: fs::File::create(path)?,
            started: Instant::now(),
        })
    }

    fn line(&mut self, msg: impl AsRef<str>) -> Result<()> {
        log::info!("{}", msg.as_ref());
        writeln!(self.file, "[{:8.2}s] {}", self.started.elapsed().as_secs_f64(), msg.as_ref())?;
        Ok(())
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(path.to_path_buf()))
    }
}

fn load_split(paths: &RunPaths, split: &str) -> Result<Corpus> {
    let dir = paths.split(split);
    require(&dir.join("videos.jsonl"))?;
    require(&dir.join("queries.jsonl"))?;
    read_dataset(&dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// FNV-1a over a file's bytes; ties pool files to the checkpoint that built them.
fn digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("{h:016x}"))
}

/// Copies every parameter under `prefixes` from a checkpoint, failing if any is absent or mis-shaped.
fn load_required(store: &mut ParamStore, path: &Path, prefixes: &[&str]) -> Result<()> {
    require(path)?;
    let file = TensorFile::read(path)?;
    let ids: Vec<_> = store.params.ids().collect();
    for id in ids {
        let name = store.params.name(id).to_string();
        if !prefixes.iter().any(|p| name.starts_with(&format!("{p}."))) {
            continue;
        }
        let t = file
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("{} has no tensor {name}", path.display())))?;
        if t.shape() != store.params.get(id).shape() {
            return Err(Error::Checkpoint(format!(
                "{name} in {} has shape {:?}, model expects {:?}",
                path.display(),
                t.shape(),
                store.params.get(id).shape()
            )));
        }
        *store.params.get_mut(id) = t.clone();
    }
    Ok(())
}

fn seed_rng(cfg: &RunConfig, label: &str) -> Result<Rng> {
    Ok(Rng::new(cfg.get("run.seed")?).fork_str(label))
}

/// Encoder, proposal head and evidence encoder with fresh parameters.
fn pool_stack(cfg: &RunConfig, store: &mut ParamStore) -> Result<PoolModel> {
    let rng = seed_rng(cfg, "model")?;
    let f = TemporalModule::new(store, ENCODER_PREFIX, &cfg.temporal()?, &mut rng.fork_str("f"))?;
    PoolModel::new(store, f, &cfg.proposal()?, &mut rng.fork_str("pool"))
}

/// Full Stage-3 model with fresh parameters.
fn grounding_stack(cfg: &RunConfig) -> Result<(ParamStore, GroundingModel)> {
    let mut store = ParamStore::new();
    let pm = pool_stack(cfg, &mut store)?;
    let rng = seed_rng(cfg, "model")?;
    let model = GroundingModel::new(&mut store, pm, cfg.get("syn.dim")?, &cfg.grounder()?, &mut rng.fork_str("ground"))?;
    Ok((store, model))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub videos: [usize; 3],
    pub queries: [usize; 3],
}

pub fn cmd_gen(cfg: &RunConfig) -> Result<GenSummary> {
    let (paths, mut log) = start(cfg, "gen")?;
    let syn = cfg.syn()?;
    let seed: u64 = cfg.get("data.seed")?;
    let mut summary = GenSummary {
        videos: [0; 3],
        queries: [0; 3],
    };
    for (i, split) in SPLITS.iter().enumerate() {
        let count: usize = cfg.get(&format!("data.{split}"))?;
        let corpus = generate_corpus(&syn, count, seed + 1 + i as u64)?;
        write_dataset(&paths.split(split), &corpus)?;
        summary.videos[i] = corpus.items.len();
        summary.queries[i] = corpus.num_queries();
        log.line(format!("{split}: {} videos, {} queries", corpus.items.len(), corpus.num_queries()))?;
    }
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage1Summary {
    pub steps: usize,
    pub first: [f64; 3],
    pub last: [f64; 3],
    /// Per-dimension variance of held-out full-sequence latents.
    pub latent_variance: Vec<f64>,
}

pub fn cmd_stage1(cfg: &RunConfig) -> Result<Stage1Summary> {
    let (paths, mut log) = start(cfg, "stage1")?;
    let unlabeled = load_split(&paths, "unlabeled")?;
    let test = load_split(&paths, "test")?;
    let rng = seed_rng(cfg, "stage1")?;
    let mut store = ParamStore::new();
    let model = PerceptionModel::new(&mut store, &cfg.temporal()?, &mut seed_rng(cfg, "model")?)?;
    let videos: Vec<_> = unlabeled.videos().map(|v| v.pooled()).collect();
    let schedule = cfg.stage1_schedule()?;
    log.line(format!("training on {} videos for {} steps", videos.len(), schedule.steps))?;
    let rows = train_stage1(&mut store, &model, &videos, &cfg.view_policy()?, &schedule, &mut rng.fork(1))?;
    let loss_csv = paths.logs().join("stage1_loss.csv");
    if loss_csv.exists() {
        fs::remove_file(&loss_csv)?;
    }
    append_loss_csv(&loss_csv, &rows)?;
    save_params(&store.params, &paths.checkpoint("stage1"))?;
    let held: Vec<_> = test.videos().map(|v| v.pooled()).collect();
    let var = latent_variance(&model.f, &store.params, &held)?;
    let pick = |r: &evground_core::perception::Stage1LogRow| [r.losses.l_pred, r.losses.l_sig, r.losses.total];
    let summary = Stage1Summary {
        steps: rows.len(),
        first: pick(&rows[0]),
        last: pick(rows.last().expect("at least one step")),
        latent_variance: var,
    };
    log.line(format!("L_pred/L_SIG/total first {:?} last {:?}", summary.first, summary.last))?;
    write_json(&paths.reports().join("stage1.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage2Summary {
    pub init: String,
    pub steps: usize,
    pub first_loss: f64,
    pub last_loss: f64,
    /// Wall-clock seconds spent in the training loop; logged, not written to
    /// the report, which must stay byte-identical across runs.
    #[serde(skip)]
    pub train_seconds: f64,
    pub held_out: ProposalMetrics,
}

pub fn cmd_stage2(cfg: &RunConfig) -> Result<Stage2Summary> {
    let from_stage1 = cfg.stage2_init()?;
    let (paths, mut log) = start(cfg, "stage2")?;
    if from_stage1 {
        require(&paths.checkpoint("stage1"))?;
    }
    let train = load_split(&paths, "train")?;
    let test = load_split(&paths, "test")?;
    let mut store = ParamStore::new();
    let model = pool_stack(cfg, &mut store)?;
    if from_stage1 {
        load_required(&mut store, &paths.checkpoint("stage1"), &[ENCODER_PREFIX])?;
    }
    let data: Vec<LabeledVideo> = train.videos().map(LabeledVideo::from_video).collect();
    let schedule = cfg.stage2_schedule()?;
    log.line(format!(
        "init={} training on {} videos for {} steps",
        cfg.raw("stage2.init"),
        data.len(),
        schedule.steps
    ))?;
    let started = Instant::now();
    let rows = train_stage2(&mut store, &model, &data, &schedule, &mut seed_rng(cfg, "stage2")?)?;
    let train_seconds = started.elapsed().as_secs_f64();
    log.line(format!("trained in {train_seconds:.1}s"))?;
    let mut w = csv_writer(&paths.logs().join("stage2_loss.csv"), &["step", "total", "reg", "score", "lr"])?;
    for r in &rows {
        w.write_record([r.step.to_string(), r.total.to_string(), r.reg.to_string(), r.score.to_string(), r.lr.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    save_params(&store.params, &paths.checkpoint("stage2"))?;
    let videos: Vec<_> = test.videos().cloned().collect();
    let held_out = evaluate_proposals(&model, &store.params, &videos, cfg.get("stage2.retrieve_iou")?)?;
    let summary = Stage2Summary {
        init: cfg.raw("stage2.init").to_string(),
        steps: rows.len(),
        first_loss: rows[0].total,
        last_loss: rows.last().expect("at least one step").total,
        train_seconds,
        held_out,
    };
    log.line(format!(
        "held-out Retrieve@K={:.4} Center-AP={:.4} matched mIoU={:.4}",
        held_out.retrieve_at_k, held_out.center_ap, held_out.matched_miou
    ))?;
    write_json(&paths.reports().join("stage2.json"), &summary)?;
    Ok(summary)
}

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<fs::File>> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    Ok(w)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PoolSource {
    checkpoint: String,
    digest: String,
}

/// The checkpoint `pool.checkpoint` resolves to.
fn pool_checkpoint(cfg: &RunConfig, paths: &RunPaths) -> Result<String> {
    let name = match cfg.raw("pool.checkpoint") {
        "latest" if paths.checkpoint("stage3").exists() => "stage3",
        "latest" => "stage2",
        other => other,
    };
    require(&paths.checkpoint(name))?;
    Ok(name.to_string())
}

/// Restores the Stage-3 model from `stage`'s checkpoint; a Stage-2
/// checkpoint fills only the pool modules.
fn restore(cfg: &RunConfig, paths: &RunPaths, stage: &str) -> Result<(ParamStore, GroundingModel)> {
    let (mut store, model) = grounding_stack(cfg)?;
    let mut prefixes = vec![ENCODER_PREFIX, HEAD_PREFIX, SEE_PREFIX];
    if stage == "stage3" {
        prefixes.push(evground_core::grounding::GROUNDER_PREFIX);
    }
    load_required(&mut store, &paths.checkpoint(stage), &prefixes)?;
    Ok((store, model))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolSummary {
    pub split: String,
    pub checkpoint: String,
    pub pools: usize,
}

pub fn cmd_pool(cfg: &RunConfig) -> Result<PoolSummary> {
    let (paths, mut log) = start(cfg, "pool")?;
    let split = cfg.split("pool.split")?;
    let stage = pool_checkpoint(cfg, &paths)?;
    let corpus = load_split(&paths, split)?;
    let (store, model) = restore(cfg, &paths, &stage)?;
    let pools = corpus
        .videos()
        .map(|v| model.pool.build_pool(&store.params, v))
        .collect::<Result<Vec<_>>>()?;
    write_pools(&paths.pools(), split, &pools)?;
    write_json(
        &paths.pool_source(split),
        &PoolSource {
            checkpoint: stage.clone(),
            digest: digest(&paths.checkpoint(&stage))?,
        },
    )?;
    log.line(format!("{} pools for split {split} from the {stage} checkpoint", pools.len()))?;
    Ok(PoolSummary {
        split: split.to_string(),
        checkpoint: stage,
        pools: pools.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage3Summary {
    pub steps: usize,
    pub first: [f64; 4],
    pub last: [f64; 4],
    pub fallbacks: usize,
}

pub fn cmd_stage3(cfg: &RunConfig) -> Result<Stage3Summary> {
    let (paths, mut log) = start(cfg, "stage3")?;
    require(&paths.checkpoint("stage2"))?;
    if cfg.stage2_init()? {
        require(&paths.checkpoint("stage1"))?;
    }
    let train = load_split(&paths, "train")?;
    let (mut store, model) = grounding_stack(cfg)?;
    load_required(&mut store, &paths.checkpoint("stage2"), &[ENCODER_PREFIX, HEAD_PREFIX, SEE_PREFIX])?;
    let items: Vec<GroundingItem> = train
        .items
        .iter()
        .map(|(v, qs)| GroundingItem {
            video_id: v.id.clone(),
            video: LabeledVideo::from_video(v),
            queries: qs.clone(),
        })
        .collect();
    let schedule = cfg.stage3_schedule()?;
    log.line(format!("joint training on {} videos for {} steps", items.len(), schedule.steps))?;
    let rows = train_stage3(&mut store, &model, &items, &schedule, &mut seed_rng(cfg, "stage3")?)?;
    let mut w = csv_writer(
        &paths.logs().join("stage3_loss.csv"),
        &["step", "total", "id_loss", "time_loss", "reg", "fallbacks", "lr"],
    )?;
    for r in &rows {
        let l = r.losses;
        w.write_record([
            r.step.to_string(),
            l.total.to_string(),
            l.id_loss.to_string(),
            l.time_loss.to_string(),
            l.reg.to_string(),
            l.fallbacks.to_string(),
            r.lr.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    save_params(&store.params, &paths.checkpoint("stage3"))?;
    let pick = |r: &evground_core::grounding::Stage3LogRow| [r.losses.total, r.losses.id_loss, r.losses.time_loss, r.losses.reg];
    let summary = Stage3Summary {
        steps: rows.len(),
        first: pick(&rows[0]),
        last: pick(rows.last().expect("at least one step")),
        fallbacks: rows.iter().map(|r| r.losses.fallbacks).sum(),
    };
    log.line(format!("total/id/time/reg first {:?} last {:?}", summary.first, summary.last))?;
    write_json(&paths.reports().join("stage3.json"), &summary)?;
    Ok(summary)
}

/// Pools of `split`, checked to come from the checkpoint the grounder uses.
fn load_pools_for(paths: &RunPaths, split: &str, stage: Option<&str>) -> Result<Vec<EvidencePool>> {
    let pools = read_pools(&paths.pools(), split)?;
    let source_path = paths.pool_source(split);
    require(&source_path)?;
    let source: PoolSource = serde_json::from_str(&fs::read_to_string(&source_path)?)?;
    if let Some(stage) = stage {
        let current = digest(&paths.checkpoint(stage))?;
        if source.checkpoint != stage || source.digest != current {
            return Err(Error::Mismatch(format!(
                "pools/{split} were built from the {} checkpoint ({}) but grounding uses {stage} ({current}); run `pool` again",
                source.checkpoint, source.digest
            )));
        }
    }
    Ok(pools)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundSummary {
    pub split: String,
    pub queries: usize,
    pub predictions: usize,
}

pub fn cmd_ground(cfg: &RunConfig) -> Result<GroundSummary> {
    let (paths, mut log) = start(cfg, "ground")?;
    let split = cfg.split("ground.split")?;
    let oracle = cfg.raw("ground.grounder") == "oracle";
    let restored = if oracle {
        None
    } else {
        require(&paths.checkpoint("stage3"))?;
        Some(restore(cfg, &paths, "stage3")?)
    };
    let pools = load_pools_for(&paths, split, (!oracle).then_some("stage3"))?;
    let corpus = load_split(&paths, split)?;
    let repeats: usize = cfg.get("ground.repeats")?;
    let temperature: f64 = cfg.get("ground.temperature")?;
    let want_prompts: bool = cfg.get("ground.prompts")?;
    let (k, m) = (cfg.get("proposal.k")?, cfg.get("proposal.m")?);
    let mut rng = Rng::new(cfg.get("ground.seed")?).fork_str("ground");
    let mut preds = Vec::new();
    let mut prompts = String::new();
    let mut queries = 0;
    for (video, qs) in &corpus.items {
        let pool = pools
            .iter()
            .find(|p| p.video_id == video.id)
            .ok_or_else(|| Error::Mismatch(format!("no pool for video {}", video.id)))?;
        for q in qs {
            queries += 1;
            if want_prompts {
                prompts.push_str(&format!("### {}\n", q.id));
                prompts.push_str(&serialize_instruction(pool, &q.text, PromptMode::Inference, k, m)?);
                prompts.push('\n');
            }
            for r in 0..repeats {
                let grounder = match &restored {
                    Some((store, model)) => Grounder::Surrogate {
                        model: &model.grounder,
                        params: &store.params,
                    },
                    None => Grounder::Oracle,
                };
                let out = ground(grounder, pool, q, temperature, &mut rng)?;
                preds.push(PredictionRecord::new(q, r, &out));
            }
        }
    }
    write_predictions(&paths.predictions(split), &preds)?;
    if want_prompts {
        fs::write(paths.prompts(split), prompts)?;
    }
    log.line(format!(
        "{} predictions for {queries} queries ({repeats} decode(s), temperature {temperature}, {} grounder)",
        preds.len(),
        cfg.raw("ground.grounder")
    ))?;
    Ok(GroundSummary {
        split: split.to_string(),
        queries,
        predictions: preds.len(),
    })
}

fn truths_of(corpus: &Corpus) -> Vec<QueryTruth> {
    corpus.queries().map(QueryTruth::from).collect()
}

fn evaluation_inputs(cfg: &RunConfig, paths: &RunPaths) -> Result<(Vec<EvidencePool>, Vec<PredictionRecord>, Vec<QueryTruth>)> {
    let split = cfg.split("ground.split")?;
    let preds = read_predictions(&paths.predictions(split))?;
    let pools = load_pools_for(paths, split, None)?;
    let corpus = load_split(paths, split)?;
    Ok((pools, preds, truths_of(&corpus)))
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<MetricReport> {
    let (paths, mut log) = start(cfg, "eval")?;
    let (pools, preds, truths) = evaluation_inputs(cfg, &paths)?;
    let report = build_report(&pools, &preds, &truths)?;
    export_report(&report, &paths.reports().join("eval"))?;
    for (k, v) in report.scalars() {
        log.line(format!("{k} = {v}"))?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub stages: StageTriple,
    pub gap_below_threshold: f64,
    /// `(bin_left, bin_right, density)` of the citation gap with the first bin dropped.
    pub gap_density: Vec<(f64, f64, f64)>,
    pub stability: Option<StabilityReport>,
    pub pca_video: String,
    pub pca_checkpoint: String,
    pub pca_variances: [f64; 2],
    pub probe_accuracy: f64,
}

pub fn cmd_diagnose(cfg: &RunConfig) -> Result<Diagnosis> {
    let (paths, mut log) = start(cfg, "diagnose")?;
    let (pools, preds, truths) = evaluation_inputs(cfg, &paths)?;
    let report = build_report(&pools, &preds, &truths)?;
    let out = paths.reports().join("diagnose");
    fs::create_dir_all(&out)?;

    let gaps: Vec<f64> = report.outcomes.iter().map(|o| o.citation_gap).collect();
    let gap_density = histogram_density(&histogram(&gaps, 0.0, 1.0, 10), true);
    let mut w = csv_writer(&out.join("gap_density.csv"), &["bin_left", "bin_right", "density"])?;
    for (l, r, d) in &gap_density {
        w.write_record([l.to_string(), r.to_string(), d.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    let mut w = csv_writer(
        &out.join("stagewise.csv"),
        &["id", "retrieve_iou", "cited_iou", "refined_iou", "citation_gap", "best_id", "cited_id"],
    )?;
    for o in &report.outcomes {
        w.write_record([
            o.id.clone(),
            o.retrieve_iou.to_string(),
            o.cited_iou.to_string(),
            o.refined_iou.to_string(),
            o.citation_gap.to_string(),
            o.best_id.to_string(),
            o.cited_id.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    if let Some(s) = &report.stability {
        let mut w = csv_writer(&out.join("stability_pairs.csv"), &["id", "mean_iou", "abs_delta", "class"])?;
        for ((o, c), (m, d)) in report.outcomes.iter().zip(&s.classes).zip(s.mean_iou.iter().zip(&s.abs_delta)) {
            w.write_record([o.id.clone(), m.to_string(), d.to_string(), format!("{c:?}")]).map_err(csv_err)?;
        }
        w.flush()?;
    }

    // Latent geometry of one held-out video under the most trained encoder.
    let split = cfg.split("ground.split")?;
    let corpus = load_split(&paths, split)?;
    let idx: usize = cfg.get("diagnose.video")?;
    let (video, _) = corpus
        .items
        .get(idx)
        .ok_or_else(|| Error::Config(format!("diagnose.video {idx} but split {split} has {} videos", corpus.items.len())))?;
    let stage = ["stage3", "stage2", "stage1"]
        .into_iter()
        .find(|s| paths.checkpoint(s).exists())
        .ok_or_else(|| Error::MissingArtifact(paths.checkpoint("stage1")))?;
    let mut store = ParamStore::new();
    let f = TemporalModule::new(&mut store, ENCODER_PREFIX, &cfg.temporal()?, &mut seed_rng(cfg, "model")?)?;
    load_required(&mut store, &paths.checkpoint(stage), &[ENCODER_PREFIX])?;
    let latents = encode_full(&f, &store.params, &video.pooled())?;
    let n = latents.rows();
    let inside: Vec<bool> = (0..n)
        .map(|i| {
            let t = evground_core::syndata::step_time(i, video.fps, video.script.duration_s);
            video.script.events.iter().any(|e| e.start_s <= t && t < e.end_s)
        })
        .collect();
    let proj = pca_project(&latents)?;
    write_pca_csv(&out.join("pca.csv"), &proj, &(0..n).collect::<Vec<_>>(), &inside)?;
    let probe_accuracy = separability_probe(&latents, &inside)?;

    let diagnosis = Diagnosis {
        stages: report.stages,
        gap_below_threshold: report.gap_below_threshold,
        gap_density,
        stability: report.stability.clone(),
        pca_video: video.id.clone(),
        pca_checkpoint: stage.to_string(),
        pca_variances: proj.variances,
        probe_accuracy,
    };
    write_json(&out.join("diagnosis.json"), &diagnosis)?;
    log.line(format!(
        "Retrieve@K {:.4} >= Cited {:.4}; Refined {:.4}; gap<0.10 {:.4}; probe {:.4} on {}",
        report.stages.retrieve_at_k, report.stages.cited, report.stages.refined, report.gap_below_threshold, probe_accuracy, video.id
    ))?;
    Ok(diagnosis)
}

/// gen → stage1 → stage2 → pool → stage3 → pool → ground → eval. Pools are
/// rebuilt after Stage 3 because joint training changes the encoder,
/// proposal head and evidence encoder.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<MetricReport> {
    cmd_gen(cfg)?;
    if cfg.stage2_init()? {
        cmd_stage1(cfg)?;
    }
    cmd_stage2(cfg)?;
    let mut pooled = cfg.clone();
    pooled.set("pool.split", cfg.raw("ground.split"))?;
    pooled.set("pool.checkpoint", "stage2")?;
    cmd_pool(&pooled)?;
    cmd_stage3(cfg)?;
    pooled.set("pool.checkpoint", "stage3")?;
    cmd_pool(&pooled)?;
    cmd_ground(cfg)?;
    let report = cmd_eval(cfg)?;
    // leave the echo of the configuration the run was invoked with
    fs::write(RunPaths::new(cfg).echo(), cfg.echo())?;
    Ok(report)
}
