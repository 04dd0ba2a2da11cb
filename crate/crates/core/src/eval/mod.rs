//! Grounding metrics, stage-wise diagnostics and report export.

use std::collections::HashMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grounding::PredictionRecord;
use crate::numerics::Tensor;
use crate::proposal::EvidencePool;
use crate::syndata::QuerySample;

/// Intersection-over-union of two closed intervals. Degenerate unions count
/// as a match only when the intervals are identical.
pub fn iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    inter / union
}

/// Slack for threshold comparisons. Intervals live on a 0.1 s grid, so exact
/// ratios such as 3/10 are common and `inter / union` can land one ulp below.
pub const IOU_EPS: f64 = 1e-9;

/// Fraction of IoUs at or above `m` (up to [`IOU_EPS`]).
pub fn recall_at(ious: &[f64], m: f64) -> Result<f64> {
    if ious.is_empty() {
        return Err(Error::Empty("IoU list"));
    }
    Ok(ious.iter().filter(|&&v| v >= m - IOU_EPS).count() as f64 / ious.len() as f64)
}

pub fn mean_iou(ious: &[f64]) -> Result<f64> {
    if ious.is_empty() {
        return Err(Error::Empty("IoU list"));
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

pub const RECALL_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

/// Best unit of a pool for `gt`: `(span_id, IoU)`, lowest id on ties.
pub fn best_in_pool(pool: &EvidencePool, gt: (f64, f64)) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for u in &pool.units {
        let v = iou(u.interval, gt);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((u.span_id, v));
        }
    }
    best.ok_or(Error::Empty("evidence pool"))
}

/// `IoU_best − IoU_cited`.
pub fn citation_gap(pool: &EvidencePool, cited_id: usize, gt: (f64, f64)) -> Result<f64> {
    let cited = pool
        .units
        .iter()
        .find(|u| u.span_id == cited_id)
        .ok_or(Error::InvalidSpanId { id: cited_id, k: pool.k() })?;
    let (_, best) = best_in_pool(pool, gt)?;
    Ok(best - iou(cited.interval, gt))
}

/// Ground truth of one query, as far as evaluation needs it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryTruth {
    pub id: String,
    pub video_id: String,
    pub interval: (f64, f64),
}

impl From<&QuerySample> for QueryTruth {
    fn from(q: &QuerySample) -> Self {
        Self {
            id: q.id.clone(),
            video_id: q.video_id.clone(),
            interval: q.target,
        }
    }
}

/// Per-query evaluation record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub id: String,
    pub video_id: String,
    pub gt_start: f64,
    pub gt_end: f64,
    pub cited_id: usize,
    pub best_id: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub retrieve_iou: f64,
    pub cited_iou: f64,
    pub refined_iou: f64,
    pub citation_gap: f64,
}

/// Mean IoU of the best unit in the pool, the cited unit and the refined interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTriple {
    pub retrieve_at_k: f64,
    pub cited: f64,
    pub refined: f64,
}

/// First-decode predictions keyed by query id.
fn first_decodes(preds: &[PredictionRecord]) -> HashMap<&str, &PredictionRecord> {
    preds.iter().filter(|p| p.repeat == 0).map(|p| (p.id.as_str(), p)).collect()
}

/// Stage-wise IoUs of every query (micro-averaged), using the first decode of each query.
pub fn stagewise_diagnostics(
    pools: &[EvidencePool],
    preds: &[PredictionRecord],
    truths: &[QueryTruth],
) -> Result<(StageTriple, Vec<QueryOutcome>)> {
    if truths.is_empty() {
        return Err(Error::Empty("evaluation queries"));
    }
    let by_video: HashMap<&str, &EvidencePool> = pools.iter().map(|p| (p.video_id.as_str(), p)).collect();
    let by_query = first_decodes(preds);
    let mut outcomes = Vec::with_capacity(truths.len());
    for t in truths {
        let pool = by_video
            .get(t.video_id.as_str())
            .ok_or_else(|| Error::Mismatch(format!("no pool for video {} (query {})", t.video_id, t.id)))?;
        let pred = by_query
            .get(t.id.as_str())
            .ok_or_else(|| Error::Mismatch(format!("no prediction for query {}", t.id)))?;
        if pred.video_id != t.video_id {
            return Err(Error::Mismatch(format!(
                "prediction for query {} names video {}, expected {}",
                t.id, pred.video_id, t.video_id
            )));
        }
        let cited = pool
            .units
            .iter()
            .find(|u| u.span_id == pred.cited_id)
            .ok_or_else(|| Error::Mismatch(format!("query {} cites <Span_{}> missing from its pool", t.id, pred.cited_id)))?;
        let (best_id, best) = best_in_pool(pool, t.interval)?;
        let cited_iou = iou(cited.interval, t.interval);
        outcomes.push(QueryOutcome {
            id: t.id.clone(),
            video_id: t.video_id.clone(),
            gt_start: t.interval.0,
            gt_end: t.interval.1,
            cited_id: pred.cited_id,
            best_id,
            t_start: pred.t_start,
            t_end: pred.t_end,
            retrieve_iou: best,
            cited_iou,
            refined_iou: iou((pred.t_start, pred.t_end), t.interval),
            citation_gap: best - cited_iou,
        });
    }
    let n = outcomes.len() as f64;
    let triple = StageTriple {
        retrieve_at_k: outcomes.iter().map(|o| o.retrieve_iou).sum::<f64>() / n,
        cited: outcomes.iter().map(|o| o.cited_iou).sum::<f64>() / n,
        refined: outcomes.iter().map(|o| o.refined_iou).sum::<f64>() / n,
    };
    Ok((triple, outcomes))
}

/// Severity buckets of a stochastic collapse, keyed by the non-zero IoU.
pub const COLLAPSE_BUCKETS: [(f64, f64); 3] = [(0.0, 0.3), (0.3, 0.5), (0.5, 1.0)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityClass {
    /// Both decodes have zero IoU.
    ConsistentMiss,
    /// Exactly one decode has zero IoU; `bucket` indexes [`COLLAPSE_BUCKETS`].
    StochasticCollapse { bucket: usize },
    /// Neither decode is zero.
    StableNonzero,
}

pub fn classify_pair(a: f64, b: f64) -> StabilityClass {
    match (a == 0.0, b == 0.0) {
        (true, true) => StabilityClass::ConsistentMiss,
        (false, false) => StabilityClass::StableNonzero,
        _ => {
            let nz = a.max(b);
            let bucket = if nz < 0.3 {
                0
            } else if nz < 0.5 {
                1
            } else {
                2
            };
            StabilityClass::StochasticCollapse { bucket }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub classes: Vec<StabilityClass>,
    pub consistent_miss: usize,
    pub collapse: [usize; 3],
    pub stable_nonzero: usize,
    /// Mean IoU of each pair.
    pub mean_iou: Vec<f64>,
    /// `|IoU_1 − IoU_2|` of each pair.
    pub abs_delta: Vec<f64>,
}

impl StabilityReport {
    pub fn total(&self) -> usize {
        self.consistent_miss + self.collapse.iter().sum::<usize>() + self.stable_nonzero
    }
}

/// Classifies repeated-decode IoU pairs.
pub fn stability_decompose(pairs: &[(f64, f64)]) -> Result<StabilityReport> {
    let mut r = StabilityReport {
        classes: Vec::with_capacity(pairs.len()),
        consistent_miss: 0,
        collapse: [0; 3],
        stable_nonzero: 0,
        mean_iou: Vec::with_capacity(pairs.len()),
        abs_delta: Vec::with_capacity(pairs.len()),
    };
    for &(a, b) in pairs {
        if !((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b)) {
            return Err(Error::Config(format!("IoU pair ({a}, {b}) outside [0, 1]")));
        }
        let c = classify_pair(a, b);
        match c {
            StabilityClass::ConsistentMiss => r.consistent_miss += 1,
            StabilityClass::StochasticCollapse { bucket } => r.collapse[bucket] += 1,
            StabilityClass::StableNonzero => r.stable_nonzero += 1,
        }
        r.classes.push(c);
        r.mean_iou.push(0.5 * (a + b));
        r.abs_delta.push((a - b).abs());
    }
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// Equal-width histogram on `[lo, hi]`; values outside are clamped into the
/// end bins and the last bin is closed on the right.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<HistBin> {
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistBin> = (0..bins)
        .map(|i| HistBin {
            left: lo + i as f64 * width,
            right: if i + 1 == bins { hi } else { lo + (i + 1) as f64 * width },
            count: 0,
        })
        .collect();
    for &v in values {
        let i = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        out[i].count += 1;
    }
    out
}

/// Density per bin; with `drop_first` the first bin is omitted and the rest renormalized.
pub fn histogram_density(bins: &[HistBin], drop_first: bool) -> Vec<(f64, f64, f64)> {
    let kept = if drop_first { &bins[1.min(bins.len())..] } else { bins };
    let total: usize = kept.iter().map(|b| b.count).sum();
    kept.iter()
        .map(|b| {
            let mass = if total == 0 { 0.0 } else { b.count as f64 / total as f64 };
            (b.left, b.right, mass / (b.right - b.left))
        })
        .collect()
}

pub const GAP_THRESHOLD: f64 = 0.10;

/// Everything reported for one evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub samples: usize,
    /// R@0.3, R@0.5, R@0.7 of the refined intervals.
    pub recall: [f64; 3],
    pub miou: f64,
    pub stages: StageTriple,
    pub gap_below_threshold: f64,
    pub gap_histogram: Vec<HistBin>,
    pub stability: Option<StabilityReport>,
    pub outcomes: Vec<QueryOutcome>,
}

/// Builds the full report. When predictions contain a second decode
/// (`repeat == 1`) for every query, the pair feeds the stability breakdown.
pub fn build_report(pools: &[EvidencePool], preds: &[PredictionRecord], truths: &[QueryTruth]) -> Result<MetricReport> {
    let (stages, outcomes) = stagewise_diagnostics(pools, preds, truths)?;
    let refined: Vec<f64> = outcomes.iter().map(|o| o.refined_iou).collect();
    let mut recall = [0.0; 3];
    for (r, &m) in recall.iter_mut().zip(&RECALL_THRESHOLDS) {
        *r = recall_at(&refined, m)?;
    }
    let gaps: Vec<f64> = outcomes.iter().map(|o| o.citation_gap).collect();
    let second: HashMap<&str, &PredictionRecord> =
        preds.iter().filter(|p| p.repeat == 1).map(|p| (p.id.as_str(), p)).collect();
    let stability = if !second.is_empty() {
        let pairs = outcomes
            .iter()
            .map(|o| {
                let p = second
                    .get(o.id.as_str())
                    .ok_or_else(|| Error::Mismatch(format!("query {} lacks a second decode", o.id)))?;
                Ok((o.refined_iou, iou((p.t_start, p.t_end), (o.gt_start, o.gt_end))))
            })
            .collect::<Result<Vec<_>>>()?;
        Some(stability_decompose(&pairs)?)
    } else {
        None
    };
    Ok(MetricReport {
        samples: outcomes.len(),
        recall,
        miou: mean_iou(&refined)?,
        stages,
        gap_below_threshold: gaps.iter().filter(|&&g| g < GAP_THRESHOLD).count() as f64 / gaps.len() as f64,
        gap_histogram: histogram(&gaps, 0.0, 1.0, 10),
        stability,
        outcomes,
    })
}

impl MetricReport {
    /// Scalar metrics in their fixed export order.
    pub fn scalars(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("samples".to_string(), self.samples as f64),
            ("r@0.3".into(), self.recall[0]),
            ("r@0.5".into(), self.recall[1]),
            ("r@0.7".into(), self.recall[2]),
            ("miou".into(), self.miou),
            ("retrieve_at_k".into(), self.stages.retrieve_at_k),
            ("cited".into(), self.stages.cited),
            ("refined".into(), self.stages.refined),
            ("gap_below_0.10".into(), self.gap_below_threshold),
        ];
        if let Some(s) = &self.stability {
            let mean_delta = if s.abs_delta.is_empty() {
                0.0
            } else {
                s.abs_delta.iter().sum::<f64>() / s.abs_delta.len() as f64
            };
            out.extend([
                ("consistent_miss".to_string(), s.consistent_miss as f64),
                ("collapse_0.0_0.3".into(), s.collapse[0] as f64),
                ("collapse_0.3_0.5".into(), s.collapse[1] as f64),
                ("collapse_0.5_1.0".into(), s.collapse[2] as f64),
                ("stable_nonzero".into(), s.stable_nonzero as f64),
                ("mean_abs_delta_iou".into(), mean_delta),
            ]);
        }
        out
    }
}

fn write_hist_csv(path: &Path, rows: impl IntoIterator<Item = (f64, f64, String)>, value_col: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["bin_left", "bin_right", value_col]).map_err(csv_err)?;
    for (l, r, v) in rows {
        w.write_record([l.to_string(), r.to_string(), v]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Writes `summary.csv`, `per_query.jsonl`, `gap_histogram.csv` and, with
/// stability data, `delta_histogram.csv` (raw counts, bins of 0.02) into `dir`.
pub fn export_report(report: &MetricReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv")).map_err(csv_err)?;
    w.write_record(["metric", "value"]).map_err(csv_err)?;
    for (k, v) in report.scalars() {
        w.write_record([k, v.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;

    let mut jw = BufWriter::new(std::fs::File::create(dir.join("per_query.jsonl"))?);
    for o in &report.outcomes {
        serde_json::to_writer(&mut jw, o)?;
        jw.write_all(b"\n")?;
    }
    jw.flush()?;

    write_hist_csv(
        &dir.join("gap_histogram.csv"),
        report.gap_histogram.iter().map(|b| (b.left, b.right, b.count.to_string())),
        "count",
    )?;
    if let Some(s) = &report.stability {
        let bins = histogram(&s.abs_delta, 0.0, 1.0, 50);
        write_hist_csv(
            &dir.join("delta_histogram.csv"),
            bins.iter().map(|b| (b.left, b.right, b.count.to_string())),
            "count",
        )?;
    }
    Ok(())
}

/// Reads back `summary.csv` as `(metric, value)` rows.
pub fn read_summary(path: &Path) -> Result<Vec<(String, f64)>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parse_err = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: i + 2,
            msg,
        };
        if rec.len() != 2 {
            return Err(parse_err(format!("expected 2 fields, got {}", rec.len())));
        }
        let v: f64 = rec[1].parse().map_err(|e| parse_err(format!("{e}")))?;
        out.push((rec[0].to_string(), v));
    }
    Ok(out)
}

/// Top-two principal-component coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaProjection {
    /// `n × 2`
    pub coords: Tensor,
    /// Variance captured by each component.
    pub variances: [f64; 2],
    /// Fewer than two non-degenerate components; missing columns are zero.
    pub degenerate: bool,
}

/// Projects centered rows onto the two leading eigenvectors of the sample
/// covariance. Each eigenvector's largest-magnitude entry is made positive.
pub fn pca_project(latents: &Tensor) -> Result<PcaProjection> {
    let (n, d) = (latents.rows(), latents.cols());
    if n < 3 {
        return Err(Error::Config(format!("PCA needs at least 3 rows, got {n}")));
    }
    let mean = latents.mean_rows();
    let centered: Vec<f64> = latents
        .data()
        .chunks(d)
        .flat_map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect::<Vec<_>>())
        .collect();
    let x = DMatrix::from_row_slice(n, d, &centered);
    let cov = (x.transpose() * &x) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let scale = cov.trace().abs().max(f64::MIN_POSITIVE);
    let mut coords = Tensor::zeros(&[n, 2]);
    let mut variances = [0.0; 2];
    let mut degenerate = d < 2;
    for (c, &j) in order.iter().take(2).enumerate() {
        let lambda = eig.eigenvalues[j];
        if lambda <= 1e-12 * scale {
            degenerate = true;
            continue;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        let lead = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        variances[c] = lambda;
        for i in 0..n {
            coords.row_mut(i)[c] = (0..d).map(|k| x[(i, k)] * v[k]).sum();
        }
    }
    Ok(PcaProjection {
        coords,
        variances,
        degenerate,
    })
}

/// Writes `index,pc1,pc2,time_order,inside_flag`.
pub fn write_pca_csv(path: &Path, proj: &PcaProjection, time_order: &[usize], inside: &[bool]) -> Result<()> {
    let n = proj.coords.rows();
    if time_order.len() != n || inside.len() != n {
        return Err(Error::Mismatch(format!(
            "{n} projected rows but {} time stamps and {} labels",
            time_order.len(),
            inside.len()
        )));
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["index", "pc1", "pc2", "time_order", "inside_flag"]).map_err(csv_err)?;
    for i in 0..n {
        let r = proj.coords.row(i);
        w.write_record([
            i.to_string(),
            r[0].to_string(),
            r[1].to_string(),
            time_order[i].to_string(),
            (inside[i] as u8).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Leave-one-out nearest-centroid accuracy for binary labels. A held-out
/// row whose class has no other member can only be assigned to the other
/// class; distance ties go to `false`.
pub fn separability_probe(latents: &Tensor, inside: &[bool]) -> Result<f64> {
    let (n, d) = (latents.rows(), latents.cols());
    if inside.len() != n {
        return Err(Error::Mismatch(format!("{n} rows but {} labels", inside.len())));
    }
    let count = [inside.iter().filter(|&&l| !l).count(), inside.iter().filter(|&&l| l).count()];
    if count[0] == 0 || count[1] == 0 {
        return Err(Error::Config("probe needs both inside and outside rows".into()));
    }
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    for (i, &l) in inside.iter().enumerate() {
        for (s, x) in sums[l as usize].iter_mut().zip(latents.row(i)) {
            *s += x;
        }
    }
    let mut correct = 0;
    for (i, &l) in inside.iter().enumerate() {
        let x = latents.row(i);
        let mut dist = [f64::INFINITY; 2];
        for c in 0..2 {
            let (sum, cnt) = if c == l as usize {
                (sums[c].iter().zip(x).map(|(s, v)| s - v).collect::<Vec<_>>(), count[c] - 1)
            } else {
                (sums[c].clone(), count[c])
            };
            if cnt > 0 {
                let centroid: Vec<f64> = sum.iter().map(|s| s / cnt as f64).collect();
                dist[c] = sq_dist(x, &centroid);
            }
        }
        let pred = dist[1] < dist[0];
        correct += (pred == l) as usize;
    }
    Ok(correct as f64 / n as f64)
}
