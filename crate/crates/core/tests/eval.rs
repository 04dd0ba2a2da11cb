use evground_core::eval::*;
use evground_core::grounding::PredictionRecord;
use evground_core::numerics::{Rng, Tensor};
use evground_core::proposal::{EvidencePool, EvidenceUnit};
use evground_core::Error;
use proptest::prelude::*;
use std::collections::HashSet;

/// Interval on a 0.1 s grid as a set of grid cells.
fn cells(iv: (u32, u32)) -> HashSet<u32> {
    (iv.0..iv.1).collect()
}

fn secs(iv: (u32, u32)) -> (f64, f64) {
    (iv.0 as f64 / 10.0, iv.1 as f64 / 10.0)
}

/// IoU by counting shared grid cells.
fn cell_iou(a: (u32, u32), b: (u32, u32)) -> f64 {
    let (ca, cb) = (cells(a), cells(b));
    ca.intersection(&cb).count() as f64 / ca.union(&cb).count() as f64
}

fn grid_interval(rng: &mut Rng, max: u32) -> (u32, u32) {
    let a = rng.int_range(0, max as usize - 1) as u32;
    let b = rng.int_range(a as usize + 1, max as usize) as u32;
    (a, b)
}

fn unit(id: usize, iv: (f64, f64)) -> EvidenceUnit {
    EvidenceUnit {
        span_id: id,
        interval: iv,
        tokens: Tensor::zeros(&[1, 2]),
        objectness: 0.0,
        span: (0.0, 1.0),
        padded: false,
    }
}

fn pred(id: &str, video: &str, repeat: usize, cited: usize, t: (f64, f64)) -> PredictionRecord {
    PredictionRecord {
        id: id.into(),
        video_id: video.into(),
        repeat,
        cited_id: cited,
        t_start: t.0,
        t_end: t.1,
        identify: vec![],
        response: String::new(),
    }
}

#[test]
fn iou_recall_and_miou_match_cell_counting() {
    let mut rng = Rng::new(1);
    let mut ious = Vec::new();
    let mut closed = Vec::new();
    for _ in 0..1000 {
        let (a, b) = (grid_interval(&mut rng, 300), grid_interval(&mut rng, 300));
        let v = iou(secs(a), secs(b));
        assert!((v - cell_iou(a, b)).abs() < 1e-9);
        ious.push(cell_iou(a, b));
        closed.push(v);
    }
    for m in RECALL_THRESHOLDS {
        // exact cell ratios counted over a sorted copy; the closed form must agree
        let mut sorted = ious.clone();
        sorted.sort_by(f64::total_cmp);
        let below = sorted.partition_point(|&v| v < m);
        let want = (sorted.len() - below) as f64 / sorted.len() as f64;
        assert_eq!(recall_at(&ious, m).unwrap(), want);
        assert_eq!(recall_at(&closed, m).unwrap(), want);
    }
    let kahan = ious.iter().fold((0.0f64, 0.0f64), |(s, c), &x| {
        let y = x - c;
        let t = s + y;
        (t, (t - s) - y)
    });
    assert!((mean_iou(&ious).unwrap() - kahan.0 / 1000.0).abs() < 1e-12);
}

/// 50 queries over 10 pools with hand-placed citations and refinements.
fn fixture(rng: &mut Rng) -> (Vec<EvidencePool>, Vec<PredictionRecord>, Vec<QueryTruth>, Vec<[f64; 3]>) {
    let mut pools = Vec::new();
    let mut grid_pools = Vec::new();
    for v in 0..10 {
        let ivs: Vec<(u32, u32)> = (0..8).map(|_| grid_interval(rng, 600)).collect();
        pools.push(EvidencePool {
            video_id: format!("v{v}"),
            duration_s: 60.0,
            fps: 1.0,
            units: ivs.iter().enumerate().map(|(i, &iv)| unit(i + 1, secs(iv))).collect(),
        });
        grid_pools.push(ivs);
    }
    let (mut preds, mut truths, mut expected) = (Vec::new(), Vec::new(), Vec::new());
    for q in 0..50 {
        let v = q % 10;
        let gt = grid_interval(rng, 600);
        let cited = rng.int_range(1, 8);
        let refined = grid_interval(rng, 600);
        let id = format!("q{q}");
        preds.push(pred(&id, &format!("v{v}"), 0, cited, secs(refined)));
        truths.push(QueryTruth {
            id,
            video_id: format!("v{v}"),
            interval: secs(gt),
        });
        let best = grid_pools[v].iter().map(|&iv| cell_iou(iv, gt)).fold(0.0, f64::max);
        expected.push([best, cell_iou(grid_pools[v][cited - 1], gt), cell_iou(refined, gt)]);
    }
    (pools, preds, truths, expected)
}

#[test]
fn stagewise_matches_hand_computed_fixture() {
    let mut rng = Rng::new(2);
    let (pools, preds, truths, expected) = fixture(&mut rng);
    let (triple, outcomes) = stagewise_diagnostics(&pools, &preds, &truths).unwrap();
    let mean = |k: usize| expected.iter().map(|e| e[k]).sum::<f64>() / 50.0;
    assert!((triple.retrieve_at_k - mean(0)).abs() < 1e-9);
    assert!((triple.cited - mean(1)).abs() < 1e-9);
    assert!((triple.refined - mean(2)).abs() < 1e-9);
    assert!(triple.retrieve_at_k >= triple.cited);
    for (o, e) in outcomes.iter().zip(&expected) {
        assert!((o.citation_gap - (e[0] - e[1])).abs() < 1e-9);
        assert!((0.0..=1.0).contains(&o.citation_gap));
    }
    let report = build_report(&pools, &preds, &truths).unwrap();
    let within = expected.iter().filter(|e| e[0] - e[1] < GAP_THRESHOLD - 1e-12).count();
    let near = expected.iter().filter(|e| (e[0] - e[1] - GAP_THRESHOLD).abs() < 1e-12).count();
    assert_eq!(near, 0, "fixture should avoid gaps on the threshold");
    assert_eq!(report.gap_below_threshold, within as f64 / 50.0);
    assert_eq!(report.gap_histogram.iter().map(|b| b.count).sum::<usize>(), 50);
    assert!(report.stability.is_none());
}

#[test]
fn mismatched_records_are_reported() {
    let mut rng = Rng::new(3);
    let (pools, mut preds, truths, _) = fixture(&mut rng);
    assert!(matches!(stagewise_diagnostics(&pools[1..], &preds, &truths), Err(Error::Mismatch(_))));
    assert!(matches!(stagewise_diagnostics(&pools, &preds[1..], &truths), Err(Error::Mismatch(_))));
    preds[0].cited_id = 9;
    assert!(matches!(stagewise_diagnostics(&pools, &preds, &truths), Err(Error::Mismatch(_))));
    preds[0].cited_id = 1;
    preds[0].video_id = "v3".into();
    assert!(matches!(stagewise_diagnostics(&pools, &preds, &truths), Err(Error::Mismatch(_))));
    assert!(matches!(stagewise_diagnostics(&pools, &preds, &[]), Err(Error::Empty(_))));
}

#[test]
fn stability_matches_direct_classification() {
    let mut rng = Rng::new(4);
    let pairs: Vec<(f64, f64)> = (0..1000)
        .map(|_| {
            let draw = |rng: &mut Rng| if rng.uniform() < 0.3 { 0.0 } else { rng.uniform() };
            (draw(&mut rng), draw(&mut rng))
        })
        .collect();
    let r = stability_decompose(&pairs).unwrap();
    let (mut miss, mut col, mut stable) = (0, [0; 3], 0);
    for &(a, b) in &pairs {
        if a == 0.0 && b == 0.0 {
            miss += 1;
        } else if a != 0.0 && b != 0.0 {
            stable += 1;
        } else {
            let v = a + b;
            let i = if v < 0.3 { 0 } else if v < 0.5 { 1 } else { 2 };
            col[i] += 1;
        }
    }
    assert_eq!((r.consistent_miss, r.collapse, r.stable_nonzero), (miss, col, stable));
    assert_eq!(r.total(), 1000);
    assert!(stability_decompose(&[(0.5, 1.2)]).is_err());
}

#[test]
fn report_with_repeats_exports_and_reads_back() {
    let mut rng = Rng::new(5);
    let (pools, mut preds, truths, _) = fixture(&mut rng);
    let second: Vec<PredictionRecord> = preds
        .iter()
        .map(|p| PredictionRecord {
            repeat: 1,
            t_start: 0.0,
            t_end: 0.1,
            ..p.clone()
        })
        .collect();
    preds.extend(second);
    let report = build_report(&pools, &preds, &truths).unwrap();
    let s = report.stability.as_ref().unwrap();
    assert_eq!(s.total(), 50);
    let dir = tempfile::tempdir().unwrap();
    export_report(&report, dir.path()).unwrap();
    let summary = read_summary(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary, report.scalars());
    let names: Vec<&str> = summary.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(
        &names[..9],
        ["samples", "r@0.3", "r@0.5", "r@0.7", "miou", "retrieve_at_k", "cited", "refined", "gap_below_0.10"]
    );
    let per_query = std::fs::read_to_string(dir.path().join("per_query.jsonl")).unwrap();
    let back: Vec<QueryOutcome> = per_query.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(back, report.outcomes);
    let delta = std::fs::read_to_string(dir.path().join("delta_histogram.csv")).unwrap();
    assert_eq!(delta.lines().count(), 51);
    assert!(delta.starts_with("bin_left,bin_right,count\n"));
    let gap = std::fs::read_to_string(dir.path().join("gap_histogram.csv")).unwrap();
    let total: usize = gap.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 50);
    assert!(matches!(read_summary(&dir.path().join("nope.csv")), Err(Error::MissingArtifact(_))));
    // a missing second decode is an error, not a silent skip
    preds.pop();
    assert!(matches!(build_report(&pools, &preds, &truths), Err(Error::Mismatch(_))));
}

#[test]
fn summary_golden() {
    let pools = vec![EvidencePool {
        video_id: "v".into(),
        duration_s: 10.0,
        fps: 1.0,
        units: vec![unit(1, (0.0, 4.0)), unit(2, (2.0, 6.0))],
    }];
    let truths = vec![QueryTruth {
        id: "q".into(),
        video_id: "v".into(),
        interval: (2.0, 6.0),
    }];
    let preds = vec![pred("q", "v", 0, 1, (2.0, 5.0))];
    let report = build_report(&pools, &preds, &truths).unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_report(&report, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(
        text,
        "metric,value\nsamples,1\nr@0.3,1\nr@0.5,1\nr@0.7,1\nmiou,0.75\nretrieve_at_k,1\n\
         cited,0.3333333333333333\nrefined,0.75\ngap_below_0.10,0\n"
    );
}

#[test]
fn histogram_counts_everything() {
    let mut rng = Rng::new(6);
    let values: Vec<f64> = (0..500).map(|_| rng.uniform_range(-0.2, 1.2)).collect();
    let h = histogram(&values, 0.0, 1.0, 10);
    assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 500);
    assert_eq!(h[9].right, 1.0);
    let d = histogram_density(&h, true);
    assert_eq!(d.len(), 9);
    let mass: f64 = d.iter().map(|(l, r, dens)| (r - l) * dens).sum();
    assert!((mass - 1.0).abs() < 1e-12);
}

#[test]
fn pca_preserves_planar_geometry() {
    // Rows on a rotated plane in 5-D: the 2-D projection keeps all distances.
    let mut rng = Rng::new(7);
    let basis = [[0.6, 0.8, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.6, -0.8]];
    let pts: Vec<[f64; 2]> = (0..40).map(|_| [rng.normal() * 3.0, rng.normal()]).collect();
    let rows: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| (0..5).map(|k| 7.0 + p[0] * basis[0][k] + p[1] * basis[1][k]).collect())
        .collect();
    let proj = pca_project(&Tensor::from_rows(&rows).unwrap()).unwrap();
    assert!(!proj.degenerate);
    assert!(proj.variances[0] >= proj.variances[1]);
    for i in 0..40 {
        for j in 0..i {
            let d_in: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b).powi(2)).sum();
            let (a, b) = (proj.coords.row(i), proj.coords.row(j));
            let d_out = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
            assert!((d_in - d_out).abs() < 1e-8 * (1.0 + d_in));
        }
    }
    let line: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64, 0.0]).collect();
    assert!(pca_project(&Tensor::from_rows(&line).unwrap()).unwrap().degenerate);
    assert!(pca_project(&Tensor::zeros(&[2, 3])).is_err());
}

#[test]
fn pca_csv_layout() {
    let mut rng = Rng::new(8);
    let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.normal()).collect()).collect();
    let proj = pca_project(&Tensor::from_rows(&rows).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pca.csv");
    let inside = [false, true, true, false, false, true];
    write_pca_csv(&path, &proj, &[0, 1, 2, 3, 4, 5], &inside).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,pc1,pc2,time_order,inside_flag"));
    assert_eq!(lines.count(), 6);
    assert!(matches!(write_pca_csv(&path, &proj, &[0], &inside), Err(Error::Mismatch(_))));
}

/// Leave-one-out nearest centroid written out by recomputing both centroids
/// from scratch for every held-out row.
fn naive_probe(rows: &[Vec<f64>], labels: &[bool]) -> f64 {
    let mut correct = 0;
    for i in 0..rows.len() {
        let mut dist = [f64::INFINITY; 2];
        for (c, slot) in dist.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = (0..rows.len()).filter(|&j| j != i && labels[j] == (c == 1)).map(|j| &rows[j]).collect();
            if members.is_empty() {
                continue;
            }
            let d = rows[i].len();
            let centroid: Vec<f64> = (0..d).map(|k| members.iter().map(|m| m[k]).sum::<f64>() / members.len() as f64).collect();
            *slot = rows[i].iter().zip(&centroid).map(|(a, b)| (a - b).powi(2)).sum();
        }
        correct += ((dist[1] < dist[0]) == labels[i]) as usize;
    }
    correct as f64 / rows.len() as f64
}

#[test]
fn probe_matches_naive_leave_one_out() {
    let mut rng = Rng::new(9);
    for trial in 0..50 {
        let n = 4 + trial % 20;
        let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let shift = trial as f64 * 0.05;
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| (0..4).map(|_| rng.normal() + if l { shift } else { 0.0 }).collect())
            .collect();
        let got = separability_probe(&Tensor::from_rows(&rows).unwrap(), &labels).unwrap();
        assert!((got - naive_probe(&rows, &labels)).abs() < 1e-12);
    }
    let rows = Tensor::zeros(&[3, 2]);
    assert!(separability_probe(&rows, &[true, true, true]).is_err());
    assert!(matches!(separability_probe(&rows, &[true]), Err(Error::Mismatch(_))));
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in 0u32..500, la in 1u32..200, b in 0u32..500, lb in 1u32..200) {
        let (x, y) = (secs((a, a + la)), secs((b, b + lb)));
        let v = iou(x, y);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(y, x));
        prop_assert_eq!(iou(x, x), 1.0);
    }

    #[test]
    fn recall_is_monotone_and_bounded_by_miou(v in prop::collection::vec(0.0f64..=1.0, 1..100)) {
        let r: Vec<f64> = RECALL_THRESHOLDS.iter().map(|&m| recall_at(&v, m).unwrap()).collect();
        prop_assert!(r[0] >= r[1] && r[1] >= r[2]);
        // Markov: P(v ≥ m) ≤ E[v] / m
        let miou = mean_iou(&v).unwrap();
        for (ri, m) in r.iter().zip(RECALL_THRESHOLDS) {
            prop_assert!(*ri <= miou / (m - IOU_EPS) + 1e-12);
        }
    }

    #[test]
    fn stability_partitions_every_pair(pairs in prop::collection::vec((prop_oneof![Just(0.0), 0.0f64..=1.0], prop_oneof![Just(0.0), 0.0f64..=1.0]), 0..200)) {
        let r = stability_decompose(&pairs).unwrap();
        prop_assert_eq!(r.total(), pairs.len());
        prop_assert_eq!(r.classes.len(), pairs.len());
        for (d, (a, b)) in r.abs_delta.iter().zip(&pairs) {
            prop_assert!((0.0..=1.0).contains(d));
            prop_assert_eq!(*d, (a - b).abs());
        }
    }

    #[test]
    fn best_bounds_cited(seed in 0u64..5000) {
        let mut rng = Rng::new(seed);
        let ivs: Vec<(u32, u32)> = (0..8).map(|_| grid_interval(&mut rng, 300)).collect();
        let pool = EvidencePool {
            video_id: "v".into(),
            duration_s: 30.0,
            fps: 1.0,
            units: ivs.iter().enumerate().map(|(i, &iv)| unit(i + 1, secs(iv))).collect(),
        };
        let gt = secs(grid_interval(&mut rng, 300));
        let (best_id, best) = best_in_pool(&pool, gt).unwrap();
        prop_assert_eq!(iou(pool.units[best_id - 1].interval, gt), best);
        for id in 1..=8 {
            let gap = citation_gap(&pool, id, gt).unwrap();
            prop_assert!((0.0..=1.0).contains(&gap));
        }
    }
}
