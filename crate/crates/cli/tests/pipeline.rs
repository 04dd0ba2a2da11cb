use std::fs;
use std::path::Path;

use evground_cli::commands::{cmd_diagnose, cmd_eval, cmd_ground, cmd_pipeline, cmd_stage3, RunPaths};
use evground_cli::config::RunConfig;
use evground_core::Error;

fn tiny(dir: &Path, extra: &[&str]) -> RunConfig {
    let mut args = vec![
        format!("run.dir={}", dir.display()),
        "data.unlabeled=6".into(),
        "data.train=6".into(),
        "data.test=4".into(),
        "stage1.steps=8".into(),
        "stage2.steps=8".into(),
        "stage3.steps=8".into(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    RunConfig::resolve(None, &args).unwrap()
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

const ARTIFACTS: &[&str] = &[
    "checkpoints/stage1.ckpt",
    "checkpoints/stage2.ckpt",
    "checkpoints/stage3.ckpt",
    "pools/test.jsonl",
    "pools/test.f2gd",
    "preds/test.jsonl",
    "reports/eval/summary.csv",
    "reports/eval/per_query.jsonl",
    "reports/stage2.json",
    "logs/stage1_loss.csv",
    "logs/stage3_loss.csv",
    "config.echo",
];

#[test]
fn pipeline_is_reproducible_across_run_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ra = cmd_pipeline(&tiny(&a, &[])).unwrap();
    let rb = cmd_pipeline(&tiny(&b, &[])).unwrap();
    assert_eq!(ra.scalars(), rb.scalars());
    for rel in ARTIFACTS {
        if *rel == "config.echo" {
            continue;
        }
        assert_eq!(read(a.join(rel)), read(b.join(rel)), "{rel} differs");
    }
    let echo = String::from_utf8(read(a.join("config.echo"))).unwrap();
    assert!(echo.contains("stage2.steps = 8"));
}

#[test]
fn eval_and_diagnose_are_byte_identical_on_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path(), &["ground.repeats=2", "ground.temperature=0.5"]);
    cmd_pipeline(&cfg).unwrap();
    let paths = RunPaths::new(&cfg);
    let eval_dir = paths.reports().join("eval");
    let snapshot = |dir: &Path| {
        let mut files: Vec<_> = fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files.into_iter().map(|p| (p.clone(), read(p))).collect::<Vec<_>>()
    };
    let before = snapshot(&eval_dir);
    let preds = read(paths.predictions("test"));
    cmd_ground(&cfg).unwrap();
    assert_eq!(preds, read(paths.predictions("test")), "seeded stochastic decoding must repeat");
    cmd_eval(&cfg).unwrap();
    assert_eq!(before, snapshot(&eval_dir));

    let d1 = cmd_diagnose(&cfg).unwrap();
    let diag = snapshot(&paths.reports().join("diagnose"));
    let d2 = cmd_diagnose(&cfg).unwrap();
    assert_eq!(d1, d2);
    assert_eq!(diag, snapshot(&paths.reports().join("diagnose")));
    assert!(d1.stability.is_some());
    assert!(paths.reports().join("diagnose/pca.csv").exists());
}

#[test]
fn stage3_without_stage2_names_the_missing_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path(), &[]);
    match cmd_stage3(&cfg) {
        Err(Error::MissingArtifact(p)) => assert!(p.ends_with("checkpoints/stage2.ckpt"), "{}", p.display()),
        other => panic!("expected a missing checkpoint, got {other:?}"),
    }
}

#[test]
fn random_init_skips_pre_training() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path(), &["stage2.init=random"]);
    cmd_pipeline(&cfg).unwrap();
    let paths = RunPaths::new(&cfg);
    assert!(!paths.checkpoint("stage1").exists());
    assert!(paths.checkpoint("stage3").exists());
}
