use evground_core::eval::iou;
use evground_core::grounding::*;
use evground_core::numerics::*;
use evground_core::numerics::Rng;
use evground_core::perception::{TemporalModule, TemporalModuleConfig};
use evground_core::proposal::*;
use evground_core::syndata::{generate_corpus, round_dec, QuerySample, SynConfig};
use evground_core::Error;
use proptest::prelude::*;

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;
const DIM: usize = 8;

fn random(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal()).collect()).unwrap()
}

fn pool_with(intervals: &[(f64, f64)], duration: f64, m: usize, rng: &mut Rng) -> EvidencePool {
    EvidencePool {
        video_id: "vid".into(),
        duration_s: duration,
        fps: 1.0,
        units: intervals
            .iter()
            .enumerate()
            .map(|(i, &iv)| EvidenceUnit {
                span_id: i + 1,
                interval: iv,
                tokens: random(rng, &[m, DIM]),
                objectness: -(i as f64),
                span: (iv.0 / duration, iv.1 / duration),
                padded: false,
            })
            .collect(),
    }
}

fn random_interval(rng: &mut Rng, duration: f64) -> (f64, f64) {
    let a = round_dec(rng.uniform_range(0.0, duration - 1.0), 1);
    let b = round_dec(rng.uniform_range(a + 0.1, duration), 1).max(round_dec(a + 0.1, 1));
    (a, b)
}

fn random_pool(rng: &mut Rng, k: usize, m: usize) -> EvidencePool {
    let duration = round_dec(rng.uniform_range(20.0, 120.0), 1);
    let ivs: Vec<_> = (0..k).map(|_| random_interval(rng, duration)).collect();
    pool_with(&ivs, duration, m, rng)
}

fn query_for(pool: &EvidencePool, target: (f64, f64), rng: &mut Rng) -> QuerySample {
    QuerySample {
        id: "q0".into(),
        video_id: pool.video_id.clone(),
        query_embedding: random(rng, &[DIM]),
        target,
        text: "a person cooking".into(),
        duration_s: pool.duration_s,
    }
}

fn grounder(seed: u64) -> (ParamStore, SurrogateGrounder) {
    let mut store = ParamStore::new();
    let g = SurrogateGrounder::new(&mut store, GROUNDER_PREFIX, DIM, 4, DIM, &GrounderConfig::default(), &mut Rng::new(seed)).unwrap();
    (store, g)
}

fn golden_pool() -> EvidencePool {
    let ivs = [
        (0.0, 2.5),
        (1.0, 3.0),
        (2.5, 6.0),
        (0.5, 1.5),
        (3.0, 4.2),
        (4.0, 6.0),
        (0.0, 6.0),
        (5.1, 5.9),
    ];
    pool_with(&ivs, 6.0, 4, &mut Rng::new(0))
}

#[test]
fn instruction_matches_golden_files() {
    let pool = golden_pool();
    let train = serialize_instruction(&pool, "During what time, can you see a person cooking", PromptMode::Train, 8, 4).unwrap();
    assert_eq!(train, include_str!("golden/instruction_train.txt"));
    let inference = serialize_instruction(&pool, "a person cooking", PromptMode::Inference, 8, 4).unwrap();
    assert_eq!(inference, include_str!("golden/instruction_inference.txt"));
    assert!(inference.contains("During what time, can you see a person cooking."));
    assert!(inference.contains("You MUST cite exactly one span id token"));
}

#[test]
fn response_matches_golden_file() {
    let answer = render_answer("a person cooking", (2.5, 4.2));
    assert_eq!(render_response(&answer, 5), include_str!("golden/response.txt"));
}

#[test]
fn serializer_rejects_bad_inputs() {
    let pool = golden_pool();
    assert!(matches!(
        serialize_instruction(&pool, "  ", PromptMode::Inference, 8, 4),
        Err(Error::Empty(_))
    ));
    assert!(matches!(
        serialize_instruction(&pool, "x", PromptMode::Inference, 7, 4),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        serialize_instruction(&pool, "x", PromptMode::Inference, 8, 3),
        Err(Error::Config(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn response_round_trip(z in 1usize..=8, a in 0u32..1000, len in 1u32..1000, text in "[a-z ]{0,30}") {
        let iv = (a as f64 / 10.0, (a + len) as f64 / 10.0);
        let answer = render_answer(&text, iv);
        let r = parse_response(&render_response(&answer, z), 8).unwrap();
        prop_assert_eq!(r.cited_id, z);
        prop_assert_eq!(r.interval, Some(iv));
    }

    #[test]
    fn two_citations_always_rejected(a in 1usize..=8, b in 1usize..=8, pre in "[a-z ]{0,20}") {
        let text = format!("{pre} <Span_{a}> and <Span_{b}>.");
        prop_assert!(matches!(parse_response(&text, 8), Err(Error::MultipleCitations(2))));
    }

    #[test]
    fn measure_stays_local(seed in 0u64..1000, bias0 in -20.0f64..20.0, bias1 in -20.0f64..20.0) {
        let mut rng = Rng::new(seed);
        let (mut store, g) = grounder(seed);
        *store.params.get_mut(g.measure.fc2.b) = Tensor::vector(vec![bias0, bias1]);
        let pool = random_pool(&mut rng, 8, 4);
        let q = random(&mut rng, &[DIM]);
        for u in &pool.units {
            let (t, _) = g.measure(&store.params, &pool, u.span_id, &q).unwrap();
            let len = u.interval.1 - u.interval.0;
            prop_assert!(t.0 <= t.1);
            prop_assert!(0.0 <= t.0 && t.1 <= pool.duration_s);
            prop_assert!((t.0 - u.interval.0).abs() <= 0.5 * len + 1e-12);
            prop_assert!((t.1 - u.interval.1).abs() <= 0.5 * len + 1e-12);
        }
    }

    #[test]
    fn identify_is_shift_invariant(seed in 0u64..1000, shift in -50.0f64..50.0, temp in 0.0f64..3.0) {
        let mut rng = Rng::new(seed);
        let logits: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let (a, b) = (softmax(&logits), softmax(&shifted));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        let s1 = sample_citation(&logits, temp, &mut Rng::new(seed + 1));
        let s2 = sample_citation(&shifted, temp, &mut Rng::new(seed + 1));
        prop_assert_eq!(s1, s2);
    }
}

#[test]
fn identical_units_give_uniform_identification() {
    let mut rng = Rng::new(3);
    let (store, g) = grounder(3);
    let mut pool = pool_with(&[(1.0, 4.0); 8], 10.0, 4, &mut rng);
    let tok = pool.units[0].tokens.clone();
    pool.units.iter_mut().for_each(|u| u.tokens = tok.clone());
    let q = random(&mut rng, &[DIM]);
    let dist = g.identify(&store.params, &pool, &q).unwrap();
    for p in &dist {
        assert!((p - 0.125).abs() < 1e-12);
    }
    assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);

    let query = query_for(&pool, (0.0, 5.0), &mut rng);
    let l = stage3_loss(&g, &store.params, &pool, &query, 1.0, 1.0, 1.0, &mut store.zero_grads()).unwrap();
    assert!((l.id_loss - 8f64.ln()).abs() < 1e-12, "{}", l.id_loss);
}

#[test]
fn untrained_identification_is_at_chance() {
    let mut hits = 0;
    let mut total = 0;
    for seed in 0..5 {
        let (store, g) = grounder(100 + seed);
        let mut rng = Rng::new(seed);
        for _ in 0..200 {
            let pool = random_pool(&mut rng, 8, 4);
            let target = random_interval(&mut rng, pool.duration_s);
            let z = assign_citation_target(&pool, target).unwrap().id;
            let q = random(&mut rng, &[DIM]);
            let dist = g.identify(&store.params, &pool, &q).unwrap();
            let arg = (0..8).fold(0, |b, i| if dist[i] > dist[b] { i } else { b });
            hits += (arg + 1 == z) as usize;
            total += 1;
        }
    }
    let acc = hits as f64 / total as f64;
    assert!((acc - 0.125).abs() < 0.05, "accuracy {acc}");
}

#[test]
fn measure_zero_offsets_and_clamping() {
    let mut rng = Rng::new(4);
    let (mut store, g) = grounder(4);
    let pool = pool_with(&[(0.0, 4.0), (3.0, 9.0)], 10.0, 4, &mut rng);
    let q = random(&mut rng, &[DIM]);
    let fc2 = &g.measure.fc2;
    *store.params.get_mut(fc2.w) = Tensor::zeros(store.params.get(fc2.w).shape());
    for u in &pool.units {
        assert_eq!(g.measure(&store.params, &pool, u.span_id, &q).unwrap().0, u.interval);
    }
    *store.params.get_mut(fc2.b) = Tensor::vector(vec![-50.0, 50.0]);
    let (t, _) = g.measure(&store.params, &pool, 1, &q).unwrap();
    assert_eq!(t, (0.0, 6.0));
    let (t, _) = g.measure(&store.params, &pool, 2, &q).unwrap();
    assert_eq!(t, (0.0, 10.0));
}

#[test]
fn stage3_loss_endpoints() {
    let mut rng = Rng::new(5);
    let (mut store, g) = grounder(5);
    let mut pool = pool_with(&[(0.0, 3.0), (2.0, 6.0), (5.0, 9.0)], 10.0, 4, &mut rng);
    // only the second unit has a positive first evidence coordinate
    for u in pool.units.iter_mut() {
        let v = if u.span_id == 2 { 1.0 } else { -1.0 };
        u.tokens = Tensor::full(&[4, DIM], 0.0);
        for r in 0..4 {
            u.tokens.row_mut(r)[0] = v;
        }
    }
    let feat = 3 * DIM + 16;
    let hidden = GrounderConfig::default().hidden;
    let mut w1 = vec![0.0; feat * hidden];
    w1[DIM * hidden] = 1000.0; // p̄[0] → hidden unit 0
    *store.params.get_mut(g.identify.fc1.w) = Tensor::new(vec![feat, hidden], w1).unwrap();
    *store.params.get_mut(g.identify.fc1.b) = Tensor::zeros(&[hidden]);
    let mut w2 = vec![0.0; hidden];
    w2[0] = 1.0;
    *store.params.get_mut(g.identify.fc2.w) = Tensor::new(vec![hidden, 1], w2).unwrap();
    *store.params.get_mut(g.measure.fc2.w) = Tensor::zeros(&[hidden, 2]);
    *store.params.get_mut(g.measure.fc2.b) = Tensor::zeros(&[2]);

    let q = query_for(&pool, (2.0, 6.0), &mut rng);
    let l = stage3_loss(&g, &store.params, &pool, &q, 1.0, 1.0, 1.0, &mut store.zero_grads()).unwrap();
    assert_eq!(l.target.id, 2);
    assert_eq!((l.total, l.id_loss, l.time_loss), (0.0, 0.0, 0.0));

    let q = query_for(&pool, (2.5, 7.0), &mut rng);
    let l = stage3_loss(&g, &store.params, &pool, &q, 0.0, 2.0, 1.0, &mut store.zero_grads()).unwrap();
    assert!((l.time_loss - 1.5 / 10.0).abs() < 1e-12);
    assert_eq!(l.total, 2.0 * l.time_loss);
}

#[test]
fn stage3_loss_gradients_cover_params_and_tokens() {
    let mut rng = Rng::new(6);
    let (mut store, g) = grounder(6);
    let base = random_pool(&mut rng, 5, 4);
    let tok_ids: Vec<ParamId> = base
        .units
        .iter()
        .map(|u| store.add(&format!("tokens.{}", u.span_id), u.tokens.clone()).unwrap())
        .collect();
    let target = base.units[2].interval;
    let query = query_for(&base, (target.0 + 0.37, target.1 + 1.13), &mut rng);
    let pool_from = |p: &Params| {
        let mut pool = base.clone();
        for (u, &id) in pool.units.iter_mut().zip(&tok_ids) {
            u.tokens = p.get(id).clone();
        }
        pool
    };
    let (a, b) = (0.7, 1.3);
    let mut grads = store.zero_grads();
    let l = stage3_loss(&g, &store.params, &pool_from(&store.params), &query, a, b, 1.0, &mut grads).unwrap();
    for (d, &id) in l.dtokens.iter().zip(&tok_ids) {
        grads.accumulate(id, d.data());
    }
    let loss = |p: &Params| Ok(stage3_loss(&g, p, &pool_from(p), &query, a, b, 1.0, &mut Grads::zeros_like(p))?.total);
    let report = grad_check(&store.params, loss, &grads, H, TOL).unwrap();
    assert!(report.passed, "{report}");
    assert!(report.groups.iter().filter(|r| r.name.starts_with("ground.measure")).all(|r| r.max_abs_grad > 0.0));
}

fn small_model(seed: u64, gcfg: &GrounderConfig) -> (ParamStore, GroundingModel) {
    let mut rng = Rng::new(seed);
    let mut store = ParamStore::new();
    let tcfg = TemporalModuleConfig {
        dim: DIM,
        depth: 1,
        heads: 2,
        mlp_ratio: 2,
        ..TemporalModuleConfig::default()
    };
    let f = TemporalModule::new(&mut store, "f", &tcfg, &mut rng).unwrap();
    let pcfg = ProposalConfig {
        depth: 1,
        k: 4,
        m: 2,
        see_depth: 1,
        ..ProposalConfig::default()
    };
    let pm = PoolModel::new(&mut store, f, &pcfg, &mut rng).unwrap();
    let model = GroundingModel::new(&mut store, pm, DIM, gcfg, &mut rng).unwrap();
    (store, model)
}

fn small_item(seed: u64) -> GroundingItem {
    let syn = SynConfig {
        dim: DIM,
        spatial_tokens: 1,
        min_duration_s: 16.0,
        max_duration_s: 20.0,
        min_events: 1,
        max_events: 2,
        min_event_s: 3.0,
        max_event_s: 8.0,
        ..SynConfig::default()
    };
    let c = generate_corpus(&syn, 1, seed).unwrap();
    let (v, qs) = &c.items[0];
    GroundingItem {
        video_id: v.id.clone(),
        video: LabeledVideo::from_video(v),
        queries: qs.clone(),
    }
}

#[test]
fn stage3_objective_gradient() {
    let gcfg = GrounderConfig {
        hidden: 6,
        gamma: 0.3,
        ..GrounderConfig::default()
    };
    let (store, model) = small_model(7, &gcfg);
    let item = small_item(7);
    let (_, g) = model.stage3_objective(&store.params, &item).unwrap();
    let loss = |p: &Params| Ok(model.stage3_objective(p, &item)?.0.total);
    let report = grad_check(&store.params, loss, &g, H, TOL).unwrap();
    assert!(report.passed, "{report}");
    for prefix in ["f.", "h.", "see.", "ground."] {
        assert!(
            report.groups.iter().any(|r| r.name.starts_with(prefix) && r.max_abs_grad > 0.0),
            "no gradient reaches {prefix}"
        );
    }
}

#[test]
fn zero_gamma_leaves_the_proposal_head_without_gradient() {
    let gcfg = GrounderConfig {
        gamma: 0.0,
        ..GrounderConfig::default()
    };
    let (store, model) = small_model(8, &gcfg);
    let (l, g) = model.stage3_objective(&store.params, &small_item(8)).unwrap();
    assert_eq!(l.reg, 0.0);
    let mut enc = 0.0f64;
    for (id, t) in g.iter() {
        let name = store.params.name(id);
        if name.starts_with("h.") {
            assert_eq!(t.max_abs(), 0.0, "{name}");
        }
        if name.starts_with("f.") {
            enc = enc.max(t.max_abs());
        }
    }
    assert!(enc > 0.0, "evidence path should reach the encoder");
}

#[test]
fn zero_perception_rate_freezes_encoder_and_head() {
    let gcfg = GrounderConfig {
        perception_lr_scale: 0.0,
        ..GrounderConfig::default()
    };
    let (mut store, model) = small_model(9, &gcfg);
    let before = store.params.clone();
    let items = vec![small_item(9), small_item(10)];
    let sched = Stage3Schedule {
        steps: 5,
        batch: 2,
        peak_lr: 1e-2,
        warmup_frac: 0.0,
        weight_decay: 0.1,
    };
    train_stage3(&mut store, &model, &items, &sched, &mut Rng::new(1)).unwrap();
    let mut moved = false;
    for (name, t) in store.params.iter() {
        let old = before.get(before.id(name).unwrap());
        if name.starts_with("f.") || name.starts_with("h.") {
            assert_eq!(t, old, "{name} changed");
        } else if t != old {
            moved = true;
        }
    }
    assert!(moved);
}

#[test]
fn training_improves_refined_iou() {
    let syn = SynConfig {
        dim: DIM,
        spatial_tokens: 2,
        ..SynConfig::default()
    };
    let train = generate_corpus(&syn, 40, 11).unwrap();
    let test = generate_corpus(&syn, 20, 12).unwrap();
    let (mut store, model) = small_model(12, &GrounderConfig::default());
    let refined = |store: &ParamStore| {
        let mut total = 0.0;
        let mut n = 0.0;
        for (v, qs) in &test.items {
            let pool = model.pool.build_pool(&store.params, v).unwrap();
            for q in qs {
                let g = Grounder::Surrogate {
                    model: &model.grounder,
                    params: &store.params,
                };
                let out = ground(g, &pool, q, 0.0, &mut Rng::new(0)).unwrap();
                total += iou(out.interval, q.target);
                n += 1.0;
            }
        }
        total / n
    };
    let before = refined(&store);
    let items: Vec<GroundingItem> = train
        .items
        .iter()
        .map(|(v, qs)| GroundingItem {
            video_id: v.id.clone(),
            video: LabeledVideo::from_video(v),
            queries: qs.clone(),
        })
        .collect();
    let sched = Stage3Schedule {
        steps: 300,
        batch: 2,
        peak_lr: 2e-3,
        warmup_frac: 0.05,
        weight_decay: 0.01,
    };
    train_stage3(&mut store, &model, &items, &sched, &mut Rng::new(2)).unwrap();
    let after = refined(&store);
    assert!(after > before, "refined mIoU {before:.3} -> {after:.3}");
}

#[test]
fn ground_contracts() {
    let mut rng = Rng::new(13);
    let (store, g) = grounder(13);
    let pool = random_pool(&mut rng, 8, 4);
    let q = query_for(&pool, random_interval(&mut rng, pool.duration_s), &mut rng);
    let sur = Grounder::Surrogate {
        model: &g,
        params: &store.params,
    };
    let a = ground(sur, &pool, &q, 0.0, &mut Rng::new(1)).unwrap();
    let b = ground(sur, &pool, &q, 0.0, &mut Rng::new(2)).unwrap();
    assert_eq!(a, b);
    let parsed = parse_response(&a.response, 8).unwrap();
    assert_eq!((parsed.cited_id, parsed.interval), (a.cited_id, Some(a.interval)));
    assert!(a.interval.0 < a.interval.1);

    let o = ground(Grounder::Oracle, &pool, &q, 0.0, &mut rng).unwrap();
    let best = pool.units.iter().map(|u| iou(u.interval, q.target)).fold(0.0, f64::max);
    assert_eq!(iou(o.interval, q.target), best);

    let empty = EvidencePool {
        units: vec![],
        ..pool.clone()
    };
    assert!(matches!(ground(sur, &empty, &q, 0.0, &mut rng), Err(Error::Empty(_))));
}

#[test]
fn predictions_round_trip() {
    let mut rng = Rng::new(14);
    let pool = random_pool(&mut rng, 8, 4);
    let q = query_for(&pool, (1.0, 5.0), &mut rng);
    let out = ground(Grounder::Oracle, &pool, &q, 0.0, &mut rng).unwrap();
    let recs = vec![PredictionRecord::new(&q, 0, &out), PredictionRecord::new(&q, 1, &out)];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("preds/test.jsonl");
    write_predictions(&path, &recs).unwrap();
    assert_eq!(read_predictions(&path).unwrap(), recs);
    assert!(matches!(
        read_predictions(&dir.path().join("missing.jsonl")),
        Err(Error::MissingArtifact(_))
    ));
}
