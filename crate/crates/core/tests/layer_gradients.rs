use evground_core::numerics::*;
use evground_core::Result;

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn random(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal()).collect()).unwrap()
}

/// Registers an input tensor so its gradient is checked alongside the weights.
fn input(store: &mut ParamStore, name: &str, rng: &mut Rng, shape: &[usize]) -> ParamId {
    let t = random(rng, shape);
    store.add(name, t).unwrap()
}

fn proj_loss(y: &Tensor, r: &Tensor) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn check(
    store: &ParamStore,
    loss: impl Fn(&Params) -> Result<f64>,
    grads: &Grads,
) -> GradCheckReport {
    let report = grad_check(&store.params, loss, grads, H, TOL).unwrap();
    assert!(report.passed, "{report}");
    report
}

#[test]
fn linear_layer() {
    let mut rng = Rng::new(10);
    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "lin", 4, 3, &mut rng).unwrap();
    let x = input(&mut store, "x", &mut rng, &[5, 4]);
    let r = random(&mut rng, &[5, 3]);
    let loss = |p: &Params| Ok(proj_loss(&lin.forward(p, p.get(x))?, &r));
    let mut g = store.zero_grads();
    let dx = lin.backward(&store.params, store.get(x), &r, &mut g).unwrap();
    g.accumulate(x, dx.data());
    check(&store, loss, &g);
}

#[test]
fn layernorm_and_gelu() {
    let mut rng = Rng::new(11);
    let mut store = ParamStore::new();
    let ln = LayerNorm::new(&mut store, "ln", 6).unwrap();
    // non-trivial affine so gamma/beta gradients are exercised
    for v in store.params.get_mut(ln.gamma).data_mut() {
        *v = 1.0 + 0.3 * rng.normal();
    }
    let x = input(&mut store, "x", &mut rng, &[4, 6]);
    let r = random(&mut rng, &[4, 6]);
    let loss = |p: &Params| {
        let (y, _) = ln.forward(p, p.get(x))?;
        Ok(proj_loss(&gelu_fwd(&y), &r))
    };
    let mut g = store.zero_grads();
    let (y, cache) = ln.forward(&store.params, store.get(x)).unwrap();
    let dy = gelu_bwd(&y, &r);
    let dx = ln.backward(&store.params, &cache, &dy, &mut g);
    g.accumulate(x, dx.data());
    check(&store, loss, &g);
}

#[test]
fn multi_head_self_attention_3x8() {
    let mut rng = Rng::new(12);
    let mut store = ParamStore::new();
    let attn = MultiHeadAttention::new(&mut store, "attn", 8, 2, &mut rng).unwrap();
    let x = input(&mut store, "x", &mut rng, &[3, 8]);
    let r = random(&mut rng, &[3, 8]);
    let loss = |p: &Params| Ok(proj_loss(&mhsa_fwd(&attn, p, p.get(x))?.0, &r));
    let mut g = store.zero_grads();
    let (_, cache) = mhsa_fwd(&attn, &store.params, store.get(x)).unwrap();
    let dx = mhsa_bwd(&attn, &store.params, &cache, &r, &mut g).unwrap();
    g.accumulate(x, dx.data());
    check(&store, loss, &g);
}

#[test]
fn multi_head_cross_attention() {
    let mut rng = Rng::new(13);
    let mut store = ParamStore::new();
    let attn = MultiHeadAttention::new(&mut store, "attn", 8, 4, &mut rng).unwrap();
    let q = input(&mut store, "q", &mut rng, &[2, 8]);
    let m = input(&mut store, "mem", &mut rng, &[5, 8]);
    let r = random(&mut rng, &[2, 8]);
    let loss = |p: &Params| Ok(proj_loss(&mhca_fwd(&attn, p, p.get(q), p.get(m))?.0, &r));
    let mut g = store.zero_grads();
    let (_, cache) = mhca_fwd(&attn, &store.params, store.get(q), store.get(m)).unwrap();
    let (dq, dm) = mhca_bwd(&attn, &store.params, &cache, &r, &mut g).unwrap();
    g.accumulate(q, dq.data());
    g.accumulate(m, dm.data());
    check(&store, loss, &g);
}

#[test]
fn transformer_stacks() {
    let mut rng = Rng::new(14);
    let mut store = ParamStore::new();
    let sstack = SelfStack::new(&mut store, "s", 2, 8, 2, 2, &mut rng).unwrap();
    let cstack = CrossStack::new(&mut store, "c", 2, 8, 2, 2, &mut rng).unwrap();
    let x = input(&mut store, "x", &mut rng, &[4, 8]);
    let b = input(&mut store, "b", &mut rng, &[3, 8]);
    let r = random(&mut rng, &[3, 8]);
    let loss = |p: &Params| {
        let (u, _) = sstack.forward(p, p.get(x))?;
        let (y, _) = cstack.forward(p, p.get(b), &u)?;
        Ok(proj_loss(&y, &r))
    };
    let mut g = store.zero_grads();
    let (u, sc) = sstack.forward(&store.params, store.get(x)).unwrap();
    let (_, cc) = cstack.forward(&store.params, store.get(b), &u).unwrap();
    let (db, du) = cstack.backward(&store.params, &cc, &r, u.shape(), &mut g).unwrap();
    let dx = sstack.backward(&store.params, &sc, &du, &mut g).unwrap();
    g.accumulate(b, db.data());
    g.accumulate(x, dx.data());
    check(&store, loss, &g);
}

#[test]
fn constant_op_has_zero_gradients() {
    let mut rng = Rng::new(15);
    let mut store = ParamStore::new();
    input(&mut store, "x", &mut rng, &[2, 2]);
    let g = store.zero_grads();
    let report = check(&store, |_| Ok(3.0), &g);
    assert_eq!(report.worst(), 0.0);
}

#[test]
fn corrupted_backward_is_detected() {
    let mut rng = Rng::new(16);
    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "lin", 3, 3, &mut rng).unwrap();
    let x = input(&mut store, "x", &mut rng, &[2, 3]);
    let r = random(&mut rng, &[2, 3]);
    let loss = |p: &Params| Ok(proj_loss(&lin.forward(p, p.get(x))?, &r));
    let mut g = store.zero_grads();
    let dx = lin.backward(&store.params, store.get(x), &r, &mut g).unwrap();
    // fault injection: drop a factor of two on the input gradient
    g.accumulate(x, dx.scale(-0.5).data());
    let report = grad_check(&store.params, loss, &g, H, TOL).unwrap();
    assert!(!report.passed);
    let bad = report.groups.iter().find(|r| r.name == "x").unwrap();
    assert!(bad.max_rel_err > 1e-2);
}

#[test]
fn heads_must_divide_width() {
    let mut store = ParamStore::new();
    let err = MultiHeadAttention::new(&mut store, "a", 10, 3, &mut Rng::new(0)).unwrap_err();
    assert!(matches!(err, evground_core::Error::Config(_)));
}

#[test]
fn uniform_cross_attention_returns_memory_mean() {
    let mut rng = Rng::new(17);
    let mut store = ParamStore::new();
    let attn = MultiHeadAttention::new(&mut store, "a", 4, 2, &mut rng).unwrap();
    *store.params.get_mut(attn.wq.w) = Tensor::zeros(&[4, 4]);
    *store.params.get_mut(attn.wv.w) = Tensor::eye(4);
    *store.params.get_mut(attn.wo.w) = Tensor::eye(4);
    let q = random(&mut rng, &[3, 4]);
    let mem = random(&mut rng, &[6, 4]);
    let (y, _) = mhca_fwd(&attn, &store.params, &q, &mem).unwrap();
    let mean = mem.mean_rows();
    for r in 0..3 {
        for (a, b) in y.row(r).iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
