use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// One AdamW update from the store's gradient accumulators.
///
/// Weight decay is decoupled (`w ← w·(1 − lr·wd)`) and each parameter's
/// learning rate is multiplied by its `lr_scale`. Gradients are checked for
/// finiteness before anything is modified.
pub fn adamw_step(store: &mut ParamStore, opt: &AdamW) -> Result<()> {
    for (id, g) in store.grads.iter() {
        if !g.is_finite() {
            return Err(Error::NonFinite {
                what: format!("gradient of parameter {}", store.params.name(id)),
            });
        }
    }
    store.step += 1;
    let t = store.step as f64;
    let bc1 = 1.0 - opt.beta1.powf(t);
    let bc2 = 1.0 - opt.beta2.powf(t);
    let ids: Vec<_> = store.params.ids().collect();
    for id in ids {
        let i = id.0;
        let lr = opt.lr * store.lr_scale[i];
        let g = store.grads.get(id).data().to_vec();
        let m = store.first_moment[i].data_mut();
        for (m, g) in m.iter_mut().zip(&g) {
            *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
        }
        let v = store.second_moment[i].data_mut();
        for (v, g) in v.iter_mut().zip(&g) {
            *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
        }
        if lr == 0.0 {
            continue;
        }
        let decay = 1.0 - lr * opt.weight_decay;
        let m = store.first_moment[i].data().to_vec();
        let v = store.second_moment[i].data().to_vec();
        let w = store.params.get_mut(id).data_mut();
        for ((w, m), v) in w.iter_mut().zip(&m).zip(&v) {
            let mhat = m / bc1;
            let vhat = v / bc2;
            *w = *w * decay - lr * mhat / (vhat.sqrt() + opt.eps);
        }
    }
    Ok(())
}

/// Linear warm-up to `peak_lr` over `warmup_frac · total_steps`, then cosine decay to zero.
pub fn cosine_lr(step: usize, total_steps: usize, peak_lr: f64, warmup_frac: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::Config("cosine schedule needs total_steps > 0".into()));
    }
    if !(0.0..=1.0).contains(&warmup_frac) {
        return Err(Error::Config(format!("warmup fraction {warmup_frac} outside [0,1]")));
    }
    let step = step.min(total_steps) as f64;
    let total = total_steps as f64;
    let warm = warmup_frac * total;
    if step < warm {
        return Ok(peak_lr * step / warm);
    }
    if total <= warm {
        return Ok(peak_lr);
    }
    let progress = (step - warm) / (total - warm);
    Ok(peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn scalar_store(w: f64, g: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(w)).unwrap();
        s.grads.accumulate(id, &[g]);
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = scalar_store(1.0, 1.0);
        let opt = AdamW {
            lr: 0.1,
            weight_decay: 0.0,
            ..AdamW::default()
        };
        adamw_step(&mut s, &opt).unwrap();
        // mhat = vhat = 1 after bias correction: w = 1 - 0.1 / (1 + 1e-8)
        let w = s.params.iter().next().unwrap().1.data()[0];
        assert!((w - 0.9).abs() < 1e-8);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut s = scalar_store(2.0, 0.0);
        adamw_step(
            &mut s,
            &AdamW {
                lr: 0.1,
                weight_decay: 0.0,
                ..AdamW::default()
            },
        )
        .unwrap();
        assert_eq!(s.params.iter().next().unwrap().1.data()[0], 2.0);

        let mut s = scalar_store(2.0, 0.0);
        adamw_step(
            &mut s,
            &AdamW {
                lr: 0.1,
                weight_decay: 0.1,
                ..AdamW::default()
            },
        )
        .unwrap();
        let w = s.params.iter().next().unwrap().1.data()[0];
        assert!((w - 2.0 * (1.0 - 0.01)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = scalar_store(1.0, f64::NAN);
        let err = adamw_step(&mut s, &AdamW::default()).unwrap_err();
        assert!(err.to_string().contains("parameter w"));
        assert_eq!(s.params.iter().next().unwrap().1.data()[0], 1.0);
    }

    #[test]
    fn zero_lr_scale_freezes_bit_exactly() {
        let mut s = scalar_store(0.123456789, 0.5);
        s.set_lr_scale("w", 0.0);
        adamw_step(&mut s, &AdamW::default()).unwrap();
        assert_eq!(s.params.iter().next().unwrap().1.data()[0], 0.123456789);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(0, 100, 1e-4, 0.05).unwrap(), 0.0);
        assert!((cosine_lr(5, 100, 1e-4, 0.05).unwrap() - 1e-4).abs() < 1e-18);
        assert!(cosine_lr(100, 100, 1e-4, 0.05).unwrap().abs() < 1e-20);
        assert!(cosine_lr(10, 0, 1e-4, 0.05).is_err());
        let mid = cosine_lr(50, 100, 1e-4, 0.0).unwrap();
        assert!((mid - 0.5e-4).abs() < 1e-15);
    }
}
