//! Central finite-difference verification of analytic gradients.

use super::params::{Grads, Params};
use crate::error::Result;

/// Groups whose gradients are all smaller than this are compared on an
/// absolute scale; central differences carry ~1e-10 round-off on O(1) losses.
pub const SCALE_FLOOR: f64 = 1e-2;

#[derive(Clone, Debug)]
pub struct GroupReport {
    pub name: String,
    /// `max |analytic − numeric| / max(max|analytic|, max|numeric|, SCALE_FLOOR)`
    pub max_rel_err: f64,
    pub max_abs_grad: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub tol: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max)
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for g in &self.groups {
            writeln!(f, "{:<40} rel_err={:.3e} |g|max={:.3e}", g.name, g.max_rel_err, g.max_abs_grad)?;
        }
        write!(f, "worst={:.3e} tol={:.1e} passed={}", self.worst(), self.tol, self.passed)
    }
}

/// Compares `analytic` against central differences of `loss` for every entry
/// of every parameter in `params`, grouped by parameter name.
pub fn grad_check(
    params: &Params,
    loss: impl Fn(&Params) -> Result<f64>,
    analytic: &Grads,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let mut work = params.clone();
    let mut groups = Vec::new();
    for id in params.ids() {
        let n = params.get(id).numel();
        let mut numeric = vec![0.0; n];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = work.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + h;
            let fp = loss(&work)?;
            work.get_mut(id).data_mut()[i] = orig - h;
            let fm = loss(&work)?;
            work.get_mut(id).data_mut()[i] = orig;
            *slot = (fp - fm) / (2.0 * h);
        }
        let a = analytic.get(id).data();
        let diff = a.iter().zip(&numeric).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let max_a = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let max_n = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = max_a.max(max_n).max(SCALE_FLOOR);
        groups.push(GroupReport {
            name: params.name(id).to_string(),
            max_rel_err: diff / scale,
            max_abs_grad: max_a,
        });
    }
    let passed = groups.iter().all(|g| g.max_rel_err < tol);
    Ok(GradCheckReport { groups, tol, passed })
}
