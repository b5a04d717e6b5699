//! Central finite-difference check of analytic gradients.
//!
//! Kept independent of the tape: it only perturbs parameter values and
//! re-evaluates the scalar loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{Grads, ParamId, ParamStore};
use crate::error::Result;

/// Base step; the actual step is `FD_STEP * max(1, |p|)`.
pub const FD_STEP: f64 = 1e-4;
/// Gradients below this magnitude are compared absolutely.
pub const ABS_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates dropped because the loss is not smooth within the step.
    pub skipped_nonsmooth: usize,
    pub max_rel_err: f64,
    pub worst: Option<CoordReport>,
}

#[derive(Clone, Debug)]
pub struct CoordReport {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_err < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

/// Compare `analytic` against central differences of `loss` on `n_coords`
/// coordinates drawn from `params`. Half of the draws are restricted to
/// coordinates with a nonzero analytic gradient so sparse gradients are
/// still exercised.
pub fn check_gradients<F>(
    store: &ParamStore,
    analytic: &Grads,
    params: &[ParamId],
    n_coords: usize,
    seed: u64,
    mut loss: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<(ParamId, usize)> = params
        .iter()
        .flat_map(|&id| (0..store.get(id).len()).map(move |i| (id, i)))
        .collect();
    let nonzero: Vec<(ParamId, usize)> = all
        .iter()
        .copied()
        .filter(|&(id, i)| analytic.get(id).data[i] != 0.0)
        .collect();
    let mut report = GradCheckReport::default();
    if all.is_empty() {
        return Ok(report);
    }
    let mut work = store.clone();
    let f0 = loss(&work)?;
    let mut attempts = 0;
    while report.checked < n_coords && attempts < n_coords * 4 {
        attempts += 1;
        let pool = if attempts % 2 == 0 && !nonzero.is_empty() {
            &nonzero
        } else {
            &all
        };
        let (id, i) = pool[rng.random_range(0..pool.len())];
        let p0 = store.get(id).data[i];
        let h = FD_STEP * p0.abs().max(1.0);
        let mut eval = |x: f64, work: &mut ParamStore| -> Result<f64> {
            work.get_mut(id).data[i] = x;
            let v = loss(work);
            work.get_mut(id).data[i] = p0;
            v
        };
        let fp = eval(p0 + h, &mut work)?;
        let fm = eval(p0 - h, &mut work)?;
        let fp2 = eval(p0 + h / 2.0, &mut work)?;
        let fm2 = eval(p0 - h / 2.0, &mut work)?;
        let central = (fp - fm) / (2.0 * h);
        let half = (fp2 - fm2) / h;
        // a kink inside [p0 - h, p0 + h] makes the two step sizes disagree
        let scale = central.abs().max(half.abs()).max(ABS_FLOOR);
        let rounding = 1e-10 * f0.abs().max(1.0) / h;
        if (central - half).abs() > 1e-4 * scale + rounding {
            report.skipped_nonsmooth += 1;
            continue;
        }
        // Richardson extrapolation removes the O(h^2) term
        let numeric = (4.0 * half - central) / 3.0;
        let a = analytic.get(id).data[i];
        let err = relative_error(a, numeric);
        report.checked += 1;
        if err >= report.max_rel_err {
            report.max_rel_err = err;
            report.worst = Some(CoordReport {
                param: store.name(id).to_string(),
                index: i,
                analytic: a,
                numeric,
                rel_err: err,
            });
        }
    }
    Ok(report)
}
