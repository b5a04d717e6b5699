//! Training objectives and their weighted sum.

use std::f64::consts::PI;

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, Op, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::field::{AnchoredLatentField, DensityField};
use crate::math::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub rgb: f64,
    pub geo: f64,
    pub temp: f64,
    pub vis_smooth: f64,
    pub normal_smooth: f64,
    pub albedo_smooth: f64,
    pub entropy: f64,
    /// Standard deviation of the smoothness perturbation, meters.
    pub perturbation_std: f64,
    pub kde_bandwidth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            rgb: 1.0,
            geo: 0.1,
            temp: 0.01,
            vis_smooth: 0.05,
            normal_smooth: 0.05,
            albedo_smooth: 0.05,
            entropy: 0.01,
            perturbation_std: 0.01,
            kde_bandwidth: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let named = self.named();
        if let Some((name, _)) = named.iter().find(|(_, w)| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::validation(format!("loss weight `{name}` must be finite and >= 0")));
        }
        if !(self.perturbation_std > 0.0) {
            return Err(Error::validation("perturbation_std must be positive"));
        }
        if !(self.kde_bandwidth > 0.0) {
            return Err(Error::validation("kde_bandwidth must be positive"));
        }
        Ok(())
    }

    fn named(&self) -> [(&'static str, f64); 7] {
        [
            ("rgb", self.rgb),
            ("geo", self.geo),
            ("temp", self.temp),
            ("tau_v", self.vis_smooth),
            ("tau_n", self.normal_smooth),
            ("tau_a", self.albedo_smooth),
            ("entropy", self.entropy),
        ]
    }

    pub fn scaled(&self, s: f64) -> LossWeights {
        LossWeights {
            rgb: self.rgb * s,
            geo: self.geo * s,
            temp: self.temp * s,
            vis_smooth: self.vis_smooth * s,
            normal_smooth: self.normal_smooth * s,
            albedo_smooth: self.albedo_smooth * s,
            entropy: self.entropy * s,
            ..*self
        }
    }
}

/// Term names in report order.
pub const TERM_NAMES: [&str; 7] = ["rgb", "geo", "temp", "tau_v", "tau_n", "tau_a", "entropy"];

/// Raw (unweighted) values of every objective term; absent terms are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub rgb: f64,
    pub geo: f64,
    pub temp: f64,
    pub tau_v: f64,
    pub tau_n: f64,
    pub tau_a: f64,
    pub entropy: f64,
}

impl LossTerms {
    fn values(&self) -> [f64; 7] {
        [self.rgb, self.geo, self.temp, self.tau_v, self.tau_n, self.tau_a, self.entropy]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TermReport {
    pub name: &'static str,
    pub value: f64,
    pub weighted: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub terms: Vec<TermReport>,
    pub total: f64,
}

impl LossReport {
    pub fn get(&self, name: &str) -> Option<&TermReport> {
        self.terms.iter().find(|t| t.name == name)
    }
}

/// Weighted sum of all terms. The entropy term may be negative and is not clamped.
pub fn total_loss(terms: &LossTerms, weights: &LossWeights) -> Result<LossReport> {
    let mut report = Vec::with_capacity(7);
    let mut total = 0.0;
    for ((name, w), v) in weights.named().into_iter().zip(terms.values()) {
        if !v.is_finite() {
            return Err(Error::numeric(name));
        }
        total += w * v;
        report.push(TermReport {
            name,
            value: v,
            weighted: w * v,
        });
    }
    Ok(LossReport { terms: report, total })
}

/// Mean squared error over rays and channels.
pub fn rgb_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::input(format!(
            "rgb batch shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len().max(1) as f64;
    Ok(pred.data.iter().zip(&target.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

pub fn rgb_loss_graph(g: &mut Graph, pred: Var, target: Tensor) -> Result<Var> {
    if g.value(pred).shape() != target.shape() {
        return Err(Error::input("rgb batch shapes differ"));
    }
    let t = g.constant(target);
    let d = g.sub(pred, t);
    let sq = g.square(d);
    Ok(g.mean(sq))
}

/// One `N(0, std^2 I)` offset per point.
pub fn perturbations(n: usize, std: f64, rng: &mut dyn RngCore) -> Result<Vec<Vec3>> {
    let dist = Normal::new(0.0, std).map_err(|e| Error::input(e.to_string()))?;
    Ok((0..n)
        .map(|_| Vec3::new(dist.sample(rng), dist.sample(rng), dist.sample(rng)))
        .collect())
}

pub fn perturbed(points: &[Vec3], eps: &[Vec3]) -> Vec<Vec3> {
    points.iter().zip(eps).map(|(&p, &e)| p + e).collect()
}

/// How a head's per-point output difference is reduced to a scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    /// L1 norm of the output vector (normal, albedo), averaged over points.
    L1Norm,
    /// Mean absolute difference over the outputs (visibility over light directions).
    MeanAbs,
}

/// Smoothness penalty from head outputs at `x` and at `x + eps` (same shape).
pub fn smoothness_penalty(at_x: &Tensor, at_perturbed: &Tensor, reduce: Reduce) -> f64 {
    assert_eq!(at_x.shape(), at_perturbed.shape());
    let mean_abs = at_x
        .data
        .iter()
        .zip(&at_perturbed.data)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / at_x.len().max(1) as f64;
    match reduce {
        Reduce::L1Norm => mean_abs * at_x.cols as f64,
        Reduce::MeanAbs => mean_abs,
    }
}

pub fn smoothness_graph(g: &mut Graph, at_x: Var, at_perturbed: Var, reduce: Reduce) -> Var {
    let cols = g.value(at_x).cols as f64;
    let d = g.sub(at_x, at_perturbed);
    let a = g.abs(d);
    let m = g.mean(a);
    match reduce {
        Reduce::L1Norm => g.affine(m, cols, 0.0),
        Reduce::MeanAbs => m,
    }
}

/// Mean `|sigma_t - sigma_{t+1}|` at frame-`t` anchors (all anchors, or the
/// given subset). Returns `(0, true)` when `t` is the last frame.
pub fn temporal_loss(
    store: &ParamStore,
    field: &AnchoredLatentField,
    density: &DensityField,
    t: usize,
    subset: Option<&[usize]>,
) -> Result<(f64, bool)> {
    if t + 1 >= field.n_frames() {
        return Ok((0.0, true));
    }
    let pts = anchor_points(field, t, subset);
    let a = density.density_batch(store, field, &pts, t)?;
    let b = density.density_batch(store, field, &pts, t + 1)?;
    let n = pts.len().max(1) as f64;
    Ok((a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n, false))
}

pub fn temporal_graph(
    g: &mut Graph,
    field: &AnchoredLatentField,
    density: &DensityField,
    t: usize,
    subset: Option<&[usize]>,
) -> Result<Option<Var>> {
    if t + 1 >= field.n_frames() {
        return Ok(None);
    }
    let pts = anchor_points(field, t, subset);
    let a = density.density_graph(g, field, &pts, t)?;
    let b = density.density_graph(g, field, &pts, t + 1)?;
    let d = g.sub(a, b);
    let ab = g.abs(d);
    Ok(Some(g.mean(ab)))
}

fn anchor_points(field: &AnchoredLatentField, t: usize, subset: Option<&[usize]>) -> Vec<Vec3> {
    let anchors = field.anchors(t);
    match subset {
        Some(idx) => idx.iter().map(|&i| anchors[i]).collect(),
        None => anchors.to_vec(),
    }
}

/// Entropy of a 3-D Gaussian KDE fitted to the rows of `samples` (n x 3),
/// evaluated at the samples themselves (self term included).
pub fn kde_entropy(samples: &Tensor, bandwidth: f64) -> Result<f64> {
    Ok(kde_parts(samples, bandwidth)?.0)
}

fn kde_parts(samples: &Tensor, h: f64) -> Result<(f64, Vec<f64>)> {
    if samples.cols != 3 || samples.rows == 0 {
        return Err(Error::input("kde needs a non-empty n x 3 batch"));
    }
    if !(h > 0.0) {
        return Err(Error::input("kde bandwidth must be positive"));
    }
    let n = samples.rows;
    let inv2h2 = 0.5 / (h * h);
    // S_j = sum_i exp(-|A_j - A_i|^2 / 2h^2), S_j >= 1 from the self term
    let mut sums = vec![0.0; n];
    for j in 0..n {
        let aj = samples.row(j);
        let mut s = 0.0;
        for i in 0..n {
            let ai = samples.row(i);
            let d2 = (aj[0] - ai[0]).powi(2) + (aj[1] - ai[1]).powi(2) + (aj[2] - ai[2]).powi(2);
            s += (-d2 * inv2h2).exp();
        }
        sums[j] = s;
    }
    let log_norm = (n as f64).ln() + 3.0 * h.ln() + 1.5 * (2.0 * PI).ln();
    let h_a = sums.iter().map(|s| log_norm - s.ln()).sum::<f64>() / n as f64;
    Ok((h_a, sums))
}

pub fn kde_entropy_graph(g: &mut Graph, samples: Var, bandwidth: f64) -> Result<Var> {
    let (value, sums) = kde_parts(g.value(samples), bandwidth)?;
    Ok(g.apply(Box::new(KdeEntropyOp { h: bandwidth, sums }), &[samples], Tensor::scalar(value)))
}

struct KdeEntropyOp {
    h: f64,
    sums: Vec<f64>,
}

impl Op for KdeEntropyOp {
    fn name(&self) -> &'static str {
        "kde_entropy"
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, grad: &Tensor, _need: &[bool]) -> Vec<Option<Tensor>> {
        let a = inputs[0];
        let n = a.rows;
        let inv2h2 = 0.5 / (self.h * self.h);
        let scale = grad.item() / (n as f64 * self.h * self.h);
        let mut out = Tensor::zeros(n, 3);
        // dH/dA_m = 1/(n h^2) sum_i K_mi (A_m - A_i)(1/S_m + 1/S_i)
        for m in 0..n {
            let am = a.row(m);
            let mut acc = [0.0; 3];
            for i in 0..n {
                if i == m {
                    continue;
                }
                let ai = a.row(i);
                let d = [am[0] - ai[0], am[1] - ai[1], am[2] - ai[2]];
                let k = (-(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) * inv2h2).exp();
                let c = k * (1.0 / self.sums[m] + 1.0 / self.sums[i]);
                for x in 0..3 {
                    acc[x] += c * d[x];
                }
            }
            for x in 0..3 {
                out.data[3 * m + x] = scale * acc[x];
            }
        }
        vec![Some(out)]
    }
}

/// Optional graph nodes for each term; the total is their weighted sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct TermVars {
    pub rgb: Option<Var>,
    pub geo: Option<Var>,
    pub temp: Option<Var>,
    pub tau_v: Option<Var>,
    pub tau_n: Option<Var>,
    pub tau_a: Option<Var>,
    pub entropy: Option<Var>,
}

impl TermVars {
    fn slots(&self) -> [Option<Var>; 7] {
        [self.rgb, self.geo, self.temp, self.tau_v, self.tau_n, self.tau_a, self.entropy]
    }

    /// Weighted sum node plus the raw term values, checked for finiteness.
    pub fn total(&self, g: &mut Graph, weights: &LossWeights) -> Result<(Var, LossReport)> {
        let mut raw = [0.0; 7];
        let mut parts = Vec::new();
        for (k, ((_, w), slot)) in weights.named().into_iter().zip(self.slots()).enumerate() {
            if let Some(v) = slot {
                raw[k] = g.value(v).item();
                if w != 0.0 {
                    parts.push((v, w));
                }
            }
        }
        let terms = LossTerms {
            rgb: raw[0],
            geo: raw[1],
            temp: raw[2],
            tau_v: raw[3],
            tau_n: raw[4],
            tau_a: raw[5],
            entropy: raw[6],
        };
        let report = total_loss(&terms, weights)?;
        let root = if parts.is_empty() {
            g.scalar(0.0)
        } else {
            g.weighted_sum(&parts)
        };
        Ok((root, report))
    }
}
