//! Surface, normal and occlusion maps baked from a density field, plus the
//! normal and visibility heads that learn to reproduce them.
//!
//! Ray convention: a camera ray travels along `dir`, so the outgoing
//! direction toward the viewer is `-dir` and a hit lies at `origin + k * dir`.

use rand::{Rng, RngCore};

use crate::diffcore::{encode_batch, Activation, Graph, Mlp, MlpSpec, Op, ParamStore, Tensor, Var};
use crate::error::Result;
use crate::field::DensitySource;
use crate::math::{Aabb, Ray, Vec3};

pub const DEFAULT_SAMPLES: usize = 64;
pub const HIT_THRESHOLD: f64 = 0.5;
pub const NORMAL_FD_STEP: f64 = 1e-3;
pub const OCCLUSION_FAR: f64 = 0.5;
pub const DIR_BANDS: usize = 5;

/// Rays marched per density call; bounds peak memory.
const RAY_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceSample {
    pub position: Vec3,
    pub hit: bool,
    pub expected_depth: f64,
    pub accumulated_alpha: f64,
}

impl SurfaceSample {
    pub const MISS: SurfaceSample = SurfaceSample {
        position: Vec3::ZERO,
        hit: false,
        expected_depth: 0.0,
        accumulated_alpha: 0.0,
    };
}

/// Sample depths along a batch of rays, clipped to a box.
#[derive(Clone, Debug)]
pub struct MarchPlan {
    pub n_samples: usize,
    /// Indices of rays that intersect the box.
    pub active: Vec<usize>,
    /// Bin width per active ray.
    pub deltas: Vec<f64>,
    /// `active.len() * n_samples` depths, ray-major.
    pub depths: Vec<f64>,
}

impl MarchPlan {
    /// Stratified depths: bin centers when `rng` is `None`, one uniform
    /// draw per bin otherwise.
    pub fn new(rays: &[Ray], aabb: &Aabb, n_samples: usize, mut rng: Option<&mut dyn RngCore>) -> Self {
        let n_samples = n_samples.max(1);
        let mut plan = MarchPlan {
            n_samples,
            active: Vec::new(),
            deltas: Vec::new(),
            depths: Vec::new(),
        };
        for (i, r) in rays.iter().enumerate() {
            let Some((t0, t1)) = aabb.intersect(r.origin, r.dir) else {
                continue;
            };
            if t1 <= t0 {
                continue;
            }
            let delta = (t1 - t0) / n_samples as f64;
            plan.active.push(i);
            plan.deltas.push(delta);
            for j in 0..n_samples {
                let u = match rng.as_deref_mut() {
                    Some(r) => r.random::<f64>(),
                    None => 0.5,
                };
                plan.depths.push(t0 + (j as f64 + u) * delta);
            }
        }
        plan
    }

    pub fn points(&self, rays: &[Ray]) -> Vec<Vec3> {
        let mut pts = Vec::with_capacity(self.depths.len());
        for (a, &ri) in self.active.iter().enumerate() {
            for j in 0..self.n_samples {
                pts.push(rays[ri].at(self.depths[a * self.n_samples + j]));
            }
        }
        pts
    }
}

/// Standard quadrature weights `w_j = T_j (1 - exp(-sigma_j delta))`.
pub fn transmittance_weights(sigmas: &[f64], delta: f64) -> Vec<f64> {
    let mut w = Vec::with_capacity(sigmas.len());
    let mut optical = 0.0f64;
    for &s in sigmas {
        let alpha = 1.0 - (-s * delta).exp();
        w.push((-optical).exp() * alpha);
        optical += s * delta;
    }
    w
}

fn surface_from(ray: &Ray, weights: &[f64], depths: &[f64]) -> SurfaceSample {
    let acc: f64 = weights.iter().sum();
    if acc < HIT_THRESHOLD {
        return SurfaceSample {
            accumulated_alpha: acc,
            ..SurfaceSample::MISS
        };
    }
    let k = weights.iter().zip(depths).map(|(w, s)| w * s).sum::<f64>() / acc;
    SurfaceSample {
        position: ray.at(k),
        hit: true,
        expected_depth: k,
        accumulated_alpha: acc,
    }
}

/// Expected termination depth of each ray.
pub fn march_surfaces(
    density: &dyn DensitySource,
    rays: &[Ray],
    aabb: &Aabb,
    t: usize,
    n_samples: usize,
    rng: Option<&mut dyn RngCore>,
) -> Result<Vec<SurfaceSample>> {
    let plan = MarchPlan::new(rays, aabb, n_samples, rng);
    let mut out = vec![SurfaceSample::MISS; rays.len()];
    let ns = plan.n_samples;
    for chunk_start in (0..plan.active.len()).step_by(RAY_CHUNK) {
        let chunk_end = (chunk_start + RAY_CHUNK).min(plan.active.len());
        let mut pts = Vec::with_capacity((chunk_end - chunk_start) * ns);
        for a in chunk_start..chunk_end {
            let r = rays[plan.active[a]];
            pts.extend(plan.depths[a * ns..(a + 1) * ns].iter().map(|&s| r.at(s)));
        }
        let sig = density.density_batch(&pts, t)?;
        for a in chunk_start..chunk_end {
            let local = (a - chunk_start) * ns;
            let w = transmittance_weights(&sig[local..local + ns], plan.deltas[a]);
            let ri = plan.active[a];
            out[ri] = surface_from(&rays[ri], &w, &plan.depths[a * ns..(a + 1) * ns]);
        }
    }
    Ok(out)
}

pub fn march_surface(
    density: &dyn DensitySource,
    ray: Ray,
    aabb: &Aabb,
    t: usize,
    n_samples: usize,
) -> Result<SurfaceSample> {
    Ok(march_surfaces(density, &[ray], aabb, t, n_samples, None)?[0])
}

/// Baked normal `-grad sigma / |grad sigma|` by central differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BakedNormal {
    pub normal: Vec3,
    pub degenerate: bool,
}

pub fn baked_normals(density: &dyn DensitySource, points: &[Vec3], t: usize, step: f64) -> Result<Vec<BakedNormal>> {
    let mut probes = Vec::with_capacity(points.len() * 6);
    for &p in points {
        for axis in 0..3 {
            let mut e = [0.0; 3];
            e[axis] = step;
            let e = Vec3::from_slice(&e);
            probes.push(p + e);
            probes.push(p - e);
        }
    }
    let sig = density.density_batch(&probes, t)?;
    Ok(sig
        .chunks_exact(6)
        .map(|s| {
            let grad = Vec3::new(s[0] - s[1], s[2] - s[3], s[4] - s[5]) / (2.0 * step);
            let len = grad.norm();
            if len < 1e-8 || !len.is_finite() {
                BakedNormal {
                    normal: Vec3::Z,
                    degenerate: true,
                }
            } else {
                BakedNormal {
                    normal: -grad / len,
                    degenerate: false,
                }
            }
        })
        .collect())
}

pub fn baked_normal(density: &dyn DensitySource, x: Vec3, t: usize, step: f64) -> Result<BakedNormal> {
    Ok(baked_normals(density, &[x], t, step)?[0])
}

/// Move each point `offset` along its baked normal; degenerate normals
/// leave the point in place.
pub fn offset_along_normals(points: &[Vec3], normals: &[BakedNormal], offset: f64) -> Vec<Vec3> {
    points
        .iter()
        .zip(normals)
        .map(|(&p, n)| if n.degenerate { p } else { p + n.normal * offset })
        .collect()
}

/// Segment along which occlusion is integrated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OcclusionConfig {
    pub n_samples: usize,
    pub near: f64,
    pub far: f64,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        OcclusionConfig {
            n_samples: DEFAULT_SAMPLES,
            near: 0.0,
            far: OCCLUSION_FAR,
        }
    }
}

/// Occlusion `1 - exp(-sum sigma delta)` for every (point, direction) pair.
/// Returns a `P x K` tensor, row `p` holding the K directions of point `p`.
pub fn baked_occlusion(
    density: &dyn DensitySource,
    points: &[Vec3],
    dirs: &[Vec3],
    t: usize,
    cfg: &OcclusionConfig,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<Tensor> {
    let ns = cfg.n_samples.max(1);
    let delta = (cfg.far - cfg.near) / ns as f64;
    let k = dirs.len();
    let mut out = Tensor::zeros(points.len(), k);
    let per_point = k * ns;
    let chunk_points = (RAY_CHUNK * DEFAULT_SAMPLES / per_point.max(1)).max(1);
    for start in (0..points.len()).step_by(chunk_points) {
        let end = (start + chunk_points).min(points.len());
        let mut pts = Vec::with_capacity((end - start) * per_point);
        for &x in &points[start..end] {
            for &d in dirs {
                for j in 0..ns {
                    let u = match rng.as_deref_mut() {
                        Some(r) => r.random::<f64>(),
                        None => 0.5,
                    };
                    pts.push(x + d * (cfg.near + (j as f64 + u) * delta));
                }
            }
        }
        let sig = density.density_batch(&pts, t)?;
        for (pi, p) in (start..end).enumerate() {
            for di in 0..k {
                let base = (pi * k + di) * ns;
                let depth: f64 = sig[base..base + ns].iter().sum::<f64>() * delta;
                out.data[p * k + di] = 1.0 - (-depth).exp();
            }
        }
    }
    Ok(out)
}

/// The learned normal head `f_n` and visibility head `f_V`.
pub struct GeometryHeads {
    pub normal: Mlp,
    pub visibility: Mlp,
}

impl GeometryHeads {
    pub fn specs(feature_dim: usize, hidden: usize, n_hidden: usize) -> (MlpSpec, MlpSpec) {
        let dir_dim = crate::diffcore::encoded_dim(DIR_BANDS);
        (
            MlpSpec::new(feature_dim, 3, Activation::Normalize3).with_hidden(hidden, n_hidden),
            MlpSpec::new(feature_dim + dir_dim, 1, Activation::Sigmoid).with_hidden(hidden, n_hidden),
        )
    }

    pub fn init(store: &mut ParamStore, feature_dim: usize, hidden: usize, n_hidden: usize, seed: u64) -> Result<Self> {
        let (n, v) = Self::specs(feature_dim, hidden, n_hidden);
        Ok(GeometryHeads {
            normal: Mlp::init(store, "normal", n, seed)?,
            visibility: Mlp::init(store, "visibility", v, seed.wrapping_add(1))?,
        })
    }

    pub fn bind(store: &ParamStore, feature_dim: usize, hidden: usize, n_hidden: usize) -> Result<Self> {
        let (n, v) = Self::specs(feature_dim, hidden, n_hidden);
        Ok(GeometryHeads {
            normal: Mlp::bind(store, "normal", n)?,
            visibility: Mlp::bind(store, "visibility", v)?,
        })
    }

    /// `P x 3` unit normals from `[posenc(x), psi]` features.
    pub fn normals(&self, store: &ParamStore, feats: &Tensor) -> Tensor {
        self.normal.forward_batch(store, feats)
    }

    /// `P x K` visibility of every point toward every direction.
    pub fn visibility(&self, store: &ParamStore, feats: &Tensor, dirs: &[Vec3]) -> Tensor {
        let d = encode_batch(dirs, DIR_BANDS);
        let v = self.visibility.forward_batch_paired(store, feats, &d);
        Tensor::from_vec(feats.rows, dirs.len(), v.data)
    }

    pub fn normals_graph(&self, g: &mut Graph, feats: Var) -> Var {
        self.normal.forward_graph(g, feats)
    }

    /// `(P*K) x 1` visibility node, row `p * K + k`.
    pub fn visibility_graph(&self, g: &mut Graph, feats: Var, dirs: &[Vec3]) -> Var {
        let d = g.constant(encode_batch(dirs, DIR_BANDS));
        self.visibility.forward_graph_paired(g, feats, d)
    }
}

/// Baked targets and head outputs for a batch of surface points.
#[derive(Clone, Debug)]
pub struct GeometryBundle {
    pub directions: Vec<Vec3>,
    pub baked_normal: Vec<BakedNormal>,
    /// `P x K` occlusion.
    pub baked_occlusion: Tensor,
    /// `P x 3`.
    pub head_normal: Tensor,
    /// `P x K` visibility.
    pub head_visibility: Tensor,
}

impl GeometryBundle {
    /// Distillation targets: baked normals and baked visibility `1 - occlusion`.
    pub fn targets(&self) -> (Tensor, Tensor) {
        (normal_tensor(&self.baked_normal), visibility_target(&self.baked_occlusion))
    }

    pub fn geo_loss(&self) -> f64 {
        let (n_t, v_t) = self.targets();
        geo_loss_value(&self.head_visibility, &v_t, &self.head_normal, &n_t)
    }
}

pub fn normal_tensor(normals: &[BakedNormal]) -> Tensor {
    let mut t = Tensor::zeros(normals.len(), 3);
    for (i, n) in normals.iter().enumerate() {
        t.row_mut(i).copy_from_slice(&n.normal.to_array());
    }
    t
}

pub fn visibility_target(occlusion: &Tensor) -> Tensor {
    occlusion.map(|o| 1.0 - o)
}

/// Mean over rays of `mean_k (V - V*)^2 + |n - n*|^2`.
pub fn geo_loss_value(v: &Tensor, v_target: &Tensor, n: &Tensor, n_target: &Tensor) -> f64 {
    assert_eq!(v.len(), v_target.len());
    assert_eq!(n.shape(), n_target.shape());
    let rays = n.rows.max(1) as f64;
    let vl: f64 = v.data.iter().zip(&v_target.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        / v.len().max(1) as f64;
    let nl: f64 = n.data.iter().zip(&n_target.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / rays;
    vl + nl
}

/// Graph form of [`geo_loss_value`]; the targets enter as constants.
pub fn geo_loss_graph(g: &mut Graph, v: Var, v_target: Tensor, n: Var, n_target: Tensor) -> Var {
    let vt = g.constant(Tensor::from_vec(g.value(v).rows, g.value(v).cols, v_target.data));
    let nt = g.constant(n_target);
    let dv = g.sub(v, vt);
    let dv2 = g.square(dv);
    let vl = g.mean(dv2);
    let dn = g.sub(n, nt);
    let dn2 = g.square(dn);
    let nl = g.mean(dn2);
    g.weighted_sum(&[(vl, 1.0), (nl, 3.0)])
}

/// Volume compositing of per-sample colors along rays with black background.
///
/// `sigma` is `(R*S) x 1` and `color` `(R*S) x C`, ray-major; `deltas` holds one
/// bin width per ray. The output is `R x C`.
pub fn composite_graph(g: &mut Graph, sigma: Var, color: Var, deltas: &[f64], n_samples: usize) -> Var {
    let (sv, cv) = (g.value(sigma), g.value(color));
    assert_eq!(sv.rows, deltas.len() * n_samples);
    assert_eq!(cv.rows, sv.rows);
    let ch = cv.cols;
    let mut out = Tensor::zeros(deltas.len(), ch);
    let mut weights = Vec::with_capacity(sv.rows);
    for (r, &delta) in deltas.iter().enumerate() {
        let w = transmittance_weights(&sv.data[r * n_samples..(r + 1) * n_samples], delta);
        for (j, wj) in w.iter().enumerate() {
            let c = cv.row(r * n_samples + j);
            for k in 0..ch {
                out.data[r * ch + k] += wj * c[k];
            }
        }
        weights.extend(w);
    }
    g.apply(
        Box::new(CompositeOp {
            deltas: deltas.to_vec(),
            n_samples,
            weights,
        }),
        &[sigma, color],
        out,
    )
}

struct CompositeOp {
    deltas: Vec<f64>,
    n_samples: usize,
    weights: Vec<f64>,
}

impl Op for CompositeOp {
    fn name(&self) -> &'static str {
        "composite"
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, grad: &Tensor, need: &[bool]) -> Vec<Option<Tensor>> {
        let (sigma, color) = (inputs[0], inputs[1]);
        let ch = color.cols;
        let ns = self.n_samples;
        let mut ds = Tensor::zeros(sigma.rows, 1);
        let mut dc = Tensor::zeros(color.rows, ch);
        let mut gc = vec![0.0; ns];
        let mut tail = vec![0.0; ns];
        for (r, &delta) in self.deltas.iter().enumerate() {
            let gr = grad.row(r);
            for j in 0..ns {
                let i = r * ns + j;
                let c = color.row(i);
                gc[j] = (0..ch).map(|k| c[k] * gr[k]).sum();
                let w = self.weights[i];
                dc.row_mut(i).iter_mut().zip(gr).for_each(|(d, g)| *d = w * g);
            }
            // tail[j] = sum over k > j of w_k <c_k, g>
            let mut acc = 0.0;
            for j in (0..ns).rev() {
                tail[j] = acc;
                acc += self.weights[r * ns + j] * gc[j];
            }
            let mut optical = 0.0f64;
            for j in 0..ns {
                let i = r * ns + j;
                let s = sigma.data[i];
                let t_after = (-(optical + s * delta)).exp();
                ds.data[i] = delta * (t_after * gc[j] - tail[j]);
                optical += s * delta;
            }
        }
        vec![need[0].then_some(ds), need[1].then_some(dc)]
    }
}
