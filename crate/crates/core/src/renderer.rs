//! Pinhole cameras, the discrete shading sum over probe texels and frame
//! rendering from a trained model.

use std::f64::consts::FRAC_1_PI;

use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, Op, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{march_surfaces, DEFAULT_SAMPLES};
use crate::image::Image;
use crate::math::{Ray, Vec3};
use crate::model::Model;
use crate::probe::{texel_table, LightProbe, N_TEXELS};
use crate::reflectance::{specular, BrdfConfig, ReflectanceBundle};

/// Pinhole camera. Camera space follows the x-right, y-down, z-forward
/// convention; `cam_to_world` is `[R | t]` mapping camera to world points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub cam_to_world: [[f64; 4]; 3],
}

impl Camera {
    /// Camera at `eye` looking at `target`, with `up` roughly the world up.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_y_deg: f64, width: usize, height: usize) -> Result<Self> {
        let fwd = (target - eye).normalized();
        let right = fwd.cross(up);
        if right.norm() < 1e-9 {
            return Err(Error::input("look_at: up is parallel to the view direction"));
        }
        let right = right.normalized();
        let down = fwd.cross(right);
        let f = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        let col = |v: Vec3, i: usize| v[i];
        let mut m = [[0.0; 4]; 3];
        for i in 0..3 {
            m[i] = [col(right, i), col(down, i), col(fwd, i), eye[i]];
        }
        let cam = Camera {
            fx: f,
            fy: f,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
            cam_to_world: m,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::validation("camera resolution must be positive"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::validation("camera focal lengths must be positive"));
        }
        let r = |c: usize| Vec3::new(self.cam_to_world[0][c], self.cam_to_world[1][c], self.cam_to_world[2][c]);
        for c in 0..3 {
            if (r(c).norm() - 1.0).abs() > 1e-6 {
                return Err(Error::validation("camera rotation is not orthonormal"));
            }
        }
        if r(0).dot(r(1)).abs() > 1e-6 || r(0).dot(r(2)).abs() > 1e-6 || r(1).dot(r(2)).abs() > 1e-6 {
            return Err(Error::validation("camera rotation is not orthonormal"));
        }
        if !r(3).is_finite() {
            return Err(Error::validation("camera position is not finite"));
        }
        Ok(())
    }

    pub fn position(&self) -> Vec3 {
        let m = &self.cam_to_world;
        Vec3::new(m[0][3], m[1][3], m[2][3])
    }

    /// Ray through image coordinates `(u, v)`; pixel `(i, j)` has center `(i + 0.5, j + 0.5)`.
    pub fn ray(&self, u: f64, v: f64) -> Ray {
        let d = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        let m = &self.cam_to_world;
        let w = Vec3::new(
            m[0][0] * d.x + m[0][1] * d.y + m[0][2] * d.z,
            m[1][0] * d.x + m[1][1] * d.y + m[1][2] * d.z,
            m[2][0] * d.x + m[2][1] * d.y + m[2][2] * d.z,
        );
        Ray::new(self.position(), w.normalized())
    }

    pub fn pixel_ray(&self, x: usize, y: usize) -> Ray {
        self.ray(x as f64 + 0.5, y as f64 + 0.5)
    }

    /// Same camera with intrinsics rescaled to a new resolution.
    pub fn scaled(&self, width: usize, height: usize) -> Camera {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Camera {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            ..*self
        }
    }

    /// World point to pixel coordinates, if in front of the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let m = &self.cam_to_world;
        let d = p - self.position();
        let c = |k: usize| m[0][k] * d.x + m[1][k] * d.y + m[2][k] * d.z;
        let z = c(2);
        if z <= 1e-9 {
            return None;
        }
        Some((self.fx * c(0) / z + self.cx, self.fy * c(1) / z + self.cy))
    }
}

/// Explicit inputs of the shading sum at one surface point.
#[derive(Clone, Debug)]
pub struct ShadingInputs<'a> {
    pub normal: Vec3,
    /// Unit direction toward the viewer.
    pub view: Vec3,
    /// Visibility toward each of the 512 texels.
    pub visibility: &'a [f64],
    pub bundle: ReflectanceBundle,
}

/// `sum_k R(w_k, w_o) V_k L_k max(w_k.n, 0) dw_k` for one point.
pub fn shade_surface(inputs: &ShadingInputs, probe: &LightProbe, cfg: &BrdfConfig) -> [f64; 3] {
    shade_one(
        inputs.bundle.albedo,
        inputs.bundle.roughness,
        inputs.normal,
        inputs.view,
        inputs.visibility,
        &probe.to_f64(),
        cfg,
    )
}

fn shade_one(a: [f64; 3], gamma: f64, n: Vec3, wo: Vec3, vis: &[f64], probe: &[f64], cfg: &BrdfConfig) -> [f64; 3] {
    assert_eq!(vis.len(), N_TEXELS);
    let mut out = [0.0; 3];
    if n.dot(wo) <= 0.0 {
        return out;
    }
    for (k, tex) in texel_table().iter().enumerate() {
        let ci = n.dot(tex.direction);
        if ci <= 0.0 || vis[k] == 0.0 {
            continue;
        }
        let s = if cfg.specular_enabled {
            specular(gamma, n, tex.direction, wo, cfg.f0).value
        } else {
            0.0
        };
        let e = vis[k] * ci * tex.solid_angle;
        for c in 0..3 {
            out[c] += (a[c] * FRAC_1_PI + s) * e * probe[3 * k + c];
        }
    }
    out
}

/// Shading for a batch: `albedo` P x 3, `roughness` P x 1, `normals` P x 3,
/// `visibility` P x 512, `probe` 512 x 3 (flattened). Returns P x 3.
pub fn shade_batch(
    albedo: &Tensor,
    roughness: &Tensor,
    normals: &Tensor,
    visibility: &Tensor,
    probe: &[f64],
    view_dirs: &[Vec3],
    cfg: &BrdfConfig,
) -> Tensor {
    let p = albedo.rows;
    let mut out = Tensor::zeros(p, 3);
    for i in 0..p {
        let a = [albedo.get(i, 0), albedo.get(i, 1), albedo.get(i, 2)];
        let n = Vec3::from_slice(normals.row(i));
        let rgb = shade_one(a, roughness.data[i], n, view_dirs[i], visibility.row(i), probe, cfg);
        out.row_mut(i).copy_from_slice(&rgb);
    }
    out
}

/// Differentiable shading node. Inputs: albedo (P x 3), roughness (P x 1),
/// normals (P x 3), visibility (P x 512), probe (512 x 3).
pub fn shade_graph(
    g: &mut Graph,
    albedo: Var,
    roughness: Var,
    normals: Var,
    visibility: Var,
    probe: Var,
    view_dirs: &[Vec3],
    cfg: &BrdfConfig,
) -> Var {
    let out = shade_batch(
        g.value(albedo),
        g.value(roughness),
        g.value(normals),
        g.value(visibility),
        &g.value(probe).data,
        view_dirs,
        cfg,
    );
    g.apply(
        Box::new(ShadeOp {
            view_dirs: view_dirs.to_vec(),
            cfg: *cfg,
        }),
        &[albedo, roughness, normals, visibility, probe],
        out,
    )
}

struct ShadeOp {
    view_dirs: Vec<Vec3>,
    cfg: BrdfConfig,
}

impl Op for ShadeOp {
    fn name(&self) -> &'static str {
        "shade"
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, grad: &Tensor, need: &[bool]) -> Vec<Option<Tensor>> {
        let (albedo, rough, normals, vis, probe) = (inputs[0], inputs[1], inputs[2], inputs[3], inputs[4]);
        let p = albedo.rows;
        let mut da = Tensor::zeros(p, 3);
        let mut dr = Tensor::zeros(p, 1);
        let mut dn = Tensor::zeros(p, 3);
        let mut dv = Tensor::zeros(p, N_TEXELS);
        let mut dl = Tensor::zeros(N_TEXELS, 3);
        let table = texel_table();
        for i in 0..p {
            let n = Vec3::from_slice(normals.row(i));
            let wo = self.view_dirs[i];
            if n.dot(wo) <= 0.0 {
                continue;
            }
            let g = grad.row(i);
            let a = [albedo.get(i, 0), albedo.get(i, 1), albedo.get(i, 2)];
            let gamma = rough.data[i];
            let vrow = vis.row(i);
            let mut dn_i = Vec3::ZERO;
            for (k, tex) in table.iter().enumerate() {
                let ci = n.dot(tex.direction);
                if ci <= 0.0 {
                    continue;
                }
                let spec = if self.cfg.specular_enabled {
                    specular(gamma, n, tex.direction, wo, self.cfg.f0)
                } else {
                    Default::default()
                };
                let l = &probe.data[3 * k..3 * k + 3];
                let v = vrow[k];
                let geom = ci * tex.solid_angle;
                // sum_c g_c L_c and sum_c g_c (A_c/pi + S) L_c
                let mut gl = 0.0;
                let mut grl = 0.0;
                for c in 0..3 {
                    let r = a[c] * FRAC_1_PI + spec.value;
                    gl += g[c] * l[c];
                    grl += g[c] * r * l[c];
                    da.data[3 * i + c] += g[c] * FRAC_1_PI * v * l[c] * geom;
                    dl.data[3 * k + c] += g[c] * r * v * geom;
                }
                dv.data[i * N_TEXELS + k] = grl * geom;
                dr.data[i] += spec.d_gamma * gl * v * geom;
                dn_i += spec.d_normal * (gl * v * geom) + tex.direction * (grl * v * tex.solid_angle);
            }
            dn.row_mut(i).copy_from_slice(&dn_i.to_array());
        }
        vec![
            need[0].then_some(da),
            need[1].then_some(dr),
            need[2].then_some(dn),
            need[3].then_some(dv),
            need[4].then_some(dl),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    pub n_samples: usize,
    /// Points shaded per batch; bounds the `points x 512` visibility buffer.
    pub chunk: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            n_samples: DEFAULT_SAMPLES,
            chunk: 128,
        }
    }
}

/// Rendered image plus auxiliary per-pixel maps (zero where the ray misses).
#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub rgb: Image,
    /// Normals mapped from [-1, 1] to [0, 1].
    pub normal: Image,
    pub albedo: Image,
    pub roughness: Image,
    /// Mean visibility over the upper hemisphere of the normal.
    pub visibility: Image,
    pub depth: Image,
    pub mask: Vec<bool>,
    /// Unmapped head normals, row-major, zero where missed.
    pub normals: Vec<Vec3>,
}

/// Per-pixel geometry, materials and shading for frame `t`.
pub fn render_frame(
    model: &Model,
    store: &ParamStore,
    probe: &LightProbe,
    camera: &Camera,
    t: usize,
    opts: &RenderOptions,
    aabb: &crate::math::Aabb,
) -> Result<RenderOutput> {
    camera.validate()?;
    let (w, h) = (camera.width, camera.height);
    let rays: Vec<Ray> = (0..w * h).map(|i| camera.pixel_ray(i % w, i / w)).collect();
    let density = model.density_source(store);
    let surf = march_surfaces(&density, &rays, aabb, t, opts.n_samples, None)?;
    let mut out = RenderOutput {
        rgb: Image::new(w, h),
        normal: Image::new(w, h),
        albedo: Image::new(w, h),
        roughness: Image::new(w, h),
        visibility: Image::new(w, h),
        depth: Image::new(w, h),
        mask: surf.iter().map(|s| s.hit).collect(),
        normals: vec![Vec3::ZERO; w * h],
    };
    let hits: Vec<usize> = (0..w * h).filter(|&i| surf[i].hit).collect();
    let probe_v = probe.to_f64();
    let cfg = model.config.brdf();
    let dirs: Vec<Vec3> = texel_table().iter().map(|t| t.direction).collect();
    for chunk in hits.chunks(opts.chunk.max(1)) {
        let pts: Vec<Vec3> = chunk.iter().map(|&i| surf[i].position).collect();
        let views: Vec<Vec3> = chunk.iter().map(|&i| -rays[i].dir).collect();
        let feats = model.field.features(store, &pts, t)?;
        let normals = model.geometry.normals(store, &feats);
        let (albedo, rough) = model.reflectance.evaluate(store, &feats);
        let vis = model.geometry.visibility(store, &feats, &dirs);
        let rgb = shade_batch(&albedo, &rough, &normals, &vis, &probe_v, &views, &cfg);
        if !rgb.all_finite() {
            return Err(Error::numeric("rendered radiance"));
        }
        for (j, &pix) in chunk.iter().enumerate() {
            let (x, y) = (pix % w, pix / w);
            let n = Vec3::from_slice(normals.row(j));
            let f = |v: f64| v as f32;
            out.rgb.set(x, y, [f(rgb.get(j, 0)), f(rgb.get(j, 1)), f(rgb.get(j, 2))]);
            out.normal.set(x, y, [f(0.5 * (n.x + 1.0)), f(0.5 * (n.y + 1.0)), f(0.5 * (n.z + 1.0))]);
            out.albedo.set(x, y, [f(albedo.get(j, 0)), f(albedo.get(j, 1)), f(albedo.get(j, 2))]);
            let r = f(rough.data[j]);
            out.roughness.set(x, y, [r; 3]);
            let (mut sum, mut cnt) = (0.0, 0usize);
            for (k, d) in dirs.iter().enumerate() {
                if d.dot(n) > 0.0 {
                    sum += vis.get(j, k);
                    cnt += 1;
                }
            }
            let mv = if cnt > 0 { f(sum / cnt as f64) } else { 0.0 };
            out.visibility.set(x, y, [mv; 3]);
            let dep = f(surf[pix].expected_depth);
            out.depth.set(x, y, [dep; 3]);
            out.normals[pix] = n;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{gradcheck::check_gradients, grad_of_scalar};
    use crate::math::{Aabb, Mat3};
    use crate::model::ModelConfig;
    use crate::probe::{texel_geometry, PROBE_COLS};
    use std::f64::consts::PI;

    fn lambert(a: f64) -> ReflectanceBundle {
        ReflectanceBundle {
            albedo: [a, a * 0.5, a * 0.25],
            roughness: 0.5,
        }
    }

    fn lambert_cfg() -> BrdfConfig {
        BrdfConfig {
            specular_enabled: false,
            ..Default::default()
        }
    }

    #[test]
    fn zero_probe_and_full_occlusion_are_black() {
        let ones = vec![1.0; N_TEXELS];
        let zeros = vec![0.0; N_TEXELS];
        let inp = ShadingInputs {
            normal: Vec3::Z,
            view: Vec3::Z,
            visibility: &ones,
            bundle: lambert(0.8),
        };
        assert_eq!(shade_surface(&inp, &LightProbe::zeros(), &BrdfConfig::default()), [0.0; 3]);
        let inp = ShadingInputs {
            visibility: &zeros,
            ..inp
        };
        let bright = LightProbe::uniform([5.0; 3]).unwrap();
        assert_eq!(shade_surface(&inp, &bright, &BrdfConfig::default()), [0.0; 3]);
    }

    #[test]
    fn one_hot_lambertian_closed_form() {
        let ones = vec![1.0; N_TEXELS];
        let n = Vec3::new(0.2, -0.1, 1.0).normalized();
        let (r, c, i) = (3, 5, 2.5);
        let tex = texel_geometry(r, c).unwrap();
        let inp = ShadingInputs {
            normal: n,
            view: n,
            visibility: &ones,
            bundle: lambert(0.6),
        };
        let lo = shade_surface(&inp, &LightProbe::olat(r, c, i as f32).unwrap(), &lambert_cfg());
        for ch in 0..3 {
            let expect = inp.bundle.albedo[ch] / PI * i * tex.direction.dot(n).max(0.0) * tex.solid_angle;
            assert!((lo[ch] - expect).abs() < 1e-15);
        }
    }

    fn sky(d: Vec3) -> [f32; 3] {
        let s = (0.6 + 0.4 * d.z) as f32;
        let sun = (-(1.0 - d.dot(Vec3::new(0.5, 0.3, 0.81).normalized())) * 20.0).exp() as f32 * 4.0;
        [s + sun, s * 0.9 + sun, s * 0.8]
    }

    #[test]
    fn shading_is_linear_in_the_probe() {
        let vis: Vec<f64> = (0..N_TEXELS).map(|k| 0.5 + 0.5 * (k as f64 * 0.37).sin()).collect();
        let inp = ShadingInputs {
            normal: Vec3::new(0.3, 0.1, 0.9).normalized(),
            view: Vec3::new(-0.2, 0.3, 0.9).normalized(),
            visibility: &vis,
            bundle: ReflectanceBundle {
                albedo: [0.3, 0.6, 0.2],
                roughness: 0.4,
            },
        };
        let p1 = LightProbe::from_fn(sky).unwrap();
        let p2 = LightProbe::olat(4, 9, 3.0).unwrap();
        let cfg = BrdfConfig::default();
        let a = shade_surface(&inp, &p1, &cfg);
        let b = shade_surface(&inp, &p2, &cfg);
        let ab = shade_surface(&inp, &p1.added(&p2), &cfg);
        for c in 0..3 {
            assert!((ab[c] - a[c] - b[c]).abs() < 1e-10);
        }
    }

    #[test]
    fn rotating_everything_preserves_radiance() {
        let vis_fn = |d: Vec3| 0.6 + 0.4 * d.dot(Vec3::new(0.0, 0.6, 0.8));
        let n = Vec3::new(0.1, 0.2, 1.0).normalized();
        let wo = Vec3::new(0.4, -0.2, 0.9).normalized();
        let bundle = ReflectanceBundle {
            albedo: [0.5, 0.4, 0.3],
            roughness: 0.7,
        };
        let cfg = BrdfConfig::default();
        let shade_with = |rot: Mat3| {
            let inv = rot.transpose();
            let probe = LightProbe::from_fn(|d| sky(inv.mul_vec(d))).unwrap();
            let vis: Vec<f64> = texel_table().iter().map(|t| vis_fn(inv.mul_vec(t.direction))).collect();
            let inp = ShadingInputs {
                normal: rot.mul_vec(n),
                view: rot.mul_vec(wo),
                visibility: &vis,
                bundle,
            };
            shade_surface(&inp, &probe, &cfg)
        };
        let base = shade_with(Mat3::IDENTITY);
        for (axis, angle) in [(Vec3::new(1.0, 0.0, 0.0), 0.7), (Vec3::new(0.3, 1.0, 0.2), -1.1), (Vec3::Z, 0.4)] {
            let r = shade_with(Mat3::rotation(axis.normalized(), angle));
            for c in 0..3 {
                assert!((r[c] - base[c]).abs() / base[c] < 0.03, "{r:?} vs {base:?}");
            }
        }
        // azimuthal rotation by whole texels permutes the grid exactly
        let step = 2.0 * PI / PROBE_COLS as f64;
        let r = shade_with(Mat3::rotation(Vec3::Z, 3.0 * step));
        for c in 0..3 {
            assert!((r[c] - base[c]).abs() / base[c] < 1e-9);
        }
    }

    #[test]
    fn shade_gradient_matches_finite_differences() {
        let mut s = ParamStore::new();
        let p = 3;
        let wave = |n: usize, k: f64, a: f64| (0..n).map(|i| a * (i as f64 * k).sin()).collect::<Vec<_>>();
        let a_raw = s.insert("a", Tensor::from_vec(p, 3, wave(p * 3, 0.7, 1.0))).unwrap();
        let r_raw = s.insert("r", Tensor::from_vec(p, 1, wave(p, 1.3, 1.0))).unwrap();
        let n_raw = s
            .insert("n", Tensor::from_vec(p, 3, vec![0.1, 0.2, 1.0, -0.3, 0.1, 0.8, 0.0, 0.4, 0.7]))
            .unwrap();
        let v_raw = s.insert("v", Tensor::from_vec(p, N_TEXELS, wave(p * N_TEXELS, 0.11, 2.0))).unwrap();
        let l_raw = s.insert("l", Tensor::from_vec(N_TEXELS, 3, wave(N_TEXELS * 3, 0.23, 1.5))).unwrap();
        let views = vec![
            Vec3::new(0.0, 0.3, 1.0).normalized(),
            Vec3::new(-0.5, 0.0, 0.7).normalized(),
            Vec3::new(0.2, 0.8, 0.6).normalized(),
        ];
        let cfg = BrdfConfig::default();
        let build = |g: &mut Graph| -> Result<Var> {
            let a = g.param(a_raw);
            let a = g.sigmoid(a);
            let r = g.param(r_raw);
            let r = g.sigmoid(r);
            let r = g.affine(r, 0.99, 0.01);
            let n = g.param(n_raw);
            let n = g.normalize_rows(n, 1e-6);
            let v = g.param(v_raw);
            let v = g.sigmoid(v);
            let l = g.param(l_raw);
            let l = g.softplus(l);
            let out = shade_graph(g, a, r, n, v, l, &views, &cfg);
            let sq = g.square(out);
            Ok(g.sum(sq))
        };
        let (_, grads) = grad_of_scalar(&s, build).unwrap();
        let rep = check_gradients(&s, &grads, &[a_raw, r_raw, n_raw, v_raw, l_raw], 150, 3, |st| {
            Ok(grad_of_scalar(st, build)?.0)
        })
        .unwrap();
        assert!(rep.passes(1e-3), "{rep:?}");
    }

    #[test]
    fn camera_rays_and_projection() {
        let cam = Camera::look_at(Vec3::new(0.0, -3.0, 1.0), Vec3::new(0.0, 0.0, 1.0), Vec3::Z, 40.0, 64, 48).unwrap();
        let center = cam.ray(32.0, 24.0);
        assert!((center.dir - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        // image y grows downward
        assert!(cam.pixel_ray(32, 0).dir.z > 0.0);
        let r = cam.pixel_ray(10, 7);
        let (u, v) = cam.project(r.at(2.5)).unwrap();
        assert!((u - 10.5).abs() < 1e-9 && (v - 7.5).abs() < 1e-9);
        let half = cam.scaled(32, 24);
        let rr = half.ray(5.25, 3.75);
        let full = cam.ray(10.5, 7.5);
        assert!((rr.dir - full.dir).norm() < 1e-12);
        let mut bad = cam;
        bad.cam_to_world[0][0] = 2.0;
        assert!(bad.validate().is_err());
    }

    fn tiny_model(empty: bool) -> (ParamStore, Model, Aabb) {
        let mut s = ParamStore::new();
        let cfg = ModelConfig {
            latent_dim: 8,
            hidden: 16,
            n_hidden: 2,
            vis_hidden: 8,
            vis_n_hidden: 1,
            ..Default::default()
        };
        let aabb = Aabb::new(Vec3::splat(-0.5), Vec3::splat(0.5));
        let frames = vec![(0..30).map(|i| Vec3::new(0.2 * (i as f64).cos(), 0.2 * (i as f64).sin(), 0.0)).collect()];
        let m = Model::init(&mut s, cfg, frames, &aabb, 1).unwrap();
        if empty {
            let last = *m.density.mlp.param_ids().last().unwrap();
            s.get_mut(last).data[0] = -60.0;
        }
        (s, m, aabb)
    }

    #[test]
    fn render_frame_behaviour() {
        let cam = Camera::look_at(Vec3::new(0.0, -2.0, 0.0), Vec3::ZERO, Vec3::Z, 30.0, 12, 10).unwrap();
        let probe = LightProbe::from_fn(sky).unwrap();
        let opts = RenderOptions {
            n_samples: 16,
            chunk: 16,
        };
        let (s, m, aabb) = tiny_model(true);
        let out = render_frame(&m, &s, &probe, &cam, 0, &opts, &aabb).unwrap();
        assert!(out.rgb.data.iter().all(|&v| v == 0.0));
        assert!(out.mask.iter().all(|&h| !h));

        let (s, m, aabb) = tiny_model(false);
        let a = render_frame(&m, &s, &probe, &cam, 0, &opts, &aabb).unwrap();
        let b = render_frame(&m, &s, &probe, &cam, 0, &opts, &aabb).unwrap();
        assert_eq!(a.rgb, b.rgb);
        assert!(a.mask.iter().any(|&h| h));
        let doubled = render_frame(&m, &s, &probe.scaled(2.0).unwrap(), &cam, 0, &opts, &aabb).unwrap();
        for (x, y) in doubled.rgb.data.iter().zip(&a.rgb.data) {
            assert_eq!(*x, 2.0 * y);
        }
    }
}
