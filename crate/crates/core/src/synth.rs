//! Analytic articulated scenes and a sphere-tracing reference renderer.
//!
//! Scenes are unions of capsules in a z-up, meter-unit world. The reference
//! renderer shades with its own implementation of the texel sum (its own
//! texel geometry and the Lambda form of the Smith term) so that it can be
//! used to cross-check the differentiable renderer.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{
    view_stem, write_anchors, FrameEntry, GtMaps, Manifest, ProbeKind, RelightSet, ViewEntry, MANIFEST_FILE, MANIFEST_VERSION,
};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{Aabb, Mat3, Ray, Vec3};
use crate::probe::{nearest_texel, texel_geometry, LightProbe, PROBE_COLS, PROBE_ROWS};
use crate::reflectance::BrdfConfig;
use crate::renderer::Camera;

/// Offset along the normal before tracing a shadow ray.
pub const SHADOW_BIAS: f64 = 1e-3;
/// Length of the shadow segment.
pub const SHADOW_RANGE: f64 = 0.5;
const HIT_EPS: f64 = 1e-7;
const MAX_STEPS: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneKind {
    /// One static capsule.
    Smoke,
    /// Torso plus two swinging arms.
    Capsuleman,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(SceneKind::Smoke),
            "capsuleman" => Ok(SceneKind::Capsuleman),
            other => Err(Error::input(format!("unknown scene `{other}` (smoke|capsuleman)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
    pub region: usize,
}

impl Capsule {
    fn closest(&self, x: Vec3) -> Vec3 {
        let ab = self.b - self.a;
        let len2 = ab.dot(ab);
        let s = if len2 > 0.0 { ((x - self.a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        self.a + ab * s
    }

    pub fn sdf(&self, x: Vec3) -> f64 {
        (x - self.closest(x)).norm() - self.radius
    }

    pub fn normal(&self, x: Vec3) -> Vec3 {
        let d = x - self.closest(x);
        let l = d.norm();
        if l > 0.0 {
            d / l
        } else {
            Vec3::Z
        }
    }

    pub fn area(&self) -> f64 {
        2.0 * PI * self.radius * (self.b - self.a).norm() + 4.0 * PI * self.radius * self.radius
    }
}

/// A rigid part rotating about `pivot` around `axis` by
/// `base + amp * sin(2 pi t / period + phase)`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Limb {
    rest: Capsule,
    pivot: Vec3,
    axis: Vec3,
    base: f64,
    amp: f64,
    phase: f64,
}

impl Limb {
    fn rotation(&self, t: usize, period: f64) -> Mat3 {
        let angle = self.base + self.amp * (2.0 * PI * t as f64 / period + self.phase).sin();
        Mat3::rotation(self.axis, angle)
    }

    fn place(&self, p: Vec3, t: usize, period: f64) -> Vec3 {
        self.pivot + self.rotation(t, period).mul_vec(p - self.pivot)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticScene {
    pub kind: SceneKind,
    pub n_frames: usize,
    /// Motion period in frames.
    pub period: f64,
    pub albedos: Vec<[f64; 3]>,
    pub roughness: f64,
    pub brdf: BrdfConfig,
    pub aabb: Aabb,
    /// Dominant light direction of the training probe.
    pub sun: Vec3,
    limbs: Vec<Limb>,
    orbit_center: Vec3,
    orbit_radius: f64,
}

fn static_limb(c: Capsule) -> Limb {
    Limb {
        rest: c,
        pivot: c.a,
        axis: Vec3::Z,
        base: 0.0,
        amp: 0.0,
        phase: 0.0,
    }
}

impl AnalyticScene {
    pub fn new(kind: SceneKind, n_frames: usize) -> Result<Self> {
        if n_frames == 0 {
            return Err(Error::input("scene needs at least one frame"));
        }
        let sun = Vec3::new(0.15, -0.55, 0.82).normalized();
        let brdf = BrdfConfig::default();
        Ok(match kind {
            SceneKind::Smoke => AnalyticScene {
                kind,
                n_frames,
                period: n_frames as f64,
                albedos: vec![[0.7, 0.5, 0.35]],
                roughness: 0.5,
                brdf,
                aabb: Aabb::new(Vec3::new(-0.3, -0.3, 0.05), Vec3::new(0.3, 0.3, 0.95)),
                sun,
                limbs: vec![static_limb(Capsule {
                    a: Vec3::new(0.0, 0.0, 0.35),
                    b: Vec3::new(0.0, 0.0, 0.65),
                    radius: 0.2,
                    region: 0,
                })],
                orbit_center: Vec3::new(0.0, 0.0, 0.5),
                orbit_radius: 2.0,
            },
            SceneKind::Capsuleman => {
                let arm = |x: f64, axis: Vec3, base: f64, amp: f64, phase: f64| {
                    let shoulder = Vec3::new(x, 0.0, 1.02);
                    Limb {
                        rest: Capsule {
                            a: shoulder,
                            b: shoulder + Vec3::new(0.0, 0.0, -0.42),
                            radius: 0.06,
                            region: 1,
                        },
                        pivot: shoulder,
                        axis: axis.normalized(),
                        base,
                        amp,
                        phase,
                    }
                };
                AnalyticScene {
                    kind,
                    n_frames,
                    period: n_frames.max(2) as f64,
                    albedos: vec![[0.75, 0.45, 0.3], [0.25, 0.4, 0.7]],
                    roughness: 0.5,
                    brdf,
                    aabb: Aabb::new(Vec3::new(-0.45, -0.55, 0.3), Vec3::new(0.45, 0.35, 1.35)),
                    sun,
                    limbs: vec![
                        static_limb(Capsule {
                            a: Vec3::new(0.0, 0.0, 0.6),
                            b: Vec3::new(0.0, 0.0, 1.05),
                            radius: 0.19,
                            region: 0,
                        }),
                        // swings forward and inward across the chest
                        arm(0.25, Vec3::new(-0.9, 0.45, 0.0), 0.95, 0.65, 0.0),
                        arm(-0.25, Vec3::new(-0.9, -0.45, 0.0), 0.35, 0.3, PI),
                    ],
                    orbit_center: Vec3::new(0.0, -0.1, 0.83),
                    orbit_radius: 2.4,
                }
            }
        })
    }

    pub fn pose(&self, t: usize) -> Pose {
        Pose {
            capsules: self
                .limbs
                .iter()
                .map(|l| {
                    let r = l.rotation(t, self.period);
                    Capsule {
                        a: l.pivot + r.mul_vec(l.rest.a - l.pivot),
                        b: l.pivot + r.mul_vec(l.rest.b - l.pivot),
                        ..l.rest
                    }
                })
                .collect(),
        }
    }

    pub fn albedo(&self, region: usize) -> [f64; 3] {
        self.albedos[region.min(self.albedos.len() - 1)]
    }

    /// Frame with the largest arm elevation, where the arm shadows the chest.
    pub fn shadow_frame(&self) -> usize {
        let swing = |t: usize| match self.limbs.get(1) {
            Some(l) => l.base + l.amp * (2.0 * PI * t as f64 / self.period + l.phase).sin(),
            None => 0.0,
        };
        (0..self.n_frames)
            .max_by(|&a, &b| swing(a).total_cmp(&swing(b)))
            .unwrap_or(0)
    }

    /// `n` surface samples with persistent indices, carried along by each part's motion.
    pub fn anchors(&self, n: usize, seed: u64) -> Vec<Vec<Vec3>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let areas: Vec<f64> = self.limbs.iter().map(|l| l.rest.area()).collect();
        let total: f64 = areas.iter().sum();
        let poses: Vec<Pose> = (0..self.n_frames).map(|t| self.pose(t)).collect();
        let mut rest: Vec<(usize, Vec3)> = Vec::with_capacity(n);
        // samples buried inside another part at any frame are redrawn
        for _ in 0..n * 100 {
            if rest.len() == n {
                break;
            }
            let mut u = rng.random::<f64>() * total;
            let mut li = 0;
            while li + 1 < areas.len() && u >= areas[li] {
                u -= areas[li];
                li += 1;
            }
            let p = sample_capsule_surface(&self.limbs[li].rest, &mut rng);
            let exposed = poses.iter().enumerate().all(|(t, pose)| {
                let q = self.limbs[li].place(p, t, self.period);
                pose.capsules.iter().enumerate().all(|(k, c)| k == li || c.sdf(q) > 0.0)
            });
            if exposed {
                rest.push((li, p));
            }
        }
        (0..self.n_frames)
            .map(|t| rest.iter().map(|&(li, p)| self.limbs[li].place(p, t, self.period)).collect())
            .collect()
    }

    /// Ring of `n` cameras around the subject; the first one faces its front
    /// (-y). Rigs larger than four alternate between a low and a raised
    /// elevation.
    pub fn cameras(&self, n: usize, width: usize, height: usize) -> Result<Vec<Camera>> {
        (0..n)
            .map(|i| {
                let elev = if n > 4 && i % 2 == 1 { 30f64 } else { 10.0 }.to_radians();
                let az = -PI / 2.0 + 2.0 * PI * i as f64 / n as f64;
                let dir = Vec3::new(elev.cos() * az.cos(), elev.cos() * az.sin(), elev.sin());
                Camera::look_at(self.orbit_center + dir * self.orbit_radius, self.orbit_center, Vec3::Z, 30.0, width, height)
            })
            .collect()
    }

    /// Sky gradient plus a sun lobe around [`Self::sun`].
    pub fn training_probe(&self) -> LightProbe {
        sky_probe(self.sun, [0.45, 0.5, 0.6], [7.0, 6.5, 5.5])
    }

    /// Held-out probes: a differently tinted sky with the sun at the side, and one OLAT texel.
    pub fn heldout_probes(&self) -> Result<Vec<(String, ProbeKind, LightProbe)>> {
        let side = Vec3::new(-0.7, -0.35, 0.6).normalized();
        let ambient = sky_probe(side, [0.6, 0.5, 0.4], [5.0, 5.5, 6.5]);
        let (r, c) = nearest_texel(Vec3::new(0.35, -0.55, 0.75));
        let omega = texel_geometry(r, c)?.solid_angle;
        let olat = LightProbe::olat(r, c, (3.0 / omega) as f32)?;
        Ok(vec![
            ("ambient_b".to_string(), ProbeKind::Ambient, ambient),
            ("olat".to_string(), ProbeKind::Olat, olat),
        ])
    }
}

fn sky_probe(sun: Vec3, sky: [f64; 3], sun_rgb: [f64; 3]) -> LightProbe {
    LightProbe::from_fn(|d| {
        let up = d.z.max(0.0);
        let ground = 0.08 * (1.0 - up);
        let lobe = (-(1.0 - d.dot(sun)) / 0.015).exp();
        std::array::from_fn(|c| (sky[c] * (0.3 + 0.7 * up) + ground + sun_rgb[c] * lobe) as f32)
    })
    .expect("sky radiance is nonnegative")
}

fn sample_capsule_surface(c: &Capsule, rng: &mut ChaCha8Rng) -> Vec3 {
    let axis = c.b - c.a;
    let len = axis.norm();
    let w = axis / len;
    let helper = if w.x.abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
    let u = w.cross(helper).normalized();
    let v = w.cross(u);
    let cyl = 2.0 * PI * c.radius * len;
    if rng.random::<f64>() * c.area() < cyl {
        let s = rng.random::<f64>() * len;
        let phi = rng.random::<f64>() * 2.0 * PI;
        c.a + w * s + (u * phi.cos() + v * phi.sin()) * c.radius
    } else {
        let z: f64 = rng.random_range(-1.0..1.0);
        let phi = rng.random::<f64>() * 2.0 * PI;
        let r = (1.0 - z * z).max(0.0).sqrt();
        let d = u * (r * phi.cos()) + v * (r * phi.sin()) + w * z;
        let center = if z >= 0.0 { c.b } else { c.a };
        center + d * c.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdfSample {
    pub distance: f64,
    pub normal: Vec3,
    pub region: usize,
}

/// The scene geometry at one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub capsules: Vec<Capsule>,
}

impl Pose {
    pub fn sdf(&self, x: Vec3) -> f64 {
        self.capsules.iter().map(|c| c.sdf(x)).fold(f64::INFINITY, f64::min)
    }

    pub fn sdf_normal(&self, x: Vec3) -> SdfSample {
        let (mut best, mut d) = (0, f64::INFINITY);
        for (i, c) in self.capsules.iter().enumerate() {
            let s = c.sdf(x);
            if s < d {
                d = s;
                best = i;
            }
        }
        let c = &self.capsules[best];
        SdfSample {
            distance: d,
            normal: c.normal(x),
            region: c.region,
        }
    }

    /// First hit along `ray` within `max_dist`.
    pub fn trace(&self, ray: &Ray, max_dist: f64) -> Option<f64> {
        let mut s = 0.0;
        for _ in 0..MAX_STEPS {
            let d = self.sdf(ray.at(s));
            if d < HIT_EPS {
                return Some(s);
            }
            s += d;
            if s > max_dist {
                return None;
            }
        }
        None
    }

    /// 1 if nothing blocks `x + bias * n` toward `dir` within the shadow range, else 0.
    pub fn visibility(&self, x: Vec3, dir: Vec3) -> f64 {
        let n = self.sdf_normal(x).normal;
        let origin = x + n * SHADOW_BIAS;
        match self.trace(&Ray::new(origin, dir), SHADOW_RANGE) {
            Some(_) => 0.0,
            None => 1.0,
        }
    }
}

impl AnalyticScene {
    pub fn sdf_normal(&self, x: Vec3, t: usize) -> SdfSample {
        self.pose(t).sdf_normal(x)
    }

    pub fn gt_visibility(&self, x: Vec3, dir: Vec3, t: usize) -> f64 {
        self.pose(t).visibility(x, dir)
    }
}

/// Independent texel sum: own texel geometry, GGX with the Lambda form of
/// height-correlated Smith, Schlick Fresnel on `wo.h`.
pub fn oracle_shade(
    albedo: [f64; 3],
    roughness: f64,
    n: Vec3,
    wo: Vec3,
    visibility: &[f64],
    probe: &LightProbe,
    cfg: &BrdfConfig,
) -> [f64; 3] {
    let mut out = [0.0; 3];
    let cos_o = n.dot(wo);
    if cos_o <= 0.0 {
        return out;
    }
    let alpha = roughness * roughness;
    let a2 = alpha * alpha;
    let lambda = |c: f64| {
        let tan2 = (1.0 - c * c).max(0.0) / (c * c);
        0.5 * ((1.0 + a2 * tan2).sqrt() - 1.0)
    };
    let dt = PI / PROBE_ROWS as f64;
    let dp = 2.0 * PI / PROBE_COLS as f64;
    for row in 0..PROBE_ROWS {
        let theta = (row as f64 + 0.5) * dt;
        for col in 0..PROBE_COLS {
            let phi = (col as f64 + 0.5) * dp;
            let wi = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            let cos_i = n.dot(wi);
            let l = probe.get(row, col);
            let v = visibility[row * PROBE_COLS + col];
            if cos_i <= 0.0 || v == 0.0 || l == [0.0; 3] {
                continue;
            }
            let spec = if cfg.specular_enabled {
                let h = (wi + wo).normalized();
                let ch = n.dot(h);
                let dd = a2 / (PI * (ch * ch * (a2 - 1.0) + 1.0).powi(2));
                let f = cfg.f0 + (1.0 - cfg.f0) * (1.0 - wo.dot(h).clamp(0.0, 1.0)).powi(5);
                let g2 = 1.0 / (1.0 + lambda(cos_i) + lambda(cos_o));
                dd * f * g2 / (4.0 * cos_i * cos_o)
            } else {
                0.0
            };
            let w = v * cos_i * theta.sin() * dt * dp;
            for c in 0..3 {
                out[c] += (albedo[c] / PI + spec) * l[c] as f64 * w;
            }
        }
    }
    out
}

/// Reference render of one view with its ground-truth maps.
#[derive(Clone, Debug)]
pub struct OracleFrame {
    /// One image per requested probe.
    pub rgb: Vec<Image>,
    /// Unit normals in [-1, 1]; zero where the ray misses.
    pub normal: Image,
    pub albedo: Image,
    /// Mean visibility over the upper hemisphere of the normal.
    pub visibility: Image,
    pub depth: Image,
    pub mask: Vec<bool>,
    /// Surface point of every hit pixel.
    pub points: Vec<Option<Vec3>>,
}

impl AnalyticScene {
    /// First surface hit of a camera ray at frame `t`.
    pub fn primary_hit(&self, pose: &Pose, ray: &Ray) -> Option<(f64, Vec3)> {
        let (t0, t1) = self.aabb.inflated(0.02).intersect(ray.origin, ray.dir)?;
        let start = Ray::new(ray.at(t0), ray.dir);
        let s = pose.trace(&start, t1 - t0)?;
        Some((t0 + s, ray.at(t0 + s)))
    }

    pub fn oracle_render(&self, probes: &[&LightProbe], camera: &Camera, t: usize) -> OracleFrame {
        let pose = self.pose(t);
        let (w, h) = (camera.width, camera.height);
        let mut out = OracleFrame {
            rgb: vec![Image::new(w, h); probes.len()],
            normal: Image::new(w, h),
            albedo: Image::new(w, h),
            visibility: Image::new(w, h),
            depth: Image::new(w, h),
            mask: vec![false; w * h],
            points: vec![None; w * h],
        };
        let texels: Vec<Vec3> = (0..PROBE_ROWS * PROBE_COLS)
            .map(|i| texel_geometry(i / PROBE_COLS, i % PROBE_COLS).expect("in range").direction)
            .collect();
        for y in 0..h {
            for x in 0..w {
                let ray = camera.pixel_ray(x, y);
                let Some((depth, p)) = self.primary_hit(&pose, &ray) else {
                    continue;
                };
                let s = pose.sdf_normal(p);
                let n = s.normal;
                let vis: Vec<f64> = texels
                    .iter()
                    .map(|&d| if d.dot(n) > 0.0 { pose.visibility(p, d) } else { 0.0 })
                    .collect();
                let upper: Vec<f64> = texels
                    .iter()
                    .zip(&vis)
                    .filter(|(d, _)| d.dot(n) > 0.0)
                    .map(|(_, &v)| v)
                    .collect();
                let mean_vis = upper.iter().sum::<f64>() / upper.len().max(1) as f64;
                let a = self.albedo(s.region);
                for (img, probe) in out.rgb.iter_mut().zip(probes) {
                    let c = oracle_shade(a, self.roughness, n, -ray.dir, &vis, probe, &self.brdf);
                    img.set(x, y, c.map(|v| v as f32));
                }
                let f = |v: f64| v as f32;
                out.normal.set(x, y, [f(n.x), f(n.y), f(n.z)]);
                out.albedo.set(x, y, a.map(f));
                out.visibility.set(x, y, [f(mean_vis); 3]);
                out.depth.set(x, y, [f(depth); 3]);
                out.mask[y * w + x] = true;
                out.points[y * w + x] = Some(p);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthOptions {
    pub cams: usize,
    pub width: usize,
    pub height: usize,
    pub n_anchors: usize,
    pub seed: u64,
    /// Also render held-out probes.
    pub relight: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            cams: 4,
            width: 64,
            height: 64,
            n_anchors: 2000,
            seed: 0,
            relight: true,
        }
    }
}

/// Write training frames, ground truth, anchors, probes and a manifest.
pub fn generate_dataset(scene: &AnalyticScene, opts: &SynthOptions, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let root = out_dir.as_ref();
    if opts.cams == 0 || opts.width == 0 || opts.height == 0 || opts.n_anchors == 0 {
        return Err(Error::input("cams, resolution and anchor count must be positive"));
    }
    for sub in ["anchors", "train", "masks", "gt/normal", "gt/albedo", "gt/visibility", "gt/depth", "probes", "relit"] {
        fs::create_dir_all(root.join(sub))?;
    }
    let cams = scene.cameras(opts.cams, opts.width, opts.height)?;
    let anchors = scene.anchors(opts.n_anchors, opts.seed);
    let train_probe = scene.training_probe();
    let heldout = if opts.relight { scene.heldout_probes()? } else { Vec::new() };
    train_probe.write_pfm(root.join("probes/train.pfm"))?;
    for (name, _, p) in &heldout {
        fs::create_dir_all(root.join("relit").join(name))?;
        p.write_pfm(root.join(format!("probes/{name}.pfm")))?;
    }
    let mut probes: Vec<&LightProbe> = vec![&train_probe];
    probes.extend(heldout.iter().map(|(_, _, p)| p));

    let jobs: Vec<(usize, usize)> = (0..scene.n_frames).flat_map(|t| (0..cams.len()).map(move |c| (t, c))).collect();
    let renders: Vec<OracleFrame> = jobs
        .par_iter()
        .map(|&(t, c)| scene.oracle_render(&probes, &cams[c], t))
        .collect();

    let mut frames = Vec::with_capacity(scene.n_frames);
    let mut relit: Vec<Vec<Vec<String>>> = vec![vec![Vec::new(); scene.n_frames]; heldout.len()];
    for t in 0..scene.n_frames {
        let anchor_path = format!("anchors/frame_{t:04}.bin");
        write_anchors(root.join(&anchor_path), &anchors[t])?;
        let mut views = Vec::with_capacity(cams.len());
        for (c, cam) in cams.iter().enumerate() {
            let r = &renders[t * cams.len() + c];
            let stem = view_stem(t, c);
            let image = format!("train/{stem}.pfm");
            r.rgb[0].write_pfm(root.join(&image))?;
            let mask = format!("masks/{stem}.pfm");
            let mut m = Image::new(cam.width, cam.height);
            for (i, &hit) in r.mask.iter().enumerate() {
                if hit {
                    m.set(i % cam.width, i / cam.width, [1.0; 3]);
                }
            }
            m.write_pfm(root.join(&mask))?;
            let gt = GtMaps {
                normal: format!("gt/normal/{stem}.pfm"),
                albedo: format!("gt/albedo/{stem}.pfm"),
                visibility: format!("gt/visibility/{stem}.pfm"),
                depth: format!("gt/depth/{stem}.pfm"),
            };
            r.normal.write_pfm(root.join(&gt.normal))?;
            r.albedo.write_pfm(root.join(&gt.albedo))?;
            r.visibility.write_pfm(root.join(&gt.visibility))?;
            r.depth.write_pfm(root.join(&gt.depth))?;
            for (k, (name, _, _)) in heldout.iter().enumerate() {
                let p = format!("relit/{name}/{stem}.pfm");
                r.rgb[k + 1].write_pfm(root.join(&p))?;
                relit[k][t].push(p);
            }
            views.push(ViewEntry {
                camera: *cam,
                image,
                mask: Some(mask),
                gt: Some(gt),
            });
        }
        frames.push(FrameEntry {
            index: t,
            anchors: anchor_path,
            views,
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        scene: match scene.kind {
            SceneKind::Smoke => "smoke".into(),
            SceneKind::Capsuleman => "capsuleman".into(),
        },
        frame_count: scene.n_frames,
        aabb: scene.aabb,
        frames,
        train_probe: Some("probes/train.pfm".into()),
        relight: heldout
            .iter()
            .zip(relit)
            .map(|((name, kind, _), images)| RelightSet {
                name: name.clone(),
                kind: *kind,
                probe: format!("probes/{name}.pfm"),
                images,
            })
            .collect(),
    };
    manifest.write(root.join(MANIFEST_FILE))?;
    Ok(manifest)
}
