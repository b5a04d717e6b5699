//! Optimization loop: ray batches, the resolution schedule, the two-phase
//! curriculum, checkpoints and the CSV log.
//!
//! Phase A fits density and an auxiliary radiance head by volume rendering.
//! Phase B adds every decomposition term, with surface points, baked normals
//! and baked occlusion computed from the current density and held constant
//! within a step. The radiance term stays active in phase B (weight
//! `anchor_weight`) so the density keeps a direct image objective.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, View};
use crate::diffcore::{Adam, AdamConfig, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{
    baked_normals, baked_occlusion, composite_graph, geo_loss_graph, march_surfaces, normal_tensor, offset_along_normals,
    visibility_target, MarchPlan, OcclusionConfig, NORMAL_FD_STEP,
};
use crate::image::Image;
use crate::losses::{
    kde_entropy_graph, perturbations, perturbed, rgb_loss_graph, smoothness_graph, temporal_graph, LossReport,
    LossWeights, Reduce, TermVars,
};
use crate::math::{Aabb, Ray, Vec3};
use crate::model::{Model, ModelConfig};
use crate::probe::texel_table;
use crate::renderer::Camera;

/// Every knob of a run. Serialized as a flat `key = value` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub total_iters: usize,
    pub rays_per_iter: usize,
    /// Share of each ray batch drawn from foreground pixels (masked datasets only).
    pub foreground_fraction: f64,
    /// Samples per camera ray.
    pub n_samples: usize,
    /// Share of the iterations spent in phase A.
    pub phase_a_fraction: f64,
    pub progressive: bool,
    /// Iteration fractions at which the resolution scale steps to 0.5 and to 1.
    pub alpha_break_half: f64,
    pub alpha_break_full: f64,
    pub lr: f64,
    /// Learning rate multiplier reached at the last iteration (exponential decay).
    pub lr_final_factor: f64,
    pub probe_lr: f64,
    /// Weight of the radiance term during phase B.
    pub anchor_weight: f64,
    /// Weight of the opacity-vs-foreground-mask term inside the radiance term.
    pub mask_weight: f64,
    /// Light directions per step for the visibility distillation and smoothness terms.
    pub geo_dirs: usize,
    pub occlusion_samples: usize,
    /// Central-difference step for baked normals, in meters.
    pub normal_fd_step: f64,
    /// Start of the occlusion segment, keeping the shell of the surface itself out of the integral.
    pub occlusion_near: f64,
    pub occlusion_far: f64,
    /// Occlusion rays start this far out along the baked normal, which
    /// lets grazing directions clear a soft density shell.
    pub occlusion_offset: f64,
    /// Anchors per step in the temporal term.
    pub temporal_anchors: usize,
    /// 0 disables periodic checkpoints.
    pub checkpoint_every: usize,

    pub voxel_size: f64,
    pub latent_dim: usize,
    pub blur_passes: usize,
    pub pos_bands: usize,
    pub code_std: f64,
    pub hidden: usize,
    pub n_hidden: usize,
    pub vis_hidden: usize,
    pub vis_n_hidden: usize,
    pub f0: f64,
    pub specular: bool,
    pub probe_init: f64,

    pub lambda_rgb: f64,
    pub lambda_geo: f64,
    pub lambda_temp: f64,
    pub lambda_vis_smooth: f64,
    pub lambda_normal_smooth: f64,
    pub lambda_albedo_smooth: f64,
    pub lambda_entropy: f64,
    pub perturbation_std: f64,
    pub kde_bandwidth: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let w = LossWeights::default();
        TrainConfig {
            seed: 0,
            total_iters: 20_000,
            rays_per_iter: 1024,
            foreground_fraction: 0.0,
            n_samples: 64,
            phase_a_fraction: 0.3,
            progressive: true,
            alpha_break_half: 0.25,
            alpha_break_full: 0.5,
            lr: 5e-4,
            lr_final_factor: 0.1,
            probe_lr: 5e-3,
            anchor_weight: 1.0,
            mask_weight: 0.1,
            geo_dirs: 32,
            occlusion_samples: 32,
            normal_fd_step: NORMAL_FD_STEP,
            occlusion_near: 0.04,
            occlusion_far: 0.5,
            occlusion_offset: 0.0,
            temporal_anchors: 512,
            checkpoint_every: 5000,
            voxel_size: m.voxel_size,
            latent_dim: m.latent_dim,
            blur_passes: m.blur_passes,
            pos_bands: m.pos_bands,
            code_std: m.code_std,
            hidden: m.hidden,
            n_hidden: m.n_hidden,
            vis_hidden: m.vis_hidden,
            vis_n_hidden: m.vis_n_hidden,
            f0: m.f0,
            specular: m.specular,
            probe_init: m.probe_init,
            lambda_rgb: w.rgb,
            lambda_geo: w.geo,
            lambda_temp: w.temp,
            lambda_vis_smooth: w.vis_smooth,
            lambda_normal_smooth: w.normal_smooth,
            lambda_albedo_smooth: w.albedo_smooth,
            lambda_entropy: w.entropy,
            perturbation_std: w.perturbation_std,
            kde_bandwidth: w.kde_bandwidth,
        }
    }
}

impl TrainConfig {
    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            voxel_size: self.voxel_size,
            latent_dim: self.latent_dim,
            blur_passes: self.blur_passes,
            pos_bands: self.pos_bands,
            code_std: self.code_std,
            hidden: self.hidden,
            n_hidden: self.n_hidden,
            vis_hidden: self.vis_hidden,
            vis_n_hidden: self.vis_n_hidden,
            f0: self.f0,
            specular: self.specular,
            probe_init: self.probe_init,
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            rgb: self.lambda_rgb,
            geo: self.lambda_geo,
            temp: self.lambda_temp,
            vis_smooth: self.lambda_vis_smooth,
            normal_smooth: self.lambda_normal_smooth,
            albedo_smooth: self.lambda_albedo_smooth,
            entropy: self.lambda_entropy,
            perturbation_std: self.perturbation_std,
            kde_bandwidth: self.kde_bandwidth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::validation(m.to_string()));
        if self.total_iters == 0 || self.rays_per_iter == 0 || self.n_samples == 0 {
            return bad("total_iters, rays_per_iter and n_samples must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.foreground_fraction) {
            return bad("foreground_fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.phase_a_fraction) {
            return bad("phase_a_fraction must lie in [0, 1]");
        }
        if !(0.0 <= self.alpha_break_half && self.alpha_break_half <= self.alpha_break_full && self.alpha_break_full <= 1.0) {
            return bad("alpha breakpoints must satisfy 0 <= half <= full <= 1");
        }
        if !(self.lr >= 0.0 && self.probe_lr >= 0.0 && self.lr_final_factor > 0.0 && self.anchor_weight >= 0.0 && self.mask_weight >= 0.0) {
            return bad("learning rates and anchor_weight must be nonnegative, lr_final_factor positive");
        }
        if self.geo_dirs == 0 || self.geo_dirs > texel_table().len() || self.occlusion_samples == 0 {
            return bad("geo_dirs must lie in 1..=512 and occlusion_samples >= 1");
        }
        if !(self.normal_fd_step > 0.0) {
            return bad("normal_fd_step must be positive");
        }
        if !(0.0 <= self.occlusion_near && self.occlusion_near < self.occlusion_far) {
            return bad("occlusion segment must satisfy 0 <= near < far");
        }
        if !(self.occlusion_offset >= 0.0) {
            return bad("occlusion_offset must be >= 0");
        }
        self.model().validate()?;
        self.weights().validate()
    }

    pub fn parse(text: &str) -> Result<TrainConfig> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainConfig> {
        TrainConfig::parse(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn phase(&self, iter: usize) -> Phase {
        if (iter as f64) < self.phase_a_fraction * self.total_iters as f64 {
            Phase::A
        } else {
            Phase::B
        }
    }

    /// Learning-rate multiplier at `iter`.
    pub fn decay(&self, iter: usize) -> f64 {
        self.lr_final_factor.powf(iter as f64 / self.total_iters as f64)
    }
}

/// Resolution scale at `iter`: 0.25, then 0.5, then 1 (always 1 when the schedule is off).
pub fn alpha_schedule(iter: usize, cfg: &TrainConfig) -> f64 {
    if !cfg.progressive {
        return 1.0;
    }
    let f = iter as f64 / cfg.total_iters as f64;
    if f < cfg.alpha_break_half {
        0.25
    } else if f < cfg.alpha_break_full {
        0.5
    } else {
        1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    A,
    B,
}

/// A training view at one resolution scale.
#[derive(Clone, Debug)]
pub struct ScaledView {
    pub camera: Camera,
    pub image: Image,
    pub mask: Option<Image>,
    /// Pixels whose rays meet the inflated scene box.
    pub eligible: Vec<usize>,
    /// Eligible pixels at least half covered by the foreground mask.
    pub foreground: Vec<usize>,
}

pub fn scaled_views(views: &[View], aabb: &Aabb, alpha: f64) -> Vec<ScaledView> {
    let bx = aabb.inflated(0.1);
    views
        .iter()
        .map(|v| {
            let w = ((alpha * v.camera.width as f64).ceil() as usize).max(1);
            let h = ((alpha * v.camera.height as f64).ceil() as usize).max(1);
            let camera = v.camera.scaled(w, h);
            let image = if (w, h) == (v.image.width, v.image.height) {
                v.image.clone()
            } else {
                v.image.box_resize(w, h)
            };
            let mask = v.mask.as_ref().map(|m| if (w, h) == (m.width, m.height) { m.clone() } else { m.box_resize(w, h) });
            let eligible: Vec<usize> = (0..w * h)
                .filter(|&i| {
                    let r = camera.pixel_ray(i % w, i / w);
                    bx.intersect(r.origin, r.dir).is_some()
                })
                .collect();
            let foreground = match &mask {
                Some(m) => eligible.iter().copied().filter(|&i| m.get_f64(i % w, i / w)[0] >= 0.5).collect(),
                None => Vec::new(),
            };
            ScaledView {
                camera,
                image,
                mask,
                eligible,
                foreground,
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct RayBatch {
    pub rays: Vec<Ray>,
    /// `n x 3` linear RGB.
    pub targets: Tensor,
    /// Foreground coverage per ray, when the view has a mask.
    pub coverage: Vec<Option<f64>>,
    /// Fewer eligible pixels than requested; every eligible pixel was taken.
    pub short: bool,
}

/// Draw `n` eligible pixels pooled over the views of one frame. A share
/// `foreground_fraction` of them comes from masked foreground pixels when the
/// views carry masks; picks are distinct within each of the two pools.
pub fn draw_rays(views: &[ScaledView], n: usize, foreground_fraction: f64, rng: &mut ChaCha8Rng) -> RayBatch {
    let total: usize = views.iter().map(|v| v.eligible.len()).sum();
    let fg_total: usize = views.iter().map(|v| v.foreground.len()).sum();
    let n_fg = ((n as f64 * foreground_fraction).round() as usize).min(fg_total);
    let take = (n - n_fg).min(total);
    let mut picks = pooled_picks(views, |v| &v.foreground, n_fg, rng);
    picks.extend(pooled_picks(views, |v| &v.eligible, take, rng));
    let mut rays = Vec::with_capacity(picks.len());
    let mut targets = Tensor::zeros(picks.len(), 3);
    let mut coverage = Vec::with_capacity(picks.len());
    for (k, (vi, pix)) in picks.into_iter().enumerate() {
        let v = &views[vi];
        let (x, y) = (pix % v.camera.width, pix / v.camera.width);
        rays.push(v.camera.pixel_ray(x, y));
        targets.row_mut(k).copy_from_slice(&v.image.get_f64(x, y));
        coverage.push(v.mask.as_ref().map(|m| m.get_f64(x, y)[0].clamp(0.0, 1.0)));
    }
    RayBatch {
        rays,
        targets,
        coverage,
        short: n_fg + take < n,
    }
}

/// `n` distinct (view, pixel) pairs drawn from the concatenated pools.
fn pooled_picks(
    views: &[ScaledView],
    pool: impl Fn(&ScaledView) -> &[usize],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    if n == 0 {
        return Vec::new();
    }
    let total: usize = views.iter().map(|v| pool(v).len()).sum();
    let mut picks = index::sample(rng, total, n).into_vec();
    picks.sort_unstable();
    let (mut vi, mut base) = (0, 0);
    picks
        .into_iter()
        .map(|p| {
            while p >= base + pool(&views[vi]).len() {
                base += pool(&views[vi]).len();
                vi += 1;
            }
            (vi, pool(&views[vi])[p - base])
        })
        .collect()
}

/// Ray batch for one frame at scale `alpha`, reproducible from `seed`.
pub fn sample_rays(views: &[View], aabb: &Aabb, alpha: f64, n: usize, seed: u64) -> Result<RayBatch> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::input(format!("resolution scale {alpha} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(draw_rays(&scaled_views(views, aabb, alpha), n, 0.0, &mut rng))
}

#[derive(Clone, Debug)]
pub struct StepReport {
    pub iteration: usize,
    pub phase: Phase,
    pub alpha: f64,
    pub frame: usize,
    /// Volume-rendered radiance MSE.
    pub anchor: f64,
    /// Opacity-vs-mask MSE.
    pub mask: f64,
    /// Decomposition terms (phase B only).
    pub terms: Option<LossReport>,
    pub rays: usize,
    pub surface_hits: usize,
    pub short: bool,
}

const CSV_HEADER: [&str; 17] = [
    "iter", "phase", "alpha", "frame", "anchor", "mask", "rgb", "geo", "temp", "tau_v", "tau_n", "tau_a", "entropy", "total",
    "rays", "hits", "short",
];

impl StepReport {
    fn csv_row(&self) -> Vec<String> {
        let term = |n: &str| self.terms.as_ref().and_then(|r| r.get(n)).map_or(0.0, |t| t.value);
        let total = self.terms.as_ref().map_or(self.anchor, |r| r.total);
        let mut row = vec![
            self.iteration.to_string(),
            match self.phase {
                Phase::A => "A".into(),
                Phase::B => "B".into(),
            },
            self.alpha.to_string(),
            self.frame.to_string(),
            format!("{:e}", self.anchor),
            format!("{:e}", self.mask),
        ];
        for n in crate::losses::TERM_NAMES {
            row.push(format!("{:e}", term(n)));
        }
        row.push(format!("{total:e}"));
        row.push(self.rays.to_string());
        row.push(self.surface_hits.to_string());
        row.push(u8::from(self.short).to_string());
        row
    }
}

/// Optimizer state plus the model; enough to continue a run bit-identically.
pub struct Trainer {
    pub config: TrainConfig,
    pub store: ParamStore,
    pub model: Model,
    pub adam: Adam,
    pub iteration: usize,
    aabb: Aabb,
    views: Vec<Vec<View>>,
    levels: BTreeMap<u64, Vec<Vec<ScaledView>>>,
}

fn check_dataset(dataset: &Dataset) -> Result<()> {
    if dataset.n_frames() == 0 || dataset.views.iter().any(|v| v.is_empty()) {
        return Err(Error::validation("every frame needs at least one view"));
    }
    Ok(())
}

impl Trainer {
    pub fn new(dataset: &Dataset, config: TrainConfig) -> Result<Trainer> {
        config.validate()?;
        check_dataset(dataset)?;
        let mut store = ParamStore::new();
        let aabb = dataset.aabb();
        let model = Model::init(&mut store, config.model(), dataset.anchors.clone(), &aabb, config.seed)?;
        let adam = Adam::new(&store, AdamConfig::default());
        Ok(Trainer {
            config,
            store,
            model,
            adam,
            iteration: 0,
            aabb,
            views: dataset.views.clone(),
            levels: BTreeMap::new(),
        })
    }

    pub fn from_checkpoint(dataset: &Dataset, ckpt: Checkpoint) -> Result<Trainer> {
        check_dataset(dataset)?;
        let aabb = dataset.aabb();
        let model = Model::bind(&ckpt.store, ckpt.config.model(), dataset.anchors.clone(), &aabb)?;
        if ckpt.adam.m.len() != ckpt.store.len() {
            return Err(Error::format("optimizer state does not match the parameters"));
        }
        Ok(Trainer {
            config: ckpt.config,
            store: ckpt.store,
            model,
            adam: ckpt.adam,
            iteration: ckpt.iteration,
            aabb,
            views: dataset.views.clone(),
            levels: BTreeMap::new(),
        })
    }

    pub fn aabb(&self) -> Aabb {
        self.aabb
    }

    pub fn n_frames(&self) -> usize {
        self.views.len()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            iteration: self.iteration,
            config: self.config.clone(),
            store: self.store.clone(),
            adam: self.adam.clone(),
        }
    }

    fn level(&mut self, alpha: f64) -> &Vec<Vec<ScaledView>> {
        let (views, aabb) = (&self.views, self.aabb);
        self.levels
            .entry(alpha.to_bits())
            .or_insert_with(|| views.iter().map(|v| scaled_views(v, &aabb, alpha)).collect())
    }

    /// One gradient evaluation and one optimizer update.
    pub fn step(&mut self) -> Result<StepReport> {
        let it = self.iteration;
        let frame = it % self.n_frames();
        let alpha = alpha_schedule(it, &self.config);
        let phase = self.config.phase(it);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(it as u64 + 1);
        let n_rays = self.config.rays_per_iter;
        let fg = self.config.foreground_fraction;
        let batch = draw_rays(&self.level(alpha)[frame], n_rays, fg, &mut rng);

        let cfg = &self.config;
        let model = &self.model;
        let mut g = Graph::new(&self.store);
        let rad = radiance_term(&mut g, model, &batch, &self.aabb, frame, cfg.n_samples, &mut rng)?;
        let (mut anchor_value, mut mask_value) = (0.0, 0.0);
        let anchor = match rad {
            Some((rgb, mask)) => {
                anchor_value = g.value(rgb).item();
                let mut parts = vec![(rgb, 1.0)];
                if let Some(m) = mask {
                    mask_value = g.value(m).item();
                    parts.push((m, cfg.mask_weight));
                }
                if !anchor_value.is_finite() || !mask_value.is_finite() {
                    return Err(Error::numeric("anchor"));
                }
                Some(g.weighted_sum(&parts))
            }
            None => None,
        };
        let mut hits = 0;
        let (root, terms) = match phase {
            Phase::A => (anchor, None),
            Phase::B => {
                let (terms, report, n_hits) = decomposition_terms(&mut g, model, cfg, &batch, &self.aabb, frame, &mut rng)?;
                hits = n_hits;
                let mut parts = vec![(terms, 1.0)];
                if let Some(a) = anchor {
                    if cfg.anchor_weight > 0.0 {
                        parts.push((a, cfg.anchor_weight));
                    }
                }
                (Some(g.weighted_sum(&parts)), Some(report))
            }
        };
        let mut grads = self.store.zero_grads();
        if let Some(root) = root {
            g.backward(root, &mut grads)?;
        }
        drop(g);
        let decay = self.config.decay(it);
        let (lr, probe_lr, probe_id) = (self.config.lr * decay, self.config.probe_lr * decay, self.model.probe_raw);
        self.adam.step(&mut self.store, &grads, |id| if id == probe_id { probe_lr } else { lr })?;
        self.iteration += 1;
        Ok(StepReport {
            iteration: it,
            phase,
            alpha,
            frame,
            anchor: anchor_value,
            mask: mask_value,
            terms,
            rays: batch.rays.len(),
            surface_hits: hits,
            short: batch.short,
        })
    }

    /// Step until `end` (capped at `total_iters`), passing each report to `observe`.
    pub fn run_until(&mut self, end: usize, mut observe: impl FnMut(&Trainer, &StepReport) -> Result<()>) -> Result<()> {
        while self.iteration < end.min(self.config.total_iters) {
            let r = self.step()?;
            observe(self, &r)?;
        }
        Ok(())
    }
}

/// Volume-rendering MSE of the auxiliary radiance head and, for rays with a
/// known foreground coverage, the MSE between accumulated opacity and that
/// coverage. `None` when no ray meets the box.
fn radiance_term(
    g: &mut Graph,
    model: &Model,
    batch: &RayBatch,
    aabb: &Aabb,
    t: usize,
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Option<(Var, Option<Var>)>> {
    let plan = MarchPlan::new(&batch.rays, aabb, n_samples, Some(rng));
    if plan.active.is_empty() {
        return Ok(None);
    }
    let pts = plan.points(&batch.rays);
    let views: Vec<Vec3> = plan
        .active
        .iter()
        .flat_map(|&r| std::iter::repeat_n(-batch.rays[r].dir, plan.n_samples))
        .collect();
    let feats = model.field.features_graph(g, &pts, t)?;
    let sigma = model.density.from_features_graph(g, feats);
    let color = model.radiance_graph(g, feats, &views);
    let ones = g.constant(Tensor::from_vec(pts.len(), 1, vec![1.0; pts.len()]));
    let color4 = g.concat_cols(&[color, ones]);
    let out = composite_graph(g, sigma, color4, &plan.deltas, plan.n_samples);
    let rgb = g.slice_cols(out, 0, 3);
    let mut target = Tensor::zeros(plan.active.len(), 3);
    for (a, &r) in plan.active.iter().enumerate() {
        target.row_mut(a).copy_from_slice(batch.targets.row(r));
    }
    let rgb_term = rgb_loss_graph(g, rgb, target)?;
    let known: Vec<usize> = (0..plan.active.len()).filter(|&a| batch.coverage[plan.active[a]].is_some()).collect();
    let mask_term = if known.is_empty() {
        None
    } else {
        let opacity = g.slice_cols(out, 3, 1);
        let picked = g.gather_rows(opacity, &known);
        let cov: Vec<f64> = known.iter().map(|&a| batch.coverage[plan.active[a]].unwrap_or(0.0)).collect();
        let c = g.constant(Tensor::from_vec(cov.len(), 1, cov));
        let d = g.sub(picked, c);
        let sq = g.square(d);
        Some(g.mean(sq))
    };
    Ok(Some((rgb_term, mask_term)))
}

/// All decomposition terms on the surface points of `batch`; returns the
/// weighted sum, the per-term report and the number of surface hits.
fn decomposition_terms(
    g: &mut Graph,
    model: &Model,
    cfg: &TrainConfig,
    batch: &RayBatch,
    aabb: &Aabb,
    t: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Var, LossReport, usize)> {
    let weights = cfg.weights();
    let store = g.store();
    let density = model.density_source(store);
    let surf = march_surfaces(&density, &batch.rays, aabb, t, cfg.n_samples, None)?;
    let hit: Vec<usize> = (0..surf.len()).filter(|&i| surf[i].hit).collect();
    let mut vars = TermVars::default();
    if let Some(subset) = temporal_subset(model, cfg, rng) {
        vars.temp = temporal_graph(g, &model.field, &model.density, t, Some(&subset))?;
    }
    if hit.is_empty() {
        let (root, report) = vars.total(g, &weights)?;
        return Ok((root, report, 0));
    }
    let x: Vec<Vec3> = hit.iter().map(|&i| surf[i].position).collect();
    let views: Vec<Vec3> = hit.iter().map(|&i| -batch.rays[i].dir).collect();
    let p = x.len();

    let feats = model.field.features_graph(g, &x, t)?;
    let normals = model.geometry.normals_graph(g, feats);
    let albedo = model.reflectance.albedo_graph(g, feats);
    let rough = model.reflectance.roughness_graph(g, feats);
    let all_dirs: Vec<Vec3> = texel_table().iter().map(|tg| tg.direction).collect();
    let vis_flat = model.geometry.visibility_graph(g, feats, &all_dirs);
    let vis = g.reshape(vis_flat, p, all_dirs.len());
    let probe = model.probe_graph(g);
    let rgb = crate::renderer::shade_graph(g, albedo, rough, normals, vis, probe, &views, &model.config.brdf());
    let mut target = Tensor::zeros(p, 3);
    for (k, &i) in hit.iter().enumerate() {
        target.row_mut(k).copy_from_slice(batch.targets.row(i));
    }
    vars.rgb = Some(rgb_loss_graph(g, rgb, target)?);

    let pick = index::sample(rng, all_dirs.len(), cfg.geo_dirs).into_vec();
    let dirs: Vec<Vec3> = pick.iter().map(|&k| all_dirs[k]).collect();
    let vis_k = model.geometry.visibility_graph(g, feats, &dirs);
    if weights.geo != 0.0 {
        let n_star = baked_normals(&density, &x, t, cfg.normal_fd_step)?;
        let occ_cfg = OcclusionConfig {
            n_samples: cfg.occlusion_samples,
            near: cfg.occlusion_near,
            far: cfg.occlusion_far,
        };
        let origins = offset_along_normals(&x, &n_star, cfg.occlusion_offset);
        let occ = baked_occlusion(&density, &origins, &dirs, t, &occ_cfg, Some(rng))?;
        vars.geo = Some(geo_loss_graph(g, vis_k, visibility_target(&occ), normals, normal_tensor(&n_star)));
    }

    if weights.vis_smooth != 0.0 || weights.normal_smooth != 0.0 || weights.albedo_smooth != 0.0 {
        let eps = perturbations(p, weights.perturbation_std, rng)?;
        let xp = perturbed(&x, &eps);
        let feats_p = model.field.features_graph(g, &xp, t)?;
        if weights.vis_smooth != 0.0 {
            let vp = model.geometry.visibility_graph(g, feats_p, &dirs);
            vars.tau_v = Some(smoothness_graph(g, vis_k, vp, Reduce::MeanAbs));
        }
        if weights.normal_smooth != 0.0 {
            let np = model.geometry.normals_graph(g, feats_p);
            vars.tau_n = Some(smoothness_graph(g, normals, np, Reduce::L1Norm));
        }
        if weights.albedo_smooth != 0.0 {
            let ap = model.reflectance.albedo_graph(g, feats_p);
            vars.tau_a = Some(smoothness_graph(g, albedo, ap, Reduce::L1Norm));
        }
    }
    if p >= 2 {
        vars.entropy = Some(kde_entropy_graph(g, albedo, weights.kde_bandwidth)?);
    }
    let (root, report) = vars.total(g, &weights)?;
    Ok((root, report, p))
}

fn temporal_subset(model: &Model, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    let n = model.field.n_anchors();
    if cfg.lambda_temp == 0.0 || cfg.temporal_anchors == 0 || model.field.n_frames() < 2 {
        return None;
    }
    let mut idx = index::sample(rng, n, cfg.temporal_anchors.min(n)).into_vec();
    idx.sort_unstable();
    Some(idx)
}

const MAGIC: &[u8; 8] = b"RLCKPT\0\0";
const CHECKPOINT_VERSION: u32 = 1;

/// Parameters, optimizer moments, iteration and the run configuration.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub iteration: usize,
    pub config: TrainConfig,
    pub store: ParamStore,
    pub adam: Adam,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format("checkpoint truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u64()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::format("checkpoint string is not UTF-8"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n.checked_mul(8).ok_or_else(|| Error::format("checkpoint tensor too large"))?)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let put_u64 = |out: &mut Vec<u8>, v: u64| out.extend_from_slice(&v.to_le_bytes());
        let put_str = |out: &mut Vec<u8>, s: &str| {
            out.extend_from_slice(&(s.len() as u64).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        };
        put_u64(&mut out, self.iteration as u64);
        put_u64(&mut out, self.adam.step);
        put_str(&mut out, &self.config.to_text());
        put_u64(&mut out, self.store.len() as u64);
        for (i, e) in self.store.entries().iter().enumerate() {
            put_str(&mut out, &e.name);
            put_u64(&mut out, e.value.rows as u64);
            put_u64(&mut out, e.value.cols as u64);
            for t in [&e.value, &self.adam.m[i], &self.adam.v[i]] {
                for v in &t.data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::format("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(format!("unsupported checkpoint version {version}")));
        }
        let iteration = r.u64()? as usize;
        let step = r.u64()?;
        let config = TrainConfig::parse(&r.string()?)?;
        let n = r.u64()? as usize;
        let mut store = ParamStore::new();
        let (mut m, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let name = r.string()?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let len = rows.checked_mul(cols).ok_or_else(|| Error::format("checkpoint tensor too large"))?;
            store.insert(name, Tensor::from_vec(rows, cols, r.f64s(len)?))?;
            m.push(Tensor::from_vec(rows, cols, r.f64s(len)?));
            v.push(Tensor::from_vec(rows, cols, r.f64s(len)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::format("trailing bytes after checkpoint"));
        }
        Ok(Checkpoint {
            iteration,
            config,
            store,
            adam: Adam {
                cfg: AdamConfig::default(),
                m,
                v,
                step,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::image::write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }
}

/// Where [`fit`] writes its log and checkpoints.
pub fn checkpoint_path(out_dir: &Path, iteration: usize) -> PathBuf {
    out_dir.join(format!("ckpt_{iteration:07}.bin"))
}

pub const FINAL_CHECKPOINT: &str = "final.bin";
pub const LOG_FILE: &str = "log.csv";

/// Train to completion, writing `log.csv`, periodic checkpoints and
/// `final.bin` under `out_dir`. A non-finite loss or gradient stops the run
/// after dumping `abort_<iter>.bin`.
pub fn fit(dataset: &Dataset, config: TrainConfig, out_dir: &Path, resume: Option<Checkpoint>) -> Result<Trainer> {
    fs::create_dir_all(out_dir)?;
    let mut trainer = match resume {
        Some(ck) => Trainer::from_checkpoint(dataset, ck)?,
        None => Trainer::new(dataset, config)?,
    };
    let log_path = out_dir.join(LOG_FILE);
    let append = trainer.iteration > 0 && log_path.exists();
    let file = fs::OpenOptions::new()
        .create(true)
        .append(append)
        .write(true)
        .truncate(!append)
        .open(&log_path)?;
    let mut log = csv::WriterBuilder::new().from_writer(file);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    if !append {
        log.write_record(CSV_HEADER).map_err(io)?;
    }
    let every = trainer.config.checkpoint_every;
    let total = trainer.config.total_iters;
    let result = trainer.run_until(total, |tr, r| {
        log.write_record(r.csv_row()).map_err(io)?;
        if every > 0 && tr.iteration % every == 0 && tr.iteration < total {
            log.flush()?;
            tr.checkpoint().save(checkpoint_path(out_dir, tr.iteration))?;
        }
        Ok(())
    });
    log.flush()?;
    if let Err(e) = result {
        if matches!(e, Error::Numeric { .. }) {
            let dump = out_dir.join(format!("abort_{:07}.bin", trainer.iteration));
            trainer.checkpoint().save(&dump)?;
            let mut f = fs::OpenOptions::new().append(true).open(&log_path)?;
            writeln!(f, "# aborted at iteration {}: {e}", trainer.iteration)?;
        }
        return Err(e);
    }
    trainer.checkpoint().save(out_dir.join(FINAL_CHECKPOINT))?;
    Ok(trainer)
}
