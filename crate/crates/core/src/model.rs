//! The full set of learned components sharing one parameter store.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{
    encoded_dim, softplus, Activation, Graph, Mlp, MlpSpec, ParamId, ParamStore, Tensor, Var,
};
use crate::error::{Error, Result};
use crate::field::{AnchoredLatentField, DensityField, FieldConfig, LearnedDensity};
use crate::geometry::{GeometryHeads, DIR_BANDS};
use crate::math::{Aabb, Vec3};
use crate::probe::{LightProbe, N_TEXELS};
use crate::reflectance::{BrdfConfig, ReflectanceHeads};

pub const PROBE_PARAM: &str = "probe.raw";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub voxel_size: f64,
    pub latent_dim: usize,
    pub blur_passes: usize,
    pub pos_bands: usize,
    pub code_std: f64,
    /// Width and depth of the density, radiance, normal, albedo and roughness heads.
    pub hidden: usize,
    pub n_hidden: usize,
    /// The visibility head runs once per (point, texel) pair and gets its own size.
    pub vis_hidden: usize,
    pub vis_n_hidden: usize,
    pub f0: f64,
    pub specular: bool,
    /// Initial probe radiance (before noise).
    pub probe_init: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let f = FieldConfig::default();
        ModelConfig {
            voxel_size: f.voxel_size,
            latent_dim: f.latent_dim,
            blur_passes: f.blur_passes,
            pos_bands: f.pos_bands,
            code_std: 0.1,
            hidden: 256,
            n_hidden: 4,
            vis_hidden: 256,
            vis_n_hidden: 4,
            f0: 0.04,
            specular: true,
            probe_init: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn field(&self) -> FieldConfig {
        FieldConfig {
            voxel_size: self.voxel_size,
            latent_dim: self.latent_dim,
            blur_passes: self.blur_passes,
            pos_bands: self.pos_bands,
        }
    }

    pub fn brdf(&self) -> BrdfConfig {
        BrdfConfig {
            f0: self.f0,
            specular_enabled: self.specular,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > 0.0) {
            return Err(Error::validation("voxel_size must be positive"));
        }
        if self.latent_dim == 0 || self.hidden == 0 || self.vis_hidden == 0 || self.pos_bands == 0 {
            return Err(Error::validation("network widths and bands must be at least 1"));
        }
        if !(self.code_std >= 0.0) || !(self.probe_init > 0.0) {
            return Err(Error::validation("code_std must be >= 0 and probe_init > 0"));
        }
        self.brdf().validate()
    }
}

/// Anchored field, density head, geometry heads, reflectance heads, the
/// auxiliary radiance head and the trainable probe.
pub struct Model {
    pub config: ModelConfig,
    pub field: AnchoredLatentField,
    pub density: DensityField,
    pub geometry: GeometryHeads,
    pub reflectance: ReflectanceHeads,
    pub radiance: Mlp,
    pub probe_raw: ParamId,
}

fn radiance_spec(feature_dim: usize, cfg: &ModelConfig) -> MlpSpec {
    MlpSpec::new(feature_dim + encoded_dim(DIR_BANDS), 3, Activation::Sigmoid).with_hidden(cfg.hidden, cfg.n_hidden)
}

fn inverse_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

impl Model {
    pub fn init(store: &mut ParamStore, config: ModelConfig, frames: Vec<Vec<Vec3>>, aabb: &Aabb, seed: u64) -> Result<Model> {
        config.validate()?;
        let field = AnchoredLatentField::init(store, config.field(), frames, aabb, config.code_std, seed)?;
        let fd = field.feature_dim();
        let density = DensityField::init(store, DensityField::spec(&field, config.hidden, config.n_hidden), seed ^ 0x11)?;
        let (n_spec, _) = GeometryHeads::specs(fd, config.hidden, config.n_hidden);
        let (_, v_spec) = GeometryHeads::specs(fd, config.vis_hidden, config.vis_n_hidden);
        let geometry = GeometryHeads {
            normal: Mlp::init(store, "normal", n_spec, seed ^ 0x22)?,
            visibility: Mlp::init(store, "visibility", v_spec, seed ^ 0x33)?,
        };
        let reflectance = ReflectanceHeads::init(store, fd, config.hidden, config.n_hidden, seed ^ 0x44)?;
        let radiance = Mlp::init(store, "radiance", radiance_spec(fd, &config), seed ^ 0x55)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x66);
        let raw: Vec<f64> = (0..N_TEXELS * 3)
            .map(|_| inverse_softplus(config.probe_init * (1.0 + 0.1 * rng.random_range(-1.0..1.0))))
            .collect();
        let probe_raw = store.insert(PROBE_PARAM, Tensor::from_vec(N_TEXELS, 3, raw))?;
        Ok(Model {
            config,
            field,
            density,
            geometry,
            reflectance,
            radiance,
            probe_raw,
        })
    }

    pub fn bind(store: &ParamStore, config: ModelConfig, frames: Vec<Vec<Vec3>>, aabb: &Aabb) -> Result<Model> {
        config.validate()?;
        let field = AnchoredLatentField::bind(store, config.field(), frames, aabb)?;
        let fd = field.feature_dim();
        let density = DensityField::bind(store, DensityField::spec(&field, config.hidden, config.n_hidden))?;
        let (n_spec, _) = GeometryHeads::specs(fd, config.hidden, config.n_hidden);
        let (_, v_spec) = GeometryHeads::specs(fd, config.vis_hidden, config.vis_n_hidden);
        let geometry = GeometryHeads {
            normal: Mlp::bind(store, "normal", n_spec)?,
            visibility: Mlp::bind(store, "visibility", v_spec)?,
        };
        let reflectance = ReflectanceHeads::bind(store, fd, config.hidden, config.n_hidden)?;
        let radiance = Mlp::bind(store, "radiance", radiance_spec(fd, &config))?;
        let probe_raw = store
            .id(PROBE_PARAM)
            .ok_or_else(|| Error::validation(format!("missing parameter `{PROBE_PARAM}`")))?;
        if store.get(probe_raw).shape() != (N_TEXELS, 3) {
            return Err(Error::validation("probe parameter has wrong shape"));
        }
        Ok(Model {
            config,
            field,
            density,
            geometry,
            reflectance,
            radiance,
            probe_raw,
        })
    }

    pub fn density_source<'a>(&'a self, store: &'a ParamStore) -> LearnedDensity<'a> {
        LearnedDensity {
            store,
            field: &self.field,
            head: &self.density,
        }
    }

    /// Current probe estimate `softplus(raw)`, in f64, texel-major.
    pub fn probe_values(&self, store: &ParamStore) -> Vec<f64> {
        store.get(self.probe_raw).data.iter().map(|&r| softplus(r)).collect()
    }

    pub fn probe(&self, store: &ParamStore) -> Result<LightProbe> {
        LightProbe::new(self.probe_values(store).into_iter().map(|v| v as f32).collect())
    }

    pub fn probe_graph(&self, g: &mut Graph) -> Var {
        let raw = g.param(self.probe_raw);
        g.softplus(raw)
    }

    /// Parameters of the heads that only the full objective trains.
    pub fn decomposition_params(&self) -> Vec<ParamId> {
        let mut ids = self.geometry.normal.param_ids();
        ids.extend(self.geometry.visibility.param_ids());
        ids.extend(self.reflectance.albedo.param_ids());
        ids.extend(self.reflectance.roughness.param_ids());
        ids
    }

    /// Radiance head output for points seen from `view_dirs` (toward the camera).
    pub fn radiance_batch(&self, store: &ParamStore, feats: &Tensor, view_dirs: &[Vec3]) -> Tensor {
        let d = crate::diffcore::encode_batch(view_dirs, DIR_BANDS);
        self.radiance.forward_batch(store, &crate::field::hconcat(feats, &d))
    }

    pub fn radiance_graph(&self, g: &mut Graph, feats: Var, view_dirs: &[Vec3]) -> Var {
        let d = g.constant(crate::diffcore::encode_batch(view_dirs, DIR_BANDS));
        let x = g.concat_cols(&[feats, d]);
        self.radiance.forward_graph(g, x)
    }
}
