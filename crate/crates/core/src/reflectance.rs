//! Diffuse/roughness heads and the Cook-Torrance microfacet BRDF.
//!
//! `R = A / pi + D * F * Vis` with the GGX distribution (`alpha = gamma^2`),
//! Schlick Fresnel and the height-correlated Smith term written as
//! `Vis = G2 / (4 (n.wi)(n.wo))`.

use std::f64::consts::PI;

use crate::diffcore::{Activation, Graph, Mlp, MlpSpec, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::math::Vec3;

pub const ROUGHNESS_FLOOR: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrdfConfig {
    pub f0: f64,
    pub specular_enabled: bool,
}

impl Default for BrdfConfig {
    fn default() -> Self {
        BrdfConfig {
            f0: 0.04,
            specular_enabled: true,
        }
    }
}

impl BrdfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.f0) {
            return Err(Error::validation(format!("F0 must lie in [0, 1], got {}", self.f0)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReflectanceBundle {
    pub albedo: [f64; 3],
    pub roughness: f64,
}

/// Specular lobe `D F Vis` and its derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Specular {
    pub value: f64,
    pub d_gamma: f64,
    pub d_normal: Vec3,
}

/// Specular term for unit `n`, `wi`, `wo`; zero for back-facing light or view.
pub fn specular(gamma: f64, n: Vec3, wi: Vec3, wo: Vec3, f0: f64) -> Specular {
    let ci = n.dot(wi);
    let co = n.dot(wo);
    let hs = wi + wo;
    let hl = hs.norm();
    if ci <= 0.0 || co <= 0.0 || hl < 1e-12 {
        return Specular::default();
    }
    let h = hs / hl;
    let ch = n.dot(h);
    let cd = wi.dot(h).clamp(0.0, 1.0);

    let a2 = gamma.powi(4);
    let q = ch * ch * (a2 - 1.0) + 1.0;
    let d = a2 / (PI * q * q);
    let f = f0 + (1.0 - f0) * (1.0 - cd).powi(5);
    let li = (ci * ci * (1.0 - a2) + a2).sqrt();
    let lo = (co * co * (1.0 - a2) + a2).sqrt();
    let den = co * li + ci * lo;
    let vis = 0.5 / den;
    let value = d * f * vis;

    let dd_da2 = (q - 2.0 * a2 * ch * ch) / (PI * q * q * q);
    let dd_dch = -4.0 * a2 * ch * (a2 - 1.0) / (PI * q * q * q);
    let dden_da2 = co * (1.0 - ci * ci) / (2.0 * li) + ci * (1.0 - co * co) / (2.0 * lo);
    let dden_dci = co * ci * (1.0 - a2) / li + lo;
    let dden_dco = li + ci * co * (1.0 - a2) / lo;
    let dvis = |dden: f64| -0.5 / (den * den) * dden;

    let d_a2 = f * (dd_da2 * vis + d * dvis(dden_da2));
    let d_gamma = d_a2 * 4.0 * gamma.powi(3);
    let d_normal = (h * (dd_dch * vis) + wi * (d * dvis(dden_dci)) + wo * (d * dvis(dden_dco))) * f;
    Specular {
        value,
        d_gamma,
        d_normal,
    }
}

/// RGB reflectance `R(wi, wo)`.
pub fn brdf_eval(albedo: [f64; 3], gamma: f64, n: Vec3, wi: Vec3, wo: Vec3, cfg: &BrdfConfig) -> [f64; 3] {
    if n.dot(wi) <= 0.0 || n.dot(wo) <= 0.0 {
        return [0.0; 3];
    }
    let s = if cfg.specular_enabled {
        specular(gamma, n, wi, wo, cfg.f0).value
    } else {
        0.0
    };
    albedo.map(|a| a / PI + s)
}

/// GGX normal distribution with `alpha = gamma^2`.
pub fn ggx_distribution(gamma: f64, cos_h: f64) -> f64 {
    let a2 = gamma.powi(4);
    let q = cos_h * cos_h * (a2 - 1.0) + 1.0;
    a2 / (PI * q * q)
}

/// Diffuse head `f_A` and roughness head `f_gamma`.
pub struct ReflectanceHeads {
    pub albedo: Mlp,
    pub roughness: Mlp,
}

impl ReflectanceHeads {
    pub fn specs(feature_dim: usize, hidden: usize, n_hidden: usize) -> (MlpSpec, MlpSpec) {
        (
            MlpSpec::new(feature_dim, 3, Activation::Sigmoid).with_hidden(hidden, n_hidden),
            MlpSpec::new(feature_dim, 1, Activation::Sigmoid).with_hidden(hidden, n_hidden),
        )
    }

    pub fn init(store: &mut ParamStore, feature_dim: usize, hidden: usize, n_hidden: usize, seed: u64) -> Result<Self> {
        let (a, r) = Self::specs(feature_dim, hidden, n_hidden);
        Ok(ReflectanceHeads {
            albedo: Mlp::init(store, "albedo", a, seed)?,
            roughness: Mlp::init(store, "roughness", r, seed.wrapping_add(1))?,
        })
    }

    pub fn bind(store: &ParamStore, feature_dim: usize, hidden: usize, n_hidden: usize) -> Result<Self> {
        let (a, r) = Self::specs(feature_dim, hidden, n_hidden);
        Ok(ReflectanceHeads {
            albedo: Mlp::bind(store, "albedo", a)?,
            roughness: Mlp::bind(store, "roughness", r)?,
        })
    }

    /// `(P x 3 albedo, P x 1 roughness)`.
    pub fn evaluate(&self, store: &ParamStore, feats: &Tensor) -> (Tensor, Tensor) {
        let a = self.albedo.forward_batch(store, feats);
        let r = self
            .roughness
            .forward_batch(store, feats)
            .map(|s| ROUGHNESS_FLOOR + (1.0 - ROUGHNESS_FLOOR) * s);
        (a, r)
    }

    pub fn bundles(&self, store: &ParamStore, feats: &Tensor) -> Vec<ReflectanceBundle> {
        let (a, r) = self.evaluate(store, feats);
        (0..feats.rows)
            .map(|i| ReflectanceBundle {
                albedo: [a.get(i, 0), a.get(i, 1), a.get(i, 2)],
                roughness: r.data[i],
            })
            .collect()
    }

    pub fn albedo_graph(&self, g: &mut Graph, feats: Var) -> Var {
        self.albedo.forward_graph(g, feats)
    }

    pub fn roughness_graph(&self, g: &mut Graph, feats: Var) -> Var {
        let s = self.roughness.forward_graph(g, feats);
        g.affine(s, 1.0 - ROUGHNESS_FLOOR, ROUGHNESS_FLOOR)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::{texel_table, N_TEXELS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let l = v.norm();
            if l > 0.1 && l <= 1.0 {
                return v / l;
            }
        }
    }

    fn hemi(rng: &mut ChaCha8Rng, n: Vec3) -> Vec3 {
        let v = unit(rng);
        if v.dot(n) < 0.0 {
            -v
        } else {
            v
        }
    }

    #[test]
    fn zero_albedo_and_fresnel_vanish() {
        let cfg = BrdfConfig {
            f0: 0.0,
            specular_enabled: true,
        };
        let n = Vec3::Z;
        let wi = Vec3::new(0.3, 0.0, 0.9).normalized();
        let wo = Vec3::new(-0.2, 0.4, 0.8).normalized();
        // Schlick with F0 = 0 still reflects at grazing; at normal incidence it is exactly zero
        assert_eq!(brdf_eval([0.0; 3], 0.5, n, n, n, &cfg), [0.0; 3]);
        let lam = brdf_eval([0.2, 0.4, 0.6], 0.3, n, wi, wo, &BrdfConfig {
            specular_enabled: false,
            ..Default::default()
        });
        for (l, a) in lam.iter().zip([0.2, 0.4, 0.6]) {
            assert_eq!(*l, a / PI);
        }
    }

    #[test]
    fn normal_incidence_distribution() {
        let d = ggx_distribution(0.5, 1.0);
        assert!((d - 1.0 / (PI * 0.0625)).abs() < 1e-12);
        assert!((d - 5.093).abs() < 1e-3);
    }

    #[test]
    fn reciprocity_and_nonnegativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = BrdfConfig::default();
        for _ in 0..1000 {
            let n = unit(&mut rng);
            let wi = hemi(&mut rng, n);
            let wo = hemi(&mut rng, n);
            let g = rng.random_range(0.01..1.0);
            let a = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            let r1 = brdf_eval(a, g, n, wi, wo, &cfg);
            let r2 = brdf_eval(a, g, n, wo, wi, &cfg);
            for c in 0..3 {
                assert!((r1[c] - r2[c]).abs() <= 1e-12 * r1[c].abs().max(1.0));
                assert!(r1[c] >= 0.0);
            }
        }
    }

    #[test]
    fn back_facing_is_zero() {
        let n = Vec3::Z;
        let up = Vec3::new(0.0, 0.6, 0.8);
        let down = Vec3::new(0.0, 0.6, -0.8);
        assert_eq!(brdf_eval([1.0; 3], 0.5, n, down, up, &BrdfConfig::default()), [0.0; 3]);
        assert_eq!(brdf_eval([1.0; 3], 0.5, n, up, down, &BrdfConfig::default()), [0.0; 3]);
    }

    #[test]
    fn lambertian_white_furnace() {
        let a = 0.7;
        let n = Vec3::Z;
        let sum: f64 = texel_table()
            .iter()
            .map(|t| a / PI * t.direction.dot(n).max(0.0) * t.solid_angle)
            .sum();
        assert_eq!(texel_table().len(), N_TEXELS);
        assert!((sum - a).abs() / a < 0.02, "{sum}");
    }

    /// Independent route: Smith G2 via the Lambda form divided by 4 cos cos.
    fn specular_lambda_form(gamma: f64, n: Vec3, wi: Vec3, wo: Vec3, f0: f64) -> f64 {
        let alpha = gamma * gamma;
        let lambda = |c: f64| {
            let tan2 = (1.0 - c * c) / (c * c);
            0.5 * (-1.0 + (1.0 + alpha * alpha * tan2).sqrt())
        };
        let (ci, co) = (n.dot(wi), n.dot(wo));
        let h = (wi + wo).normalized();
        let g2 = 1.0 / (1.0 + lambda(ci) + lambda(co));
        let f = f0 + (1.0 - f0) * (1.0 - wo.dot(h)).powi(5);
        ggx_distribution(gamma, n.dot(h)) * f * g2 / (4.0 * ci * co)
    }

    #[test]
    fn smith_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let n = unit(&mut rng);
            let wi = hemi(&mut rng, n);
            let wo = hemi(&mut rng, n);
            if n.dot(wi) < 1e-3 || n.dot(wo) < 1e-3 {
                continue;
            }
            let g = rng.random_range(0.05..1.0);
            let a = specular(g, n, wi, wo, 0.04).value;
            let b = specular_lambda_form(g, n, wi, wo, 0.04);
            assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn specular_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 200 {
            let n = unit(&mut rng);
            let wi = hemi(&mut rng, n);
            let wo = hemi(&mut rng, n);
            if n.dot(wi) < 0.05 || n.dot(wo) < 0.05 {
                continue;
            }
            let g = rng.random_range(0.1..1.0);
            let s = specular(g, n, wi, wo, 0.04);
            let h = 1e-6;
            let fd = (specular(g + h, n, wi, wo, 0.04).value - specular(g - h, n, wi, wo, 0.04).value) / (2.0 * h);
            assert!((fd - s.d_gamma).abs() <= 1e-5 * fd.abs().max(1.0), "{fd} {}", s.d_gamma);
            for axis in 0..3 {
                let mut e = [0.0; 3];
                e[axis] = h;
                let e = Vec3::from_slice(&e);
                // perturb the raw vector; the formula treats n as unconstrained
                let fd = (specular(g, n + e, wi, wo, 0.04).value - specular(g, n - e, wi, wo, 0.04).value) / (2.0 * h);
                assert!((fd - s.d_normal[axis]).abs() <= 1e-5 * fd.abs().max(1.0));
            }
            checked += 1;
        }
    }

    #[test]
    fn untrained_heads_are_neutral() {
        let mut s = ParamStore::new();
        let h = ReflectanceHeads::init(&mut s, 7, 16, 2, 0).unwrap();
        let f = Tensor::from_vec(3, 7, (0..21).map(|i| i as f64 * 0.1 - 1.0).collect());
        for b in h.bundles(&s, &f) {
            assert_eq!(b.albedo, [0.5; 3]);
            assert!((b.roughness - 0.505).abs() < 1e-15);
        }
    }

    #[test]
    fn f0_is_validated() {
        assert!(BrdfConfig { f0: 1.5, specular_enabled: true }.validate().is_err());
        assert!(BrdfConfig::default().validate().is_ok());
    }
}
