//! Lat-long environment light probes.
//!
//! Rows sample the polar angle from the +z pole downwards, columns sample
//! the azimuth counter-clockwise from +x. Every texel is represented by the
//! direction through its center and the solid angle of its cell
//! (midpoint rule), so summing over the 512 texels approximates an
//! integral over the sphere.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::Vec3;

pub const PROBE_ROWS: usize = 16;
pub const PROBE_COLS: usize = 32;
pub const N_TEXELS: usize = PROBE_ROWS * PROBE_COLS;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TexelGeometry {
    pub direction: Vec3,
    pub solid_angle: f64,
}

pub fn texel_geometry(row: usize, col: usize) -> Result<TexelGeometry> {
    if row >= PROBE_ROWS || col >= PROBE_COLS {
        return Err(Error::input(format!(
            "texel ({row}, {col}) outside {PROBE_ROWS}x{PROBE_COLS}"
        )));
    }
    let d_theta = PI / PROBE_ROWS as f64;
    let d_phi = 2.0 * PI / PROBE_COLS as f64;
    let theta = d_theta * (row as f64 + 0.5);
    let phi = d_phi * (col as f64 + 0.5);
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Ok(TexelGeometry {
        direction: Vec3::new(st * cp, st * sp, ct),
        solid_angle: st * d_theta * d_phi,
    })
}

/// Geometry of all texels in row-major order.
pub fn texel_table() -> &'static [TexelGeometry] {
    static TABLE: OnceLock<Vec<TexelGeometry>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..N_TEXELS)
            .map(|i| texel_geometry(i / PROBE_COLS, i % PROBE_COLS).expect("in range"))
            .collect()
    })
}

/// Texel whose center direction is closest to `dir`.
pub fn nearest_texel(dir: Vec3) -> (usize, usize) {
    let d = dir.normalized();
    let theta = d.z.clamp(-1.0, 1.0).acos();
    let mut phi = d.y.atan2(d.x);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    let row = ((theta / PI * PROBE_ROWS as f64) as usize).min(PROBE_ROWS - 1);
    let col = ((phi / (2.0 * PI) * PROBE_COLS as f64) as usize).min(PROBE_COLS - 1);
    (row, col)
}

/// A 16x32 RGB radiance map. Values are nonnegative linear radiance.
#[derive(Clone, Debug, PartialEq)]
pub struct LightProbe {
    radiance: Vec<f32>,
}

impl LightProbe {
    pub fn new(radiance: Vec<f32>) -> Result<Self> {
        if radiance.len() != N_TEXELS * 3 {
            return Err(Error::input(format!(
                "probe needs {} values, got {}",
                N_TEXELS * 3,
                radiance.len()
            )));
        }
        if let Some(bad) = radiance.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::validation(format!(
                "probe texel {} channel {} has radiance {}",
                bad / 3,
                bad % 3,
                radiance[bad]
            )));
        }
        Ok(LightProbe { radiance })
    }

    pub fn zeros() -> Self {
        LightProbe {
            radiance: vec![0.0; N_TEXELS * 3],
        }
    }

    pub fn uniform(rgb: [f32; 3]) -> Result<Self> {
        LightProbe::new((0..N_TEXELS).flat_map(|_| rgb).collect())
    }

    /// Probe with a single lit texel. The raw intensity is stored as-is.
    pub fn olat(row: usize, col: usize, intensity: f32) -> Result<Self> {
        texel_geometry(row, col)?;
        if !(intensity >= 0.0) || !intensity.is_finite() {
            return Err(Error::input(format!("OLAT intensity {intensity} must be >= 0")));
        }
        let mut p = LightProbe::zeros();
        p.set(row, col, [intensity; 3]);
        Ok(p)
    }

    /// Parse `olat:row,col,intensity` or read a probe PFM from the given path.
    pub fn from_arg(arg: &str) -> Result<Self> {
        let Some(rest) = arg.strip_prefix("olat:") else {
            return LightProbe::read_pfm(arg);
        };
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        let bad = || Error::input(format!("expected olat:row,col,intensity, got `{arg}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let row = parts[0].parse().map_err(|_| bad())?;
        let col = parts[1].parse().map_err(|_| bad())?;
        let intensity = parts[2].parse().map_err(|_| bad())?;
        LightProbe::olat(row, col, intensity)
    }

    /// Build from a function of texel direction.
    pub fn from_fn(f: impl Fn(Vec3) -> [f32; 3]) -> Result<Self> {
        LightProbe::new(texel_table().iter().flat_map(|t| f(t.direction)).collect())
    }

    pub fn get(&self, row: usize, col: usize) -> [f32; 3] {
        self.texel(row * PROBE_COLS + col)
    }

    pub fn texel(&self, index: usize) -> [f32; 3] {
        let i = index * 3;
        [self.radiance[i], self.radiance[i + 1], self.radiance[i + 2]]
    }

    fn set(&mut self, row: usize, col: usize, rgb: [f32; 3]) {
        let i = (row * PROBE_COLS + col) * 3;
        self.radiance[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.radiance
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.radiance.iter().map(|&v| v as f64).collect()
    }

    pub fn scaled(&self, s: f32) -> Result<Self> {
        LightProbe::new(self.radiance.iter().map(|v| v * s).collect())
    }

    pub fn added(&self, other: &LightProbe) -> LightProbe {
        LightProbe {
            radiance: self
                .radiance
                .iter()
                .zip(&other.radiance)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// Per-channel `sum L * dw` over the sphere.
    pub fn integrated_power(&self) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for (i, t) in texel_table().iter().enumerate() {
            let l = self.texel(i);
            for c in 0..3 {
                acc[c] += l[c] as f64 * t.solid_angle;
            }
        }
        acc
    }

    pub fn to_image(&self) -> Image {
        Image {
            width: PROBE_COLS,
            height: PROBE_ROWS,
            data: self.radiance.clone(),
        }
    }

    pub fn from_image(img: &Image) -> Result<Self> {
        if img.width != PROBE_COLS || img.height != PROBE_ROWS {
            return Err(Error::format(format!(
                "probe must be {PROBE_COLS}x{PROBE_ROWS}, got {}x{}",
                img.width, img.height
            )));
        }
        LightProbe::new(img.data.clone())
    }

    pub fn write_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_image().write_pfm(path)
    }

    pub fn read_pfm(path: impl AsRef<Path>) -> Result<Self> {
        LightProbe::from_image(&Image::read_pfm(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_argument_forms() {
        let p = LightProbe::from_arg("olat:3,7,2.5").unwrap();
        assert_eq!(p.get(3, 7), [2.5; 3]);
        assert_eq!(p.integrated_power().iter().filter(|&&v| v > 0.0).count(), 3);
        for bad in ["olat:3,7", "olat:a,1,1", "olat:99,0,1", "olat:1,1,-1"] {
            assert!(LightProbe::from_arg(bad).is_err(), "{bad}");
        }
        assert!(LightProbe::from_arg("/nonexistent/probe.pfm").is_err());
    }

    #[test]
    fn equator_adjacent_texel() {
        let t = texel_geometry(8, 0).unwrap();
        assert!((t.direction.z - (8.5 * PI / 16.0).cos()).abs() < 1e-15);
        assert!((t.direction.z + 0.098).abs() < 1e-3);
        assert!((t.direction.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn solid_angles_cover_sphere() {
        let total: f64 = texel_table().iter().map(|t| t.solid_angle).sum();
        let sphere = 4.0 * PI;
        assert!(total >= sphere * 0.995 && total <= sphere * 1.005, "{total}");
        for t in texel_table() {
            assert!(t.solid_angle > 0.0);
            assert!((t.direction.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn solid_angle_is_azimuth_independent() {
        let a = texel_geometry(0, 0).unwrap().solid_angle;
        for c in 1..PROBE_COLS {
            assert_eq!(texel_geometry(0, c).unwrap().solid_angle, a);
        }
    }

    #[test]
    fn out_of_range_texel() {
        assert!(matches!(texel_geometry(16, 0), Err(Error::Input(_))));
        assert!(matches!(texel_geometry(0, 32), Err(Error::Input(_))));
    }

    #[test]
    fn olat_construction() {
        assert_eq!(LightProbe::olat(0, 0, 0.0).unwrap(), LightProbe::zeros());
        let p = LightProbe::olat(3, 5, 2.0).unwrap();
        let lit = p.as_slice().chunks(3).filter(|c| c.iter().any(|v| *v != 0.0)).count();
        assert_eq!(lit, 1);
        let dw = texel_geometry(3, 5).unwrap().solid_angle;
        for c in p.integrated_power() {
            assert!((c - 2.0 * dw).abs() < 1e-15);
        }
        assert!(matches!(LightProbe::olat(1, 1, -1.0), Err(Error::Input(_))));
    }

    #[test]
    fn nearest_texel_inverts_center() {
        for r in 0..PROBE_ROWS {
            for c in 0..PROBE_COLS {
                let d = texel_geometry(r, c).unwrap().direction;
                assert_eq!(nearest_texel(d), (r, c));
            }
        }
    }

    #[test]
    fn pfm_checks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.pfm");
        let probe = LightProbe::olat(3, 5, 2.0).unwrap();
        probe.write_pfm(&p).unwrap();
        assert_eq!(LightProbe::read_pfm(&p).unwrap(), probe);
        assert!(std::fs::read(&p).unwrap().starts_with(b"PF\n32 16\n-1.0\n"));

        let wide = dir.path().join("wide.pfm");
        Image::new(64, 32).write_pfm(&wide).unwrap();
        assert!(matches!(LightProbe::read_pfm(&wide), Err(Error::Format(_))));

        let neg = dir.path().join("neg.pfm");
        let mut img = Image::new(32, 16);
        img.set(4, 2, [-1.0, 0.0, 0.0]);
        img.write_pfm(&neg).unwrap();
        assert!(matches!(LightProbe::read_pfm(&neg), Err(Error::Validation(_))));
    }
}
