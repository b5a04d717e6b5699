//! Dataset manifest (JSON), anchor files and loading with validation.
//!
//! Anchor files hold a little-endian `u32` count followed by that many
//! `f32` xyz triples. All paths in the manifest are relative to the
//! manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{write_atomic, Image};
use crate::math::{Aabb, Vec3};
use crate::probe::LightProbe;
use crate::renderer::Camera;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub scene: String,
    pub frame_count: usize,
    pub aabb: Aabb,
    pub frames: Vec<FrameEntry>,
    #[serde(default)]
    pub train_probe: Option<String>,
    #[serde(default)]
    pub relight: Vec<RelightSet>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub anchors: String,
    pub views: Vec<ViewEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub camera: Camera,
    pub image: String,
    /// Foreground coverage in [0, 1] (any channel), same size as the image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default)]
    pub gt: Option<GtMaps>,
}

/// Ground-truth maps of one view. Normals are stored unmapped in [-1, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtMaps {
    pub normal: String,
    pub albedo: String,
    pub visibility: String,
    pub depth: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Ambient,
    Olat,
}

/// Held-out renders of every training view under another probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelightSet {
    pub name: String,
    pub kind: ProbeKind,
    pub probe: String,
    /// `images[frame][view]`, aligned with the training views.
    pub images: Vec<Vec<String>>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Manifest> {
        let text = fs::read_to_string(path.as_ref())?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(path.as_ref(), text.as_bytes())
    }

    /// Structural checks plus existence of every referenced file under `root`.
    pub fn validate(&self, root: &Path) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::validation(format!(
                "manifest version {} unsupported (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        if self.frame_count == 0 || self.frames.len() != self.frame_count {
            return Err(Error::validation(format!(
                "frame_count {} but {} frame entries",
                self.frame_count,
                self.frames.len()
            )));
        }
        let (lo, hi) = (self.aabb.min, self.aabb.max);
        if !(lo.x < hi.x && lo.y < hi.y && lo.z < hi.z) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::validation("scene box must have positive finite extent"));
        }
        let exists = |rel: &str| -> Result<()> {
            if root.join(rel).is_file() {
                Ok(())
            } else {
                Err(Error::validation(format!("missing file `{rel}`")))
            }
        };
        for (t, f) in self.frames.iter().enumerate() {
            if f.index != t {
                return Err(Error::validation(format!("frame entry {t} has index {}", f.index)));
            }
            if f.views.is_empty() {
                return Err(Error::validation(format!("frame {t} has no views")));
            }
            exists(&f.anchors)?;
            for v in &f.views {
                v.camera.validate()?;
                exists(&v.image)?;
                if let Some(m) = &v.mask {
                    exists(m)?;
                }
                if let Some(gt) = &v.gt {
                    for p in [&gt.normal, &gt.albedo, &gt.visibility, &gt.depth] {
                        exists(p)?;
                    }
                }
            }
        }
        if let Some(p) = &self.train_probe {
            exists(p)?;
        }
        for set in &self.relight {
            exists(&set.probe)?;
            if set.images.len() != self.frame_count {
                return Err(Error::validation(format!("relight set `{}` does not cover every frame", set.name)));
            }
            for (t, imgs) in set.images.iter().enumerate() {
                if imgs.len() != self.frames[t].views.len() {
                    return Err(Error::validation(format!(
                        "relight set `{}` frame {t} has {} images for {} views",
                        set.name,
                        imgs.len(),
                        self.frames[t].views.len()
                    )));
                }
                for p in imgs {
                    exists(p)?;
                }
            }
        }
        Ok(())
    }
}

/// File stem shared by every per-view output: `f0003_c01`.
pub fn view_stem(frame: usize, view: usize) -> String {
    format!("f{frame:04}_c{view:02}")
}

pub fn write_anchors(path: impl AsRef<Path>, points: &[Vec3]) -> Result<()> {
    let mut bytes = Vec::with_capacity(4 + points.len() * 12);
    bytes.extend_from_slice(&(points.len() as u32).to_le_bytes());
    for p in points {
        for v in p.to_array() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    write_atomic(path.as_ref(), &bytes)
}

pub fn read_anchors(path: impl AsRef<Path>) -> Result<Vec<Vec3>> {
    let bytes = fs::read(path.as_ref())?;
    if bytes.len() < 4 {
        return Err(Error::format("anchor file shorter than its header"));
    }
    let n = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    if bytes.len() != 4 + 12 * n {
        return Err(Error::format(format!(
            "anchor file declares {n} points but holds {} bytes",
            bytes.len()
        )));
    }
    let f = |i: usize| f32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as f64;
    Ok((0..n)
        .map(|k| {
            let o = 4 + 12 * k;
            Vec3::new(f(o), f(o + 4), f(o + 8))
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct View {
    pub camera: Camera,
    pub image: Image,
    pub mask: Option<Image>,
}

/// A manifest with its images and anchors in memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub anchors: Vec<Vec<Vec3>>,
    /// `views[frame]`.
    pub views: Vec<Vec<View>>,
}

impl Dataset {
    /// Load from a manifest file or a directory containing `manifest.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = Manifest::read(&file)?;
        manifest.validate(&root)?;
        let mut anchors = Vec::with_capacity(manifest.frame_count);
        let mut views = Vec::with_capacity(manifest.frame_count);
        for f in &manifest.frames {
            let a = read_anchors(root.join(&f.anchors))?;
            if let Some(first) = anchors.first().map(|v: &Vec<Vec3>| v.len()) {
                if a.len() != first {
                    return Err(Error::validation(format!(
                        "frame {} has {} anchors, frame 0 has {first}",
                        f.index,
                        a.len()
                    )));
                }
            }
            if a.is_empty() {
                return Err(Error::validation(format!("frame {} has no anchors", f.index)));
            }
            if let Some(i) = a.iter().position(|p| !manifest.aabb.contains(*p)) {
                return Err(Error::validation(format!(
                    "anchor {i} of frame {} lies outside the scene box",
                    f.index
                )));
            }
            anchors.push(a);
            let mut fv = Vec::with_capacity(f.views.len());
            for v in &f.views {
                let image = Image::read_pfm(root.join(&v.image))?;
                if image.width != v.camera.width || image.height != v.camera.height {
                    return Err(Error::validation(format!(
                        "image `{}` is {}x{} but its camera is {}x{}",
                        v.image, image.width, image.height, v.camera.width, v.camera.height
                    )));
                }
                let mask = match &v.mask {
                    Some(m) => {
                        let mask = Image::read_pfm(root.join(m))?;
                        if (mask.width, mask.height) != (image.width, image.height) {
                            return Err(Error::validation(format!("mask `{m}` does not match its image size")));
                        }
                        Some(mask)
                    }
                    None => None,
                };
                fv.push(View {
                    camera: v.camera,
                    image,
                    mask,
                });
            }
            views.push(fv);
        }
        Ok(Dataset {
            root,
            manifest,
            anchors,
            views,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.views.len()
    }

    pub fn aabb(&self) -> Aabb {
        self.manifest.aabb
    }

    pub fn train_probe(&self) -> Result<Option<LightProbe>> {
        self.manifest
            .train_probe
            .as_ref()
            .map(|p| LightProbe::read_pfm(self.root.join(p)))
            .transpose()
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_round_trip_and_reject_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        let pts = vec![Vec3::new(0.5, -0.25, 1.0), Vec3::new(0.125, 2.0, -3.5)];
        write_anchors(&p, &pts).unwrap();
        assert_eq!(read_anchors(&p).unwrap(), pts);
        let mut bytes = fs::read(&p).unwrap();
        bytes.pop();
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_anchors(&p), Err(Error::Format(_))));
    }

    #[test]
    fn manifest_validation_catches_inconsistencies() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        write_anchors(root.join("a0.bin"), &[Vec3::ZERO]).unwrap();
        Image::new(4, 3).write_pfm(root.join("v0.pfm")).unwrap();
        let cam = Camera::look_at(Vec3::new(0.0, -2.0, 0.0), Vec3::ZERO, Vec3::Z, 40.0, 4, 3).unwrap();
        let good = Manifest {
            version: MANIFEST_VERSION,
            scene: "t".into(),
            frame_count: 1,
            aabb: Aabb::new(Vec3::splat(-1.0), Vec3::splat(1.0)),
            frames: vec![FrameEntry {
                index: 0,
                anchors: "a0.bin".into(),
                views: vec![ViewEntry {
                    camera: cam,
                    image: "v0.pfm".into(),
                    mask: None,
                    gt: None,
                }],
            }],
            train_probe: None,
            relight: vec![],
        };
        good.validate(root).unwrap();
        good.write(root.join(MANIFEST_FILE)).unwrap();
        let ds = Dataset::load(root).unwrap();
        assert_eq!(ds.manifest, good);
        assert_eq!(ds.anchors, vec![vec![Vec3::ZERO]]);

        let mut m = good.clone();
        m.frame_count = 2;
        assert!(matches!(m.validate(root), Err(Error::Validation(_))));
        let mut m = good.clone();
        m.frames[0].views[0].image = "missing.pfm".into();
        assert!(matches!(m.validate(root), Err(Error::Validation(_))));
        let mut m = good.clone();
        m.version = 9;
        assert!(m.validate(root).is_err());

        let mut m = good.clone();
        m.aabb = Aabb::new(Vec3::splat(0.5), Vec3::splat(1.0));
        m.write(root.join(MANIFEST_FILE)).unwrap();
        assert!(matches!(Dataset::load(root), Err(Error::Validation(_))));

        let mut m = good;
        m.frames[0].views[0].camera = cam.scaled(8, 6);
        m.write(root.join(MANIFEST_FILE)).unwrap();
        assert!(matches!(Dataset::load(root), Err(Error::Validation(_))));
    }
}
