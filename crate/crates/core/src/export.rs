//! Writing relit renders, decompositions and baked geometry for every
//! training view of a fitted model.

use std::fs;
use std::path::Path;

use crate::dataset::{view_stem, Dataset};
use crate::error::{Error, Result};
use crate::geometry::{baked_normals, baked_occlusion, march_surfaces, offset_along_normals, OcclusionConfig};
use crate::image::Image;
use crate::math::{Ray, Vec3};
use crate::probe::{texel_table, LightProbe};
use crate::renderer::{render_frame, RenderOptions, RenderOutput};
use crate::trainer::Trainer;

/// Every `BAKE_DIR_STRIDE`-th probe texel is used when baking visibility.
pub const BAKE_DIR_STRIDE: usize = 4;

pub const PROBE_FILE: &str = "probe.pfm";

fn render_options(trainer: &Trainer) -> RenderOptions {
    RenderOptions {
        n_samples: trainer.config.n_samples,
        ..Default::default()
    }
}

fn for_each_render(
    dataset: &Dataset,
    trainer: &Trainer,
    probe: &LightProbe,
    mut sink: impl FnMut(&str, &RenderOutput) -> Result<()>,
) -> Result<()> {
    let opts = render_options(trainer);
    let aabb = trainer.aabb();
    for (t, views) in dataset.views.iter().enumerate() {
        for (c, view) in views.iter().enumerate() {
            let out = render_frame(&trainer.model, &trainer.store, probe, &view.camera, t, &opts, &aabb)?;
            sink(&view_stem(t, c), &out)?;
        }
    }
    Ok(())
}

/// Views to render: all, or restricted to one frame and/or one camera.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ViewFilter {
    pub frame: Option<usize>,
    pub camera: Option<usize>,
}

/// Render the selected views under `probe` with gamma previews alongside.
/// Files are named `frame_%04d` when a single camera is selected and by
/// view stem otherwise, matching the dataset's relit reference layout.
pub fn relight(dataset: &Dataset, trainer: &Trainer, probe: &LightProbe, filter: ViewFilter, out: &Path) -> Result<usize> {
    let n_frames = dataset.n_frames();
    if filter.frame.is_some_and(|f| f >= n_frames) {
        return Err(Error::input(format!("frame out of range (dataset has {n_frames})")));
    }
    let n_cams = dataset.views.iter().map(Vec::len).min().unwrap_or(0);
    if filter.camera.is_some_and(|c| c >= n_cams) {
        return Err(Error::input(format!("camera out of range (dataset has {n_cams})")));
    }
    fs::create_dir_all(out)?;
    let opts = render_options(trainer);
    let aabb = trainer.aabb();
    let mut n = 0;
    for (t, views) in dataset.views.iter().enumerate() {
        if filter.frame.is_some_and(|f| f != t) {
            continue;
        }
        for (c, view) in views.iter().enumerate() {
            if filter.camera.is_some_and(|k| k != c) {
                continue;
            }
            let r = render_frame(&trainer.model, &trainer.store, probe, &view.camera, t, &opts, &aabb)?;
            let name = match filter.camera {
                Some(_) => format!("frame_{t:04}"),
                None => view_stem(t, c),
            };
            r.rgb.write_pfm(out.join(format!("{name}.pfm")))?;
            r.rgb.write_ppm_preview(out.join(format!("{name}.ppm")))?;
            n += 1;
        }
    }
    Ok(n)
}

/// Per-view head outputs under the estimated probe, one subdirectory per
/// quantity, plus the probe itself.
pub fn decompose(dataset: &Dataset, trainer: &Trainer, out: &Path) -> Result<usize> {
    let probe = trainer.model.probe(&trainer.store)?;
    let dirs = ["rgb", "albedo", "roughness", "normal", "visibility", "depth"];
    for d in dirs {
        fs::create_dir_all(out.join(d))?;
    }
    probe.write_pfm(out.join(PROBE_FILE))?;
    let mut n = 0;
    for_each_render(dataset, trainer, &probe, |stem, r| {
        n += 1;
        let maps = [&r.rgb, &r.albedo, &r.roughness, &r.normal, &r.visibility, &r.depth];
        for (d, img) in dirs.iter().zip(maps) {
            img.write_pfm(out.join(d).join(format!("{stem}.pfm")))?;
        }
        Ok(())
    })?;
    Ok(n)
}

/// Normal and mean-visibility maps taken directly from the density field,
/// bypassing the learned heads. Normals are mapped to [0, 1].
pub struct BakedMaps {
    pub normal: Image,
    pub visibility: Image,
    pub mask: Vec<bool>,
}

pub fn bake_view(trainer: &Trainer, camera: &crate::renderer::Camera, t: usize) -> Result<BakedMaps> {
    let (w, h) = (camera.width, camera.height);
    let rays: Vec<Ray> = (0..w * h).map(|i| camera.pixel_ray(i % w, i / w)).collect();
    let density = trainer.model.density_source(&trainer.store);
    let surf = march_surfaces(&density, &rays, &trainer.aabb(), t, trainer.config.n_samples, None)?;
    let hits: Vec<usize> = (0..w * h).filter(|&i| surf[i].hit).collect();
    let pts: Vec<Vec3> = hits.iter().map(|&i| surf[i].position).collect();
    let normals = baked_normals(&density, &pts, t, trainer.config.normal_fd_step)?;
    let dirs: Vec<Vec3> = texel_table().iter().step_by(BAKE_DIR_STRIDE).map(|t| t.direction).collect();
    let occ_cfg = OcclusionConfig {
        n_samples: trainer.config.occlusion_samples,
        near: trainer.config.occlusion_near,
        far: trainer.config.occlusion_far,
    };
    let origins = offset_along_normals(&pts, &normals, trainer.config.occlusion_offset);
    let occ = baked_occlusion(&density, &origins, &dirs, t, &occ_cfg, None)?;
    let mut out = BakedMaps {
        normal: Image::new(w, h),
        visibility: Image::new(w, h),
        mask: surf.iter().map(|s| s.hit).collect(),
    };
    for (j, &pix) in hits.iter().enumerate() {
        let (x, y) = (pix % w, pix / w);
        let n = normals[j].normal;
        let (mut sum, mut cnt) = (0.0, 0usize);
        for (k, d) in dirs.iter().enumerate() {
            if d.dot(n) > 0.0 {
                sum += 1.0 - occ.get(j, k);
                cnt += 1;
            }
        }
        let v = if cnt > 0 { (sum / cnt as f64) as f32 } else { 0.0 };
        if !v.is_finite() {
            return Err(Error::numeric("baked visibility"));
        }
        let m = |c: f64| (0.5 * (c + 1.0)) as f32;
        out.normal.set(x, y, [m(n.x), m(n.y), m(n.z)]);
        out.visibility.set(x, y, [v; 3]);
    }
    Ok(out)
}

/// Baked maps for every view in `normal/` and `visibility/`, plus the probe.
pub fn bake(dataset: &Dataset, trainer: &Trainer, out: &Path) -> Result<usize> {
    for d in ["normal", "visibility"] {
        fs::create_dir_all(out.join(d))?;
    }
    trainer.model.probe(&trainer.store)?.write_pfm(out.join(PROBE_FILE))?;
    let mut n = 0;
    for (t, views) in dataset.views.iter().enumerate() {
        for (c, view) in views.iter().enumerate() {
            let maps = bake_view(trainer, &view.camera, t)?;
            let stem = view_stem(t, c);
            maps.normal.write_pfm(out.join("normal").join(format!("{stem}.pfm")))?;
            maps.visibility.write_pfm(out.join("visibility").join(format!("{stem}.pfm")))?;
            n += 1;
        }
    }
    Ok(n)
}
