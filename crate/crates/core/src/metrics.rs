//! Image and geometry error measures.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Upper bound reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::input(format!(
            "image size mismatch: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// PSNR in dB with peak 1 after clamping both images to [0, 1]. `mask`
/// restricts the pixels considered.
pub fn psnr(pred: &Image, gt: &Image, mask: Option<&[bool]>) -> Result<f64> {
    check_dims(pred, gt)?;
    let mut se = 0.0;
    let mut count = 0usize;
    for y in 0..gt.height {
        for x in 0..gt.width {
            if mask.is_some_and(|m| !m[y * gt.width + x]) {
                continue;
            }
            let p = pred.get_f64(x, y);
            let g = gt.get_f64(x, y);
            for c in 0..3 {
                let d = p[c].clamp(0.0, 1.0) - g[c].clamp(0.0, 1.0);
                se += d * d;
            }
            count += 3;
        }
    }
    if count == 0 {
        return Err(Error::input("no pixels selected for PSNR"));
    }
    Ok(psnr_from_mse(se / count as f64))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (-10.0 * mse.log10()).min(PSNR_CAP)
    }
}

fn gaussian_window() -> [f64; 11] {
    let mut w = [0.0; 11];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - 5.0;
        *v = (-d * d / (2.0 * 1.5 * 1.5)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

fn blur(plane: &[f64], w: usize, h: usize, k: &[f64; 11]) -> Vec<f64> {
    // valid-region separable filter
    let ow = w - 10;
    let oh = h - 10;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..11).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..11).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over channels.
pub fn ssim(pred: &Image, gt: &Image) -> Result<f64> {
    check_dims(pred, gt)?;
    let (w, h) = (gt.width, gt.height);
    if w < 11 || h < 11 {
        return Err(Error::input("SSIM needs images of at least 11x11"));
    }
    let k = gaussian_window();
    let c1 = 0.01f64.powi(2);
    let c2 = 0.03f64.powi(2);
    let mut total = 0.0;
    for c in 0..3 {
        let plane = |img: &Image| -> Vec<f64> {
            (0..w * h).map(|i| img.get_f64(i % w, i / w)[c].clamp(0.0, 1.0)).collect()
        };
        let a = plane(pred);
        let b = plane(gt);
        let prod = |u: &[f64], v: &[f64]| -> Vec<f64> { u.iter().zip(v).map(|(x, y)| x * y).collect() };
        let mu_a = blur(&a, w, h, &k);
        let mu_b = blur(&b, w, h, &k);
        let aa = blur(&prod(&a, &a), w, h, &k);
        let bb = blur(&prod(&b, &b), w, h, &k);
        let ab = blur(&prod(&a, &b), w, h, &k);
        let n = mu_a.len();
        let mut sum = 0.0;
        for i in 0..n {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            sum += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += sum / n as f64;
    }
    Ok(total / 3.0)
}

/// Decode a normal map pixel stored as `0.5 * (n + 1)`.
pub fn decode_normal(rgb: [f64; 3]) -> [f64; 3] {
    rgb.map(|v| 2.0 * v - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleStats {
    pub mean_deg: f64,
    pub median_deg: f64,
    pub count: usize,
}

/// Angular error between two sets of normals; pairs with a non-unit
/// member (norm outside [0.9, 1.1]) are skipped.
pub fn normal_angle_stats(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<AngleStats> {
    if pred.len() != gt.len() {
        return Err(Error::input("normal lists differ in length"));
    }
    let unit = |n: &[f64; 3]| {
        let l = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        (0.9..=1.1).contains(&l).then_some(l)
    };
    let mut errs: Vec<f64> = pred
        .iter()
        .zip(gt)
        .filter_map(|(p, g)| {
            let (lp, lg) = (unit(p)?, unit(g)?);
            let c = (p[0] * g[0] + p[1] * g[1] + p[2] * g[2]) / (lp * lg);
            Some(c.clamp(-1.0, 1.0).acos().to_degrees())
        })
        .collect();
    if errs.is_empty() {
        return Err(Error::input("no valid normal pairs"));
    }
    errs.sort_by(f64::total_cmp);
    let n = errs.len();
    let median = if n % 2 == 1 { errs[n / 2] } else { 0.5 * (errs[n / 2 - 1] + errs[n / 2]) };
    Ok(AngleStats {
        mean_deg: errs.iter().sum::<f64>() / n as f64,
        median_deg: median,
        count: n,
    })
}

/// Per-channel scale `s` minimizing `|s * pred - gt|^2` over the selected pixels.
pub fn channel_scale(pred: &[&Image], gt: &[&Image], masks: &[&[bool]]) -> [f64; 3] {
    let mut num = [0.0; 3];
    let mut den = [0.0; 3];
    for ((p, g), m) in pred.iter().zip(gt).zip(masks) {
        for y in 0..g.height {
            for x in 0..g.width {
                if !m[y * g.width + x] {
                    continue;
                }
                let a = p.get_f64(x, y);
                let b = g.get_f64(x, y);
                for c in 0..3 {
                    num[c] += a[c] * b[c];
                    den[c] += a[c] * a[c];
                }
            }
        }
    }
    std::array::from_fn(|c| if den[c] > 0.0 { num[c] / den[c] } else { 1.0 })
}

/// Intersection over union of two boolean masks.
pub fn iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Pearson correlation; zero when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (x, y) = (a[i] - ma, b[i] - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Scores of one predicted image against its reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
    /// Per-channel gain applied to the prediction (1 when alignment is off).
    pub scale: [f64; 3],
}

/// Images sharing a parent directory, e.g. one relighting probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: String,
    pub images: Vec<ImageScore>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalReport {
    pub mean_deg: f64,
    pub median_deg: f64,
    pub pixels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub note: String,
    pub groups: Vec<GroupReport>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub normals: Option<NormalReport>,
}

fn pfm_files(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "pfm") {
                out.push(path.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Score every PFM under `gt_dir` against the file with the same relative
/// path under `pred_dir`. With `align`, each prediction is first scaled per
/// channel by the least-squares gain onto its reference.
pub fn evaluate_dirs(pred_dir: &Path, gt_dir: &Path, align: bool) -> Result<EvalReport> {
    let files = pfm_files(gt_dir)?;
    if files.is_empty() {
        return Err(Error::input(format!("no .pfm files under {}", gt_dir.display())));
    }
    let mut groups: BTreeMap<String, Vec<ImageScore>> = BTreeMap::new();
    for rel in files {
        let gt = Image::read_pfm(gt_dir.join(&rel))?;
        let pred_path = pred_dir.join(&rel);
        if !pred_path.is_file() {
            return Err(Error::input(format!("missing prediction {}", pred_path.display())));
        }
        let mut pred = Image::read_pfm(&pred_path)?;
        check_dims(&pred, &gt)?;
        let mut scale = [1.0; 3];
        if align {
            let all = vec![true; gt.width * gt.height];
            scale = channel_scale(&[&pred], &[&gt], &[&all]);
            for y in 0..pred.height {
                for x in 0..pred.width {
                    let p = pred.get(x, y);
                    pred.set(x, y, std::array::from_fn(|c| (p[c] as f64 * scale[c]) as f32));
                }
            }
        }
        let score = ImageScore {
            name: rel.to_string_lossy().into_owned(),
            psnr: psnr(&pred, &gt, None)?,
            ssim: ssim(&pred, &gt)?,
            scale,
        };
        if !score.psnr.is_finite() || !score.ssim.is_finite() {
            return Err(Error::numeric(format!("metrics of {}", score.name)));
        }
        let group = rel.parent().map(|p| p.to_string_lossy().into_owned()).unwrap_or_default();
        groups.entry(group).or_default().push(score);
    }
    let groups: Vec<GroupReport> = groups
        .into_iter()
        .map(|(group, images)| GroupReport {
            mean_psnr: mean(images.iter().map(|i| i.psnr)),
            mean_ssim: mean(images.iter().map(|i| i.ssim)),
            group,
            images,
        })
        .collect();
    let all = || groups.iter().flat_map(|g| g.images.iter());
    Ok(EvalReport {
        note: "linear radiance clamped to [0, 1] before scoring; SSIM 11x11 Gaussian window, sigma 1.5".into(),
        mean_psnr: mean(all().map(|i| i.psnr)),
        mean_ssim: mean(all().map(|i| i.ssim)),
        groups,
        normals: None,
    })
}

/// Angular error between mapped predicted normal maps (`0.5 * (n + 1)`)
/// and unmapped reference maps, paired by relative path.
pub fn evaluate_normal_dirs(pred_dir: &Path, gt_dir: &Path) -> Result<NormalReport> {
    let (mut p, mut g) = (Vec::new(), Vec::new());
    for rel in pfm_files(gt_dir)? {
        let gt = Image::read_pfm(gt_dir.join(&rel))?;
        let pred = Image::read_pfm(pred_dir.join(&rel))?;
        check_dims(&pred, &gt)?;
        for y in 0..gt.height {
            for x in 0..gt.width {
                p.push(decode_normal(pred.get_f64(x, y)));
                g.push(gt.get_f64(x, y));
            }
        }
    }
    let s = normal_angle_stats(&p, &g)?;
    Ok(NormalReport {
        mean_deg: s.mean_deg,
        median_deg: s.median_deg,
        pixels: s.count,
    })
}

impl EvalReport {
    pub fn table(&self) -> String {
        let mut out = format!("# {}\n", self.note);
        out.push_str(&format!("{:<32} {:>8} {:>8}\n", "image", "PSNR", "SSIM"));
        for g in &self.groups {
            for i in &g.images {
                out.push_str(&format!("{:<32} {:>8.2} {:>8.4}\n", i.name, i.psnr, i.ssim));
            }
            let label = if g.group.is_empty() { "(root)" } else { g.group.as_str() };
            out.push_str(&format!("{:<32} {:>8.2} {:>8.4}\n", format!("mean {label}"), g.mean_psnr, g.mean_ssim));
        }
        out.push_str(&format!("{:<32} {:>8.2} {:>8.4}\n", "mean", self.mean_psnr, self.mean_ssim));
        if let Some(n) = &self.normals {
            out.push_str(&format!(
                "normal error: mean {:.2} deg, median {:.2} deg over {} pixels\n",
                n.mean_deg, n.median_deg, n.pixels
            ));
        }
        out
    }
}
