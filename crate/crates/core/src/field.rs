//! Anchored latent field and the density head built on it.
//!
//! Every anchor vertex carries a trainable 16-dim code. For frame `t` the
//! codes are averaged into the voxels containing the frame's vertex
//! positions, diffused by a few passes of a 3x3x3 box blur and then read back
//! at arbitrary points by trilinear interpolation between voxel centers. A
//! learned linear map lifts the interpolated code to the feature width fed
//! to the heads. Every stage is linear in the codes, so the backward pass is
//! the transpose chain: trilinear scatter, blur (self-adjoint), mean scatter.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::diffcore::{
    encode_batch, encoded_dim, Activation, Graph, Mlp, MlpSpec, Op, ParamId, ParamStore, Tensor,
    Var,
};
use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};

pub const CODE_DIM: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldConfig {
    /// Voxel edge length in meters.
    pub voxel_size: f64,
    /// Width of the lifted feature.
    pub latent_dim: usize,
    pub blur_passes: usize,
    /// Position encoding bands.
    pub pos_bands: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            voxel_size: 0.05,
            latent_dim: 256,
            blur_passes: 3,
            pos_bands: 11,
        }
    }
}

/// Voxel structure of one frame; independent of the code values.
#[derive(Debug)]
pub struct GridLayout {
    h: f64,
    origin: [i64; 3],
    dims: [usize; 3],
    vertex_voxel: Vec<usize>,
    counts: Vec<u32>,
    blur_passes: usize,
}

impl GridLayout {
    pub fn new(vertices: &[Vec3], h: f64, blur_passes: usize) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::input("anchor frame has no vertices"));
        }
        let cell = |v: Vec3| -> [i64; 3] {
            [
                (v.x / h).floor() as i64,
                (v.y / h).floor() as i64,
                (v.z / h).floor() as i64,
            ]
        };
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        let cells: Vec<[i64; 3]> = vertices.iter().map(|&v| cell(v)).collect();
        for c in &cells {
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        // one voxel beyond the diffusion reach so every nonzero cell is inside
        let margin = blur_passes as i64 + 1;
        let origin = [lo[0] - margin, lo[1] - margin, lo[2] - margin];
        let dims = [
            (hi[0] - lo[0] + 1 + 2 * margin) as usize,
            (hi[1] - lo[1] + 1 + 2 * margin) as usize,
            (hi[2] - lo[2] + 1 + 2 * margin) as usize,
        ];
        let mut counts = vec![0u32; dims[0] * dims[1] * dims[2]];
        let vertex_voxel: Vec<usize> = cells
            .iter()
            .map(|c| {
                let idx = flat(dims, [
                    (c[0] - origin[0]) as usize,
                    (c[1] - origin[1]) as usize,
                    (c[2] - origin[2]) as usize,
                ]);
                counts[idx] += 1;
                idx
            })
            .collect();
        Ok(GridLayout {
            h,
            origin,
            dims,
            vertex_voxel,
            counts,
            blur_passes,
        })
    }

    pub fn n_voxels(&self) -> usize {
        self.counts.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertex_voxel.len()
    }

    /// Voxel grid coordinate containing `x`, if inside the box.
    pub fn voxel_of(&self, x: Vec3) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let i = (x[a] / self.h).floor() as i64 - self.origin[a];
            if i < 0 || i >= self.dims[a] as i64 {
                return None;
            }
            out[a] = i as usize;
        }
        Some(out)
    }

    pub fn voxel_center(&self, v: [usize; 3]) -> Vec3 {
        let c = |a: usize| (v[a] as i64 + self.origin[a]) as f64 * self.h + 0.5 * self.h;
        Vec3::new(c(0), c(1), c(2))
    }

    /// Trilinear corner indices and weights; corners outside the box are skipped.
    fn corners(&self, x: Vec3, mut f: impl FnMut(usize, f64)) {
        let mut base = [0i64; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let u = x[a] / self.h - 0.5 - self.origin[a] as f64;
            let i0 = u.floor();
            base[a] = i0 as i64;
            frac[a] = u - i0;
        }
        for corner in 0..8 {
            let mut idx = [0usize; 3];
            let mut w = 1.0;
            let mut inside = true;
            for a in 0..3 {
                let up = (corner >> a) & 1 == 1;
                let i = base[a] + up as i64;
                if i < 0 || i >= self.dims[a] as i64 {
                    inside = false;
                    break;
                }
                idx[a] = i as usize;
                w *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            if inside && w != 0.0 {
                f(flat(self.dims, idx), w);
            }
        }
    }

    /// Mean of the vertex codes per voxel.
    fn voxelize(&self, codes: &Tensor) -> Vec<f64> {
        let mut g = vec![0.0; self.n_voxels() * CODE_DIM];
        for (vi, &vox) in self.vertex_voxel.iter().enumerate() {
            let inv = 1.0 / self.counts[vox] as f64;
            let row = codes.row(vi);
            for c in 0..CODE_DIM {
                g[vox * CODE_DIM + c] += row[c] * inv;
            }
        }
        g
    }

    /// Transpose of [`Self::voxelize`].
    fn devoxelize(&self, grid_grad: &[f64]) -> Tensor {
        let mut out = Tensor::zeros(self.n_vertices(), CODE_DIM);
        for (vi, &vox) in self.vertex_voxel.iter().enumerate() {
            let inv = 1.0 / self.counts[vox] as f64;
            let row = out.row_mut(vi);
            for c in 0..CODE_DIM {
                row[c] = grid_grad[vox * CODE_DIM + c] * inv;
            }
        }
        out
    }

    /// `blur_passes` rounds of the 27-neighbour mean (zero outside the box).
    /// The operator is symmetric, so it is also its own adjoint.
    fn diffuse(&self, grid: &mut Vec<f64>) {
        let mut tmp = vec![0.0; grid.len()];
        for _ in 0..self.blur_passes {
            for axis in 0..3 {
                self.blur_axis(grid, &mut tmp, axis);
                std::mem::swap(grid, &mut tmp);
            }
        }
    }

    fn blur_axis(&self, src: &[f64], dst: &mut [f64], axis: usize) {
        let [nx, ny, nz] = self.dims;
        let stride = match axis {
            0 => ny * nz * CODE_DIM,
            1 => nz * CODE_DIM,
            _ => CODE_DIM,
        };
        let len = self.dims[axis];
        let third = 1.0 / 3.0;
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let pos = [i, j, k][axis];
                    let base = flat(self.dims, [i, j, k]) * CODE_DIM;
                    for c in 0..CODE_DIM {
                        let mut s = src[base + c];
                        if pos > 0 {
                            s += src[base + c - stride];
                        }
                        if pos + 1 < len {
                            s += src[base + c + stride];
                        }
                        dst[base + c] = s * third;
                    }
                }
            }
        }
    }
}

fn flat(dims: [usize; 3], i: [usize; 3]) -> usize {
    (i[0] * dims[1] + i[1]) * dims[2] + i[2]
}

/// Diffused code grid of one frame.
#[derive(Debug)]
pub struct AnchorGrid {
    layout: Arc<GridLayout>,
    values: Vec<f64>,
}

impl AnchorGrid {
    pub fn build(layout: Arc<GridLayout>, codes: &Tensor) -> Self {
        let mut values = layout.voxelize(codes);
        layout.diffuse(&mut values);
        AnchorGrid { layout, values }
    }

    /// Grid before diffusion (mean voxelization only).
    pub fn build_undiffused(layout: Arc<GridLayout>, codes: &Tensor) -> Self {
        let values = layout.voxelize(codes);
        AnchorGrid { layout, values }
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn voxel(&self, v: [usize; 3]) -> &[f64] {
        let i = flat(self.layout.dims, v) * CODE_DIM;
        &self.values[i..i + CODE_DIM]
    }

    pub fn sample(&self, x: Vec3) -> [f64; CODE_DIM] {
        let mut out = [0.0; CODE_DIM];
        self.layout.corners(x, |idx, w| {
            let cell = &self.values[idx * CODE_DIM..(idx + 1) * CODE_DIM];
            for c in 0..CODE_DIM {
                out[c] += w * cell[c];
            }
        });
        out
    }

    pub fn sample_batch(&self, points: &[Vec3]) -> Tensor {
        let mut t = Tensor::zeros(points.len(), CODE_DIM);
        for (i, &p) in points.iter().enumerate() {
            t.row_mut(i).copy_from_slice(&self.sample(p));
        }
        t
    }
}

struct GridSampleOp {
    grid: Arc<AnchorGrid>,
    points: Vec<Vec3>,
}

impl Op for GridSampleOp {
    fn name(&self) -> &'static str {
        "grid_sample"
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &Tensor, _need: &[bool]) -> Vec<Option<Tensor>> {
        let layout = &self.grid.layout;
        let mut gg = vec![0.0; layout.n_voxels() * CODE_DIM];
        for (i, &p) in self.points.iter().enumerate() {
            let gr = g.row(i);
            layout.corners(p, |idx, w| {
                for c in 0..CODE_DIM {
                    gg[idx * CODE_DIM + c] += w * gr[c];
                }
            });
        }
        layout.diffuse(&mut gg);
        let dz = layout.devoxelize(&gg);
        debug_assert_eq!(dz.shape(), inputs[0].shape());
        vec![Some(dz)]
    }
}

/// Latent codes attached to per-frame anchor positions.
pub struct AnchoredLatentField {
    pub config: FieldConfig,
    pub codes: ParamId,
    pub lift: ParamId,
    frames: Vec<Vec<Vec3>>,
    layouts: Vec<Arc<GridLayout>>,
    cache: Mutex<HashMap<usize, (Vec<f64>, Arc<AnchorGrid>)>>,
}

impl AnchoredLatentField {
    /// Register codes `field.codes` (N x 16, normal with std `code_std`) and
    /// the lift `field.lift` (16 x latent_dim, Glorot uniform).
    pub fn init(
        store: &mut ParamStore,
        config: FieldConfig,
        frames: Vec<Vec<Vec3>>,
        aabb: &Aabb,
        code_std: f64,
        seed: u64,
    ) -> Result<Self> {
        let n = validate_frames(&frames, aabb)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, code_std).map_err(|e| Error::input(e.to_string()))?;
        let codes = Tensor::from_vec(
            n,
            CODE_DIM,
            (0..n * CODE_DIM).map(|_| normal.sample(&mut rng)).collect(),
        );
        let limit = (6.0 / (CODE_DIM + config.latent_dim) as f64).sqrt();
        let uni = rand_distr::Uniform::new(-limit, limit).map_err(|e| Error::input(e.to_string()))?;
        let lift = Tensor::from_vec(
            CODE_DIM,
            config.latent_dim,
            (0..CODE_DIM * config.latent_dim).map(|_| uni.sample(&mut rng)).collect(),
        );
        let codes = store.insert("field.codes", codes)?;
        let lift = store.insert("field.lift", lift)?;
        Self::assemble(config, frames, codes, lift)
    }

    pub fn bind(store: &ParamStore, config: FieldConfig, frames: Vec<Vec<Vec3>>, aabb: &Aabb) -> Result<Self> {
        let n = validate_frames(&frames, aabb)?;
        let lookup = |name: &str, shape: (usize, usize)| -> Result<ParamId> {
            let id = store
                .id(name)
                .ok_or_else(|| Error::validation(format!("missing parameter `{name}`")))?;
            if store.get(id).shape() != shape {
                return Err(Error::validation(format!("parameter `{name}` has wrong shape")));
            }
            Ok(id)
        };
        let codes = lookup("field.codes", (n, CODE_DIM))?;
        let lift = lookup("field.lift", (CODE_DIM, config.latent_dim))?;
        Self::assemble(config, frames, codes, lift)
    }

    fn assemble(config: FieldConfig, frames: Vec<Vec<Vec3>>, codes: ParamId, lift: ParamId) -> Result<Self> {
        let layouts = frames
            .iter()
            .map(|f| GridLayout::new(f, config.voxel_size, config.blur_passes).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(AnchoredLatentField {
            config,
            codes,
            lift,
            frames,
            layouts,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_anchors(&self) -> usize {
        self.frames[0].len()
    }

    pub fn anchors(&self, t: usize) -> &[Vec3] {
        &self.frames[t]
    }

    pub fn layout(&self, t: usize) -> &Arc<GridLayout> {
        &self.layouts[t]
    }

    /// Width of `[posenc(x), psi(x)]`.
    pub fn feature_dim(&self) -> usize {
        encoded_dim(self.config.pos_bands) + self.config.latent_dim
    }

    /// Diffused grid for frame `t`, rebuilt whenever the codes in `store` changed.
    pub fn anchor_grid(&self, store: &ParamStore, t: usize) -> Result<Arc<AnchorGrid>> {
        if t >= self.frames.len() {
            return Err(Error::input(format!("frame {t} out of range ({} frames)", self.frames.len())));
        }
        let codes = store.get(self.codes);
        let mut cache = self.cache.lock().expect("grid cache poisoned");
        if let Some((snapshot, grid)) = cache.get(&t) {
            if snapshot == &codes.data {
                return Ok(grid.clone());
            }
        }
        let grid = Arc::new(AnchorGrid::build(self.layouts[t].clone(), codes));
        cache.insert(t, (codes.data.clone(), grid.clone()));
        Ok(grid)
    }

    /// Interpolated 16-dim codes at `points`.
    pub fn codes_at(&self, store: &ParamStore, points: &[Vec3], t: usize) -> Result<Tensor> {
        Ok(self.anchor_grid(store, t)?.sample_batch(points))
    }

    /// Lifted latent feature psi_t(x) for each point.
    pub fn query_latent(&self, store: &ParamStore, points: &[Vec3], t: usize) -> Result<Tensor> {
        let codes = self.codes_at(store, points, t)?;
        Ok(crate::diffcore::graph::linear_value(&codes, store.get(self.lift), None))
    }

    /// `[posenc(x), psi_t(x)]` rows.
    pub fn features(&self, store: &ParamStore, points: &[Vec3], t: usize) -> Result<Tensor> {
        let pe = encode_batch(points, self.config.pos_bands);
        let psi = self.query_latent(store, points, t)?;
        Ok(hconcat(&pe, &psi))
    }

    pub fn query_latent_graph(&self, g: &mut Graph, points: &[Vec3], t: usize) -> Result<Var> {
        let grid = self.anchor_grid(g.store(), t)?;
        let sampled = grid.sample_batch(points);
        let z = g.param(self.codes);
        let codes = g.apply(
            Box::new(GridSampleOp {
                grid,
                points: points.to_vec(),
            }),
            &[z],
            sampled,
        );
        let lift = g.param(self.lift);
        Ok(g.linear(codes, lift, None))
    }

    pub fn features_graph(&self, g: &mut Graph, points: &[Vec3], t: usize) -> Result<Var> {
        let pe = g.constant(encode_batch(points, self.config.pos_bands));
        let psi = self.query_latent_graph(g, points, t)?;
        Ok(g.concat_cols(&[pe, psi]))
    }
}

fn validate_frames(frames: &[Vec<Vec3>], aabb: &Aabb) -> Result<usize> {
    let n = frames
        .first()
        .map(|f| f.len())
        .ok_or_else(|| Error::input("no anchor frames"))?;
    if n == 0 {
        return Err(Error::input("anchor frame 0 is empty"));
    }
    for (t, f) in frames.iter().enumerate() {
        if f.len() != n {
            return Err(Error::validation(format!(
                "frame {t} has {} anchors, frame 0 has {n}",
                f.len()
            )));
        }
        if let Some(i) = f.iter().position(|v| !aabb.contains(*v)) {
            return Err(Error::validation(format!(
                "anchor {i} of frame {t} lies outside the scene box"
            )));
        }
    }
    Ok(n)
}

pub(crate) fn hconcat(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.rows, b.rows);
    let mut out = Tensor::zeros(a.rows, a.cols + b.cols);
    for r in 0..a.rows {
        let row = out.row_mut(r);
        row[..a.cols].copy_from_slice(a.row(r));
        row[a.cols..].copy_from_slice(b.row(r));
    }
    out
}

/// Multiplier on the head output, in 1/m. It lets an initialized head reach
/// opaque densities over centimeter-scale sample spacing.
pub const DENSITY_SCALE: f64 = 200.0;

/// sigma(x, t) = DENSITY_SCALE * softplus(MLP([posenc(x), psi_t(x)])).
pub struct DensityField {
    pub mlp: Mlp,
}

impl DensityField {
    pub const NAME: &'static str = "sigma";

    pub fn spec(field: &AnchoredLatentField, hidden: usize, n_hidden: usize) -> MlpSpec {
        MlpSpec::new(field.feature_dim(), 1, Activation::Softplus).with_hidden(hidden, n_hidden)
    }

    pub fn init(store: &mut ParamStore, spec: MlpSpec, seed: u64) -> Result<Self> {
        Ok(DensityField {
            mlp: Mlp::init(store, Self::NAME, spec, seed)?,
        })
    }

    pub fn bind(store: &ParamStore, spec: MlpSpec) -> Result<Self> {
        Ok(DensityField {
            mlp: Mlp::bind(store, Self::NAME, spec)?,
        })
    }

    pub fn density_batch(
        &self,
        store: &ParamStore,
        field: &AnchoredLatentField,
        points: &[Vec3],
        t: usize,
    ) -> Result<Vec<f64>> {
        if points.is_empty() {
            return Ok(Vec::new());
        }
        let feats = field.features(store, points, t)?;
        Ok(self.from_features(store, &feats).data)
    }

    pub fn from_features(&self, store: &ParamStore, feats: &Tensor) -> Tensor {
        self.mlp.forward_batch(store, feats).map(|s| DENSITY_SCALE * s)
    }

    pub fn from_features_graph(&self, g: &mut Graph, feats: Var) -> Var {
        let s = self.mlp.forward_graph(g, feats);
        g.affine(s, DENSITY_SCALE, 0.0)
    }

    pub fn density(&self, store: &ParamStore, field: &AnchoredLatentField, x: Vec3, t: usize) -> Result<f64> {
        Ok(self.density_batch(store, field, &[x], t)?[0])
    }

    /// `P x 1` density node for `points`.
    pub fn density_graph(&self, g: &mut Graph, field: &AnchoredLatentField, points: &[Vec3], t: usize) -> Result<Var> {
        let feats = field.features_graph(g, points, t)?;
        Ok(self.from_features_graph(g, feats))
    }
}

/// Anything that can report a nonnegative density at a point of frame `t`.
pub trait DensitySource: Sync {
    fn density_batch(&self, points: &[Vec3], t: usize) -> Result<Vec<f64>>;
}

/// A trained density head paired with its field and parameter values.
pub struct LearnedDensity<'a> {
    pub store: &'a ParamStore,
    pub field: &'a AnchoredLatentField,
    pub head: &'a DensityField,
}

impl DensitySource for LearnedDensity<'_> {
    fn density_batch(&self, points: &[Vec3], t: usize) -> Result<Vec<f64>> {
        self.head.density_batch(self.store, self.field, points, t)
    }
}

/// Closure-backed density, used for analytic fields.
pub struct FnDensity<F>(pub F);

impl<F: Fn(Vec3, usize) -> f64 + Sync> DensitySource for FnDensity<F> {
    fn density_batch(&self, points: &[Vec3], t: usize) -> Result<Vec<f64>> {
        Ok(points.iter().map(|&p| (self.0)(p, t)).collect())
    }
}
