use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use relight_core::diffcore::{grad_of_scalar, Activation, Mlp, MlpSpec, ParamStore, Tensor};
use relight_core::geometry::march_surfaces;
use relight_core::model::{Model, ModelConfig};
use relight_core::probe::N_TEXELS;
use relight_core::reflectance::BrdfConfig;
use relight_core::renderer::shade_batch;
use relight_core::{Aabb, LightProbe, Ray, Vec3};

fn wave(n: usize, k: f64) -> Vec<f64> {
    (0..n).map(|i| (i as f64 * k).sin()).collect()
}

fn mlp(c: &mut Criterion) {
    let mut store = ParamStore::new();
    let spec = MlpSpec::new(64, 4, Activation::Sigmoid).with_hidden(128, 3);
    let net = Mlp::init(&mut store, "net", spec, 1).unwrap();
    let input = Tensor::from_vec(1024, 64, wave(1024 * 64, 0.37));
    c.bench_function("mlp_forward_1024", |b| b.iter(|| net.forward_batch(&store, black_box(&input))));
    c.bench_function("mlp_forward_backward_1024", |b| {
        b.iter(|| {
            grad_of_scalar(&store, |g| {
                let x = g.constant(input.clone());
                let y = net.forward_graph(g, x);
                let sq = g.square(y);
                Ok(g.mean(sq))
            })
            .unwrap()
        })
    });
}

fn shading(c: &mut Criterion) {
    let p = 256;
    let albedo = Tensor::from_vec(p, 3, wave(p * 3, 0.3).iter().map(|v| 0.5 + 0.4 * v).collect());
    let rough = Tensor::from_vec(p, 1, wave(p, 0.7).iter().map(|v| 0.5 + 0.3 * v).collect());
    let normals = Tensor::from_vec(p, 3, (0..p).flat_map(|i| Vec3::new((i as f64).sin(), 0.3, 1.0).normalized().to_array()).collect());
    let vis = Tensor::from_vec(p, N_TEXELS, wave(p * N_TEXELS, 0.11).iter().map(|v| 0.5 + 0.5 * v).collect());
    let probe = LightProbe::from_fn(|d| [(1.0 + d.z) as f32; 3]).unwrap().to_f64();
    let views = vec![Vec3::new(0.1, -0.2, 1.0).normalized(); p];
    let cfg = BrdfConfig::default();
    c.bench_function("shade_256_points", |b| {
        b.iter(|| shade_batch(&albedo, &rough, &normals, black_box(&vis), &probe, &views, &cfg))
    });
}

fn marching(c: &mut Criterion) {
    let mut store = ParamStore::new();
    let cfg = ModelConfig {
        latent_dim: 16,
        hidden: 64,
        n_hidden: 2,
        ..Default::default()
    };
    let aabb = Aabb::new(Vec3::splat(-0.5), Vec3::splat(0.5));
    let anchors = vec![(0..500).map(|i| Vec3::new(0.3 * (i as f64).cos(), 0.3 * (i as f64).sin(), 0.001 * i as f64 - 0.25)).collect()];
    let model = Model::init(&mut store, cfg, anchors, &aabb, 3).unwrap();
    let density = model.density_source(&store);
    let rays: Vec<Ray> = (0..256)
        .map(|i| Ray::new(Vec3::new(0.0, -2.0, 0.0), Vec3::new(0.002 * (i % 16) as f64, 1.0, 0.002 * (i / 16) as f64).normalized()))
        .collect();
    c.bench_function("march_256_rays_64_samples", |b| {
        b.iter(|| march_surfaces(&density, black_box(&rays), &aabb, 0, 64, None).unwrap())
    });
}

criterion_group!(benches, mlp, shading, marching);
criterion_main!(benches);
