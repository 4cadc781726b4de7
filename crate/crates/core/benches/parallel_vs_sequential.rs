//! Compares the hot loops on a one-thread pool against the default pool.
//!
//! Build with `--no-default-features` to time the plain-iterator fallback;
//! both pools then run the same sequential code.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use splatlabel::camera::Intrinsics;
use splatlabel::eval::bootstrap_mean;
use splatlabel::render::{render_point_depth, render_scene};
use splatlabel::splat::sample_point_cloud;
use splatlabel::synth::{generate_orchard, orchard_cameras, SynthConfig};

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let n = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut out = vec![("1-thread".to_string(), rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap())];
    if n > 1 {
        out.push((format!("{n}-thread"), rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()));
    }
    out
}

fn benches(c: &mut Criterion) {
    let orchard = generate_orchard(&SynthConfig { trees: 2, fruits_per_tree: 4, ..Default::default() }).unwrap();
    let k = Intrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
    let cam = orchard_cameras(&orchard, k, 1).remove(0);
    let cloud = sample_point_cloud(&orchard.scene, 200_000, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let values: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();

    let mut g = c.benchmark_group("render_scene");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| pool.install(|| render_scene(&orchard.scene, &cam).unwrap()))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("point_depth");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| pool.install(|| render_point_depth(&cloud, &cam, 1)))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("sample_point_cloud");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| pool.install(|| sample_point_cloud(&orchard.scene, 100_000, 3).unwrap()))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("bootstrap_mean");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| pool.install(|| bootstrap_mean(&values, 1000, 0.95, 9).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(parallel_vs_sequential, benches);
criterion_main!(parallel_vs_sequential);
