mod common;

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splatlabel::ply::Format;
use splatlabel::splat::{
    crop_scene, parse_point_cloud, parse_splat_file, sample_point_cloud, write_point_cloud, write_splat_file, Aabb,
    Gaussian3D, PointCloud, SplatScene,
};

use common::random_rotation;

fn random_gaussians(seed: u64, n: usize) -> Vec<Gaussian3D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            Gaussian3D::new(
                Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..3.0)),
                rng.random_range(0.01..0.99),
                Vector3::new(rng.random_range(0.001..0.2), rng.random_range(0.001..0.2), rng.random_range(0.001..0.2)),
                random_rotation(&mut rng),
                [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
            )
        })
        .collect()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn round_trip_thousand_gaussians() {
    let scene = SplatScene::new(random_gaussians(1, 1000)).unwrap();
    let back = parse_splat_file(&write_splat_file(&scene)).unwrap();
    assert_eq!(back.len(), 1000);
    for (a, b) in scene.gaussians().iter().zip(back.gaussians()) {
        for i in 0..3 {
            assert!(rel_close(a.position[i], b.position[i], 1e-6));
            assert!(rel_close(a.scale[i], b.scale[i], 1e-5));
            assert!(rel_close(a.sh[0][i], b.sh[0][i], 1e-6));
        }
        assert!((a.opacity - b.opacity).abs() < 1e-6);
        assert!(a.rotation.angle_to(&b.rotation) < 1e-5);
    }
}

#[test]
fn round_trip_keeps_higher_sh() {
    let mut gs = random_gaussians(2, 20);
    for (k, g) in gs.iter_mut().enumerate() {
        g.sh = (0..16).map(|i| [k as f64 * 0.01, i as f64 * 0.1, -(i as f64)]).collect();
    }
    let scene = SplatScene::new(gs).unwrap();
    assert_eq!(scene.sh_degree(), 3);
    let back = parse_splat_file(&write_splat_file(&scene)).unwrap();
    assert_eq!(back.sh_degree(), 3);
    for (a, b) in scene.gaussians().iter().zip(back.gaussians()) {
        for (ka, kb) in a.sh.iter().zip(&b.sh) {
            for c in 0..3 {
                assert!(rel_close(ka[c], kb[c], 1e-6));
            }
        }
    }
}

#[test]
fn point_cloud_round_trip_ascii_and_binary() {
    let cloud = PointCloud::from_positions((0..50).map(|i| Vector3::new(i as f64 * 0.25, -1.5, 2.0)));
    for format in [Format::Ascii, Format::BinaryLittleEndian] {
        let back = parse_point_cloud(&write_point_cloud(&cloud, format)).unwrap();
        assert_eq!(back.len(), 50);
        for (a, b) in cloud.points.iter().zip(&back.points) {
            assert!((a.position - b.position).norm() < 1e-6);
            assert!((b.color[0] - 128.0 / 255.0).abs() < 1e-9);
        }
    }
}

#[test]
fn truncated_file_is_rejected() {
    let bytes = write_splat_file(&SplatScene::new(random_gaussians(3, 10)).unwrap());
    assert!(parse_splat_file(&bytes[..bytes.len() - 7]).is_err());
}

#[test]
fn sampling_matches_gaussian_moments() {
    let g = Gaussian3D::new(
        Vector3::new(1.0, -2.0, 3.0),
        0.8,
        Vector3::new(0.3, 0.1, 0.05),
        nalgebra::UnitQuaternion::from_euler_angles(0.4, -0.3, 1.1),
        [0.0; 3],
    );
    let n = 200_000;
    let cloud = sample_point_cloud(&SplatScene::new(vec![g.clone()]).unwrap(), n, 42).unwrap();
    let mean = cloud.centroid().unwrap();
    let sigma = g.covariance();
    for i in 0..3 {
        let se = (sigma[(i, i)] / n as f64).sqrt();
        assert!((mean[i] - g.position[i]).abs() < 5.0 * se, "axis {i}");
    }
    let mut cov = Matrix3::zeros();
    for p in &cloud.points {
        let d = p.position - mean;
        cov += d * d.transpose();
    }
    cov /= (n - 1) as f64;
    let scale = sigma.norm();
    assert!((cov - sigma).norm() / scale < 0.02, "cov {cov} vs {sigma}");
}

#[test]
fn sampling_weights_follow_opacity_and_volume() {
    // weight ratio: (0.9 * 0.1) / (0.3 * 0.1) = 3
    let a = Gaussian3D::isotropic(Vector3::new(-10.0, 0.0, 0.0), 0.1, 0.9, [0.5; 3]);
    let b = Gaussian3D::isotropic(Vector3::new(10.0, 0.0, 0.0), 0.1, 0.3, [0.5; 3]);
    let cloud = sample_point_cloud(&SplatScene::new(vec![a, b]).unwrap(), 100_000, 5).unwrap();
    let left = cloud.points.iter().filter(|p| p.position.x < 0.0).count() as f64 / 100_000.0;
    assert!((left - 0.75).abs() < 0.01, "{left}");
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let scene = SplatScene::new(random_gaussians(4, 300)).unwrap();
    let a = sample_point_cloud(&scene, 150_000, 9).unwrap();
    let b = sample_point_cloud(&scene, 150_000, 9).unwrap();
    let c = sample_point_cloud(&scene, 150_000, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn sampling_independent_of_thread_count() {
    let scene = SplatScene::new(random_gaussians(5, 300)).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| sample_point_cloud(&scene, 200_000, 3).unwrap());
    let b = four.install(|| sample_point_cloud(&scene, 200_000, 3).unwrap());
    assert_eq!(a, b);
}

fn arb_box() -> impl Strategy<Value = Aabb> {
    (-4.0..4.0f64, -4.0..4.0f64, -1.0..3.0f64, 0.0..6.0f64, 0.0..6.0f64, 0.0..3.0f64)
        .prop_map(|(x, y, z, dx, dy, dz)| Aabb::new([x, y, z], [x + dx, y + dy, z + dz]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn crop_is_idempotent(seed in 0u64..1000, b in arb_box()) {
        let scene = SplatScene::new(random_gaussians(seed, 200)).unwrap();
        let once = crop_scene(&scene, &b);
        let twice = crop_scene(&once, &b);
        prop_assert_eq!(once.gaussians(), twice.gaussians());
        prop_assert!(once.gaussians().iter().all(|g| b.contains(&g.position)));
    }

    #[test]
    fn disjoint_crops_partition_scene(seed in 0u64..1000, cut in -5.0..5.0f64) {
        let scene = SplatScene::new(random_gaussians(seed, 200)).unwrap();
        let left = Aabb::new([-10.0, -10.0, -10.0], [cut, 10.0, 10.0]).unwrap();
        let right = Aabb::new([cut + 1e-12, -10.0, -10.0], [10.0, 10.0, 10.0]).unwrap();
        let (l, r) = (crop_scene(&scene, &left), crop_scene(&scene, &right));
        prop_assert_eq!(l.len() + r.len(), scene.len());
    }

    #[test]
    fn round_trip_preserves_count(seed in 0u64..1000, n in 1usize..64) {
        let scene = SplatScene::new(random_gaussians(seed, n)).unwrap();
        let back = parse_splat_file(&write_splat_file(&scene)).unwrap();
        prop_assert_eq!(back.len(), n);
    }
}
