mod common;

use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use splatlabel::annotation::{CameraBox, ImageLabel};
use splatlabel::eval::{
    bin_by_occlusion, bootstrap_interval, bootstrap_mean, evaluate, f1_from_counts, f1_scores, match_detections,
    neutral_f1, obb_iou, occlusion_bin, orientation_error, position_error, read_predictions, zero_orientation_baseline,
    EvalConfig, GroundTruth, OrientedBox, Prediction, PredictionRecord, OCCLUSION_BINS,
};
use splatlabel::Error;

use common::{random_box, random_rotation, uniform_sphere};

fn cube(x: f64) -> OrientedBox {
    OrientedBox::axis_aligned(Vector3::new(x, 0.0, 0.0), Vector3::repeat(1.0))
}

fn gt(camera: &str, fruit: &str, obb: OrientedBox, occlusion: f64) -> GroundTruth {
    GroundTruth { camera_id: camera.into(), fruit_id: fruit.into(), obb, axis: Vector3::x(), occlusion }
}

fn pred(camera: &str, obb: OrientedBox, confidence: f64) -> Prediction {
    Prediction { camera_id: camera.into(), confidence, obb, axis: Vector3::x() }
}

#[test]
fn iou_examples() {
    assert!((obb_iou(&cube(0.0), &cube(0.0)).unwrap() - 1.0).abs() < 1e-12);
    assert!((obb_iou(&cube(0.0), &cube(0.5)).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(obb_iou(&cube(0.0), &cube(3.0)).unwrap(), 0.0);
    let flat = OrientedBox::axis_aligned(Vector3::zeros(), Vector3::new(1.0, 1.0, 0.0));
    assert!(matches!(obb_iou(&cube(0.0), &flat), Err(Error::DegenerateBox(_))));
}

#[test]
fn iou_of_rotated_square_prism() {
    // a unit cube and the same cube turned 45° about Z overlap in a regular
    // octagon prism of area 2(√2 − 1)
    let turned = OrientedBox::new(
        Vector3::zeros(),
        Vector3::repeat(1.0),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_4),
    );
    let inter = 2.0 * (2f64.sqrt() - 1.0);
    let want = inter / (2.0 - inter);
    assert!((obb_iou(&cube(0.0), &turned).unwrap() - want).abs() < 1e-9);
}

/// Largest number of (pred, gt) pairs with IoU at or above the threshold.
fn best_assignment(iou: &[Vec<f64>], thr: f64) -> usize {
    fn go(i: usize, used: &mut Vec<bool>, iou: &[Vec<f64>], thr: f64) -> usize {
        if i == iou.len() {
            return 0;
        }
        let mut best = go(i + 1, used, iou, thr);
        for g in 0..used.len() {
            if !used[g] && iou[i][g] >= thr {
                used[g] = true;
                best = best.max(1 + go(i + 1, used, iou, thr));
                used[g] = false;
            }
        }
        best
    }
    go(0, &mut vec![false; iou.first().map_or(0, |r| r.len())], iou, thr)
}

#[test]
fn greedy_differs_from_optimal_assignment() {
    let gts = vec![gt("c", "a", cube(0.0), 0.0), gt("c", "b", cube(0.5), 0.0), gt("c", "d", cube(5.0), 0.0)];
    let preds = vec![pred("c", cube(0.3), 0.9), pred("c", cube(0.6), 0.8), pred("c", cube(5.0), 0.7)];
    let m = match_detections(&preds, &gts, 0.5).unwrap();
    // the most confident box takes the GT it overlaps most, which leaves the
    // second one without a partner
    let pairs: Vec<(usize, usize)> = m.pairs.iter().map(|p| (p.pred, p.gt)).collect();
    assert_eq!(pairs, vec![(0, 1), (2, 2)]);
    assert_eq!(m.false_positives, vec![1]);
    assert_eq!(m.false_negatives, vec![0]);
    let iou: Vec<Vec<f64>> =
        preds.iter().map(|p| gts.iter().map(|g| obb_iou(&p.obb, &g.obb).unwrap()).collect()).collect();
    assert_eq!(best_assignment(&iou, 0.5), 3);
}

#[test]
fn matching_basic_cases() {
    let one = match_detections(&[pred("c", cube(0.0), 0.5)], &[gt("c", "a", cube(0.0), 0.0)], 0.5).unwrap();
    assert_eq!((one.tp(), one.fp(), one.fn_()), (1, 0, 0));
    let two = match_detections(
        &[pred("c", cube(0.05), 0.4), pred("c", cube(0.1), 0.9)],
        &[gt("c", "a", cube(0.0), 0.0)],
        0.5,
    )
    .unwrap();
    assert_eq!(two.pairs[0].pred, 1);
    assert_eq!(two.false_positives, vec![0]);
    // boxes in different images never match
    let other = match_detections(&[pred("x", cube(0.0), 0.5)], &[gt("y", "a", cube(0.0), 0.0)], 0.5).unwrap();
    assert_eq!((other.tp(), other.fp(), other.fn_()), (0, 1, 1));
}

#[test]
fn f1_conventions() {
    let s = f1_from_counts(1, 1, 0);
    assert_eq!((s.precision, s.recall), (0.5, 1.0));
    assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    let none = f1_from_counts(0, 0, 4);
    assert_eq!((none.precision, none.recall, none.f1), (1.0, 0.0, 0.0));
    assert_eq!(f1_from_counts(5, 0, 0).f1, 1.0);
    assert_eq!(f1_from_counts(0, 0, 0).f1, 1.0);
}

#[test]
fn neutral_examples() {
    let full = vec![gt("c", "a", cube(0.0), 10.0), gt("c", "b", cube(5.0), 95.0)];
    let filtered = vec![full[0].clone()];
    // identical sets
    let same = neutral_f1(&[pred("c", cube(0.0), 0.9)], &full, &full, 0.5).unwrap();
    assert_eq!(same.neutral_f1, same.filtered.f1);
    // detecting a filtered-out fruit is no longer a false positive
    let both = [pred("c", cube(0.0), 0.9), pred("c", cube(5.0), 0.8)];
    let r = neutral_f1(&both, &filtered, &full, 0.5).unwrap();
    assert_eq!(r.filtered.f1, 2.0 / 3.0);
    assert_eq!((r.neutral_precision, r.neutral_f1), (1.0, 1.0));
    // a box on nothing hurts both
    let stray = [pred("c", cube(0.0), 0.9), pred("c", cube(20.0), 0.8)];
    let r = neutral_f1(&stray, &full, &full, 0.5).unwrap();
    assert_eq!(r.neutral_f1, r.filtered.f1);
    assert!(r.filtered.f1 < 1.0);
    // filtered must come from the full set
    let foreign = vec![gt("c", "zzz", cube(0.0), 0.0)];
    assert!(matches!(neutral_f1(&both, &foreign, &full, 0.5), Err(Error::NotSubset(_))));
}

#[test]
fn position_error_examples_and_chi_mean() {
    assert_eq!(position_error(&Vector3::zeros(), &Vector3::zeros()), 0.0);
    assert_eq!(position_error(&Vector3::zeros(), &Vector3::new(1.0, 2.0, 2.0)), 3.0);
    let sigma = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000;
    let mean = (0..n)
        .map(|_| {
            let d = Vector3::from_fn(|_, _| {
                sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            });
            position_error(&Vector3::zeros(), &d)
        })
        .sum::<f64>()
        / n as f64;
    // mean of a chi distribution with three degrees of freedom
    let want = sigma * 2.0 * (2.0 / std::f64::consts::PI).sqrt();
    assert!((mean - want).abs() / want < 0.02, "{mean} vs {want}");
}

#[test]
fn orientation_examples() {
    let v = Vector3::new(0.3, -0.2, 0.9).normalize();
    assert_eq!(orientation_error(&v, &v).unwrap().angle_deg, 0.0);
    assert!((orientation_error(&Vector3::x(), &Vector3::y()).unwrap().angle_deg - 90.0).abs() < 1e-12);
    assert!((orientation_error(&Vector3::x(), &-Vector3::x()).unwrap().angle_deg - 180.0).abs() < 1e-12);
    let nudged = Vector3::new(1.0 + 1e-9, 0.0, 0.0);
    let e = orientation_error(&Vector3::x(), &nudged).unwrap();
    assert!(e.angle_deg.is_finite() && e.angle_deg < 1e-6);
    assert!(matches!(orientation_error(&Vector3::zeros(), &v), Err(Error::ZeroVector)));

    // pitch is the elevation difference, yaw the wrapped azimuth difference
    let a = Vector3::new(1.0, 0.0, 0.0);
    let b = Vector3::new(-1.0, -0.01, 1.0).normalize();
    let e = orientation_error(&a, &b).unwrap();
    assert!((e.pitch_deg - b.z.asin().to_degrees()).abs() < 1e-9);
    // b points almost straight back in azimuth
    let want_yaw = 180.0 - 0.01f64.atan().to_degrees();
    assert!((e.yaw_deg - want_yaw).abs() < 1e-9);
    assert!(e.yaw_deg <= 180.0);
}

#[test]
fn occlusion_bins() {
    assert_eq!(OCCLUSION_BINS.len(), 8);
    assert_eq!(occlusion_bin(95.0).unwrap(), 0);
    assert_eq!(occlusion_bin(100.0).unwrap(), 0);
    assert_eq!(occlusion_bin(90.0).unwrap(), 0);
    assert_eq!(occlusion_bin(89.999).unwrap(), 1);
    assert_eq!(occlusion_bin(30.0).unwrap(), 6);
    assert_eq!(occlusion_bin(25.0).unwrap(), 7);
    assert_eq!(occlusion_bin(0.0).unwrap(), 7);
    assert!(occlusion_bin(100.5).is_err());
    assert!(occlusion_bin(-1.0).is_err());
    let bins = bin_by_occlusion(&[95.0, 25.0, 30.0, 55.0, 0.0]).unwrap();
    assert_eq!(bins.iter().map(Vec::len).sum::<usize>(), 5);
    assert_eq!(bins[7], vec![1, 4]);
}

#[test]
fn bootstrap_clt_and_determinism() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 10_000;
    let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let iv = bootstrap_mean(&xs, 1000, 0.95, 3).unwrap();
    let half = 1.96 / (n as f64).sqrt();
    assert!(((iv.high - iv.low) / 2.0 - half).abs() / half < 0.1, "{iv:?}");
    assert!((iv.low + iv.high) / 2.0 - mean < 0.2 * half);
    assert_eq!(bootstrap_mean(&xs, 1000, 0.95, 3).unwrap(), iv);
    assert_eq!(bootstrap_mean(&[4.0; 30], 100, 0.95, 0).unwrap().low, 4.0);

    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| bootstrap_interval(&xs, |s| s.iter().map(|x| **x).fold(f64::MIN, f64::max), 300, 0.9, 8));
    let b = many.install(|| bootstrap_interval(&xs, |s| s.iter().map(|x| **x).fold(f64::MIN, f64::max), 300, 0.9, 8));
    assert_eq!(a.unwrap(), b.unwrap());
}

#[test]
fn zero_orientation_baseline_cases() {
    let r = Vector3::x();
    assert_eq!(zero_orientation_baseline(&[r; 10], &r).unwrap(), 0.0);
    assert!(zero_orientation_baseline(&[], &r).is_err());
    // against a uniform random prediction every fixed axis averages 90°, so
    // the baseline wins exactly when the ground truth leans toward the reference
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let leaning: Vec<Vector3<f64>> = (0..5000).map(|_| (r * 0.8 + uniform_sphere(&mut rng)).normalize()).collect();
    let baseline = zero_orientation_baseline(&leaning, &r).unwrap();
    let random =
        leaning.iter().map(|g| orientation_error(g, &uniform_sphere(&mut rng)).unwrap().angle_deg).sum::<f64>()
            / leaning.len() as f64;
    assert!(baseline < 90.0 && (random - 90.0).abs() < 2.0 && baseline < random);
}

fn label(camera: &str, fruit: &str, center: [f64; 3], occlusion: f64) -> ImageLabel {
    ImageLabel {
        fruit_id: fruit.into(),
        tree_id: "T01".into(),
        camera_id: camera.into(),
        bbox2d: [0.0, 0.0, 10.0, 10.0],
        obb_camera: CameraBox {
            center,
            extents: [0.08, 0.07, 0.07],
            q: [1.0, 0.0, 0.0, 0.0],
            axis: [1.0, 0.0, 0.0],
            centroid: None,
        },
        occlusion,
        s_t: 100,
        s_o: occlusion as usize,
    }
}

#[test]
fn evaluate_report() {
    let labels = vec![
        label("a", "F1", [0.0, 0.0, 1.0], 10.0),
        label("a", "F2", [0.3, 0.0, 1.0], 92.0),
        label("b", "F1", [0.0, 0.1, 1.5], 45.0),
        label("b", "F3", [-0.3, 0.0, 1.2], 20.0),
    ];
    let mut preds: Vec<Prediction> =
        labels[..3].iter().map(|l| Prediction::try_from(PredictionRecord::from_label(l)).unwrap()).collect();
    preds[2].obb.center.x += 0.004;
    preds[2].axis = Vector3::new(1.0, 0.05, 0.0).normalize();
    preds.push(pred("b", OrientedBox::axis_aligned(Vector3::new(2.0, 0.0, 2.0), Vector3::repeat(0.08)), 0.3));

    let cfg = EvalConfig { test_occlusion_limit: 85.0, replicates: 200, ..Default::default() };
    let r = evaluate(&labels, &preds, &cfg).unwrap();
    assert_eq!((r.ground_truth_full, r.ground_truth_filtered), (4, 3));
    assert_eq!((r.tp, r.fp, r.fn_), (2, 2, 1));
    assert_eq!(r.images, 2);
    let s = f1_from_counts(2, 2, 1);
    assert_eq!((r.precision, r.recall, r.f1), (s.precision, s.recall, s.f1));
    assert_eq!(r.neutral_precision, 3.0 / 4.0);
    assert!(r.neutral_f1 >= r.f1);
    assert!((r.position_error_m.mean.unwrap() - 0.002).abs() < 1e-9);
    assert!(r.orientation_error_deg.median.is_some());
    assert_eq!(r.bins.iter().map(|b| b.instances).sum::<usize>(), 4);
    assert_eq!(r.bins[0].detected, 1);
    for v in [r.precision, r.recall, r.f1, r.neutral_precision, r.neutral_f1, r.f1_ci.low, r.f1_ci.high] {
        assert!((0.0..=1.0).contains(&v));
    }
    assert!(r.f1_ci.low <= r.f1 && r.f1 <= r.f1_ci.high);
    assert_eq!(r.zero_orientation_baseline_deg, Some(0.0));

    let json = serde_json::to_value(&r).unwrap();
    for key in ["tp", "fp", "fn", "f1", "neutral_f1", "bins", "config", "f1_ci", "position_error_m"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert_eq!(json["config"]["test_occlusion_limit"], 85.0);
}

#[test]
fn prediction_file_parsing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("preds.jsonl");
    std::fs::write(
        &path,
        concat!(
            r#"{"camera_id":"a","confidence":0.9,"center":[0,0,1],"extents":[0.1,0.1,0.1],"q":[1,0,0,0],"axis":[1,0,0]}"#,
            "\n\n",
            r#"{"camera_id":"b","confidence":0.2,"center":[0,0,2],"extents":[0.1,0.1,0.1],"q":[0,0,0,2],"axis":[0,0,1]}"#,
            "\n"
        ),
    )
    .unwrap();
    let preds = read_predictions(&path).unwrap();
    assert_eq!(preds.len(), 2);
    assert!((preds[1].obb.rotation.angle() - std::f64::consts::PI).abs() < 1e-12);

    for bad in [
        r#"{"camera_id":"a","confidence":1.5,"center":[0,0,1],"extents":[0.1,0.1,0.1],"q":[1,0,0,0],"axis":[1,0,0]}"#,
        r#"{"camera_id":"a","confidence":0.5,"center":[0,0,1],"extents":[0.1,0,0.1],"q":[1,0,0,0],"axis":[1,0,0]}"#,
        r#"{"camera_id":"a","confidence":0.5,"center":[0,0,1],"extents":[0.1,0.1,0.1],"q":[1,0,0,0],"axis":[2,0,0]}"#,
    ] {
        std::fs::write(&path, bad).unwrap();
        assert!(read_predictions(&path).is_err(), "{bad}");
    }
}

fn arb_box() -> impl Strategy<Value = OrientedBox> {
    (any::<u64>(), -0.8..0.8f64, -0.8..0.8f64, -0.8..0.8f64)
        .prop_map(|(seed, x, y, z)| random_box(&mut ChaCha8Rng::seed_from_u64(seed), Vector3::new(x, y, z)))
}

proptest! {
    #[test]
    fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let ab = obb_iou(&a, &b).unwrap();
        let ba = obb_iou(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((obb_iou(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iou_invariant_under_rigid_motion(a in arb_box(), b in arb_box(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_rotation(&mut rng);
        let t = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let mv = |x: &OrientedBox| OrientedBox::new(r * x.center + t, x.extents, r * x.rotation);
        prop_assert!((obb_iou(&a, &b).unwrap() - obb_iou(&mv(&a), &mv(&b)).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn far_apart_boxes_have_zero_iou(a in arb_box(), b in arb_box()) {
        let moved = OrientedBox { center: b.center + Vector3::new(10.0, 0.0, 0.0), ..b };
        prop_assert_eq!(obb_iou(&a, &moved).unwrap(), 0.0);
    }

    #[test]
    fn orientation_error_range_and_rotation_invariance(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, v) = (uniform_sphere(&mut rng), uniform_sphere(&mut rng));
        let r = random_rotation(&mut rng);
        let e = orientation_error(&u, &v).unwrap();
        prop_assert!((0.0..=180.0).contains(&e.angle_deg));
        prop_assert!((0.0..=180.0).contains(&e.yaw_deg) && (0.0..=180.0).contains(&e.pitch_deg));
        let er = orientation_error(&(r * u), &(r * v)).unwrap();
        prop_assert!((e.angle_deg - er.angle_deg).abs() < 1e-6);
        // unnormalized input is renormalized
        prop_assert!((orientation_error(&(u * 3.0), &(v * 0.5)).unwrap().angle_deg - e.angle_deg).abs() < 1e-9);
    }

    #[test]
    fn matching_ignores_input_order(seed in any::<u64>(), n_gt in 0usize..6, n_pred in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gts: Vec<GroundTruth> = (0..n_gt)
            .map(|i| gt(["a", "b"][i % 2], &format!("f{i}"), random_box(&mut rng, Vector3::new(i as f64 * 0.7, 0.0, 0.0)), 0.0))
            .collect();
        let mut confidences: Vec<f64> = (0..n_pred).map(|i| (i as f64 + 1.0) / (n_pred as f64 + 1.0)).collect();
        confidences.shuffle(&mut rng);
        let preds: Vec<Prediction> = confidences
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let center = Vector3::new(rng.random_range(-0.5..4.0), rng.random_range(-0.3..0.3), 0.0);
                pred(["a", "b"][i % 2], random_box(&mut rng, center), *c)
            })
            .collect();
        let base = match_detections(&preds, &gts, 0.3).unwrap();
        let mut perm: Vec<usize> = (0..n_pred).collect();
        perm.shuffle(&mut rng);
        let shuffled: Vec<Prediction> = perm.iter().map(|&i| preds[i].clone()).collect();
        let other = match_detections(&shuffled, &gts, 0.3).unwrap();
        let mut a: Vec<(usize, usize)> = base.pairs.iter().map(|p| (p.pred, p.gt)).collect();
        let mut b: Vec<(usize, usize)> = other.pairs.iter().map(|p| (perm[p.pred], p.gt)).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
        prop_assert_eq!(f1_scores(&base), f1_scores(&other));
        for p in &base.pairs {
            prop_assert!(p.iou >= 0.3);
        }
        prop_assert_eq!(base.tp() + base.fn_(), n_gt);
        prop_assert_eq!(base.tp() + base.fp(), n_pred);
    }
}
