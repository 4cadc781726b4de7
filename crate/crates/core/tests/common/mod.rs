#![allow(dead_code)]

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use splatlabel::eval::OrientedBox;

pub fn uniform_sphere(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from(UnitSphere.sample(rng))
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let q = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
    if q.norm() < 1e-3 {
        UnitQuaternion::identity()
    } else {
        UnitQuaternion::from_quaternion(q)
    }
}

pub fn random_box(rng: &mut ChaCha8Rng, center: Vector3<f64>) -> OrientedBox {
    let extents = Vector3::new(rng.random_range(0.3..1.2), rng.random_range(0.3..1.2), rng.random_range(0.3..1.2));
    OrientedBox::new(center, extents, random_rotation(rng))
}
