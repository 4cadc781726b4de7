//! Real spherical harmonics up to degree 3, in the 3DGS sign convention.

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Degree for a per-channel coefficient count (1, 4, 9 or 16).
pub fn degree_for_count(count: usize) -> Option<usize> {
    match count {
        1 => Some(0),
        4 => Some(1),
        9 => Some(2),
        16 => Some(3),
        _ => None,
    }
}

/// Color of a degree-0 Gaussian, with the +0.5 DC offset.
pub fn dc_to_rgb(dc: [f64; 3]) -> [f64; 3] {
    dc.map(|c| (C0 * c + 0.5).clamp(0.0, 1.0))
}

/// Inverse of [`dc_to_rgb`] for colors inside `[0, 1]`.
pub fn rgb_to_dc(rgb: [f64; 3]) -> [f64; 3] {
    rgb.map(|c| (c - 0.5) / C0)
}

/// Evaluates RGB along `dir` (unit, world frame, pointing from the camera to the Gaussian).
pub fn evaluate_sh(coeffs: &[[f64; 3]], dir: &Vector3<f64>) -> Result<[f64; 3]> {
    let degree = degree_for_count(coeffs.len()).ok_or(Error::UnsupportedShDegree(coeffs.len()))?;
    let basis = basis(degree, dir);
    let mut rgb = [0.5; 3];
    for (w, c) in basis.iter().zip(coeffs) {
        for ch in 0..3 {
            rgb[ch] += w * c[ch];
        }
    }
    Ok(rgb.map(|v| v.clamp(0.0, 1.0)))
}

fn basis(degree: usize, d: &Vector3<f64>) -> Vec<f64> {
    let (x, y, z) = (d.x, d.y, d.z);
    let mut b = Vec::with_capacity((degree + 1) * (degree + 1));
    b.push(C0);
    if degree >= 1 {
        b.extend([-C1 * y, C1 * z, -C1 * x]);
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b.extend([C2[0] * x * y, C2[1] * y * z, C2[2] * (2.0 * zz - xx - yy), C2[3] * x * z, C2[4] * (xx - yy)]);
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b.extend([
            C3[0] * y * (3.0 * xx - yy),
            C3[1] * x * y * z,
            C3[2] * y * (4.0 * zz - xx - yy),
            C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            C3[4] * x * (4.0 * zz - xx - yy),
            C3[5] * z * (xx - yy),
            C3[6] * x * (xx - 3.0 * yy),
        ]);
    }
    b
}
