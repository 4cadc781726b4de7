//! Exact intersection volume of oriented boxes by convex clipping.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::annotation::CameraBox;
use crate::error::{Error, Result};

/// Boxes with less volume than this (m³) are rejected.
pub const MIN_BOX_VOLUME: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vector3<f64>,
    /// Full side lengths.
    pub extents: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl OrientedBox {
    pub fn new(center: Vector3<f64>, extents: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self { center, extents, rotation }
    }

    pub fn axis_aligned(center: Vector3<f64>, extents: Vector3<f64>) -> Self {
        Self::new(center, extents, UnitQuaternion::identity())
    }

    pub fn volume(&self) -> f64 {
        self.extents.x * self.extents.y * self.extents.z
    }

    /// Columns are the box axes.
    pub fn axes(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let local = self.axes().tr_mul(&(p - self.center));
        (0..3).all(|i| local[i].abs() <= 0.5 * self.extents[i])
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let r = self.axes();
        let h = self.extents * 0.5;
        std::array::from_fn(|i| {
            let s = Vector3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            );
            self.center + r * s
        })
    }

    fn validate(&self) -> Result<()> {
        let v = self.volume();
        if !(v >= MIN_BOX_VOLUME) || self.extents.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::DegenerateBox(v));
        }
        Ok(())
    }

    /// Faces as corner loops (each wound consistently around its outward normal).
    fn faces(&self) -> Vec<Vec<Vector3<f64>>> {
        let c = self.corners();
        [[0, 2, 6, 4], [1, 5, 7, 3], [0, 4, 5, 1], [2, 3, 7, 6], [0, 1, 3, 2], [4, 6, 7, 5]]
            .iter()
            .map(|f| f.iter().map(|&i| c[i]).collect())
            .collect()
    }

    /// Half-spaces `n · x <= d` bounding the box.
    fn half_spaces(&self) -> [(Vector3<f64>, f64); 6] {
        let r = self.axes();
        std::array::from_fn(|i| {
            let axis: Vector3<f64> = r.column(i / 2).into();
            let n = if i % 2 == 0 { axis } else { -axis };
            (n, n.dot(&self.center) + 0.5 * self.extents[i / 2])
        })
    }
}

impl From<&CameraBox> for OrientedBox {
    fn from(b: &CameraBox) -> Self {
        Self::new(Vector3::from(b.center), Vector3::from(b.extents), b.rotation())
    }
}

type Polytope = Vec<Vec<Vector3<f64>>>;

fn clip(poly: Polytope, n: &Vector3<f64>, d: f64, eps: f64) -> Polytope {
    let mut out: Polytope = Vec::with_capacity(poly.len() + 1);
    let mut on_plane: Vec<Vector3<f64>> = Vec::new();
    let mut face_on_plane = false;
    for face in poly {
        let dist: Vec<f64> = face.iter().map(|p| n.dot(p) - d).collect();
        if dist.iter().all(|s| *s <= eps) {
            if dist.iter().all(|s| s.abs() <= eps) {
                face_on_plane = true;
            }
            on_plane.extend(face.iter().zip(&dist).filter(|(_, s)| s.abs() <= eps).map(|(p, _)| *p));
            out.push(face);
            continue;
        }
        let mut clipped = Vec::with_capacity(face.len() + 1);
        for i in 0..face.len() {
            let j = (i + 1) % face.len();
            let (p, q, sp, sq) = (face[i], face[j], dist[i], dist[j]);
            if sp <= eps {
                clipped.push(p);
                if sp.abs() <= eps {
                    on_plane.push(p);
                }
            }
            if (sp < -eps && sq > eps) || (sp > eps && sq < -eps) {
                let x = p + (q - p) * (sp / (sp - sq));
                clipped.push(x);
                on_plane.push(x);
            }
        }
        if clipped.len() >= 3 {
            out.push(clipped);
        }
    }
    if !face_on_plane {
        if let Some(cap) = cap_polygon(on_plane, n, eps) {
            out.push(cap);
        }
    }
    out
}

/// Orders the points where the polytope meets a plane into a convex loop.
fn cap_polygon(mut pts: Vec<Vector3<f64>>, n: &Vector3<f64>, eps: f64) -> Option<Vec<Vector3<f64>>> {
    let mut unique: Vec<Vector3<f64>> = Vec::with_capacity(pts.len());
    for p in pts.drain(..) {
        if unique.iter().all(|u| (u - p).norm() > eps) {
            unique.push(p);
        }
    }
    if unique.len() < 3 {
        return None;
    }
    let centroid = unique.iter().sum::<Vector3<f64>>() / unique.len() as f64;
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    let mut keyed: Vec<(f64, Vector3<f64>)> = unique
        .into_iter()
        .map(|p| {
            let r = p - centroid;
            (r.dot(&v).atan2(r.dot(&u)), p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(keyed.into_iter().map(|(_, p)| p).collect())
}

fn polytope_volume(poly: &Polytope) -> f64 {
    let count: usize = poly.iter().map(Vec::len).sum();
    if poly.len() < 4 || count == 0 {
        return 0.0;
    }
    let reference = poly.iter().flatten().sum::<Vector3<f64>>() / count as f64;
    poly.iter()
        .map(|face| {
            let a = face[0] - reference;
            let signed: f64 =
                face.windows(2).skip(1).map(|w| a.dot(&(w[0] - reference).cross(&(w[1] - reference)))).sum();
            signed.abs() / 6.0
        })
        .sum()
}

/// Volume shared by two oriented boxes.
pub fn intersection_volume(a: &OrientedBox, b: &OrientedBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let scale = a.extents.max().max(b.extents.max());
    let eps = 1e-12 * scale.max(1.0);
    let mut poly = a.faces();
    for (n, d) in b.half_spaces() {
        poly = clip(poly, &n, d, eps);
        if poly.len() < 4 {
            return Ok(0.0);
        }
    }
    Ok(polytope_volume(&poly).min(a.volume()).min(b.volume()))
}

/// 3D intersection over union of two oriented boxes.
pub fn obb_iou(a: &OrientedBox, b: &OrientedBox) -> Result<f64> {
    let inter = intersection_volume(a, b)?;
    let union = a.volume() + b.volume() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}
