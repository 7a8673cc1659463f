//! Core 3D types, the viewing hemisphere and viewpoint sampling.
//!
//! All lengths are in meters. Cameras follow the "optical axis is +Z"
//! convention: the third column of a [`Viewpoint`] rotation is the viewing
//! direction in world coordinates.

use nalgebra::{Matrix3, Unit, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::seeded_rng;

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// An ordered set of surface samples in world coordinates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<Point3>,
}

impl PointSet {
    pub fn new(points: Vec<Point3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.x.is_finite() && p.y.is_finite() && p.z.is_finite())
    }

    /// Axis-aligned bounding box as `(min, max)`; `None` for an empty set.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = self.points.first()?;
        let mut lo = *first;
        let mut hi = *first;
        for p in &self.points[1..] {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Some((lo, hi))
    }

    /// Subset of points whose flag is set, preserving order.
    pub fn select(&self, flags: &[bool]) -> PointSet {
        PointSet::new(
            self.points
                .iter()
                .zip(flags)
                .filter(|(_, &f)| f)
                .map(|(p, _)| *p)
                .collect(),
        )
    }

    /// Mean distance from each point to its nearest neighbour (brute force).
    pub fn mean_nearest_neighbor_spacing(&self) -> f64 {
        let n = self.points.len();
        if n < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for (i, p) in self.points.iter().enumerate() {
            let mut best = f64::INFINITY;
            for (j, q) in self.points.iter().enumerate() {
                if i != j {
                    let d = (p - q).norm_squared();
                    if d < best {
                        best = d;
                    }
                }
            }
            total += best.sqrt();
        }
        total / n as f64
    }
}

impl FromIterator<Point3> for PointSet {
    fn from_iter<T: IntoIterator<Item = Point3>>(iter: T) -> Self {
        PointSet::new(iter.into_iter().collect())
    }
}

/// Pinhole camera pose on the viewing space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub center: Point3,
    /// Camera-to-world rotation; columns are the camera x, y and optical axes.
    pub rotation: Matrix3<f64>,
    pub fov_deg: f64,
    pub max_range: f64,
}

impl Viewpoint {
    /// Camera at `center` whose optical axis passes through `target`.
    ///
    /// Roll is fixed by aligning camera +Y with `up` projected onto the image
    /// plane. When the optical axis is parallel to `up` the world X axis is
    /// projected instead.
    pub fn look_at(center: Point3, target: Point3, up: Vec3, fov_deg: f64, max_range: f64) -> Self {
        let z = (target - center).normalize();
        let mut y = up - z * up.dot(&z);
        if y.norm() < 1e-9 {
            let fallback = Vec3::x();
            y = fallback - z * fallback.dot(&z);
            if y.norm() < 1e-9 {
                let fallback = Vec3::y();
                y = fallback - z * fallback.dot(&z);
            }
        }
        let y = y.normalize();
        let x = y.cross(&z);
        Self {
            center,
            rotation: Matrix3::from_columns(&[x, y, z]),
            fov_deg,
            max_range,
        }
    }

    pub fn optical_axis(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }

    /// World point expressed in the camera frame.
    pub fn to_camera(&self, p: &Point3) -> Vec3 {
        self.rotation.transpose() * (p - self.center)
    }

    /// Whether a world point falls inside the square image frustum and range.
    pub fn in_frustum(&self, p: &Point3) -> bool {
        let c = self.to_camera(p);
        if c.z <= 0.0 || c.norm() > self.max_range {
            return false;
        }
        let t = (self.fov_deg.to_radians() * 0.5).tan();
        c.x.abs() <= t * c.z && c.y.abs() <= t * c.z
    }

    /// Orthonormality defect ‖RᵀR − I‖ (Frobenius).
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    /// Pose as a row-major 3×4 `[R | t]` camera-to-world matrix.
    pub fn pose_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let c = &self.center;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], c.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], c.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], c.z,
        ]
    }

    pub fn from_pose_row_major(m: &[f64; 12], fov_deg: f64, max_range: f64) -> Self {
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        Self {
            center: Point3::new(m[3], m[7], m[11]),
            rotation,
            fov_deg,
            max_range,
        }
    }

    /// Apply a rigid transform to the camera pose.
    pub fn transformed(&self, iso: &nalgebra::Isometry3<f64>) -> Self {
        let rot = iso.rotation.to_rotation_matrix();
        Self {
            center: iso * self.center,
            rotation: rot.matrix() * self.rotation,
            fov_deg: self.fov_deg,
            max_range: self.max_range,
        }
    }
}

/// Intrinsics shared by all cameras placed on a viewing space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fov_deg: f64,
    pub max_range: f64,
}

/// Hemisphere of candidate camera centers around the object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewingSpace {
    pub center: Point3,
    pub radius: f64,
    pub axis: Vec3,
    pub camera: CameraModel,
}

impl ViewingSpace {
    /// Hemisphere over `center` with +Z up, 60° field of view and a range of
    /// twice the radius.
    pub fn new(center: Point3, radius: f64) -> Result<Self, GeometryError> {
        Self::with_axis(center, radius, Vec3::z())
    }

    pub fn with_axis(center: Point3, radius: f64, axis: Vec3) -> Result<Self, GeometryError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::Parameter(format!(
                "viewing radius must be positive, got {radius}"
            )));
        }
        if !(axis.norm() > 0.0) {
            return Err(GeometryError::Parameter("hemisphere axis must be non-zero".into()));
        }
        Ok(Self {
            center,
            radius,
            axis: axis.normalize(),
            camera: CameraModel {
                fov_deg: 60.0,
                max_range: 2.0 * radius,
            },
        })
    }

    /// Hemisphere surface area 2πr².
    pub fn area(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.radius * self.radius
    }

    fn basis(&self) -> (Vec3, Vec3) {
        let a = Unit::new_normalize(self.axis);
        let helper = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = (helper - a.into_inner() * helper.dot(&a)).normalize();
        let e2 = a.cross(&e1);
        (e1, e2)
    }

    /// Camera looking at the center from elevation/azimuth (radians) measured
    /// against the hemisphere axis.
    pub fn viewpoint_at(&self, elevation: f64, azimuth: f64) -> Viewpoint {
        let (e1, e2) = self.basis();
        let dir = e1 * (elevation.cos() * azimuth.cos())
            + e2 * (elevation.cos() * azimuth.sin())
            + self.axis * elevation.sin();
        let center = self.center + dir * self.radius;
        Viewpoint::look_at(
            center,
            self.center,
            self.axis,
            self.camera.fov_deg,
            self.camera.max_range,
        )
    }

    /// Elevation of a world position above the hemisphere's base plane.
    pub fn elevation_of(&self, p: &Point3) -> f64 {
        let d = (p - self.center).normalize();
        d.dot(&self.axis).clamp(-1.0, 1.0).asin()
    }

    pub fn contains(&self, p: &Point3, tol: f64) -> bool {
        let d = p - self.center;
        (d.norm() - self.radius).abs() < tol && d.dot(&self.axis) >= -tol
    }

    /// `n` viewpoints uniform by area on the hemisphere, seeded.
    pub fn sample_viewpoints(&self, n: usize, seed: u64) -> Result<Vec<Viewpoint>, GeometryError> {
        if n == 0 {
            return Err(GeometryError::Parameter("viewpoint count must be at least 1".into()));
        }
        let mut rng = seeded_rng(seed);
        Ok(self.sample_viewpoints_with(n, &mut rng))
    }

    pub fn sample_viewpoints_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Viewpoint> {
        (0..n)
            .map(|_| {
                // Height along the axis is uniform on [0, 1) for an
                // area-uniform hemisphere.
                let h: f64 = rng.random::<f64>();
                let azimuth = rng.random::<f64>() * std::f64::consts::TAU;
                self.viewpoint_at(h.asin(), azimuth)
            })
            .collect()
    }
}

/// Candidate count from the ε-net bound with unit constant:
/// `max(1, ceil((A/ε)·ln(A/ε)))`.
pub fn epsilon_net_size(viewing_area: f64, epsilon: f64) -> Result<usize, GeometryError> {
    if !(viewing_area > 0.0 && viewing_area.is_finite()) {
        return Err(GeometryError::Parameter(format!(
            "viewing area must be positive, got {viewing_area}"
        )));
    }
    if !(epsilon > 0.0) || epsilon > viewing_area {
        return Err(GeometryError::Parameter(format!(
            "epsilon must lie in (0, {viewing_area}], got {epsilon}"
        )));
    }
    let ratio = viewing_area / epsilon;
    let n = (ratio * ratio.ln()).ceil();
    Ok(if n < 1.0 { 1 } else { n as usize })
}
