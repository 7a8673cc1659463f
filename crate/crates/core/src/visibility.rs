//! Point visibility from a viewpoint.
//!
//! [`hpr_visible`] is the hidden-point-removal operator: points are
//! spherically flipped about the camera center and the visible ones are those
//! whose image is a vertex of the convex hull of the flipped set plus the
//! camera center. [`raycast_visible`] is a brute-force occlusion test that
//! treats every sample as a ball and serves as the independent oracle.
//!
//! Both apply field-of-view culling first: points outside the square image
//! frustum or beyond the camera range are never visible.

use std::collections::HashMap;

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PointSet, Vec3, Viewpoint};
use crate::hull::convex_hull;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisibilityError {
    #[error("point set is empty")]
    Empty,
    #[error("point {index} is non-finite")]
    NonFinite { index: usize },
    #[error("viewpoint coincides with point {index} (distance {distance:e})")]
    Coincident { index: usize, distance: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Per-point visibility flags aligned with a [`PointSet`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VisibilityMask {
    pub flags: Vec<bool>,
    /// Set when the flipped set was coplanar or collinear and the hull fell
    /// back to lower-dimensional handling.
    #[serde(default)]
    pub degenerate: bool,
}

impl VisibilityMask {
    pub fn all(n: usize, value: bool) -> Self {
        Self {
            flags: vec![value; n],
            degenerate: false,
        }
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Element-wise OR.
    pub fn union_with(&mut self, other: &VisibilityMask) {
        for (a, b) in self.flags.iter_mut().zip(&other.flags) {
            *a |= *b;
        }
    }

    pub fn agreement(&self, other: &VisibilityMask) -> f64 {
        let same = self.flags.iter().zip(&other.flags).filter(|(a, b)| a == b).count();
        same as f64 / self.flags.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HprParams {
    /// Flip radius as a multiple of the farthest point distance; must exceed 1.
    pub gamma: f64,
}

impl Default for HprParams {
    fn default() -> Self {
        Self { gamma: 3.0 }
    }
}

impl HprParams {
    pub fn validate(&self) -> Result<(), VisibilityError> {
        if self.gamma > 1.0 && self.gamma.is_finite() {
            Ok(())
        } else {
            Err(VisibilityError::Parameter(format!("gamma must exceed 1, got {}", self.gamma)))
        }
    }
}

const COINCIDENT_TOL: f64 = 1e-9;

fn check_points(points: &PointSet, view: &Viewpoint) -> Result<(), VisibilityError> {
    if points.is_empty() {
        return Err(VisibilityError::Empty);
    }
    for (index, p) in points.iter().enumerate() {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(VisibilityError::NonFinite { index });
        }
        let distance = (p - view.center).norm();
        if distance <= COINCIDENT_TOL {
            return Err(VisibilityError::Coincident { index, distance });
        }
    }
    Ok(())
}

/// Hidden point removal from `view`.
pub fn hpr_visible(points: &PointSet, view: &Viewpoint, params: &HprParams) -> Result<VisibilityMask, VisibilityError> {
    params.validate()?;
    check_points(points, view)?;
    let n = points.len();
    let mut flags = vec![false; n];

    // Exact duplicates share one hull vertex; resolve them to a representative.
    let mut rep_of: HashMap<[u64; 3], usize> = HashMap::with_capacity(n);
    let mut members: Vec<usize> = Vec::with_capacity(n);
    let mut reps: Vec<usize> = Vec::with_capacity(n);
    for (i, p) in points.iter().enumerate() {
        if !view.in_frustum(p) {
            members.push(usize::MAX);
            continue;
        }
        let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
        let r = *rep_of.entry(key).or_insert_with(|| {
            reps.push(i);
            i
        });
        members.push(r);
    }
    if reps.is_empty() {
        return Ok(VisibilityMask { flags, degenerate: false });
    }

    let local: Vec<Vec3> = reps.iter().map(|&i| points.points[i] - view.center).collect();
    let max_norm = local.iter().map(|q| q.norm()).fold(0.0, f64::max);
    let radius = params.gamma * max_norm;
    let mut flipped: Vec<Vec3> = local
        .iter()
        .map(|q| {
            let d = q.norm();
            q * ((2.0 * radius - d) / d)
        })
        .collect();
    flipped.push(Vec3::zeros());
    let hull = convex_hull(&flipped);

    let mut rep_visible: HashMap<usize, bool> = HashMap::with_capacity(reps.len());
    let vmask = hull.vertex_mask(flipped.len());
    for (k, &i) in reps.iter().enumerate() {
        rep_visible.insert(i, vmask[k]);
    }
    for (i, &r) in members.iter().enumerate() {
        if r != usize::MAX {
            flags[i] = rep_visible[&r];
        }
    }
    Ok(VisibilityMask {
        flags,
        degenerate: hull.is_degenerate(),
    })
}

/// Default oracle occluder radius: three times the mean nearest-neighbour
/// spacing. Smaller balls leave holes in a randomly sampled surface and let
/// rays through to the far side.
pub fn default_occluder_radius(points: &PointSet) -> f64 {
    3.0 * points.mean_nearest_neighbor_spacing()
}

/// Neighbourhood size for tangent-plane estimation.
pub const NORMAL_NEIGHBORS: usize = 10;

/// Unoriented unit normals from the covariance of each point's
/// [`NORMAL_NEIGHBORS`] nearest neighbours. Returns `None` for fewer than
/// four points.
pub fn estimate_normals(points: &PointSet) -> Option<Vec<Vec3>> {
    let n = points.len();
    if n < 4 {
        return None;
    }
    let k = NORMAL_NEIGHBORS.min(n - 1);
    let normals = points
        .points
        .par_iter()
        .map(|p| {
            let mut d: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .map(|(j, q)| ((q - p).norm_squared(), j))
                .collect();
            d.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0));
            let near = &d[..=k];
            let mean = near.iter().fold(Vec3::zeros(), |a, &(_, j)| a + points.points[j].coords) / near.len() as f64;
            let mut cov = Matrix3::zeros();
            for &(_, j) in near {
                let v = points.points[j].coords - mean;
                cov += v * v.transpose();
            }
            let eig = SymmetricEigen::new(cov);
            eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned()
        })
        .collect();
    Some(normals)
}

/// Brute-force ball occlusion.
///
/// Point `p` is visible unless some other point `q` lies within
/// `occluder_radius` of the segment from the camera to `p`, is strictly
/// nearer along it, and sits on the camera side of `p`'s tangent plane by
/// more than half the radius. The tangent-plane test keeps a surface from
/// shadowing itself at grazing incidence.
pub fn raycast_visible(points: &PointSet, view: &Viewpoint, occluder_radius: f64) -> Result<VisibilityMask, VisibilityError> {
    let oracle = RaycastOracle::new(points, occluder_radius)?;
    oracle.visible(view)
}

/// [`raycast_visible`] with tangent planes computed once for many views.
#[derive(Debug, Clone)]
pub struct RaycastOracle<'a> {
    points: &'a PointSet,
    normals: Option<Vec<Vec3>>,
    radius: f64,
}

impl<'a> RaycastOracle<'a> {
    pub fn new(points: &'a PointSet, occluder_radius: f64) -> Result<Self, VisibilityError> {
        if !(occluder_radius > 0.0 && occluder_radius.is_finite()) {
            return Err(VisibilityError::Parameter(format!(
                "occluder radius must be positive, got {occluder_radius}"
            )));
        }
        Ok(Self {
            points,
            normals: estimate_normals(points),
            radius: occluder_radius,
        })
    }

    pub fn with_default_radius(points: &'a PointSet) -> Result<Self, VisibilityError> {
        if points.is_empty() {
            return Err(VisibilityError::Empty);
        }
        let r = default_occluder_radius(points);
        Self::new(points, if r > 0.0 { r } else { 1e-6 })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn visible(&self, view: &Viewpoint) -> Result<VisibilityMask, VisibilityError> {
        let points = self.points;
        check_points(points, view)?;
        let occ = self.radius;
        let local: Vec<Vec3> = points.iter().map(|p| p - view.center).collect();
        let dist: Vec<f64> = local.iter().map(|q| q.norm()).collect();
        let in_view: Vec<bool> = points.iter().map(|p| view.in_frustum(p)).collect();
        // Sorting by distance lets each query scan only nearer candidates.
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]));
        let r2 = occ * occ;
        let margin = 0.5 * occ;

        let flags: Vec<bool> = (0..points.len())
            .into_par_iter()
            .map(|i| {
                if !in_view[i] {
                    return false;
                }
                let p = local[i];
                let dp = dist[i];
                let dir = p / dp;
                // Normal oriented toward the camera.
                let normal = self.normals.as_ref().map(|ns| if ns[i].dot(&dir) > 0.0 { -ns[i] } else { ns[i] });
                for &j in &order {
                    if dist[j] - occ >= dp {
                        break;
                    }
                    if j == i {
                        continue;
                    }
                    let q = local[j];
                    let t = q.dot(&dir);
                    if t <= 0.0 || t >= dp {
                        continue;
                    }
                    if let Some(n) = normal {
                        if (q - p).dot(&n) <= margin {
                            continue;
                        }
                    }
                    if q.norm_squared() - t * t < r2 {
                        return false;
                    }
                }
                true
            })
            .collect();
        Ok(VisibilityMask {
            flags,
            degenerate: false,
        })
    }
}

/// Subset of `points` visible from `view`, in input order.
pub fn visible_set(points: &PointSet, view: &Viewpoint, params: &HprParams) -> Result<PointSet, VisibilityError> {
    let mask = hpr_visible(points, view, params)?;
    Ok(points.select(&mask.flags))
}
