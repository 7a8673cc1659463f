//! Synthetic object generators.
//!
//! Each [`ShapeSpec`] describes a closed surface in its local frame plus a
//! rigid pose. [`generate_shape`] draws points approximately uniform by
//! surface area. Composite shapes sample the boundary of the union: points of
//! one child that fall inside another child are rejected.

use nalgebra::{Isometry3, Rotation3, Translation3, UnitQuaternion};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point3, PointSet, Vec3};
use crate::rng::seeded_rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("invalid shape parameter: {0}")]
    Parameter(String),
    #[error("could not place {wanted} surface samples after {attempts} attempts")]
    Exhausted { wanted: usize, attempts: usize },
}

/// Rigid placement: translation in meters, then XYZ Euler angles in degrees
/// (roll about X, pitch about Y, yaw about Z).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Pose {
    pub translation: [f64; 3],
    pub rotation_deg: [f64; 3],
}

impl Pose {
    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Self {
            translation: [x, y, z],
            rotation_deg: [0.0; 3],
        }
    }

    pub fn rotated(mut self, roll: f64, pitch: f64, yaw: f64) -> Self {
        self.rotation_deg = [roll, pitch, yaw];
        self
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        let [r, p, y] = self.rotation_deg;
        let rot = Rotation3::from_euler_angles(r.to_radians(), p.to_radians(), y.to_radians());
        let [tx, ty, tz] = self.translation;
        Isometry3::from_parts(
            Translation3::new(tx, ty, tz),
            UnitQuaternion::from_rotation_matrix(&rot),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ShapeFamily {
    Sphere {
        radius: f64,
    },
    /// Full edge lengths along the local axes.
    Box {
        size: [f64; 3],
    },
    /// `(|x/a|^(2/e2) + |y/b|^(2/e2))^(e2/e1) + |z/c|^(2/e1) = 1`.
    Superellipsoid {
        radii: [f64; 3],
        e1: f64,
        e2: f64,
    },
    /// Cylinder of `2·half_length` along local Z capped by hemispheres.
    Capsule {
        radius: f64,
        half_length: f64,
    },
    Composite {
        children: Vec<ShapeSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    #[serde(flatten)]
    pub family: ShapeFamily,
    #[serde(default)]
    pub pose: Pose,
}

impl ShapeSpec {
    pub fn new(family: ShapeFamily) -> Self {
        Self {
            family,
            pose: Pose::default(),
        }
    }

    pub fn sphere(radius: f64) -> Self {
        Self::new(ShapeFamily::Sphere { radius })
    }

    pub fn cuboid(x: f64, y: f64, z: f64) -> Self {
        Self::new(ShapeFamily::Box { size: [x, y, z] })
    }

    pub fn superellipsoid(radii: [f64; 3], e1: f64, e2: f64) -> Self {
        Self::new(ShapeFamily::Superellipsoid { radii, e1, e2 })
    }

    pub fn capsule(radius: f64, half_length: f64) -> Self {
        Self::new(ShapeFamily::Capsule {
            radius,
            half_length,
        })
    }

    pub fn composite(children: Vec<ShapeSpec>) -> Self {
        Self::new(ShapeFamily::Composite { children })
    }

    pub fn with_pose(mut self, pose: Pose) -> Self {
        self.pose = pose;
        self
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ShapeError::Parameter(format!("{name} must be positive, got {v}")))
            }
        };
        match &self.family {
            ShapeFamily::Sphere { radius } => positive("radius", *radius)?,
            ShapeFamily::Box { size } => {
                for s in size {
                    positive("box size", *s)?;
                }
            }
            ShapeFamily::Superellipsoid { radii, e1, e2 } => {
                for r in radii {
                    positive("radius", *r)?;
                }
                positive("e1", *e1)?;
                positive("e2", *e2)?;
            }
            ShapeFamily::Capsule {
                radius,
                half_length,
            } => {
                positive("radius", *radius)?;
                positive("half_length", *half_length)?;
            }
            ShapeFamily::Composite { children } => {
                if children.is_empty() {
                    return Err(ShapeError::Parameter("composite needs at least one child".into()));
                }
                for c in children {
                    c.validate()?;
                }
            }
        }
        let finite = self
            .pose
            .translation
            .iter()
            .chain(self.pose.rotation_deg.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(ShapeError::Parameter("pose must be finite".into()));
        }
        Ok(())
    }

    /// True for families whose surface bounds a convex solid.
    pub fn is_convex(&self) -> bool {
        match &self.family {
            ShapeFamily::Sphere { .. } | ShapeFamily::Box { .. } | ShapeFamily::Capsule { .. } => true,
            ShapeFamily::Superellipsoid { e1, e2, .. } => *e1 <= 2.0 && *e2 <= 2.0,
            ShapeFamily::Composite { children } => children.len() == 1 && children[0].is_convex(),
        }
    }

    /// Surface area of the closed surface (composites: sum over children,
    /// ignoring overlaps).
    pub fn surface_area(&self) -> f64 {
        match &self.family {
            ShapeFamily::Sphere { radius } => 4.0 * std::f64::consts::PI * radius * radius,
            ShapeFamily::Box { size: [x, y, z] } => 2.0 * (x * y + y * z + z * x),
            ShapeFamily::Capsule {
                radius,
                half_length,
            } => {
                let pi = std::f64::consts::PI;
                4.0 * pi * radius * half_length + 4.0 * pi * radius * radius
            }
            ShapeFamily::Superellipsoid { radii, e1, e2 } => {
                SuperellipsoidTable::new(*radii, *e1, *e2).total_area()
            }
            ShapeFamily::Composite { children } => children.iter().map(|c| c.surface_area()).sum(),
        }
    }

    /// Whether a world point lies strictly inside the solid, by more than `tol`
    /// in the family's natural distance-like measure.
    pub fn contains(&self, p: &Point3, tol: f64) -> bool {
        let local = self.pose.isometry().inverse_transform_point(p);
        match &self.family {
            ShapeFamily::Sphere { radius } => local.coords.norm() < radius - tol,
            ShapeFamily::Box { size } => (0..3).all(|a| local[a].abs() < size[a] * 0.5 - tol),
            ShapeFamily::Capsule {
                radius,
                half_length,
            } => {
                let z = local.z.clamp(-half_length, *half_length);
                (local.coords - Vec3::new(0.0, 0.0, z)).norm() < radius - tol
            }
            ShapeFamily::Superellipsoid { radii, e1, e2 } => {
                let f = superellipsoid_implicit(&local, radii, *e1, *e2);
                // Scale-free measure; tol is interpreted relative to the
                // smallest radius.
                let rmin = radii.iter().cloned().fold(f64::INFINITY, f64::min);
                f.powf(*e1 / 2.0) < 1.0 - tol / rmin
            }
            ShapeFamily::Composite { children } => children.iter().any(|c| c.contains(&local, tol)),
        }
    }
}

fn spow(v: f64, e: f64) -> f64 {
    v.signum() * v.abs().powf(e)
}

fn superellipsoid_implicit(p: &Point3, r: &[f64; 3], e1: f64, e2: f64) -> f64 {
    let xy = (p.x / r[0]).abs().powf(2.0 / e2) + (p.y / r[1]).abs().powf(2.0 / e2);
    xy.powf(e2 / e1) + (p.z / r[2]).abs().powf(2.0 / e1)
}

/// Parametric cell table for area-weighted superellipsoid sampling.
struct SuperellipsoidTable {
    radii: [f64; 3],
    e1: f64,
    e2: f64,
    n_eta: usize,
    n_omega: usize,
    cdf: Vec<f64>,
}

impl SuperellipsoidTable {
    const N_ETA: usize = 96;
    const N_OMEGA: usize = 192;

    fn new(radii: [f64; 3], e1: f64, e2: f64) -> Self {
        let (n_eta, n_omega) = (Self::N_ETA, Self::N_OMEGA);
        let mut table = Self {
            radii,
            e1,
            e2,
            n_eta,
            n_omega,
            cdf: Vec::with_capacity(n_eta * n_omega),
        };
        let mut acc = 0.0;
        for i in 0..n_eta {
            for j in 0..n_omega {
                let (e0, e1_) = table.eta_range(i);
                let (w0, w1) = table.omega_range(j);
                let a = table.eval(e0, w0);
                let b = table.eval(e0, w1);
                let c = table.eval(e1_, w1);
                let d = table.eval(e1_, w0);
                let area = 0.5 * (b - a).cross(&(c - a)).norm() + 0.5 * (c - a).cross(&(d - a)).norm();
                acc += area;
                table.cdf.push(acc);
            }
        }
        table
    }

    fn eta_range(&self, i: usize) -> (f64, f64) {
        let h = std::f64::consts::PI / self.n_eta as f64;
        let lo = -std::f64::consts::FRAC_PI_2 + h * i as f64;
        (lo, lo + h)
    }

    fn omega_range(&self, j: usize) -> (f64, f64) {
        let h = std::f64::consts::TAU / self.n_omega as f64;
        let lo = -std::f64::consts::PI + h * j as f64;
        (lo, lo + h)
    }

    fn eval(&self, eta: f64, omega: f64) -> Vec3 {
        let ce = spow(eta.cos(), self.e1);
        Vec3::new(
            self.radii[0] * ce * spow(omega.cos(), self.e2),
            self.radii[1] * ce * spow(omega.sin(), self.e2),
            self.radii[2] * spow(eta.sin(), self.e1),
        )
    }

    fn total_area(&self) -> f64 {
        *self.cdf.last().unwrap_or(&0.0)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let u = rng.random::<f64>() * self.total_area();
        let idx = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        let (i, j) = (idx / self.n_omega, idx % self.n_omega);
        let (e0, e1) = self.eta_range(i);
        let (w0, w1) = self.omega_range(j);
        let eta = e0 + (e1 - e0) * rng.random::<f64>();
        let omega = w0 + (w1 - w0) * rng.random::<f64>();
        self.eval(eta, omega)
    }
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Prepared sampler: caches the superellipsoid tables of a spec tree.
struct Sampler<'a> {
    spec: &'a ShapeSpec,
    iso: Isometry3<f64>,
    table: Option<SuperellipsoidTable>,
    children: Vec<Sampler<'a>>,
    child_cdf: Vec<f64>,
}

impl<'a> Sampler<'a> {
    fn new(spec: &'a ShapeSpec) -> Self {
        let table = match &spec.family {
            ShapeFamily::Superellipsoid { radii, e1, e2 } => Some(SuperellipsoidTable::new(*radii, *e1, *e2)),
            _ => None,
        };
        let children: Vec<Sampler<'a>> = match &spec.family {
            ShapeFamily::Composite { children } => children.iter().map(Sampler::new).collect(),
            _ => Vec::new(),
        };
        let mut acc = 0.0;
        let child_cdf = children
            .iter()
            .map(|c| {
                acc += c.area();
                acc
            })
            .collect();
        Self {
            spec,
            iso: spec.pose.isometry(),
            table,
            children,
            child_cdf,
        }
    }

    fn area(&self) -> f64 {
        match &self.table {
            Some(t) => t.total_area(),
            None => match &self.spec.family {
                ShapeFamily::Composite { .. } => self.child_cdf.last().copied().unwrap_or(0.0),
                _ => self.spec.surface_area(),
            },
        }
    }

    /// One candidate surface point in world coordinates, or `None` if it was
    /// rejected for lying inside a sibling of a composite.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Point3> {
        let local: Point3 = match &self.spec.family {
            ShapeFamily::Sphere { radius } => Point3::from(unit_vector(rng) * *radius),
            ShapeFamily::Box { size: [x, y, z] } => {
                let areas = [y * z, x * z, x * y];
                let total: f64 = areas.iter().sum();
                let mut u = rng.random::<f64>() * total;
                let mut axis = 2;
                for (a, area) in areas.iter().enumerate() {
                    if u < *area {
                        axis = a;
                        break;
                    }
                    u -= area;
                }
                let half = [x * 0.5, y * 0.5, z * 0.5];
                let mut p = [0.0; 3];
                for (a, v) in p.iter_mut().enumerate() {
                    *v = if a == axis {
                        if rng.random::<bool>() { half[a] } else { -half[a] }
                    } else {
                        (rng.random::<f64>() * 2.0 - 1.0) * half[a]
                    };
                }
                Point3::new(p[0], p[1], p[2])
            }
            ShapeFamily::Capsule {
                radius,
                half_length,
            } => {
                let cyl = 4.0 * std::f64::consts::PI * radius * half_length;
                let caps = 4.0 * std::f64::consts::PI * radius * radius;
                if rng.random::<f64>() * (cyl + caps) < cyl {
                    let phi = rng.random::<f64>() * std::f64::consts::TAU;
                    let z = (rng.random::<f64>() * 2.0 - 1.0) * half_length;
                    Point3::new(radius * phi.cos(), radius * phi.sin(), z)
                } else {
                    let d = unit_vector(rng) * *radius;
                    let offset = if d.z >= 0.0 { *half_length } else { -half_length };
                    Point3::new(d.x, d.y, d.z + offset)
                }
            }
            ShapeFamily::Superellipsoid { .. } => {
                Point3::from(self.table.as_ref().expect("table built for superellipsoid").sample(rng))
            }
            ShapeFamily::Composite { children } => {
                let total = self.area();
                let u = rng.random::<f64>() * total;
                let idx = self.child_cdf.partition_point(|&c| c < u).min(self.children.len() - 1);
                let p = self.children[idx].sample(rng)?;
                let scale = self.spec.characteristic_size();
                let buried = children
                    .iter()
                    .enumerate()
                    .any(|(j, c)| j != idx && c.contains(&p, 1e-9 * scale));
                if buried {
                    return None;
                }
                p
            }
        };
        Some(self.iso * local)
    }
}

impl ShapeSpec {
    /// A length on the order of the shape's extent, used to scale tolerances.
    fn characteristic_size(&self) -> f64 {
        match &self.family {
            ShapeFamily::Sphere { radius } => *radius,
            ShapeFamily::Box { size } => size.iter().cloned().fold(0.0, f64::max),
            ShapeFamily::Superellipsoid { radii, .. } => radii.iter().cloned().fold(0.0, f64::max),
            ShapeFamily::Capsule {
                radius,
                half_length,
            } => radius + half_length,
            ShapeFamily::Composite { children } => children
                .iter()
                .map(|c| c.characteristic_size())
                .fold(0.0, f64::max),
        }
    }
}

/// `n_points` surface samples of `spec`, deterministic in `seed`.
pub fn generate_shape(spec: &ShapeSpec, n_points: usize, seed: u64) -> Result<PointSet, ShapeError> {
    generate_shape_where(spec, n_points, seed, |_| true)
}

/// As [`generate_shape`] but keeps only samples accepted by `keep`
/// (e.g. the part of the surface above a support plane).
pub fn generate_shape_where<F>(spec: &ShapeSpec, n_points: usize, seed: u64, keep: F) -> Result<PointSet, ShapeError>
where
    F: Fn(&Point3) -> bool,
{
    if n_points == 0 {
        return Err(ShapeError::Parameter("n_points must be at least 1".into()));
    }
    spec.validate()?;
    let sampler = Sampler::new(spec);
    let mut rng = seeded_rng(seed);
    let max_attempts = 200 * n_points + 10_000;
    let mut points = Vec::with_capacity(n_points);
    let mut attempts = 0;
    while points.len() < n_points {
        if attempts >= max_attempts {
            return Err(ShapeError::Exhausted {
                wanted: n_points,
                attempts,
            });
        }
        attempts += 1;
        if let Some(p) = sampler.sample(&mut rng) {
            if keep(&p) {
                points.push(p);
            }
        }
    }
    Ok(PointSet::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sphere_point_on_surface() {
        let spec = ShapeSpec::sphere(0.1).with_pose(Pose::at(0.3, -0.2, 0.1));
        let ps = generate_shape(&spec, 1, 3).unwrap();
        assert_eq!(ps.len(), 1);
        let d = (ps.points[0] - Point3::new(0.3, -0.2, 0.1)).norm();
        assert!((d - 0.1).abs() < 1e-9);
    }

    #[test]
    fn box_face_counts_follow_area() {
        let (x, y, z) = (0.2, 0.1, 0.05);
        let ps = generate_shape(&ShapeSpec::cuboid(x, y, z), 10_000, 5).unwrap();
        let mut counts = [0usize; 3];
        for p in ps.iter() {
            let on = [
                (p.x.abs() - x / 2.0).abs() < 1e-12,
                (p.y.abs() - y / 2.0).abs() < 1e-12,
                (p.z.abs() - z / 2.0).abs() < 1e-12,
            ];
            let a = on.iter().position(|&b| b).expect("point on a face");
            counts[a] += 1;
        }
        let areas = [2.0 * y * z, 2.0 * x * z, 2.0 * x * y];
        let total: f64 = areas.iter().sum();
        for a in 0..3 {
            let expected = 10_000.0 * areas[a] / total;
            assert!(
                (counts[a] as f64 - expected).abs() / expected < 0.05,
                "axis {a}: {} vs {expected}",
                counts[a]
            );
        }
    }

    #[test]
    fn composite_of_disjoint_spheres() {
        let spec = ShapeSpec::composite(vec![
            ShapeSpec::sphere(0.05).with_pose(Pose::at(-0.1, 0.0, 0.0)),
            ShapeSpec::sphere(0.03).with_pose(Pose::at(0.1, 0.0, 0.0)),
        ]);
        let ps = generate_shape(&spec, 1000, 9).unwrap();
        for p in ps.iter() {
            let d1 = ((p - Point3::new(-0.1, 0.0, 0.0)).norm() - 0.05).abs();
            let d2 = ((p - Point3::new(0.1, 0.0, 0.0)).norm() - 0.03).abs();
            assert!(d1.min(d2) < 1e-9);
        }
    }

    #[test]
    fn overlapping_composite_drops_buried_points() {
        let spec = ShapeSpec::composite(vec![
            ShapeSpec::sphere(0.05),
            ShapeSpec::cuboid(0.3, 0.02, 0.02),
        ]);
        let ps = generate_shape(&spec, 2000, 1).unwrap();
        for p in ps.iter() {
            assert!(!spec.contains(p, 1e-7));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = ShapeSpec::superellipsoid([0.1, 0.08, 0.06], 0.6, 0.8);
        let a = generate_shape(&spec, 500, 42).unwrap();
        let b = generate_shape(&spec, 500, 42).unwrap();
        let c = generate_shape(&spec, 500, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn superellipsoid_points_on_surface() {
        let r = [0.1, 0.08, 0.06];
        let spec = ShapeSpec::superellipsoid(r, 0.5, 1.5);
        for p in generate_shape(&spec, 300, 2).unwrap().iter() {
            let f = superellipsoid_implicit(p, &r, 0.5, 1.5);
            assert!((f - 1.0).abs() < 1e-9, "{f}");
        }
    }

    #[test]
    fn superellipsoid_area_matches_sphere() {
        let a = ShapeSpec::superellipsoid([0.1; 3], 1.0, 1.0).surface_area();
        let exact = 4.0 * std::f64::consts::PI * 0.01;
        assert!((a - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn invalid_dimensions_rejected() {
        assert!(generate_shape(&ShapeSpec::sphere(-1.0), 10, 0).is_err());
        assert!(generate_shape(&ShapeSpec::cuboid(0.1, 0.0, 0.1), 10, 0).is_err());
        assert!(generate_shape(&ShapeSpec::composite(vec![]), 10, 0).is_err());
        assert!(generate_shape(&ShapeSpec::sphere(0.1), 0, 0).is_err());
    }

    #[test]
    fn capsule_points_on_surface() {
        let spec = ShapeSpec::capsule(0.03, 0.05).with_pose(Pose::default().rotated(90.0, 0.0, 0.0));
        for p in generate_shape(&spec, 400, 4).unwrap().iter() {
            let local = spec.pose.isometry().inverse_transform_point(p);
            let z = local.z.clamp(-0.05, 0.05);
            let d = (local.coords - Vec3::new(0.0, 0.0, z)).norm();
            assert!((d - 0.03).abs() < 1e-9);
        }
    }

    #[test]
    fn toml_round_trip() {
        let spec = ShapeSpec::composite(vec![
            ShapeSpec::sphere(0.05).with_pose(Pose::at(0.0, 0.0, 0.05)),
            ShapeSpec::cuboid(0.1, 0.1, 0.02),
        ]);
        let text = toml::to_string(&spec).unwrap();
        let back: ShapeSpec = toml::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
