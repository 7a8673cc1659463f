//! Comparison planners: visibility maximization on the true points, and
//! information maximization over a log-odds occupancy belief fed by
//! simulated depth scans.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point3, PointSet, Vec3, Viewpoint, ViewingSpace};
use crate::planner::{run_active_hof, run_loop, Observation, PlanError, PlanTrace, PlannerConfig, Policy};
use crate::predictor::{OraclePredictor, Scene, SceneBook};
use crate::uncertainty::bernoulli_entropy;
use crate::visibility::default_occluder_radius;
use crate::voxels::{parse_rle_header, parse_runs, rle_header, write_runs, GridGeometry, VoxelError};

pub const DEFAULT_RAYS: usize = 64 * 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("belief and scan grids differ")]
    GeometryMismatch,
    #[error(transparent)]
    Voxel(#[from] VoxelError),
}

impl From<BaselineError> for PlanError {
    fn from(e: BaselineError) -> Self {
        PlanError::Config(e.to_string())
    }
}

/// Inverse sensor model in log-odds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub l_occ: f64,
    pub l_free: f64,
    /// Beliefs are clamped to `[-clamp, clamp]`.
    pub clamp: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        let l = (0.7f64 / 0.3).ln();
        Self {
            l_occ: l,
            l_free: -l,
            clamp: 3.5,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(self.l_occ > 0.0 && self.l_free < 0.0 && self.clamp > 0.0) {
            return Err(BaselineError::Parameter(format!(
                "sensor model needs l_occ > 0 > l_free and clamp > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyBelief {
    pub geometry: GridGeometry,
    pub logodds: Vec<f64>,
}

impl OccupancyBelief {
    pub fn new(geometry: GridGeometry) -> Self {
        let n = geometry.cell_count();
        Self {
            geometry,
            logodds: vec![0.0; n],
        }
    }

    pub fn probability(&self, cell: usize) -> f64 {
        1.0 / (1.0 + (-self.logodds[cell]).exp())
    }

    /// Log-odds RLE with six decimals (see `docs/formats.md`).
    pub fn to_rle(&self) -> String {
        let values: Vec<String> = self.logodds.iter().map(|l| format!("{l:.6}")).collect();
        let refs: Vec<&str> = values.iter().map(String::as_str).collect();
        let mut out = rle_header("belief-rle", &self.geometry);
        write_runs(&mut out, &refs, |s| s.to_string());
        out
    }

    pub fn from_rle(text: &str) -> Result<Self, BaselineError> {
        let (geometry, tokens) = parse_rle_header(text, "belief-rle")?;
        let logodds = parse_runs(&tokens, geometry.cell_count(), |s| {
            s.parse::<f64>().ok().filter(|v| v.is_finite())
        })?;
        Ok(Self { geometry, logodds })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRay {
    /// World-frame unit direction.
    pub direction: Vec3,
    /// Distance along the ray to the first return.
    pub hit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthScan {
    pub origin: Point3,
    pub max_range: f64,
    pub rays: Vec<DepthRay>,
}

/// World directions of a square `side × side` bundle through pixel centers;
/// `rays` must be a perfect square.
pub fn ray_directions(view: &Viewpoint, rays: usize) -> Result<Vec<Vec3>, BaselineError> {
    let side = bundle_side(rays)?;
    let t = (view.fov_deg.to_radians() * 0.5).tan();
    let pitch = 2.0 * t / side as f64;
    let mut out = Vec::with_capacity(rays);
    for j in 0..side {
        for i in 0..side {
            let cam = Vec3::new(-t + (i as f64 + 0.5) * pitch, -t + (j as f64 + 0.5) * pitch, 1.0);
            out.push((view.rotation * cam).normalize());
        }
    }
    Ok(out)
}

fn bundle_side(rays: usize) -> Result<usize, BaselineError> {
    let side = (rays as f64).sqrt().round() as usize;
    if rays == 0 || side * side != rays {
        return Err(BaselineError::Parameter(format!(
            "ray count must be a positive perfect square, got {rays}"
        )));
    }
    Ok(side)
}

/// Casts the bundle against the points: each ray returns the nearest point
/// (by distance along the ray) lying within `occluder_radius` of it.
pub fn simulate_depth(
    points: &PointSet,
    view: &Viewpoint,
    rays: usize,
    occluder_radius: f64,
) -> Result<DepthScan, BaselineError> {
    if !(occluder_radius > 0.0 && occluder_radius.is_finite()) {
        return Err(BaselineError::Parameter(format!(
            "occluder radius must be positive, got {occluder_radius}"
        )));
    }
    let side = bundle_side(rays)?;
    let dirs = ray_directions(view, rays)?;
    let cam_dirs: Vec<Vec3> = dirs.iter().map(|d| view.rotation.transpose() * d).collect();
    let t = (view.fov_deg.to_radians() * 0.5).tan();
    let pitch = 2.0 * t / side as f64;
    let mut best = vec![f64::INFINITY; rays];
    for p in points.iter() {
        let c = view.to_camera(p);
        if c.z <= 0.0 {
            continue;
        }
        // Window of pixels whose rays can pass within the radius.
        let reach = occluder_radius / c.z * (1.0 + (c.x * c.x + c.y * c.y) / (c.z * c.z)).sqrt() + pitch;
        let (a, b) = (c.x / c.z, c.y / c.z);
        let lo = |v: f64| (((v - reach + t) / pitch).floor().max(0.0)) as usize;
        let hi = |v: f64| ((((v + reach + t) / pitch).floor()) as i64).min(side as i64 - 1);
        let (i_hi, j_hi) = (hi(a), hi(b));
        if i_hi < 0 || j_hi < 0 {
            continue;
        }
        for j in lo(b)..=(j_hi as usize) {
            for i in lo(a)..=(i_hi as usize) {
                let k = j * side + i;
                let d = &cam_dirs[k];
                let along = c.dot(d);
                if along <= 0.0 || along > view.max_range {
                    continue;
                }
                if (c - d * along).norm() <= occluder_radius && along < best[k] {
                    best[k] = along;
                }
            }
        }
    }
    Ok(DepthScan {
        origin: view.center,
        max_range: view.max_range,
        rays: dirs
            .into_iter()
            .zip(best)
            .map(|(direction, b)| DepthRay {
                direction,
                hit: b.is_finite().then_some(b),
            })
            .collect(),
    })
}

/// A cell crossed by a ray, with the entry and exit distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub cell: usize,
    pub t_in: f64,
    pub t_out: f64,
}

/// Cells crossed by the segment `origin + t·dir`, `t ∈ [0, t_max]`, in
/// order (Amanatides–Woo traversal). `dir` need not be normalized.
pub fn traverse(geometry: &GridGeometry, origin: &Point3, dir: &Vec3, t_max: f64) -> Vec<Crossing> {
    let lo = geometry.origin;
    let hi = geometry.max_corner();
    let (mut t0, mut t1) = (0.0f64, t_max);
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a] < lo[a] || origin[a] >= hi[a] {
                return Vec::new();
            }
        } else {
            let ta = (lo[a] - origin[a]) / dir[a];
            let tb = (hi[a] - origin[a]) / dir[a];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    if !(t0 < t1) {
        return Vec::new();
    }
    let mut cell = [0i64; 3];
    let mut step = [0i64; 3];
    let mut next = [f64::INFINITY; 3];
    let mut delta = [f64::INFINITY; 3];
    for a in 0..3 {
        let probe = origin[a] + dir[a] * (t0 + (t1 - t0) * 1e-9);
        let c = ((probe - lo[a]) / geometry.edge).floor() as i64;
        cell[a] = c.clamp(0, geometry.dims[a] as i64 - 1);
        if dir[a] > 0.0 {
            step[a] = 1;
            next[a] = (lo[a] + (cell[a] + 1) as f64 * geometry.edge - origin[a]) / dir[a];
            delta[a] = geometry.edge / dir[a];
        } else if dir[a] < 0.0 {
            step[a] = -1;
            next[a] = (lo[a] + cell[a] as f64 * geometry.edge - origin[a]) / dir[a];
            delta[a] = -geometry.edge / dir[a];
        }
    }
    let mut out = Vec::new();
    let mut t = t0;
    loop {
        let axis = if next[0] <= next[1] && next[0] <= next[2] {
            0
        } else if next[1] <= next[2] {
            1
        } else {
            2
        };
        let t_out = next[axis].min(t1);
        if t_out > t {
            let c = [cell[0] as usize, cell[1] as usize, cell[2] as usize];
            out.push(Crossing {
                cell: geometry.index(c),
                t_in: t,
                t_out,
            });
        }
        if next[axis] >= t1 {
            break;
        }
        t = next[axis];
        cell[axis] += step[axis];
        if cell[axis] < 0 || cell[axis] >= geometry.dims[axis] as i64 {
            break;
        }
        next[axis] += delta[axis];
    }
    out
}

/// Applies one scan. Each cell is updated at most once per scan: `l_occ`
/// if any ray ends in it, otherwise `l_free` if any ray passes through.
pub fn log_odds_update(belief: &mut OccupancyBelief, scan: &DepthScan, model: &SensorModel) -> Result<(), BaselineError> {
    model.validate()?;
    let (hit, free) = scan_cells(&belief.geometry, scan);
    for &c in &free {
        if !hit.contains(&c) {
            belief.logodds[c] = (belief.logodds[c] + model.l_free).max(-model.clamp);
        }
    }
    for &c in &hit {
        belief.logodds[c] = (belief.logodds[c] + model.l_occ).min(model.clamp);
    }
    Ok(())
}

fn scan_cells(geometry: &GridGeometry, scan: &DepthScan) -> (HashSet<usize>, HashSet<usize>) {
    let mut hit = HashSet::new();
    let mut free = HashSet::new();
    for ray in &scan.rays {
        let end = ray.hit.unwrap_or(scan.max_range);
        for x in traverse(geometry, &scan.origin, &ray.direction, end) {
            if ray.hit.is_some() && x.t_out >= end {
                hit.insert(x.cell);
            } else {
                free.insert(x.cell);
            }
        }
    }
    (hit, free)
}

/// Summed entropy (bits) of the distinct cells the bundle would reach. A ray
/// stops after entering a cell the belief already thinks occupied.
pub fn expected_info_gain(belief: &OccupancyBelief, view: &Viewpoint, rays: usize) -> Result<f64, BaselineError> {
    let mut seen = HashSet::new();
    for d in ray_directions(view, rays)? {
        for x in traverse(&belief.geometry, &view.center, &d, view.max_range) {
            seen.insert(x.cell);
            if belief.logodds[x.cell] > 0.0 {
                break;
            }
        }
    }
    let mut cells: Vec<usize> = seen.into_iter().collect();
    cells.sort_unstable();
    Ok(cells.iter().map(|&c| bernoulli_entropy(belief.probability(c))).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoMaxParams {
    pub rays: usize,
    pub model: SensorModel,
}

impl Default for InfoMaxParams {
    fn default() -> Self {
        Self {
            rays: DEFAULT_RAYS,
            model: SensorModel::default(),
        }
    }
}

struct InfoMaxPolicy<'a> {
    points: &'a PointSet,
    occluder: f64,
    params: InfoMaxParams,
    belief: OccupancyBelief,
}

impl Policy for InfoMaxPolicy<'_> {
    fn observe(&mut self, _step: usize, view: &Viewpoint) -> Result<Observation, PlanError> {
        let scan = simulate_depth(self.points, view, self.params.rays, self.occluder)?;
        log_odds_update(&mut self.belief, &scan, &self.params.model)?;
        Ok(Observation::default())
    }

    fn score(&self, candidates: &[Viewpoint]) -> Result<Vec<f64>, PlanError> {
        candidates
            .par_iter()
            .map(|c| expected_info_gain(&self.belief, c, self.params.rays).map_err(PlanError::from))
            .collect()
    }
}

/// Information-driven baseline on the scene's ground-truth voxel frame.
pub fn run_info_max(
    scene: &Scene,
    config: &PlannerConfig,
    space: &ViewingSpace,
    params: &InfoMaxParams,
) -> Result<PlanTrace, PlanError> {
    params.model.validate()?;
    bundle_side(params.rays)?;
    let frame = config.grid.frame_for(&scene.ground_truth)?;
    let mut policy = InfoMaxPolicy {
        points: &scene.ground_truth,
        occluder: default_occluder_radius(&scene.ground_truth),
        params: *params,
        belief: OccupancyBelief::new(frame),
    };
    run_loop("info_max", scene, &mut policy, config, space)
}

/// The prediction-guided planner fed the exact ground truth at every step.
pub fn run_vis_max_gt(scene: &Scene, config: &PlannerConfig, space: &ViewingSpace) -> Result<PlanTrace, PlanError> {
    let oracle = OraclePredictor::new(SceneBook::from_iter([scene.clone()]));
    let mut trace = run_active_hof(scene, &oracle, config, space)?;
    trace.method = "vis_max_gt".into();
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{generate_shape, ShapeSpec};
    use approx::assert_abs_diff_eq;

    fn unit_grid(n: usize) -> GridGeometry {
        GridGeometry::new(Point3::origin(), 1.0, [n, n, n]).unwrap()
    }

    /// Every cell whose box the segment crosses with positive length.
    fn brute_cells(g: &GridGeometry, o: &Point3, d: &Vec3, t_max: f64) -> HashSet<usize> {
        let mut out = HashSet::new();
        for idx in 0..g.cell_count() {
            let c = g.coords(idx);
            let lo: Vec<f64> = (0..3).map(|a| g.origin[a] + c[a] as f64 * g.edge).collect();
            let (mut t0, mut t1) = (0.0f64, t_max);
            let mut ok = true;
            for a in 0..3 {
                if d[a] == 0.0 {
                    ok &= o[a] >= lo[a] && o[a] < lo[a] + g.edge;
                } else {
                    let ta = (lo[a] - o[a]) / d[a];
                    let tb = (lo[a] + g.edge - o[a]) / d[a];
                    t0 = t0.max(ta.min(tb));
                    t1 = t1.min(ta.max(tb));
                }
            }
            if ok && t1 - t0 > 1e-9 {
                out.insert(idx);
            }
        }
        out
    }

    #[test]
    fn traversal_matches_brute_force() {
        use rand::Rng;
        let g = unit_grid(6);
        let mut rng = crate::rng::seeded_rng(5);
        for _ in 0..300 {
            let o = Point3::new(rng.random_range(-2.0..8.0), rng.random_range(-2.0..8.0), rng.random_range(-2.0..8.0));
            let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
            let t_max = rng.random_range(0.5..15.0);
            let got = traverse(&g, &o, &d, t_max);
            let cells: HashSet<usize> = got.iter().map(|x| x.cell).collect();
            assert_eq!(cells.len(), got.len(), "cells repeat");
            assert_eq!(cells, brute_cells(&g, &o, &d, t_max));
            for w in got.windows(2) {
                assert!((w[0].t_out - w[1].t_in).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn traversal_axis_aligned() {
        let g = unit_grid(4);
        let got = traverse(&g, &Point3::new(-1.0, 0.5, 0.5), &Vec3::x(), 10.0);
        let cells: Vec<usize> = got.iter().map(|x| x.cell).collect();
        assert_eq!(cells, vec![0, 1, 2, 3]);
        assert_abs_diff_eq!(got[0].t_in, 1.0);
        assert_abs_diff_eq!(got[3].t_out, 5.0);
    }

    fn view_down_x(d: f64) -> Viewpoint {
        Viewpoint::look_at(Point3::new(-d, 0.0, 0.0), Point3::origin(), Vec3::z(), 60.0, 2.0)
    }

    #[test]
    fn single_point_on_axis() {
        let ps = PointSet::new(vec![Point3::new(0.0, 0.0, 0.0)]);
        let scan = simulate_depth(&ps, &view_down_x(0.5), 1, 0.01).unwrap();
        let hit = scan.rays[0].hit.unwrap();
        assert!((hit - 0.5).abs() <= 0.01);
        let off = PointSet::new(vec![Point3::new(0.0, 0.3, 0.0)]);
        assert_eq!(simulate_depth(&off, &view_down_x(0.5), 1, 0.01).unwrap().rays[0].hit, None);
        assert!(simulate_depth(&ps, &view_down_x(0.5), 10, 0.01).is_err());
    }

    #[test]
    fn depth_matches_ray_sphere_intersection() {
        let r = 0.1;
        let ps = generate_shape(&ShapeSpec::sphere(r), 20000, 3).unwrap();
        let occ = default_occluder_radius(&ps);
        let view = view_down_x(0.5);
        let scan = simulate_depth(&ps, &view, 32 * 32, occ).unwrap();
        let mut checked = 0;
        for ray in &scan.rays {
            // |o + t d|² = r² with o = (-0.5, 0, 0).
            let o = view.center.coords;
            let b = o.dot(&ray.direction);
            let disc = b * b - (o.norm_squared() - r * r);
            // Incidence under 45°, where the tolerance band along the ray
            // is at most one radius deep.
            if disc > r * r * (1.0 - 0.7 * 0.7) {
                let t = -b - disc.sqrt();
                let hit = ray.hit.expect("ray through the sphere interior must hit");
                assert!((hit - t).abs() <= occ, "hit {hit} vs analytic {t}");
                checked += 1;
            } else if (o.norm_squared() - b * b).sqrt() > r + 1.5 * occ {
                assert_eq!(ray.hit, None);
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn sensor_updates() {
        let g = unit_grid(4);
        let model = SensorModel::default();
        let mut belief = OccupancyBelief::new(g.clone());
        let scan = DepthScan {
            origin: Point3::new(-1.0, 0.5, 0.5),
            max_range: 10.0,
            rays: vec![DepthRay {
                direction: Vec3::x(),
                hit: Some(3.5),
            }],
        };
        log_odds_update(&mut belief, &scan, &model).unwrap();
        // Cells 0 and 1 are passed, cell 2 holds the return, cell 3 is behind it.
        assert_abs_diff_eq!(belief.probability(2), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(belief.probability(0), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(belief.probability(1), 0.3, epsilon = 1e-12);
        assert_eq!(belief.logodds[3], 0.0);
        log_odds_update(&mut belief, &scan, &model).unwrap();
        let pass = DepthScan {
            rays: vec![DepthRay {
                direction: Vec3::x(),
                hit: None,
            }],
            ..scan.clone()
        };
        log_odds_update(&mut belief, &pass, &model).unwrap();
        let l = 2.0 * model.l_occ + model.l_free;
        // Sequential Bayes: odds multiply, 0.7/0.3 · 0.7/0.3 · 0.3/0.7.
        let odds = (0.7 / 0.3) * (0.7 / 0.3) * (0.3 / 0.7);
        assert_abs_diff_eq!(belief.logodds[2], l, epsilon = 1e-12);
        assert_abs_diff_eq!(belief.probability(2), odds / (1.0 + odds), epsilon = 1e-12);
    }

    #[test]
    fn update_order_within_scan_is_irrelevant() {
        let g = GridGeometry::new(Point3::new(-0.2, -0.2, -0.2), 0.02, [20, 20, 20]).unwrap();
        let ps = generate_shape(&ShapeSpec::sphere(0.1), 3000, 1).unwrap();
        let view = view_down_x(0.5);
        let scan = simulate_depth(&ps, &view, 16 * 16, 0.01).unwrap();
        let mut rev = scan.clone();
        rev.rays.reverse();
        let model = SensorModel::default();
        let mut a = OccupancyBelief::new(g.clone());
        let mut b = OccupancyBelief::new(g);
        log_odds_update(&mut a, &scan, &model).unwrap();
        log_odds_update(&mut b, &rev, &model).unwrap();
        assert_eq!(a, b);
        assert!(a.logodds.iter().all(|l| l.abs() <= model.clamp));
    }

    #[test]
    fn gain_counts_fresh_cells_and_vanishes_at_certainty() {
        let g = GridGeometry::new(Point3::new(-0.2, -0.2, -0.2), 0.02, [20, 20, 20]).unwrap();
        let view = view_down_x(0.5);
        let mut belief = OccupancyBelief::new(g.clone());
        let cells: HashSet<usize> = ray_directions(&view, 64)
            .unwrap()
            .iter()
            .flat_map(|d| traverse(&g, &view.center, d, view.max_range))
            .map(|x| x.cell)
            .collect();
        assert_abs_diff_eq!(expected_info_gain(&belief, &view, 64).unwrap(), cells.len() as f64, epsilon = 1e-9);
        belief.logodds.iter_mut().for_each(|l| *l = -1e3);
        assert!(expected_info_gain(&belief, &view, 64).unwrap() < 1e-9);
    }

    #[test]
    fn gain_recount_on_mixed_belief() {
        use rand::Rng;
        let g = GridGeometry::new(Point3::new(-0.2, -0.2, -0.2), 0.04, [10, 10, 10]).unwrap();
        let mut belief = OccupancyBelief::new(g.clone());
        let mut rng = crate::rng::seeded_rng(9);
        belief.logodds.iter_mut().for_each(|l| *l = rng.random_range(-3.0..-0.1));
        let view = view_down_x(0.5);
        // No cell is believed occupied, so every ray runs its full length.
        let mut cells = HashSet::new();
        for d in ray_directions(&view, 100).unwrap() {
            for x in traverse(&g, &view.center, &d, view.max_range) {
                cells.insert(x.cell);
            }
        }
        let direct: f64 = cells
            .iter()
            .map(|&c| {
                let p = 1.0 / (1.0 + (-belief.logodds[c]).exp());
                -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
            })
            .sum();
        assert_abs_diff_eq!(expected_info_gain(&belief, &view, 100).unwrap(), direct, epsilon = 1e-9);
    }

    #[test]
    fn belief_rle_round_trip() {
        let g = GridGeometry::new(Point3::new(0.0, 0.0, 0.0), 0.5, [3, 1, 1]).unwrap();
        let mut b = OccupancyBelief::new(g);
        b.logodds = vec![0.0, 0.0, -0.8472978603872037];
        let text = b.to_rle();
        assert_eq!(text, "belief-rle 1\ndims 3 1 1\norigin 0.0 0.0 0.0\nedge 0.5\n0.000000x2 -0.847298x1\n");
        let back = OccupancyBelief::from_rle(&text).unwrap();
        assert_eq!(back.logodds, vec![0.0, 0.0, -0.847298]);
    }
}
