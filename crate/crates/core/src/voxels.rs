//! World-aligned voxel grids, majority visibility labels, coverage and IoU.
//!
//! Cells are indexed `x + nx·(y + ny·z)`. A cell spans the half-open box
//! `[origin + i·edge, origin + (i+1)·edge)` on each axis.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point3, PointSet, Vec3};
use crate::visibility::VisibilityMask;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoxelError {
    #[error("point {index} at ({x}, {y}, {z}) lies outside the grid")]
    OutOfBounds { index: usize, x: f64, y: f64, z: f64 },
    #[error("grid geometry mismatch")]
    GeometryMismatch,
    #[error("coverage undefined: grid has no occupied cells")]
    NoOccupiedCells,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("malformed grid text: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub origin: Point3,
    pub edge: f64,
    pub dims: [usize; 3],
}

impl GridGeometry {
    pub fn new(origin: Point3, edge: f64, dims: [usize; 3]) -> Result<Self, VoxelError> {
        if !(edge > 0.0 && edge.is_finite()) {
            return Err(VoxelError::Parameter(format!("edge must be positive, got {edge}")));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(VoxelError::Parameter("grid dims must be at least 1".into()));
        }
        Ok(Self { origin, edge, dims })
    }

    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let y = (idx / self.dims[0]) % self.dims[1];
        let z = idx / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    /// Integer cell coordinates (possibly outside the grid).
    pub fn cell_of_unchecked(&self, p: &Point3) -> [i64; 3] {
        let d = (p - self.origin) / self.edge;
        [d.x.floor() as i64, d.y.floor() as i64, d.z.floor() as i64]
    }

    pub fn cell_of(&self, p: &Point3) -> Option<usize> {
        let c = self.cell_of_unchecked(p);
        if (0..3).all(|a| c[a] >= 0 && (c[a] as usize) < self.dims[a]) {
            Some(self.index([c[0] as usize, c[1] as usize, c[2] as usize]))
        } else {
            None
        }
    }

    pub fn cell_center(&self, idx: usize) -> Point3 {
        let c = self.coords(idx);
        self.origin + Vec3::new(c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5) * self.edge
    }

    pub fn max_corner(&self) -> Point3 {
        self.origin + Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.edge
    }

    pub fn same_as(&self, other: &GridGeometry) -> bool {
        self == other
    }
}

/// Nominal grid resolution: `dim` cells of `edge` meters per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSetting {
    pub dim: usize,
    pub edge: f64,
}

impl GridSetting {
    /// 40³ cells of 10 mm.
    pub const COARSE: GridSetting = GridSetting { dim: 40, edge: 0.010 };
    /// 80³ cells of 5 mm.
    pub const FINE: GridSetting = GridSetting { dim: 80, edge: 0.005 };

    pub fn from_dim(dim: usize) -> Result<Self, VoxelError> {
        match dim {
            40 => Ok(Self::COARSE),
            80 => Ok(Self::FINE),
            other => Err(VoxelError::Parameter(format!("grid must be 40 or 80, got {other}"))),
        }
    }

    /// Grid centered on the bounding box of `points` inflated by 20%. Each
    /// axis has at least `dim` cells and grows when the inflated box needs
    /// more.
    pub fn frame_for(&self, points: &PointSet) -> Result<GridGeometry, VoxelError> {
        let (lo, hi) = points
            .bounds()
            .ok_or_else(|| VoxelError::Parameter("cannot frame an empty point set".into()))?;
        let center = Point3::from((lo.coords + hi.coords) * 0.5);
        let extent = (hi - lo) * 1.2;
        let mut dims = [self.dim; 3];
        for a in 0..3 {
            let needed = (extent[a] / self.edge).ceil() as usize + 1;
            dims[a] = dims[a].max(needed);
        }
        let half = Vec3::new(dims[0] as f64, dims[1] as f64, dims[2] as f64) * (self.edge * 0.5);
        GridGeometry::new(center - half, self.edge, dims)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub geometry: GridGeometry,
    pub occupied: Vec<bool>,
    pub visible: Vec<bool>,
}

impl VoxelGrid {
    pub fn empty(geometry: GridGeometry) -> Self {
        let n = geometry.cell_count();
        Self {
            geometry,
            occupied: vec![false; n],
            visible: vec![false; n],
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.occupied.iter().enumerate().filter(|(_, &o)| o).map(|(i, _)| i)
    }

    /// Serialize in the voxel RLE text format (see `docs/formats.md`).
    pub fn to_rle(&self) -> String {
        let states: Vec<u8> = self
            .occupied
            .iter()
            .zip(&self.visible)
            .map(|(&o, &v)| match (o, v) {
                (false, _) => 0,
                (true, false) => 1,
                (true, true) => 2,
            })
            .collect();
        let mut out = rle_header("voxel-rle", &self.geometry);
        write_runs(&mut out, &states, |s| s.to_string());
        out
    }

    pub fn from_rle(text: &str) -> Result<Self, VoxelError> {
        let (geometry, tokens) = parse_rle_header(text, "voxel-rle")?;
        let states: Vec<u8> = parse_runs(&tokens, geometry.cell_count(), |s| {
            s.parse::<u8>().ok().filter(|v| *v <= 2)
        })?;
        Ok(Self {
            occupied: states.iter().map(|&s| s > 0).collect(),
            visible: states.iter().map(|&s| s == 2).collect(),
            geometry,
        })
    }
}

pub(crate) fn rle_header(magic: &str, g: &GridGeometry) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{magic} 1");
    let _ = writeln!(out, "dims {} {} {}", g.dims[0], g.dims[1], g.dims[2]);
    let _ = writeln!(out, "origin {:?} {:?} {:?}", g.origin.x, g.origin.y, g.origin.z);
    let _ = writeln!(out, "edge {:?}", g.edge);
    out
}

pub(crate) fn write_runs<T: PartialEq + Copy>(out: &mut String, values: &[T], fmt: impl Fn(T) -> String) {
    let mut first = true;
    let mut i = 0;
    while i < values.len() {
        let v = values[i];
        let mut j = i + 1;
        while j < values.len() && values[j] == v {
            j += 1;
        }
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{}x{}", fmt(v), j - i);
        i = j;
    }
    out.push('\n');
}

pub(crate) fn parse_rle_header<'a>(text: &'a str, magic: &str) -> Result<(GridGeometry, Vec<&'a str>), VoxelError> {
    let bad = |m: &str| VoxelError::Parse(m.to_string());
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| bad("empty input"))?;
    if head.trim() != format!("{magic} 1") {
        return Err(bad(&format!("expected header '{magic} 1', got '{head}'")));
    }
    let mut field = |name: &str, count: usize| -> Result<Vec<&'a str>, VoxelError> {
        let line = lines.next().ok_or_else(|| bad(&format!("missing {name} line")))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(name) {
            return Err(bad(&format!("expected '{name}' line, got '{line}'")));
        }
        let vals: Vec<&str> = parts.collect();
        if vals.len() != count {
            return Err(bad(&format!("'{name}' needs {count} values")));
        }
        Ok(vals)
    };
    let dims = field("dims", 3)?;
    let origin = field("origin", 3)?;
    let edge = field("edge", 1)?;
    let pu = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad integer '{s}'")));
    let pf = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number '{s}'")));
    let geometry = GridGeometry::new(
        Point3::new(pf(origin[0])?, pf(origin[1])?, pf(origin[2])?),
        pf(edge[0])?,
        [pu(dims[0])?, pu(dims[1])?, pu(dims[2])?],
    )?;
    let tokens = lines.flat_map(|l| l.split_whitespace()).collect();
    Ok((geometry, tokens))
}

pub(crate) fn parse_runs<T: Copy>(tokens: &[&str], expected: usize, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, VoxelError> {
    let mut out = Vec::with_capacity(expected);
    for tok in tokens {
        let (v, n) = tok
            .rsplit_once('x')
            .ok_or_else(|| VoxelError::Parse(format!("bad run '{tok}'")))?;
        let value = parse(v).ok_or_else(|| VoxelError::Parse(format!("bad value in run '{tok}'")))?;
        let n: usize = n.parse().map_err(|_| VoxelError::Parse(format!("bad count in run '{tok}'")))?;
        out.extend(std::iter::repeat_n(value, n));
    }
    if out.len() != expected {
        return Err(VoxelError::Parse(format!("runs cover {} cells, expected {expected}", out.len())));
    }
    Ok(out)
}

/// Occupancy plus majority visibility labels.
///
/// A cell is visible when its visible points are at least as many as its
/// hidden points.
pub fn voxelize(points: &PointSet, mask: &VisibilityMask, geometry: &GridGeometry) -> Result<VoxelGrid, VoxelError> {
    if mask.len() != points.len() {
        return Err(VoxelError::Parameter(format!(
            "mask has {} flags for {} points",
            mask.len(),
            points.len()
        )));
    }
    for (index, p) in points.iter().enumerate() {
        if geometry.cell_of(p).is_none() {
            return Err(VoxelError::OutOfBounds {
                index,
                x: p.x,
                y: p.y,
                z: p.z,
            });
        }
    }
    Ok(voxelize_clipped(points, mask, geometry).0)
}

/// As [`voxelize`], but points outside the grid are skipped; returns the
/// grid and the number of skipped points.
pub fn voxelize_clipped(points: &PointSet, mask: &VisibilityMask, geometry: &GridGeometry) -> (VoxelGrid, usize) {
    let n = geometry.cell_count();
    let mut balance = vec![0i32; n];
    let mut grid = VoxelGrid::empty(geometry.clone());
    let mut clipped = 0;
    for (p, &vis) in points.iter().zip(&mask.flags) {
        match geometry.cell_of(p) {
            Some(c) => {
                grid.occupied[c] = true;
                balance[c] += if vis { 1 } else { -1 };
            }
            None => clipped += 1,
        }
    }
    for c in 0..n {
        grid.visible[c] = grid.occupied[c] && balance[c] >= 0;
    }
    (grid, clipped)
}

/// Occupancy only.
pub fn occupancy(points: &PointSet, geometry: &GridGeometry) -> VoxelGrid {
    voxelize_clipped(points, &VisibilityMask::all(points.len(), false), geometry).0
}

/// Union of visible cells accumulated over past views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageState {
    pub geometry: GridGeometry,
    pub covered: Vec<bool>,
}

impl CoverageState {
    pub fn new(geometry: GridGeometry) -> Self {
        let n = geometry.cell_count();
        Self {
            geometry,
            covered: vec![false; n],
        }
    }

    /// Add the visible cells of `grid`.
    pub fn absorb(&mut self, grid: &VoxelGrid) -> Result<(), VoxelError> {
        if !self.geometry.same_as(&grid.geometry) {
            return Err(VoxelError::GeometryMismatch);
        }
        for (c, &v) in self.covered.iter_mut().zip(&grid.visible) {
            *c |= v;
        }
        Ok(())
    }

    /// Occupied cells of `grid` that are visible there but not yet covered.
    pub fn new_gain(&self, grid: &VoxelGrid) -> Result<usize, VoxelError> {
        if !self.geometry.same_as(&grid.geometry) {
            return Err(VoxelError::GeometryMismatch);
        }
        Ok(grid
            .visible
            .iter()
            .zip(&self.covered)
            .filter(|(&v, &c)| v && !c)
            .count())
    }
}

/// `|covered ∩ occupied| / |occupied|`.
pub fn coverage_fraction(state: &CoverageState, grid: &VoxelGrid) -> Result<f64, VoxelError> {
    if !state.geometry.same_as(&grid.geometry) {
        return Err(VoxelError::GeometryMismatch);
    }
    let occupied = grid.occupied_count();
    if occupied == 0 {
        return Err(VoxelError::NoOccupiedCells);
    }
    let hit = grid
        .occupied
        .iter()
        .zip(&state.covered)
        .filter(|(&o, &c)| o && c)
        .count();
    Ok(hit as f64 / occupied as f64)
}

/// Intersection over union of occupancy; 1.0 when both grids are empty.
pub fn iou(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64, VoxelError> {
    if !a.geometry.same_as(&b.geometry) {
        return Err(VoxelError::GeometryMismatch);
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.occupied.iter().zip(&b.occupied) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}
