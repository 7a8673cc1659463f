//! Multi-view voting occupancy and per-voxel entropy statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::voxels::{GridGeometry, VoxelGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UncertaintyError {
    #[error("voting needs at least one grid")]
    NoGrids,
    #[error("grid {index} does not share the first grid's geometry")]
    GeometryMismatch { index: usize },
    #[error("restriction selects no cells")]
    EmptyRestriction,
    #[error("restriction has {got} flags for {expected} cells")]
    RestrictionSize { got: usize, expected: usize },
}

/// Bernoulli entropy in bits, with `H(0) = H(1) = 0`.
pub fn bernoulli_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// Per-cell occupancy frequency across several reconstructions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbGrid {
    pub geometry: GridGeometry,
    pub p: Vec<f64>,
    pub votes: Vec<usize>,
    pub measurements: usize,
}

pub fn voting_occupancy(grids: &[VoxelGrid]) -> Result<ProbGrid, UncertaintyError> {
    let first = grids.first().ok_or(UncertaintyError::NoGrids)?;
    let geometry = first.geometry.clone();
    let mut votes = vec![0usize; geometry.cell_count()];
    for (index, g) in grids.iter().enumerate() {
        if !g.geometry.same_as(&geometry) {
            return Err(UncertaintyError::GeometryMismatch { index });
        }
        for (v, &o) in votes.iter_mut().zip(&g.occupied) {
            *v += o as usize;
        }
    }
    let n = grids.len();
    Ok(ProbGrid {
        p: votes.iter().map(|&v| v as f64 / n as f64).collect(),
        votes,
        measurements: n,
        geometry,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyGrid {
    pub geometry: GridGeometry,
    /// Bits per cell.
    pub h: Vec<f64>,
    /// Cells with at least one vote.
    pub occupied: Vec<bool>,
}

pub fn entropy_map(pg: &ProbGrid) -> EntropyGrid {
    EntropyGrid {
        geometry: pg.geometry.clone(),
        h: pg.p.iter().map(|&p| bernoulli_entropy(p)).collect(),
        occupied: pg.votes.iter().map(|&v| v > 0).collect(),
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyStats {
    pub mean: f64,
    pub stddev: f64,
    pub cells: usize,
}

/// Statistics over occupied cells, or over `restrict` when given.
pub fn entropy_stats(eg: &EntropyGrid, restrict: Option<&[bool]>) -> Result<EntropyStats, UncertaintyError> {
    let cells = match restrict {
        Some(r) => {
            if r.len() != eg.h.len() {
                return Err(UncertaintyError::RestrictionSize {
                    got: r.len(),
                    expected: eg.h.len(),
                });
            }
            r
        }
        None => &eg.occupied,
    };
    let values: Vec<f64> = eg.h.iter().zip(cells).filter(|(_, &c)| c).map(|(&h, _)| h).collect();
    if values.is_empty() {
        return Err(UncertaintyError::EmptyRestriction);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / n;
    Ok(EntropyStats {
        mean,
        stddev: var.sqrt(),
        cells: values.len(),
    })
}

/// How per-view visible cells combine into the "visible" scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VisibleScope {
    /// Visible from at least one view.
    #[default]
    Union,
    /// Visible from every view.
    Intersection,
}

pub fn visible_cells(grids: &[VoxelGrid], scope: VisibleScope) -> Vec<bool> {
    let Some(first) = grids.first() else {
        return Vec::new();
    };
    let mut out = first.visible.clone();
    for g in &grids[1..] {
        for (o, &v) in out.iter_mut().zip(&g.visible) {
            *o = match scope {
                VisibleScope::Union => *o || v,
                VisibleScope::Intersection => *o && v,
            };
        }
    }
    out
}

/// One CSV row of an entropy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub grid_dim: usize,
    pub n_views: usize,
    pub scope: String,
    pub mean: f64,
    pub stddev: f64,
}
