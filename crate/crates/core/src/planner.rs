//! The prediction-guided next-best-view loop and its trace records.
//!
//! Each step: take the view, ask the predictor for a full shape (every step
//! in dynamic mode, only the first in static mode), find which predicted
//! voxels the current view sees, add them to the covered set, then score a
//! fresh candidate sample by how many uncovered predicted voxels each would
//! reveal and move to the best one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{epsilon_net_size, PointSet, Viewpoint, ViewingSpace};
use crate::predictor::{Predictor, PredictorError, PredictorRequest, Scene, ViewRecord, DEFAULT_M};
use crate::rng::{stream, tag};
use crate::visibility::{hpr_visible, HprParams, RaycastOracle, VisibilityError};
use crate::voxels::{
    coverage_fraction, iou, occupancy, voxelize, voxelize_clipped, CoverageState, GridGeometry, GridSetting, VoxelError,
    VoxelGrid,
};

/// Candidate density used for the default candidate count.
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_MAX_VIEWS: usize = 20;
/// Flip-radius multiplier tuned for 4096-point objects seen from half a
/// metre; the operator default misses most of a concave slot at this range.
pub const PLANNER_GAMMA: f64 = 100.0;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid planner config: {0}")]
    Config(String),
    #[error("predictor failed at step {step}: {source}")]
    Predictor {
        step: usize,
        #[source]
        source: PredictorError,
        trace: Box<PlanTrace>,
    },
    #[error(transparent)]
    Visibility(#[from] VisibilityError),
    #[error(transparent)]
    Voxel(#[from] VoxelError),
    #[error("replay diverged at step {step}: {detail}")]
    Determinism { step: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Plan against the first-view prediction only.
    Static,
    /// Re-predict after every view.
    Dynamic,
}

/// Coverage that decides termination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMetric {
    /// Union of ground-truth voxels visible from the visited views.
    GroundTruth,
    /// The planner's own covered fraction of its current prediction.
    Prediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub alpha: f64,
    pub n_candidates: usize,
    pub mode: Mode,
    pub max_views: usize,
    pub seed: u64,
    pub grid: GridSetting,
    pub hpr: HprParams,
    /// Re-project every past view onto each new prediction.
    pub recompute_history: bool,
    pub stop_on: StopMetric,
    /// Predicted point count requested from the predictor.
    pub m: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        let area = ViewingSpace::new(crate::geometry::Point3::origin(), 0.5)
            .map(|s| s.area())
            .unwrap_or(std::f64::consts::FRAC_PI_2);
        Self {
            alpha: 0.9,
            n_candidates: epsilon_net_size(area, DEFAULT_EPSILON).unwrap_or(44),
            mode: Mode::Dynamic,
            max_views: DEFAULT_MAX_VIEWS,
            seed: 0,
            grid: GridSetting::COARSE,
            hpr: HprParams { gamma: PLANNER_GAMMA },
            recompute_history: false,
            stop_on: StopMetric::GroundTruth,
            m: DEFAULT_M,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(PlanError::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if self.max_views == 0 {
            return Err(PlanError::Config("max_views must be at least 1".into()));
        }
        if self.n_candidates == 0 {
            return Err(PlanError::Config("n_candidates must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(PlanError::Config("m must be at least 1".into()));
        }
        self.hpr.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Coverage,
    ViewLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub index: usize,
    pub viewpoint: Viewpoint,
    /// Coverage under the configured stop metric after this view.
    pub coverage_after: f64,
    pub gt_coverage: f64,
    pub predicted_coverage: Option<f64>,
    /// Scores of the candidates sampled after this view (empty on the last
    /// step).
    pub candidate_scores: Vec<f64>,
    pub chosen: Option<usize>,
    /// Candidate resamples needed because every score was zero.
    pub resamples: usize,
    pub prediction_iou_vs_gt: Option<f64>,
    pub predictor_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTrace {
    pub method: String,
    pub scene: String,
    pub config: PlannerConfig,
    pub steps: Vec<PlanStep>,
    pub terminated_by: Termination,
}

impl PlanTrace {
    /// Views needed before `alpha` ground-truth coverage was exceeded, or
    /// `None` if the run never got there.
    pub fn views_to_exceed(&self, alpha: f64) -> Option<usize> {
        self.steps.iter().position(|s| s.gt_coverage > alpha).map(|i| i + 1)
    }

    /// Views charged for `alpha`: the first step exceeding it, or the view
    /// cap. The flag tells whether the cap was charged.
    pub fn views_charged(&self, alpha: f64) -> (usize, bool) {
        match self.views_to_exceed(alpha) {
            Some(n) => (n, false),
            None => (self.config.max_views, true),
        }
    }

    pub fn final_coverage(&self) -> f64 {
        self.steps.last().map(|s| s.coverage_after).unwrap_or(0.0)
    }

    /// JSON-lines form: a header, one record per step, an end record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = serde_json::json!({
            "record": "header",
            "method": self.method,
            "scene": self.scene,
            "config": self.config,
        });
        out.push_str(&header.to_string());
        out.push('\n');
        for s in &self.steps {
            let mut v = serde_json::to_value(s).expect("step serializes");
            v.as_object_mut()
                .expect("step is an object")
                .insert("record".into(), "step".into());
            out.push_str(&v.to_string());
            out.push('\n');
        }
        let end = serde_json::json!({
            "record": "end",
            "terminated_by": self.terminated_by,
            "steps": self.steps.len(),
        });
        out.push_str(&end.to_string());
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: serde_json::Value =
            serde_json::from_str(lines.next().ok_or("empty trace")?).map_err(|e| format!("header: {e}"))?;
        if header["record"] != "header" {
            return Err("first record must be the header".into());
        }
        let config: PlannerConfig = serde_json::from_value(header["config"].clone()).map_err(|e| format!("config: {e}"))?;
        let mut steps = Vec::new();
        let mut terminated_by = None;
        for (i, line) in lines.enumerate() {
            let mut v: serde_json::Value = serde_json::from_str(line).map_err(|e| format!("record {}: {e}", i + 2))?;
            match v["record"].as_str() {
                Some("step") => {
                    v.as_object_mut().map(|o| o.remove("record"));
                    steps.push(serde_json::from_value(v).map_err(|e| format!("step {}: {e}", i + 1))?);
                }
                Some("end") => {
                    terminated_by = Some(
                        serde_json::from_value(v["terminated_by"].clone()).map_err(|e| format!("end record: {e}"))?,
                    );
                }
                other => return Err(format!("unknown record kind {other:?}")),
            }
        }
        Ok(Self {
            method: header["method"].as_str().unwrap_or_default().to_string(),
            scene: header["scene"].as_str().unwrap_or_default().to_string(),
            config,
            steps,
            terminated_by: terminated_by.ok_or("missing end record")?,
        })
    }
}

/// Candidates sampled after step `step` (1-based); attempt 1 is the
/// zero-gain resample.
pub fn candidate_views(config: &PlannerConfig, space: &ViewingSpace, step: usize, attempt: usize) -> Vec<Viewpoint> {
    let mut rng = stream(config.seed, &[tag("candidates"), step as u64, attempt as u64]);
    space.sample_viewpoints_with(config.n_candidates, &mut rng)
}

pub fn initial_view(config: &PlannerConfig, space: &ViewingSpace) -> Viewpoint {
    let mut rng = stream(config.seed, &[tag("initial")]);
    space.sample_viewpoints_with(1, &mut rng).remove(0)
}

/// Uncovered visible cells each candidate would add, and the argmax with
/// ties to the lowest index. `None` signals that every score is zero.
pub fn select_next_view(
    covered: &CoverageState,
    candidates: &[Viewpoint],
    points: &PointSet,
    params: &HprParams,
) -> Result<(Option<usize>, Vec<f64>), PlanError> {
    if candidates.is_empty() {
        return Err(PlanError::Config("no candidates to select from".into()));
    }
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|c| -> Result<f64, PlanError> {
            let mask = hpr_visible(points, c, params)?;
            let (grid, _) = voxelize_clipped(points, &mask, &covered.geometry);
            Ok(covered.new_gain(&grid)? as f64)
        })
        .collect::<Result<_, _>>()?;
    Ok((argmax(&scores), scores))
}

/// Index of the largest positive score, lowest index on ties.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s > 0.0 && best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Ground-truth coverage shared by every method: voxels of the true points
/// that HPR labels visible, unioned over the visited views.
pub struct GroundTruthCoverage<'a> {
    points: &'a PointSet,
    params: HprParams,
    pub grid: VoxelGrid,
    pub state: CoverageState,
}

impl<'a> GroundTruthCoverage<'a> {
    pub fn new(points: &'a PointSet, setting: &GridSetting, params: HprParams) -> Result<Self, PlanError> {
        let frame = setting.frame_for(points)?;
        let grid = occupancy(points, &frame);
        Ok(Self {
            points,
            params,
            state: CoverageState::new(frame),
            grid,
        })
    }

    pub fn frame(&self) -> &GridGeometry {
        &self.grid.geometry
    }

    pub fn absorb(&mut self, view: &Viewpoint) -> Result<f64, PlanError> {
        let mask = hpr_visible(self.points, view, &self.params)?;
        let labeled = voxelize(self.points, &mask, self.frame())?;
        self.state.absorb(&labeled)?;
        self.fraction()
    }

    pub fn fraction(&self) -> Result<f64, PlanError> {
        Ok(coverage_fraction(&self.state, &self.grid)?)
    }
}

/// What a policy reports after taking a view.
#[derive(Debug, Clone, Default)]
pub struct Observation {
    pub predicted_coverage: Option<f64>,
    pub prediction_iou_vs_gt: Option<f64>,
    pub predictor_calls: usize,
}

/// A view-selection strategy driven by [`run_loop`].
pub trait Policy {
    fn observe(&mut self, step: usize, view: &Viewpoint) -> Result<Observation, PlanError>;
    fn score(&self, candidates: &[Viewpoint]) -> Result<Vec<f64>, PlanError>;
}

/// Shared next-best-view loop: identical initial view, candidate streams
/// and termination rule for every policy.
pub fn run_loop<P: Policy>(
    method: &str,
    scene: &Scene,
    policy: &mut P,
    config: &PlannerConfig,
    space: &ViewingSpace,
) -> Result<PlanTrace, PlanError> {
    config.validate()?;
    let mut gt = GroundTruthCoverage::new(&scene.ground_truth, &config.grid, config.hpr)?;
    let mut trace = PlanTrace {
        method: method.to_string(),
        scene: scene.id.clone(),
        config: config.clone(),
        steps: Vec::new(),
        terminated_by: Termination::ViewLimit,
    };
    let mut view = initial_view(config, space);
    for step in 1..=config.max_views {
        let obs = match policy.observe(step, &view) {
            Ok(o) => o,
            Err(PlanError::Predictor { step, source, .. }) => {
                return Err(PlanError::Predictor {
                    step,
                    source,
                    trace: Box::new(trace),
                })
            }
            Err(e) => return Err(e),
        };
        let gt_coverage = gt.absorb(&view)?;
        let coverage_after = match config.stop_on {
            StopMetric::GroundTruth => gt_coverage,
            StopMetric::Prediction => obs.predicted_coverage.unwrap_or(gt_coverage),
        };
        trace.steps.push(PlanStep {
            index: step,
            viewpoint: view.clone(),
            coverage_after,
            gt_coverage,
            predicted_coverage: obs.predicted_coverage,
            candidate_scores: Vec::new(),
            chosen: None,
            resamples: 0,
            prediction_iou_vs_gt: obs.prediction_iou_vs_gt,
            predictor_calls: obs.predictor_calls,
        });
        if coverage_after > config.alpha {
            trace.terminated_by = Termination::Coverage;
            break;
        }
        if step == config.max_views {
            break;
        }
        let mut pick = None;
        for attempt in 0..2 {
            let candidates = candidate_views(config, space, step, attempt);
            let scores = policy.score(&candidates)?;
            let best = argmax(&scores);
            let last = trace.steps.last_mut().expect("step just pushed");
            last.candidate_scores = scores;
            last.resamples = attempt;
            if let Some(b) = best {
                last.chosen = Some(b);
                pick = Some(candidates[b].clone());
                break;
            }
        }
        match pick {
            Some(v) => view = v,
            None => break,
        }
    }
    Ok(trace)
}

/// Policy of the prediction-guided planner.
pub struct ActiveHofPolicy<'a> {
    scene: &'a Scene,
    predictor: &'a dyn Predictor,
    config: PlannerConfig,
    oracle: RaycastOracle<'a>,
    records: Vec<ViewRecord>,
    views: Vec<Viewpoint>,
    prediction: Option<PointSet>,
    covered: Option<CoverageState>,
    gt_frame: GridGeometry,
    gt_grid: VoxelGrid,
    calls: usize,
}

impl<'a> ActiveHofPolicy<'a> {
    pub fn new(scene: &'a Scene, predictor: &'a dyn Predictor, config: &PlannerConfig) -> Result<Self, PlanError> {
        let oracle = RaycastOracle::with_default_radius(&scene.ground_truth)?;
        let gt_frame = config.grid.frame_for(&scene.ground_truth)?;
        let gt_grid = occupancy(&scene.ground_truth, &gt_frame);
        Ok(Self {
            scene,
            predictor,
            config: config.clone(),
            oracle,
            records: Vec::new(),
            views: Vec::new(),
            prediction: None,
            covered: None,
            gt_frame,
            gt_grid,
            calls: 0,
        })
    }

    pub fn prediction(&self) -> Option<&PointSet> {
        self.prediction.as_ref()
    }

    pub fn covered(&self) -> Option<&CoverageState> {
        self.covered.as_ref()
    }
}

impl Policy for ActiveHofPolicy<'_> {
    fn observe(&mut self, step: usize, view: &Viewpoint) -> Result<Observation, PlanError> {
        let record = self.scene.observe(&self.oracle, view).map_err(|source| PlanError::Predictor {
            step,
            source,
            trace: Box::default(),
        })?;
        self.records.push(record);
        self.views.push(view.clone());
        if self.prediction.is_none() || self.config.mode == Mode::Dynamic {
            let request = PredictorRequest {
                scene: self.scene.id.clone(),
                views: self.records.clone(),
                m: self.config.m,
            };
            self.calls += 1;
            let response = self.predictor.predict(&request).map_err(|source| PlanError::Predictor {
                step,
                source,
                trace: Box::default(),
            })?;
            self.prediction = Some(response.points);
        }
        let pred = self.prediction.as_ref().expect("prediction set above");
        // The world grid is frozen at the first prediction.
        let frame = match &self.covered {
            Some(c) => c.geometry.clone(),
            None => self.config.grid.frame_for(pred)?,
        };
        let mut covered = match self.covered.take() {
            Some(c) if !self.config.recompute_history => c,
            _ => CoverageState::new(frame.clone()),
        };
        let history: &[Viewpoint] = if self.config.recompute_history {
            &self.views
        } else {
            std::slice::from_ref(view)
        };
        for v in history {
            let mask = hpr_visible(pred, v, &self.config.hpr)?;
            covered.absorb(&voxelize_clipped(pred, &mask, &frame).0)?;
        }
        let current = occupancy(pred, &frame);
        let predicted_coverage = coverage_fraction(&covered, &current).ok();
        self.covered = Some(covered);
        let iou_vs_gt = iou(&occupancy(pred, &self.gt_frame), &self.gt_grid)?;
        Ok(Observation {
            predicted_coverage,
            prediction_iou_vs_gt: Some(iou_vs_gt),
            predictor_calls: self.calls,
        })
    }

    fn score(&self, candidates: &[Viewpoint]) -> Result<Vec<f64>, PlanError> {
        let (Some(pred), Some(covered)) = (&self.prediction, &self.covered) else {
            return Err(PlanError::Config("score called before the first view".into()));
        };
        Ok(select_next_view(covered, candidates, pred, &self.config.hpr)?.1)
    }
}

pub fn run_active_hof(
    scene: &Scene,
    predictor: &dyn Predictor,
    config: &PlannerConfig,
    space: &ViewingSpace,
) -> Result<PlanTrace, PlanError> {
    let mut policy = ActiveHofPolicy::new(scene, predictor, config)?;
    let method = match config.mode {
        Mode::Static => "active_hof_static",
        Mode::Dynamic => "active_hof",
    };
    run_loop(method, scene, &mut policy, config, space)
}

/// First field where two traces differ.
pub fn first_divergence(a: &PlanTrace, b: &PlanTrace) -> Option<(usize, String)> {
    if a.config != b.config {
        return Some((0, "configs differ".into()));
    }
    for (i, (x, y)) in a.steps.iter().zip(&b.steps).enumerate() {
        if x != y {
            let detail = if x.viewpoint != y.viewpoint {
                "viewpoint differs".to_string()
            } else if x.candidate_scores != y.candidate_scores {
                "candidate scores differ".to_string()
            } else {
                "step record differs".to_string()
            };
            return Some((i + 1, detail));
        }
    }
    if a.steps.len() != b.steps.len() {
        return Some((a.steps.len().min(b.steps.len()) + 1, "step counts differ".into()));
    }
    if a.terminated_by != b.terminated_by {
        return Some((a.steps.len(), "termination differs".into()));
    }
    None
}

/// Re-runs a trace from its own config and checks it is reproduced exactly.
pub fn replay_trace<F>(trace: &PlanTrace, rerun: F) -> Result<PlanTrace, PlanError>
where
    F: FnOnce(&PlannerConfig) -> Result<PlanTrace, PlanError>,
{
    let fresh = rerun(&trace.config)?;
    match first_divergence(trace, &fresh) {
        None => Ok(fresh),
        Some((step, detail)) => Err(PlanError::Determinism { step, detail }),
    }
}

impl Default for PlanTrace {
    fn default() -> Self {
        Self {
            method: String::new(),
            scene: String::new(),
            config: PlannerConfig::default(),
            steps: Vec::new(),
            terminated_by: Termination::ViewLimit,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 5.0, 3.0, 5.0]), Some(1));
        assert_eq!(argmax(&[0.0, 0.0]), None);
        assert_eq!(argmax(&[5.0, 3.0]), Some(0));
    }

    #[test]
    fn default_candidate_count_is_epsilon_net() {
        assert_eq!(PlannerConfig::default().n_candidates, 44);
    }

    #[test]
    fn config_validation() {
        let mut c = PlannerConfig::default();
        c.alpha = 0.0;
        assert!(c.validate().is_err());
        c.alpha = 1.0;
        assert!(c.validate().is_ok());
        c.max_views = 0;
        assert!(c.validate().is_err());
    }
}
