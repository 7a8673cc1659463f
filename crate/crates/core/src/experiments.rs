//! Scenario files, the experiment runners and their result tables.
//!
//! A scenario names one experiment kind and carries every knob it uses, so
//! the file alone determines every emitted number. Trial `t` of a suite
//! uses shape `t mod len`, sampling seed `t` and planner seed `t`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{run_info_max, run_vis_max_gt, InfoMaxParams};
use crate::geometry::{epsilon_net_size, PointSet, Viewpoint, ViewingSpace};
use crate::planner::{run_active_hof, Mode, PlanError, PlanTrace, PlannerConfig};
use crate::predictor::{
    DegradationProfile, DegradedPredictor, OraclePredictor, Predictor, PredictorError, PredictorRequest, Scene,
    SceneBook, ViewRecord,
};
use crate::rng::{stream, tag};
use crate::scenes::{self, GT_POINTS, VIEW_RADIUS};
use crate::shapes::{generate_shape_where, Pose, ShapeError, ShapeSpec};
use crate::uncertainty::{entropy_map, entropy_stats, visible_cells, voting_occupancy, VisibleScope};
use crate::visibility::{hpr_visible, HprParams, RaycastOracle, VisibilityMask};
use crate::voxels::{iou, occupancy, voxelize_clipped, GridSetting};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("table schema mismatch: {0}")]
    Schema(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Views to reach each coverage level, per method.
    Coverage,
    /// Static against dynamic re-prediction.
    Refinement,
    /// Voting entropy over visible and all occupied cells.
    Entropy,
    /// Prediction IoU against the number of views.
    Iou,
    /// Whether an ε-net-sized viewpoint sample sees every surface point.
    EpsilonNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    #[default]
    Standard,
    Occluded,
    HeldOut,
}

impl Suite {
    pub fn trial(&self, t: u64, n: usize) -> Result<Scene, ShapeError> {
        match self {
            Suite::Standard => scenes::standard_trial(t, n),
            Suite::Occluded => scenes::occluded_trial(t, n),
            Suite::HeldOut => scenes::held_out_trial(t, n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    VisMaxGt,
    /// Degraded predictor, dynamic re-prediction.
    ActiveHof,
    /// Degraded predictor, first prediction only.
    ActiveHofStatic,
    /// Exact predictor.
    ActiveHofOracle,
    InfoMax,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::VisMaxGt => "vis_max_gt",
            Method::ActiveHof => "active_hof",
            Method::ActiveHofStatic => "active_hof_static",
            Method::ActiveHofOracle => "active_hof_oracle",
            Method::InfoMax => "info_max",
        }
    }

    pub fn from_name(name: &str) -> Option<Method> {
        [
            Method::VisMaxGt,
            Method::ActiveHof,
            Method::ActiveHofStatic,
            Method::ActiveHofOracle,
            Method::InfoMax,
        ]
        .into_iter()
        .find(|m| m.name() == name)
    }
}

/// Rebuilds a scene from an id of the form `shape/seed`.
pub fn scene_from_id(id: &str, n: usize) -> Result<Scene, ExperimentError> {
    let bad = || ExperimentError::Scenario(format!("scene id '{id}' is not of the form shape/seed"));
    let (name, seed) = id.rsplit_once('/').ok_or_else(bad)?;
    let seed: u64 = seed.parse().map_err(|_| bad())?;
    let spec = scenes::named_shape(name).ok_or_else(|| ExperimentError::Scenario(format!("unknown shape '{name}'")))?;
    Ok(Scene::generate(id, spec, n, seed)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub experiment: ExperimentKind,
    pub suite: Suite,
    pub trials: u64,
    pub first_trial: u64,
    pub points: usize,
    pub alphas: Vec<f64>,
    pub methods: Vec<Method>,
    pub profile: DegradationProfile,
    pub predictor_seed: u64,
    pub planner: PlannerConfig,
    pub info_max: InfoMaxParams,
    /// Grid dimensions for entropy tables.
    pub grids: Vec<usize>,
    /// Consecutive view counts for entropy tables.
    pub view_counts: Vec<usize>,
    pub arc_step_deg: f64,
    pub scope: VisibleScope,
    /// View counts for IoU tables.
    pub ks: Vec<usize>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            experiment: ExperimentKind::Coverage,
            suite: Suite::Standard,
            trials: 50,
            first_trial: 0,
            points: GT_POINTS,
            alphas: vec![0.7, 0.8, 0.9],
            methods: vec![Method::VisMaxGt, Method::ActiveHof, Method::InfoMax],
            profile: DegradationProfile::default(),
            predictor_seed: 7,
            planner: PlannerConfig::default(),
            info_max: InfoMaxParams::default(),
            grids: vec![40, 80],
            view_counts: vec![5, 8, 11],
            arc_step_deg: 5.0,
            scope: VisibleScope::Union,
            ks: vec![1, 2, 3, 4],
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Scenario(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.points < 4 {
            return bad(format!("points must be at least 4, got {}", self.points));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return bad(format!("alphas must lie in (0, 1], got {a}"));
        }
        match self.experiment {
            ExperimentKind::Coverage | ExperimentKind::Refinement if self.alphas.is_empty() => {
                return bad("alphas must not be empty".into())
            }
            ExperimentKind::Coverage if self.methods.is_empty() => return bad("methods must not be empty".into()),
            ExperimentKind::Entropy if self.grids.is_empty() || self.view_counts.contains(&0) => {
                return bad("entropy needs grids and positive view counts".into())
            }
            ExperimentKind::Iou if self.ks.is_empty() || self.ks.contains(&0) => {
                return bad("ks must be non-empty and positive".into())
            }
            _ => {}
        }
        for d in &self.grids {
            GridSetting::from_dim(*d).map_err(|e| ExperimentError::Scenario(e.to_string()))?;
        }
        self.profile.validate()?;
        self.planner.validate()?;
        Ok(())
    }

    fn trial_ids(&self) -> Vec<u64> {
        (self.first_trial..self.first_trial + self.trials).collect()
    }

    fn max_alpha(&self) -> f64 {
        self.alphas.iter().cloned().fold(f64::MIN, f64::max)
    }
}

pub fn viewing_space() -> ViewingSpace {
    ViewingSpace::new(scenes::view_center(), VIEW_RADIUS).expect("positive radius")
}

/// Header and string cells, emitted as CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    pub fn from_csv(text: &str) -> Result<Self, ExperimentError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let columns = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self { columns, rows })
    }
}

/// One differing cell of two tables.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDiff {
    pub row: usize,
    pub column: String,
    pub a: String,
    pub b: String,
}

/// Row-aligned comparison: numeric cells within `tol`, others exactly.
pub fn compare_traces(a: &ResultTable, b: &ResultTable, tol: f64) -> Result<Vec<CellDiff>, ExperimentError> {
    if a.columns != b.columns {
        return Err(ExperimentError::Schema(format!("columns {:?} vs {:?}", a.columns, b.columns)));
    }
    if a.rows.len() != b.rows.len() {
        return Err(ExperimentError::Schema(format!("{} rows vs {}", a.rows.len(), b.rows.len())));
    }
    let mut out = Vec::new();
    for (i, (ra, rb)) in a.rows.iter().zip(&b.rows).enumerate() {
        for (j, (x, y)) in ra.iter().zip(rb).enumerate() {
            let same = match (x.parse::<f64>(), y.parse::<f64>()) {
                (Ok(u), Ok(v)) if u.is_nan() && v.is_nan() => true,
                (Ok(u), Ok(v)) => u == v || (u - v).abs() <= tol,
                _ => x == y,
            };
            if !same {
                out.push(CellDiff {
                    row: i,
                    column: a.columns[j].clone(),
                    a: x.clone(),
                    b: y.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (m, (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Views charged to one method on one trial at one coverage level.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRun {
    pub trial: u64,
    pub scene: String,
    pub method: Method,
    pub alpha: f64,
    pub views: usize,
    pub capped: bool,
    pub final_coverage: f64,
    pub error: Option<String>,
}

pub fn run_method(
    method: Method,
    scene: &Scene,
    scenario: &Scenario,
    config: &PlannerConfig,
) -> Result<PlanTrace, ExperimentError> {
    let space = viewing_space();
    let book = SceneBook::from_iter([scene.clone()]);
    let degraded = || DegradedPredictor::new(book.clone(), scenario.profile, scenario.predictor_seed);
    let trace = match method {
        Method::VisMaxGt => run_vis_max_gt(scene, config, &space)?,
        Method::ActiveHofOracle => {
            let mut t = run_active_hof(scene, &OraclePredictor::new(book.clone()), config, &space)?;
            t.method = method.name().into();
            t
        }
        Method::ActiveHof | Method::ActiveHofStatic => {
            let mode = if method == Method::ActiveHof { Mode::Dynamic } else { Mode::Static };
            let cfg = PlannerConfig { mode, ..config.clone() };
            run_active_hof(scene, &degraded()?, &cfg, &space)?
        }
        Method::InfoMax => run_info_max(scene, config, &space, &scenario.info_max)?,
    };
    Ok(trace)
}

/// Runs every (trial, method) once at the largest α. A run's view sequence
/// does not depend on α, so the counts for smaller levels are read off the
/// same trace.
pub fn coverage_runs(scenario: &Scenario) -> Result<(Vec<CoverageRun>, Vec<PlanTrace>), ExperimentError> {
    scenario.validate()?;
    let alpha = scenario.max_alpha();
    let jobs: Vec<(u64, Method)> = scenario
        .trial_ids()
        .into_iter()
        .flat_map(|t| scenario.methods.iter().map(move |m| (t, *m)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(t, method)| -> Result<(Vec<CoverageRun>, Option<PlanTrace>), ExperimentError> {
            let scene = scenario.suite.trial(t, scenario.points)?;
            let config = PlannerConfig {
                alpha,
                seed: t,
                m: scenario.points,
                ..scenario.planner.clone()
            };
            Ok(match run_method(method, &scene, scenario, &config) {
                Ok(trace) => {
                    let runs = scenario
                        .alphas
                        .iter()
                        .map(|&a| {
                            let (views, capped) = trace.views_charged(a);
                            CoverageRun {
                                trial: t,
                                scene: scene.id.clone(),
                                method,
                                alpha: a,
                                views,
                                capped,
                                final_coverage: trace.final_coverage(),
                                error: None,
                            }
                        })
                        .collect();
                    (runs, Some(trace))
                }
                Err(e) => {
                    let runs = scenario
                        .alphas
                        .iter()
                        .map(|&a| CoverageRun {
                            trial: t,
                            scene: scene.id.clone(),
                            method,
                            alpha: a,
                            views: 0,
                            capped: false,
                            final_coverage: f64::NAN,
                            error: Some(e.to_string()),
                        })
                        .collect();
                    (runs, None)
                }
            })
        })
        .collect();
    let mut runs = Vec::new();
    let mut traces = Vec::new();
    for r in results {
        let (rs, tr) = r?;
        runs.extend(rs);
        traces.extend(tr);
    }
    Ok((runs, traces))
}

/// Mean views per (method, α) over successful runs.
pub fn coverage_summary(runs: &[CoverageRun], methods: &[Method], alphas: &[f64]) -> ResultTable {
    let mut table = ResultTable::new(&["method", "alpha", "mean_views", "stddev", "cap_hits", "trials", "failures"]);
    for m in methods {
        for &a in alphas {
            let sel: Vec<&CoverageRun> = runs.iter().filter(|r| r.method == *m && r.alpha == a).collect();
            let ok: Vec<f64> = sel.iter().filter(|r| r.error.is_none()).map(|r| r.views as f64).collect();
            let (mean, sd) = mean_std(&ok);
            table.push(vec![
                m.name().into(),
                num(a),
                num(mean),
                num(sd),
                sel.iter().filter(|r| r.capped).count().to_string(),
                sel.len().to_string(),
                (sel.len() - ok.len()).to_string(),
            ]);
        }
    }
    table
}

pub fn coverage_table(runs: &[CoverageRun]) -> ResultTable {
    let mut t = ResultTable::new(&["trial", "scene", "method", "alpha", "views", "capped", "final_coverage", "status"]);
    for r in runs {
        t.push(vec![
            r.trial.to_string(),
            r.scene.clone(),
            r.method.name().into(),
            num(r.alpha),
            r.views.to_string(),
            r.capped.to_string(),
            num(r.final_coverage),
            r.error.clone().map(|e| format!("failed: {e}")).unwrap_or_else(|| "ok".into()),
        ]);
    }
    t
}

/// Static and dynamic summaries with the count of trials each mode won
/// outright.
pub fn refinement_summary(runs: &[CoverageRun], alphas: &[f64]) -> ResultTable {
    let modes = [Method::ActiveHofStatic, Method::ActiveHof];
    let base = coverage_summary(runs, &modes, alphas);
    let mut table = ResultTable::new(&[
        "method", "alpha", "mean_views", "stddev", "cap_hits", "trials", "failures", "strict_wins",
    ]);
    for (i, row) in base.rows.into_iter().enumerate() {
        let (me, other) = if i < alphas.len() { (modes[0], modes[1]) } else { (modes[1], modes[0]) };
        let a = alphas[i % alphas.len()];
        let wins = strict_wins(runs, me, other, a);
        let mut row = row;
        row.push(wins.to_string());
        table.push(row);
    }
    table
}

/// Trials where `me` used strictly fewer views than `other` at `alpha`.
pub fn strict_wins(runs: &[CoverageRun], me: Method, other: Method, alpha: f64) -> usize {
    runs.iter()
        .filter(|r| r.method == me && r.alpha == alpha && r.error.is_none())
        .filter(|r| {
            runs.iter().any(|o| {
                o.method == other && o.alpha == alpha && o.trial == r.trial && o.error.is_none() && r.views < o.views
            })
        })
        .count()
}

/// Entropy statistics of one trial on one grid with one view count.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyRun {
    pub trial: u64,
    pub scene: String,
    pub grid_dim: usize,
    pub n_views: usize,
    pub all_mean: f64,
    pub all_std: f64,
    pub visible_mean: f64,
    pub visible_std: f64,
}

/// `n` viewpoints along an arc of constant elevation, `step_deg` apart,
/// starting at a seeded pose.
pub fn consecutive_views(space: &ViewingSpace, seed: u64, n: usize, step_deg: f64) -> Vec<Viewpoint> {
    use rand::Rng;
    let mut rng = stream(seed, &[tag("arc")]);
    let elevation = rng.random_range(20f64.to_radians()..50f64.to_radians());
    let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
    (0..n)
        .map(|i| space.viewpoint_at(elevation, azimuth + (i as f64 * step_deg).to_radians()))
        .collect()
}

/// Each view gets its own single-view prediction; the predictions vote on
/// the ground-truth frame and cells seen in the views form the visible
/// scope.
pub fn entropy_runs(scenario: &Scenario) -> Result<Vec<EntropyRun>, ExperimentError> {
    scenario.validate()?;
    let space = viewing_space();
    let max_views = scenario.view_counts.iter().copied().max().unwrap_or(1);
    let hpr = scenario.planner.hpr;
    let per_trial: Vec<Result<Vec<EntropyRun>, ExperimentError>> = scenario
        .trial_ids()
        .par_iter()
        .map(|&t| {
            let scene = scenario.suite.trial(t, scenario.points)?;
            let oracle = RaycastOracle::with_default_radius(&scene.ground_truth).map_err(PredictorError::from)?;
            let predictor =
                DegradedPredictor::new(SceneBook::from_iter([scene.clone()]), scenario.profile, scenario.predictor_seed)?;
            let views = consecutive_views(&space, t, max_views, scenario.arc_step_deg);
            let predictions = views
                .iter()
                .map(|v| {
                    let request = PredictorRequest {
                        scene: scene.id.clone(),
                        views: vec![scene.observe(&oracle, v)?],
                        m: scenario.points,
                    };
                    Ok(predictor.predict(&request)?.points)
                })
                .collect::<Result<Vec<PointSet>, ExperimentError>>()?;
            let mut out = Vec::new();
            for &dim in &scenario.grids {
                let frame = GridSetting::from_dim(dim)
                    .and_then(|g| g.frame_for(&scene.ground_truth))
                    .map_err(|e| ExperimentError::Scenario(e.to_string()))?;
                let grids = views
                    .iter()
                    .zip(&predictions)
                    .map(|(v, p)| {
                        let mask = hpr_visible(p, v, &hpr).map_err(PredictorError::from)?;
                        Ok(voxelize_clipped(p, &mask, &frame).0)
                    })
                    .collect::<Result<Vec<_>, ExperimentError>>()?;
                for &n in &scenario.view_counts {
                    let pg = voting_occupancy(&grids[..n]).map_err(|e| ExperimentError::Scenario(e.to_string()))?;
                    let eg = entropy_map(&pg);
                    let all = entropy_stats(&eg, None).map_err(|e| ExperimentError::Scenario(e.to_string()))?;
                    let vis_cells = visible_cells(&grids[..n], scenario.scope);
                    let vis = entropy_stats(&eg, Some(&vis_cells)).map_err(|e| ExperimentError::Scenario(e.to_string()))?;
                    out.push(EntropyRun {
                        trial: t,
                        scene: scene.id.clone(),
                        grid_dim: dim,
                        n_views: n,
                        all_mean: all.mean,
                        all_std: all.stddev,
                        visible_mean: vis.mean,
                        visible_std: vis.stddev,
                    });
                }
            }
            Ok(out)
        })
        .collect();
    let mut runs = Vec::new();
    for r in per_trial {
        runs.extend(r?);
    }
    Ok(runs)
}

pub fn entropy_summary(runs: &[EntropyRun], grids: &[usize], view_counts: &[usize]) -> ResultTable {
    let mut table = ResultTable::new(&["grid_dim", "n_views", "scope", "mean", "stddev", "trials", "ordered_trials"]);
    for &g in grids {
        for &n in view_counts {
            let sel: Vec<&EntropyRun> = runs.iter().filter(|r| r.grid_dim == g && r.n_views == n).collect();
            let ordered = sel.iter().filter(|r| r.visible_mean <= r.all_mean).count();
            for (scope, mean, sd) in [
                ("all", mean_std(&sel.iter().map(|r| r.all_mean).collect::<Vec<_>>()).0, mean_std(&sel.iter().map(|r| r.all_std).collect::<Vec<_>>()).0),
                ("visible", mean_std(&sel.iter().map(|r| r.visible_mean).collect::<Vec<_>>()).0, mean_std(&sel.iter().map(|r| r.visible_std).collect::<Vec<_>>()).0),
            ] {
                table.push(vec![
                    g.to_string(),
                    n.to_string(),
                    scope.into(),
                    num(mean),
                    num(sd),
                    sel.len().to_string(),
                    ordered.to_string(),
                ]);
            }
        }
    }
    table
}

pub fn entropy_table(runs: &[EntropyRun]) -> ResultTable {
    let mut t = ResultTable::new(&["trial", "scene", "grid_dim", "n_views", "scope", "mean", "stddev"]);
    for r in runs {
        for (scope, m, s) in [("all", r.all_mean, r.all_std), ("visible", r.visible_mean, r.visible_std)] {
            t.push(vec![
                r.trial.to_string(),
                r.scene.clone(),
                r.grid_dim.to_string(),
                r.n_views.to_string(),
                scope.into(),
                num(m),
                num(s),
            ]);
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct IouRun {
    pub trial: u64,
    pub scene: String,
    pub predictor: String,
    pub k: usize,
    pub iou: f64,
}

/// Views for the IoU experiment: seeded and uniform on the hemisphere.
pub fn iou_views(space: &ViewingSpace, seed: u64, n: usize) -> Vec<Viewpoint> {
    let mut rng = stream(seed, &[tag("iou-views")]);
    space.sample_viewpoints_with(n, &mut rng)
}

/// IoU of the prediction from the first `k` views against the ground truth,
/// for the degraded and exact predictors.
pub fn iou_runs(scenario: &Scenario) -> Result<Vec<IouRun>, ExperimentError> {
    scenario.validate()?;
    let space = viewing_space();
    let kmax = scenario.ks.iter().copied().max().unwrap_or(1);
    let per_trial: Vec<Result<Vec<IouRun>, ExperimentError>> = scenario
        .trial_ids()
        .par_iter()
        .map(|&t| {
            let scene = scenario.suite.trial(t, scenario.points)?;
            let oracle = RaycastOracle::with_default_radius(&scene.ground_truth).map_err(PredictorError::from)?;
            let book = SceneBook::from_iter([scene.clone()]);
            let predictors: [(&str, Box<dyn Predictor>); 2] = [
                ("degraded", Box::new(DegradedPredictor::new(book.clone(), scenario.profile, scenario.predictor_seed)?)),
                ("oracle", Box::new(OraclePredictor::new(book))),
            ];
            let frame = scenario
                .planner
                .grid
                .frame_for(&scene.ground_truth)
                .map_err(|e| ExperimentError::Scenario(e.to_string()))?;
            let truth = occupancy(&scene.ground_truth, &frame);
            let records: Vec<ViewRecord> = iou_views(&space, t, kmax)
                .iter()
                .map(|v| scene.observe(&oracle, v))
                .collect::<Result<_, _>>()?;
            let mut out = Vec::new();
            for (name, p) in &predictors {
                for &k in &scenario.ks {
                    let request = PredictorRequest {
                        scene: scene.id.clone(),
                        views: records[..k].to_vec(),
                        m: scenario.points,
                    };
                    let pred = p.predict(&request)?.points;
                    let v = iou(&occupancy(&pred, &frame), &truth).map_err(|e| ExperimentError::Scenario(e.to_string()))?;
                    out.push(IouRun {
                        trial: t,
                        scene: scene.id.clone(),
                        predictor: name.to_string(),
                        k,
                        iou: v,
                    });
                }
            }
            Ok(out)
        })
        .collect();
    let mut runs = Vec::new();
    for r in per_trial {
        runs.extend(r?);
    }
    Ok(runs)
}

pub fn iou_summary(runs: &[IouRun], ks: &[usize]) -> ResultTable {
    let mut table = ResultTable::new(&["predictor", "k", "mean_iou", "stddev", "trials"]);
    for name in ["degraded", "oracle"] {
        for &k in ks {
            let v: Vec<f64> = runs.iter().filter(|r| r.predictor == name && r.k == k).map(|r| r.iou).collect();
            let (m, s) = mean_std(&v);
            table.push(vec![name.into(), k.to_string(), num(m), num(s), v.len().to_string()]);
        }
    }
    table
}

pub fn iou_table(runs: &[IouRun]) -> ResultTable {
    let mut t = ResultTable::new(&["trial", "scene", "predictor", "k", "iou"]);
    for r in runs {
        t.push(vec![r.trial.to_string(), r.scene.clone(), r.predictor.clone(), r.k.to_string(), num(r.iou)]);
    }
    t
}

/// Objects whose whole surface faces some viewpoint of the upper hemisphere:
/// upright solids resting on the support plane.
pub fn externally_visible_suite() -> Vec<(&'static str, ShapeSpec)> {
    vec![
        ("dome", ShapeSpec::sphere(0.1)),
        (
            "block",
            ShapeSpec::cuboid(0.16, 0.1, 0.08).with_pose(Pose::at(0.0, 0.0, 0.04).rotated(0.0, 0.0, 0.4)),
        ),
        ("post", ShapeSpec::capsule(0.05, 0.06)),
        ("cushion", ShapeSpec::superellipsoid([0.12, 0.09, 0.07], 0.5, 0.8)),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonRun {
    pub seed: u64,
    pub shape: String,
    pub n_views: usize,
    pub visible_fraction: f64,
}

impl EpsilonRun {
    pub fn all_visible(&self) -> bool {
        self.visible_fraction == 1.0
    }
}

/// For each seed, samples the ε-net-sized viewpoint set once and measures the
/// fraction of each object's points seen from at least one of them.
pub fn epsilon_runs(scenario: &Scenario, points: usize, params: &HprParams) -> Result<Vec<EpsilonRun>, ExperimentError> {
    scenario.validate()?;
    let space = viewing_space();
    let n = epsilon_net_size(space.area(), crate::planner::DEFAULT_EPSILON)
        .map_err(|e| ExperimentError::Scenario(e.to_string()))?;
    let objects: Vec<(&str, PointSet)> = externally_visible_suite()
        .into_iter()
        .map(|(name, spec)| Ok((name, generate_shape_where(&spec, points, tag(name), |p| p.z > 1e-9)?)))
        .collect::<Result<_, ShapeError>>()?;
    let per_seed: Vec<Result<Vec<EpsilonRun>, ExperimentError>> = scenario
        .trial_ids()
        .par_iter()
        .map(|&seed| {
            let mut rng = stream(seed, &[tag("epsilon-net")]);
            let views = space.sample_viewpoints_with(n, &mut rng);
            objects
                .iter()
                .map(|(name, pts)| {
                    let mut seen = VisibilityMask::all(pts.len(), false);
                    for v in &views {
                        seen.union_with(&hpr_visible(pts, v, params).map_err(PredictorError::from)?);
                    }
                    Ok(EpsilonRun {
                        seed,
                        shape: name.to_string(),
                        n_views: n,
                        visible_fraction: seen.count() as f64 / pts.len() as f64,
                    })
                })
                .collect()
        })
        .collect();
    let mut runs = Vec::new();
    for r in per_seed {
        runs.extend(r?);
    }
    Ok(runs)
}

pub fn epsilon_summary(runs: &[EpsilonRun]) -> ResultTable {
    let mut table = ResultTable::new(&["shape", "n_views", "seeds", "fully_covered", "mean_visible_fraction"]);
    for (name, _) in externally_visible_suite() {
        let sel: Vec<&EpsilonRun> = runs.iter().filter(|r| r.shape == name).collect();
        let n_views = sel.first().map(|r| r.n_views).unwrap_or(0);
        let (m, _) = mean_std(&sel.iter().map(|r| r.visible_fraction).collect::<Vec<_>>());
        table.push(vec![
            name.into(),
            n_views.to_string(),
            sel.len().to_string(),
            sel.iter().filter(|r| r.all_visible()).count().to_string(),
            num(m),
        ]);
    }
    table
}

pub fn epsilon_table(runs: &[EpsilonRun]) -> ResultTable {
    let mut t = ResultTable::new(&["seed", "shape", "n_views", "visible_fraction"]);
    for r in runs {
        t.push(vec![r.seed.to_string(), r.shape.clone(), r.n_views.to_string(), num(r.visible_fraction)]);
    }
    t
}

/// Summary, per-run rows and (for planner experiments) the traces.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub summary: ResultTable,
    pub runs: ResultTable,
    pub traces: Vec<PlanTrace>,
}

pub fn run_experiment(scenario: &Scenario) -> Result<ExperimentOutput, ExperimentError> {
    scenario.validate()?;
    Ok(match scenario.experiment {
        ExperimentKind::Coverage => {
            let (runs, traces) = coverage_runs(scenario)?;
            ExperimentOutput {
                summary: coverage_summary(&runs, &scenario.methods, &scenario.alphas),
                runs: coverage_table(&runs),
                traces,
            }
        }
        ExperimentKind::Refinement => {
            let s = Scenario {
                methods: vec![Method::ActiveHofStatic, Method::ActiveHof],
                ..scenario.clone()
            };
            let (runs, traces) = coverage_runs(&s)?;
            ExperimentOutput {
                summary: refinement_summary(&runs, &s.alphas),
                runs: coverage_table(&runs),
                traces,
            }
        }
        ExperimentKind::Entropy => {
            let runs = entropy_runs(scenario)?;
            ExperimentOutput {
                summary: entropy_summary(&runs, &scenario.grids, &scenario.view_counts),
                runs: entropy_table(&runs),
                traces: Vec::new(),
            }
        }
        ExperimentKind::Iou => {
            let runs = iou_runs(scenario)?;
            ExperimentOutput {
                summary: iou_summary(&runs, &scenario.ks),
                runs: iou_table(&runs),
                traces: Vec::new(),
            }
        }
        ExperimentKind::EpsilonNet => {
            let runs = epsilon_runs(scenario, scenario.points, &HprParams::default())?;
            ExperimentOutput {
                summary: epsilon_summary(&runs),
                runs: epsilon_table(&runs),
                traces: Vec::new(),
            }
        }
    })
}
