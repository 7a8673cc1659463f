//! `active-hof` command-line tool.
//!
//! Exit codes: 0 success, 2 validation error, 3 run failure, 4 regression
//! (differing tables, diverging replays, failed conformance checks).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use active_hof::bridge::{conformance_suite, echo_handler, serve, BridgeClient, DEFAULT_TIMEOUT};
use active_hof::experiments::{compare_traces, run_experiment, run_method, scene_from_id, viewing_space, Method, ResultTable, Scenario};
use active_hof::planner::{first_divergence, Mode, PlanTrace, PlannerConfig};
use active_hof::pointio::{write_binary, write_xyz};
use active_hof::predictor::{ExternalPredictor, Scene};
use active_hof::scenes::{named_shape, GT_POINTS};
use active_hof::voxels::GridSetting;
use active_hof::run_active_hof;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Run(String),
    #[error("{0}")]
    Regression(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Run(_) => 3,
            CliError::Regression(_) => 4,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn run_err(e: impl ToString) -> CliError {
    CliError::Run(e.to_string())
}

#[derive(Parser)]
#[command(name = "active-hof", version, about = "Prediction-guided next-best-view planning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum PointFormat {
    Xyz,
    Bin,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MethodArg {
    ActiveHof,
    VisMaxGt,
    InfoMax,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum PredictorArg {
    Oracle,
    Degraded,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Static,
    Dynamic,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a named shape resting on the support plane.
    Gen {
        #[arg(long)]
        shape: String,
        #[arg(long, default_value_t = GT_POINTS)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "xyz")]
        format: PointFormat,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one planner on one scene and print a summary row.
    Plan {
        #[arg(long)]
        shape: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "active-hof")]
        method: MethodArg,
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
        #[arg(long, default_value_t = 40)]
        grid: usize,
        #[arg(long, value_enum, default_value = "dynamic")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "degraded")]
        predictor: PredictorArg,
        #[arg(long, default_value_t = 20)]
        max_views: usize,
        #[arg(long, default_value_t = GT_POINTS)]
        points: usize,
        /// Predictor server command line for `--predictor external`.
        #[arg(long)]
        bridge_cmd: Option<String>,
        /// Write the plan trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a scenario file and write summary.csv, runs.csv and traces.
    Experiment {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run recorded traces and check they replay identically.
    Audit {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Scenario the traces came from; supplies the predictor profile.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        bridge_cmd: Option<String>,
    },
    /// Compare two result tables, or two traces, cell by cell.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Check a predictor server against the bridge protocol.
    BridgeTest {
        #[arg(long)]
        bridge_cmd: String,
    },
    /// Serve the echo stub predictor on stdin/stdout.
    #[command(hide = true)]
    BridgeEcho,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Gen {
            shape,
            points,
            seed,
            format,
            out,
        } => gen(&shape, points, seed, format, out.as_deref()),
        Cmd::Plan {
            shape,
            seed,
            method,
            alpha,
            grid,
            mode,
            predictor,
            max_views,
            points,
            bridge_cmd,
            trace,
        } => {
            let config = PlannerConfig {
                alpha,
                seed,
                max_views,
                m: points,
                mode: match mode {
                    ModeArg::Static => Mode::Static,
                    ModeArg::Dynamic => Mode::Dynamic,
                },
                grid: GridSetting::from_dim(grid).map_err(|e| CliError::Validation(e.to_string()))?,
                ..Default::default()
            };
            config.validate().map_err(|e| CliError::Validation(e.to_string()))?;
            let scene = shape_scene(&shape, points, seed)?;
            let t = plan(&scene, method, predictor, &config, bridge_cmd.as_deref())?;
            if let Some(path) = trace {
                write_file(&path, &t.to_jsonl())?;
            }
            let (views, capped) = t.views_charged(alpha);
            let mut table = ResultTable::new(&["method", "scene", "alpha", "views", "capped", "terminated_by", "final_coverage"]);
            table.push(vec![
                t.method.clone(),
                t.scene.clone(),
                alpha.to_string(),
                views.to_string(),
                capped.to_string(),
                format!("{:?}", t.terminated_by).to_lowercase(),
                t.final_coverage().to_string(),
            ]);
            print!("{}", table.to_csv());
            Ok(())
        }
        Cmd::Experiment { scenario, out } => experiment(&scenario, out.as_deref()),
        Cmd::Audit {
            traces,
            scenario,
            bridge_cmd,
        } => audit(&traces, scenario.as_deref(), bridge_cmd.as_deref()),
        Cmd::Compare { a, b, tol } => compare(&a, &b, tol),
        Cmd::BridgeTest { bridge_cmd } => {
            let mut client = spawn_bridge(&bridge_cmd)?;
            let checks = conformance_suite(&mut client);
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in &checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                println!("{status} {} {}", c.name, c.detail);
            }
            if failed > 0 {
                return Err(CliError::Regression(format!("{failed} of {} conformance checks failed", checks.len())));
            }
            Ok(())
        }
        Cmd::BridgeEcho => serve(io::stdin(), io::stdout(), echo_handler).map_err(run_err),
    }
}

fn shape_scene(shape: &str, points: usize, seed: u64) -> Result<Scene> {
    let spec = named_shape(shape).ok_or_else(|| CliError::Validation(format!("unknown shape '{shape}'")))?;
    Scene::generate(format!("{shape}/{seed}"), spec, points, seed).map_err(|e| CliError::Validation(e.to_string()))
}

fn gen(shape: &str, points: usize, seed: u64, format: PointFormat, out: Option<&Path>) -> Result<()> {
    let scene = shape_scene(shape, points, seed)?;
    let mut bytes = Vec::new();
    match format {
        PointFormat::Xyz => write_xyz(&scene.ground_truth, &mut bytes),
        PointFormat::Bin => write_binary(&scene.ground_truth, &mut bytes),
    }
    .map_err(run_err)?;
    match out {
        Some(p) => fs::write(p, bytes).map_err(run_err),
        None => io::stdout().write_all(&bytes).map_err(run_err),
    }
}

fn spawn_bridge(cmdline: &str) -> Result<BridgeClient> {
    let mut parts = cmdline.split_whitespace();
    let program = parts
        .next()
        .ok_or_else(|| CliError::Validation("empty bridge command".into()))?;
    let mut command = Command::new(program);
    command.args(parts);
    BridgeClient::spawn(&mut command, DEFAULT_TIMEOUT).map_err(run_err)
}

/// Method identity used for the trace header and for replay.
fn method_for(method: MethodArg, predictor: PredictorArg, mode: Mode) -> Option<Method> {
    Some(match (method, predictor, mode) {
        (MethodArg::VisMaxGt, _, _) => Method::VisMaxGt,
        (MethodArg::InfoMax, _, _) => Method::InfoMax,
        (MethodArg::ActiveHof, PredictorArg::Oracle, _) => Method::ActiveHofOracle,
        (MethodArg::ActiveHof, PredictorArg::Degraded, Mode::Dynamic) => Method::ActiveHof,
        (MethodArg::ActiveHof, PredictorArg::Degraded, Mode::Static) => Method::ActiveHofStatic,
        (MethodArg::ActiveHof, PredictorArg::External, _) => return None,
    })
}

const EXTERNAL: &str = "active_hof_external";

fn run_external(scene: &Scene, config: &PlannerConfig, bridge_cmd: Option<&str>) -> Result<PlanTrace> {
    let cmd = bridge_cmd.ok_or_else(|| CliError::Validation("--predictor external needs --bridge-cmd".into()))?;
    let predictor = ExternalPredictor::new(spawn_bridge(cmd)?);
    let mut t = run_active_hof(scene, &predictor, config, &viewing_space()).map_err(run_err)?;
    t.method = EXTERNAL.into();
    Ok(t)
}

fn plan(
    scene: &Scene,
    method: MethodArg,
    predictor: PredictorArg,
    config: &PlannerConfig,
    bridge_cmd: Option<&str>,
) -> Result<PlanTrace> {
    match method_for(method, predictor, config.mode) {
        Some(m) => {
            let scenario = Scenario {
                points: config.m,
                ..Default::default()
            };
            run_method(m, scene, &scenario, config).map_err(run_err)
        }
        None => run_external(scene, config, bridge_cmd),
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::from_toml(&read_file(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn experiment(path: &Path, out: Option<&Path>) -> Result<()> {
    let scenario = load_scenario(path)?;
    let result = run_experiment(&scenario).map_err(run_err)?;
    if let Some(dir) = out {
        let traces = dir.join("traces");
        fs::create_dir_all(&traces).map_err(run_err)?;
        write_file(&dir.join("summary.csv"), &result.summary.to_csv())?;
        write_file(&dir.join("runs.csv"), &result.runs.to_csv())?;
        for t in &result.traces {
            let name = format!("{}-{}.jsonl", t.method, t.scene.replace('/', "-"));
            write_file(&traces.join(name), &t.to_jsonl())?;
        }
    }
    print!("{}", result.summary.to_csv());
    let failed = result
        .runs
        .column("status")
        .map(|c| result.runs.rows.iter().filter(|r| r[c] != "ok").count())
        .unwrap_or(0);
    if failed > 0 {
        return Err(CliError::Run(format!("{failed} runs failed; see the status column")));
    }
    Ok(())
}

fn audit(paths: &[PathBuf], scenario: Option<&Path>, bridge_cmd: Option<&str>) -> Result<()> {
    let base = match scenario {
        Some(p) => load_scenario(p)?,
        None => Scenario::default(),
    };
    let mut diverged = 0;
    for path in paths {
        let recorded = PlanTrace::from_jsonl(&read_file(path)?)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let scene = scene_from_id(&recorded.scene, recorded.config.m).map_err(|e| CliError::Validation(e.to_string()))?;
        let fresh = if recorded.method == EXTERNAL {
            run_external(&scene, &recorded.config, bridge_cmd)?
        } else {
            let m = Method::from_name(&recorded.method)
                .ok_or_else(|| CliError::Validation(format!("unknown method '{}'", recorded.method)))?;
            let scenario = Scenario {
                points: recorded.config.m,
                ..base.clone()
            };
            run_method(m, &scene, &scenario, &recorded.config).map_err(run_err)?
        };
        match first_divergence(&recorded, &fresh) {
            None => println!("identical {}", path.display()),
            Some((step, detail)) => {
                diverged += 1;
                println!("diverged {} at step {step}: {detail}", path.display());
            }
        }
    }
    if diverged > 0 {
        return Err(CliError::Regression(format!("{diverged} of {} traces diverged", paths.len())));
    }
    Ok(())
}

fn compare(a: &Path, b: &Path, tol: f64) -> Result<()> {
    let (ta, tb) = (read_file(a)?, read_file(b)?);
    if let (Ok(x), Ok(y)) = (PlanTrace::from_jsonl(&ta), PlanTrace::from_jsonl(&tb)) {
        return match first_divergence(&x, &y) {
            None => Ok(()),
            Some((step, detail)) => Err(CliError::Regression(format!("traces diverge at step {step}: {detail}"))),
        };
    }
    let parse = |text: &str, p: &Path| {
        ResultTable::from_csv(text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
    };
    let diffs = compare_traces(&parse(&ta, a)?, &parse(&tb, b)?, tol).map_err(|e| CliError::Validation(e.to_string()))?;
    for d in &diffs {
        println!("row {} column {}: {} vs {}", d.row, d.column, d.a, d.b);
    }
    if !diffs.is_empty() {
        return Err(CliError::Regression(format!("{} cells differ beyond {tol}", diffs.len())));
    }
    Ok(())
}
