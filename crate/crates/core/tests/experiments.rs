use active_hof::experiments::{
    coverage_summary, coverage_table, run_experiment, CoverageRun, ExperimentKind, Method, Scenario,
};

#[test]
fn coverage_table_has_one_row_per_method_and_alpha() {
    let s = Scenario {
        trials: 2,
        points: 1500,
        ..Default::default()
    };
    let out = run_experiment(&s).unwrap();
    assert_eq!(out.summary.rows.len(), 9);
    assert_eq!(out.runs.rows.len(), 18);
    assert_eq!(out.traces.len(), 6);
    let c = out.summary.column("stddev").unwrap();
    assert!(out.summary.rows.iter().all(|r| r[c].parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn failed_runs_are_marked_not_dropped() {
    let ok = CoverageRun {
        trial: 0,
        scene: "sphere/0".into(),
        method: Method::InfoMax,
        alpha: 0.9,
        views: 4,
        capped: false,
        final_coverage: 0.93,
        error: None,
    };
    let bad = CoverageRun {
        trial: 1,
        error: Some("predictor failed".into()),
        views: 0,
        final_coverage: f64::NAN,
        ..ok.clone()
    };
    let runs = [ok, bad];
    let t = coverage_table(&runs);
    let status = t.column("status").unwrap();
    assert_eq!(t.rows[0][status], "ok");
    assert_eq!(t.rows[1][status], "failed: predictor failed");
    let s = coverage_summary(&runs, &[Method::InfoMax], &[0.9]);
    let col = |n: &str| s.column(n).unwrap();
    assert_eq!(s.rows[0][col("mean_views")], "4");
    assert_eq!(s.rows[0][col("trials")], "2");
    assert_eq!(s.rows[0][col("failures")], "1");
}

#[test]
fn iou_column_is_monotone_for_small_run() {
    let s = Scenario {
        experiment: ExperimentKind::Iou,
        trials: 6,
        points: 2000,
        ..Default::default()
    };
    let out = run_experiment(&s).unwrap();
    let c = out.summary.column("mean_iou").unwrap();
    let degraded: Vec<f64> = out.summary.rows[..4].iter().map(|r| r[c].parse().unwrap()).collect();
    assert!(degraded.windows(2).all(|w| w[1] >= w[0]), "{degraded:?}");
    assert!(out.summary.rows[4..].iter().all(|r| r[c] == "1"));
}
