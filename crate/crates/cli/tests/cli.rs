use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_active-hof");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_writes_requested_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sphere.xyz");
    let o = run(&["gen", "--shape", "sphere", "--points", "300", "--seed", "2", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().filter(|l| !l.trim().is_empty()).count(), 300);
    let again = run(&["gen", "--shape", "sphere", "--points", "300", "--seed", "2"]);
    assert_eq!(stdout(&again), text);
}

#[test]
fn validation_errors_exit_2() {
    assert_eq!(code(&run(&["gen", "--shape", "teapot"])), 2);
    assert_eq!(code(&run(&["plan", "--shape", "sphere", "--grid", "50"])), 2);
    assert_eq!(code(&run(&["plan", "--shape", "sphere", "--alpha", "1.5"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\nunknown_knob = 3\n").unwrap();
    assert_eq!(code(&run(&["experiment", path(&bad)])), 2);
    fs::write(&bad, "trials = 0\n").unwrap();
    assert_eq!(code(&run(&["experiment", path(&bad)])), 2);
}

#[test]
fn plan_then_audit_replays_and_catches_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let o = run(&[
        "plan", "--shape", "box", "--seed", "3", "--alpha", "0.8", "--points", "1500", "--trace", path(&trace),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("method,scene,alpha,views,capped,terminated_by,final_coverage\n"));
    assert!(out.contains("active_hof,box/3,0.8,"), "{out}");

    let o = run(&["audit", path(&trace)]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).starts_with("identical"));

    let text = fs::read_to_string(&trace).unwrap();
    let tampered = text.replacen("\"chosen\":", "\"chosen\":999,\"was\":", 1);
    assert_ne!(tampered, text);
    let t2 = dir.path().join("t2.jsonl");
    fs::write(&t2, tampered).unwrap();
    assert_eq!(code(&run(&["audit", path(&t2)])), 4);
    assert_eq!(code(&run(&["compare", path(&trace), path(&t2)])), 4);
    assert_eq!(code(&run(&["compare", path(&trace), path(&trace)])), 0);
}

#[test]
fn experiment_outputs_compare_by_seed() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = |first: u64| {
        format!(
            "name = \"smoke\"\nexperiment = \"coverage\"\ntrials = 2\nfirst_trial = {first}\npoints = 1500\n\
             alphas = [0.5, 0.7]\nmethods = [\"vis_max_gt\", \"info_max\"]\n"
        )
    };
    let mut outs = Vec::new();
    for (i, first) in [0u64, 0, 2].iter().enumerate() {
        let s = dir.path().join(format!("s{i}.toml"));
        fs::write(&s, scenario(*first)).unwrap();
        let out = dir.path().join(format!("out{i}"));
        let o = run(&["experiment", path(&s), "--out", path(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).starts_with("method,alpha,mean_views,stddev,cap_hits,trials,failures\n"));
        assert_eq!(fs::read_dir(out.join("traces")).unwrap().count(), 4);
        outs.push(out);
    }
    let runs = |i: usize| outs[i].join("runs.csv");
    assert_eq!(code(&run(&["compare", path(&runs(0)), path(&runs(1))])), 0);
    let o = run(&["compare", path(&runs(0)), path(&runs(2))]);
    assert_eq!(code(&o), 4);
    assert!(stdout(&o).contains("column scene"));
    let summary = outs[0].join("summary.csv");
    assert_eq!(code(&run(&["compare", path(&summary), path(&runs(0))])), 2);

    let traces: Vec<String> = fs::read_dir(outs[0].join("traces"))
        .unwrap()
        .map(|e| e.unwrap().path().to_str().unwrap().to_string())
        .collect();
    let mut args = vec!["audit"];
    args.extend(traces.iter().map(String::as_str));
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn bridge_conformance_against_echo_stub() {
    let cmd = format!("{BIN} bridge-echo");
    let o = run(&["bridge-test", "--bridge-cmd", &cmd]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 8);
}

#[test]
fn external_size_mismatch_is_a_run_failure() {
    // The echo stub returns the observed union, which is smaller than m.
    let cmd = format!("{BIN} bridge-echo");
    let o = run(&[
        "plan", "--shape", "sphere", "--points", "800", "--predictor", "external", "--bridge-cmd", &cmd,
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("expected 800"));
    assert_eq!(code(&run(&["plan", "--shape", "sphere", "--predictor", "external"])), 2);
}
