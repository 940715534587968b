use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gazescore::gcs::{NormScore, NormalizedBundle, RunSummary, Setting};
use gazescore::movement::MovementStats;
use gazescore::report::write_runs_csv;
use gazescore::MetricBundle;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gazescore"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_manifest(dir: &Path, id: &str) {
    fs::write(
        dir.join(format!("{id}.toml")),
        format!("run_id = \"{id}\"\nsetting = \"fov_per\"\npatch_size = 8\nsteps = 12\nscanpath_file = \"{id}.csv\"\n"),
    )
    .unwrap();
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--seed", "7", "--out", "a.csv"]);
    ok(d, &["synth", "--seed", "7", "--out", "b.csv"]);
    ok(d, &["synth", "--seed", "8", "--out", "c.csv"]);
    let a = fs::read(d.join("a.csv")).unwrap();
    assert_eq!(a, fs::read(d.join("b.csv")).unwrap());
    assert_ne!(a, fs::read(d.join("c.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 200 * 12);
}

#[test]
fn calibrate_then_eval_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--n", "60", "--width", "128", "--height", "128", "--out", "humans.csv"]);
    ok(d, &["synth", "--n", "60", "--width", "128", "--height", "128", "--std", "0.3", "--seed", "9", "--out", "wide.csv"]);
    let cal = ok(d, &["calibrate", "--humans", "humans.csv", "--width", "128", "--height", "128", "--out", "cal.txt"]);
    assert!(cal.contains("# map.sigma = 8.0"));
    let text = fs::read_to_string(d.join("cal.txt")).unwrap();
    assert!(text.contains("format = \"gazescore-calibration/1\""));

    write_manifest(d, "wide");
    let eval = ok(d, &["eval", "--calibration", "cal.txt", "--humans", "humans.csv", "--manifest", "wide.toml", "--lambda", "0.25"]);
    assert!(eval.contains("# gcs.lambda = 0.25"));
    let runs = fs::read_to_string(d.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 2);
    assert!(runs.lines().next().unwrap().ends_with("fingerprint"));

    // a second eval of the same run replaces its row
    ok(d, &["eval", "--calibration", "cal.txt", "--humans", "humans.csv", "--manifest", "wide.toml"]);
    assert_eq!(fs::read_to_string(d.join("runs.csv")).unwrap().lines().count(), 2);

    ok(d, &["report", "--runs", "runs.csv"]);
    let table = fs::read_to_string(d.join("regimes.txt")).unwrap();
    assert!(table.contains("Best GCS") && table.contains("wide"));

    ok(d, &["bias", "--humans", "humans.csv", "--width", "128", "--height", "128", "--grid", "4"]);
    let radial = fs::read_to_string(d.join("bias_radial.csv")).unwrap();
    assert_eq!(radial.lines().filter(|l| !l.starts_with('#')).count(), 1 + 12);
    assert!(d.join("bias_density.csv").exists());
}

#[test]
fn degenerate_calibration_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--n", "20", "--std", "0", "--out", "still.csv"]);
    let out = run(d, &["calibrate", "--humans", "still.csv", "--width", "512", "--height", "512"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn mismatched_metric_config_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--n", "30", "--out", "humans.csv"]);
    ok(d, &["synth", "--n", "30", "--seed", "3", "--out", "m.csv"]);
    ok(d, &["calibrate", "--humans", "humans.csv", "--width", "512", "--height", "512", "--out", "cal.txt"]);
    write_manifest(d, "m");
    let out = run(d, &["eval", "--calibration", "cal.txt", "--humans", "humans.csv", "--manifest", "m.toml", "--sigma", "20"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    fs::write(d.join("gcs.toml"), "[metric]\ngrid_cols = 5\n").unwrap();
    let out = run(d, &["eval", "--calibration", "cal.txt", "--humans", "humans.csv", "--manifest", "m.toml", "--config", "gcs.toml"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(d, &["calibrate", "--humans", "missing.csv", "--width", "512", "--height", "512"]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(d.join("bad.csv"), "image_id,step,x,y\nimg,0,1.0,oops\n").unwrap();
    let out = run(d, &["calibrate", "--humans", "bad.csv", "--width", "512", "--height", "512"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv:2"));

    let out = run(d, &["sensitivity", "--runs", "missing.csv", "--lambdas", "0,-1"]);
    assert_eq!(out.status.code(), Some(2));
}

fn summary(id: &str, debiased: f64, sim_move: f64) -> RunSummary {
    let score = NormScore { norm: debiased, debiased };
    RunSummary {
        run_id: id.into(),
        setting: Setting::FovPer,
        patch_size: 8,
        accuracy: None,
        n_pairs: 10,
        skipped_model: 0,
        skipped_human: 0,
        raw: MetricBundle { dtw: 100.0, sm: 0.5, nss: 1.0, auc: 0.7 },
        normalized: NormalizedBundle { dtw: score, sm: score, nss: score, auc: score },
        movement: MovementStats::default(),
        human_movement: MovementStats::default(),
        movement_distance: -sim_move.ln(),
        sim_move,
        lambda: 0.1,
        gcs: debiased + 0.1 * sim_move,
        fingerprint: "0123456789abcdef".into(),
    }
}

#[test]
fn sensitivity_flags_crossing_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let crossing = [summary("A", 0.05, 0.2), summary("B", 0.0, 0.8)];
    write_runs_csv(fs::File::create(d.join("runs.csv")).unwrap(), &crossing).unwrap();
    let text = ok(d, &["sensitivity", "--lambdas", "0,0.1,0.25,0.5", "--out", "sens.txt"]);
    assert_eq!(text, fs::read_to_string(d.join("sens.txt")).unwrap());
    assert!(text.contains("# fingerprint 0123456789abcdef"));
    assert!(text.contains("0.083333"), "{text}");

    let dominated = [summary("A", 0.05, 0.8), summary("B", 0.0, 0.2)];
    write_runs_csv(fs::File::create(d.join("runs.csv")).unwrap(), &dominated).unwrap();
    let text = ok(d, &["sensitivity"]);
    assert!(!text.contains("0.083333"), "{text}");
}
