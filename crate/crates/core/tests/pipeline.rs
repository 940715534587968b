use std::fs;
use std::path::Path;

use gazescore::baselines::{calibrate, CalibrationBounds, Corner, MetricBounds};
use gazescore::gcs::{lambda_sensitivity, normalize_dtw, GcsConfig, RunScore, Setting};
use gazescore::io::{gaze_cifar, load_evidence, load_scanpaths, save_scanpaths, synth_dataset, evidence_summary, RunManifest};
use gazescore::metrics::MetricConfig;
use gazescore::movement::MovementConfig;
use gazescore::report::{evaluate_run, load_runs_csv, regime_table, write_runs_csv};
use gazescore::{Frame, Source};

fn write_manifest(dir: &Path, run_id: &str, setting: &str, patch: u32, accuracy: f64, with_probs: bool) {
    let mut text = format!(
        "run_id = \"{run_id}\"\nsetting = \"{setting}\"\npatch_size = {patch}\nsteps = 12\naccuracy = {accuracy}\nscanpath_file = \"paths/{run_id}.csv\"\n"
    );
    if with_probs {
        text.push_str(&format!("probability_file = \"probs/{run_id}.csv\"\n"));
    }
    fs::write(dir.join(format!("{run_id}.toml")), text).unwrap();
}

#[test]
fn files_to_regime_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir_all(d.join("paths")).unwrap();
    fs::create_dir_all(d.join("probs")).unwrap();
    let f = Frame::new(256, 256).unwrap();

    save_scanpaths(&d.join("humans.csv"), &synth_dataset(120, f, 12, 0.15, 7).unwrap()).unwrap();
    let runs = [
        ("tight", "fov_only", 4, 0.40, 0.05, 11),
        ("matched", "fov+per", 8, 0.55, 0.15, 12),
        ("wide", "big_per", 16, 0.60, 0.35, 13),
    ];
    for &(id, setting, patch, acc, std, seed) in &runs {
        let models: Vec<_> = synth_dataset(120, f, 12, std, seed)
            .unwrap()
            .into_iter()
            .map(|p| p.with_source(Source::Model))
            .collect();
        save_scanpaths(&d.join("paths").join(format!("{id}.csv")), &models).unwrap();
        write_manifest(d, id, setting, patch, acc, id == "matched");
    }
    let mut probs = String::from("image_id,step,p_true\n");
    for i in 0..120 {
        for s in 0..12 {
            probs.push_str(&format!("img{i:06},{s},{}\n", (s as f64 + 1.0) / 16.0));
        }
    }
    fs::write(d.join("probs/matched.csv"), probs).unwrap();

    let humans = load_scanpaths(&d.join("humans.csv"), f, Source::Human).unwrap();
    assert_eq!(humans.len(), 120);
    let bounds = calibrate(&humans, &MetricConfig::default_for(f), Corner::Tl, "synth").unwrap();
    bounds.save(&d.join("calibration.txt")).unwrap();
    let loaded = CalibrationBounds::load(&d.join("calibration.txt")).unwrap();
    assert_eq!(loaded, bounds);

    let cfg = GcsConfig::from_bounds(0.1, loaded, MovementConfig::default_for(f)).unwrap();
    let mut summaries = Vec::new();
    for &(id, ..) in &runs {
        let manifest = RunManifest::load(&d.join(format!("{id}.toml"))).unwrap();
        let s = evaluate_run(&manifest, &humans, &cfg).unwrap();
        assert_eq!(s.n_pairs, 120);
        assert_eq!(s.fingerprint, cfg.fingerprint());
        if let Some(p) = &manifest.probability_file {
            let traces = load_evidence(p).unwrap();
            let point = evidence_summary(&traces, manifest.steps, &s.movement).unwrap();
            assert_eq!(point.mean_final_p_true, 0.75);
            assert_eq!(point.mean_total_path, s.movement.total_path);
        }
        summaries.push(s);
    }

    // the run drawn from the human distribution beats the tight cluster on
    // debiased similarity
    let gcs = |id: &str| summaries.iter().find(|s| s.run_id == id).unwrap().gcs;
    assert!(gcs("matched") > gcs("tight"));

    let runs_csv = d.join("runs.csv");
    write_runs_csv(fs::File::create(&runs_csv).unwrap(), &summaries).unwrap();
    let back = load_runs_csv(&runs_csv).unwrap();
    assert_eq!(back.len(), 3);
    for s in &summaries {
        let b = back.iter().find(|b| b.run_id == s.run_id).unwrap();
        assert_eq!(b.gcs, s.gcs);
        assert_eq!(b.raw, s.raw);
        assert_eq!(b.setting, s.setting);
    }

    let table = regime_table(&back).unwrap();
    assert_eq!(table.fingerprints, vec![cfg.fingerprint()]);
    let best_gcs = table.rows.iter().find(|r| r.label == "Best GCS").unwrap();
    let top = back.iter().max_by(|a, b| a.gcs.total_cmp(&b.gcs)).unwrap();
    assert_eq!(best_gcs.run_id, top.run_id);
    assert!(table.render_text().contains("Best GCS"));

    let scores: Vec<RunScore> = back.iter().map(|r| r.score()).collect();
    let report = lambda_sensitivity(&scores, &[0.0, 0.1, 0.25, 0.5]).unwrap();
    assert_eq!(report.rows.len(), 4);
    assert_eq!(report.rows[1].winner, top.run_id);
}

#[test]
fn normalized_adapter_feeds_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let f = Frame::new(101, 101).unwrap();
    let mut text = String::from("image_id,step,x,y\n");
    for i in 0..20 {
        for s in 0..gaze_cifar::STEPS {
            let t = (i * 12 + s) as f64;
            text.push_str(&format!("c{i:03},{s},{},{}\n", 0.5 + 0.2 * (t * 0.7).sin(), 0.5 + 0.2 * (t * 1.3).cos()));
        }
    }
    let path = dir.path().join("gaze.csv");
    fs::write(&path, text).unwrap();
    let humans = gaze_cifar::load_normalized(&path, f, Source::Human).unwrap();
    assert_eq!(humans.len(), 20);
    assert!(humans.iter().all(|h| h.len() == gaze_cifar::STEPS));
    let bounds = calibrate(&humans, &MetricConfig::default_for(f), Corner::Tl, "gaze").unwrap();
    assert_eq!(bounds.dtw.upper, 0.0);
    assert!(bounds.dtw.center < bounds.dtw.lower);
}

// Rescaling raw DTW values together with both anchors leaves the normalised
// score unchanged: exactly for powers of two, to rounding otherwise.
#[test]
fn dtw_normalisation_is_scale_free() {
    let anchors = [(0.0, 2023.87), (0.003, 2023.87), (12.5, 480.0)];
    for (upper, lower) in anchors {
        let b = MetricBounds { upper, lower, center: (upper + lower) / 2.0 };
        for d in [upper, lower, 100.0, 702.24, 3000.0] {
            let base = normalize_dtw(d, &b).unwrap();
            for k in [0.25, 4.0, 1024.0] {
                let scaled = MetricBounds { upper: k * upper, lower: k * lower, center: k * b.center };
                assert_eq!(normalize_dtw(k * d, &scaled).unwrap(), base);
            }
            for k in [0.3, 7.1, 1e5] {
                let scaled = MetricBounds { upper: k * upper, lower: k * lower, center: k * b.center };
                assert!((normalize_dtw(k * d, &scaled).unwrap() - base).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn setting_spellings_round_trip_through_manifests() {
    for s in Setting::ALL {
        let m: RunManifest = toml::from_str(&format!(
            "run_id = \"r\"\nsetting = \"{s}\"\npatch_size = 2\nsteps = 12\nscanpath_file = \"r.csv\""
        ))
        .unwrap();
        assert_eq!(m.setting, s);
    }
}
