use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Deserialize;

use gazescore::baselines::{calibrate, CalibrationBounds, Corner};
use gazescore::gcs::{lambda_sensitivity, GcsConfig, RunScore, DEFAULT_LAMBDA};
use gazescore::io::{evidence_summary, load_evidence, load_scanpaths, save_scanpaths, synth_dataset, RunManifest};
use gazescore::metrics::{MetricConfig, ScanMatchConfig};
use gazescore::movement::MovementConfig;
use gazescore::report::{center_bias_diagnostics, evaluate_run, load_runs_csv, regime_table, upsert_runs, write_evidence_csv, write_runs_csv};
use gazescore::{Error, Frame, Source};

const EXIT_INPUT: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;
const EXIT_FINGERPRINT: u8 = 4;

#[derive(Parser)]
#[command(name = "gazescore", version, about = "Centre-debiased scanpath evaluation")]
struct Cli {
    /// Worker threads for per-image evaluation (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute identity, corner and centre anchors for a human dataset.
    Calibrate(CalibrateArgs),
    /// Score model runs against calibrated anchors and update runs.csv.
    Eval(EvalArgs),
    /// Build the regime table from runs.csv.
    Report(ReportArgs),
    /// Recompute GCS over a grid of lambdas and locate rank changes.
    Sensitivity(SensitivityArgs),
    /// Write a synthetic centre-biased human dataset.
    Synth(SynthArgs),
    /// Radial distance per step and fixation density of a human dataset.
    Bias(BiasArgs),
}

#[derive(Args)]
struct FrameArgs {
    #[arg(long)]
    width: u32,
    #[arg(long)]
    height: u32,
}

impl FrameArgs {
    fn frame(&self) -> gazescore::Result<Frame> {
        Frame::new(self.width, self.height)
    }
}

#[derive(Args, Default)]
struct MetricFlags {
    /// Gaussian sigma of fixation maps, in pixels (default: width / 16).
    #[arg(long)]
    sigma: Option<f64>,
    /// Map downsampling factor (default: 1 up to 128 px, else 4).
    #[arg(long)]
    downsample: Option<u32>,
    /// ScanMatch grid columns.
    #[arg(long)]
    grid_cols: Option<u32>,
    /// ScanMatch grid rows.
    #[arg(long)]
    grid_rows: Option<u32>,
    /// ScanMatch gap penalty (<= 0).
    #[arg(long, allow_hyphen_values = true)]
    gap_penalty: Option<f64>,
    /// ScanMatch substitution scale.
    #[arg(long)]
    substitution_scale: Option<f64>,
}

#[derive(Args, Default)]
struct MovementFlags {
    #[arg(long)]
    coverage_grid: Option<u32>,
    #[arg(long)]
    entropy_bins: Option<u32>,
    /// Saccades shorter than this many pixels count as collapsed.
    #[arg(long)]
    collapse_threshold: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Human scanpath CSV.
    #[arg(long)]
    humans: PathBuf,
    #[command(flatten)]
    frame: FrameArgs,
    /// Corner used for the lower anchor.
    #[arg(long, default_value = "tl")]
    corner: Corner,
    #[arg(long, default_value = "dataset")]
    dataset_id: String,
    /// TOML file with [metric] overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    metric: MetricFlags,
    #[arg(long, default_value = "calibration.txt")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Calibration file written by `calibrate`.
    #[arg(long)]
    calibration: PathBuf,
    /// Human scanpath CSV the calibration was computed on.
    #[arg(long)]
    humans: PathBuf,
    /// Run manifests.
    #[arg(long = "manifest", required = true)]
    manifests: Vec<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    /// TOML file with [metric], [movement] and [gcs] overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    metric: MetricFlags,
    #[command(flatten)]
    movement: MovementFlags,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, default_value = "runs.csv")]
    runs: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SensitivityArgs {
    #[arg(long, default_value = "runs.csv")]
    runs: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.25,0.5")]
    lambdas: Vec<f64>,
    /// Also write the table to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 512)]
    width: u32,
    #[arg(long, default_value_t = 512)]
    height: u32,
    #[arg(long, default_value_t = 12)]
    steps: usize,
    /// Standard deviation as a fraction of the frame width.
    #[arg(long, default_value_t = 0.15)]
    std: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BiasArgs {
    #[arg(long)]
    humans: PathBuf,
    #[command(flatten)]
    frame: FrameArgs,
    /// Density grid cells per side.
    #[arg(long, default_value_t = 16)]
    grid: u32,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    metric: MetricSection,
    #[serde(default)]
    movement: MovementSection,
    #[serde(default)]
    gcs: GcsSection,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct MetricSection {
    sigma: Option<f64>,
    downsample: Option<u32>,
    grid_cols: Option<u32>,
    grid_rows: Option<u32>,
    gap_penalty: Option<f64>,
    substitution_scale: Option<f64>,
    max_score_per_token: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct MovementSection {
    coverage_grid: Option<u32>,
    entropy_bins: Option<u32>,
    collapse_threshold: Option<f64>,
    tau: Option<f64>,
    epsilon: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct GcsSection {
    lambda: Option<f64>,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<ConfigFile> {
    let Some(path) = path else { return Ok(ConfigFile::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Flag, then config file, then `base`.
fn apply_metric(mut cfg: MetricConfig, file: &MetricSection, flags: &MetricFlags) -> MetricConfig {
    fn pick<T: Copy>(slot: &mut T, flag: Option<T>, file: Option<T>) {
        if let Some(v) = flag.or(file) {
            *slot = v;
        }
    }
    pick(&mut cfg.map.sigma, flags.sigma, file.sigma);
    pick(&mut cfg.map.downsample, flags.downsample, file.downsample);
    pick(&mut cfg.scanmatch.grid_cols, flags.grid_cols, file.grid_cols);
    pick(&mut cfg.scanmatch.grid_rows, flags.grid_rows, file.grid_rows);
    pick(&mut cfg.scanmatch.gap_penalty, flags.gap_penalty, file.gap_penalty);
    let regridded = flags.grid_cols.or(file.grid_cols).is_some() || flags.grid_rows.or(file.grid_rows).is_some();
    if regridded {
        // keep the farthest-cells-score-zero default on the new grid
        if let Ok(sm) = ScanMatchConfig::with_grid(cfg.scanmatch.grid_cols, cfg.scanmatch.grid_rows) {
            cfg.scanmatch.substitution_scale = sm.substitution_scale;
        }
    }
    pick(&mut cfg.scanmatch.substitution_scale, flags.substitution_scale, file.substitution_scale);
    pick(&mut cfg.scanmatch.max_score_per_token, None, file.max_score_per_token);
    cfg
}

fn apply_movement(mut cfg: MovementConfig, file: &MovementSection, flags: &MovementFlags) -> MovementConfig {
    fn pick<T: Copy>(slot: &mut T, flag: Option<T>, file: Option<T>) {
        if let Some(v) = flag.or(file) {
            *slot = v;
        }
    }
    pick(&mut cfg.coverage_grid, flags.coverage_grid, file.coverage_grid);
    pick(&mut cfg.entropy_bins, flags.entropy_bins, file.entropy_bins);
    pick(&mut cfg.collapse_threshold, flags.collapse_threshold, file.collapse_threshold);
    pick(&mut cfg.tau, flags.tau, file.tau);
    pick(&mut cfg.epsilon, flags.epsilon, file.epsilon);
    cfg
}

fn echo(lines: &[(String, String)]) {
    for (k, v) in lines {
        println!("# {k} = {v}");
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn cmd_calibrate(args: CalibrateArgs) -> anyhow::Result<()> {
    let frame = args.frame.frame()?;
    let file = load_config(args.config.as_deref())?;
    let cfg = apply_metric(MetricConfig::default_for(frame), &file.metric, &args.metric);
    let humans = load_scanpaths(&args.humans, frame, Source::Human)?;
    info!("{} human scanpaths from {}", humans.len(), args.humans.display());
    echo(&cfg.canonical_lines());
    let bounds = calibrate(&humans, &cfg, args.corner, &args.dataset_id)?;
    for w in bounds.ordering_warnings() {
        warn!("{w}");
    }
    bounds.save(&args.out)?;
    print!("{}", bounds.render_table());
    println!("wrote {}", args.out.display());
    Ok(())
}

fn load_evidence_rows(path: &Path) -> anyhow::Result<BTreeMap<String, (f64, f64, String)>> {
    let mut out = BTreeMap::new();
    if !path.exists() {
        return Ok(out);
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let [id, p, t, fp] = cols[..] else { bail!("{}:{}: malformed row", path.display(), i + 1) };
        let parse = |s: &str| s.parse::<f64>().with_context(|| format!("{}:{}", path.display(), i + 1));
        out.insert(id.to_string(), (parse(p)?, parse(t)?, fp.to_string()));
    }
    Ok(out)
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    let bounds = CalibrationBounds::load(&args.calibration)?;
    let frame = bounds.meta.frame()?;
    let file = load_config(args.config.as_deref())?;
    // the calibration's parameters are the default here; overriding them
    // surfaces as a fingerprint mismatch
    let metric = apply_metric(bounds.meta.config, &file.metric, &args.metric);
    let movement = apply_movement(MovementConfig::default_for(frame), &file.movement, &args.movement);
    let lambda = args.lambda.or(file.gcs.lambda).unwrap_or(DEFAULT_LAMBDA);
    let cfg = GcsConfig::new(lambda, metric, bounds, movement)?;
    echo(&metric.canonical_lines());
    echo(&movement.canonical_lines());
    println!("# gcs.lambda = {lambda:?}");
    println!("# fingerprint = {}", cfg.fingerprint());

    let humans = load_scanpaths(&args.humans, frame, Source::Human)?;
    let mut summaries = Vec::new();
    let mut evidence = Vec::new();
    for path in &args.manifests {
        let manifest = RunManifest::load(path)?;
        let summary = evaluate_run(&manifest, &humans, &cfg)?;
        if summary.skipped_model + summary.skipped_human > 0 {
            warn!(
                "{}: skipped {} model and {} human images without a counterpart",
                manifest.run_id, summary.skipped_model, summary.skipped_human
            );
        }
        println!("{:<24} pairs {:>6}  gcs {:.4}", summary.run_id, summary.n_pairs, summary.gcs);
        match &manifest.probability_file {
            Some(p) if p.exists() => {
                let traces = load_evidence(p)?;
                let point = evidence_summary(&traces, manifest.steps, &summary.movement)?;
                evidence.push((manifest.run_id.clone(), point, summary.fingerprint.clone()));
            }
            Some(p) => warn!("{}: probability file {} not found, skipping evidence", manifest.run_id, p.display()),
            None => {}
        }
        summaries.push(summary);
    }

    let runs_path = args.out_dir.join("runs.csv");
    let existing = if runs_path.exists() { load_runs_csv(&runs_path)? } else { Vec::new() };
    let merged = upsert_runs(existing, summaries);
    let mut w = create(&runs_path)?;
    write_runs_csv(&mut w, &merged)?;
    w.flush()?;
    println!("wrote {} ({} runs)", runs_path.display(), merged.len());

    if !evidence.is_empty() {
        let ev_path = args.out_dir.join("evidence_vs_movement.csv");
        let mut rows = load_evidence_rows(&ev_path)?;
        for (id, p, fp) in evidence {
            rows.insert(id, (p.mean_final_p_true, p.mean_total_path, fp));
        }
        let rows: Vec<_> = rows
            .into_iter()
            .map(|(id, (p, t, fp))| {
                let point = gazescore::io::EvidencePoint {
                    mean_final_p_true: p,
                    mean_total_path: t,
                };
                (id, point, fp)
            })
            .collect();
        let mut w = create(&ev_path)?;
        write_evidence_csv(&mut w, &rows)?;
        w.flush()?;
        println!("wrote {}", ev_path.display());
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> anyhow::Result<()> {
    let runs = load_runs_csv(&args.runs)?;
    let table = regime_table(&runs)?;
    let text = table.render_text();
    print!("{text}");
    let path = args.out_dir.join("regimes.txt");
    let mut w = create(&path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_sensitivity(args: SensitivityArgs) -> anyhow::Result<()> {
    let runs = load_runs_csv(&args.runs)?;
    let scores: Vec<RunScore> = runs.iter().map(|r| r.score()).collect();
    let report = lambda_sensitivity(&scores, &args.lambdas)?;
    let mut fps: Vec<&str> = runs.iter().map(|r| r.fingerprint.as_str()).collect();
    fps.sort_unstable();
    fps.dedup();
    let mut text = String::new();
    for f in fps {
        text.push_str(&format!("# fingerprint {f}\n"));
    }
    text.push_str(&report.render());
    print!("{text}");
    if let Some(out) = &args.out {
        let mut w = create(out)?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let frame = Frame::new(args.width, args.height)?;
    let paths = synth_dataset(args.n, frame, args.steps, args.std, args.seed)?;
    save_scanpaths(&args.out, &paths)?;
    println!(
        "wrote {} scanpaths ({} steps, std {} x width, seed {}) to {}",
        paths.len(),
        args.steps,
        args.std,
        args.seed,
        args.out.display()
    );
    Ok(())
}

fn cmd_bias(args: BiasArgs) -> anyhow::Result<()> {
    let frame = args.frame.frame()?;
    let humans = load_scanpaths(&args.humans, frame, Source::Human)?;
    let diag = center_bias_diagnostics(&humans, args.grid, args.grid)?;
    let radial = args.out_dir.join("bias_radial.csv");
    let mut w = create(&radial)?;
    diag.write_radial_csv(&mut w)?;
    w.flush()?;
    let density = args.out_dir.join("bias_density.csv");
    let mut w = create(&density)?;
    diag.write_density_csv(&mut w)?;
    w.flush()?;
    println!("# fingerprint = {}", diag.fingerprint());
    println!("{:>5} {:>8} {:>12}", "step", "n", "distance");
    for r in &diag.radial {
        println!("{:>5} {:>8} {:>12.3}", r.step, r.n, r.mean_distance);
    }
    println!("wrote {} and {}", radial.display(), density.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::DegenerateCalibration { .. }) => EXIT_DEGENERATE,
        Some(Error::FingerprintMismatch { .. }) => EXIT_FINGERPRINT,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    let result = match cli.command {
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
        Command::Sensitivity(a) => cmd_sensitivity(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Bias(a) => cmd_bias(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
