//! Run evaluation, regime tables and centre-bias diagnostics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::domain::{CompensatedSum, Frame, MetricBundle, MetricKind, Scanpath, Source};
use crate::error::{Error, Result};
use crate::gcs::{gcs_score, GcsConfig, NormScore, NormalizedBundle, RunSummary, Setting};
use crate::io::{fingerprint, load_scanpaths, EvidencePoint, RunManifest};
use crate::metrics::MetricEngine;
use crate::movement::{movement_distance, movement_similarity, movement_stats, MovementConfig, MovementStats, FEATURE_COUNT};

/// Model and human paths matched by image id.
#[derive(Debug, Clone)]
pub struct Pairing<'a> {
    /// Sorted by image id.
    pub pairs: Vec<(&'a Scanpath, &'a Scanpath)>,
    pub skipped_model: usize,
    pub skipped_human: usize,
}

fn index_by_id<'a>(paths: &'a [Scanpath], side: &str) -> Result<BTreeMap<&'a str, &'a Scanpath>> {
    let mut out = BTreeMap::new();
    for p in paths {
        if out.insert(p.image_id(), p).is_some() {
            return Err(Error::InvalidConfig(format!("duplicate {side} image id {:?}", p.image_id())));
        }
    }
    Ok(out)
}

pub fn pair_by_image<'a>(models: &'a [Scanpath], humans: &'a [Scanpath]) -> Result<Pairing<'a>> {
    let models = index_by_id(models, "model")?;
    let humans = index_by_id(humans, "human")?;
    let pairs: Vec<_> = models
        .iter()
        .filter_map(|(id, m)| humans.get(id).map(|h| (*m, *h)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(Pairing {
        skipped_model: models.len() - pairs.len(),
        skipped_human: humans.len() - pairs.len(),
        pairs,
    })
}

/// Everything computed for one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScores {
    pub bundle: MetricBundle,
    pub model: MovementStats,
    pub human: MovementStats,
}

pub fn score_pair(engine: &MetricEngine, movement: &MovementConfig, model: &Scanpath, human: &Scanpath) -> Result<PairScores> {
    let frame = human.frame();
    Ok(PairScores {
        bundle: engine.bundle(model, human)?,
        model: movement_stats(model, frame, movement)?,
        human: movement_stats(human, frame, movement)?,
    })
}

/// Scores pairs in parallel; the result keeps the input order.
pub fn score_pairs(
    engine: &MetricEngine,
    movement: &MovementConfig,
    pairs: &[(&Scanpath, &Scanpath)],
) -> Result<Vec<PairScores>> {
    pairs
        .par_iter()
        .map(|(m, h)| score_pair(engine, movement, m, h))
        .collect()
}

/// Running sums behind a run's dataset means. Totals from disjoint shards
/// can be merged, so a dataset may be evaluated in pieces.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunTotals {
    metrics: [CompensatedSum; 4],
    model: [CompensatedSum; FEATURE_COUNT],
    human: [CompensatedSum; FEATURE_COUNT],
}

impl RunTotals {
    pub fn add(&mut self, s: &PairScores) {
        for (acc, kind) in self.metrics.iter_mut().zip(MetricKind::ALL) {
            acc.add(s.bundle.get(kind));
        }
        for (acc, v) in self.model.iter_mut().zip(s.model.features()) {
            acc.add(v);
        }
        for (acc, v) in self.human.iter_mut().zip(s.human.features()) {
            acc.add(v);
        }
    }

    pub fn merge(&mut self, other: &RunTotals) {
        let pairs = self.metrics.iter_mut().zip(&other.metrics);
        let model = self.model.iter_mut().zip(&other.model);
        let human = self.human.iter_mut().zip(&other.human);
        for (a, b) in pairs.chain(model).chain(human) {
            a.merge(b);
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.metrics[0].count()
    }

    pub fn raw_means(&self) -> Result<MetricBundle> {
        Ok(MetricBundle {
            dtw: self.metrics[0].mean()?,
            sm: self.metrics[1].mean()?,
            nss: self.metrics[2].mean()?,
            auc: self.metrics[3].mean()?,
        })
    }

    fn movement_mean(acc: &[CompensatedSum; FEATURE_COUNT]) -> Result<MovementStats> {
        let mut f = [0.0; FEATURE_COUNT];
        for (o, a) in f.iter_mut().zip(acc) {
            *o = a.mean()?;
        }
        Ok(MovementStats::from_features(f))
    }

    pub fn model_movement(&self) -> Result<MovementStats> {
        Self::movement_mean(&self.model)
    }

    /// Movement of the matched human paths, the reference the model's
    /// movement is compared with.
    pub fn human_movement(&self) -> Result<MovementStats> {
        Self::movement_mean(&self.human)
    }
}

impl<'a> FromIterator<&'a PairScores> for RunTotals {
    fn from_iter<I: IntoIterator<Item = &'a PairScores>>(iter: I) -> Self {
        let mut t = RunTotals::default();
        for s in iter {
            t.add(s);
        }
        t
    }
}

/// Turns accumulated totals into a run summary.
pub fn summarize(
    manifest: &RunManifest,
    totals: &RunTotals,
    skipped_model: usize,
    skipped_human: usize,
    cfg: &GcsConfig,
) -> Result<RunSummary> {
    let raw = totals.raw_means()?;
    let normalized = NormalizedBundle::from_raw(&raw, &cfg.bounds)?;
    let movement = totals.model_movement()?;
    let human_movement = totals.human_movement()?;
    let d = movement_distance(&movement, &human_movement, cfg.movement.epsilon);
    let sim_move = movement_similarity(d, cfg.movement.tau);
    Ok(RunSummary {
        run_id: manifest.run_id.clone(),
        setting: manifest.setting,
        patch_size: manifest.patch_size,
        accuracy: manifest.accuracy,
        n_pairs: totals.n_pairs(),
        skipped_model,
        skipped_human,
        raw,
        normalized,
        movement,
        human_movement,
        movement_distance: d,
        sim_move,
        lambda: cfg.lambda,
        gcs: gcs_score(&normalized, sim_move, cfg.lambda),
        fingerprint: cfg.fingerprint(),
    })
}

/// Evaluates already-loaded model paths against the human dataset.
pub fn evaluate_paths(manifest: &RunManifest, models: &[Scanpath], humans: &[Scanpath], cfg: &GcsConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let frame = cfg.bounds.meta.frame()?;
    if let Some(p) = models.iter().chain(humans).find(|p| p.frame() != frame) {
        return Err(Error::FrameMismatch {
            left: frame.to_string(),
            right: p.frame().to_string(),
        });
    }
    let pairing = pair_by_image(models, humans)?;
    let engine = MetricEngine::new(cfg.metric)?;
    let scores = score_pairs(&engine, &cfg.movement, &pairing.pairs)?;
    let totals: RunTotals = scores.iter().collect();
    summarize(manifest, &totals, pairing.skipped_model, pairing.skipped_human, cfg)
}

/// Loads the run's scanpath file (in the calibration frame) and evaluates
/// it.
pub fn evaluate_run(manifest: &RunManifest, humans: &[Scanpath], cfg: &GcsConfig) -> Result<RunSummary> {
    cfg.check_fingerprint()?;
    let frame = cfg.bounds.meta.frame()?;
    if let Some(declared) = manifest.frame()? {
        if declared != frame {
            return Err(Error::FrameMismatch {
                left: frame.to_string(),
                right: declared.to_string(),
            });
        }
    }
    let models = load_scanpaths(&manifest.scanpath_file, frame, Source::Model)?;
    evaluate_paths(manifest, &models, humans, cfg)
}

const RUN_COLUMNS: &[&str] = &[
    "run_id",
    "setting",
    "patch_size",
    "accuracy",
    "n_pairs",
    "skipped_model",
    "skipped_human",
    "dtw",
    "sm",
    "nss",
    "auc",
    "dtw_norm",
    "sm_norm",
    "nss_norm",
    "auc_norm",
    "dtw_debiased",
    "sm_debiased",
    "nss_debiased",
    "auc_debiased",
    "total_path",
    "mean_saccade_amplitude",
    "mean_center_distance",
    "coverage",
    "direction_entropy",
    "collapse_rate",
    "human_total_path",
    "human_mean_saccade_amplitude",
    "human_mean_center_distance",
    "human_coverage",
    "human_direction_entropy",
    "human_collapse_rate",
    "movement_distance",
    "sim_move",
    "lambda",
    "gcs",
    "fingerprint",
];

fn run_record(s: &RunSummary) -> Vec<String> {
    let mut r = vec![
        s.run_id.clone(),
        s.setting.to_string(),
        s.patch_size.to_string(),
        s.accuracy.map(|a| a.to_string()).unwrap_or_default(),
        s.n_pairs.to_string(),
        s.skipped_model.to_string(),
        s.skipped_human.to_string(),
    ];
    r.extend(MetricKind::ALL.iter().map(|&k| s.raw.get(k).to_string()));
    r.extend(MetricKind::ALL.iter().map(|&k| s.normalized.get(k).norm.to_string()));
    r.extend(MetricKind::ALL.iter().map(|&k| s.normalized.get(k).debiased.to_string()));
    r.extend(s.movement.features().iter().map(f64::to_string));
    r.extend(s.human_movement.features().iter().map(f64::to_string));
    r.extend([s.movement_distance, s.sim_move, s.lambda, s.gcs].iter().map(f64::to_string));
    r.push(s.fingerprint.clone());
    r
}

fn sort_key(s: &RunSummary) -> (Setting, u32, &str) {
    (s.setting, s.patch_size, &s.run_id)
}

fn write_err(e: csv::Error) -> Error {
    Error::format("<output>", e.to_string())
}

/// Writes runs sorted by (setting, patch_size, run_id) with every float at
/// full precision.
pub fn write_runs_csv<W: Write>(writer: W, runs: &[RunSummary]) -> Result<()> {
    let mut sorted: Vec<&RunSummary> = runs.iter().collect();
    sorted.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RUN_COLUMNS).map_err(write_err)?;
    for s in sorted {
        w.write_record(run_record(s)).map_err(write_err)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

pub fn read_runs_csv<R: Read>(reader: R, origin: &Path) -> Result<Vec<RunSummary>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(origin, e.to_string()))?
        .clone();
    if headers.iter().ne(RUN_COLUMNS.iter().copied()) {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            line: 1,
            message: "unexpected runs header".into(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::format(origin, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message: format!("invalid {what}"),
        };
        let num = |i: usize| -> Result<f64> { rec[i].parse().map_err(|_| bad(RUN_COLUMNS[i])) };
        let count = |i: usize| -> Result<usize> { rec[i].parse().map_err(|_| bad(RUN_COLUMNS[i])) };
        let score = |i: usize| -> Result<NormScore> {
            Ok(NormScore {
                norm: num(i)?,
                debiased: num(i + 4)?,
            })
        };
        let features = |start: usize| -> Result<MovementStats> {
            let mut f = [0.0; FEATURE_COUNT];
            for (k, v) in f.iter_mut().enumerate() {
                *v = num(start + k)?;
            }
            Ok(MovementStats::from_features(f))
        };
        out.push(RunSummary {
            run_id: rec[0].to_string(),
            setting: rec[1].parse()?,
            patch_size: rec[2].parse().map_err(|_| bad("patch_size"))?,
            accuracy: if rec[3].is_empty() { None } else { Some(num(3)?) },
            n_pairs: count(4)?,
            skipped_model: count(5)?,
            skipped_human: count(6)?,
            raw: MetricBundle {
                dtw: num(7)?,
                sm: num(8)?,
                nss: num(9)?,
                auc: num(10)?,
            },
            normalized: NormalizedBundle {
                dtw: score(11)?,
                sm: score(12)?,
                nss: score(13)?,
                auc: score(14)?,
            },
            movement: features(19)?,
            human_movement: features(25)?,
            movement_distance: num(31)?,
            sim_move: num(32)?,
            lambda: num(33)?,
            gcs: num(34)?,
            fingerprint: rec[35].to_string(),
        });
    }
    Ok(out)
}

pub fn load_runs_csv(path: &Path) -> Result<Vec<RunSummary>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_runs_csv(std::io::BufReader::new(file), path)
}

/// Replaces rows with the same run id and keeps the rest.
pub fn upsert_runs(existing: Vec<RunSummary>, updates: Vec<RunSummary>) -> Vec<RunSummary> {
    let mut by_id: BTreeMap<String, RunSummary> = existing.into_iter().map(|r| (r.run_id.clone(), r)).collect();
    for r in updates {
        by_id.insert(r.run_id.clone(), r);
    }
    let mut out: Vec<RunSummary> = by_id.into_values().collect();
    out.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
    out
}

/// One selected configuration of the regime table.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeRow {
    pub label: String,
    pub run_id: String,
    pub setting: Setting,
    pub patch_size: u32,
    pub accuracy: Option<f64>,
    pub dtw: f64,
    pub sm: f64,
    pub auc: f64,
    pub total_path: f64,
    pub gcs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeTable {
    pub rows: Vec<RegimeRow>,
    /// Distinct run fingerprints, sorted.
    pub fingerprints: Vec<String>,
}

/// Index of the run maximising `score`; ties go to the smallest
/// (setting, patch_size, run_id).
fn select(runs: &[RunSummary], score: impl Fn(&RunSummary) -> Option<f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in runs.iter().enumerate() {
        let Some(v) = score(r) else { continue };
        let better = match best {
            None => true,
            Some((j, b)) => v > b || (v == b && sort_key(r) < sort_key(&runs[j])),
        };
        if better {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Best raw DTW, SM and AUC, best accuracy and best GCS, overall and per
/// setting. Runs without accuracy only drop out of the accuracy rows.
pub fn regime_table(summaries: &[RunSummary]) -> Result<RegimeTable> {
    if summaries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let row = |label: String, i: usize| {
        let r = &summaries[i];
        RegimeRow {
            label,
            run_id: r.run_id.clone(),
            setting: r.setting,
            patch_size: r.patch_size,
            accuracy: r.accuracy,
            dtw: r.raw.dtw,
            sm: r.raw.sm,
            auc: r.raw.auc,
            total_path: r.movement.total_path,
            gcs: r.gcs,
        }
    };
    let mut rows = Vec::new();
    let mut push = |label: String, pick: Option<usize>| {
        if let Some(i) = pick {
            rows.push(row(label, i));
        }
    };
    push("Best raw DTW".into(), select(summaries, |r| Some(-r.raw.dtw)));
    push("Best raw SM".into(), select(summaries, |r| Some(r.raw.sm)));
    push("Best raw AUC".into(), select(summaries, |r| Some(r.raw.auc)));
    push("Best Acc".into(), select(summaries, |r| r.accuracy));
    for s in Setting::ALL {
        push(format!("Best Acc ({s})"), select(summaries, |r| r.accuracy.filter(|_| r.setting == s)));
    }
    push("Best GCS".into(), select(summaries, |r| Some(r.gcs)));
    for s in Setting::ALL {
        push(format!("Best GCS ({s})"), select(summaries, |r| (r.setting == s).then_some(r.gcs)));
    }
    let mut fingerprints: Vec<String> = summaries.iter().map(|r| r.fingerprint.clone()).collect();
    fingerprints.sort();
    fingerprints.dedup();
    Ok(RegimeTable { rows, fingerprints })
}

impl RegimeTable {
    /// Aligned text; accuracy in percent, GCS to four decimals, "—" for a
    /// missing accuracy.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for f in &self.fingerprints {
            let _ = writeln!(out, "# fingerprint {f}");
        }
        let _ = writeln!(
            out,
            "{:<22} {:<9} {:>5} {:>7} {:>9} {:>6} {:>6} {:>8} {:>8}  Run",
            "Regime", "Setting", "Patch", "Acc", "DTW", "SM", "AUC", "Path", "GCS"
        );
        for r in &self.rows {
            let acc = r.accuracy.map_or_else(|| "—".to_string(), |a| format!("{:.2}%", 100.0 * a));
            let _ = writeln!(
                out,
                "{:<22} {:<9} {:>5} {:>7} {:>9.2} {:>6.3} {:>6.3} {:>8.1} {:>8.4}  {}",
                r.label, r.setting, r.patch_size, acc, r.dtw, r.sm, r.auc, r.total_path, r.gcs, r.run_id
            );
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "regime", "run_id", "setting", "patch_size", "accuracy", "dtw", "sm", "auc", "total_path", "gcs", "fingerprints",
        ])
        .map_err(write_err)?;
        let fps = self.fingerprints.join(";");
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.run_id.clone(),
                r.setting.to_string(),
                r.patch_size.to_string(),
                r.accuracy.map(|a| a.to_string()).unwrap_or_default(),
                r.dtw.to_string(),
                r.sm.to_string(),
                r.auc.to_string(),
                r.total_path.to_string(),
                r.gcs.to_string(),
                fps.clone(),
            ])
            .map_err(write_err)?;
        }
        w.flush().map_err(|e| Error::io("<output>", e))
    }
}

/// Mean distance to the frame centre at one fixation index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialRow {
    /// Zero-based position within the path.
    pub step: usize,
    pub n: usize,
    pub mean_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub cols: u32,
    pub rows: u32,
    /// Row-major fixation counts.
    pub counts: Vec<u64>,
}

impl DensityGrid {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn get(&self, col: u32, row: u32) -> u64 {
        self.counts[(row * self.cols + col) as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasDiagnostics {
    pub frame: Frame,
    pub radial: Vec<RadialRow>,
    pub density: DensityGrid,
}

/// Per-step radial distance to the centre and a fixation histogram over a
/// `grid_cols x grid_rows` grid.
pub fn center_bias_diagnostics(humans: &[Scanpath], grid_cols: u32, grid_rows: u32) -> Result<BiasDiagnostics> {
    let frame = humans.first().ok_or(Error::EmptyDataset)?.frame();
    if grid_cols == 0 || grid_rows == 0 {
        return Err(Error::InvalidGrid(format!("{grid_cols}x{grid_rows}")));
    }
    let center = frame.center();
    let mut radial: Vec<CompensatedSum> = Vec::new();
    let mut counts = vec![0u64; (grid_cols * grid_rows) as usize];
    let bin = |v: f64, extent: u32, bins: u32| -> u32 {
        let b = (v * f64::from(bins) / f64::from(extent)).floor();
        (b.max(0.0) as u32).min(bins - 1)
    };
    for path in humans {
        if path.frame() != frame {
            return Err(Error::FrameMismatch {
                left: frame.to_string(),
                right: path.frame().to_string(),
            });
        }
        for (i, p) in path.points().enumerate() {
            if radial.len() <= i {
                radial.push(CompensatedSum::new());
            }
            radial[i].add(p.distance(&center));
            let (c, r) = (bin(p.x, frame.width(), grid_cols), bin(p.y, frame.height(), grid_rows));
            counts[(r * grid_cols + c) as usize] += 1;
        }
    }
    let radial = radial
        .iter()
        .enumerate()
        .map(|(step, acc)| {
            Ok(RadialRow {
                step,
                n: acc.count(),
                mean_distance: acc.mean()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BiasDiagnostics {
        frame,
        radial,
        density: DensityGrid {
            cols: grid_cols,
            rows: grid_rows,
            counts,
        },
    })
}

impl BiasDiagnostics {
    pub fn fingerprint(&self) -> String {
        fingerprint(&[
            ("frame".into(), self.frame.to_string()),
            ("bias.grid".into(), format!("{}x{}", self.density.cols, self.density.rows)),
        ])
    }

    pub fn write_radial_csv<W: Write>(&self, writer: W) -> Result<()> {
        let fp = self.fingerprint();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "n", "mean_center_distance", "fingerprint"]).map_err(write_err)?;
        for r in &self.radial {
            w.write_record([r.step.to_string(), r.n.to_string(), r.mean_distance.to_string(), fp.clone()])
                .map_err(write_err)?;
        }
        w.flush().map_err(|e| Error::io("<output>", e))
    }

    pub fn write_density_csv<W: Write>(&self, writer: W) -> Result<()> {
        let fp = self.fingerprint();
        let total = self.density.total().max(1) as f64;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row", "col", "count", "fraction", "fingerprint"]).map_err(write_err)?;
        for row in 0..self.density.rows {
            for col in 0..self.density.cols {
                let n = self.density.get(col, row);
                w.write_record([
                    row.to_string(),
                    col.to_string(),
                    n.to_string(),
                    (n as f64 / total).to_string(),
                    fp.clone(),
                ])
                .map_err(write_err)?;
            }
        }
        w.flush().map_err(|e| Error::io("<output>", e))
    }
}

/// Writes the evidence-versus-movement table, one row per run.
pub fn write_evidence_csv<W: Write>(writer: W, rows: &[(String, EvidencePoint, String)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["run_id", "mean_final_p_true", "mean_total_path", "fingerprint"])
        .map_err(write_err)?;
    for (id, p, fp) in rows {
        w.write_record([id.clone(), p.mean_final_p_true.to_string(), p.mean_total_path.to_string(), fp.clone()])
            .map_err(write_err)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{calibrate, center_scanpath, Corner};
    use crate::io::{synth_dataset, uniform_dataset};
    use crate::metrics::MetricConfig;

    fn manifest(id: &str) -> RunManifest {
        RunManifest {
            run_id: id.into(),
            setting: Setting::FovPer,
            patch_size: 8,
            steps: 12,
            accuracy: Some(0.5),
            scanpath_file: "unused.csv".into(),
            probability_file: None,
            frame_width: None,
            frame_height: None,
        }
    }

    fn setup(n: usize) -> (Frame, Vec<Scanpath>, GcsConfig) {
        let f = Frame::new(128, 128).unwrap();
        let humans = synth_dataset(n, f, 12, 0.15, 4).unwrap();
        let metric = MetricConfig::default_for(f);
        let bounds = calibrate(&humans, &metric, Corner::Tl, "t").unwrap();
        let cfg = GcsConfig::from_bounds(0.1, bounds, MovementConfig::default_for(f)).unwrap();
        (f, humans, cfg)
    }

    #[test]
    fn center_policy_scores_lambda_times_sim() {
        let (f, humans, cfg) = setup(40);
        let models: Vec<Scanpath> = humans
            .iter()
            .map(|h| Scanpath::from_points(f, &vec![f.center(); h.len()], Source::Model, h.image_id()).unwrap())
            .collect();
        let s = evaluate_paths(&manifest("c"), &models, &humans, &cfg).unwrap();
        for k in MetricKind::ALL {
            assert_eq!(s.normalized.get(k).debiased, 0.0, "{k}");
        }
        assert!((s.gcs - 0.1 * s.sim_move).abs() < 1e-12);
        assert_eq!(center_scanpath(f, 12).unwrap().points().next(), Some(f.center()));
    }

    #[test]
    fn replay_hits_upper_anchors() {
        let (_, humans, cfg) = setup(40);
        let models: Vec<Scanpath> = humans.iter().map(|h| h.clone().with_source(Source::Model)).collect();
        let s = evaluate_paths(&manifest("r"), &models, &humans, &cfg).unwrap();
        for k in MetricKind::ALL {
            let n = s.normalized.get(k);
            assert!((n.norm - 1.0).abs() < 1e-12, "{k}: {}", n.norm);
        }
        assert_eq!(s.movement_distance, 0.0);
        assert_eq!(s.sim_move, 1.0);
        let expected = 1.0 - MetricKind::ALL.iter().map(|&k| s.normalized.get(k).norm - s.normalized.get(k).debiased).sum::<f64>() / 4.0 + 0.1;
        assert!((s.gcs - expected).abs() < 1e-12);
    }

    #[test]
    fn unmatched_images_are_counted() {
        let (_, humans, cfg) = setup(20);
        let models: Vec<Scanpath> = humans[5..].iter().map(|h| h.clone().with_source(Source::Model)).collect();
        let s = evaluate_paths(&manifest("p"), &models, &humans[..15], &cfg).unwrap();
        assert_eq!((s.n_pairs, s.skipped_model, s.skipped_human), (10, 5, 5));
        let far = synth_dataset(3, humans[0].frame(), 12, 0.1, 1).unwrap();
        let renamed: Vec<Scanpath> = far
            .iter()
            .map(|p| Scanpath::from_points(p.frame(), &p.points().collect::<Vec<_>>(), Source::Model, format!("x{}", p.image_id())).unwrap())
            .collect();
        assert!(matches!(evaluate_paths(&manifest("n"), &renamed, &humans, &cfg), Err(Error::NoOverlap)));
    }

    #[test]
    fn fingerprint_mismatch_is_rejected() {
        let (_, humans, mut cfg) = setup(10);
        cfg.metric.map.sigma *= 2.0;
        assert!(matches!(
            evaluate_paths(&manifest("m"), &humans, &humans, &cfg),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn shards_recombine() {
        let (f, humans, cfg) = setup(60);
        let models = synth_dataset(60, f, 12, 0.25, 99).unwrap();
        let single = evaluate_paths(&manifest("s"), &models, &humans, &cfg).unwrap();
        let pairing = pair_by_image(&models, &humans).unwrap();
        let engine = MetricEngine::new(cfg.metric).unwrap();
        let mut totals = RunTotals::default();
        for shard in pairing.pairs.chunks(7) {
            let part: RunTotals = score_pairs(&engine, &cfg.movement, shard).unwrap().iter().collect();
            totals.merge(&part);
        }
        let merged = summarize(&manifest("s"), &totals, 0, 0, &cfg).unwrap();
        assert_eq!(merged.n_pairs, single.n_pairs);
        assert!((merged.gcs - single.gcs).abs() < 1e-9);
        for k in MetricKind::ALL {
            assert!((merged.raw.get(k) - single.raw.get(k)).abs() < 1e-9);
        }
    }

    fn summary(id: &str, setting: Setting, patch: u32, acc: Option<f64>, dtw: f64, sm: f64, auc: f64, gcs: f64) -> RunSummary {
        RunSummary {
            run_id: id.into(),
            setting,
            patch_size: patch,
            accuracy: acc,
            n_pairs: 1,
            skipped_model: 0,
            skipped_human: 0,
            raw: MetricBundle { dtw, sm, nss: 0.0, auc },
            normalized: NormalizedBundle::default(),
            movement: MovementStats::default(),
            human_movement: MovementStats::default(),
            movement_distance: 0.0,
            sim_move: 1.0,
            lambda: 0.1,
            gcs,
            fingerprint: "f".into(),
        }
    }

    #[test]
    fn single_run_fills_every_row() {
        let t = regime_table(&[summary("a", Setting::BigPer, 20, Some(0.6), 700.0, 0.3, 0.7, 0.01)]).unwrap();
        assert!(t.rows.iter().all(|r| r.run_id == "a"));
        assert_eq!(t.rows.len(), 7);
    }

    #[test]
    fn raw_and_gcs_winners_can_diverge() {
        let runs = [
            summary("big", Setting::BigPer, 20, Some(0.60), 650.0, 0.31, 0.70, -0.02),
            summary("fov", Setting::FovPer, 8, Some(0.585), 835.5, 0.298, 0.681, 0.0291),
            summary("none", Setting::FovOnly, 4, None, 900.0, 0.2, 0.6, 0.0),
        ];
        let t = regime_table(&runs).unwrap();
        let by = |label: &str| t.rows.iter().find(|r| r.label == label).unwrap().run_id.clone();
        assert_eq!(by("Best raw DTW"), "big");
        assert_eq!(by("Best raw SM"), "big");
        assert_eq!(by("Best GCS"), "fov");
        assert!(t.rows.iter().all(|r| r.label != "Best Acc (fov_only)"));
        assert_eq!(by("Best GCS (fov_only)"), "none");
        assert!(t.render_text().contains("—"));
        assert!(t.render_text().contains("0.0291"));
    }

    #[test]
    fn selection_matches_brute_force_and_ignores_order() {
        let mut runs = Vec::new();
        for (i, s) in Setting::ALL.iter().enumerate() {
            for p in [2u32, 4, 8] {
                let v = ((i as u32 * 7 + p * 3) % 5) as f64;
                runs.push(summary(&format!("{s}-{p}"), *s, p, Some(v / 10.0), 100.0 - v, v, v, v));
            }
        }
        let t = regime_table(&runs).unwrap();
        let best = runs.iter().map(|r| r.gcs).fold(f64::MIN, f64::max);
        let expected = runs
            .iter()
            .filter(|r| r.gcs == best)
            .min_by_key(|r| (r.setting, r.patch_size))
            .unwrap();
        let row = t.rows.iter().find(|r| r.label == "Best GCS").unwrap();
        assert_eq!(row.run_id, expected.run_id);
        runs.reverse();
        assert_eq!(regime_table(&runs).unwrap(), t);
    }

    #[test]
    fn runs_csv_round_trip() {
        let (f, humans, cfg) = setup(15);
        let models = synth_dataset(15, f, 12, 0.3, 5).unwrap();
        let mut m = manifest("x");
        m.accuracy = None;
        let s = evaluate_paths(&m, &models, &humans, &cfg).unwrap();
        let t = summary("y", Setting::BigPer, 2, Some(0.25), 1.0, 0.5, 0.5, 0.1);
        let mut buf = Vec::new();
        write_runs_csv(&mut buf, &[s.clone(), t.clone()]).unwrap();
        let back = read_runs_csv(buf.as_slice(), Path::new("runs.csv")).unwrap();
        assert_eq!(back, vec![s.clone(), t.clone()]);
        let mut t2 = t.clone();
        t2.gcs = 0.2;
        let merged = upsert_runs(back, vec![t2.clone()]);
        assert_eq!(merged, vec![s, t2]);
    }

    #[test]
    fn all_center_data_has_zero_radius() {
        let f = Frame::new(64, 64).unwrap();
        let humans = synth_dataset(10, f, 12, 0.0, 1).unwrap();
        let d = center_bias_diagnostics(&humans, 4, 4).unwrap();
        assert_eq!(d.radial.len(), 12);
        assert!(d.radial.iter().all(|r| r.mean_distance == 0.0 && r.n == 10));
        assert_eq!(d.density.total(), 120);
    }

    #[test]
    fn uniform_data_radius() {
        // E|U - c| over the unit square is (sqrt 2 + ln(1 + sqrt 2)) / 6
        let f = Frame::new(101, 101).unwrap();
        let humans = uniform_dataset(2000, f, 12, 3).unwrap();
        let d = center_bias_diagnostics(&humans, 8, 8).unwrap();
        let total: f64 = d.radial.iter().map(|r| r.mean_distance).sum::<f64>() / d.radial.len() as f64;
        let k = (2f64.sqrt() + (1.0 + 2f64.sqrt()).ln()) / 6.0;
        assert!((k - 0.3826).abs() < 1e-4);
        let expected = k * f.max_x();
        assert!((total / expected - 1.0).abs() < 0.02, "{total} vs {expected}");
    }

    #[test]
    fn bias_csvs_carry_fingerprint() {
        let f = Frame::new(64, 64).unwrap();
        let d = center_bias_diagnostics(&synth_dataset(5, f, 3, 0.1, 1).unwrap(), 2, 2).unwrap();
        let mut a = Vec::new();
        d.write_radial_csv(&mut a).unwrap();
        let text = String::from_utf8(a).unwrap();
        assert!(text.lines().skip(1).all(|l| l.ends_with(&d.fingerprint())));
        let mut b = Vec::new();
        d.write_density_csv(&mut b).unwrap();
        assert_eq!(String::from_utf8(b).unwrap().lines().count(), 5);
    }
}
