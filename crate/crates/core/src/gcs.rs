//! Calibrated normalisation, centre debiasing and the gaze consistency score
//! (GCS).
//!
//! Each raw metric is mapped onto a scale where the corner policy scores 0
//! and a human compared with itself scores 1:
//!
//! ```text
//! DTW:          norm = (D_lower - D) / (D_lower - D_upper)
//! SM, NSS, AUC: norm = (M - M_lower) / (M_upper - M_lower)
//! ```
//!
//! For DTW the lower anchor is the numerically *largest* value (the corner
//! policy is far from everything) and the upper anchor the smallest, so after
//! the transform higher is better for all four metrics. The centre policy's
//! normalised score is then subtracted, and
//!
//! ```text
//! GCS = mean(debiased over DTW, SM, NSS, AUC) + lambda * sim_move
//! ```
//!
//! Nothing is clamped: a policy worse than the corner anchor normalises below
//! 0, and anything below the centre baseline debiases negative.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{CalibrationBounds, MetricBounds};
use crate::domain::{MetricBundle, MetricKind};
use crate::error::{Error, Result};
use crate::io::fingerprint;
use crate::metrics::MetricConfig;
use crate::movement::{MovementConfig, MovementStats};

/// The weight on movement similarity used unless configured otherwise.
pub const DEFAULT_LAMBDA: f64 = 0.1;

fn normalize(kind: MetricKind, value: f64, bounds: &MetricBounds) -> Result<f64> {
    if bounds.upper == bounds.lower {
        return Err(Error::DegenerateCalibration {
            metric: kind,
            reason: "upper and lower bounds coincide".into(),
        });
    }
    Ok(if kind.higher_is_better() {
        (value - bounds.lower) / (bounds.upper - bounds.lower)
    } else {
        (bounds.lower - value) / (bounds.lower - bounds.upper)
    })
}

/// Normalised DTW; 0 at the corner anchor, 1 at the identical-human anchor.
pub fn normalize_dtw(d: f64, bounds: &MetricBounds) -> Result<f64> {
    normalize(MetricKind::Dtw, d, bounds)
}

/// Normalised similarity metric (SM, NSS or AUC).
pub fn normalize_up(kind: MetricKind, m: f64, bounds: &MetricBounds) -> Result<f64> {
    if !kind.higher_is_better() {
        return Err(Error::InvalidConfig(format!("{kind} is not a higher-is-better metric")));
    }
    normalize(kind, m, bounds)
}

/// Normalised score minus the centre policy's normalised score.
pub fn debias(norm: f64, norm_center: f64) -> f64 {
    norm - norm_center
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NormScore {
    pub norm: f64,
    pub debiased: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NormalizedBundle {
    pub dtw: NormScore,
    pub sm: NormScore,
    pub nss: NormScore,
    pub auc: NormScore,
}

impl NormalizedBundle {
    pub fn get(&self, kind: MetricKind) -> &NormScore {
        match kind {
            MetricKind::Dtw => &self.dtw,
            MetricKind::Sm => &self.sm,
            MetricKind::Nss => &self.nss,
            MetricKind::Auc => &self.auc,
        }
    }

    /// Normalises a dataset-mean bundle against calibration anchors.
    pub fn from_raw(raw: &MetricBundle, bounds: &CalibrationBounds) -> Result<Self> {
        let score = |kind: MetricKind| -> Result<NormScore> {
            let b = bounds.get(kind);
            let norm = normalize(kind, raw.get(kind), b)?;
            let center = normalize(kind, b.center, b)?;
            Ok(NormScore {
                norm,
                debiased: debias(norm, center),
            })
        };
        Ok(NormalizedBundle {
            dtw: score(MetricKind::Dtw)?,
            sm: score(MetricKind::Sm)?,
            nss: score(MetricKind::Nss)?,
            auc: score(MetricKind::Auc)?,
        })
    }

    /// Mean of the four debiased scores.
    pub fn debiased_mean(&self) -> f64 {
        (self.dtw.debiased + self.sm.debiased + self.nss.debiased + self.auc.debiased) / 4.0
    }
}

/// `mean(debiased) + lambda * sim_move`.
pub fn gcs_score(normalized: &NormalizedBundle, sim_move: f64, lambda: f64) -> f64 {
    normalized.debiased_mean() + lambda * sim_move
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcsConfig {
    pub lambda: f64,
    /// Metric parameters used for evaluation; must match the calibration.
    pub metric: MetricConfig,
    pub bounds: CalibrationBounds,
    pub movement: MovementConfig,
}

impl GcsConfig {
    pub fn new(lambda: f64, metric: MetricConfig, bounds: CalibrationBounds, movement: MovementConfig) -> Result<Self> {
        let cfg = GcsConfig {
            lambda,
            metric,
            bounds,
            movement,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Uses the metric parameters recorded in the calibration.
    pub fn from_bounds(lambda: f64, bounds: CalibrationBounds, movement: MovementConfig) -> Result<Self> {
        Self::new(lambda, bounds.meta.config, bounds, movement)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        self.metric.validate()?;
        self.movement.validate()?;
        self.bounds.validate()?;
        self.check_fingerprint()
    }

    /// Calibration and evaluation must share every metric parameter.
    pub fn check_fingerprint(&self) -> Result<()> {
        let evaluation = self.metric.fingerprint();
        if evaluation != self.bounds.meta.fingerprint {
            return Err(Error::FingerprintMismatch {
                calibration: self.bounds.meta.fingerprint.clone(),
                evaluation,
            });
        }
        Ok(())
    }

    /// Fingerprint over metric, movement and GCS parameters together with
    /// the calibration anchors in use.
    pub fn fingerprint(&self) -> String {
        let mut lines = self.metric.canonical_lines();
        lines.extend(self.movement.canonical_lines());
        lines.push(("gcs.lambda".into(), format!("{:?}", self.lambda)));
        lines.push(("calibration.fingerprint".into(), self.bounds.meta.fingerprint.clone()));
        for kind in MetricKind::ALL {
            let b = self.bounds.get(kind);
            lines.push((format!("calibration.{}", kind.name()), format!("{:?}/{:?}/{:?}", b.upper, b.lower, b.center)));
        }
        fingerprint(&lines)
    }
}

/// The sensory configuration of a sweep run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "fov_only")]
    FovOnly,
    #[serde(rename = "fov_per", alias = "fov+per")]
    FovPer,
    #[serde(rename = "big_per")]
    BigPer,
}

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::FovOnly, Setting::FovPer, Setting::BigPer];
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::FovOnly => "fov_only",
            Setting::FovPer => "fov_per",
            Setting::BigPer => "big_per",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fov_only" => Ok(Setting::FovOnly),
            "fov_per" | "fov+per" => Ok(Setting::FovPer),
            "big_per" => Ok(Setting::BigPer),
            other => Err(Error::InvalidConfig(format!("unknown setting {other:?}"))),
        }
    }
}

/// Aggregated evaluation of one sweep configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub setting: Setting,
    pub patch_size: u32,
    pub accuracy: Option<f64>,
    pub n_pairs: usize,
    /// Model paths without a human counterpart.
    pub skipped_model: usize,
    /// Human paths without a model counterpart.
    pub skipped_human: usize,
    pub raw: MetricBundle,
    pub normalized: NormalizedBundle,
    pub movement: MovementStats,
    pub human_movement: MovementStats,
    pub movement_distance: f64,
    pub sim_move: f64,
    pub lambda: f64,
    pub gcs: f64,
    pub fingerprint: String,
}

impl RunSummary {
    pub fn score(&self) -> RunScore {
        RunScore {
            run_id: self.run_id.clone(),
            setting: self.setting,
            patch_size: self.patch_size,
            debiased_mean: self.normalized.debiased_mean(),
            sim_move: self.sim_move,
        }
    }
}

/// The two quantities GCS is affine in, for re-weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct RunScore {
    pub run_id: String,
    pub setting: Setting,
    pub patch_size: u32,
    pub debiased_mean: f64,
    pub sim_move: f64,
}

impl RunScore {
    pub fn gcs_at(&self, lambda: f64) -> f64 {
        self.debiased_mean + lambda * self.sim_move
    }

    fn key(&self) -> (Setting, u32, &str) {
        (self.setting, self.patch_size, &self.run_id)
    }
}

/// Winner among `runs` at `lambda`; ties go to the smallest
/// (setting, patch_size, run_id).
fn argmax_at(runs: &[RunScore], lambda: f64) -> usize {
    let mut best = 0;
    for (i, r) in runs.iter().enumerate().skip(1) {
        let (g, gb) = (r.gcs_at(lambda), runs[best].gcs_at(lambda));
        if g > gb || (g == gb && r.key() < runs[best].key()) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRow {
    pub lambda: f64,
    pub winner: String,
    /// GCS of every run at this lambda, in input order.
    pub gcs: Vec<f64>,
}

/// The point where the best run changes.
#[derive(Debug, Clone, PartialEq)]
pub struct RankChange {
    pub lambda: f64,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub run_ids: Vec<String>,
    pub rows: Vec<SensitivityRow>,
    /// Exact crossovers of the best run between the smallest and largest
    /// lambda on the grid.
    pub crossovers: Vec<RankChange>,
}

impl SensitivityReport {
    pub fn rank_changed(&self) -> bool {
        !self.crossovers.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:>8}  {:<20}", "lambda", "best");
        for id in &self.run_ids {
            let _ = write!(out, " {id:>12}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:>8.4}  {:<20}", row.lambda, row.winner);
            for g in &row.gcs {
                let _ = write!(out, " {g:>12.4}");
            }
            out.push('\n');
        }
        if self.crossovers.is_empty() {
            out.push_str("best configuration unchanged across the lambda range\n");
        }
        for c in &self.crossovers {
            let _ = writeln!(out, "rank change at lambda = {:.6}: {} -> {}", c.lambda, c.from, c.to);
        }
        out
    }
}

/// Recomputes GCS on a grid of lambdas and locates every change of the best
/// run over the grid's range. The report describes; it does not judge.
pub fn lambda_sensitivity(runs: &[RunScore], lambdas: &[f64]) -> Result<SensitivityReport> {
    if runs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if lambdas.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    if lambdas.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("lambda grid"));
    }
    let rows = lambdas
        .iter()
        .map(|&lambda| SensitivityRow {
            lambda,
            winner: runs[argmax_at(runs, lambda)].run_id.clone(),
            gcs: runs.iter().map(|r| r.gcs_at(lambda)).collect(),
        })
        .collect();

    let lo = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    // Walk the upper envelope of the lines debiased_mean + lambda * sim_move.
    let mut crossovers = Vec::new();
    let mut at = lo;
    let mut current = {
        let w = argmax_at(runs, lo);
        let top = runs[w].gcs_at(lo);
        // among runs tied at `lo`, the steepest one leads just after it
        (0..runs.len())
            .filter(|&i| runs[i].gcs_at(lo) == top)
            .max_by(|&a, &b| {
                runs[a]
                    .sim_move
                    .total_cmp(&runs[b].sim_move)
                    .then_with(|| runs[b].key().cmp(&runs[a].key()))
            })
            .unwrap_or(w)
    };
    loop {
        let cur = &runs[current];
        let mut next: Option<(f64, usize)> = None;
        for (j, r) in runs.iter().enumerate() {
            if j == current || r.sim_move <= cur.sim_move {
                continue;
            }
            let cross = (cur.debiased_mean - r.debiased_mean) / (r.sim_move - cur.sim_move);
            if cross <= at || cross > hi {
                continue;
            }
            let better = match next {
                None => true,
                Some((l, k)) => cross < l || (cross == l && r.sim_move > runs[k].sim_move),
            };
            if better {
                next = Some((cross, j));
            }
        }
        match next {
            Some((lambda, j)) => {
                crossovers.push(RankChange {
                    lambda,
                    from: cur.run_id.clone(),
                    to: runs[j].run_id.clone(),
                });
                at = lambda;
                current = j;
            }
            None => break,
        }
    }

    Ok(SensitivityReport {
        run_ids: runs.iter().map(|r| r.run_id.clone()).collect(),
        rows,
        crossovers,
    })
}
