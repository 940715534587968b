//! Run-level movement statistics and the movement similarity term.

use std::collections::HashSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::domain::{CompensatedSum, Frame, Scanpath};
use crate::error::{Error, Result};

/// Number of movement features compared between model and human.
pub const FEATURE_COUNT: usize = 6;

/// Six movement features of one scanpath, or their dataset mean.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MovementStats {
    /// Sum of saccade amplitudes, in pixels.
    pub total_path: f64,
    pub mean_saccade_amplitude: f64,
    pub mean_center_distance: f64,
    /// Distinct coverage-grid cells visited. Fractional once averaged.
    pub coverage: f64,
    /// Shannon entropy (nats) of saccade directions.
    pub direction_entropy: f64,
    pub collapse_rate: f64,
}

impl MovementStats {
    pub fn features(&self) -> [f64; FEATURE_COUNT] {
        [
            self.total_path,
            self.mean_saccade_amplitude,
            self.mean_center_distance,
            self.coverage,
            self.direction_entropy,
            self.collapse_rate,
        ]
    }

    pub fn from_features(f: [f64; FEATURE_COUNT]) -> Self {
        MovementStats {
            total_path: f[0],
            mean_saccade_amplitude: f[1],
            mean_center_distance: f[2],
            coverage: f[3],
            direction_entropy: f[4],
            collapse_rate: f[5],
        }
    }

    /// Feature-wise mean, accumulated in slice order.
    pub fn mean(stats: &[MovementStats]) -> Result<Self> {
        let mut acc = [CompensatedSum::new(); FEATURE_COUNT];
        for s in stats {
            for (a, v) in acc.iter_mut().zip(s.features()) {
                a.add(v);
            }
        }
        let mut out = [0.0; FEATURE_COUNT];
        for (o, a) in out.iter_mut().zip(&acc) {
            *o = a.mean()?;
        }
        Ok(MovementStats::from_features(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovementConfig {
    /// Cells per side of the coverage grid.
    pub coverage_grid: u32,
    /// Equal angular sectors for the direction histogram.
    pub entropy_bins: u32,
    /// Saccades shorter than this (pixels) count as collapsed.
    pub collapse_threshold: f64,
    pub tau: f64,
    pub epsilon: f64,
}

impl MovementConfig {
    /// 4x4 coverage grid, 16 direction bins, collapse threshold at 1% of the
    /// frame diagonal, `tau = 1`, `epsilon = 1e-6`.
    pub fn default_for(frame: Frame) -> Self {
        MovementConfig {
            coverage_grid: 4,
            entropy_bins: 16,
            collapse_threshold: 0.01 * frame.diagonal(),
            tau: 1.0,
            epsilon: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.coverage_grid == 0 || self.entropy_bins == 0 {
            return Err(Error::InvalidConfig("coverage_grid and entropy_bins must be >= 1".into()));
        }
        if !(self.collapse_threshold >= 0.0 && self.collapse_threshold.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "collapse_threshold must be >= 0, got {}",
                self.collapse_threshold
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn canonical_lines(&self) -> Vec<(String, String)> {
        vec![
            ("movement.coverage_grid".into(), self.coverage_grid.to_string()),
            ("movement.entropy_bins".into(), self.entropy_bins.to_string()),
            ("movement.collapse_threshold".into(), format!("{:?}", self.collapse_threshold)),
            ("movement.tau".into(), format!("{:?}", self.tau)),
            ("movement.epsilon".into(), format!("{:?}", self.epsilon)),
        ]
    }
}

/// Sector index of a displacement; sector 0 starts at angle -pi.
fn direction_bin(dx: f64, dy: f64, bins: u32) -> u32 {
    let angle = dy.atan2(dx);
    let b = ((angle + PI) / (2.0 * PI) * f64::from(bins)).floor() as u32;
    b % bins
}

fn coverage_cell(frame: Frame, x: f64, y: f64, grid: u32) -> (u32, u32) {
    let bin = |v: f64, extent: u32| -> u32 {
        let b = (v * f64::from(grid) / f64::from(extent)).floor();
        (b.max(0.0) as u32).min(grid - 1)
    };
    (bin(x, frame.width()), bin(y, frame.height()))
}

/// Movement features of one path. Saccades shorter than the collapse
/// threshold count towards the collapse rate and are left out of the
/// direction histogram; a path without any valid saccade has entropy 0.
pub fn movement_stats(path: &Scanpath, frame: Frame, cfg: &MovementConfig) -> Result<MovementStats> {
    cfg.validate()?;
    let points: Vec<_> = path.points().collect();
    if points.is_empty() {
        return Err(Error::EmptyScanpath);
    }
    let center = frame.center();

    let mut total = CompensatedSum::new();
    let mut collapsed = 0usize;
    let mut histogram = vec![0u32; cfg.entropy_bins as usize];
    let mut directed = 0u32;
    for w in points.windows(2) {
        let amplitude = w[0].distance(&w[1]);
        total.add(amplitude);
        if amplitude < cfg.collapse_threshold {
            collapsed += 1;
        } else if amplitude > 0.0 {
            histogram[direction_bin(w[1].x - w[0].x, w[1].y - w[0].y, cfg.entropy_bins) as usize] += 1;
            directed += 1;
        }
    }
    let saccades = points.len() - 1;
    let total_path = total.total();

    let mut centre_dist = CompensatedSum::new();
    centre_dist.extend(points.iter().map(|p| p.distance(&center)));

    let cells: HashSet<(u32, u32)> = points
        .iter()
        .map(|p| coverage_cell(frame, p.x, p.y, cfg.coverage_grid))
        .collect();

    let direction_entropy = if directed == 0 {
        0.0
    } else {
        let n = f64::from(directed);
        -histogram
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = f64::from(c) / n;
                p * p.ln()
            })
            .sum::<f64>()
    };

    Ok(MovementStats {
        total_path,
        mean_saccade_amplitude: if saccades == 0 { 0.0 } else { total_path / saccades as f64 },
        mean_center_distance: centre_dist.mean()?,
        coverage: cells.len() as f64,
        // -0.0 from a single occupied bin
        direction_entropy: direction_entropy.max(0.0),
        collapse_rate: if saccades == 0 { 0.0 } else { collapsed as f64 / saccades as f64 },
    })
}

/// Root-mean-square relative error between the two feature vectors:
/// `sqrt(mean_k((|m_k - h_k| / (|h_k| + eps))^2))`.
pub fn movement_distance(model: &MovementStats, human: &MovementStats, eps: f64) -> f64 {
    let sum: f64 = model
        .features()
        .iter()
        .zip(human.features())
        .map(|(&m, h)| {
            let diff = (m - h).abs();
            // 0/0 when eps is 0 and both features vanish
            let r = if diff == 0.0 { 0.0 } else { diff / (h.abs() + eps) };
            r * r
        })
        .sum();
    (sum / FEATURE_COUNT as f64).sqrt()
}

/// `exp(-d / tau)`.
pub fn movement_similarity(d: f64, tau: f64) -> f64 {
    (-d / tau).exp()
}
