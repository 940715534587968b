//! ScanMatch: grid quantisation followed by Needleman–Wunsch alignment with a
//! spatially weighted substitution score.
//!
//! Scores are handled in units of `max_score_per_token`: the substitution
//! score of two cells is
//!
//! ```text
//! s(u, v) = 1 - (substitution_scale / max_score_per_token) * dist(u, v)
//! ```
//!
//! with `dist` the Euclidean distance between cell centres in cell units, and
//! a gap costs `gap_penalty / max_score_per_token`. The alignment score is
//! divided by the longer sequence length, so identical sequences score
//! exactly 1.

use serde::{Deserialize, Serialize};

use crate::domain::{ensure_same_frame, Frame, Point, Scanpath};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanMatchConfig {
    pub grid_cols: u32,
    pub grid_rows: u32,
    pub gap_penalty: f64,
    pub substitution_scale: f64,
    pub max_score_per_token: f64,
}

impl ScanMatchConfig {
    /// A `cols x rows` grid with zero gap penalty and a linear substitution
    /// map: identical cells score 1, the two farthest cells score 0.
    pub fn with_grid(grid_cols: u32, grid_rows: u32) -> Result<Self> {
        let cfg = ScanMatchConfig {
            grid_cols,
            grid_rows,
            gap_penalty: 0.0,
            substitution_scale: linear_scale(grid_cols, grid_rows),
            max_score_per_token: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_cols == 0 || self.grid_rows == 0 || u64::from(self.grid_cols) * u64::from(self.grid_rows) < 2 {
            return Err(Error::InvalidGrid(format!("{}x{}", self.grid_cols, self.grid_rows)));
        }
        if !(self.gap_penalty <= 0.0) {
            return Err(Error::InvalidConfig(format!("gap_penalty must be <= 0, got {}", self.gap_penalty)));
        }
        if !(self.substitution_scale > 0.0 && self.substitution_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "substitution_scale must be positive, got {}",
                self.substitution_scale
            )));
        }
        if !(self.max_score_per_token > 0.0 && self.max_score_per_token.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "max_score_per_token must be positive, got {}",
                self.max_score_per_token
            )));
        }
        Ok(())
    }
}

impl Default for ScanMatchConfig {
    fn default() -> Self {
        ScanMatchConfig {
            grid_cols: 8,
            grid_rows: 8,
            gap_penalty: 0.0,
            substitution_scale: linear_scale(8, 8),
            max_score_per_token: 1.0,
        }
    }
}

fn linear_scale(cols: u32, rows: u32) -> f64 {
    let dc = f64::from(cols.saturating_sub(1));
    let dr = f64::from(rows.saturating_sub(1));
    let far = (dc * dc + dr * dr).sqrt();
    if far > 0.0 {
        1.0 / far
    } else {
        1.0
    }
}

/// A grid cell token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub col: u32,
    pub row: u32,
}

impl Cell {
    pub const fn new(col: u32, row: u32) -> Self {
        Cell { col, row }
    }
}

/// Maps a point to the grid cell containing it. The frame is split into
/// `grid_cols` equal-width columns over `[0, width)`.
pub fn quantize(frame: Frame, p: Point, cfg: &ScanMatchConfig) -> Cell {
    let bin = |v: f64, extent: u32, bins: u32| -> u32 {
        let b = (v * f64::from(bins) / f64::from(extent)).floor();
        (b.max(0.0) as u32).min(bins - 1)
    };
    Cell::new(
        bin(p.x, frame.width(), cfg.grid_cols),
        bin(p.y, frame.height(), cfg.grid_rows),
    )
}

/// Precomputed substitution table for one configuration.
#[derive(Debug, Clone)]
pub struct ScanMatcher {
    cfg: ScanMatchConfig,
    // indexed by |dcol| * grid_rows + |drow|
    table: Vec<f64>,
    gap: f64,
}

impl ScanMatcher {
    pub fn new(cfg: ScanMatchConfig) -> Result<Self> {
        cfg.validate()?;
        let slope = cfg.substitution_scale / cfg.max_score_per_token;
        let mut table = Vec::with_capacity((cfg.grid_cols * cfg.grid_rows) as usize);
        for dc in 0..cfg.grid_cols {
            for dr in 0..cfg.grid_rows {
                let d2 = u64::from(dc) * u64::from(dc) + u64::from(dr) * u64::from(dr);
                table.push(1.0 - slope * (d2 as f64).sqrt());
            }
        }
        Ok(ScanMatcher {
            cfg,
            table,
            gap: cfg.gap_penalty / cfg.max_score_per_token,
        })
    }

    pub fn config(&self) -> &ScanMatchConfig {
        &self.cfg
    }

    /// Substitution score of two cells, in units of `max_score_per_token`.
    #[inline]
    pub fn substitution(&self, u: Cell, v: Cell) -> f64 {
        let dc = u.col.abs_diff(v.col);
        let dr = u.row.abs_diff(v.row);
        self.table[(dc * self.cfg.grid_rows + dr) as usize]
    }

    /// Gap score in units of `max_score_per_token`.
    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn tokens(&self, path: &Scanpath) -> Vec<Cell> {
        path.points().map(|p| quantize(path.frame(), p, &self.cfg)).collect()
    }

    /// Raw Needleman–Wunsch score of two token strings.
    pub fn alignment_score(&self, a: &[Cell], b: &[Cell]) -> f64 {
        let mut row = vec![0.0; b.len() + 1];
        for j in 1..=b.len() {
            row[j] = row[j - 1] + self.gap;
        }
        for &ta in a {
            let mut diag = row[0];
            row[0] += self.gap;
            for (j, &tb) in b.iter().enumerate() {
                let up = row[j + 1];
                let best = (diag + self.substitution(ta, tb))
                    .max(up + self.gap)
                    .max(row[j] + self.gap);
                diag = up;
                row[j + 1] = best;
            }
        }
        row[b.len()]
    }

    /// Normalised similarity of two token strings in `[0, 1]`.
    pub fn score_tokens(&self, a: &[Cell], b: &[Cell]) -> Result<f64> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::EmptyScanpath);
        }
        for c in a.iter().chain(b) {
            if c.col >= self.cfg.grid_cols || c.row >= self.cfg.grid_rows {
                return Err(Error::InvalidGrid(format!(
                    "cell ({}, {}) outside {}x{} grid",
                    c.col, c.row, self.cfg.grid_cols, self.cfg.grid_rows
                )));
            }
        }
        let raw = self.alignment_score(a, b);
        Ok((raw / a.len().max(b.len()) as f64).clamp(0.0, 1.0))
    }

    pub fn score(&self, a: &Scanpath, b: &Scanpath) -> Result<f64> {
        ensure_same_frame(a, b)?;
        self.score_tokens(&self.tokens(a), &self.tokens(b))
    }
}

/// ScanMatch similarity between two scanpaths, in `[0, 1]`.
pub fn scanmatch_score(a: &Scanpath, b: &Scanpath, cfg: &ScanMatchConfig) -> Result<f64> {
    ScanMatcher::new(*cfg)?.score(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Source;

    fn frame() -> Frame {
        Frame::new(512, 512).unwrap()
    }

    fn path(pts: &[(f64, f64)]) -> Scanpath {
        Scanpath::from_points(frame(), pts, Source::Model, "img").unwrap()
    }

    // Every alignment of `a` against `b`, summing from the left.
    fn brute(m: &ScanMatcher, a: &[Cell], b: &[Cell], acc: f64) -> f64 {
        match (a.split_first(), b.split_first()) {
            (None, None) => acc,
            (Some((_, ra)), None) => brute(m, ra, b, acc + m.gap()),
            (None, Some((_, rb))) => brute(m, a, rb, acc + m.gap()),
            (Some((&ta, ra)), Some((&tb, rb))) => brute(m, ra, rb, acc + m.substitution(ta, tb))
                .max(brute(m, ra, b, acc + m.gap()))
                .max(brute(m, a, rb, acc + m.gap())),
        }
    }

    #[test]
    fn identity_scores_one() {
        let a = path(&[(10.0, 10.0), (300.0, 20.0), (511.0, 511.0), (256.0, 256.0)]);
        assert_eq!(scanmatch_score(&a, &a, &ScanMatchConfig::default()).unwrap(), 1.0);
        let single = path(&[(70.0, 70.0)]);
        let same_cell = path(&[(100.0, 120.0)]);
        assert_eq!(scanmatch_score(&single, &same_cell, &ScanMatchConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn non_unit_token_score_still_exact_identity() {
        let cfg = ScanMatchConfig {
            max_score_per_token: 0.3,
            substitution_scale: 0.01,
            gap_penalty: -0.07,
            ..ScanMatchConfig::default()
        };
        let a = path(&[(1.0, 1.0), (200.0, 30.0), (450.0, 400.0)]);
        assert_eq!(scanmatch_score(&a, &a, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn ab_vs_ac_matches_enumeration() {
        let m = ScanMatcher::new(ScanMatchConfig::default()).unwrap();
        let a = [Cell::new(0, 0), Cell::new(3, 5)];
        let b = [Cell::new(0, 0), Cell::new(6, 1)];
        let expected = brute(&m, &a, &b, 0.0) / 2.0;
        // hand value: 1 + (1 - 5/sqrt(98)) over two tokens
        let hand = (2.0 - 5.0 / 98f64.sqrt()) / 2.0;
        let got = m.score_tokens(&a, &b).unwrap();
        assert_eq!(got, expected);
        assert!((got - hand).abs() < 1e-12);
    }

    #[test]
    fn farthest_cells_score_zero() {
        let m = ScanMatcher::new(ScanMatchConfig::default()).unwrap();
        assert_eq!(m.substitution(Cell::new(0, 0), Cell::new(0, 0)), 1.0);
        assert!(m.substitution(Cell::new(0, 0), Cell::new(7, 7)).abs() < 1e-15);
    }

    #[test]
    fn quantize_edges() {
        let cfg = ScanMatchConfig::default();
        assert_eq!(quantize(frame(), Point::new(0.0, 0.0), &cfg), Cell::new(0, 0));
        assert_eq!(quantize(frame(), Point::new(63.9, 64.0), &cfg), Cell::new(0, 1));
        assert_eq!(quantize(frame(), Point::new(511.0, 511.0), &cfg), Cell::new(7, 7));
    }

    #[test]
    fn degenerate_grid_rejected() {
        assert!(matches!(ScanMatchConfig::with_grid(1, 1), Err(Error::InvalidGrid(_))));
        assert!(ScanMatchConfig::with_grid(2, 1).is_ok());
        let bad_gap = ScanMatchConfig {
            gap_penalty: 0.5,
            ..ScanMatchConfig::default()
        };
        assert!(ScanMatcher::new(bad_gap).is_err());
    }

    #[test]
    fn unequal_lengths_are_penalised_by_longer_length() {
        let m = ScanMatcher::new(ScanMatchConfig::default()).unwrap();
        let a = [Cell::new(2, 2)];
        let b = [Cell::new(2, 2), Cell::new(2, 2)];
        assert_eq!(m.score_tokens(&a, &b).unwrap(), 0.5);
    }
}
