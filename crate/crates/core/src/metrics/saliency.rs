//! Gaussian fixation maps and the two map-based metrics, NSS and AUC (Judd
//! variant).
//!
//! A map covers the frame at `downsample`-pixel resolution. Cell `(i, j)`
//! represents the pixel block `[i*ds, i*ds + ds - 1]` and is evaluated at its
//! centre, `i*ds + (ds - 1)/2`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::domain::{ensure_same_frame, CompensatedSum, Frame, Point, Scanpath};
use crate::error::{Error, Result};

/// Relative value range under which a map is treated as constant.
pub const DEGENERATE_RELATIVE_RANGE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    /// Gaussian standard deviation, in pixels.
    pub sigma: f64,
    pub downsample: u32,
}

impl MapConfig {
    pub fn new(sigma: f64, downsample: u32) -> Result<Self> {
        let cfg = MapConfig { sigma, downsample };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sigma is 1/16 of the frame width; frames up to 128 px are mapped at
    /// full resolution and larger ones at 1/4.
    pub fn default_for(frame: Frame) -> Self {
        let downsample = if frame.width().max(frame.height()) <= 128 { 1 } else { 4 };
        MapConfig {
            sigma: f64::from(frame.width()) / 16.0,
            downsample,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.downsample == 0 {
            return Err(Error::InvalidConfig("downsample must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    frame: Frame,
    downsample: u32,
    cols: usize,
    rows: usize,
    // row-major
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl MapStats {
    pub fn is_degenerate(&self) -> bool {
        let scale = self.max.abs().max(self.min.abs());
        !(self.max - self.min > DEGENERATE_RELATIVE_RANGE * scale) || !(self.std > 0.0)
    }
}

impl SaliencyMap {
    pub fn zeros(frame: Frame, downsample: u32) -> Self {
        let ds = downsample.max(1);
        let cols = frame.width().div_ceil(ds) as usize;
        let rows = frame.height().div_ceil(ds) as usize;
        SaliencyMap {
            frame,
            downsample: ds,
            cols,
            rows,
            values: vec![0.0; cols * rows],
        }
    }

    /// Wraps hand-made values; `values` is row-major and must match the grid
    /// implied by `frame` and `downsample`.
    pub fn from_values(frame: Frame, downsample: u32, values: Vec<f64>) -> Result<Self> {
        let mut map = SaliencyMap::zeros(frame, downsample);
        if values.len() != map.values.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} map values, got {}",
                map.values.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("saliency map"));
        }
        map.values = values;
        Ok(map)
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    fn offset(&self) -> f64 {
        f64::from(self.downsample - 1) / 2.0
    }

    /// Pixel coordinate of a cell's centre.
    pub fn cell_center(&self, col: usize, row: usize) -> Point {
        let ds = f64::from(self.downsample);
        Point::new(col as f64 * ds + self.offset(), row as f64 * ds + self.offset())
    }

    /// The cell whose pixel block contains `p`.
    pub fn cell_of(&self, p: Point) -> (usize, usize) {
        let ds = f64::from(self.downsample);
        let idx = |v: f64, n: usize| (((v + 0.5) / ds).floor().max(0.0) as usize).min(n - 1);
        (idx(p.x, self.cols), idx(p.y, self.rows))
    }

    /// Bilinear interpolation between cell centres; points beyond the outer
    /// centres take the edge value.
    pub fn sample_bilinear(&self, p: Point) -> f64 {
        let ds = f64::from(self.downsample);
        let coord = |v: f64, n: usize| -> (usize, usize, f64) {
            let u = ((v - self.offset()) / ds).clamp(0.0, (n - 1) as f64);
            let i0 = u.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, u - i0 as f64)
        };
        let (c0, c1, tx) = coord(p.x, self.cols);
        let (r0, r1, ty) = coord(p.y, self.rows);
        let top = self.get(c0, r0) * (1.0 - tx) + self.get(c1, r0) * tx;
        let bottom = self.get(c0, r1) * (1.0 - tx) + self.get(c1, r1) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    pub fn stats(&self) -> MapStats {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in &self.values {
            if v < min {
                min = v;
            }
            if v > max {
                max = v;
            }
        }
        let n = self.values.len() as f64;
        let mean = lane_sum(&self.values, |v| v) / n;
        let var = lane_sum(&self.values, |v| (v - mean) * (v - mean)) / n;
        MapStats {
            mean,
            std: var.sqrt(),
            min,
            max,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.stats().is_degenerate()
    }

    /// Subtracts the mean and divides by the standard deviation. Returns
    /// `None` for a constant map.
    pub fn z_normalized(&self) -> Option<SaliencyMap> {
        let st = self.stats();
        if st.is_degenerate() {
            return None;
        }
        let mut out = self.clone();
        for v in &mut out.values {
            *v = (*v - st.mean) / st.std;
        }
        Some(out)
    }

    /// Rescales to `[0, 1]`. Returns `None` for a constant map.
    pub fn min_max_normalized(&self) -> Option<SaliencyMap> {
        let st = self.stats();
        if st.is_degenerate() {
            return None;
        }
        let mut out = self.clone();
        for v in &mut out.values {
            *v = (*v - st.min) / (st.max - st.min);
        }
        Some(out)
    }

    /// Sorted, de-duplicated flat indices of the cells holding `points`.
    fn cells_of(&self, points: impl Iterator<Item = Point>) -> Vec<usize> {
        let mut cells: Vec<usize> = points
            .map(|p| {
                let (c, r) = self.cell_of(p);
                r * self.cols + c
            })
            .collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }
}

/// Sum of `f(v)` in eight interleaved lanes combined in a fixed order, so
/// the loop vectorises and the result is still deterministic.
fn lane_sum(values: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut lanes = [0.0f64; 8];
    let chunks = values.chunks_exact(8);
    let rest = chunks.remainder();
    for c in chunks {
        for (l, &v) in lanes.iter_mut().zip(c) {
            *l += f(v);
        }
    }
    for (l, &v) in lanes.iter_mut().zip(rest) {
        *l += f(v);
    }
    ((lanes[0] + lanes[4]) + (lanes[2] + lanes[6])) + ((lanes[1] + lanes[5]) + (lanes[3] + lanes[7]))
}

/// Sum of isotropic Gaussians (std `sigma`) centred on each fixation,
/// evaluated at every cell centre. Unnormalised.
pub fn build_fixation_map(path: &Scanpath, cfg: &MapConfig) -> SaliencyMap {
    build_map(path.frame(), path.points(), cfg)
}

pub(crate) fn build_map(frame: Frame, points: impl Iterator<Item = Point>, cfg: &MapConfig) -> SaliencyMap {
    let mut map = SaliencyMap::zeros(frame, cfg.downsample);
    // repeated fixations contribute one weighted Gaussian
    let mut unique: Vec<(Point, f64)> = Vec::new();
    for p in points {
        match unique.iter_mut().find(|(q, _)| *q == p) {
            Some((_, w)) => *w += 1.0,
            None => unique.push((p, 1.0)),
        }
    }
    let inv = -1.0 / (2.0 * cfg.sigma * cfg.sigma);
    let xs: Vec<f64> = (0..map.cols).map(|c| map.cell_center(c, 0).x).collect();
    let ys: Vec<f64> = (0..map.rows).map(|r| map.cell_center(0, r).y).collect();
    let profile = |centers: &[f64], at: f64, weight: f64| -> Vec<f64> {
        centers
            .iter()
            .map(|&c| {
                let d = c - at;
                weight * (d * d * inv).exp()
            })
            .collect()
    };
    let gx: Vec<Vec<f64>> = unique.iter().map(|(p, _)| profile(&xs, p.x, 1.0)).collect();
    let gy: Vec<Vec<f64>> = unique.iter().map(|(p, w)| profile(&ys, p.y, *w)).collect();
    // row-major so each output row stays in cache; every cell still adds
    // the fixations in order
    for (r, row) in map.values.chunks_exact_mut(map.cols).enumerate() {
        for (gx, gy) in gx.iter().zip(&gy) {
            let wy = gy[r];
            if wy == 0.0 {
                continue;
            }
            for (v, &wx) in row.iter_mut().zip(gx) {
                *v += wy * wx;
            }
        }
    }
    map
}

/// NSS result. A constant model map yields `value = 0` with `degenerate`
/// set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nss {
    pub value: f64,
    pub degenerate: bool,
}

/// A fixation map together with the summaries both map metrics need.
/// Building one is the expensive part of NSS/AUC, so callers that score the
/// same model path against many humans should keep it around.
#[derive(Debug)]
pub struct PreparedMap {
    map: SaliencyMap,
    stats: MapStats,
    sorted: OnceLock<Vec<f64>>,
}

impl PreparedMap {
    pub fn new(map: SaliencyMap) -> Self {
        let stats = map.stats();
        PreparedMap {
            map,
            stats,
            sorted: OnceLock::new(),
        }
    }

    pub fn from_path(path: &Scanpath, cfg: &MapConfig) -> Self {
        PreparedMap::new(build_fixation_map(path, cfg))
    }

    pub fn map(&self) -> &SaliencyMap {
        &self.map
    }

    pub fn stats(&self) -> &MapStats {
        &self.stats
    }

    /// Mean of the z-normalised map sampled bilinearly at `human`.
    pub fn nss(&self, human: &Scanpath) -> Result<Nss> {
        self.check_frame(human)?;
        if self.stats.is_degenerate() {
            return Ok(Nss {
                value: 0.0,
                degenerate: true,
            });
        }
        let mut acc = CompensatedSum::new();
        acc.extend(human.points().map(|p| self.map.sample_bilinear(p)));
        let sampled = acc.mean()?;
        Ok(Nss {
            value: (sampled - self.stats.mean) / self.stats.std,
            degenerate: false,
        })
    }

    /// AUC with the human-fixated cells as positives and every other cell as
    /// a negative. Few distinct positive values are counted with one pass
    /// each; many are handled by a single pass that buckets each cell between
    /// them.
    pub fn auc(&self, human: &Scanpath) -> Result<f64> {
        self.check_frame(human)?;
        let positives = self.map.cells_of(human.points());
        let negatives = self.negative_count(&positives)?;
        if self.stats.is_degenerate() {
            return Ok(0.5);
        }
        let mut pos_values: Vec<f64> = positives.iter().map(|&i| self.map.values[i]).collect();
        pos_values.sort_unstable_by(f64::total_cmp);
        let mut distinct = pos_values.clone();
        distinct.dedup();

        if distinct.len() <= THRESHOLD_PASSES {
            let mut wins: u64 = 0;
            for &q in &distinct {
                let (below_all, not_above) = count_below(&self.map.values, q);
                let copies = pos_values.iter().filter(|&&p| p == q).count() as u64;
                wins += copies * half_wins(q, below_all, not_above - below_all, &pos_values);
            }
            return Ok(auc_from_half_wins(wins, pos_values.len() as u64, negatives));
        }
        let (bucket, equal) = if distinct.len() < 64 {
            bucket_counts::<64>(&self.map.values, &distinct)
        } else {
            bucket_counts_any(&self.map.values, &distinct)
        };

        let mut wins: u64 = 0; // counts in half-units: 2 per win, 1 per tie
        let mut below_earlier = 0;
        for (j, &q) in distinct.iter().enumerate() {
            let below_all = below_earlier + bucket[j] - equal[j];
            let share = half_wins(q, below_all, equal[j], &pos_values);
            let copies = pos_values.iter().filter(|&&p| p == q).count() as u64;
            wins += copies * share;
            below_earlier += bucket[j];
        }
        Ok(auc_from_half_wins(wins, pos_values.len() as u64, negatives))
    }

    /// Same statistic as [`PreparedMap::auc`], computed from the sorted map
    /// values with two binary searches per positive. Cheaper when one map is
    /// scored against many humans.
    pub fn auc_ranked(&self, human: &Scanpath) -> Result<f64> {
        self.check_frame(human)?;
        let positives = self.map.cells_of(human.points());
        let negatives = self.negative_count(&positives)?;
        if self.stats.is_degenerate() {
            return Ok(0.5);
        }
        let sorted = self.sorted.get_or_init(|| {
            let mut v = self.map.values.clone();
            v.sort_unstable_by(f64::total_cmp);
            v
        });
        let mut pos_values: Vec<f64> = positives.iter().map(|&i| self.map.values[i]).collect();
        pos_values.sort_unstable_by(f64::total_cmp);

        let mut wins: u64 = 0;
        for &q in &pos_values {
            let below_all = sorted.partition_point(|&v| v < q) as u64;
            let equal_all = sorted.partition_point(|&v| v <= q) as u64 - below_all;
            wins += half_wins(q, below_all, equal_all, &pos_values);
        }
        Ok(auc_from_half_wins(wins, pos_values.len() as u64, negatives))
    }

    fn negative_count(&self, positives: &[usize]) -> Result<u64> {
        let n = self.map.values.len() - positives.len();
        if n == 0 {
            return Err(Error::NoNegatives);
        }
        Ok(n as u64)
    }

    fn check_frame(&self, human: &Scanpath) -> Result<()> {
        if human.frame() != self.map.frame {
            return Err(Error::FrameMismatch {
                left: self.map.frame.to_string(),
                right: human.frame().to_string(),
            });
        }
        Ok(())
    }
}

/// Up to this many distinct positive values, one vectorised counting pass
/// per value beats bucketing every cell.
const THRESHOLD_PASSES: usize = 32;

/// Cells `< q` and `<= q`, in fixed lanes so the loop vectorises. The
/// counts are bounded by the cell count, so the adds cannot wrap; wrapping
/// arithmetic only keeps overflow checks out of the loop.
fn count_below(values: &[f64], q: f64) -> (u64, u64) {
    const LANES: usize = 8;
    let mut lt = [0u64; LANES];
    let mut le = [0u64; LANES];
    let chunks = values.chunks_exact(LANES);
    let tail = chunks.remainder();
    for c in chunks {
        for i in 0..LANES {
            lt[i] = lt[i].wrapping_add(u64::from(c[i] < q));
            le[i] = le[i].wrapping_add(u64::from(c[i] <= q));
        }
    }
    for &v in tail {
        lt[0] += u64::from(v < q);
        le[0] += u64::from(v <= q);
    }
    (lt.iter().sum(), le.iter().sum())
}

/// For each cell, the number of `distinct` values below it (its bucket),
/// tallied per bucket, plus per bucket the cells equal to the next distinct
/// value. `distinct` is padded with +inf to `N` entries so the search is a
/// fixed, branch-free sequence of halvings.
fn bucket_counts<const N: usize>(values: &[f64], distinct: &[f64]) -> (Vec<u64>, Vec<u64>) {
    debug_assert!(N.is_power_of_two() && distinct.len() < N);
    let mut pad = [f64::INFINITY; N];
    pad[..distinct.len()].copy_from_slice(distinct);
    let mut bucket = [0u64; N];
    let mut equal = [0u64; N];
    for &v in values {
        let mut b = 0;
        let mut step = N / 2;
        while step > 0 {
            b += usize::from(pad[(b + step - 1) & (N - 1)] < v) * step;
            step /= 2;
        }
        let b = b & (N - 1);
        bucket[b] += 1;
        equal[b] += u64::from(pad[b] == v);
    }
    (bucket.to_vec(), equal.to_vec())
}

/// [`bucket_counts`] for any number of distinct values.
fn bucket_counts_any(values: &[f64], distinct: &[f64]) -> (Vec<u64>, Vec<u64>) {
    let size = (distinct.len() + 1).next_power_of_two();
    let mut pad = distinct.to_vec();
    pad.resize(size, f64::INFINITY);
    let mut bucket = vec![0u64; size];
    let mut equal = vec![0u64; size];
    for &v in values {
        let b = pad.partition_point(|&q| q < v);
        bucket[b] += 1;
        equal[b] += u64::from(pad[b] == v);
    }
    (bucket, equal)
}

/// Half-wins of a positive valued `q` against the negatives, from counts
/// over all cells minus the positives' own share.
fn half_wins(q: f64, below_all: u64, equal_all: u64, pos_values: &[f64]) -> u64 {
    let below_pos = pos_values.partition_point(|&v| v < q) as u64;
    let equal_pos = pos_values.partition_point(|&v| v <= q) as u64 - below_pos;
    2 * (below_all - below_pos) + (equal_all - equal_pos)
}

fn auc_from_half_wins(wins: u64, positives: u64, negatives: u64) -> f64 {
    wins as f64 / (2 * positives * negatives) as f64
}

/// Normalised scanpath saliency of `model_path`'s fixation map at the human
/// fixations.
pub fn nss(model_path: &Scanpath, human_path: &Scanpath, cfg: &MapConfig) -> Result<Nss> {
    ensure_same_frame(model_path, human_path)?;
    cfg.validate()?;
    PreparedMap::from_path(model_path, cfg).nss(human_path)
}

/// Judd AUC of `model_path`'s fixation map at the human-fixated cells. Ties
/// count one half; a constant map scores 0.5.
pub fn auc_judd(model_path: &Scanpath, human_path: &Scanpath, cfg: &MapConfig) -> Result<f64> {
    ensure_same_frame(model_path, human_path)?;
    cfg.validate()?;
    PreparedMap::from_path(model_path, cfg).auc(human_path)
}
