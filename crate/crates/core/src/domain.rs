//! Frames, fixations and scanpaths, plus the deterministic aggregation used
//! for every dataset-level mean.
//!
//! Coordinates are continuous pixel coordinates with the origin at the top
//! left, `x` to the right and `y` downward. Pixel `i` is centred on the
//! integer coordinate `i`, so a frame of width `w` spans `0..=w-1` and its
//! centre sits at `(w-1)/2`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The image plane fixations are resolved on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Frame {
    width: u32,
    height: u32,
}

impl Frame {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame { width, height });
        }
        Ok(Frame { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Largest valid x coordinate.
    pub fn max_x(&self) -> f64 {
        f64::from(self.width - 1)
    }

    /// Largest valid y coordinate.
    pub fn max_y(&self) -> f64 {
        f64::from(self.height - 1)
    }

    pub fn center(&self) -> Point {
        frame_center(*self)
    }

    pub fn diagonal(&self) -> f64 {
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        (w * w + h * h).sqrt()
    }

    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.max_x()).contains(&p.x) && (0.0..=self.max_y()).contains(&p.y)
    }

    /// Clamps `p` into the frame, reporting whether anything changed.
    pub fn clamp_point(&self, p: Point) -> (Point, bool) {
        let q = Point::new(p.x.clamp(0.0, self.max_x()), p.y.clamp(0.0, self.max_y()));
        (q, q != p)
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Returns `((width-1)/2, (height-1)/2)`.
///
/// ```
/// use gazescore::{frame_center, Frame};
///
/// let c = frame_center(Frame::new(4, 4).unwrap());
/// assert_eq!((c.x, c.y), (1.5, 1.5));
/// ```
pub fn frame_center(frame: Frame) -> Point {
    Point::new(frame.max_x() / 2.0, frame.max_y() / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    /// Euclidean distance. Written as `sqrt(dx² + dy²)` rather than `hypot`
    /// so that scaling both points by a power of two scales the result
    /// exactly.
    #[inline]
    pub fn distance(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub x: f64,
    pub y: f64,
    pub step: u32,
    pub duration_ms: Option<f64>,
}

impl Fixation {
    pub fn new(x: f64, y: f64, step: u32) -> Self {
        Fixation {
            x,
            y,
            step,
            duration_ms: None,
        }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Human,
    Model,
    Baseline,
}

/// An ordered, non-empty fixation sequence on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Scanpath {
    frame: Frame,
    fixations: Vec<Fixation>,
    source: Source,
    image_id: String,
}

impl Scanpath {
    /// Validates and wraps a fixation sequence. Steps must be strictly
    /// increasing and every fixation must lie inside the frame; loaders clamp
    /// before calling this.
    pub fn new(
        frame: Frame,
        fixations: Vec<Fixation>,
        source: Source,
        image_id: impl Into<String>,
    ) -> Result<Self> {
        if fixations.is_empty() {
            return Err(Error::EmptyScanpath);
        }
        for pair in fixations.windows(2) {
            if pair[1].step <= pair[0].step {
                return Err(Error::UnorderedSteps {
                    previous: pair[0].step,
                    step: pair[1].step,
                });
            }
        }
        for f in &fixations {
            if !f.x.is_finite() || !f.y.is_finite() {
                return Err(Error::NonFinite("fixation coordinate"));
            }
            if let Some(d) = f.duration_ms {
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::NonFinite("fixation duration"));
                }
            }
            if !frame.contains(f.point()) {
                return Err(Error::OutsideFrame {
                    x: f.x,
                    y: f.y,
                    width: frame.width(),
                    height: frame.height(),
                });
            }
        }
        Ok(Scanpath {
            frame,
            fixations,
            source,
            image_id: image_id.into(),
        })
    }

    /// Builds a path from bare points, numbering steps from zero.
    pub fn from_points<P: Into<Point> + Copy>(
        frame: Frame,
        points: &[P],
        source: Source,
        image_id: impl Into<String>,
    ) -> Result<Self> {
        let fixations = points
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let p = p.into();
                Fixation::new(p.x, p.y, i as u32)
            })
            .collect();
        Scanpath::new(frame, fixations, source, image_id)
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn fixations(&self) -> &[Fixation] {
        &self.fixations
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = Point> + '_ {
        self.fixations.iter().map(Fixation::point)
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn len(&self) -> usize {
        self.fixations.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.fixations.is_empty()
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = source;
        self
    }
}

pub(crate) fn ensure_same_frame(a: &Scanpath, b: &Scanpath) -> Result<Frame> {
    if a.frame != b.frame {
        return Err(Error::FrameMismatch {
            left: a.frame.to_string(),
            right: b.frame.to_string(),
        });
    }
    Ok(a.frame)
}

/// The four scanpath similarity metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Dtw,
    Sm,
    Nss,
    Auc,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [MetricKind::Dtw, MetricKind::Sm, MetricKind::Nss, MetricKind::Auc];

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Dtw => "dtw",
            MetricKind::Sm => "sm",
            MetricKind::Nss => "nss",
            MetricKind::Auc => "auc",
        }
    }

    /// DTW is a distance; the other three are similarities.
    pub fn higher_is_better(&self) -> bool {
        !matches!(self, MetricKind::Dtw)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Dtw => "DTW",
            MetricKind::Sm => "SM",
            MetricKind::Nss => "NSS",
            MetricKind::Auc => "AUC",
        })
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dtw" => Ok(MetricKind::Dtw),
            "sm" | "scanmatch" => Ok(MetricKind::Sm),
            "nss" => Ok(MetricKind::Nss),
            "auc" => Ok(MetricKind::Auc),
            other => Err(Error::InvalidConfig(format!("unknown metric {other:?}"))),
        }
    }
}

/// Raw values of the four metrics for one model/human pair, or their
/// dataset means.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricBundle {
    pub dtw: f64,
    pub sm: f64,
    pub nss: f64,
    pub auc: f64,
}

impl MetricBundle {
    pub fn get(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::Dtw => self.dtw,
            MetricKind::Sm => self.sm,
            MetricKind::Nss => self.nss,
            MetricKind::Auc => self.auc,
        }
    }

    pub fn from_fn(mut f: impl FnMut(MetricKind) -> f64) -> Self {
        MetricBundle {
            dtw: f(MetricKind::Dtw),
            sm: f(MetricKind::Sm),
            nss: f(MetricKind::Nss),
            auc: f(MetricKind::Auc),
        }
    }
}

/// Neumaier-compensated running sum.
///
/// Accumulation happens in call order, so feeding the same values in the
/// same order always yields the same bits. Two partial sums can be merged to
/// support sharded evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
    count: usize,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        self.accumulate(value);
        self.count += 1;
    }

    #[inline]
    fn accumulate(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.accumulate(other.sum);
        self.compensation += other.compensation;
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }

    pub fn mean(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::EmptyAggregation);
        }
        Ok(self.total() / self.count as f64)
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

/// Arithmetic mean accumulated in input order with compensated summation.
pub fn mean_over_dataset(values: &[f64]) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    acc.extend(values.iter().copied());
    acc.mean()
}
