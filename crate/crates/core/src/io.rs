//! File formats, run manifests, evidence traces and the synthetic data
//! generator.
//!
//! Scanpath files are UTF-8 CSV with the header `image_id,step,x,y` and an
//! optional `duration_ms` column, one file per source. Probability logs use
//! `image_id,step,p_true`. Row order does not matter; paths come back sorted
//! by image id with fixations in step order.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{CompensatedSum, Fixation, Frame, Point, Scanpath, Source};
use crate::error::{Error, Result};
use crate::gcs::Setting;
use crate::movement::MovementStats;

/// Hex digits kept from the SHA-256 digest.
pub const FINGERPRINT_LEN: usize = 16;

/// Short SHA-256 digest over `key=value` lines, in the order given.
///
/// ```
/// let a = gazescore::io::fingerprint(&[("k".into(), "1".into())]);
/// let b = gazescore::io::fingerprint(&[("k".into(), "2".into())]);
/// assert_eq!(a.len(), 16);
/// assert_ne!(a, b);
/// ```
pub fn fingerprint(lines: &[(String, String)]) -> String {
    let mut hasher = Sha256::new();
    for (k, v) in lines {
        hasher.update(k.as_bytes());
        hasher.update(b"=");
        hasher.update(v.as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    digest
        .iter()
        .take(FINGERPRINT_LEN / 2)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Scanpaths read from one file plus the number of coordinates clamped into
/// the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanpathFile {
    pub scanpaths: Vec<Scanpath>,
    pub clamped: usize,
}

fn column(headers: &csv::StringRecord, name: &str, origin: &Path) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
        path: origin.to_path_buf(),
        line: 1,
        message: format!("missing column {name:?}"),
    })
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, origin: &Path) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(idx).ok_or_else(|| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message: format!("missing {name}"),
    })?;
    raw.parse().map_err(|_| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message: format!("invalid {name} {raw:?}"),
    })
}

fn csv_error(origin: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        path: origin.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

fn read_scanpaths_with<R: Read>(
    reader: R,
    frame: Frame,
    source: Source,
    origin: &Path,
    to_pixels: impl Fn(f64, f64) -> (f64, f64),
) -> Result<ScanpathFile> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(origin, e))?.clone();
    let (c_id, c_step, c_x, c_y) = (
        column(&headers, "image_id", origin)?,
        column(&headers, "step", origin)?,
        column(&headers, "x", origin)?,
        column(&headers, "y", origin)?,
    );
    let c_dur = headers.iter().position(|h| h == "duration_ms");

    let mut images: BTreeMap<String, BTreeMap<u32, Fixation>> = BTreeMap::new();
    let mut clamped = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(origin, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let image_id: String = field(&rec, c_id, "image_id", origin)?;
        let step: u32 = field(&rec, c_step, "step", origin)?;
        let x: f64 = field(&rec, c_x, "x", origin)?;
        let y: f64 = field(&rec, c_y, "y", origin)?;
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line,
                message: "non-finite coordinate".into(),
            });
        }
        let duration_ms = match c_dur.and_then(|c| rec.get(c)).filter(|s| !s.is_empty()) {
            Some(s) => Some(s.parse::<f64>().map_err(|_| Error::Parse {
                path: origin.to_path_buf(),
                line,
                message: format!("invalid duration_ms {s:?}"),
            })?),
            None => None,
        };
        let (px, py) = to_pixels(x, y);
        let (p, was_clamped) = frame.clamp_point(Point::new(px, py));
        clamped += usize::from(was_clamped);
        let fixation = Fixation {
            x: p.x,
            y: p.y,
            step,
            duration_ms,
        };
        match images.entry(image_id.clone()).or_default().entry(step) {
            Entry::Occupied(_) => return Err(Error::DuplicateRow { image_id, step }),
            Entry::Vacant(slot) => {
                slot.insert(fixation);
            }
        }
    }
    if clamped > 0 {
        warn!("{}: clamped {clamped} coordinates into the {frame} frame", origin.display());
    }
    let scanpaths = images
        .into_iter()
        .map(|(id, steps)| Scanpath::new(frame, steps.into_values().collect(), source, id))
        .collect::<Result<_>>()?;
    Ok(ScanpathFile { scanpaths, clamped })
}

/// Parses scanpath CSV from any reader. `origin` is only used in messages.
pub fn read_scanpaths<R: Read>(reader: R, frame: Frame, source: Source, origin: &Path) -> Result<ScanpathFile> {
    read_scanpaths_with(reader, frame, source, origin, |x, y| (x, y))
}

/// Loads a scanpath file; out-of-frame coordinates are clamped with a
/// warning.
pub fn load_scanpaths(path: &Path, frame: Frame, source: Source) -> Result<Vec<Scanpath>> {
    Ok(load_scanpath_file(path, frame, source)?.scanpaths)
}

pub fn load_scanpath_file(path: &Path, frame: Frame, source: Source) -> Result<ScanpathFile> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_scanpaths(std::io::BufReader::new(file), frame, source, path)
}

/// Writes scanpaths in the CSV layout read by [`read_scanpaths`]. Floats use
/// the shortest representation that parses back to the same value.
pub fn write_scanpaths<W: Write>(writer: W, paths: &[Scanpath]) -> Result<()> {
    let with_duration = paths.iter().flat_map(|p| p.fixations()).any(|f| f.duration_ms.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::format(Path::new("<output>"), e.to_string());
    let mut header = vec!["image_id", "step", "x", "y"];
    if with_duration {
        header.push("duration_ms");
    }
    w.write_record(&header).map_err(to_err)?;
    for p in paths {
        for f in p.fixations() {
            let mut rec = vec![p.image_id().to_string(), f.step.to_string(), f.x.to_string(), f.y.to_string()];
            if with_duration {
                rec.push(f.duration_ms.map(|d| d.to_string()).unwrap_or_default());
            }
            w.write_record(&rec).map_err(to_err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

pub fn save_scanpaths(path: &Path, paths: &[Scanpath]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_scanpaths(std::io::BufWriter::new(file), paths).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Standard normal pair by the Box-Muller transform.
fn normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    // 1 - U keeps the logarithm's argument in (0, 1]
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * PI * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Centre-biased synthetic human data.
///
/// Each fixation is drawn from an isotropic Gaussian at the frame centre with
/// standard deviation `center_std_frac * width`, then clamped into the frame.
/// The generator is ChaCha8 seeded through `seed_from_u64`; each fixation
/// consumes one Box-Muller pair (x from the cosine branch, y from the sine
/// branch) and images are generated in order, so output depends only on the
/// arguments. Image ids are `img000000`, `img000001`, ...
pub fn synth_dataset(
    n_images: usize,
    frame: Frame,
    steps: usize,
    center_std_frac: f64,
    seed: u64,
) -> Result<Vec<Scanpath>> {
    if n_images == 0 {
        return Err(Error::EmptyDataset);
    }
    if steps == 0 {
        return Err(Error::EmptyScanpath);
    }
    if !(center_std_frac >= 0.0 && center_std_frac.is_finite()) {
        return Err(Error::InvalidConfig(format!("center_std_frac must be >= 0, got {center_std_frac}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = frame.center();
    let std = center_std_frac * f64::from(frame.width());
    (0..n_images)
        .map(|i| {
            let points: Vec<Point> = (0..steps)
                .map(|_| {
                    let (zx, zy) = normal_pair(&mut rng);
                    frame.clamp_point(Point::new(c.x + std * zx, c.y + std * zy)).0
                })
                .collect();
            Scanpath::from_points(frame, &points, Source::Human, format!("img{i:06}"))
        })
        .collect()
}

/// Fixations uniform over the frame, same generator and id scheme as
/// [`synth_dataset`].
pub fn uniform_dataset(n_images: usize, frame: Frame, steps: usize, seed: u64) -> Result<Vec<Scanpath>> {
    if n_images == 0 {
        return Err(Error::EmptyDataset);
    }
    if steps == 0 {
        return Err(Error::EmptyScanpath);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_images)
        .map(|i| {
            let points: Vec<Point> = (0..steps)
                .map(|_| Point::new(rng.gen::<f64>() * frame.max_x(), rng.gen::<f64>() * frame.max_y()))
                .collect();
            Scanpath::from_points(frame, &points, Source::Human, format!("img{i:06}"))
        })
        .collect()
}

/// One sweep configuration and where its logs live.
///
/// Stored as flat TOML:
///
/// ```toml
/// run_id = "fov_per-8"
/// setting = "fov_per"
/// patch_size = 8
/// steps = 12
/// accuracy = 0.585
/// scanpath_file = "fov_per-8.csv"
/// probability_file = "fov_per-8.probs.csv"
/// frame_width = 512
/// frame_height = 512
/// ```
///
/// Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub run_id: String,
    pub setting: Setting,
    pub patch_size: u32,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub scanpath_file: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_height: Option<u32>,
}

impl RunManifest {
    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() {
            return Err(Error::InvalidConfig("empty run_id".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be >= 1".into()));
        }
        if self.patch_size == 0 {
            return Err(Error::InvalidConfig("patch_size must be positive".into()));
        }
        if let Some(a) = self.accuracy {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidConfig(format!("accuracy {a} outside [0, 1]")));
            }
        }
        if self.frame_width.is_some() != self.frame_height.is_some() {
            return Err(Error::InvalidConfig("frame_width and frame_height go together".into()));
        }
        Ok(())
    }

    /// Frame declared in the manifest, if any.
    pub fn frame(&self) -> Result<Option<Frame>> {
        match (self.frame_width, self.frame_height) {
            (Some(w), Some(h)) => Frame::new(w, h).map(Some),
            _ => Ok(None),
        }
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let mut m: RunManifest = toml::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        m.validate()?;
        let base = origin.parent().unwrap_or(Path::new(""));
        m.scanpath_file = base.join(&m.scanpath_file);
        m.probability_file = m.probability_file.map(|p| base.join(p));
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serialises to TOML")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}

/// Per-step probability of the true class for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceTrace {
    pub image_id: String,
    pub p_true: Vec<f64>,
}

pub fn read_evidence<R: Read>(reader: R, origin: &Path) -> Result<Vec<EvidenceTrace>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(origin, e))?.clone();
    let (c_id, c_step, c_p) = (
        column(&headers, "image_id", origin)?,
        column(&headers, "step", origin)?,
        column(&headers, "p_true", origin)?,
    );
    let mut images: BTreeMap<String, BTreeMap<u32, f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(origin, e))?;
        let image_id: String = field(&rec, c_id, "image_id", origin)?;
        let step: u32 = field(&rec, c_step, "step", origin)?;
        let p: f64 = field(&rec, c_p, "p_true", origin)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: rec.position().map_or(0, |p| p.line()),
                message: format!("p_true {p} outside [0, 1]"),
            });
        }
        if images.entry(image_id.clone()).or_default().insert(step, p).is_some() {
            return Err(Error::DuplicateRow { image_id, step });
        }
    }
    Ok(images
        .into_iter()
        .map(|(image_id, steps)| EvidenceTrace {
            image_id,
            p_true: steps.into_values().collect(),
        })
        .collect())
}

pub fn load_evidence(path: &Path) -> Result<Vec<EvidenceTrace>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_evidence(std::io::BufReader::new(file), path)
}

/// One point of the evidence-versus-movement scatter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvidencePoint {
    pub mean_final_p_true: f64,
    pub mean_total_path: f64,
}

/// Mean final-step `p_true` over images, paired with the run's mean total
/// path length.
pub fn evidence_summary(traces: &[EvidenceTrace], steps: usize, movement: &MovementStats) -> Result<EvidencePoint> {
    if traces.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc = CompensatedSum::new();
    for t in traces {
        if t.p_true.len() != steps {
            return Err(Error::TraceLength {
                image_id: t.image_id.clone(),
                expected: steps,
                found: t.p_true.len(),
            });
        }
        acc.add(*t.p_true.last().ok_or(Error::EmptyAggregation)?);
    }
    Ok(EvidencePoint {
        mean_final_p_true: acc.mean()?,
        mean_total_path: movement.total_path,
    })
}

/// Adapter for Gaze-CIFAR-10 style gaze exports and the published reference
/// numbers.
///
/// The on-disk layout of the released dataset is not documented, so this
/// adapter only covers the common case of per-fixation rows with coordinates
/// normalised to `[0, 1]` in the same CSV layout as [`read_scanpaths`].
/// Anything else needs a converter into that layout first.
pub mod gaze_cifar {
    use super::*;
    use crate::domain::MetricBundle;

    /// Fixations per scanpath in the published sweep.
    pub const STEPS: usize = 12;

    /// Patch sizes of the published sweep.
    pub const PATCH_SIZES: [u32; 12] = [2, 4, 6, 8, 10, 12, 14, 16, 20, 24, 28, 32];

    /// Identical-human anchors on the test split.
    pub const REFERENCE_UPPER: MetricBundle = MetricBundle { dtw: 0.003, sm: 1.000, nss: 6.052, auc: 0.995 };
    /// Corner-human anchors on the test split.
    pub const REFERENCE_LOWER: MetricBundle = MetricBundle { dtw: 2023.87, sm: 0.013, nss: -0.053, auc: 0.541 };
    /// Center-human anchors on the test split.
    pub const REFERENCE_CENTER: MetricBundle = MetricBundle { dtw: 702.24, sm: 0.300, nss: 1.145, auc: 0.6515 };

    /// Published best-GCS configuration: (fov_per, patch 8), GCS 0.0291,
    /// accuracy 58.50%, path 190.5.
    pub const BEST_GCS: (Setting, u32, f64) = (Setting::FovPer, 8, 0.0291);

    /// Reads normalised-coordinate rows and scales them to pixel
    /// coordinates, `x_px = x * (width - 1)`.
    pub fn read_normalized<R: Read>(reader: R, frame: Frame, source: Source, origin: &Path) -> Result<ScanpathFile> {
        let (sx, sy) = (frame.max_x(), frame.max_y());
        read_scanpaths_with(reader, frame, source, origin, move |x, y| (x * sx, y * sy))
    }

    pub fn load_normalized(path: &Path, frame: Frame, source: Source) -> Result<Vec<Scanpath>> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(read_normalized(std::io::BufReader::new(file), frame, source, path)?.scanpaths)
    }
}
