//! Reference policies and dataset calibration.
//!
//! Every human scanpath is scored against three references: itself (upper
//! bound), a policy that stares at one frame corner (lower bound) and a
//! policy that stares at the frame centre (the centre baseline). The dataset
//! means of those scores are the anchors used by [`crate::gcs`].

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{CompensatedSum, Frame, MetricBundle, MetricKind, Point, Scanpath, Source};
use crate::error::{Error, Result};
use crate::metrics::{MetricConfig, MetricEngine, PreparedMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Corner {
    #[default]
    Tl,
    Tr,
    Bl,
    Br,
}

impl Corner {
    pub fn point(&self, frame: Frame) -> Point {
        let (x0, y0, x1, y1) = (0.0, 0.0, frame.max_x(), frame.max_y());
        match self {
            Corner::Tl => Point::new(x0, y0),
            Corner::Tr => Point::new(x1, y0),
            Corner::Bl => Point::new(x0, y1),
            Corner::Br => Point::new(x1, y1),
        }
    }
}

impl fmt::Display for Corner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Corner::Tl => "tl",
            Corner::Tr => "tr",
            Corner::Bl => "bl",
            Corner::Br => "br",
        })
    }
}

impl FromStr for Corner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tl" => Ok(Corner::Tl),
            "tr" => Ok(Corner::Tr),
            "bl" => Ok(Corner::Bl),
            "br" => Ok(Corner::Br),
            other => Err(Error::InvalidConfig(format!("unknown corner {other:?} (expected tl, tr, bl or br)"))),
        }
    }
}

fn stationary(frame: Frame, steps: usize, at: Point, image_id: &str) -> Result<Scanpath> {
    if steps == 0 {
        return Err(Error::EmptyScanpath);
    }
    Scanpath::from_points(frame, &vec![at; steps], Source::Baseline, image_id)
}

/// `steps` fixations at the frame centre.
pub fn center_scanpath(frame: Frame, steps: usize) -> Result<Scanpath> {
    stationary(frame, steps, frame.center(), "center")
}

/// `steps` fixations on the given corner pixel.
pub fn corner_scanpath(frame: Frame, steps: usize, corner: Corner) -> Result<Scanpath> {
    stationary(frame, steps, corner.point(frame), "corner")
}

/// Dataset means of one metric under the three references.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricBounds {
    /// Human compared with itself.
    pub upper: f64,
    /// Corner policy compared with the human.
    pub lower: f64,
    /// Centre policy compared with the human.
    pub center: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMeta {
    pub fingerprint: String,
    pub dataset_id: String,
    pub n_images: usize,
    pub corner: Corner,
    pub frame_width: u32,
    pub frame_height: u32,
    pub config: MetricConfig,
}

impl CalibrationMeta {
    pub fn frame(&self) -> Result<Frame> {
        Frame::new(self.frame_width, self.frame_height)
    }
}

const FORMAT_TAG: &str = "gazescore-calibration/1";

/// Per-metric upper, lower and centre anchors for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBounds {
    pub meta: CalibrationMeta,
    pub dtw: MetricBounds,
    pub sm: MetricBounds,
    pub nss: MetricBounds,
    pub auc: MetricBounds,
}

#[derive(Serialize, Deserialize)]
struct CalibrationFile {
    format: String,
    #[serde(flatten)]
    bounds: CalibrationBounds,
}

impl CalibrationBounds {
    /// Assembles bounds from the three dataset-mean bundles and checks them.
    pub fn from_means(upper: MetricBundle, lower: MetricBundle, center: MetricBundle, meta: CalibrationMeta) -> Result<Self> {
        let pick = |k: MetricKind| MetricBounds {
            upper: upper.get(k),
            lower: lower.get(k),
            center: center.get(k),
        };
        let bounds = CalibrationBounds {
            meta,
            dtw: pick(MetricKind::Dtw),
            sm: pick(MetricKind::Sm),
            nss: pick(MetricKind::Nss),
            auc: pick(MetricKind::Auc),
        };
        bounds.validate()?;
        for w in bounds.ordering_warnings() {
            warn!("{w}");
        }
        Ok(bounds)
    }

    pub fn get(&self, kind: MetricKind) -> &MetricBounds {
        match kind {
            MetricKind::Dtw => &self.dtw,
            MetricKind::Sm => &self.sm,
            MetricKind::Nss => &self.nss,
            MetricKind::Auc => &self.auc,
        }
    }

    pub fn fingerprint(&self) -> &str {
        &self.meta.fingerprint
    }

    /// Hard checks: every anchor finite, `upper != lower` (normalisation is
    /// undefined otherwise) and `center != upper` (the centre policy would be
    /// indistinguishable from a perfect match, so debiasing has no room).
    pub fn validate(&self) -> Result<()> {
        for kind in MetricKind::ALL {
            let b = self.get(kind);
            let degenerate = |reason: String| Error::DegenerateCalibration { metric: kind, reason };
            if !(b.upper.is_finite() && b.lower.is_finite() && b.center.is_finite()) {
                return Err(degenerate("non-finite anchor".into()));
            }
            if b.upper == b.lower {
                return Err(degenerate(format!("upper and lower bounds coincide at {}", b.upper)));
            }
            if b.center == b.upper {
                return Err(degenerate(format!("centre baseline equals the upper bound at {}", b.upper)));
            }
        }
        Ok(())
    }

    /// Soft checks: `lower <= center <= upper` for similarities and the
    /// reverse for DTW. Violations are legal but suspicious on a
    /// centre-biased dataset.
    pub fn ordering_warnings(&self) -> Vec<String> {
        MetricKind::ALL
            .iter()
            .filter_map(|&kind| {
                let b = self.get(kind);
                let ordered = if kind.higher_is_better() {
                    b.lower <= b.center && b.center <= b.upper
                } else {
                    b.upper <= b.center && b.center <= b.lower
                };
                (!ordered).then(|| {
                    format!(
                        "{kind}: anchors out of order (upper {}, centre {}, lower {})",
                        b.upper, b.center, b.lower
                    )
                })
            })
            .collect()
    }

    pub fn to_toml(&self) -> String {
        let file = CalibrationFile {
            format: FORMAT_TAG.to_string(),
            bounds: self.clone(),
        };
        let body = toml::to_string(&file).expect("calibration bounds serialise to TOML");
        format!("# gazescore calibration bounds\n{body}")
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let file: CalibrationFile = toml::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        if file.format != FORMAT_TAG {
            return Err(Error::format(origin, format!("unsupported format {:?}", file.format)));
        }
        file.bounds.meta.config.validate()?;
        if file.bounds.meta.config.fingerprint() != file.bounds.meta.fingerprint {
            return Err(Error::format(origin, "fingerprint does not match the embedded metric configuration"));
        }
        file.bounds.validate()?;
        Ok(file.bounds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// Three-row summary table in the layout of a calibration report.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<26} {:>10} {:>8} {:>8} {:>8}", "Baseline", "DTW (lo)", "SM (hi)", "NSS (hi)", "AUC (hi)");
        let rows: [(&str, fn(&MetricBounds) -> f64); 3] = [
            ("Identical-Human (upper)", |b| b.upper),
            ("Corner-Human (lower)", |b| b.lower),
            ("Center-Human (baseline)", |b| b.center),
        ];
        for (label, get) in rows {
            let _ = writeln!(
                out,
                "{:<26} {:>10.3} {:>8.3} {:>8.3} {:>8.4}",
                label,
                get(&self.dtw),
                get(&self.sm),
                get(&self.nss),
                get(&self.auc)
            );
        }
        let _ = writeln!(
            out,
            "n_images={} corner={} frame={}x{} fingerprint={}",
            self.meta.n_images, self.meta.corner, self.meta.frame_width, self.meta.frame_height, self.meta.fingerprint
        );
        out
    }
}

/// Per-image reference scores for one human path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceScores {
    pub upper: MetricBundle,
    pub lower: MetricBundle,
    pub center: MetricBundle,
}

/// Scores each human path against the three references and averages per
/// metric. Baseline paths take the length of the human path they are
/// compared with. Images are processed in `image_id` order so the result is
/// independent of input order and of the rayon pool size.
pub fn calibrate(
    humans: &[Scanpath],
    cfg: &MetricConfig,
    corner: Corner,
    dataset_id: &str,
) -> Result<CalibrationBounds> {
    let first = humans.first().ok_or(Error::EmptyDataset)?;
    let frame = first.frame();
    let engine = MetricEngine::new(*cfg)?;

    let mut ordered: Vec<&Scanpath> = humans.iter().collect();
    ordered.sort_by(|a, b| a.image_id().cmp(b.image_id()));

    // the stationary policies only depend on path length, so their maps are
    // shared across images
    let mut references: BTreeMap<usize, (Scanpath, PreparedMap, Scanpath, PreparedMap)> = BTreeMap::new();
    for h in &ordered {
        if h.frame() != frame {
            return Err(Error::FrameMismatch {
                left: frame.to_string(),
                right: h.frame().to_string(),
            });
        }
        if !references.contains_key(&h.len()) {
            let c = center_scanpath(frame, h.len())?;
            let k = corner_scanpath(frame, h.len(), corner)?;
            let (cm, km) = (engine.prepare(&c), engine.prepare(&k));
            references.insert(h.len(), (c, cm, k, km));
        }
    }

    let scores: Vec<ReferenceScores> = ordered
        .par_iter()
        .map(|h| {
            let (c, cm, k, km) = &references[&h.len()];
            Ok(ReferenceScores {
                upper: engine.bundle(h, h)?,
                lower: engine.bundle_prepared(k, km, h)?,
                center: engine.bundle_prepared(c, cm, h)?,
            })
        })
        .collect::<Result<_>>()?;

    let mean_of = |pick: fn(&ReferenceScores) -> MetricBundle| -> Result<MetricBundle> {
        let mut acc = [CompensatedSum::new(); 4];
        for s in &scores {
            let b = pick(s);
            for (slot, kind) in acc.iter_mut().zip(MetricKind::ALL) {
                slot.add(b.get(kind));
            }
        }
        Ok(MetricBundle {
            dtw: acc[0].mean()?,
            sm: acc[1].mean()?,
            nss: acc[2].mean()?,
            auc: acc[3].mean()?,
        })
    };

    let meta = CalibrationMeta {
        fingerprint: cfg.fingerprint(),
        dataset_id: dataset_id.to_string(),
        n_images: scores.len(),
        corner,
        frame_width: frame.width(),
        frame_height: frame.height(),
        config: *cfg,
    };
    CalibrationBounds::from_means(mean_of(|s| s.upper)?, mean_of(|s| s.lower)?, mean_of(|s| s.center)?, meta)
}
