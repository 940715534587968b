//! The four scanpath similarity kernels and the configuration they share.

pub mod dtw;
pub mod saliency;
pub mod scanmatch;

use serde::{Deserialize, Serialize};

use crate::domain::{ensure_same_frame, Frame, MetricBundle, Scanpath};
use crate::error::Result;
use crate::io::fingerprint;

pub use dtw::{dtw_distance, dtw_points};
pub use saliency::{auc_judd, build_fixation_map, nss, MapConfig, MapStats, Nss, PreparedMap, SaliencyMap};
pub use scanmatch::{quantize, scanmatch_score, Cell, ScanMatchConfig, ScanMatcher};

/// Parameters of every metric kernel. Calibration and evaluation must use
/// identical values; [`MetricConfig::fingerprint`] is how that is checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub scanmatch: ScanMatchConfig,
    pub map: MapConfig,
}

impl MetricConfig {
    pub fn default_for(frame: Frame) -> Self {
        MetricConfig {
            scanmatch: ScanMatchConfig::default(),
            map: MapConfig::default_for(frame),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scanmatch.validate()?;
        self.map.validate()
    }

    /// Stable `key = value` listing of every parameter, used both for
    /// fingerprinting and for echoing effective settings into outputs.
    pub fn canonical_lines(&self) -> Vec<(String, String)> {
        let sm = &self.scanmatch;
        vec![
            ("scanmatch.grid_cols".into(), sm.grid_cols.to_string()),
            ("scanmatch.grid_rows".into(), sm.grid_rows.to_string()),
            ("scanmatch.gap_penalty".into(), format!("{:?}", sm.gap_penalty)),
            ("scanmatch.substitution_scale".into(), format!("{:?}", sm.substitution_scale)),
            ("scanmatch.max_score_per_token".into(), format!("{:?}", sm.max_score_per_token)),
            ("map.sigma".into(), format!("{:?}", self.map.sigma)),
            ("map.downsample".into(), self.map.downsample.to_string()),
        ]
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.canonical_lines())
    }
}

/// Scores model/human pairs under one [`MetricConfig`].
#[derive(Debug, Clone)]
pub struct MetricEngine {
    cfg: MetricConfig,
    matcher: ScanMatcher,
}

impl MetricEngine {
    pub fn new(cfg: MetricConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(MetricEngine {
            cfg,
            matcher: ScanMatcher::new(cfg.scanmatch)?,
        })
    }

    pub fn config(&self) -> &MetricConfig {
        &self.cfg
    }

    pub fn prepare(&self, model: &Scanpath) -> PreparedMap {
        PreparedMap::from_path(model, &self.cfg.map)
    }

    pub fn bundle(&self, model: &Scanpath, human: &Scanpath) -> Result<MetricBundle> {
        ensure_same_frame(model, human)?;
        let map = self.prepare(model);
        Ok(MetricBundle {
            dtw: dtw_distance(model, human)?,
            sm: self.matcher.score(model, human)?,
            nss: map.nss(human)?.value,
            auc: map.auc(human)?,
        })
    }

    /// Like [`MetricEngine::bundle`] but reuses a map prepared from `model`.
    pub fn bundle_prepared(&self, model: &Scanpath, map: &PreparedMap, human: &Scanpath) -> Result<MetricBundle> {
        ensure_same_frame(model, human)?;
        Ok(MetricBundle {
            dtw: dtw_distance(model, human)?,
            sm: self.matcher.score(model, human)?,
            nss: map.nss(human)?.value,
            auc: map.auc_ranked(human)?,
        })
    }
}

/// All four metrics for one model/human pair.
pub fn metric_bundle(
    model_path: &Scanpath,
    human_path: &Scanpath,
    sm_cfg: &ScanMatchConfig,
    map_cfg: &MapConfig,
) -> Result<MetricBundle> {
    MetricEngine::new(MetricConfig {
        scanmatch: *sm_cfg,
        map: *map_cfg,
    })?
    .bundle(model_path, human_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Source;

    #[test]
    fn identical_paths_hit_the_upper_row_pattern() {
        let f = Frame::new(128, 128).unwrap();
        let p = Scanpath::from_points(f, &[(60.0, 60.0), (70.0, 64.0), (64.0, 80.0)], Source::Human, "x").unwrap();
        let cfg = MetricConfig::default_for(f);
        let b = metric_bundle(&p, &p, &cfg.scanmatch, &cfg.map).unwrap();
        assert_eq!(b.dtw, 0.0);
        assert_eq!(b.sm, 1.0);
        assert!(b.nss > 0.0);
        assert!(b.auc > 0.95);
    }

    #[test]
    fn prepared_and_fresh_bundles_agree_bitwise() {
        let f = Frame::new(300, 200).unwrap();
        let cfg = MetricConfig::default_for(f);
        let engine = MetricEngine::new(cfg).unwrap();
        let model = Scanpath::from_points(f, &[(149.5, 99.5); 5], Source::Baseline, "x").unwrap();
        let human = Scanpath::from_points(f, &[(10.0, 20.0), (150.0, 90.0), (299.0, 0.0)], Source::Human, "x").unwrap();
        let map = engine.prepare(&model);
        assert_eq!(
            engine.bundle(&model, &human).unwrap(),
            engine.bundle_prepared(&model, &map, &human).unwrap()
        );
    }

    #[test]
    fn fingerprint_tracks_every_parameter() {
        let f = Frame::new(512, 512).unwrap();
        let base = MetricConfig::default_for(f);
        let mut other = base;
        other.map.sigma += 1.0;
        assert_ne!(base.fingerprint(), other.fingerprint());
        let mut other = base;
        other.scanmatch.grid_cols = 9;
        assert_ne!(base.fingerprint(), other.fingerprint());
        assert_eq!(base.fingerprint(), MetricConfig::default_for(f).fingerprint());
        assert_eq!(base.fingerprint().len(), 16);
    }
}
