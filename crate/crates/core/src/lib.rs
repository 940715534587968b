//! Centre-debiased scanpath evaluation.
//!
//! Raw scanpath similarities (DTW, ScanMatch, NSS, AUC-Judd) are strongly
//! inflated on centre-biased human data: a policy that stares at the frame
//! centre already scores well. This crate calibrates every metric against
//! three references per dataset (a human against itself, an always-corner
//! policy and an always-centre policy), rescales raw scores onto `[0, 1]`
//! between the corner and identity anchors, subtracts the centre policy's
//! score and combines the result with a movement similarity term into the
//! gaze consistency score (GCS).
//!
//! ```
//! use gazescore::baselines::{calibrate, Corner};
//! use gazescore::gcs::GcsConfig;
//! use gazescore::io::{synth_dataset, RunManifest};
//! use gazescore::metrics::MetricConfig;
//! use gazescore::movement::MovementConfig;
//! use gazescore::report::evaluate_paths;
//! use gazescore::Frame;
//!
//! let frame = Frame::new(128, 128)?;
//! let humans = synth_dataset(50, frame, 12, 0.15, 7)?;
//! let bounds = calibrate(&humans, &MetricConfig::default_for(frame), Corner::Tl, "synth")?;
//! assert_eq!(bounds.sm.upper, 1.0);
//!
//! let cfg = GcsConfig::from_bounds(0.1, bounds, MovementConfig::default_for(frame))?;
//! let models = synth_dataset(50, frame, 12, 0.3, 8)?;
//! let manifest: RunManifest = toml::from_str(
//!     "run_id = \"wide\"\nsetting = \"fov_per\"\npatch_size = 8\nsteps = 12\nscanpath_file = \"wide.csv\"",
//! )?;
//! let summary = evaluate_paths(&manifest, &models, &humans, &cfg)?;
//! assert_eq!(summary.n_pairs, 50);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod baselines;
pub mod domain;
pub mod error;
pub mod gcs;
pub mod io;
pub mod metrics;
pub mod movement;
pub mod report;

pub use domain::{
    frame_center, mean_over_dataset, CompensatedSum, Fixation, Frame, MetricBundle, MetricKind, Point, Scanpath, Source,
};
pub use error::{Error, Result};
