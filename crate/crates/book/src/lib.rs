//! Code listings of the guide in `book/`, compiled and run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/scanpaths.md")]
pub mod scanpaths {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/calibration.md")]
pub mod calibration {}

#[doc = include_str!("../../../book/src/gcs.md")]
pub mod gcs {}

#[doc = include_str!("../../../book/src/movement.md")]
pub mod movement {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../book/src/reference.md")]
pub mod reference {}
