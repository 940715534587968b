//! Dynamic time warping between fixation sequences.

use crate::domain::{ensure_same_frame, Point, Scanpath};
use crate::error::{Error, Result};

/// Full cumulative DTW cost between two scanpaths, with Euclidean distance
/// as the ground cost and the symmetric match/insert/delete step pattern.
///
/// The cost is not normalised by path length, so it grows with the number of
/// fixations. `dtw_distance(a, a)` is exactly zero.
pub fn dtw_distance(a: &Scanpath, b: &Scanpath) -> Result<f64> {
    ensure_same_frame(a, b)?;
    let a: Vec<Point> = a.points().collect();
    let b: Vec<Point> = b.points().collect();
    dtw_points(&a, &b)
}

/// DTW over bare point sequences.
pub fn dtw_points(a: &[Point], b: &[Point]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyScanpath);
    }
    // Two rolling rows over `b`; row[j] holds the cost of aligning the current
    // prefix of `a` with b[..=j].
    let mut prev = vec![f64::INFINITY; b.len()];
    let mut curr = vec![0.0; b.len()];
    for (i, pa) in a.iter().enumerate() {
        for (j, pb) in b.iter().enumerate() {
            let cost = pa.distance(pb);
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => curr[j - 1],
                (_, 0) => prev[0],
                _ => prev[j - 1].min(prev[j]).min(curr[j - 1]),
            };
            curr[j] = cost + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[b.len() - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Frame, Source};

    fn path(frame: Frame, pts: &[(f64, f64)]) -> Scanpath {
        Scanpath::from_points(frame, pts, Source::Model, "img").unwrap()
    }

    #[test]
    fn identity_is_zero() {
        let f = Frame::new(100, 100).unwrap();
        let a = path(f, &[(1.0, 2.0), (50.5, 3.25), (99.0, 99.0), (0.0, 7.0)]);
        assert_eq!(dtw_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn single_pair_is_euclidean() {
        let f = Frame::new(8, 8).unwrap();
        let a = path(f, &[(0.0, 0.0)]);
        let b = path(f, &[(3.0, 4.0)]);
        assert_eq!(dtw_distance(&a, &b).unwrap(), 5.0);
    }

    #[test]
    fn repeated_point_accumulates() {
        // both points of `a` must align with the single point of `b`
        let f = Frame::new(8, 8).unwrap();
        let a = path(f, &[(0.0, 0.0), (0.0, 0.0)]);
        let b = path(f, &[(3.0, 4.0)]);
        assert_eq!(dtw_distance(&a, &b).unwrap(), 10.0);
        assert_eq!(dtw_distance(&b, &a).unwrap(), 10.0);
    }

    #[test]
    fn frame_mismatch_is_rejected() {
        let a = path(Frame::new(8, 8).unwrap(), &[(0.0, 0.0)]);
        let b = path(Frame::new(9, 8).unwrap(), &[(0.0, 0.0)]);
        assert!(matches!(dtw_distance(&a, &b), Err(Error::FrameMismatch { .. })));
    }

    #[test]
    fn empty_points_rejected() {
        assert!(matches!(dtw_points(&[], &[Point::new(0.0, 0.0)]), Err(Error::EmptyScanpath)));
    }
}
