use ndarray::Array2;
use rand::Rng;

use super::objective::WaypointObjective;
use super::solver::{maximize, ConvexHull, Solution, SolverConfig};
use crate::connectivity::LinkProbabilityMatrix;
use crate::geometry::{AirChannelParams, Deployment, Point2};
use crate::{Error, Result};

/// All pairwise midpoints of the cluster centers, sorted lexicographically
/// by `(x, y)`.
pub fn cluster_midpoints(centers: &[Point2]) -> Result<Vec<Point2>> {
    if centers.len() < 2 {
        return Err(Error::TooFewCenters(centers.len()));
    }
    let mut mids = Vec::with_capacity(centers.len() * (centers.len() - 1) / 2);
    for (i, a) in centers.iter().enumerate() {
        for b in &centers[i + 1..] {
            mids.push(a.midpoint(b));
        }
    }
    mids.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    Ok(mids)
}

/// Mean horizontal position.
pub fn barycenter(points: &[Point2]) -> Point2 {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point2::new(sx / n, sy / n)
}

/// Static hover point maximizing relay opportunities between pairs that
/// the ground network is unlikely to connect: weights `J - E[A_gr]`.
pub fn max_connectivity_placement<R: Rng + ?Sized>(
    dep: &Deployment,
    ground_probs: &LinkProbabilityMatrix,
    air: &AirChannelParams,
    threshold_db: f64,
    altitude: f64,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<Solution> {
    let weights: Array2<f64> = ground_probs.as_array().mapv(|p| 1.0 - p);
    let f = WaypointObjective::new(dep, weights, *air, threshold_db, altitude)?;
    let hull = ConvexHull::new(&dep.horizontal_positions())?;
    Ok(maximize(&f, dep.arena(), &hull, cfg, rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_examples() {
        let two = cluster_midpoints(&[Point2::new(0.0, 0.0), Point2::new(2.0, 0.0)]).unwrap();
        assert_eq!(two, vec![Point2::new(1.0, 0.0)]);
        let three = cluster_midpoints(&[
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 4.0),
            Point2::new(4.0, 0.0),
        ])
        .unwrap();
        assert_eq!(
            three,
            vec![
                Point2::new(0.0, 2.0),
                Point2::new(2.0, 0.0),
                Point2::new(2.0, 2.0)
            ]
        );
        assert!(cluster_midpoints(&[Point2::new(0.0, 0.0)]).is_err());
    }

    #[test]
    fn barycenter_examples() {
        assert_eq!(
            barycenter(&[Point2::new(0.0, 0.0), Point2::new(2.0, 0.0)]),
            Point2::new(1.0, 0.0)
        );
        assert_eq!(
            barycenter(&[Point2::new(3.0, -1.0)]),
            Point2::new(3.0, -1.0)
        );
        assert_eq!(
            barycenter(&[
                Point2::new(0.0, 0.0),
                Point2::new(0.0, 3.0),
                Point2::new(3.0, 0.0)
            ]),
            Point2::new(1.0, 1.0)
        );
    }
}
