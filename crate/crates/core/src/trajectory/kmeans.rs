//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;

use crate::geometry::Point2;
use crate::{Error, Result};

pub const KMEANS_RESTARTS: usize = 10;
const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centers: Vec<Point2>,
    pub labels: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(a: &Point2, b: &Point2) -> f64 {
    (a.x - b.x).powi(2) + (a.y - b.y).powi(2)
}

fn nearest(p: &Point2, centers: &[Point2]) -> (usize, f64) {
    centers
        .iter()
        .enumerate()
        .map(|(k, c)| (k, sq_dist(p, c)))
        .fold(
            (0, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
}

fn seed_plus_plus<R: Rng + ?Sized>(points: &[Point2], k: usize, rng: &mut R) -> Vec<Point2> {
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all remaining points coincide with a center
            rng.random_range(0..points.len())
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        };
        let c = points[next];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn lloyd(points: &[Point2], mut centers: Vec<Point2>) -> KMeansFit {
    let k = centers.len();
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (label, p) in labels.iter_mut().zip(points) {
            let (c, _) = nearest(p, &centers);
            if *label != c {
                *label = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (&l, p) in labels.iter().zip(points) {
            sums[l].0 += p.x;
            sums[l].1 += p.y;
            sums[l].2 += 1;
        }
        for (c, (sx, sy, n)) in centers.iter_mut().zip(&sums) {
            // empty clusters keep their previous center
            if *n > 0 {
                *c = Point2::new(sx / *n as f64, sy / *n as f64);
            }
        }
    }
    let inertia = labels
        .iter()
        .zip(points)
        .map(|(&l, p)| sq_dist(p, &centers[l]))
        .sum();
    KMeansFit {
        centers,
        labels,
        inertia,
    }
}

/// Best-inertia fit over [`KMEANS_RESTARTS`] seeded runs.
pub fn kmeans<R: Rng + ?Sized>(points: &[Point2], k: usize, rng: &mut R) -> Result<KMeansFit> {
    if k == 0 || k > points.len() {
        return Err(Error::TooManyClusters { k, n: points.len() });
    }
    let mut best: Option<KMeansFit> = None;
    for _ in 0..KMEANS_RESTARTS {
        let fit = lloyd(points, seed_plus_plus(points, k, rng));
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn k_equals_n_recovers_points() {
        let pts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(5.0, 1.0),
            Point2::new(-3.0, 7.0),
        ];
        let fit = kmeans(&pts, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(fit.inertia, 0.0);
        for p in &pts {
            assert!(fit.centers.contains(p));
        }
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(4.0, 0.0),
            Point2::new(2.0, 6.0),
        ];
        let fit = kmeans(&pts, 1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!((fit.centers[0].x - 2.0).abs() < 1e-12 && (fit.centers[0].y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_many_clusters() {
        let pts = vec![Point2::new(0.0, 0.0)];
        assert!(matches!(
            kmeans(&pts, 2, &mut ChaCha8Rng::seed_from_u64(1)),
            Err(Error::TooManyClusters { k: 2, n: 1 })
        ));
    }
}
