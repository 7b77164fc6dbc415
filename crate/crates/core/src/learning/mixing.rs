use ndarray::Array2;
use rayon::prelude::*;

use crate::connectivity::AdjacencyMatrix;
use crate::{Error, Result};

/// Symmetric, doubly stochastic gossip weights supported on a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    w: Array2<f64>,
    /// Nonzero `(j, w_ij)` per row, for sparse mixing.
    rows: Vec<Vec<(usize, f64)>>,
}

impl MixingMatrix {
    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.w
    }

    fn from_dense(w: Array2<f64>) -> Self {
        let rows = w
            .outer_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect()
            })
            .collect();
        Self { w, rows }
    }
}

/// `w_ij = 1 / (1 + max(deg_i, deg_j))` on edges, the remainder on the
/// diagonal.
pub fn metropolis_weights(a: &AdjacencyMatrix) -> Result<MixingMatrix> {
    a.check_symmetric()?;
    let m = a.len();
    let deg: Vec<usize> = (0..m).map(|i| a.degree(i)).collect();
    let mut w = Array2::zeros((m, m));
    for i in 0..m {
        for j in (i + 1)..m {
            if a.get(i, j) {
                let v = 1.0 / (1 + deg[i].max(deg[j])) as f64;
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    Ok(MixingMatrix::from_dense(w))
}

/// `θ_i ← Σ_j w_ij θ_j` for every node.
pub fn mix(estimates: &[Vec<f64>], w: &MixingMatrix) -> Result<Vec<Vec<f64>>> {
    if estimates.len() != w.len() {
        return Err(Error::shape(w.len(), estimates.len()));
    }
    let d = estimates.first().map_or(0, Vec::len);
    if let Some(bad) = estimates.iter().find(|e| e.len() != d) {
        return Err(Error::shape(d, bad.len()));
    }
    Ok(w.rows
        .par_iter()
        .map(|row| {
            let mut out = vec![0.0; d];
            for &(j, wij) in row {
                for (o, x) in out.iter_mut().zip(&estimates[j]) {
                    *o += wij * x;
                }
            }
            out
        })
        .collect())
}

pub fn mean_estimate(estimates: &[Vec<f64>]) -> Vec<f64> {
    let d = estimates.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for e in estimates {
        for (m, x) in mean.iter_mut().zip(e) {
            *m += x;
        }
    }
    let n = estimates.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// `(1 / (d m)) · sqrt(Σ_i ‖θ_i − θ̄‖²)`.
pub fn consensus_error(estimates: &[Vec<f64>]) -> f64 {
    let m = estimates.len();
    let d = estimates.first().map_or(0, Vec::len);
    if m == 0 || d == 0 {
        return 0.0;
    }
    let mean = mean_estimate(estimates);
    let ss: f64 = estimates
        .iter()
        .flat_map(|e| e.iter().zip(&mean).map(|(x, mu)| (x - mu).powi(2)))
        .sum();
    ss.sqrt() / (d * m) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn identity_graph_gives_identity() {
        let w = metropolis_weights(&AdjacencyMatrix::identity(4)).unwrap();
        assert_eq!(w.as_array(), &Array2::eye(4));
        let est = vec![
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![5.0, 6.0],
            vec![7.0, 8.0],
        ];
        assert_eq!(mix(&est, &w).unwrap(), est);
    }

    #[test]
    fn two_nodes() {
        let w = metropolis_weights(&AdjacencyMatrix::ones(2)).unwrap();
        for v in w.as_array() {
            assert_eq!(*v, 0.5);
        }
        assert_eq!(
            mix(&[vec![0.0], vec![2.0]], &w).unwrap(),
            vec![vec![1.0], vec![1.0]]
        );
    }

    #[test]
    fn path_of_three() {
        let w = metropolis_weights(&AdjacencyMatrix::from_edges(3, &[(0, 1), (1, 2)])).unwrap();
        let third = 1.0 / 3.0;
        assert_abs_diff_eq!(w.get(0, 1), third);
        assert_abs_diff_eq!(w.get(1, 2), third);
        assert_abs_diff_eq!(w.get(0, 0), 2.0 * third);
        assert_abs_diff_eq!(w.get(2, 2), 2.0 * third);
        assert_abs_diff_eq!(w.get(1, 1), third, epsilon = 1e-15);
        assert_eq!(w.get(0, 2), 0.0);
    }

    #[test]
    fn rejects_asymmetric_and_mismatched() {
        let mut raw = Array2::eye(2);
        raw[(0, 1)] = 1;
        let a = AdjacencyMatrix::from_array(raw).unwrap();
        assert!(matches!(
            metropolis_weights(&a),
            Err(Error::NotSymmetric(0, 1))
        ));
        let w = metropolis_weights(&AdjacencyMatrix::ones(2)).unwrap();
        assert!(mix(&[vec![0.0]], &w).is_err());
        assert!(mix(&[vec![0.0], vec![1.0, 2.0]], &w).is_err());
    }

    #[test]
    fn consensus_examples() {
        assert_eq!(consensus_error(&[vec![1.0, 2.0], vec![1.0, 2.0]]), 0.0);
        assert_abs_diff_eq!(
            consensus_error(&[vec![0.0], vec![2.0]]),
            0.5 * 2f64.sqrt(),
            epsilon = 1e-15
        );
        assert_eq!(mean_estimate(&[vec![0.0], vec![2.0]]), vec![1.0]);
        let a = [vec![0.0, 1.0], vec![3.0, -1.0], vec![1.0, 1.0]];
        let scaled: Vec<Vec<f64>> = a
            .iter()
            .map(|v| v.iter().map(|x| 2.5 * x).collect())
            .collect();
        assert_abs_diff_eq!(
            consensus_error(&scaled),
            2.5 * consensus_error(&a),
            epsilon = 1e-14
        );
    }

    fn random_graph() -> impl Strategy<Value = AdjacencyMatrix> {
        (2usize..12).prop_flat_map(|m| {
            proptest::collection::vec(any::<bool>(), m * (m - 1) / 2).prop_map(move |bits| {
                let mut a = AdjacencyMatrix::identity(m);
                let mut k = 0;
                for i in 0..m {
                    for j in (i + 1)..m {
                        a.set(i, j, bits[k]);
                        k += 1;
                    }
                }
                a
            })
        })
    }

    proptest! {
        #[test]
        fn metropolis_is_doubly_stochastic(a in random_graph()) {
            let w = metropolis_weights(&a).unwrap();
            let m = a.len();
            for i in 0..m {
                let row: f64 = (0..m).map(|j| w.get(i, j)).sum();
                prop_assert!((row - 1.0).abs() <= 1e-12);
                for j in 0..m {
                    prop_assert!(w.get(i, j) >= 0.0);
                    prop_assert_eq!(w.get(i, j), w.get(j, i));
                    if !a.get(i, j) {
                        prop_assert_eq!(w.get(i, j), 0.0);
                    }
                }
            }
        }

        #[test]
        fn gossip_keeps_mean_and_contracts(
            a in random_graph(),
            seed in proptest::collection::vec(-5.0..5.0f64, 36),
        ) {
            let m = a.len();
            let est: Vec<Vec<f64>> = (0..m).map(|i| seed[3 * i..3 * i + 3].to_vec()).collect();
            let w = metropolis_weights(&a).unwrap();
            let mixed = mix(&est, &w).unwrap();
            let (before, after) = (mean_estimate(&est), mean_estimate(&mixed));
            for (x, y) in before.iter().zip(&after) {
                prop_assert!((x - y).abs() <= 1e-10);
            }
            prop_assert!(consensus_error(&mixed) <= consensus_error(&est) + 1e-12);
        }
    }
}
