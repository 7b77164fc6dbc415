//! Per-round link sampling and the matching expectations.
//!
//! Ground links are independent Bernoulli draws per unordered pair. The UAV
//! draws one on/off state per ground node and acts as a one-hop relay, so
//! the relay adjacency is the outer product of that vector with itself.

use std::io::Write;

use ndarray::Array2;
use rand::Rng;

use crate::geometry::{
    ground_link_probability, uav_link_probability, AirChannelParams, Deployment,
    GroundChannelParams, Position3,
};
use crate::{Error, Result};

/// Symmetric 0/1 matrix over the ground nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix(Array2<u8>);

impl AdjacencyMatrix {
    pub fn zeros(m: usize) -> Self {
        Self(Array2::zeros((m, m)))
    }

    pub fn identity(m: usize) -> Self {
        let mut a = Self::zeros(m);
        for i in 0..m {
            a.0[(i, i)] = 1;
        }
        a
    }

    pub fn ones(m: usize) -> Self {
        Self(Array2::ones((m, m)))
    }

    /// Builds from a square 0/1 matrix; rejects non-binary or non-square input.
    pub fn from_array(a: Array2<u8>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::shape("square matrix", format!("{:?}", a.dim())));
        }
        if a.iter().any(|&v| v > 1) {
            return Err(Error::InvalidParameter {
                name: "adjacency",
                reason: "entries must be 0 or 1".into(),
            });
        }
        Ok(Self(a))
    }

    /// Undirected graph with unit diagonal from an edge list.
    pub fn from_edges(m: usize, edges: &[(usize, usize)]) -> Self {
        let mut a = Self::identity(m);
        for &(i, j) in edges {
            a.set(i, j, true);
        }
        a
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.0[(i, j)] != 0
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        self.0[(i, j)] = on as u8;
        self.0[(j, i)] = on as u8;
    }

    pub fn as_array(&self) -> &Array2<u8> {
        &self.0
    }

    pub fn check_symmetric(&self) -> Result<()> {
        let m = self.len();
        for i in 0..m {
            for j in (i + 1)..m {
                if self.0[(i, j)] != self.0[(j, i)] {
                    return Err(Error::NotSymmetric(i, j));
                }
            }
        }
        Ok(())
    }

    /// Number of active unordered off-diagonal pairs.
    pub fn edge_count(&self) -> usize {
        let m = self.len();
        (0..m)
            .map(|i| ((i + 1)..m).filter(|&j| self.get(i, j)).count())
            .sum()
    }

    /// Neighbor count excluding self.
    pub fn degree(&self, i: usize) -> usize {
        (0..self.len())
            .filter(|&j| j != i && self.get(i, j))
            .count()
    }

    pub fn is_connected(&self) -> bool {
        let m = self.len();
        if m == 0 {
            return true;
        }
        let mut seen = vec![false; m];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..m {
                if !seen[j] && self.get(i, j) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Symmetric matrix of link activation probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkProbabilityMatrix(Array2<f64>);

impl LinkProbabilityMatrix {
    pub fn from_array(a: Array2<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::shape("square matrix", format!("{:?}", a.dim())));
        }
        if a.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter {
                name: "link probabilities",
                reason: "entries must lie in [0, 1]".into(),
            });
        }
        Ok(Self(a))
    }

    pub fn filled(m: usize, p: f64) -> Self {
        Self(Array2::from_elem((m, m), p))
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }
}

/// Binary UAV-to-ground link state, one entry per ground node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UavLinkVector(Vec<bool>);

impl UavLinkVector {
    pub fn new(links: Vec<bool>) -> Self {
        Self(links)
    }

    pub fn none(m: usize) -> Self {
        Self(vec![false; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

/// Expected ground adjacency. Time-invariant because ground nodes are static.
pub fn ground_probability_matrix(
    dep: &Deployment,
    gp: &GroundChannelParams,
) -> Result<LinkProbabilityMatrix> {
    let m = dep.len();
    let mut p = Array2::<f64>::eye(m);
    for i in 0..m {
        for j in (i + 1)..m {
            let q = ground_link_probability(dep.expected_ground_gain(i, j, gp)?, gp);
            p[(i, j)] = q;
            p[(j, i)] = q;
        }
    }
    Ok(LinkProbabilityMatrix(p))
}

pub fn sample_ground_adjacency<R: Rng + ?Sized>(
    probs: &LinkProbabilityMatrix,
    rng: &mut R,
) -> AdjacencyMatrix {
    let m = probs.len();
    let mut a = AdjacencyMatrix::identity(m);
    for i in 0..m {
        for j in (i + 1)..m {
            if rng.random::<f64>() < probs.get(i, j) {
                a.set(i, j, true);
            }
        }
    }
    a
}

pub fn uav_probability_vector(
    p_uav: &Position3,
    dep: &Deployment,
    ap: &AirChannelParams,
    threshold_db: f64,
) -> Vec<f64> {
    (0..dep.len())
        .map(|i| uav_link_probability(p_uav, i, dep, ap, threshold_db))
        .collect()
}

pub fn sample_uav_links<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> UavLinkVector {
    UavLinkVector(probs.iter().map(|&p| rng.random::<f64>() < p).collect())
}

/// Outer product `a^T a`: `(i, j)` is active iff both ends reach the UAV.
pub fn relay_adjacency(a: &UavLinkVector) -> AdjacencyMatrix {
    let m = a.len();
    let mut out = AdjacencyMatrix::zeros(m);
    for i in 0..m {
        for j in i..m {
            if a.get(i) && a.get(j) {
                out.set(i, j, true);
            }
        }
    }
    out
}

/// `E[a^T a]`: `p_i p_j` off the diagonal and `p_i` on it (`a_i^2 = a_i`).
pub fn expected_relay_matrix(probs: &[f64]) -> LinkProbabilityMatrix {
    let m = probs.len();
    let mut out = Array2::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            out[(i, j)] = if i == j {
                probs[i]
            } else {
                probs[i] * probs[j]
            };
        }
    }
    LinkProbabilityMatrix(out)
}

/// `J - (J - A_uav) ⊙ (J - A_gr)`, i.e. entrywise OR.
pub fn aggregate(a_gr: &AdjacencyMatrix, a_uav: &AdjacencyMatrix) -> Result<AdjacencyMatrix> {
    if a_gr.len() != a_uav.len() {
        return Err(Error::shape(
            format!("{0}x{0}", a_gr.len()),
            format!("{0}x{0}", a_uav.len()),
        ));
    }
    Ok(AdjacencyMatrix(
        ndarray::Zip::from(&a_gr.0)
            .and(&a_uav.0)
            .map_collect(|&g, &u| g | u),
    ))
}

/// Expectation of [`aggregate`] under independent ground and relay links.
pub fn expected_aggregate(
    ground: &LinkProbabilityMatrix,
    relay: &LinkProbabilityMatrix,
) -> Result<LinkProbabilityMatrix> {
    if ground.len() != relay.len() {
        return Err(Error::shape(
            format!("{0}x{0}", ground.len()),
            format!("{0}x{0}", relay.len()),
        ));
    }
    Ok(LinkProbabilityMatrix(
        ndarray::Zip::from(&ground.0)
            .and(&relay.0)
            .map_collect(|&g, &r| 1.0 - (1.0 - g) * (1.0 - r)),
    ))
}

/// `N(i) = {j : A_ij = 1}`, sorted ascending.
pub fn neighborhoods(a: &AdjacencyMatrix) -> Vec<Vec<usize>> {
    let m = a.len();
    (0..m)
        .map(|i| (0..m).filter(|&j| a.get(i, j)).collect())
        .collect()
}

/// Debug dump of one round as `round,i,j,source` rows (i < j). Pairs active
/// on both layers appear once per source.
pub fn write_edge_list<W: Write>(
    out: &mut csv::Writer<W>,
    round: usize,
    a_gr: &AdjacencyMatrix,
    a_uav: &AdjacencyMatrix,
) -> Result<()> {
    let m = a_gr.len();
    for i in 0..m {
        for j in (i + 1)..m {
            if a_gr.get(i, j) {
                out.write_record([
                    round.to_string(),
                    i.to_string(),
                    j.to_string(),
                    "ground".into(),
                ])?;
            }
            if a_uav.get(i, j) {
                out.write_record([
                    round.to_string(),
                    i.to_string(),
                    j.to_string(),
                    "relay".into(),
                ])?;
            }
        }
    }
    Ok(())
}
