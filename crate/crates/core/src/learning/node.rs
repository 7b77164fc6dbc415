use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oracle::GradientOracle;
use crate::rng::{Purpose, Streams};
use crate::{Error, Result};

/// Step size `base · decay^t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrSchedule {
    pub base: f64,
    pub decay: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base: 0.1,
            decay: 0.995,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.base.is_finite() && self.base > 0.0) {
            return Err(Error::config("learning.lr_base", "must be finite and > 0"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::config("learning.lr_decay", "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn rate(&self, round: usize) -> f64 {
        self.base * self.decay.powi(round as i32)
    }
}

/// One device: its estimate, the snapshots needed to apply stale gradients
/// and its straggling behavior.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub params: Vec<f64>,
    history: VecDeque<Vec<f64>>,
    capacity: usize,
    staleness: usize,
    pub straggle_prob: f64,
    pub lr: LrSchedule,
}

impl NodeState {
    /// `staleness_cap` bounds how many rounds back a delayed gradient may
    /// reach; 0 disables snapshots.
    pub fn new(
        params: Vec<f64>,
        straggle_prob: f64,
        staleness_cap: usize,
        lr: LrSchedule,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&straggle_prob) {
            return Err(Error::config(
                "learning.straggle_prob",
                "must lie in [0, 1]",
            ));
        }
        lr.validate()?;
        Ok(Self {
            params,
            history: VecDeque::with_capacity(staleness_cap),
            capacity: staleness_cap,
            staleness: 0,
            straggle_prob,
            lr,
        })
    }

    /// Rounds since the last completed local update.
    pub fn staleness(&self) -> usize {
        self.staleness
    }

    pub fn history_capacity(&self) -> usize {
        self.capacity
    }

    /// Stragglers keep their estimate; everyone else takes one gradient step
    /// evaluated at the snapshot from `staleness` rounds ago.
    pub fn local_update<O: GradientOracle + ?Sized>(
        &mut self,
        round: usize,
        is_straggler: bool,
        oracle: &O,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let snapshot = self.params.clone();
        if is_straggler {
            self.staleness = (self.staleness + 1).min(self.capacity);
        } else {
            let eval_at = match self.staleness {
                0 => &self.params,
                tau => &self.history[self.history.len() - tau],
            };
            let g = oracle.gradient(eval_at, rng)?;
            if g.len() != self.params.len() {
                return Err(Error::shape(self.params.len(), g.len()));
            }
            let eta = self.lr.rate(round);
            for (p, gk) in self.params.iter_mut().zip(&g) {
                *p -= eta * gk;
            }
            self.staleness = 0;
        }
        if self.capacity > 0 {
            if self.history.len() == self.capacity {
                self.history.pop_front();
            }
            self.history.push_back(snapshot);
        }
        Ok(())
    }
}

/// Straggler flags for one round, one Bernoulli draw per node.
pub fn draw_stragglers(nodes: &[NodeState], streams: &Streams, round: usize) -> Vec<bool> {
    let mut rng = streams.stream(Purpose::Straggler, round as u64);
    nodes
        .iter()
        .map(|n| rng.random::<f64>() < n.straggle_prob)
        .collect()
}

/// Runs every node's local update for `round` in parallel. Each node draws
/// oracle randomness from its own `(round, node)` substream.
pub fn local_updates<O: GradientOracle>(
    nodes: &mut [NodeState],
    oracles: &[O],
    stragglers: &[bool],
    round: usize,
    streams: &Streams,
) -> Result<()> {
    if oracles.len() != nodes.len() || stragglers.len() != nodes.len() {
        return Err(Error::shape(
            nodes.len(),
            oracles.len().min(stragglers.len()),
        ));
    }
    nodes
        .par_iter_mut()
        .zip(oracles)
        .zip(stragglers)
        .enumerate()
        .try_for_each(|(i, ((node, oracle), &straggle))| {
            let mut rng = streams.stream(Purpose::Oracle, ((round as u64) << 20) | i as u64);
            node.local_update(round, straggle, oracle, &mut rng)
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::oracle::QuadraticOracle;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn lr_schedule() {
        let lr = LrSchedule::default();
        assert_eq!(lr.rate(0), 0.1);
        assert_abs_diff_eq!(lr.rate(2), 0.1 * 0.995 * 0.995, epsilon = 1e-15);
        assert!(LrSchedule {
            base: 0.0,
            decay: 0.9
        }
        .validate()
        .is_err());
        assert!(LrSchedule {
            base: 0.1,
            decay: 1.5
        }
        .validate()
        .is_err());
    }

    #[test]
    fn straggler_keeps_params() {
        let o = QuadraticOracle::new(vec![0.0], 0.0).unwrap();
        let mut node = NodeState::new(vec![1.0], 0.5, 3, LrSchedule::default()).unwrap();
        node.local_update(0, true, &o, &mut rng()).unwrap();
        assert_eq!(node.params, vec![1.0]);
        assert_eq!(node.staleness(), 1);
    }

    #[test]
    fn one_step_on_half_square() {
        let o = QuadraticOracle::new(vec![0.0], 0.0).unwrap();
        let mut node = NodeState::new(vec![1.0], 0.0, 0, LrSchedule::default()).unwrap();
        node.local_update(0, false, &o, &mut rng()).unwrap();
        assert_abs_diff_eq!(node.params[0], 0.9, epsilon = 1e-15);

        let c = vec![2.0, -1.0];
        let o = QuadraticOracle::new(c.clone(), 0.0).unwrap();
        let mut node = NodeState::new(c.clone(), 0.0, 0, LrSchedule::default()).unwrap();
        node.local_update(7, false, &o, &mut rng()).unwrap();
        assert_eq!(node.params, c);
    }

    #[test]
    fn staleness_is_capped_and_uses_snapshot() {
        let o = QuadraticOracle::new(vec![0.0], 0.0).unwrap();
        let lr = LrSchedule {
            base: 0.5,
            decay: 1.0,
        };
        let mut node = NodeState::new(vec![4.0], 0.0, 2, lr).unwrap();
        for t in 0..5 {
            node.local_update(t, true, &o, &mut rng()).unwrap();
            assert!(node.staleness() <= node.history_capacity());
        }
        assert_eq!(node.staleness(), 2);
        // gossip moved the estimate while the node was busy
        node.params = vec![2.0];
        node.local_update(5, false, &o, &mut rng()).unwrap();
        // gradient taken at the 2-rounds-old snapshot (4.0)
        assert_abs_diff_eq!(node.params[0], 2.0 - 0.5 * 4.0, epsilon = 1e-15);
        assert_eq!(node.staleness(), 0);
    }

    #[test]
    fn parallel_updates_match_sequential() {
        let streams = Streams::new(11);
        let oracles =
            QuadraticOracle::family(vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.0, 0.0]], 0.3)
                .unwrap();
        let mut a: Vec<NodeState> = (0..3)
            .map(|_| NodeState::new(vec![0.0, 0.0], 0.3, 1, LrSchedule::default()).unwrap())
            .collect();
        let mut b = a.clone();
        for t in 0..10 {
            let s = draw_stragglers(&a, &streams, t);
            local_updates(&mut a, &oracles, &s, t, &streams).unwrap();
            for (i, node) in b.iter_mut().enumerate() {
                let mut r = streams.stream(Purpose::Oracle, ((t as u64) << 20) | i as u64);
                node.local_update(t, s[i], &oracles[i], &mut r).unwrap();
            }
        }
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_straggle_prob() {
        assert!(NodeState::new(vec![0.0], 1.5, 0, LrSchedule::default()).is_err());
    }
}
