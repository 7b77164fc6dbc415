use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::mlp::MlpConfig;
use crate::{Error, Result};

/// Variance and second-moment bounds on a stochastic gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleBounds {
    pub sigma_sq: f64,
    pub g_sq: f64,
}

impl OracleBounds {
    pub fn new(sigma_sq: f64, g_sq: f64) -> Result<Self> {
        if !(sigma_sq >= 0.0 && g_sq >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "oracle bounds",
                reason: format!("must be nonnegative, got ({sigma_sq}, {g_sq})"),
            });
        }
        Ok(Self { sigma_sq, g_sq })
    }
}

/// Local objective of one node: returns (an unbiased estimate of) its gradient.
pub trait GradientOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn loss(&self, params: &[f64]) -> Result<f64>;

    fn gradient(&self, params: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;

    fn bounds(&self) -> Option<OracleBounds> {
        None
    }
}

impl<T: GradientOracle + ?Sized> GradientOracle for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn loss(&self, params: &[f64]) -> Result<f64> {
        (**self).loss(params)
    }

    fn gradient(&self, params: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        (**self).gradient(params, rng)
    }

    fn bounds(&self) -> Option<OracleBounds> {
        (**self).bounds()
    }
}

/// Cross-entropy of the perceptron over a node's local shard.
#[derive(Debug, Clone)]
pub struct MlpOracle {
    model: MlpConfig,
    x: Array2<f64>,
    labels: Vec<u8>,
    minibatch: Option<usize>,
}

impl MlpOracle {
    /// `minibatch = None` gives the deterministic full-shard gradient.
    pub fn new(
        model: MlpConfig,
        x: Array2<f64>,
        labels: Vec<u8>,
        minibatch: Option<usize>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyShard);
        }
        if x.dim() != (labels.len(), model.input_dim) {
            return Err(Error::shape(
                format!("({}, {})", labels.len(), model.input_dim),
                format!("{:?}", x.dim()),
            ));
        }
        if minibatch == Some(0) {
            return Err(Error::config("learning.minibatch", "must be >= 1"));
        }
        Ok(Self {
            model,
            x,
            labels,
            minibatch,
        })
    }

    pub fn model(&self) -> &MlpConfig {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl GradientOracle for MlpOracle {
    fn dim(&self) -> usize {
        self.model.num_params()
    }

    fn loss(&self, params: &[f64]) -> Result<f64> {
        self.model.loss(params, self.x.view(), &self.labels)
    }

    fn gradient(&self, params: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        match self.minibatch {
            Some(b) if b < self.labels.len() => {
                let mut idx = sample(rng, self.labels.len(), b).into_vec();
                idx.sort_unstable();
                let x = self.x.select(Axis(0), &idx);
                let y: Vec<u8> = idx.iter().map(|&k| self.labels[k]).collect();
                Ok(self.model.loss_and_gradient(params, x.view(), &y)?.1)
            }
            _ => Ok(self
                .model
                .loss_and_gradient(params, self.x.view(), &self.labels)?
                .1),
        }
    }
}

/// `f(θ) = ½‖θ − c‖²`, optionally with additive `N(0, σ²)` gradient noise
/// per coordinate.
#[derive(Debug, Clone)]
pub struct QuadraticOracle {
    center: Vec<f64>,
    noise: Option<Normal<f64>>,
}

impl QuadraticOracle {
    pub fn new(center: Vec<f64>, noise_std: f64) -> Result<Self> {
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::config(
                "learning.noise_std",
                "must be finite and >= 0",
            ));
        }
        let noise = (noise_std > 0.0).then(|| Normal::new(0.0, noise_std).expect("validated"));
        Ok(Self { center, noise })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// One oracle per center.
    pub fn family(centers: Vec<Vec<f64>>, noise_std: f64) -> Result<Vec<Self>> {
        centers
            .into_iter()
            .map(|c| Self::new(c, noise_std))
            .collect()
    }
}

impl GradientOracle for QuadraticOracle {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn loss(&self, params: &[f64]) -> Result<f64> {
        if params.len() != self.center.len() {
            return Err(Error::shape(self.center.len(), params.len()));
        }
        Ok(0.5
            * params
                .iter()
                .zip(&self.center)
                .map(|(p, c)| (p - c).powi(2))
                .sum::<f64>())
    }

    fn gradient(&self, params: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        if params.len() != self.center.len() {
            return Err(Error::shape(self.center.len(), params.len()));
        }
        let mut g: Vec<f64> = params
            .iter()
            .zip(&self.center)
            .map(|(p, c)| p - c)
            .collect();
        if let Some(noise) = &self.noise {
            for v in &mut g {
                *v += noise.sample(rng);
            }
        }
        Ok(g)
    }

    /// Noise variance is `d σ²`; the magnitude bound is left unbounded
    /// since the deterministic part grows with `‖θ − c‖`.
    fn bounds(&self) -> Option<OracleBounds> {
        let var = self.noise.map_or(0.0, |n| n.std_dev().powi(2)) * self.center.len() as f64;
        Some(OracleBounds {
            sigma_sq: var,
            g_sq: f64::INFINITY,
        })
    }
}
