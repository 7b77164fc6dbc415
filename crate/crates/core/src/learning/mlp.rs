use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// One-hidden-layer perceptron with a softmax cross-entropy head.
///
/// Parameters live in one flat vector laid out as `W1` (hidden × input,
/// row-major), `b1`, `W2` (output × hidden), `b2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            input_dim: 784,
            hidden_dim: 25,
            output_dim: 10,
            activation: Activation::Relu,
        }
    }
}

struct Layers<'a> {
    w1: ArrayView2<'a, f64>,
    b1: ArrayView1<'a, f64>,
    w2: ArrayView2<'a, f64>,
    b2: ArrayView1<'a, f64>,
}

impl MlpConfig {
    pub fn num_params(&self) -> usize {
        let (i, h, o) = (self.input_dim, self.hidden_dim, self.output_dim);
        h * i + h + o * h + o
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("model.input_dim", self.input_dim),
            ("model.hidden_dim", self.hidden_dim),
            ("model.output_dim", self.output_dim),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be >= 1"));
            }
        }
        Ok(())
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let (i, h, o) = (self.input_dim, self.hidden_dim, self.output_dim);
        let mut params = vec![0.0; self.num_params()];
        let limit1 = (6.0 / (i + h) as f64).sqrt();
        for w in &mut params[..h * i] {
            *w = rng.random_range(-limit1..limit1);
        }
        let limit2 = (6.0 / (h + o) as f64).sqrt();
        let off = h * i + h;
        for w in &mut params[off..off + o * h] {
            *w = rng.random_range(-limit2..limit2);
        }
        params
    }

    fn layers<'a>(&self, params: &'a [f64]) -> Result<Layers<'a>> {
        if params.len() != self.num_params() {
            return Err(Error::shape(self.num_params(), params.len()));
        }
        let (i, h, o) = (self.input_dim, self.hidden_dim, self.output_dim);
        let (w1, rest) = params.split_at(h * i);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(o * h);
        Ok(Layers {
            w1: ArrayView2::from_shape((h, i), w1).expect("sized above"),
            b1: ArrayView1::from(b1),
            w2: ArrayView2::from_shape((o, h), w2).expect("sized above"),
            b2: ArrayView1::from(b2),
        })
    }

    fn check_inputs(&self, x: &ArrayView2<'_, f64>, labels: &[u8]) -> Result<()> {
        if x.nrows() == 0 {
            return Err(Error::EmptyShard);
        }
        if x.ncols() != self.input_dim {
            return Err(Error::shape(self.input_dim, x.ncols()));
        }
        if labels.len() != x.nrows() {
            return Err(Error::shape(x.nrows(), labels.len()));
        }
        if let Some(&y) = labels.iter().find(|&&y| y as usize >= self.output_dim) {
            return Err(Error::InvalidParameter {
                name: "labels",
                reason: format!("label {y} outside 0..{}", self.output_dim),
            });
        }
        Ok(())
    }

    /// Hidden pre-activations, hidden outputs and class logits.
    fn forward(
        &self,
        l: &Layers<'_>,
        x: &ArrayView2<'_, f64>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let pre = x.dot(&l.w1.t()) + &l.b1;
        let act = self.activation;
        let hidden = pre.mapv(|v| act.apply(v));
        let logits = hidden.dot(&l.w2.t()) + &l.b2;
        (pre, hidden, logits)
    }

    pub fn logits(&self, params: &[f64], x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let l = self.layers(params)?;
        if x.ncols() != self.input_dim {
            return Err(Error::shape(self.input_dim, x.ncols()));
        }
        Ok(self.forward(&l, &x).2)
    }

    /// Mean softmax cross-entropy.
    pub fn loss(&self, params: &[f64], x: ArrayView2<'_, f64>, labels: &[u8]) -> Result<f64> {
        self.check_inputs(&x, labels)?;
        let logits = self.logits(params, x)?;
        let total: f64 = logits
            .outer_iter()
            .zip(labels)
            .map(|(z, &y)| log_sum_exp(z) - z[y as usize])
            .sum();
        Ok(total / labels.len() as f64)
    }

    /// Mean loss and its gradient in the flat parameter layout.
    pub fn loss_and_gradient(
        &self,
        params: &[f64],
        x: ArrayView2<'_, f64>,
        labels: &[u8],
    ) -> Result<(f64, Vec<f64>)> {
        self.check_inputs(&x, labels)?;
        let l = self.layers(params)?;
        let n = labels.len() as f64;
        let (pre, hidden, logits) = self.forward(&l, &x);

        let mut loss = 0.0;
        let mut delta = logits;
        for (mut row, &y) in delta.outer_iter_mut().zip(labels) {
            let lse = log_sum_exp(row.view());
            loss += lse - row[y as usize];
            row.mapv_inplace(|z| (z - lse).exp());
            row[y as usize] -= 1.0;
        }
        delta /= n;

        let g_w2 = delta.t().dot(&hidden);
        let g_b2 = delta.sum_axis(Axis(0));
        let mut back = delta.dot(&l.w2);
        let act = self.activation;
        ndarray::Zip::from(&mut back)
            .and(&pre)
            .and(&hidden)
            .for_each(|b, &p, &h| *b *= act.derivative(p, h));
        let g_w1 = back.t().dot(&x);
        let g_b1 = back.sum_axis(Axis(0));

        let mut grad = Vec::with_capacity(self.num_params());
        grad.extend(g_w1.iter());
        grad.extend(g_b1.iter());
        grad.extend(g_w2.iter());
        grad.extend(g_b2.iter());
        Ok((loss / n, grad))
    }

    /// Argmax class per row; ties go to the lowest index.
    pub fn predict(&self, params: &[f64], x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let logits = self.logits(params, x)?;
        Ok(logits.outer_iter().map(|z| argmax(z)).collect())
    }

    pub fn accuracy(&self, params: &[f64], x: ArrayView2<'_, f64>, labels: &[u8]) -> Result<f64> {
        self.check_inputs(&x, labels)?;
        // bounded memory on large test sets
        const CHUNK: usize = 2048;
        let mut correct = 0usize;
        for start in (0..labels.len()).step_by(CHUNK) {
            let end = (start + CHUNK).min(labels.len());
            let pred = self.predict(params, x.slice(s![start..end, ..]))?;
            correct += pred
                .iter()
                .zip(&labels[start..end])
                .filter(|(p, &y)| **p == y as usize)
                .count();
        }
        Ok(correct as f64 / labels.len() as f64)
    }
}

fn log_sum_exp(z: ArrayView1<'_, f64>) -> f64 {
    let max = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

fn argmax(z: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (k, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> MlpConfig {
        MlpConfig {
            input_dim: 6,
            hidden_dim: 4,
            output_dim: 3,
            activation: Activation::Tanh,
        }
    }

    fn toy_batch(rng: &mut ChaCha8Rng, n: usize, cfg: &MlpConfig) -> (Array2<f64>, Vec<u8>) {
        let x = Array2::from_shape_fn((n, cfg.input_dim), |_| rng.random_range(-1.0..1.0));
        let y = (0..n).map(|k| (k % cfg.output_dim) as u8).collect();
        (x, y)
    }

    #[test]
    fn default_dimension() {
        assert_eq!(MlpConfig::default().num_params(), 19885);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = MlpConfig::default();
        let a = cfg.init(&mut ChaCha8Rng::seed_from_u64(1));
        let b = cfg.init(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        let limit = (6.0f64 / (784.0 + 25.0)).sqrt();
        assert!(a[..784 * 25].iter().all(|w| w.abs() <= limit));
        assert!(a[784 * 25..784 * 25 + 25].iter().all(|&w| w == 0.0));
        assert!(a[19875..].iter().all(|&w| w == 0.0));
    }

    #[test]
    fn zero_network_bias_gradient() {
        let cfg = small();
        let params = vec![0.0; cfg.num_params()];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (x, y) = toy_batch(&mut rng, 6, &cfg);
        let (loss, g) = cfg.loss_and_gradient(&params, x.view(), &y).unwrap();
        assert_abs_diff_eq!(loss, 3f64.ln(), epsilon = 1e-12);
        // balanced labels: mean of (1/C - onehot) is zero per class
        let b2 = &g[cfg.num_params() - 3..];
        for &v in b2 {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
        let y_skew = vec![0u8; 6];
        let (_, g) = cfg.loss_and_gradient(&params, x.view(), &y_skew).unwrap();
        let b2 = &g[cfg.num_params() - 3..];
        assert_abs_diff_eq!(b2[0], 1.0 / 3.0 - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b2[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for act in [Activation::Relu, Activation::Tanh] {
            let cfg = MlpConfig {
                activation: act,
                ..small()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let params = cfg.init(&mut rng);
            let params: Vec<f64> = params
                .iter()
                .map(|p| p + rng.random_range(-0.1..0.1))
                .collect();
            let (x, y) = toy_batch(&mut rng, 7, &cfg);
            let (_, g) = cfg.loss_and_gradient(&params, x.view(), &y).unwrap();
            let h = 1e-6;
            for k in 0..cfg.num_params() {
                let mut p = params.clone();
                p[k] += h;
                let up = cfg.loss(&p, x.view(), &y).unwrap();
                p[k] -= 2.0 * h;
                let down = cfg.loss(&p, x.view(), &y).unwrap();
                let fd = (up - down) / (2.0 * h);
                assert!(
                    (fd - g[k]).abs() <= 1e-5 * fd.abs().max(1e-3),
                    "{act:?} {k}: {fd} vs {}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn duplicated_batch_same_gradient() {
        let cfg = small();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = cfg.init(&mut rng);
        let (x, y) = toy_batch(&mut rng, 5, &cfg);
        let x2 = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let y2: Vec<u8> = y.iter().chain(&y).copied().collect();
        let (l1, g1) = cfg.loss_and_gradient(&params, x.view(), &y).unwrap();
        let (l2, g2) = cfg.loss_and_gradient(&params, x2.view(), &y2).unwrap();
        assert_abs_diff_eq!(l1, l2, epsilon = 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_params_predict_class_zero() {
        let cfg = small();
        let params = vec![0.0; cfg.num_params()];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, y) = toy_batch(&mut rng, 9, &cfg);
        assert_eq!(cfg.predict(&params, x.view()).unwrap(), vec![0; 9]);
        assert_abs_diff_eq!(cfg.accuracy(&params, x.view(), &y).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = small();
        let params = vec![0.0; cfg.num_params()];
        let x = Array2::zeros((0, 6));
        assert!(matches!(
            cfg.loss(&params, x.view(), &[]),
            Err(Error::EmptyShard)
        ));
        let x = Array2::zeros((2, 5));
        assert!(cfg.loss(&params, x.view(), &[0, 1]).is_err());
        let x = Array2::zeros((2, 6));
        assert!(cfg.loss(&params, x.view(), &[0, 3]).is_err());
        assert!(cfg.loss(&params[1..], x.view(), &[0, 1]).is_err());
    }
}
