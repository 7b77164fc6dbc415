use ndarray::Array2;

use crate::connectivity::LinkProbabilityMatrix;
use crate::{Error, Result};

/// Exponentially averaged expected connectivity, `R <- γR + (1-γ)E[A]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityRateMatrix {
    rates: Array2<f64>,
    gamma: f64,
}

impl ActivityRateMatrix {
    /// `R = 0`.
    pub fn new(m: usize, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must lie in (0, 1), got {gamma}"),
            });
        }
        Ok(Self {
            rates: Array2::zeros((m, m)),
            gamma,
        })
    }

    pub fn from_rates(rates: Array2<f64>, gamma: f64) -> Result<Self> {
        let mut r = Self::new(rates.nrows(), gamma)?;
        if rates.nrows() != rates.ncols() {
            return Err(Error::shape("square matrix", format!("{:?}", rates.dim())));
        }
        if rates.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter {
                name: "activity rates",
                reason: "entries must lie in [0, 1]".into(),
            });
        }
        r.rates = rates;
        Ok(r)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rates(&self) -> &Array2<f64> {
        &self.rates
    }

    pub fn update(&mut self, expected: &LinkProbabilityMatrix) -> Result<()> {
        if expected.len() != self.rates.nrows() {
            return Err(Error::shape(
                format!("{0}x{0}", self.rates.nrows()),
                format!("{0}x{0}", expected.len()),
            ));
        }
        let g = self.gamma;
        ndarray::Zip::from(&mut self.rates)
            .and(expected.as_array())
            .for_each(|r, &e| *r = (g * *r + (1.0 - g) * e).clamp(0.0, 1.0));
        Ok(())
    }

    /// Objective weights `J - R`: starved links weigh the most.
    pub fn weights(&self) -> Array2<f64> {
        self.rates.mapv(|r| 1.0 - r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn first_step_from_zero() {
        let mut r = ActivityRateMatrix::new(3, 0.9).unwrap();
        r.update(&LinkProbabilityMatrix::filled(3, 1.0)).unwrap();
        for v in r.rates() {
            assert_abs_diff_eq!(*v, 0.1, epsilon = 1e-15);
        }
    }

    #[test]
    fn fixed_point() {
        let rates = Array2::from_shape_fn((3, 3), |(i, j)| 0.1 * (i + j) as f64);
        let mut r = ActivityRateMatrix::from_rates(rates.clone(), 0.7).unwrap();
        r.update(&LinkProbabilityMatrix::from_array(rates.clone()).unwrap())
            .unwrap();
        for (a, b) in r.rates().iter().zip(rates.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn geometric_series() {
        let e = 0.6;
        let mut r = ActivityRateMatrix::new(2, 0.9).unwrap();
        for t in 1..=40 {
            r.update(&LinkProbabilityMatrix::filled(2, e)).unwrap();
            let expected = (1.0 - 0.9f64.powi(t)) * e;
            assert_abs_diff_eq!(r.rates()[(0, 1)], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ActivityRateMatrix::new(2, 1.0).is_err());
        assert!(ActivityRateMatrix::new(2, 0.0).is_err());
        let mut r = ActivityRateMatrix::new(2, 0.5).unwrap();
        assert!(r.update(&LinkProbabilityMatrix::filled(3, 0.5)).is_err());
    }

    proptest! {
        #[test]
        fn stays_in_unit_interval_and_symmetric(
            gamma in 0.01..0.99f64,
            seq in proptest::collection::vec(proptest::collection::vec(0.0..=1.0f64, 6), 1..30),
        ) {
            let mut r = ActivityRateMatrix::new(3, gamma).unwrap();
            for vals in seq {
                // symmetric 3x3 from 6 upper-triangle values
                let mut e = Array2::zeros((3, 3));
                let mut k = 0;
                for i in 0..3 {
                    for j in i..3 {
                        e[(i, j)] = vals[k];
                        e[(j, i)] = vals[k];
                        k += 1;
                    }
                }
                r.update(&LinkProbabilityMatrix::from_array(e).unwrap()).unwrap();
                for i in 0..3 {
                    for j in 0..3 {
                        prop_assert!((0.0..=1.0).contains(&r.rates()[(i, j)]));
                        prop_assert_eq!(r.rates()[(i, j)], r.rates()[(j, i)]);
                    }
                }
            }
        }

        #[test]
        fn lower_rate_gets_larger_weight(a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
            prop_assume!(a != b);
            let r = ActivityRateMatrix::from_rates(ndarray::arr2(&[[a, b], [b, a]]), 0.5).unwrap();
            let w = r.weights();
            prop_assert_eq!(a < b, w[(0, 0)] > w[(0, 1)]);
        }
    }
}
