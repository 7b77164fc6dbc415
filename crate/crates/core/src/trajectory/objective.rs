use ndarray::Array2;

use crate::geometry::{
    air_link_probability_with, los_probability, normal_cdf, AirChannelParams, Deployment, Point2,
};
use crate::{Error, Result};

/// Logistic fit coefficient for the standard normal CDF.
pub const SIGMOID_SCALE: f64 = 1.702;

/// Smooth stand-in for the standard normal CDF, `1 / (1 + exp(-1.702 x))`.
/// Its largest deviation from the exact CDF is just under 0.0095.
pub fn sigmoid_cdf(x: f64) -> f64 {
    1.0 / (1.0 + (-SIGMOID_SCALE * x).exp())
}

fn sigmoid_cdf_derivative(x: f64) -> f64 {
    let s = sigmoid_cdf(x);
    SIGMOID_SCALE * s * (1.0 - s)
}

/// `p ↦ Σ_ij W_ij E[A_uav(p)]_ij` for a UAV hovering at `p`, where the
/// expected relay matrix is `p_i p_j` off the diagonal and `p_i` on it.
///
/// [`value`](Self::value) and [`gradient`](Self::gradient) use the smooth
/// CDF surrogate; [`value_exact`](Self::value_exact) uses the Gaussian CDF.
#[derive(Debug, Clone)]
pub struct WaypointObjective<'a> {
    deployment: &'a Deployment,
    weights: Array2<f64>,
    air: AirChannelParams,
    threshold_db: f64,
    altitude: f64,
}

impl<'a> WaypointObjective<'a> {
    pub fn new(
        deployment: &'a Deployment,
        weights: Array2<f64>,
        air: AirChannelParams,
        threshold_db: f64,
        altitude: f64,
    ) -> Result<Self> {
        let m = deployment.len();
        if weights.dim() != (m, m) {
            return Err(Error::shape(
                format!("{m}x{m}"),
                format!("{:?}", weights.dim()),
            ));
        }
        if let Some(g) = deployment.ground().iter().find(|g| g.z >= altitude) {
            return Err(Error::UavBelowUser {
                uav_z: altitude,
                ground_z: g.z,
            });
        }
        Ok(Self {
            deployment,
            weights,
            air,
            threshold_db,
            altitude,
        })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn deployment(&self) -> &Deployment {
        self.deployment
    }

    fn link_probabilities<F: Fn(f64) -> f64 + Copy>(&self, p: Point2, cdf: F) -> Vec<f64> {
        self.deployment
            .ground()
            .iter()
            .map(|g| {
                let h = (p.x - g.x).hypot(p.y - g.y);
                air_link_probability_with(cdf, h, self.altitude - g.z, &self.air, self.threshold_db)
            })
            .collect()
    }

    fn combine(&self, probs: &[f64]) -> f64 {
        let m = probs.len();
        let mut total = 0.0;
        for i in 0..m {
            total += self.weights[(i, i)] * probs[i];
            for j in 0..m {
                if j != i {
                    total += self.weights[(i, j)] * probs[i] * probs[j];
                }
            }
        }
        total
    }

    pub fn value(&self, p: Point2) -> f64 {
        self.combine(&self.link_probabilities(p, sigmoid_cdf))
    }

    pub fn value_exact(&self, p: Point2) -> f64 {
        self.combine(&self.link_probabilities(p, normal_cdf))
    }

    /// Analytic gradient of [`value`](Self::value) with respect to `(x, y)`.
    pub fn gradient(&self, p: Point2) -> [f64; 2] {
        let ground = self.deployment.ground();
        let m = ground.len();
        let mut probs = Vec::with_capacity(m);
        let mut grads = Vec::with_capacity(m);
        for g in ground {
            let (dx, dy) = (p.x - g.x, p.y - g.y);
            let (prob, d_dx, d_dy) = self.link_probability_gradient(dx, dy, self.altitude - g.z);
            probs.push(prob);
            grads.push([d_dx, d_dy]);
        }
        let mut out = [0.0; 2];
        for i in 0..m {
            let mut coeff = self.weights[(i, i)];
            for j in 0..m {
                if j != i {
                    coeff += (self.weights[(i, j)] + self.weights[(j, i)]) * probs[j];
                }
            }
            out[0] += coeff * grads[i][0];
            out[1] += coeff * grads[i][1];
        }
        out
    }

    /// Surrogate link probability and its partials for a UAV at horizontal
    /// offset `(dx, dy)` and height `dz` above the user.
    fn link_probability_gradient(&self, dx: f64, dy: f64, dz: f64) -> (f64, f64, f64) {
        let air = &self.air;
        let r = dx.hypot(dy);
        let d = r.hypot(dz);
        let theta = dz.atan2(r).to_degrees();
        let rho = los_probability(theta, air);

        let z_los = (self.threshold_db - air.los.mean_gain(d)) / air.los.sigma_db;
        let z_nlos = (self.threshold_db - air.nlos.mean_gain(d)) / air.nlos.sigma_db;
        let (s_los, s_nlos) = (sigmoid_cdf(z_los), sigmoid_cdf(z_nlos));
        let prob = 1.0 - (1.0 - rho) * s_nlos - rho * s_los;

        // d z / d d for a log-distance model: 10 α / (σ d ln 10)
        let ln10 = std::f64::consts::LN_10;
        let dz_los = 10.0 * air.los.alpha / (air.los.sigma_db * d * ln10);
        let dz_nlos = 10.0 * air.nlos.alpha / (air.nlos.sigma_db * d * ln10);
        let dprob_dd = -(1.0 - rho) * sigmoid_cdf_derivative(z_nlos) * dz_nlos
            - rho * sigmoid_cdf_derivative(z_los) * dz_los;

        // distance term: ∂d/∂x = dx / d
        let mut gx = dprob_dd * dx / d;
        let mut gy = dprob_dd * dy / d;

        // elevation term; θ has a cone tip directly overhead, use 0 there
        if r > 1e-12 {
            let dprob_drho = s_nlos - s_los;
            let drho_dtheta = air.los_a * rho * (1.0 - rho);
            let dtheta_dr = -(180.0 / std::f64::consts::PI) * dz / (d * d);
            let dprob_dr = dprob_drho * drho_dtheta * dtheta_dr;
            gx += dprob_dr * dx / r;
            gy += dprob_dr * dy / r;
        }
        (prob, gx, gy)
    }
}
