//! Node positions and the mean-gain channel models.
//!
//! All gains are in dB. Ground-to-ground links follow a log-distance model
//! with optional obstacle attenuation; UAV-to-ground links mix a LoS and an
//! NLoS log-distance model with the elevation-dependent s-model.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance (meters) used by the obstacle orientation tests.
pub const SEGMENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn horizontal(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn at_altitude(self, z: f64) -> Position3 {
        Position3::new(self.x, self.y, z)
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn midpoint(&self, other: &Point2) -> Point2 {
        Point2::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

/// Euclidean 3-D distance.
pub fn distance(p: &Position3, q: &Position3) -> f64 {
    let (dx, dy, dz) = (p.x - q.x, p.y - q.y, p.z - q.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Axis-aligned rectangle the UAV and all ground nodes must stay in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Arena {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::Geometry(format!(
                "degenerate arena [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    pub fn contains(&self, p: Point2) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.y_min..=self.y_max).contains(&p.y)
    }

    pub fn clamp(&self, p: Point2) -> Point2 {
        Point2::new(
            p.x.clamp(self.x_min, self.x_max),
            p.y.clamp(self.y_min, self.y_max),
        )
    }
}

/// A wall, modeled as a 2-D segment, that attenuates every ground link
/// crossing it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSegment {
    pub a: Point2,
    pub b: Point2,
    pub attenuation_db: f64,
}

impl ObstacleSegment {
    pub fn new(a: Point2, b: Point2, attenuation_db: f64) -> Result<Self> {
        if a.distance(&b) <= SEGMENT_EPS {
            return Err(Error::Geometry("obstacle endpoints coincide".into()));
        }
        if !(attenuation_db.is_finite() && attenuation_db > 0.0) {
            return Err(Error::Geometry(format!(
                "obstacle attenuation must be finite and positive, got {attenuation_db}"
            )));
        }
        Ok(Self {
            a,
            b,
            attenuation_db,
        })
    }

    /// Whether the segment `p`-`q` crosses this obstacle. Touching an
    /// endpoint or running collinearly along the wall counts as crossing.
    pub fn blocks(&self, p: Point2, q: Point2) -> bool {
        segments_intersect(p, q, self.a, self.b)
    }
}

fn orientation(a: Point2, b: Point2, c: Point2) -> i8 {
    let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    if cross > SEGMENT_EPS {
        1
    } else if cross < -SEGMENT_EPS {
        -1
    } else {
        0
    }
}

fn on_segment(a: Point2, b: Point2, c: Point2) -> bool {
    c.x >= a.x.min(b.x) - SEGMENT_EPS
        && c.x <= a.x.max(b.x) + SEGMENT_EPS
        && c.y >= a.y.min(b.y) - SEGMENT_EPS
        && c.y <= a.y.max(b.y) + SEGMENT_EPS
}

pub(crate) fn segments_intersect(p: Point2, q: Point2, a: Point2, b: Point2) -> bool {
    let o1 = orientation(p, q, a);
    let o2 = orientation(p, q, b);
    let o3 = orientation(a, b, p);
    let o4 = orientation(a, b, q);
    if o1 != o2 && o3 != o4 {
        return true;
    }
    (o1 == 0 && on_segment(p, q, a))
        || (o2 == 0 && on_segment(p, q, b))
        || (o3 == 0 && on_segment(a, b, p))
        || (o4 == 0 && on_segment(a, b, q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    ground: Vec<Position3>,
    obstacles: Vec<ObstacleSegment>,
    arena: Arena,
}

impl Deployment {
    pub fn new(
        ground: Vec<Position3>,
        obstacles: Vec<ObstacleSegment>,
        arena: Arena,
    ) -> Result<Self> {
        if ground.is_empty() {
            return Err(Error::Geometry("deployment has no ground nodes".into()));
        }
        for (i, p) in ground.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::Geometry(format!("node {i} has non-finite position")));
            }
            if !arena.contains(p.horizontal()) {
                return Err(Error::Geometry(format!(
                    "node {i} at ({}, {}) lies outside the arena",
                    p.x, p.y
                )));
            }
        }
        Ok(Self {
            ground,
            obstacles,
            arena,
        })
    }

    pub fn len(&self) -> usize {
        self.ground.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ground.is_empty()
    }

    pub fn ground(&self) -> &[Position3] {
        &self.ground
    }

    pub fn obstacles(&self) -> &[ObstacleSegment] {
        &self.obstacles
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    pub fn horizontal_positions(&self) -> Vec<Point2> {
        self.ground.iter().map(Position3::horizontal).collect()
    }

    /// Total obstacle attenuation on the ground link `i`-`j`.
    pub fn obstacle_loss_db(&self, i: usize, j: usize) -> f64 {
        let (p, q) = (self.ground[i].horizontal(), self.ground[j].horizontal());
        self.obstacles
            .iter()
            .filter(|o| o.blocks(p, q))
            .map(|o| o.attenuation_db)
            .sum()
    }

    /// Mean gain of the ground link `i`-`j`: log-distance path loss minus
    /// every obstacle the link crosses.
    pub fn expected_ground_gain(
        &self,
        i: usize,
        j: usize,
        gp: &GroundChannelParams,
    ) -> Result<f64> {
        let d = distance(&self.ground[i], &self.ground[j]);
        if d <= 0.0 {
            return Err(Error::CoincidentNodes(i, j));
        }
        Ok(gp.beta_db - gp.alpha * 10.0 * d.log10() - self.obstacle_loss_db(i, j))
    }

    /// Returns a copy with every position and obstacle shifted horizontally.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let shift = |p: Point2| Point2::new(p.x + dx, p.y + dy);
        Self {
            ground: self
                .ground
                .iter()
                .map(|p| Position3::new(p.x + dx, p.y + dy, p.z))
                .collect(),
            obstacles: self
                .obstacles
                .iter()
                .map(|o| ObstacleSegment {
                    a: shift(o.a),
                    b: shift(o.b),
                    attenuation_db: o.attenuation_db,
                })
                .collect(),
            arena: Arena {
                x_min: self.arena.x_min + dx,
                x_max: self.arena.x_max + dx,
                y_min: self.arena.y_min + dy,
                y_max: self.arena.y_max + dy,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundChannelParams {
    /// Path-loss exponent.
    pub alpha: f64,
    /// Gain at 1 m (dB).
    pub beta_db: f64,
    /// Shadowing standard deviation (dB).
    pub sigma_db: f64,
    /// On/off activation threshold (dB).
    pub threshold_db: f64,
}

impl Default for GroundChannelParams {
    fn default() -> Self {
        Self {
            alpha: 3.0,
            beta_db: -30.0,
            sigma_db: 1.0,
            threshold_db: -60.0,
        }
    }
}

impl GroundChannelParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("ground.alpha", self.alpha)?;
        check_positive("ground.sigma_db", self.sigma_db)?;
        check_finite("ground.beta_db", self.beta_db)?;
        check_finite("ground.threshold_db", self.threshold_db)
    }
}

/// One log-distance regime of the air-to-ground channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    pub alpha: f64,
    pub beta_db: f64,
    pub sigma_db: f64,
}

impl PathLoss {
    pub fn mean_gain(&self, d: f64) -> f64 {
        self.beta_db - self.alpha * 10.0 * d.log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AirChannelParams {
    pub los: PathLoss,
    pub nlos: PathLoss,
    /// s-model slope (per degree).
    pub los_a: f64,
    /// s-model offset.
    pub los_b: f64,
}

impl Default for AirChannelParams {
    fn default() -> Self {
        Self {
            los: PathLoss {
                alpha: 2.5,
                beta_db: -30.0,
                sigma_db: 1.0,
            },
            nlos: PathLoss {
                alpha: 3.0,
                beta_db: -30.0,
                sigma_db: 1.0,
            },
            los_a: 0.5,
            los_b: 5.0,
        }
    }
}

impl AirChannelParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("air.los.alpha", self.los.alpha)?;
        check_positive("air.nlos.alpha", self.nlos.alpha)?;
        check_positive("air.los.sigma_db", self.los.sigma_db)?;
        check_positive("air.nlos.sigma_db", self.nlos.sigma_db)?;
        check_finite("air.los.beta_db", self.los.beta_db)?;
        check_finite("air.nlos.beta_db", self.nlos.beta_db)?;
        check_finite("air.los_a", self.los_a)?;
        check_finite("air.los_b", self.los_b)
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite and > 0, got {v}"),
        })
    }
}

fn check_finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite, got {v}"),
        })
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Probability that a link with the given mean gain clears the threshold
/// under Gaussian shadowing.
pub fn ground_link_probability(mean_gain_db: f64, gp: &GroundChannelParams) -> f64 {
    1.0 - normal_cdf((gp.threshold_db - mean_gain_db) / gp.sigma_db)
}

/// Elevation angle in degrees of the UAV as seen from a ground node.
pub fn elevation_angle_deg(p_uav: &Position3, p_ground: &Position3) -> Result<f64> {
    let dz = p_uav.z - p_ground.z;
    if dz <= 0.0 {
        return Err(Error::UavBelowUser {
            uav_z: p_uav.z,
            ground_z: p_ground.z,
        });
    }
    let horizontal = (p_uav.x - p_ground.x).hypot(p_uav.y - p_ground.y);
    Ok(dz.atan2(horizontal).to_degrees())
}

/// s-model line-of-sight probability.
pub fn los_probability(theta_deg: f64, ap: &AirChannelParams) -> f64 {
    1.0 / (1.0 + (-ap.los_a * theta_deg + ap.los_b).exp())
}

/// Air-to-ground activation probability for a UAV at horizontal offset
/// `horizontal` and height `dz` above the user, using `cdf` in place of the
/// Gaussian CDF (the trajectory solver swaps in a smooth surrogate).
pub fn air_link_probability_with<F: Fn(f64) -> f64>(
    cdf: F,
    horizontal: f64,
    dz: f64,
    ap: &AirChannelParams,
    threshold_db: f64,
) -> f64 {
    let d = horizontal.hypot(dz);
    let theta = dz.atan2(horizontal).to_degrees();
    let rho = los_probability(theta, ap);
    let off_los = cdf((threshold_db - ap.los.mean_gain(d)) / ap.los.sigma_db);
    let off_nlos = cdf((threshold_db - ap.nlos.mean_gain(d)) / ap.nlos.sigma_db);
    1.0 - (1.0 - rho) * off_nlos - rho * off_los
}

/// Probability that ground node `i` can reach the UAV at `p_uav`.
/// Obstacles do not affect air-to-ground links.
pub fn uav_link_probability(
    p_uav: &Position3,
    i: usize,
    dep: &Deployment,
    ap: &AirChannelParams,
    threshold_db: f64,
) -> f64 {
    let g = &dep.ground[i];
    let horizontal = (p_uav.x - g.x).hypot(p_uav.y - g.y);
    air_link_probability_with(normal_cdf, horizontal, p_uav.z - g.z, ap, threshold_db)
}
