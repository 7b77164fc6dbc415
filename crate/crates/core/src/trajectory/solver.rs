use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::WaypointObjective;
use crate::geometry::{Arena, Point2};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub restarts: usize,
    pub iterations: usize,
    /// Length in meters of the first normalized ascent step.
    pub step_size: f64,
    pub step_decay: f64,
    /// Stop once an accepted step improves the objective by less than this
    /// fraction of its current value.
    pub convergence_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            iterations: 300,
            step_size: 1.0,
            step_decay: 0.98,
            convergence_tol: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if self.restarts == 0 {
            return bad("solver.restarts", "must be >= 1");
        }
        if self.iterations == 0 {
            return bad("solver.iterations", "must be >= 1");
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return bad("solver.step_size", "must be finite and > 0");
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return bad("solver.step_decay", "must lie in (0, 1]");
        }
        if !(self.convergence_tol >= 0.0) {
            return bad("solver.convergence_tol", "must be >= 0");
        }
        Ok(())
    }
}

/// Convex hull of a planar point set (counter-clockwise, no collinear
/// vertices).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexHull {
    vertices: Vec<Point2>,
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

impl ConvexHull {
    /// Andrew's monotone chain.
    pub fn new(points: &[Point2]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Geometry("convex hull of an empty set".into()));
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        pts.dedup();
        if pts.len() < 3 {
            return Ok(Self { vertices: pts });
        }
        let mut lower: Vec<Point2> = Vec::new();
        for &p in &pts {
            while lower.len() >= 2
                && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0
            {
                lower.pop();
            }
            lower.push(p);
        }
        let mut upper: Vec<Point2> = Vec::new();
        for &p in pts.iter().rev() {
            while upper.len() >= 2
                && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0
            {
                upper.pop();
            }
            upper.push(p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        Ok(Self { vertices: lower })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn contains(&self, p: Point2) -> bool {
        const EPS: f64 = 1e-9;
        match self.vertices.len() {
            1 => self.vertices[0].distance(&p) <= EPS,
            2 => {
                let (a, b) = (self.vertices[0], self.vertices[1]);
                cross(a, b, p).abs() <= EPS * a.distance(&b)
                    && p.x >= a.x.min(b.x) - EPS
                    && p.x <= a.x.max(b.x) + EPS
                    && p.y >= a.y.min(b.y) - EPS
                    && p.y <= a.y.max(b.y) + EPS
            }
            n => (0..n).all(|k| cross(self.vertices[k], self.vertices[(k + 1) % n], p) >= -EPS),
        }
    }

    /// Uniform sample from the hull: rejection in the bounding box, or a
    /// uniform point on the segment / the single point for degenerate hulls.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point2 {
        match self.vertices.len() {
            1 => self.vertices[0],
            2 => {
                let (a, b) = (self.vertices[0], self.vertices[1]);
                let t: f64 = rng.random();
                Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
            }
            _ => {
                let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
                for v in &self.vertices {
                    x0 = x0.min(v.x);
                    x1 = x1.max(v.x);
                    y0 = y0.min(v.y);
                    y1 = y1.max(v.y);
                }
                loop {
                    let p = Point2::new(rng.random_range(x0..=x1), rng.random_range(y0..=y1));
                    if self.contains(p) {
                        return p;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentRun {
    pub start: Point2,
    pub start_value: f64,
    pub end: Point2,
    pub end_value: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub point: Point2,
    pub value: f64,
    pub runs: Vec<AscentRun>,
}

/// Projected gradient ascent with normalized, geometrically shrinking steps.
/// Steps that do not improve the objective are rejected.
fn ascend(
    f: &WaypointObjective<'_>,
    arena: &Arena,
    cfg: &SolverConfig,
    start: Point2,
) -> AscentRun {
    let start = arena.clamp(start);
    let start_value = f.value(start);
    let (mut p, mut v) = (start, start_value);
    let mut step = cfg.step_size;
    let mut iterations = 0;
    for _ in 0..cfg.iterations {
        iterations += 1;
        let g = f.gradient(p);
        let norm = g[0].hypot(g[1]);
        if !(norm.is_finite() && norm > 0.0) {
            break;
        }
        let cand = arena.clamp(Point2::new(
            p.x + step * g[0] / norm,
            p.y + step * g[1] / norm,
        ));
        step *= cfg.step_decay;
        let cv = f.value(cand);
        if cv > v {
            let gain = cv - v;
            p = cand;
            v = cv;
            if gain <= cfg.convergence_tol * v.abs() {
                break;
            }
        }
    }
    AscentRun {
        start,
        start_value,
        end: p,
        end_value: v,
        iterations,
    }
}

/// Multi-start maximization of `f`. Start points are drawn from `hull`
/// up front, so the result depends only on `rng`'s state.
pub fn maximize<R: Rng + ?Sized>(
    f: &WaypointObjective<'_>,
    arena: &Arena,
    hull: &ConvexHull,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Solution {
    let starts: Vec<Point2> = (0..cfg.restarts).map(|_| hull.sample(rng)).collect();
    let runs: Vec<AscentRun> = starts
        .par_iter()
        .map(|&s| ascend(f, arena, cfg, s))
        .collect();
    let best = runs.iter().enumerate().fold(0, |best, (k, r)| {
        if r.end_value > runs[best].end_value {
            k
        } else {
            best
        }
    });
    Solution {
        point: runs[best].end,
        value: runs[best].end_value,
        runs,
    }
}
