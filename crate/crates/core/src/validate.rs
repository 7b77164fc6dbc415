//! Self-checks against independent reference computations: a physical
//! shadowing sampler for the link probabilities, finite differences for
//! gradients, brute-force grid search for the waypoint solver, and closed
//! forms for gossip and DSGD.

use std::fmt;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::connectivity::{
    expected_aggregate, expected_relay_matrix, ground_probability_matrix, uav_probability_vector,
    AdjacencyMatrix,
};
use crate::geometry::{
    elevation_angle_deg, los_probability, normal_cdf, AirChannelParams, Arena, Deployment,
    GroundChannelParams, ObstacleSegment, PathLoss, Point2, Position3,
};
use crate::learning::{
    consensus_error, local_updates, mean_estimate, metropolis_weights, mix, LrSchedule, MlpConfig,
    NodeState, QuadraticOracle,
};
use crate::rng::Streams;
use crate::trajectory::{maximize, sigmoid_cdf, ConvexHull, SolverConfig, WaypointObjective};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status}  {:<28} {}", self.name, self.detail)
    }
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        name,
        passed,
        detail,
    }
}

/// Binomial 3σ acceptance for an observed frequency.
fn within_three_sigma(hits: u64, n: u64, p: f64) -> bool {
    let freq = hits as f64 / n as f64;
    (freq - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Standardized deviation of an observed frequency (0 for degenerate `p`
/// matched exactly).
fn z_score(hits: u64, n: u64, p: f64) -> f64 {
    let diff = hits as f64 / n as f64 - p;
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    if diff == 0.0 {
        0.0
    } else {
        diff / sd
    }
}

/// Draws a shadowed gain and compares it with the threshold.
fn physical_ground_link<R: Rng>(mean_db: f64, sigma: f64, threshold: f64, rng: &mut R) -> bool {
    let eta: f64 = rng.sample(StandardNormal);
    mean_db + sigma * eta >= threshold
}

/// LoS state first, then the matching shadowed gain.
fn physical_air_link<R: Rng>(
    d: f64,
    rho: f64,
    air: &AirChannelParams,
    threshold: f64,
    rng: &mut R,
) -> bool {
    let model: &PathLoss = if rng.random::<f64>() < rho {
        &air.los
    } else {
        &air.nlos
    };
    let eta: f64 = rng.sample(StandardNormal);
    model.mean_gain(d) + model.sigma_db * eta >= threshold
}

struct ChannelCase {
    dep: Deployment,
    ground: GroundChannelParams,
    air: AirChannelParams,
    uav: Position3,
}

fn random_channel_case<R: Rng>(rng: &mut R) -> Result<ChannelCase> {
    let ground = GroundChannelParams {
        alpha: rng.random_range(2.0..4.0),
        beta_db: rng.random_range(-40.0..-20.0),
        sigma_db: rng.random_range(0.5..8.0),
        threshold_db: 0.0,
    };
    let d: f64 = rng.random_range(3.0..40.0);
    let a = Point2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let b = Point2::new(a.x + d * phi.cos(), a.y + d * phi.sin());
    let obstacles = if rng.random_bool(0.5) {
        // a wall across the link, through its midpoint
        let mid = a.midpoint(&b);
        let (nx, ny) = (-phi.sin(), phi.cos());
        vec![ObstacleSegment::new(
            Point2::new(mid.x - 5.0 * nx, mid.y - 5.0 * ny),
            Point2::new(mid.x + 5.0 * nx, mid.y + 5.0 * ny),
            rng.random_range(5.0..20.0),
        )?]
    } else {
        vec![]
    };
    let z = rng.random_range(0.0..3.0);
    let arena = Arena::new(-100.0, 100.0, -100.0, 100.0)?;
    let dep = Deployment::new(vec![a.at_altitude(z), b.at_altitude(0.0)], obstacles, arena)?;
    let mut ground = ground;
    // threshold near the ground link's mean so the probability is not degenerate
    let mean = dep.expected_ground_gain(0, 1, &ground)?;
    ground.threshold_db = mean + ground.sigma_db * rng.random_range(-2.0..2.0);

    let los = PathLoss {
        alpha: rng.random_range(2.0..3.0),
        beta_db: rng.random_range(-35.0..-25.0),
        sigma_db: rng.random_range(0.5..6.0),
    };
    let air = AirChannelParams {
        los,
        nlos: PathLoss {
            alpha: los.alpha + rng.random_range(0.0..1.0),
            beta_db: los.beta_db - rng.random_range(0.0..10.0),
            sigma_db: rng.random_range(0.5..6.0),
        },
        los_a: rng.random_range(0.1..0.6),
        los_b: rng.random_range(2.0..8.0),
    };
    // aim the UAV range at the LoS break-even distance, jittered
    let h = rng.random_range(5.0..40.0) + z;
    let reach = 10f64.powf((los.beta_db - ground.threshold_db) / (10.0 * los.alpha))
        * rng.random_range(0.7..1.3);
    let r = (reach * reach - h * h).max(0.0).sqrt();
    let psi = rng.random_range(0.0..std::f64::consts::TAU);
    let uav = Position3::new(a.x + r * psi.cos(), a.y + r * psi.sin(), h);
    Ok(ChannelCase {
        dep,
        ground,
        air,
        uav,
    })
}

/// Compares empirical link frequencies from gain-level sampling against the
/// analytic ground, air, relay and aggregate probabilities.
pub fn channel_oracle(configs: usize, rounds: u64, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut compared = 0;
    let (mut max_z, mut sum_z2) = (0.0f64, 0.0);
    for k in 0..configs {
        // redraw cases where a compared probability is too close to 0 or 1
        // for the normal approximation of the binomial bound
        let (c, p_gr, p_uav, relay, agg) = loop {
            let c = random_channel_case(&mut rng)?;
            let p_gr = ground_probability_matrix(&c.dep, &c.ground)?;
            let p_uav = uav_probability_vector(&c.uav, &c.dep, &c.air, c.ground.threshold_db);
            let relay = expected_relay_matrix(&p_uav);
            let agg = expected_aggregate(&p_gr, &relay)?;
            let ps = [
                p_gr.get(0, 1),
                p_uav[0],
                p_uav[1],
                relay.get(0, 1),
                agg.get(0, 1),
            ];
            if ps.iter().all(|&p| rounds as f64 * p.min(1.0 - p) >= 100.0) {
                break (c, p_gr, p_uav, relay, agg);
            }
        };
        let thr = c.ground.threshold_db;

        let g_mean = c.dep.expected_ground_gain(0, 1, &c.ground)?;
        let nodes = c.dep.ground();
        let d: Vec<f64> = nodes
            .iter()
            .map(|g| crate::geometry::distance(&c.uav, g))
            .collect();
        let rho: Vec<f64> = nodes
            .iter()
            .map(|g| elevation_angle_deg(&c.uav, g).map(|t| los_probability(t, &c.air)))
            .collect::<Result<_>>()?;

        let mut hits = [0u64; 5];
        for _ in 0..rounds {
            let gr = physical_ground_link(g_mean, c.ground.sigma_db, thr, &mut rng);
            let u0 = physical_air_link(d[0], rho[0], &c.air, thr, &mut rng);
            let u1 = physical_air_link(d[1], rho[1], &c.air, thr, &mut rng);
            for (h, on) in hits
                .iter_mut()
                .zip([gr, u0, u1, u0 && u1, gr || (u0 && u1)])
            {
                *h += on as u64;
            }
        }
        let expect = [
            p_gr.get(0, 1),
            p_uav[0],
            p_uav[1],
            relay.get(0, 1),
            agg.get(0, 1),
        ];
        let labels = ["ground", "uav0", "uav1", "relay", "aggregate"];
        for ((&h, &p), label) in hits.iter().zip(&expect).zip(labels) {
            compared += 1;
            let z = z_score(h, rounds, p);
            max_z = max_z.max(z.abs());
            sum_z2 += z * z;
            if !within_three_sigma(h, rounds, p) {
                failures.push(format!(
                    "config {k} {label}: freq {:.5} vs p {p:.5}",
                    h as f64 / rounds as f64
                ));
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("{compared} frequencies over {configs} configs x {rounds} rounds within 3 sigma (max |z| {max_z:.2})")
    } else {
        format!(
            "{}; mean z^2 {:.2}",
            failures.join("; "),
            sum_z2 / compared as f64
        )
    };
    Ok(outcome("channel_oracle", failures.is_empty(), detail))
}

/// Connected graph: random spanning tree plus Bernoulli extra edges.
pub fn random_connected_graph<R: Rng>(m: usize, extra: f64, rng: &mut R) -> AdjacencyMatrix {
    let mut a = AdjacencyMatrix::identity(m);
    for i in 1..m {
        let j = rng.random_range(0..i);
        a.set(i, j, true);
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if rng.random::<f64>() < extra {
                a.set(i, j, true);
            }
        }
    }
    a
}

/// Metropolis weights on random connected graphs: symmetry, stochasticity,
/// support, mean preservation and weak contraction of gossip.
pub fn mixing_suite(graphs: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_row = 0.0f64;
    let mut worst_mean = 0.0f64;
    let mut failures = Vec::new();
    for g in 0..graphs {
        let m = rng.random_range(2..=30);
        let extra = rng.random_range(0.0..0.5);
        let a = random_connected_graph(m, extra, &mut rng);
        let w = metropolis_weights(&a)?;
        for i in 0..m {
            let row: f64 = (0..m).map(|j| w.get(i, j)).sum();
            let col: f64 = (0..m).map(|j| w.get(j, i)).sum();
            worst_row = worst_row.max((row - 1.0).abs()).max((col - 1.0).abs());
            for j in 0..m {
                let v = w.get(i, j);
                if v < 0.0 || v != w.get(j, i) || (v != 0.0 && !a.get(i, j)) {
                    failures.push(format!("graph {g}: bad entry ({i}, {j})"));
                }
            }
        }
        let d = rng.random_range(1..=8);
        let est: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();
        let mixed = mix(&est, &w)?;
        for (x, y) in mean_estimate(&est).iter().zip(&mean_estimate(&mixed)) {
            worst_mean = worst_mean.max((x - y).abs());
        }
        if consensus_error(&mixed) > consensus_error(&est) * (1.0 + 1e-12) {
            failures.push(format!("graph {g}: consensus error grew"));
        }
    }
    if worst_row > 1e-12 {
        failures.push(format!("row/column sum off by {worst_row:e}"));
    }
    if worst_mean > 1e-10 {
        failures.push(format!("mean drift {worst_mean:e}"));
    }
    let detail = if failures.is_empty() {
        format!(
            "{graphs} graphs; max |sum - 1| = {worst_row:.1e}, max mean drift = {worst_mean:.1e}"
        )
    } else {
        failures.truncate(5);
        failures.join("; ")
    };
    Ok(outcome("mixing_suite", failures.is_empty(), detail))
}

fn random_deployment<R: Rng>(rng: &mut R, m: usize) -> Result<Deployment> {
    let ground = (0..m)
        .map(|_| {
            Position3::new(
                rng.random_range(-25.0..25.0),
                rng.random_range(-25.0..25.0),
                0.0,
            )
        })
        .collect();
    Deployment::new(ground, vec![], Arena::new(-30.0, 30.0, -30.0, 30.0)?)
}

/// Central differences of the waypoint objective against its analytic
/// gradient.
pub fn waypoint_gradient_check(points: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..points {
        let m = rng.random_range(1..=8);
        let dep = random_deployment(&mut rng, m)?;
        let w = Array2::from_shape_fn((m, m), |_| rng.random_range(0.0..1.0));
        let f = WaypointObjective::new(
            &dep,
            w,
            AirChannelParams::default(),
            -60.0,
            rng.random_range(5.0..30.0),
        )?;
        let p = Point2::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
        let g = f.gradient(p);
        let fd = [
            (f.value(Point2::new(p.x + h, p.y)) - f.value(Point2::new(p.x - h, p.y))) / (2.0 * h),
            (f.value(Point2::new(p.x, p.y + h)) - f.value(Point2::new(p.x, p.y - h))) / (2.0 * h),
        ];
        let err = (fd[0] - g[0]).hypot(fd[1] - g[1]);
        // flat regions: fall back to an absolute floor
        worst = worst.max(err / g[0].hypot(g[1]).max(1e-6));
    }
    Ok(outcome(
        "waypoint_gradient",
        worst <= 1e-4,
        format!("{points} points; worst relative error {worst:.2e} (limit 1e-4)"),
    ))
}

/// Central differences of the perceptron loss on random coordinates.
pub fn mlp_gradient_check(coords: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = MlpConfig {
        input_dim: 20,
        hidden_dim: 8,
        output_dim: 5,
        activation: Default::default(),
    };
    let params = model.init(&mut rng);
    let params: Vec<f64> = params
        .iter()
        .map(|p| p + rng.random_range(-0.05..0.05))
        .collect();
    let x = Array2::from_shape_fn((10, model.input_dim), |_| rng.random_range(0.0..1.0));
    let y: Vec<u8> = (0..10)
        .map(|_| rng.random_range(0..model.output_dim as u8))
        .collect();
    let (_, g) = model.loss_and_gradient(&params, x.view(), &y)?;
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..coords {
        let k = rng.random_range(0..params.len());
        let mut p = params.clone();
        p[k] += h;
        let up = model.loss(&p, x.view(), &y)?;
        p[k] -= 2.0 * h;
        let down = model.loss(&p, x.view(), &y)?;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - g[k]).abs() / fd.abs().max(1e-3));
    }
    Ok(outcome(
        "mlp_gradient",
        worst <= 1e-5,
        format!("{coords} coordinates; worst relative error {worst:.2e} (limit 1e-5)"),
    ))
}

/// Brute-force maximizer of the objective on a square grid.
pub fn grid_argmax(f: &WaypointObjective<'_>, arena: &Arena, step: f64) -> (Point2, f64) {
    let nx = ((arena.x_max - arena.x_min) / step).round() as usize;
    let ny = ((arena.y_max - arena.y_min) / step).round() as usize;
    let mut best = (Point2::new(arena.x_min, arena.y_min), f64::NEG_INFINITY);
    for i in 0..=nx {
        for j in 0..=ny {
            let p = Point2::new(arena.x_min + i as f64 * step, arena.y_min + j as f64 * step);
            let v = f.value(p);
            if v > best.1 {
                best = (p, v);
            }
        }
    }
    best
}

/// The waypoint solver against grid search on the single-user and the
/// symmetric two-user instances.
pub fn solver_recovery(seed: u64) -> Result<CheckOutcome> {
    let arena = Arena::new(-20.0, 20.0, -20.0, 20.0)?;
    let cases: [(&str, Vec<(f64, f64)>); 2] = [
        ("one user", vec![(3.0, -4.0)]),
        ("two users", vec![(-10.0, 2.0), (10.0, 2.0)]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::new();
    let mut passed = true;
    for (label, users) in cases {
        let dep = Deployment::new(
            users
                .iter()
                .map(|&(x, y)| Position3::new(x, y, 0.0))
                .collect(),
            vec![],
            arena,
        )?;
        let m = users.len();
        let f = WaypointObjective::new(
            &dep,
            Array2::ones((m, m)),
            AirChannelParams::default(),
            -60.0,
            10.0,
        )?;
        let hull = ConvexHull::new(&dep.horizontal_positions())?;
        let sol = maximize(&f, &arena, &hull, &SolverConfig::default(), &mut rng);
        let (grid, _) = grid_argmax(&f, &arena, 0.1);
        let err = sol.point.distance(&grid);
        passed &= err <= 0.5;
        parts.push(format!(
            "{label}: solver ({:.2}, {:.2}) vs grid ({:.1}, {:.1}), off {err:.3} m",
            sol.point.x, sol.point.y, grid.x, grid.y
        ));
    }
    Ok(outcome("solver_recovery", passed, parts.join("; ")))
}

/// Fully connected DSGD on quadratics must land on the mean of the centers.
pub fn dsgd_quadratic(nodes: usize, dim: usize, rounds: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..nodes)
        .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect();
    let target = mean_estimate(&centers);
    let oracles = QuadraticOracle::family(centers, 0.0)?;
    let mut state: Vec<NodeState> = (0..nodes)
        .map(|_| NodeState::new(vec![0.0; dim], 0.0, 0, LrSchedule::default()))
        .collect::<Result<_>>()?;
    let w = metropolis_weights(&AdjacencyMatrix::ones(nodes))?;
    let streams = Streams::new(seed);
    let no_stragglers = vec![false; nodes];
    for t in 0..rounds {
        local_updates(&mut state, &oracles, &no_stragglers, t, &streams)?;
        let est: Vec<Vec<f64>> = state.iter().map(|n| n.params.clone()).collect();
        for (n, p) in state.iter_mut().zip(mix(&est, &w)?) {
            n.params = p;
        }
    }
    let worst = state
        .iter()
        .map(|n| {
            n.params
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    Ok(outcome(
        "dsgd_quadratic",
        worst <= 1e-3,
        format!("{nodes} nodes, {rounds} rounds; max distance to mean of centers {worst:.2e}"),
    ))
}

/// Largest gap between the logistic surrogate and the normal CDF on `[-6, 6]`.
pub fn sigmoid_bound(samples: usize) -> CheckOutcome {
    let worst = (0..=samples)
        .map(|k| -6.0 + 12.0 * k as f64 / samples as f64)
        .map(|x| (sigmoid_cdf(x) - normal_cdf(x)).abs())
        .fold(0.0, f64::max);
    outcome(
        "sigmoid_bound",
        worst <= 0.0095,
        format!("max |sigmoid - Phi| = {worst:.5} on [-6, 6] (limit 0.0095)"),
    )
}

/// Every check at its full size.
pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        channel_oracle(20, 100_000, seed)?,
        mixing_suite(1000, seed)?,
        waypoint_gradient_check(100, seed)?,
        mlp_gradient_check(200, seed)?,
        solver_recovery(seed)?,
        dsgd_quadratic(23, 10, 500, seed)?,
        sigmoid_bound(120_000),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_sigma_helper() {
        assert!(within_three_sigma(500, 1000, 0.5));
        assert!(!within_three_sigma(600, 1000, 0.5));
        assert!(within_three_sigma(0, 1000, 0.0));
        assert!(!within_three_sigma(1, 1000, 0.0));
    }

    #[test]
    fn random_graphs_are_connected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let m = rng.random_range(1..20);
            assert!(random_connected_graph(m, 0.0, &mut rng).is_connected());
        }
    }

    #[test]
    fn small_suites_pass() {
        for check in [
            channel_oracle(3, 20_000, 1).unwrap(),
            mixing_suite(50, 1).unwrap(),
            waypoint_gradient_check(20, 1).unwrap(),
            mlp_gradient_check(30, 1).unwrap(),
            dsgd_quadratic(5, 3, 500, 1).unwrap(),
            sigmoid_bound(12_000),
        ] {
            assert!(check.passed, "{check}");
        }
    }
}
