use std::fmt;
use std::str::FromStr;

use super::activity::ActivityRateMatrix;
use super::baselines::{barycenter, cluster_midpoints, max_connectivity_placement};
use super::kmeans::kmeans;
use super::objective::WaypointObjective;
use super::solver::{maximize, ConvexHull, SolverConfig};
use crate::connectivity::{expected_aggregate, expected_relay_matrix, LinkProbabilityMatrix};
use crate::geometry::{AirChannelParams, Deployment, Point2, Position3};
use crate::rng::{Purpose, Streams};
use crate::{Error, Result};

/// How the relay UAV moves during a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryPolicy {
    /// Waypoints solved on the fly from the link-activity rates.
    Proposed,
    /// Cyclic tour of the pairwise midpoints of k-means cluster centers.
    ClusterMidpoints,
    /// Static hover over the mean ground position.
    Barycenter,
    /// Static hover maximizing relay opportunities for poorly connected pairs.
    MaxConnectivity,
    Static(Point2),
    /// UAV acts as a parameter server; waypoints ignore ground links.
    FederatedPs,
}

impl TrajectoryPolicy {
    pub fn is_federated(&self) -> bool {
        matches!(self, TrajectoryPolicy::FederatedPs)
    }
}

impl fmt::Display for TrajectoryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrajectoryPolicy::Proposed => f.write_str("proposed"),
            TrajectoryPolicy::ClusterMidpoints => f.write_str("cluster_midpoints"),
            TrajectoryPolicy::Barycenter => f.write_str("barycenter"),
            TrajectoryPolicy::MaxConnectivity => f.write_str("max_connectivity"),
            TrajectoryPolicy::Static(p) => write!(f, "static:{},{}", p.x, p.y),
            TrajectoryPolicy::FederatedPs => f.write_str("federated_ps"),
        }
    }
}

impl FromStr for TrajectoryPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let invalid = || Error::config("policy", format!("unknown policy `{s}`"));
        Ok(match s {
            "proposed" => TrajectoryPolicy::Proposed,
            "cluster_midpoints" => TrajectoryPolicy::ClusterMidpoints,
            "barycenter" => TrajectoryPolicy::Barycenter,
            "max_connectivity" => TrajectoryPolicy::MaxConnectivity,
            "federated_ps" => TrajectoryPolicy::FederatedPs,
            other => {
                let coords = other.strip_prefix("static:").ok_or_else(invalid)?;
                let (x, y) = coords.split_once(',').ok_or_else(invalid)?;
                let x = x.trim().parse().map_err(|_| invalid())?;
                let y = y.trim().parse().map_err(|_| invalid())?;
                TrajectoryPolicy::Static(Point2::new(x, y))
            }
        })
    }
}

/// Move straight toward `target` by at most `speed` meters. An infinite
/// speed teleports.
pub fn advance_uav(position: Point2, target: Point2, speed: f64) -> Point2 {
    let remaining = position.distance(&target);
    if speed.is_infinite() || remaining <= speed {
        return target;
    }
    let t = speed / remaining;
    Point2::new(
        position.x + t * (target.x - position.x),
        position.y + t * (target.y - position.y),
    )
}

/// Everything the controller needs to plan waypoints.
#[derive(Debug, Clone)]
pub struct PlanningContext {
    pub deployment: Deployment,
    pub ground_probs: LinkProbabilityMatrix,
    pub air: AirChannelParams,
    pub threshold_db: f64,
    pub altitude: f64,
    /// Meters per round; `f64::INFINITY` teleports.
    pub speed: f64,
    /// Rounds spent serving at each reached waypoint, arrival included.
    pub dwell_rounds: usize,
    pub gamma: f64,
    pub solver: SolverConfig,
    pub kmeans_k: usize,
    pub initial_position: Point2,
}

/// A waypoint reached (or a static placement taken) in `round`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointEvent {
    pub round: usize,
    pub point: Point2,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone)]
enum Planner {
    Activity {
        rates: ActivityRateMatrix,
        ignore_ground: bool,
        hull: ConvexHull,
        solves: u64,
    },
    Cycle {
        waypoints: Vec<Point2>,
        next: usize,
    },
    Fixed {
        objective: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Plan,
    Travel {
        target: Point2,
        objective: Option<f64>,
    },
    Dwell {
        remaining: usize,
    },
    Hover {
        logged: bool,
    },
}

/// Per-round UAV state machine: travel to a waypoint, dwell there, then ask
/// the policy for the next one.
#[derive(Debug, Clone)]
pub struct UavController {
    ctx: PlanningContext,
    policy: TrajectoryPolicy,
    planner: Planner,
    phase: Phase,
    position: Point2,
    streams: Streams,
}

impl UavController {
    pub fn new(policy: TrajectoryPolicy, ctx: PlanningContext, streams: Streams) -> Result<Self> {
        if !(ctx.speed > 0.0) {
            return Err(Error::InvalidParameter {
                name: "uav.speed",
                reason: format!("must be > 0, got {}", ctx.speed),
            });
        }
        ctx.solver.validate()?;
        let positions = ctx.deployment.horizontal_positions();
        let hover = |p: Point2, objective| {
            (
                Planner::Fixed { objective },
                Phase::Hover { logged: false },
                ctx.deployment.arena().clamp(p),
            )
        };
        let (planner, phase, position) = match policy {
            TrajectoryPolicy::Proposed | TrajectoryPolicy::FederatedPs => (
                Planner::Activity {
                    rates: ActivityRateMatrix::new(ctx.deployment.len(), ctx.gamma)?,
                    ignore_ground: policy.is_federated(),
                    hull: ConvexHull::new(&positions)?,
                    solves: 0,
                },
                Phase::Plan,
                ctx.initial_position,
            ),
            TrajectoryPolicy::ClusterMidpoints => {
                let mut rng = streams.stream(Purpose::Kmeans, 0);
                let fit = kmeans(&positions, ctx.kmeans_k, &mut rng)?;
                (
                    Planner::Cycle {
                        waypoints: cluster_midpoints(&fit.centers)?,
                        next: 0,
                    },
                    Phase::Plan,
                    ctx.initial_position,
                )
            }
            TrajectoryPolicy::Barycenter => hover(barycenter(&positions), None),
            TrajectoryPolicy::Static(p) => hover(p, None),
            TrajectoryPolicy::MaxConnectivity => {
                let mut rng = streams.stream(Purpose::SolverRestarts, 0);
                let sol = max_connectivity_placement(
                    &ctx.deployment,
                    &ctx.ground_probs,
                    &ctx.air,
                    ctx.threshold_db,
                    ctx.altitude,
                    &ctx.solver,
                    &mut rng,
                )?;
                hover(sol.point, Some(sol.value))
            }
        };
        Ok(Self {
            ctx,
            policy,
            planner,
            phase,
            position,
            streams,
        })
    }

    pub fn policy(&self) -> TrajectoryPolicy {
        self.policy
    }

    pub fn position(&self) -> Point2 {
        self.position
    }

    pub fn position3(&self) -> Position3 {
        self.position.at_altitude(self.ctx.altitude)
    }

    pub fn context(&self) -> &PlanningContext {
        &self.ctx
    }

    /// Current link-activity rates, for activity-driven policies.
    pub fn activity(&self) -> Option<&ActivityRateMatrix> {
        match &self.planner {
            Planner::Activity { rates, .. } => Some(rates),
            _ => None,
        }
    }

    fn plan(&mut self) -> Result<(Point2, Option<f64>)> {
        match &mut self.planner {
            Planner::Activity {
                rates,
                hull,
                solves,
                ..
            } => {
                let f = WaypointObjective::new(
                    &self.ctx.deployment,
                    rates.weights(),
                    self.ctx.air,
                    self.ctx.threshold_db,
                    self.ctx.altitude,
                )?;
                let mut rng = self.streams.stream(Purpose::SolverRestarts, *solves);
                *solves += 1;
                let sol = maximize(
                    &f,
                    self.ctx.deployment.arena(),
                    hull,
                    &self.ctx.solver,
                    &mut rng,
                );
                Ok((sol.point, Some(sol.value)))
            }
            Planner::Cycle { waypoints, next } => {
                let w = waypoints[*next];
                *next = (*next + 1) % waypoints.len();
                Ok((w, None))
            }
            Planner::Fixed { objective } => Ok((self.position, *objective)),
        }
    }

    /// Advance one round. Returns the waypoint reached in this round, if any.
    pub fn step(&mut self, round: usize) -> Result<Option<WaypointEvent>> {
        loop {
            match self.phase {
                Phase::Hover { logged } => {
                    self.phase = Phase::Hover { logged: true };
                    let objective = match self.planner {
                        Planner::Fixed { objective } => objective,
                        _ => None,
                    };
                    return Ok((!logged).then_some(WaypointEvent {
                        round,
                        point: self.position,
                        objective,
                    }));
                }
                Phase::Plan => {
                    let (target, objective) = self.plan()?;
                    self.phase = Phase::Travel { target, objective };
                }
                Phase::Travel { target, objective } => {
                    self.position = advance_uav(self.position, target, self.ctx.speed);
                    if self.position != target {
                        return Ok(None);
                    }
                    self.phase = Phase::Dwell {
                        remaining: self.ctx.dwell_rounds.saturating_sub(1),
                    };
                    return Ok(Some(WaypointEvent {
                        round,
                        point: target,
                        objective,
                    }));
                }
                Phase::Dwell { remaining: 0 } => self.phase = Phase::Plan,
                Phase::Dwell { remaining } => {
                    self.phase = Phase::Dwell {
                        remaining: remaining - 1,
                    };
                    return Ok(None);
                }
            }
        }
    }

    /// Feed this round's expected UAV link probabilities (at the current
    /// position) into the activity rates. No-op for other policies.
    pub fn observe(&mut self, relay_probs: &[f64]) -> Result<()> {
        if let Planner::Activity {
            rates,
            ignore_ground,
            ..
        } = &mut self.planner
        {
            let relay = expected_relay_matrix(relay_probs);
            let expected = if *ignore_ground {
                relay
            } else {
                expected_aggregate(&self.ctx.ground_probs, &relay)?
            };
            rates.update(&expected)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::ground_probability_matrix;
    use crate::geometry::{Arena, GroundChannelParams};

    #[test]
    fn advance_examples() {
        let w = Point2::new(10.0, 0.0);
        assert_eq!(advance_uav(w, w, 4.0), w);
        let p = advance_uav(Point2::new(0.0, 0.0), w, 4.0);
        assert!((p.x - 4.0).abs() < 1e-12 && p.y == 0.0);
        assert_eq!(advance_uav(Point2::new(0.0, 0.0), w, f64::INFINITY), w);
        assert_eq!(advance_uav(Point2::new(8.0, 0.0), w, 4.0), w);
    }

    #[test]
    fn policy_names_round_trip() {
        for p in [
            TrajectoryPolicy::Proposed,
            TrajectoryPolicy::ClusterMidpoints,
            TrajectoryPolicy::Barycenter,
            TrajectoryPolicy::MaxConnectivity,
            TrajectoryPolicy::FederatedPs,
            TrajectoryPolicy::Static(Point2::new(1.5, -2.0)),
        ] {
            assert_eq!(p.to_string().parse::<TrajectoryPolicy>().unwrap(), p);
        }
        assert!("hover".parse::<TrajectoryPolicy>().is_err());
        assert!("static:1".parse::<TrajectoryPolicy>().is_err());
    }

    fn context(speed: f64, dwell: usize) -> PlanningContext {
        let dep = Deployment::new(
            [
                (0.0, 0.0),
                (3.0, 0.0),
                (40.0, 0.0),
                (43.0, 0.0),
                (20.0, 30.0),
                (22.0, 30.0),
            ]
            .iter()
            .map(|&(x, y)| Position3::new(x, y, 0.0))
            .collect(),
            vec![],
            Arena::new(0.0, 50.0, 0.0, 30.0).unwrap(),
        )
        .unwrap();
        let gp = GroundChannelParams::default();
        PlanningContext {
            ground_probs: ground_probability_matrix(&dep, &gp).unwrap(),
            deployment: dep,
            air: AirChannelParams::default(),
            threshold_db: gp.threshold_db,
            altitude: 10.0,
            speed,
            dwell_rounds: dwell,
            gamma: 0.9,
            solver: SolverConfig {
                restarts: 4,
                iterations: 100,
                ..Default::default()
            },
            kmeans_k: 3,
            initial_position: Point2::new(20.0, 10.0),
        }
    }

    #[test]
    fn midpoint_tour_travels_dwells_and_cycles() {
        let mut uav = UavController::new(
            TrajectoryPolicy::ClusterMidpoints,
            context(5.0, 3),
            Streams::new(1),
        )
        .unwrap();
        let mut events = vec![];
        for t in 0..200 {
            if let Some(e) = uav.step(t).unwrap() {
                events.push(e);
            }
        }
        // three cluster midpoints visited cyclically
        assert!(events.len() > 6);
        assert_eq!(events[0].point, events[3].point);
        assert_ne!(events[0].point, events[1].point);
        for pair in events.windows(2) {
            let travel = pair[0].point.distance(&pair[1].point);
            // three dwell rounds, arrival included; the first travel step
            // happens in the round the dwell ends
            assert_eq!(
                pair[1].round - pair[0].round,
                2 + (travel / 5.0).ceil() as usize
            );
        }
    }

    #[test]
    fn static_policies_hover_and_log_once() {
        for policy in [
            TrajectoryPolicy::Barycenter,
            TrajectoryPolicy::MaxConnectivity,
            TrajectoryPolicy::Static(Point2::new(5.0, 5.0)),
        ] {
            let mut uav = UavController::new(policy, context(5.0, 20), Streams::new(3)).unwrap();
            let start = uav.position();
            let logged: Vec<_> = (0..50).filter_map(|t| uav.step(t).unwrap()).collect();
            assert_eq!(logged.len(), 1);
            assert_eq!(logged[0].round, 0);
            assert_eq!(uav.position(), start);
        }
    }

    #[test]
    fn proposed_moves_toward_starved_pairs() {
        let mut uav = UavController::new(
            TrajectoryPolicy::Proposed,
            context(f64::INFINITY, 5),
            Streams::new(7),
        )
        .unwrap();
        let mut visited = vec![];
        for t in 0..60 {
            if let Some(e) = uav.step(t).unwrap() {
                assert!(e.objective.is_some());
                visited.push(e.point);
            }
            let probs = crate::connectivity::uav_probability_vector(
                &uav.position3(),
                &uav.context().deployment,
                &uav.context().air,
                -60.0,
            );
            uav.observe(&probs).unwrap();
        }
        // teleporting: one waypoint per dwell period
        assert_eq!(visited.len(), 12);
        // rates penalize served pairs, so the UAV does not park in one spot
        assert!(visited.iter().any(|p| p.distance(&visited[0]) > 5.0));
        let r = uav.activity().unwrap().rates();
        for i in 0..6 {
            for j in 0..6 {
                assert!((r[(i, j)] - r[(j, i)]).abs() < 1e-15);
            }
        }
    }
}
