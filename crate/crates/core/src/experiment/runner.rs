use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{debug, info};
use ndarray::Array2;
use rand::seq::index::sample;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::config::{ExperimentConfig, RunPolicy, TaskKind};
use crate::connectivity::{
    aggregate, relay_adjacency, sample_ground_adjacency, sample_uav_links, uav_probability_vector,
    write_edge_list, AdjacencyMatrix,
};
use crate::data::{load_idx, partition, write_manifest, LabeledDataset};
use crate::learning::{
    aggregate_uploads, consensus_error, draw_stragglers, local_updates, mean_estimate,
    metropolis_weights, mix, write_checkpoint, GradientOracle, MlpConfig, MlpOracle, NodeState,
    QuadraticOracle,
};
use crate::rng::{Purpose, Streams};
use crate::trajectory::{TrajectoryPolicy, UavController, WaypointEvent};
use crate::{Error, Result};

/// Datasets shared by every run of an experiment.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: Option<LabeledDataset>,
    pub test: Option<(Array2<f64>, Vec<u8>)>,
}

impl TaskData {
    /// Nothing to load for synthetic tasks.
    pub fn none() -> Self {
        Self {
            train: None,
            test: None,
        }
    }

    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        if cfg.learning.task != TaskKind::Mlp {
            return Ok(Self::none());
        }
        let d = &cfg.data;
        let train = load_idx(&d.train_images, &d.train_labels)?;
        let test = load_idx(&d.test_images, &d.test_labels)?;
        info!(
            "loaded {} training and {} test samples",
            train.len(),
            test.len()
        );
        Ok(Self::from_datasets(train, test))
    }

    pub fn from_datasets(train: LabeledDataset, test: LabeledDataset) -> Self {
        let x = test.features_f64();
        Self {
            train: Some(train),
            test: Some((x, test.labels)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub round: usize,
    pub policy: String,
    pub seed: u64,
    /// Absent for tasks without a test set.
    pub test_accuracy_mean_estimate: Option<f64>,
    pub consensus_error: f64,
    pub n_ground_links: usize,
    pub n_relay_links: usize,
    pub uav_x: f64,
    pub uav_y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointRecord {
    pub policy: String,
    pub seed: u64,
    pub event: WaypointEvent,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub policy: RunPolicy,
    pub seed: u64,
    pub metrics: Vec<MetricsRecord>,
    pub waypoints: Vec<WaypointRecord>,
    pub shards: Vec<Vec<usize>>,
    /// Mean network estimate after the last round.
    pub final_mean: Vec<f64>,
    /// `round,i,j,source` rows when edge logging is on.
    pub edges: Option<Vec<u8>>,
}

impl RunResult {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.metrics
            .last()
            .and_then(|m| m.test_accuracy_mean_estimate)
    }

    pub fn final_consensus_error(&self) -> f64 {
        self.metrics.last().map_or(0.0, |m| m.consensus_error)
    }
}

/// Per-node objectives for the configured task.
fn build_oracles(
    cfg: &ExperimentConfig,
    task: &TaskData,
    m: usize,
    streams: &Streams,
) -> Result<(Vec<Box<dyn GradientOracle>>, Vec<Vec<usize>>)> {
    match cfg.learning.task {
        TaskKind::Mlp => {
            let train = task
                .train
                .as_ref()
                .ok_or_else(|| Error::config("data", "task `mlp` needs a training set"))?;
            if train.dim() != cfg.model.input_dim {
                return Err(Error::config(
                    "model.input_dim",
                    format!("dataset has {} features", train.dim()),
                ));
            }
            let shards = partition(
                train,
                m,
                &cfg.partition,
                &mut streams.stream(Purpose::Partition, 0),
            )?;
            let oracles = shards
                .iter()
                .map(|idx| {
                    let shard = train.subset(idx);
                    let o = MlpOracle::new(
                        cfg.model,
                        shard.features_f64(),
                        shard.labels,
                        cfg.learning.minibatch,
                    )?;
                    Ok(Box::new(o) as Box<dyn GradientOracle>)
                })
                .collect::<Result<_>>()?;
            Ok((oracles, shards))
        }
        TaskKind::Quadratic => {
            let mut rng = streams.stream(Purpose::Partition, 0);
            let normal = Normal::new(0.0, cfg.learning.quadratic_spread.max(f64::MIN_POSITIVE))
                .expect("validated spread");
            let oracles = (0..m)
                .map(|_| {
                    let c: Vec<f64> = (0..cfg.learning.quadratic_dim)
                        .map(|_| normal.sample(&mut rng))
                        .collect();
                    Ok(Box::new(QuadraticOracle::new(c, cfg.learning.noise_std)?)
                        as Box<dyn GradientOracle>)
                })
                .collect::<Result<_>>()?;
            Ok((oracles, Vec::new()))
        }
    }
}

fn initial_params(cfg: &ExperimentConfig, streams: &Streams) -> Vec<f64> {
    match cfg.learning.task {
        TaskKind::Mlp => cfg.model.init(&mut streams.stream(Purpose::Init, 0)),
        TaskKind::Quadratic => vec![0.0; cfg.learning.quadratic_dim],
    }
}

struct Evaluator<'a> {
    model: MlpConfig,
    test: Option<&'a (Array2<f64>, Vec<u8>)>,
    subset: Option<(Array2<f64>, Vec<u8>)>,
}

impl<'a> Evaluator<'a> {
    fn new(cfg: &ExperimentConfig, task: &'a TaskData, streams: &Streams) -> Self {
        let test = task
            .test
            .as_ref()
            .filter(|_| cfg.learning.task == TaskKind::Mlp);
        let subset = test.and_then(|(x, y)| {
            (cfg.learning.eval_subset < y.len()).then(|| {
                let mut idx = sample(
                    &mut streams.stream(Purpose::Eval, 0),
                    y.len(),
                    cfg.learning.eval_subset,
                )
                .into_vec();
                idx.sort_unstable();
                (
                    x.select(ndarray::Axis(0), &idx),
                    idx.iter().map(|&i| y[i]).collect(),
                )
            })
        });
        Self {
            model: cfg.model,
            test,
            subset,
        }
    }

    fn accuracy(&self, params: &[f64], full: bool) -> Result<Option<f64>> {
        let Some(test) = self.test else {
            return Ok(None);
        };
        let (x, y) = match (&self.subset, full) {
            (Some(s), false) => s,
            _ => test,
        };
        self.model.accuracy(params, x.view(), y).map(Some)
    }
}

/// Executes one run. Per round: move the UAV, update its activity rates,
/// sample the ground and relay links, take local steps, gossip (or
/// aggregate at the UAV) and record metrics on the evaluation cadence.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    task: &TaskData,
    policy: RunPolicy,
    seed: u64,
) -> Result<RunResult> {
    cfg.validate()?;
    let streams = Streams::new(seed);
    let ctx = cfg.planning_context()?;
    let dep = ctx.deployment.clone();
    let ground_probs = ctx.ground_probs.clone();
    let m = dep.len();
    let uav_policy = match policy {
        RunPolicy::Uav(p) => p,
        // topology is overridden; the UAV just hovers for the log
        RunPolicy::FullyConnected => TrajectoryPolicy::Barycenter,
    };
    let mut uav = UavController::new(uav_policy, ctx, streams)?;

    let (oracles, shards) = build_oracles(cfg, task, m, &streams)?;
    let theta0 = initial_params(cfg, &streams);
    let mut nodes: Vec<NodeState> = (0..m)
        .map(|_| {
            NodeState::new(
                theta0.clone(),
                cfg.learning.straggle_prob,
                cfg.learning.staleness_cap,
                cfg.learning.lr(),
            )
        })
        .collect::<Result<_>>()?;
    let mut server = theta0.clone();
    let eval = Evaluator::new(cfg, task, &streams);

    let name = policy.to_string();
    let mut metrics = Vec::new();
    let mut waypoints = Vec::new();
    let mut edges = cfg.output.edges.then(|| {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["round", "i", "j", "source"])
            .expect("in-memory write");
        w
    });
    let rounds = cfg.learning.rounds;
    for t in 0..rounds {
        if let Some(event) = uav.step(t)? {
            debug!(
                "{name} seed {seed}: waypoint ({:.2}, {:.2}) at round {t}",
                event.point.x, event.point.y
            );
            waypoints.push(WaypointRecord {
                policy: name.clone(),
                seed,
                event,
            });
        }
        let uav_probs =
            uav_probability_vector(&uav.position3(), &dep, &cfg.air, cfg.ground.threshold_db);
        uav.observe(&uav_probs)?;

        // drawn for every policy so all of them see the same ground links
        let a_gr = sample_ground_adjacency(
            &ground_probs,
            &mut streams.stream(Purpose::GroundLinks, t as u64),
        );
        let links = sample_uav_links(&uav_probs, &mut streams.stream(Purpose::UavLinks, t as u64));
        let a_uav = relay_adjacency(&links);
        if let Some(w) = edges.as_mut() {
            write_edge_list(w, t + 1, &a_gr, &a_uav)?;
        }

        let stragglers = draw_stragglers(&nodes, &streams, t);
        local_updates(&mut nodes, &oracles, &stragglers, t, &streams)?;

        if policy.is_federated() {
            aggregate_uploads(&mut server, &mut nodes, &links)?;
        } else {
            let a = match policy {
                RunPolicy::FullyConnected => AdjacencyMatrix::ones(m),
                RunPolicy::Uav(_) => aggregate(&a_gr, &a_uav)?,
            };
            let w = metropolis_weights(&a)?;
            let estimates: Vec<Vec<f64>> = nodes
                .iter_mut()
                .map(|n| std::mem::take(&mut n.params))
                .collect();
            for (n, p) in nodes.iter_mut().zip(mix(&estimates, &w)?) {
                n.params = p;
            }
        }

        let last = t + 1 == rounds;
        if (t + 1) % cfg.learning.eval_every == 0 || last {
            let estimates: Vec<Vec<f64>> = nodes.iter().map(|n| n.params.clone()).collect();
            let mean = mean_estimate(&estimates);
            let pos = uav.position();
            metrics.push(MetricsRecord {
                round: t + 1,
                policy: name.clone(),
                seed,
                test_accuracy_mean_estimate: eval.accuracy(&mean, last)?,
                consensus_error: consensus_error(&estimates),
                n_ground_links: a_gr.edge_count(),
                n_relay_links: a_uav.edge_count(),
                uav_x: pos.x,
                uav_y: pos.y,
            });
        }
    }
    let estimates: Vec<Vec<f64>> = nodes.into_iter().map(|n| n.params).collect();
    let edges = match edges {
        Some(w) => Some(w.into_inner().map_err(|e| Error::Io(e.into_error()))?),
        None => None,
    };
    Ok(RunResult {
        policy,
        seed,
        metrics,
        waypoints,
        shards,
        final_mean: mean_estimate(&estimates),
        edges,
    })
}

/// Trajectory only: steps the UAV for `rounds` rounds without learning.
pub fn trace_waypoints(
    cfg: &ExperimentConfig,
    policy: TrajectoryPolicy,
    seed: u64,
) -> Result<Vec<WaypointRecord>> {
    cfg.validate()?;
    let ctx = cfg.planning_context()?;
    let dep = ctx.deployment.clone();
    let mut uav = UavController::new(policy, ctx, Streams::new(seed))?;
    let mut out = Vec::new();
    for t in 0..cfg.learning.rounds {
        if let Some(event) = uav.step(t)? {
            out.push(WaypointRecord {
                policy: policy.to_string(),
                seed,
                event,
            });
        }
        let probs =
            uav_probability_vector(&uav.position3(), &dep, &cfg.air, cfg.ground.threshold_db);
        uav.observe(&probs)?;
    }
    Ok(out)
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.9}")
}

pub fn write_metrics_csv<W: Write>(w: W, rows: &[MetricsRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "round",
        "policy",
        "seed",
        "test_accuracy_mean_estimate",
        "consensus_error",
        "n_ground_links",
        "n_relay_links",
        "uav_x",
        "uav_y",
    ])?;
    for r in rows {
        out.write_record([
            r.round.to_string(),
            r.policy.clone(),
            r.seed.to_string(),
            r.test_accuracy_mean_estimate
                .map(fmt_f64)
                .unwrap_or_default(),
            format!("{:.9e}", r.consensus_error),
            r.n_ground_links.to_string(),
            r.n_relay_links.to_string(),
            fmt_f64(r.uav_x),
            fmt_f64(r.uav_y),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_waypoints_csv<W: Write>(w: W, rows: &[WaypointRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["round", "policy", "seed", "x", "y", "objective"])?;
    for r in rows {
        out.write_record([
            r.event.round.to_string(),
            r.policy.clone(),
            r.seed.to_string(),
            fmt_f64(r.event.point.x),
            fmt_f64(r.event.point.y),
            r.event.objective.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// File stem shared by a run's outputs, e.g. `proposed_seed3`.
pub fn run_stem(policy: RunPolicy, seed: u64) -> String {
    let name = policy.to_string().replace([':', ','], "_");
    format!("{name}_seed{seed}")
}

pub fn write_effective_config(dir: &Path, cfg: &ExperimentConfig) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("effective_config.toml");
    fs::write(&path, cfg.to_toml()?)?;
    Ok(path)
}

/// Writes metrics, waypoints, partition manifest, final checkpoint and
/// (if recorded) the edge list under `dir`.
pub fn write_run_outputs(dir: &Path, result: &RunResult) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = run_stem(result.policy, result.seed);
    let mut written = Vec::new();
    let mut emit = |suffix: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(format!("{stem}_{suffix}"));
        fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &result.metrics)?;
    emit("metrics.csv", buf)?;
    let mut buf = Vec::new();
    write_waypoints_csv(&mut buf, &result.waypoints)?;
    emit("waypoints.csv", buf)?;
    if !result.shards.is_empty() {
        let mut buf = Vec::new();
        write_manifest(&mut buf, &result.shards)?;
        emit("partition.csv", buf)?;
    }
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &result.final_mean)?;
    emit("final.mrsm", buf)?;
    if let Some(edges) = &result.edges {
        emit("edges.csv", edges.clone())?;
    }
    Ok(written)
}

/// Runs every `(policy, seed)` pair, in parallel across pairs.
pub fn run_many(
    cfg: &ExperimentConfig,
    task: &TaskData,
    policies: &[RunPolicy],
    seeds: &[u64],
) -> Result<Vec<RunResult>> {
    let mut seen = std::collections::HashSet::new();
    if let Some(&dup) = seeds.iter().find(|s| !seen.insert(**s)) {
        return Err(Error::DuplicateSeed(dup));
    }
    let jobs: Vec<(RunPolicy, u64)> = policies
        .iter()
        .flat_map(|&p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    jobs.par_iter()
        .map(|&(p, s)| {
            let r = run_experiment(cfg, task, p, s);
            if let Ok(r) = &r {
                info!("{p} seed {s}: final accuracy {:?}", r.final_accuracy());
            }
            r
        })
        .collect()
}
