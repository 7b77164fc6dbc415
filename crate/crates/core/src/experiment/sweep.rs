use std::collections::BTreeMap;
use std::io::Write;

use super::config::{ExperimentConfig, RunPolicy};
use super::runner::{run_many, RunResult, TaskData};
use crate::trajectory::TrajectoryPolicy;
use crate::{Error, Result};

/// Across-seed statistics of one evaluation round for one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub round: usize,
    pub policy: String,
    pub n_seeds: usize,
    pub accuracy_mean: Option<f64>,
    pub accuracy_std: Option<f64>,
    pub consensus_mean: f64,
    pub consensus_std: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Groups runs by policy and round, in policy order of first appearance.
pub fn aggregate_runs(results: &[RunResult]) -> Vec<SweepRow> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<(usize, usize), Vec<(Option<f64>, f64)>> = BTreeMap::new();
    for r in results {
        let name = r.policy.to_string();
        let k = order.iter().position(|p| *p == name).unwrap_or_else(|| {
            order.push(name);
            order.len() - 1
        });
        for m in &r.metrics {
            groups
                .entry((k, m.round))
                .or_default()
                .push((m.test_accuracy_mean_estimate, m.consensus_error));
        }
    }
    groups
        .into_iter()
        .map(|((k, round), vals)| {
            let acc: Option<Vec<f64>> = vals.iter().map(|v| v.0).collect();
            let cons: Vec<f64> = vals.iter().map(|v| v.1).collect();
            let acc = acc.map(|a| mean_std(&a));
            let (cm, cs) = mean_std(&cons);
            SweepRow {
                round,
                policy: order[k].clone(),
                n_seeds: vals.len(),
                accuracy_mean: acc.map(|a| a.0),
                accuracy_std: acc.map(|a| a.1),
                consensus_mean: cm,
                consensus_std: cs,
            }
        })
        .collect()
}

pub fn sweep(
    cfg: &ExperimentConfig,
    task: &TaskData,
    policies: &[RunPolicy],
    seeds: &[u64],
) -> Result<Vec<RunResult>> {
    if seeds.is_empty() {
        return Err(Error::config("seeds", "must list at least one seed"));
    }
    run_many(cfg, task, policies, seeds)
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "round",
        "policy",
        "n_seeds",
        "accuracy_mean",
        "accuracy_std",
        "consensus_error_mean",
        "consensus_error_std",
    ])?;
    for r in rows {
        out.write_record([
            r.round.to_string(),
            r.policy.clone(),
            r.n_seeds.to_string(),
            opt(r.accuracy_mean),
            opt(r.accuracy_std),
            format!("{:.9e}", r.consensus_mean),
            format!("{:.9e}", r.consensus_std),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Seed-averaged accuracy curve `(round, mean accuracy)` of one policy.
pub fn mean_accuracy_curve(results: &[RunResult], policy: RunPolicy) -> Result<Vec<(usize, f64)>> {
    let runs: Vec<&RunResult> = results.iter().filter(|r| r.policy == policy).collect();
    let rows = aggregate_runs(&runs.into_iter().cloned().collect::<Vec<_>>());
    rows.into_iter()
        .map(|r| {
            r.accuracy_mean
                .map(|a| (r.round, a))
                .ok_or_else(|| Error::config("learning.task", "accuracy needs a test set"))
        })
        .collect()
}

/// First round at which `curve` reaches `target`.
pub fn rounds_to_target(curve: &[(usize, f64)], target: f64) -> Option<usize> {
    curve.iter().find(|(_, a)| *a >= target).map(|(r, _)| *r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlComparison {
    /// Seed-averaged final accuracy of the parameter-server run.
    pub target: f64,
    pub decentralized_final: f64,
    pub rounds_to_target: Option<usize>,
    pub total_rounds: usize,
    pub decentralized: Vec<(usize, f64)>,
    pub federated: Vec<(usize, f64)>,
}

impl FlComparison {
    pub fn from_runs(results: &[RunResult]) -> Result<Self> {
        let decentralized =
            mean_accuracy_curve(results, RunPolicy::Uav(TrajectoryPolicy::Proposed))?;
        let federated =
            mean_accuracy_curve(results, RunPolicy::Uav(TrajectoryPolicy::FederatedPs))?;
        let (Some(&(total_rounds, target)), Some(&(_, decentralized_final))) =
            (federated.last(), decentralized.last())
        else {
            return Err(Error::config(
                "seeds",
                "comparison needs runs of both policies",
            ));
        };
        Ok(Self {
            target,
            decentralized_final,
            rounds_to_target: rounds_to_target(&decentralized, target),
            total_rounds,
            decentralized,
            federated,
        })
    }
}

/// Proposed decentralized scheme against the UAV-as-server baseline.
pub fn compare_fl(
    cfg: &ExperimentConfig,
    task: &TaskData,
    seeds: &[u64],
) -> Result<(FlComparison, Vec<RunResult>)> {
    let policies = [
        RunPolicy::Uav(TrajectoryPolicy::Proposed),
        RunPolicy::Uav(TrajectoryPolicy::FederatedPs),
    ];
    let runs = sweep(cfg, task, &policies, seeds)?;
    Ok((FlComparison::from_runs(&runs)?, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::runner::MetricsRecord;

    fn run(policy: RunPolicy, seed: u64, acc: &[f64]) -> RunResult {
        RunResult {
            policy,
            seed,
            metrics: acc
                .iter()
                .enumerate()
                .map(|(k, &a)| MetricsRecord {
                    round: 5 * (k + 1),
                    policy: policy.to_string(),
                    seed,
                    test_accuracy_mean_estimate: Some(a),
                    consensus_error: a / 10.0,
                    n_ground_links: 0,
                    n_relay_links: 0,
                    uav_x: 0.0,
                    uav_y: 0.0,
                })
                .collect(),
            waypoints: vec![],
            shards: vec![],
            final_mean: vec![],
            edges: None,
        }
    }

    #[test]
    fn single_seed_has_zero_std() {
        let p = RunPolicy::FullyConnected;
        let rows = aggregate_runs(&[run(p, 1, &[0.2, 0.4])]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].accuracy_mean, Some(0.4));
        assert_eq!(rows[1].accuracy_std, Some(0.0));
        assert_eq!(rows[1].consensus_std, 0.0);
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
        let p = RunPolicy::FullyConnected;
        let rows = aggregate_runs(&[run(p, 1, &[0.2]), run(p, 2, &[0.4])]);
        assert!((rows[0].accuracy_mean.unwrap() - 0.3).abs() < 1e-15);
        assert!((rows[0].accuracy_std.unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rounds_to_target_on_averaged_curves() {
        let prop = RunPolicy::Uav(TrajectoryPolicy::Proposed);
        let fed = RunPolicy::Uav(TrajectoryPolicy::FederatedPs);
        let runs = [
            run(prop, 1, &[0.1, 0.5, 0.7, 0.8]),
            run(prop, 2, &[0.1, 0.3, 0.5, 0.8]),
            run(fed, 1, &[0.1, 0.2, 0.3, 0.5]),
            run(fed, 2, &[0.1, 0.2, 0.3, 0.6]),
        ];
        let cmp = FlComparison::from_runs(&runs).unwrap();
        assert!((cmp.target - 0.55).abs() < 1e-12);
        assert_eq!(cmp.rounds_to_target, Some(15));
        assert_eq!(cmp.total_rounds, 20);
        assert_eq!(rounds_to_target(&cmp.federated, 0.9), None);
    }
}
