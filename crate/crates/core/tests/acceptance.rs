//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.
//!
//! The learning criteria need the Fashion-MNIST IDX files, looked up in
//! `$UAVMESH_FASHION_DIR` or `data/fashion-mnist` at the workspace root.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use uavmesh::experiment::config::DataConfig;
use uavmesh::experiment::sweep::mean_accuracy_curve;
use uavmesh::experiment::{
    aggregate_runs, run_experiment, sweep, write_metrics_csv, ExperimentConfig, FlComparison,
    RunPolicy, RunResult, TaskData,
};
use uavmesh::trajectory::TrajectoryPolicy;
use uavmesh::validate;

const SEED: u64 = 1;

struct Line {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn data_dir() -> PathBuf {
    std::env::var_os("UAVMESH_FASHION_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/fashion-mnist")
        })
}

fn bundled_config() -> uavmesh::Result<ExperimentConfig> {
    let path =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/paper_deployment.toml");
    let mut cfg = ExperimentConfig::load(&path)?;
    cfg.data = DataConfig::in_dir(&data_dir());
    Ok(cfg)
}

fn uav(p: TrajectoryPolicy) -> RunPolicy {
    RunPolicy::Uav(p)
}

const BASELINES: [TrajectoryPolicy; 3] = [
    TrajectoryPolicy::Barycenter,
    TrajectoryPolicy::ClusterMidpoints,
    TrajectoryPolicy::MaxConnectivity,
];

fn final_accuracy(runs: &[RunResult], p: RunPolicy) -> uavmesh::Result<f64> {
    Ok(mean_accuracy_curve(runs, p)?.last().map_or(0.0, |c| c.1))
}

fn accuracy_ordering(runs: &[RunResult]) -> uavmesh::Result<(bool, String)> {
    let prop = final_accuracy(runs, uav(TrajectoryPolicy::Proposed))?;
    let full = final_accuracy(runs, RunPolicy::FullyConnected)?;
    let mut ok = prop >= full - 0.05;
    let mut detail = format!("proposed {prop:.4} fully_connected {full:.4}");
    for b in BASELINES {
        let acc = final_accuracy(runs, uav(b))?;
        ok &= prop - acc >= 0.03;
        detail.push_str(&format!(" {b} {acc:.4}"));
    }
    Ok((ok, detail))
}

fn consensus_curve(runs: &[RunResult], p: RunPolicy) -> Vec<f64> {
    let name = p.to_string();
    aggregate_runs(runs)
        .into_iter()
        .filter(|r| r.policy == name)
        .map(|r| r.consensus_mean)
        .collect()
}

fn consensus_shrinks(runs: &[RunResult]) -> (bool, String) {
    let prop = consensus_curve(runs, uav(TrajectoryPolicy::Proposed));
    let last = prop.last().copied().unwrap_or(f64::NAN);
    let peak = prop.iter().copied().fold(0.0, f64::max);
    let ratio = last / peak;
    let mut ok = ratio <= 0.2;
    let mut detail = format!("proposed final {last:.3e} = {ratio:.3} x running max (limit 0.2)");
    for b in BASELINES {
        let other = consensus_curve(runs, uav(b))
            .last()
            .copied()
            .unwrap_or(f64::NAN);
        ok &= last < other;
        detail.push_str(&format!(" {b} {other:.3e}"));
    }
    (ok, detail)
}

fn rounds_to_federated(runs: &[RunResult]) -> uavmesh::Result<(bool, String)> {
    let cmp = FlComparison::from_runs(runs)?;
    let limit = 0.7 * cmp.total_rounds as f64;
    let ok = cmp.rounds_to_target.is_some_and(|r| r as f64 <= limit);
    let reached = cmp
        .rounds_to_target
        .map_or_else(|| "never".to_string(), |r| r.to_string());
    Ok((
        ok,
        format!(
            "target {:.4} reached at round {reached} (limit {limit:.0}), decentralized final {:.4}",
            cmp.target, cmp.decentralized_final
        ),
    ))
}

fn learning_lines(lines: &mut Vec<Line>) {
    let names = [
        "accuracy vs baselines",
        "consensus error",
        "rounds to federated target",
    ];
    let fail_all = |lines: &mut Vec<Line>, why: String| {
        for (k, name) in names.iter().enumerate() {
            lines.push(Line {
                id: k + 1,
                name,
                passed: false,
                detail: why.clone(),
            });
        }
    };
    let setup = bundled_config().and_then(|cfg| TaskData::load(&cfg).map(|t| (cfg, t)));
    let (cfg, task) = match setup {
        Ok(v) => v,
        Err(e) => return fail_all(lines, e.to_string()),
    };
    let policies = [
        uav(TrajectoryPolicy::Proposed),
        uav(TrajectoryPolicy::ClusterMidpoints),
        uav(TrajectoryPolicy::Barycenter),
        uav(TrajectoryPolicy::MaxConnectivity),
        RunPolicy::FullyConnected,
        uav(TrajectoryPolicy::FederatedPs),
    ];
    let start = Instant::now();
    let runs = match sweep(&cfg, &task, &policies, &cfg.seeds) {
        Ok(r) => r,
        Err(e) => return fail_all(lines, e.to_string()),
    };
    let took = format!(
        " [{} seeds, {:.0} s]",
        cfg.seeds.len(),
        start.elapsed().as_secs_f64()
    );
    let results = [
        accuracy_ordering(&runs),
        Ok(consensus_shrinks(&runs)),
        rounds_to_federated(&runs),
    ];
    for (k, (name, res)) in names.iter().zip(results).enumerate() {
        let (passed, detail) = res.unwrap_or_else(|e| (false, e.to_string()));
        lines.push(Line {
            id: k + 1,
            name,
            passed,
            detail: detail + &took,
        });
    }
}

fn check_line(
    id: usize,
    name: &'static str,
    checks: uavmesh::Result<Vec<validate::CheckOutcome>>,
    start: Instant,
) -> Line {
    match checks {
        Ok(cs) => Line {
            id,
            name,
            passed: cs.iter().all(|c| c.passed),
            detail: cs
                .iter()
                .map(|c| c.detail.as_str())
                .collect::<Vec<_>>()
                .join("; ")
                + &format!(" [{:.1} s]", start.elapsed().as_secs_f64()),
        },
        Err(e) => Line {
            id,
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn determinism() -> Line {
    let run_csv = || -> uavmesh::Result<Vec<u8>> {
        let cfg = bundled_config()?;
        let task = TaskData::load(&cfg)?;
        let r = run_experiment(&cfg, &task, uav(TrajectoryPolicy::Proposed), SEED)?;
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &r.metrics)?;
        Ok(buf)
    };
    let (passed, detail) = match (run_csv(), run_csv()) {
        (Ok(a), Ok(b)) => (
            a == b,
            format!(
                "two runs of proposed seed {SEED}: {} and {} bytes, identical: {}",
                a.len(),
                b.len(),
                a == b
            ),
        ),
        (Err(e), _) | (_, Err(e)) => (false, e.to_string()),
    };
    Line {
        id: 8,
        name: "determinism",
        passed,
        detail,
    }
}

fn main() -> ExitCode {
    let mut lines = Vec::new();
    learning_lines(&mut lines);

    let t = Instant::now();
    lines.push(check_line(
        4,
        "channel oracle",
        validate::channel_oracle(20, 100_000, SEED).map(|c| vec![c]),
        t,
    ));
    let t = Instant::now();
    lines.push(check_line(
        5,
        "mixing matrices",
        validate::mixing_suite(1000, SEED).map(|c| vec![c]),
        t,
    ));
    let t = Instant::now();
    let opt = validate::waypoint_gradient_check(100, SEED)
        .and_then(|g| validate::solver_recovery(SEED).map(|s| vec![g, s]));
    lines.push(check_line(6, "optimization checks", opt, t));
    let t = Instant::now();
    let dsgd = validate::dsgd_quadratic(23, 10, 500, SEED)
        .map(|d| vec![d, validate::sigmoid_bound(120_000)]);
    lines.push(check_line(7, "dsgd and sigmoid", dsgd, t));
    lines.push(determinism());

    for l in &lines {
        let status = if l.passed { "PASS" } else { "FAIL" };
        println!("criterion {} {status}  {:<27} {}", l.id, l.name, l.detail);
    }
    let failed = lines.iter().filter(|l| !l.passed).count();
    println!(
        "acceptance: {} of {} criteria passed",
        lines.len() - failed,
        lines.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
