use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use uavmesh::experiment::config::DataConfig;
use uavmesh::experiment::{
    aggregate_runs, compare_fl, run_experiment, run_stem, sweep, trace_waypoints,
    write_effective_config, write_run_outputs, write_sweep_csv, write_waypoints_csv,
    ExperimentConfig, RunPolicy, RunResult, TaskData,
};
use uavmesh::validate;
use uavmesh::{Error, Result};

#[derive(Parser)]
#[command(
    name = "uavmesh",
    version,
    about = "UAV-relayed decentralized learning simulator"
)]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory holding the four IDX files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// One training run.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: Option<String>,
        /// Defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Several policies over several seeds, aggregated per round.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Comma-separated; `static:x,y` keeps its coordinates together.
        #[arg(
            long,
            default_value = "proposed,cluster_midpoints,barycenter,max_connectivity,fully_connected"
        )]
        policies: String,
    },
    /// UAV trajectory only, printed as CSV.
    Waypoints {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Self-checks against reference computations.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Decentralized scheme against the UAV parameter-server baseline.
    CompareFl {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(dir) = &common.out {
        cfg.output_dir = dir.clone();
    }
    if let Some(dir) = &common.data_dir {
        cfg.data = DataConfig::in_dir(dir);
    }
    Ok(cfg)
}

fn parse_policy(name: &str) -> Result<RunPolicy> {
    name.parse().map_err(|_| Error::Config {
        field: "policy".into(),
        reason: format!("unknown policy `{name}`"),
    })
}

fn parse_policy_list(list: &str) -> Result<Vec<RunPolicy>> {
    let mut names: Vec<String> = Vec::new();
    for tok in list.split(',').map(str::trim) {
        match names.last_mut() {
            Some(last) if last.starts_with("static:") && !last.contains(',') => {
                last.push(',');
                last.push_str(tok);
            }
            _ => names.push(tok.to_string()),
        }
    }
    names.iter().map(|n| parse_policy(n)).collect()
}

fn write_outputs(cfg: &ExperimentConfig, runs: &[RunResult]) -> Result<()> {
    write_effective_config(&cfg.output_dir, cfg)?;
    for r in runs {
        write_run_outputs(&cfg.output_dir, r)?;
    }
    Ok(())
}

fn fmt_acc(a: Option<f64>) -> String {
    a.map_or_else(|| "-".into(), |a| format!("{a:.4}"))
}

fn cmd_run(common: Common, policy: Option<String>, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if let Some(p) = policy {
        parse_policy(&p)?;
        cfg.policy.name = p;
    }
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    cfg.validate()?;
    let policy = cfg.run_policy()?;
    let seed = cfg.seeds[0];
    let task = TaskData::load(&cfg)?;
    let result = run_experiment(&cfg, &task, policy, seed)?;
    write_outputs(&cfg, std::slice::from_ref(&result))?;
    println!(
        "{} rounds={} final_accuracy={} consensus_error={:.3e} out={}",
        run_stem(policy, seed),
        cfg.learning.rounds,
        fmt_acc(result.final_accuracy()),
        result.final_consensus_error(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn cmd_sweep(common: Common, seeds: Option<Vec<u64>>, policies: String) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    cfg.validate()?;
    let policies = parse_policy_list(&policies)?;
    let task = TaskData::load(&cfg)?;
    let runs = sweep(&cfg, &task, &policies, &cfg.seeds)?;
    write_outputs(&cfg, &runs)?;
    let rows = aggregate_runs(&runs);
    let path = cfg.output_dir.join("sweep.csv");
    write_sweep_csv(fs::File::create(&path)?, &rows)?;
    println!(
        "{:<20} {:>10} {:>10} {:>12}",
        "policy", "acc_mean", "acc_std", "consensus"
    );
    let last = rows.iter().map(|r| r.round).max().unwrap_or(0);
    for r in rows.iter().filter(|r| r.round == last) {
        println!(
            "{:<20} {:>10} {:>10} {:>12.3e}",
            r.policy,
            fmt_acc(r.accuracy_mean),
            fmt_acc(r.accuracy_std),
            r.consensus_mean
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_waypoints(common: Common, policy: Option<String>, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if let Some(p) = policy {
        cfg.policy.name = p;
    }
    cfg.validate()?;
    let policy = match cfg.run_policy()? {
        RunPolicy::Uav(p) => p,
        RunPolicy::FullyConnected => {
            return Err(Error::Config {
                field: "policy".into(),
                reason: "fully_connected has no trajectory".into(),
            })
        }
    };
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let rows = trace_waypoints(&cfg, policy, seed)?;
    write_waypoints_csv(std::io::stdout().lock(), &rows)?;
    if common.out.is_some() {
        fs::create_dir_all(&cfg.output_dir)?;
        let path = cfg.output_dir.join(format!(
            "{}_waypoints.csv",
            run_stem(RunPolicy::Uav(policy), seed)
        ));
        write_waypoints_csv(fs::File::create(&path)?, &rows)?;
        write_effective_config(&cfg.output_dir, &cfg)?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_validate(seed: u64) -> Result<bool> {
    let checks = validate::run_all(seed)?;
    println!("{:<6}{:<29}detail", "status", "check");
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!(
        "{} of {} checks passed",
        checks.len() - failed,
        checks.len()
    );
    Ok(failed == 0)
}

fn cmd_compare_fl(common: Common, seeds: Option<Vec<u64>>) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    cfg.validate()?;
    let task = TaskData::load(&cfg)?;
    let (cmp, runs) = compare_fl(&cfg, &task, &cfg.seeds)?;
    write_outputs(&cfg, &runs)?;
    let path = cfg.output_dir.join("fl_comparison.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["round", "decentralized_accuracy", "federated_accuracy"])?;
    for ((r, d), (_, f)) in cmp.decentralized.iter().zip(&cmp.federated) {
        w.write_record([r.to_string(), format!("{d:.9}"), format!("{f:.9}")])?;
    }
    w.flush()?;
    let reached = cmp
        .rounds_to_target
        .map_or_else(|| "never".into(), |r| r.to_string());
    println!(
        "target={:.4} decentralized_final={:.4} rounds_to_target={} total_rounds={} ratio={}",
        cmp.target,
        cmp.decentralized_final,
        reached,
        cmp.total_rounds,
        cmp.rounds_to_target.map_or_else(
            || "-".into(),
            |r| format!("{:.3}", r as f64 / cmp.total_rounds as f64)
        )
    );
    println!("wrote {}", path.display());
    Ok(())
}

/// One JSON object on stderr, e.g. `{"error":"config","message":"..."}`.
fn report(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            report(
                "usage",
                msg.lines()
                    .next()
                    .unwrap_or_default()
                    .trim_start_matches("error: "),
            );
            return ExitCode::from(2);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match cli.command {
        Command::Run {
            common,
            policy,
            seed,
        } => cmd_run(common, policy, seed).map(|_| true),
        Command::Sweep {
            common,
            seeds,
            policies,
        } => cmd_sweep(common, seeds, policies).map(|_| true),
        Command::Waypoints {
            common,
            policy,
            seed,
        } => cmd_waypoints(common, policy, seed).map(|_| true),
        Command::Validate { seed } => cmd_validate(seed),
        Command::CompareFl { common, seeds } => cmd_compare_fl(common, seeds).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            report("validation", "one or more checks failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            report(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
