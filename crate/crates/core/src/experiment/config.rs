use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::connectivity::ground_probability_matrix;
use crate::data::PartitionSpec;
use crate::geometry::{
    AirChannelParams, Arena, Deployment, GroundChannelParams, ObstacleSegment, Point2, Position3,
};
use crate::learning::{LrSchedule, MlpConfig};
use crate::trajectory::{barycenter, PlanningContext, SolverConfig, TrajectoryPolicy};
use crate::{Error, Result};

/// Hand-placed 23-node layout on a 60 × 30 m field: two groups in the upper
/// half and a bottom group split by a 35 dB wall.
pub const DEFAULT_POSITIONS: [[f64; 2]; 23] = [
    [9.0, 18.0],
    [12.0, 17.0],
    [15.0, 18.0],
    [10.0, 21.0],
    [14.0, 21.0],
    [9.0, 24.0],
    [12.0, 25.0],
    [15.0, 24.0],
    [51.0, 18.0],
    [48.0, 17.0],
    [45.0, 18.0],
    [50.0, 21.0],
    [46.0, 21.0],
    [51.0, 24.0],
    [48.0, 25.0],
    [18.0, 3.0],
    [21.0, 1.0],
    [24.0, 3.0],
    [26.0, 1.0],
    [34.0, 1.0],
    [36.0, 3.0],
    [39.0, 1.0],
    [42.0, 3.0],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub attenuation_db: f64,
}

/// Nodes scattered uniformly in a disc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub center: [f64; 2],
    pub radius: f64,
    pub count: usize,
}

/// Random clustered layout, drawn from its own seed so it stays fixed
/// across run seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub clusters: Vec<ClusterSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentConfig {
    /// `[x_min, x_max, y_min, y_max]`.
    pub arena: [f64; 4],
    /// Explicit `[x, y]` positions; ignored when `generator` is set.
    pub positions: Vec<[f64; 2]>,
    /// Ground elevation of every node.
    pub elevation: f64,
    pub obstacles: Vec<ObstacleConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        Self {
            arena: [0.0, 60.0, 0.0, 30.0],
            positions: DEFAULT_POSITIONS.to_vec(),
            elevation: 0.0,
            obstacles: vec![ObstacleConfig {
                a: [30.0, 0.0],
                b: [30.0, 12.0],
                attenuation_db: 35.0,
            }],
            generator: None,
        }
    }
}

impl DeploymentConfig {
    fn horizontal_positions(&self, arena: &Arena) -> Result<Vec<Point2>> {
        let Some(gen) = &self.generator else {
            return Ok(self
                .positions
                .iter()
                .map(|&[x, y]| Point2::new(x, y))
                .collect());
        };
        let mut rng = ChaCha8Rng::seed_from_u64(gen.seed);
        let mut out = Vec::new();
        for (k, c) in gen.clusters.iter().enumerate() {
            if !(c.radius >= 0.0 && c.radius.is_finite()) {
                return Err(Error::config(
                    format!("deployment.generator.clusters[{k}].radius"),
                    "must be finite and >= 0",
                ));
            }
            for _ in 0..c.count {
                // uniform in the disc via the square-root radius trick
                let r = c.radius * rng.random::<f64>().sqrt();
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                out.push(arena.clamp(Point2::new(
                    c.center[0] + r * phi.cos(),
                    c.center[1] + r * phi.sin(),
                )));
            }
        }
        Ok(out)
    }

    pub fn build(&self) -> Result<Deployment> {
        let [x0, x1, y0, y1] = self.arena;
        let arena = Arena::new(x0, x1, y0, y1)
            .map_err(|e| Error::config("deployment.arena", e.to_string()))?;
        let ground = self
            .horizontal_positions(&arena)?
            .into_iter()
            .map(|p| Position3::new(p.x, p.y, self.elevation))
            .collect();
        let obstacles = self
            .obstacles
            .iter()
            .enumerate()
            .map(|(k, o)| {
                ObstacleSegment::new(
                    Point2::new(o.a[0], o.a[1]),
                    Point2::new(o.b[0], o.b[1]),
                    o.attenuation_db,
                )
                .map_err(|e| Error::config(format!("deployment.obstacles[{k}]"), e.to_string()))
            })
            .collect::<Result<_>>()?;
        Deployment::new(ground, obstacles, arena)
            .map_err(|e| Error::config("deployment.positions", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UavConfig {
    pub altitude: f64,
    /// Meters per round; `inf` teleports.
    pub speed: f64,
    pub dwell_rounds: usize,
    /// Starting point; the ground barycenter when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_position: Option<[f64; 2]>,
}

impl Default for UavConfig {
    fn default() -> Self {
        Self {
            altitude: 10.0,
            speed: 5.0,
            dwell_rounds: 20,
            initial_position: None,
        }
    }
}

/// What drives the topology of a run: a UAV policy over the sampled
/// channels, or the all-to-all reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunPolicy {
    Uav(TrajectoryPolicy),
    FullyConnected,
}

impl RunPolicy {
    pub fn is_federated(&self) -> bool {
        matches!(self, RunPolicy::Uav(p) if p.is_federated())
    }
}

impl fmt::Display for RunPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunPolicy::Uav(p) => p.fmt(f),
            RunPolicy::FullyConnected => f.write_str("fully_connected"),
        }
    }
}

impl FromStr for RunPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "fully_connected" {
            Ok(RunPolicy::FullyConnected)
        } else {
            s.parse().map(RunPolicy::Uav)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub name: String,
    /// Forgetting factor of the link-activity rates.
    pub gamma: f64,
    pub kmeans_k: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            name: "proposed".into(),
            gamma: 0.9,
            kmeans_k: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Perceptron on the image dataset.
    #[default]
    Mlp,
    /// `½‖θ − c_i‖²` per node with random centers; no dataset needed.
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub task: TaskKind,
    pub rounds: usize,
    pub lr_base: f64,
    pub lr_decay: f64,
    pub straggle_prob: f64,
    pub staleness_cap: usize,
    pub eval_every: usize,
    /// Test samples used at intermediate evaluations; the final round uses
    /// the whole test set.
    pub eval_subset: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minibatch: Option<usize>,
    pub quadratic_dim: usize,
    pub quadratic_spread: f64,
    pub noise_std: f64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Mlp,
            rounds: 500,
            lr_base: 0.1,
            lr_decay: 0.995,
            straggle_prob: 0.0,
            staleness_cap: 5,
            eval_every: 5,
            eval_subset: 2000,
            minibatch: None,
            quadratic_dim: 10,
            quadratic_spread: 1.0,
            noise_std: 0.0,
        }
    }
}

impl LearningConfig {
    pub fn lr(&self) -> LrSchedule {
        LrSchedule {
            base: self.lr_base,
            decay: self.lr_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self::in_dir(Path::new("data/fashion-mnist"))
    }
}

impl DataConfig {
    /// The standard IDX file names under `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            train_images: dir.join("train-images-idx3-ubyte.gz"),
            train_labels: dir.join("train-labels-idx1-ubyte.gz"),
            test_images: dir.join("t10k-images-idx3-ubyte.gz"),
            test_labels: dir.join("t10k-labels-idx1-ubyte.gz"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Also write a per-round edge list (large).
    pub edges: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub deployment: DeploymentConfig,
    pub ground: GroundChannelParams,
    pub air: AirChannelParams,
    pub uav: UavConfig,
    pub policy: PolicyConfig,
    pub solver: SolverConfig,
    pub learning: LearningConfig,
    pub model: MlpConfig,
    pub partition: PartitionSpec,
    pub data: DataConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3, 4, 5],
            output_dir: PathBuf::from("out"),
            deployment: DeploymentConfig::default(),
            ground: GroundChannelParams::default(),
            air: AirChannelParams::default(),
            uav: UavConfig::default(),
            policy: PolicyConfig::default(),
            solver: SolverConfig::default(),
            learning: LearningConfig::default(),
            model: MlpConfig::default(),
            partition: PartitionSpec::default(),
            data: DataConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn field(name: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::InvalidParameter { name, reason } => Error::config(name, reason),
        other => Error::config(name, other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: PathBuf::from("<string>"),
            reason: e.to_string(),
        })
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigParse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::ConfigParse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every field after defaults, as TOML.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<config>", e.to_string()))
    }

    pub fn run_policy(&self) -> Result<RunPolicy> {
        self.policy.name.parse().map_err(|_| {
            Error::config(
                "policy.name",
                format!("unknown policy `{}`", self.policy.name),
            )
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must list at least one seed"));
        }
        let mut seen = HashSet::new();
        if let Some(&dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(Error::DuplicateSeed(dup));
        }
        let dep = self.deployment.build()?;
        if dep.len() < 2 {
            return Err(Error::config(
                "deployment.positions",
                "need at least two nodes",
            ));
        }
        self.ground.validate().map_err(field("ground"))?;
        self.air.validate().map_err(field("air"))?;
        ground_probability_matrix(&dep, &self.ground).map_err(field("deployment.positions"))?;

        let u = &self.uav;
        if !(u.altitude.is_finite() && u.altitude > self.deployment.elevation) {
            return Err(Error::config(
                "uav.altitude",
                "must be finite and above every node",
            ));
        }
        if !(u.speed > 0.0) {
            return Err(Error::config("uav.speed", "must be > 0 (inf teleports)"));
        }
        if u.dwell_rounds == 0 {
            return Err(Error::config("uav.dwell_rounds", "must be >= 1"));
        }
        if let Some([x, y]) = u.initial_position {
            if !dep.arena().contains(Point2::new(x, y)) {
                return Err(Error::config(
                    "uav.initial_position",
                    "must lie inside the arena",
                ));
            }
        }

        self.run_policy()?;
        if !(self.policy.gamma > 0.0 && self.policy.gamma < 1.0) {
            return Err(Error::config("policy.gamma", "must lie in (0, 1)"));
        }
        if self.policy.kmeans_k < 2 || self.policy.kmeans_k > dep.len() {
            return Err(Error::config(
                "policy.kmeans_k",
                format!("must lie in 2..={}", dep.len()),
            ));
        }
        self.solver.validate().map_err(field("solver"))?;

        let l = &self.learning;
        if l.rounds == 0 {
            return Err(Error::config("learning.rounds", "must be >= 1"));
        }
        if l.eval_every == 0 {
            return Err(Error::config("learning.eval_every", "must be >= 1"));
        }
        if l.eval_subset == 0 {
            return Err(Error::config("learning.eval_subset", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&l.straggle_prob) {
            return Err(Error::config(
                "learning.straggle_prob",
                "must lie in [0, 1]",
            ));
        }
        self.learning.lr().validate()?;
        if l.minibatch == Some(0) {
            return Err(Error::config("learning.minibatch", "must be >= 1"));
        }
        if l.task == TaskKind::Quadratic && l.quadratic_dim == 0 {
            return Err(Error::config("learning.quadratic_dim", "must be >= 1"));
        }
        if !(l.noise_std >= 0.0 && l.noise_std.is_finite()) {
            return Err(Error::config(
                "learning.noise_std",
                "must be finite and >= 0",
            ));
        }
        if !(l.quadratic_spread >= 0.0 && l.quadratic_spread.is_finite()) {
            return Err(Error::config(
                "learning.quadratic_spread",
                "must be finite and >= 0",
            ));
        }
        self.model.validate()?;
        if self.partition.per_node == 0 {
            return Err(Error::config("partition.per_node", "must be >= 1"));
        }
        Ok(())
    }

    pub fn deployment(&self) -> Result<Deployment> {
        self.deployment.build()
    }

    /// Everything the UAV controller needs, with channel expectations
    /// precomputed.
    pub fn planning_context(&self) -> Result<PlanningContext> {
        let deployment = self.deployment.build()?;
        let ground_probs = ground_probability_matrix(&deployment, &self.ground)?;
        let initial_position = match self.uav.initial_position {
            Some([x, y]) => Point2::new(x, y),
            None => barycenter(&deployment.horizontal_positions()),
        };
        Ok(PlanningContext {
            ground_probs,
            air: self.air,
            threshold_db: self.ground.threshold_db,
            altitude: self.uav.altitude,
            speed: self.uav.speed,
            dwell_rounds: self.uav.dwell_rounds,
            gamma: self.policy.gamma,
            solver: self.solver,
            kmeans_k: self.policy.kmeans_k,
            initial_position,
            deployment,
        })
    }
}
