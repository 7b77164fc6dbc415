//! Asynchronous decentralized SGD: local gradient steps with stragglers and
//! stale gradients, Metropolis gossip, and the parameter-server variant.

pub mod checkpoint;
pub mod federated;
pub mod mixing;
pub mod mlp;
pub mod node;
pub mod oracle;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use federated::{aggregate_uploads, federated_round};
pub use mixing::{consensus_error, mean_estimate, metropolis_weights, mix, MixingMatrix};
pub use mlp::{Activation, MlpConfig};
pub use node::{draw_stragglers, local_updates, LrSchedule, NodeState};
pub use oracle::{GradientOracle, MlpOracle, OracleBounds, QuadraticOracle};
