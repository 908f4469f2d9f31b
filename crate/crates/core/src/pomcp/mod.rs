//! POMCP: search tree, simulations, backups and belief tracking.

pub mod belief;
pub mod search;
pub mod tree;

pub use belief::{advance_belief, FilterStats};
pub use search::{backup, discounted_returns, simulate_once, SearchConfig, SimStart};
pub use tree::{ucb1_action, NodeId, SearchTree};
