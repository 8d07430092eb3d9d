//! bt-forge: synthesis of behavior trees for a deterministic grid platformer.
//!
//! The pipeline grows a tree incrementally: a greedy single-action search
//! proposes the next behavior, a genetic-programming layer takes over when
//! greed fails, condition flips observed over a moving window become the
//! trigger guard for each increment, and a final anti-bloat pass deletes
//! every subtree whose removal does not cost fitness.

pub mod bloat;
pub mod bt;
pub mod cli;
pub mod env;
pub mod genetics;
pub mod learning;
pub mod text;

pub use bt::{ActionId, BehaviorTree, ConditionId, NodeKind, Predicate, Status};
