//! Model-search planning under a training budget.
//!
//! The planner proposes hyperparameter configurations with a pluggable search
//! strategy, trains them in batches that share each pass over the training
//! data, and stops training models whose validation error falls too far
//! behind the best one seen so far.

pub mod error;
pub mod bandit;
pub mod cli;
pub mod data;
pub mod exec;
pub mod paq;
pub mod plan;
pub mod search;
pub mod space;
pub mod train;

pub use error::{Error, Result};
