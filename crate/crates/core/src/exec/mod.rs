//! Training execution: sharded gradients and the message-passing layer that
//! drives model builds.

mod actors;
mod partition;

pub use actors::{
    driver_run, Actor, DriverHandle, Envelope, ExecutorHandle, ExecutorKind, ExecutorOptions, ExecutorStats, Message,
    Reply, SearcherOptions, Trace, TraceEntry,
};
pub use partition::partitioned_gradient;
