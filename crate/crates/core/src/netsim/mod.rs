//! Discrete-event kernel and flooding gossip over a random peer graph.

pub mod gossip;
pub mod queue;
pub mod topology;

pub use gossip::{flood, Dedup, FloodTrace, LatencyModel, Message, MessageKind};
pub use queue::{from_seconds, to_seconds, EventQueue, SimTime};
pub use topology::{build_topology, Topology, TopologyError};
