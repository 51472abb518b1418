//! Node state machines for the protocol suite, each with a driver that runs
//! it on a topology and collects per-node outputs.

pub mod bfs;
mod common;
pub mod degree;
pub mod extremum;
pub mod leader;
pub mod max;
pub mod mis;
pub mod params;
pub mod sl;
pub mod size;

pub use common::{Context, RunConfig, RunMeta};
pub use params::Params;
