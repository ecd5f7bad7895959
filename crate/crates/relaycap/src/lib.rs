//! Capacity analysis and coding simulation for deterministic relay networks
//! whose channels depend on a random, destination-known state.
//!
//! The crate computes the min-cut expected-rank capacity of linear
//! finite-field fading networks (exactly or by Monte Carlo), evaluates
//! cut-set entropy bounds and achievable rates for general deterministic
//! networks, unfolds arbitrary networks into layered time-extended ones, and
//! simulates the block-Markov relaying scheme those rates come from. The
//! `relaycap` binary exposes all of it over a line-oriented network file
//! format.

pub mod capacity;
pub mod cli;
pub mod cut;
pub mod field;
pub mod info;
pub mod netfile;
pub mod network;
pub mod parallel;
pub mod rng;
pub mod sim;
pub mod unfold;

#[cfg(test)]
pub(crate) mod fixtures;

pub use capacity::{CapacityReport, DistSearchConfig, RankMethod, SearchMode};
pub use cut::{enumerate_cuts, Cut};
pub use field::{Field, FfMatrix};
pub use info::{JointTable, Pmf};
pub use network::{Layering, Mode, Network, StateModel};
