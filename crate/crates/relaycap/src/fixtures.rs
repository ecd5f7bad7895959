//! Small networks shared across unit tests.

use crate::field::Field;
use crate::info::Pmf;
use crate::network::{Mode, Network, StateModel};

/// The four-node diamond: 1 -> {2, 3} -> 4, uniform coefficient pmfs.
pub(crate) fn diamond(field: Field) -> Network {
    let edges = vec![(1, 2), (1, 3), (2, 4), (3, 4)];
    let pmfs = edges.iter().map(|_| Pmf::uniform(field.order() as usize)).collect();
    Network::new(4, edges, [4], Mode::Linear { field }, StateModel::PerEdgeIid(pmfs))
}

/// The diamond with Bernoulli on/off coefficients: each edge carries 1 with
/// probability `p_on`, else 0.
pub(crate) fn diamond_bernoulli(field: Field, p_on: f64) -> Network {
    let edges = vec![(1, 2), (1, 3), (2, 4), (3, 4)];
    Network::erasure(4, edges, [4], &[1.0 - p_on; 4], field).unwrap()
}

/// The erasure example network: 1 -> 3, 2 -> 3, 2 -> 4, 3 -> 4, with node 2 a
/// free transmitter and destination 4. All links share one erasure
/// probability.
pub(crate) fn fig1(field: Field, eps: f64) -> Network {
    let edges = vec![(1, 3), (2, 3), (2, 4), (3, 4)];
    Network::erasure(4, edges, [4], &[eps; 4], field).unwrap()
}
