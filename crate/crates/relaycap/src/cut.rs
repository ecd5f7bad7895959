//! Cut enumeration, boundary sets, and transfer-matrix assembly.
//!
//! A cut for destination `d` is a node set containing the source and
//! excluding `d`. The sender boundary lists the nodes inside the cut with an
//! edge leaving it; the receiver boundary lists the nodes outside with an
//! edge arriving from inside. For linear networks the crossing coefficients
//! form the transfer matrix: row per receiver, column per sender, entry
//! `S_{u,v}` where the edge exists and 0 elsewhere.

use crate::field::FfMatrix;
use crate::network::{Network, SOURCE};
use thiserror::Error;

/// Default ceiling on node count for exhaustive cut enumeration.
pub const ENUM_NODE_CAP: usize = 26;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CutError {
    #[error(
        "{nodes} nodes exceed the enumeration cap of {cap}; Monte Carlo sampling \
         still works but exhaustive min-cut search is infeasible"
    )]
    TooManyNodes { nodes: usize, cap: usize },
    #[error("cut must contain the source")]
    SourceNotInCut,
    #[error("cut must exclude destination {0}")]
    DestinationInCut(usize),
    #[error("state assignment covers {got} edges, network has {expected}")]
    MissingStateComponent { expected: usize, got: usize },
}

/// A cut with precomputed boundaries. Membership is stored as a bitmask over
/// node ids (bit `v - 1` set when `v` is inside).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cut {
    pub destination: usize,
    mask: u64,
    senders: Vec<usize>,
    receivers: Vec<usize>,
    /// Crossing edges as (edge index, sender position, receiver position).
    crossing: Vec<(usize, usize, usize)>,
}

impl Cut {
    /// Builds the cut for `members` (which must contain the source and
    /// exclude `destination`) and computes its boundaries.
    pub fn new(
        net: &Network,
        destination: usize,
        members: impl IntoIterator<Item = usize>,
    ) -> Result<Self, CutError> {
        let mut mask = 0u64;
        for v in members {
            mask |= 1 << (v - 1);
        }
        Self::from_mask(net, destination, mask)
    }

    pub fn from_mask(net: &Network, destination: usize, mask: u64) -> Result<Self, CutError> {
        if mask & (1 << (SOURCE - 1)) == 0 {
            return Err(CutError::SourceNotInCut);
        }
        if mask & (1 << (destination - 1)) != 0 {
            return Err(CutError::DestinationInCut(destination));
        }
        let inside = |v: usize| mask & (1 << (v - 1)) != 0;
        let mut senders = Vec::new();
        let mut receivers = Vec::new();
        for (u, v) in net.edges().iter().copied() {
            if inside(u) && !inside(v) {
                if !senders.contains(&u) {
                    senders.push(u);
                }
                if !receivers.contains(&v) {
                    receivers.push(v);
                }
            }
        }
        senders.sort_unstable();
        receivers.sort_unstable();
        let mut crossing = Vec::new();
        for (e, &(u, v)) in net.edges().iter().enumerate() {
            if inside(u) && !inside(v) {
                let col = senders.binary_search(&u).expect("sender recorded");
                let row = receivers.binary_search(&v).expect("receiver recorded");
                crossing.push((e, col, row));
            }
        }
        Ok(Cut { destination, mask, senders, receivers, crossing })
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn contains(&self, v: usize) -> bool {
        self.mask & (1 << (v - 1)) != 0
    }

    /// Member node ids, ascending.
    pub fn members(&self) -> Vec<usize> {
        (0..64)
            .filter(|b| self.mask & (1u64 << b) != 0)
            .map(|b| b + 1)
            .collect()
    }

    /// Sender boundary: in-cut endpoints of crossing edges, ascending.
    pub fn senders(&self) -> &[usize] {
        &self.senders
    }

    /// Receiver boundary: out-of-cut endpoints of crossing edges, ascending.
    pub fn receivers(&self) -> &[usize] {
        &self.receivers
    }

    /// Crossing edges as (edge index, sender column, receiver row).
    pub fn crossing(&self) -> &[(usize, usize, usize)] {
        &self.crossing
    }

    /// Assembles the transfer matrix for a full per-edge state assignment.
    /// Dimensions: receivers x senders.
    pub fn transfer_matrix(&self, net: &Network, states: &[u32]) -> Result<FfMatrix, CutError> {
        let field = net.field().expect("transfer matrices need a linear network");
        if states.len() != net.edges().len() {
            return Err(CutError::MissingStateComponent {
                expected: net.edges().len(),
                got: states.len(),
            });
        }
        let mut m = FfMatrix::zero(field, self.receivers.len(), self.senders.len());
        for &(e, col, row) in &self.crossing {
            m.set(row, col, states[e]);
        }
        Ok(m)
    }

    /// Renders members as `{1,3,4}`.
    pub fn render_members(&self) -> String {
        let ids: Vec<String> = self.members().iter().map(|v| v.to_string()).collect();
        format!("{{{}}}", ids.join(","))
    }
}

/// Enumerates all `2^(n-2)` cuts for `destination` in a canonical order:
/// ascending bitmask over the non-source, non-destination nodes.
pub fn enumerate_cuts(net: &Network, destination: usize) -> Result<Vec<Cut>, CutError> {
    enumerate_cuts_capped(net, destination, ENUM_NODE_CAP)
}

pub fn enumerate_cuts_capped(
    net: &Network,
    destination: usize,
    cap: usize,
) -> Result<Vec<Cut>, CutError> {
    let n = net.node_count();
    if n > cap {
        return Err(CutError::TooManyNodes { nodes: n, cap });
    }
    let free: Vec<usize> = (1..=n).filter(|&v| v != SOURCE && v != destination).collect();
    let mut cuts = Vec::with_capacity(1 << free.len());
    for code in 0u64..(1 << free.len()) {
        let mut mask = 1u64 << (SOURCE - 1);
        for (bit, &v) in free.iter().enumerate() {
            if code & (1 << bit) != 0 {
                mask |= 1 << (v - 1);
            }
        }
        cuts.push(Cut::from_mask(net, destination, mask)?);
    }
    Ok(cuts)
}
