//! The relay-network data model: nodes, directed edges, a source (always
//! node 1), destinations, a state model, and per-node channels.
//!
//! Two channel modes exist. `Linear` networks over GF(q) observe
//! `Y_v = sum over in-neighbors u of S_{u,v} * X_u`. `General` networks carry
//! an explicit lookup table per node mapping (inputs, local edge states) to
//! an observation symbol.

use crate::field::Field;
use crate::info::Pmf;
use crate::rng::Stream;
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Per-node alphabets in general mode: what the node transmits and what it
/// observes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeIo {
    pub input_size: usize,
    pub output_size: usize,
}

/// A total lookup table for one node's channel: digit order is the node's
/// in-neighbors ascending, then the states of the same in-edges, last digit
/// fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelTable {
    input_sizes: Vec<usize>,
    state_sizes: Vec<usize>,
    output_size: usize,
    map: Vec<u32>,
}

impl ChannelTable {
    pub fn new(
        input_sizes: Vec<usize>,
        state_sizes: Vec<usize>,
        output_size: usize,
        map: Vec<u32>,
    ) -> Result<Self, String> {
        let mut cells = 1usize;
        for s in input_sizes.iter().chain(state_sizes.iter()) {
            if *s == 0 {
                return Err("alphabet sizes must be at least 1".into());
            }
            cells = cells
                .checked_mul(*s)
                .ok_or_else(|| "channel table too large".to_string())?;
        }
        if map.len() != cells {
            return Err(format!("table has {} rows, needs {}", map.len(), cells));
        }
        if let Some(bad) = map.iter().find(|&&y| y as usize >= output_size) {
            return Err(format!("output {} exceeds alphabet size {}", bad, output_size));
        }
        Ok(ChannelTable { input_sizes, state_sizes, output_size, map })
    }

    pub fn input_sizes(&self) -> &[usize] {
        &self.input_sizes
    }

    pub fn state_sizes(&self) -> &[usize] {
        &self.state_sizes
    }

    pub fn output_size(&self) -> usize {
        self.output_size
    }

    pub fn flat_index(&self, xs: &[u32], ss: &[u32]) -> usize {
        debug_assert_eq!(xs.len(), self.input_sizes.len());
        debug_assert_eq!(ss.len(), self.state_sizes.len());
        let mut idx = 0usize;
        for (d, &x) in xs.iter().enumerate() {
            idx = idx * self.input_sizes[d] + x as usize;
        }
        for (d, &s) in ss.iter().enumerate() {
            idx = idx * self.state_sizes[d] + s as usize;
        }
        idx
    }

    pub fn eval(&self, xs: &[u32], ss: &[u32]) -> u32 {
        self.map[self.flat_index(xs, ss)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    Linear { field: Field },
    General { io: Vec<NodeIo>, tables: Vec<Option<ChannelTable>> },
}

/// The law of the per-use network state, i.i.d. across time.
#[derive(Debug, Clone, PartialEq)]
pub enum StateModel {
    /// One independent pmf per edge, in edge order.
    PerEdgeIid(Vec<Pmf>),
    /// Explicit joint support: full per-edge assignments with probabilities.
    Joint(Vec<(Vec<u32>, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    SelfLoop { node: usize },
    DuplicateEdge { from: usize, to: usize },
    EdgeNodeOutOfRange { from: usize, to: usize },
    NoDestinations,
    SourceIsDestination,
    DestinationOutOfRange { node: usize },
    UnreachableDestination { node: usize },
    StatePmfCount { expected: usize, got: usize },
    StateValueOutOfRange { edge: usize, value: u32, alphabet: usize },
    JointAssignmentLength { row: usize, expected: usize, got: usize },
    JointDuplicateAssignment { row: usize },
    JointNotNormalized { total: f64 },
    JointNegativeProbability { row: usize },
    JointEmpty,
    NodeIoCount { expected: usize, got: usize },
    MissingTable { node: usize },
    UnexpectedTable { node: usize },
    TableShape { node: usize, detail: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::SelfLoop { node } => write!(f, "self-loop at node {node}"),
            Diagnostic::DuplicateEdge { from, to } => {
                write!(f, "duplicate edge ({from}, {to})")
            }
            Diagnostic::EdgeNodeOutOfRange { from, to } => {
                write!(f, "edge ({from}, {to}) references an unknown node")
            }
            Diagnostic::NoDestinations => write!(f, "destination set is empty"),
            Diagnostic::SourceIsDestination => {
                write!(f, "the source cannot be a destination")
            }
            Diagnostic::DestinationOutOfRange { node } => {
                write!(f, "destination {node} is not a node")
            }
            Diagnostic::UnreachableDestination { node } => {
                write!(f, "destination {node} is unreachable from the source")
            }
            Diagnostic::StatePmfCount { expected, got } => {
                write!(f, "state model has {got} edge pmfs, needs {expected}")
            }
            Diagnostic::StateValueOutOfRange { edge, value, alphabet } => {
                write!(f, "state value {value} on edge #{edge} exceeds alphabet {alphabet}")
            }
            Diagnostic::JointAssignmentLength { row, expected, got } => {
                write!(f, "joint state row {row} has {got} components, needs {expected}")
            }
            Diagnostic::JointDuplicateAssignment { row } => {
                write!(f, "joint state row {row} repeats an assignment")
            }
            Diagnostic::JointNotNormalized { total } => {
                write!(f, "joint state probabilities sum to {total}")
            }
            Diagnostic::JointNegativeProbability { row } => {
                write!(f, "joint state row {row} has a negative probability")
            }
            Diagnostic::JointEmpty => write!(f, "joint state support is empty"),
            Diagnostic::NodeIoCount { expected, got } => {
                write!(f, "{got} alphabet declarations, needs {expected}")
            }
            Diagnostic::MissingTable { node } => {
                write!(f, "node {node} has in-edges but no channel table")
            }
            Diagnostic::UnexpectedTable { node } => {
                write!(f, "node {node} has no in-edges but declares a table")
            }
            Diagnostic::TableShape { node, detail } => {
                write!(f, "channel table of node {node}: {detail}")
            }
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("erasure probability {0} is outside [0, 1]")]
    ErasureOutOfRange(f64),
    #[error("network is invalid: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayerError {
    #[error("node {node} is unreachable from the source")]
    Unreachable { node: usize },
    #[error("node {node} has source paths of lengths {len_a} and {len_b}")]
    PathLengthMismatch { node: usize, len_a: usize, len_b: usize },
}

/// A layer assignment: `layers[l]` lists the nodes at distance l from the
/// source, `layers[0] == [1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layering {
    pub layer_of: Vec<usize>,
    pub layers: Vec<Vec<usize>>,
}

impl Layering {
    /// Number of edge layers L (nodes occupy layers 0..=L).
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }
}

pub const SOURCE: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    destinations: BTreeSet<usize>,
    mode: Mode,
    state: StateModel,
}

impl Network {
    pub fn new(
        node_count: usize,
        edges: Vec<(usize, usize)>,
        destinations: impl IntoIterator<Item = usize>,
        mode: Mode,
        state: StateModel,
    ) -> Self {
        Network {
            node_count,
            edges,
            destinations: destinations.into_iter().collect(),
            mode,
            state,
        }
    }

    /// Builds a linear erasure network over `field`: each edge's coefficient
    /// is 1 with probability `1 - epsilon` and 0 otherwise, independently.
    pub fn erasure(
        node_count: usize,
        edges: Vec<(usize, usize)>,
        destinations: impl IntoIterator<Item = usize>,
        epsilons: &[f64],
        field: Field,
    ) -> Result<Self, NetworkError> {
        if epsilons.len() != edges.len() {
            return Err(NetworkError::Invalid(format!(
                "{} erasure probabilities for {} edges",
                epsilons.len(),
                edges.len()
            )));
        }
        let mut pmfs = Vec::with_capacity(edges.len());
        for &eps in epsilons {
            if !(0.0..=1.0).contains(&eps) {
                return Err(NetworkError::ErasureOutOfRange(eps));
            }
            let mut probs = vec![0.0; field.order() as usize];
            probs[0] = eps;
            probs[1] = 1.0 - eps;
            pmfs.push(Pmf::new(probs).expect("erasure pmf is valid"));
        }
        Ok(Network::new(
            node_count,
            edges,
            destinations,
            Mode::Linear { field },
            StateModel::PerEdgeIid(pmfs),
        ))
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> {
        1..=self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn destinations(&self) -> &BTreeSet<usize> {
        &self.destinations
    }

    pub fn mode(&self) -> &Mode {
        &self.mode
    }

    pub fn state_model(&self) -> &StateModel {
        &self.state
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.mode, Mode::Linear { .. })
    }

    pub fn field(&self) -> Option<Field> {
        match &self.mode {
            Mode::Linear { field } => Some(*field),
            Mode::General { .. } => None,
        }
    }

    /// In-neighbors of `v`, ascending.
    pub fn input_neighbors(&self, v: usize) -> Result<Vec<usize>, NetworkError> {
        if v == 0 || v > self.node_count {
            return Err(NetworkError::UnknownNode(v));
        }
        let mut ns: Vec<usize> =
            self.edges.iter().filter(|&&(_, t)| t == v).map(|&(u, _)| u).collect();
        ns.sort_unstable();
        ns.dedup();
        Ok(ns)
    }

    /// Indices into `edges()` of the in-edges of `v`, sorted by sender id.
    pub fn in_edge_indices(&self, v: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.edges.len()).filter(|&e| self.edges[e].1 == v).collect();
        idx.sort_by_key(|&e| self.edges[e].0);
        idx
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(u, _)| u == v).count()
    }

    /// Nodes that actually transmit (out-degree > 0). Others are fixed to a
    /// constant input and never enter distribution searches.
    pub fn transmitting_nodes(&self) -> Vec<usize> {
        self.nodes().filter(|&v| self.out_degree(v) > 0).collect()
    }

    /// The transmit alphabet size of a node.
    pub fn input_size(&self, v: usize) -> usize {
        match &self.mode {
            Mode::Linear { field } => field.order() as usize,
            Mode::General { io, .. } => io[v - 1].input_size,
        }
    }

    /// The observation alphabet size of a node.
    pub fn output_size(&self, v: usize) -> usize {
        match &self.mode {
            Mode::Linear { field } => field.order() as usize,
            Mode::General { io, .. } => io[v - 1].output_size,
        }
    }

    /// State alphabet size of edge `e` (index into `edges()`).
    pub fn edge_state_size(&self, e: usize) -> usize {
        match (&self.mode, &self.state) {
            (Mode::Linear { field }, _) => field.order() as usize,
            (Mode::General { .. }, StateModel::PerEdgeIid(pmfs)) => pmfs[e].len(),
            (Mode::General { .. }, StateModel::Joint(rows)) => rows
                .iter()
                .map(|(a, _)| a.get(e).map_or(0, |&s| s as usize + 1))
                .max()
                .unwrap_or(1)
                .max(1),
        }
    }

    /// Marginal pmf of edge `e`'s state.
    pub fn edge_state_pmf(&self, e: usize) -> Pmf {
        match &self.state {
            StateModel::PerEdgeIid(pmfs) => pmfs[e].clone(),
            StateModel::Joint(rows) => {
                let size = self.edge_state_size(e);
                let mut probs = vec![0.0; size];
                for (assignment, p) in rows {
                    probs[assignment[e] as usize] += p;
                }
                Pmf::new(probs).expect("joint rows are normalized")
            }
        }
    }

    /// Draws one full per-edge state assignment.
    pub fn sample_state(&self, rng: &mut Stream) -> Vec<u32> {
        match &self.state {
            StateModel::PerEdgeIid(pmfs) => {
                pmfs.iter().map(|p| rng.sample_index(p.probs()) as u32).collect()
            }
            StateModel::Joint(rows) => {
                let u = rng.next_f64();
                let mut acc = 0.0;
                for (assignment, p) in rows {
                    acc += p;
                    if u < acc {
                        return assignment.clone();
                    }
                }
                rows.last().expect("support is nonempty").0.clone()
            }
        }
    }

    /// One node's observation under full input and state assignments
    /// (indexed by node-1 and edge order respectively).
    pub fn observe(&self, v: usize, inputs: &[u32], states: &[u32]) -> u32 {
        let in_edges = self.in_edge_indices(v);
        match &self.mode {
            Mode::Linear { field } => {
                let mut acc = 0u32;
                for &e in &in_edges {
                    let (u, _) = self.edges[e];
                    acc = field.add(acc, field.mul(states[e], inputs[u - 1]));
                }
                acc
            }
            Mode::General { tables, .. } => {
                if in_edges.is_empty() {
                    return 0;
                }
                let table = tables[v - 1].as_ref().expect("validated network has tables");
                let xs: Vec<u32> = in_edges.iter().map(|&e| inputs[self.edges[e].0 - 1]).collect();
                let ss: Vec<u32> = in_edges.iter().map(|&e| states[e]).collect();
                table.eval(&xs, &ss)
            }
        }
    }

    fn reachable_from_source(&self) -> Vec<bool> {
        let mut seen = vec![false; self.node_count + 1];
        if self.node_count == 0 {
            return seen;
        }
        let mut queue = std::collections::VecDeque::new();
        seen[SOURCE] = true;
        queue.push_back(SOURCE);
        while let Some(u) = queue.pop_front() {
            for &(from, to) in &self.edges {
                if from == u && !seen[to] {
                    seen[to] = true;
                    queue.push_back(to);
                }
            }
        }
        seen
    }

    /// Checks every structural invariant and returns all violations.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut seen_edges = BTreeSet::new();
        for &(u, v) in &self.edges {
            if u == 0 || v == 0 || u > self.node_count || v > self.node_count {
                out.push(Diagnostic::EdgeNodeOutOfRange { from: u, to: v });
                continue;
            }
            if u == v {
                out.push(Diagnostic::SelfLoop { node: u });
            }
            if !seen_edges.insert((u, v)) {
                out.push(Diagnostic::DuplicateEdge { from: u, to: v });
            }
        }
        if self.destinations.is_empty() {
            out.push(Diagnostic::NoDestinations);
        }
        if self.destinations.contains(&SOURCE) {
            out.push(Diagnostic::SourceIsDestination);
        }
        for &d in &self.destinations {
            if d == 0 || d > self.node_count {
                out.push(Diagnostic::DestinationOutOfRange { node: d });
            }
        }
        let reach = self.reachable_from_source();
        for &d in &self.destinations {
            if d >= 1 && d <= self.node_count && d != SOURCE && !reach[d] {
                out.push(Diagnostic::UnreachableDestination { node: d });
            }
        }
        self.validate_state(&mut out);
        if let Mode::General { io, tables } = &self.mode {
            if io.len() != self.node_count {
                out.push(Diagnostic::NodeIoCount { expected: self.node_count, got: io.len() });
            } else {
                self.validate_tables(io, tables, &mut out);
            }
        }
        out
    }

    fn validate_state(&self, out: &mut Vec<Diagnostic>) {
        match &self.state {
            StateModel::PerEdgeIid(pmfs) => {
                if pmfs.len() != self.edges.len() {
                    out.push(Diagnostic::StatePmfCount {
                        expected: self.edges.len(),
                        got: pmfs.len(),
                    });
                    return;
                }
                if let Mode::Linear { field } = &self.mode {
                    for (e, pmf) in pmfs.iter().enumerate() {
                        if pmf.len() > field.order() as usize {
                            out.push(Diagnostic::StateValueOutOfRange {
                                edge: e,
                                value: pmf.len() as u32 - 1,
                                alphabet: field.order() as usize,
                            });
                        }
                    }
                }
            }
            StateModel::Joint(rows) => {
                if rows.is_empty() {
                    out.push(Diagnostic::JointEmpty);
                    return;
                }
                let mut seen = BTreeSet::new();
                let mut total = 0.0;
                for (i, (assignment, p)) in rows.iter().enumerate() {
                    if assignment.len() != self.edges.len() {
                        out.push(Diagnostic::JointAssignmentLength {
                            row: i,
                            expected: self.edges.len(),
                            got: assignment.len(),
                        });
                        continue;
                    }
                    if !seen.insert(assignment.clone()) {
                        out.push(Diagnostic::JointDuplicateAssignment { row: i });
                    }
                    if *p < 0.0 {
                        out.push(Diagnostic::JointNegativeProbability { row: i });
                    }
                    total += p;
                    if let Mode::Linear { field } = &self.mode {
                        for (e, &s) in assignment.iter().enumerate() {
                            if s >= field.order() {
                                out.push(Diagnostic::StateValueOutOfRange {
                                    edge: e,
                                    value: s,
                                    alphabet: field.order() as usize,
                                });
                            }
                        }
                    }
                }
                if (total - 1.0).abs() > 1e-9 {
                    out.push(Diagnostic::JointNotNormalized { total });
                }
            }
        }
    }

    fn validate_tables(
        &self,
        io: &[NodeIo],
        tables: &[Option<ChannelTable>],
        out: &mut Vec<Diagnostic>,
    ) {
        if tables.len() != self.node_count {
            out.push(Diagnostic::NodeIoCount { expected: self.node_count, got: tables.len() });
            return;
        }
        for v in 1..=self.node_count {
            let in_edges = self.in_edge_indices(v);
            match (&tables[v - 1], in_edges.is_empty()) {
                (None, false) => out.push(Diagnostic::MissingTable { node: v }),
                (Some(_), true) => out.push(Diagnostic::UnexpectedTable { node: v }),
                (Some(t), false) => {
                    let want_inputs: Vec<usize> = in_edges
                        .iter()
                        .map(|&e| io[self.edges[e].0 - 1].input_size)
                        .collect();
                    let want_states: Vec<usize> =
                        in_edges.iter().map(|&e| self.edge_state_size(e)).collect();
                    if t.input_sizes() != want_inputs.as_slice() {
                        out.push(Diagnostic::TableShape {
                            node: v,
                            detail: format!(
                                "input sizes {:?} do not match senders {:?}",
                                t.input_sizes(),
                                want_inputs
                            ),
                        });
                    }
                    if t.state_sizes() != want_states.as_slice() {
                        out.push(Diagnostic::TableShape {
                            node: v,
                            detail: format!(
                                "state sizes {:?} do not match edges {:?}",
                                t.state_sizes(),
                                want_states
                            ),
                        });
                    }
                    if t.output_size() != io[v - 1].output_size {
                        out.push(Diagnostic::TableShape {
                            node: v,
                            detail: format!(
                                "output size {} does not match declared {}",
                                t.output_size(),
                                io[v - 1].output_size
                            ),
                        });
                    }
                }
                (None, true) => {}
            }
        }
    }

    /// Layer assignment: every node's source paths must share one length and
    /// every node must be reachable.
    pub fn compute_layers(&self) -> Result<Layering, LayerError> {
        let n = self.node_count;
        let mut dist = vec![usize::MAX; n + 1];
        dist[SOURCE] = 0;
        let mut queue = std::collections::VecDeque::from([SOURCE]);
        while let Some(u) = queue.pop_front() {
            for &(from, to) in &self.edges {
                if from == u && dist[to] == usize::MAX {
                    dist[to] = dist[u] + 1;
                    queue.push_back(to);
                }
            }
        }
        for v in 1..=n {
            if dist[v] == usize::MAX {
                return Err(LayerError::Unreachable { node: v });
            }
        }
        for &(u, v) in &self.edges {
            if dist[v] != dist[u] + 1 {
                return Err(LayerError::PathLengthMismatch {
                    node: v,
                    len_a: dist[v],
                    len_b: dist[u] + 1,
                });
            }
        }
        let depth = (1..=n).map(|v| dist[v]).max().unwrap_or(0);
        let mut layers = vec![Vec::new(); depth + 1];
        for v in 1..=n {
            layers[dist[v]].push(v);
        }
        Ok(Layering { layer_of: dist[1..].to_vec(), layers })
    }
}
