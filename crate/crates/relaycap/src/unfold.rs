//! Time-unfolding: turns an arbitrary (possibly cyclic) network into a
//! T-stage layered one and numerically verifies the per-use rate relations
//! between base cuts and unfolded cuts.
//!
//! Each kept node copy `v[t]` sits at stage t; every base edge (u, v)
//! becomes cross edges (u[t], v[t+1]); memory edges v[t] -> v[t+1] model the
//! node carrying information forward in time. In linear mode a memory edge
//! is an ordinary always-on GF(q) edge (width 0 disables memory, width 1 is
//! the default lane; wider lanes are not representable with one symbol per
//! node). In general mode each copy transmits a pair (channel symbol,
//! memory symbol) whose memory half has the node's observation alphabet and
//! rides the memory edge unchanged.
//!
//! Copies unreachable from the stage-0 source are dropped; reachable copies
//! stay even when they cannot influence the destination, because steady
//! cuts must keep one crossing-edge copy per stage for the per-use
//! normalization to come out exact.

use crate::capacity::{boundary_entropy, cut_conditional_entropy, CapacityError, InputDist};
use crate::cut::{enumerate_cuts, CutError};
use crate::info::Pmf;
use crate::network::{ChannelTable, Mode, Network, NodeIo, StateModel, SOURCE};
use crate::parallel::map_indexed;
use crate::rng::Stream;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

const SAMPLE_TAG: u64 = 0x5457;

#[derive(Debug, Error, PartialEq)]
pub enum UnfoldError {
    #[error("unfolding needs at least one stage")]
    ZeroStages,
    #[error("unfolding requires a per-edge i.i.d. state model")]
    JointStateUnsupported,
    #[error("linear memory width {0} is not representable; use 0 or 1")]
    MemoryWidthUnsupported(usize),
    #[error("destination {dest} is unreachable within {stages} stages")]
    DestinationUnreachable { dest: usize, stages: usize },
    #[error("unfolding produces {0} node copies; the cap is 64")]
    TooManyCopies(usize),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Cut(#[from] CutError),
}

/// A layered time-extended network plus the bookkeeping to map copies back
/// to base nodes and stages.
#[derive(Debug, Clone)]
pub struct UnfoldedNetwork {
    pub network: Network,
    pub stages: usize,
    pub memory_width: usize,
    /// (base node, stage) of each unfolded node, indexed by id - 1.
    origin: Vec<(usize, usize)>,
    ids: BTreeMap<(usize, usize), usize>,
}

impl UnfoldedNetwork {
    pub fn id_of(&self, base: usize, stage: usize) -> Option<usize> {
        self.ids.get(&(base, stage)).copied()
    }

    pub fn origin_of(&self, id: usize) -> (usize, usize) {
        self.origin[id - 1]
    }

    pub fn node_label(&self, id: usize) -> String {
        let (base, stage) = self.origin_of(id);
        format!("{base}@{stage}")
    }

    /// Bitmask over unfolded ids of the steady image of a base cut mask:
    /// every kept copy of every member.
    pub fn steady_mask(&self, base_mask: u64) -> u64 {
        let mut mask = 0u64;
        for (id0, &(base, _)) in self.origin.iter().enumerate() {
            if base_mask & (1 << (base - 1)) != 0 {
                mask |= 1 << id0;
            }
        }
        mask
    }

    /// Membership mask of a staircase cut: copies at stages below `switch`
    /// follow `early`, the rest follow `late`.
    pub fn staircase_mask(&self, early: u64, late: u64, switch: usize) -> u64 {
        let mut mask = 0u64;
        for (id0, &(base, stage)) in self.origin.iter().enumerate() {
            let base_mask = if stage < switch { early } else { late };
            if base_mask & (1 << (base - 1)) != 0 {
                mask |= 1 << id0;
            }
        }
        mask
    }

    /// Replicates per-base-node input pmfs onto every copy. In general mode
    /// the copy alphabet is a (channel, memory) pair, channel-major; the
    /// memory half gets a uniform distribution.
    pub fn replicate_inputs(&self, base_pmfs: &[Pmf]) -> Vec<Pmf> {
        self.origin
            .iter()
            .enumerate()
            .map(|(id0, &(base, _))| {
                let total = self.network.input_size(id0 + 1);
                let channel = base_pmfs[base - 1].len();
                if total == channel {
                    return base_pmfs[base - 1].clone();
                }
                let mem = total / channel.max(1);
                let mut probs = Vec::with_capacity(total);
                for c in 0..channel {
                    for _ in 0..mem {
                        probs.push(base_pmfs[base - 1].prob(c) / mem as f64);
                    }
                }
                Pmf::new(probs).expect("replicated pmf is valid")
            })
            .collect()
    }

    /// Conditional entropy of an unfolded cut, summed stage by stage.
    ///
    /// Stages are independent under product inputs and i.i.d. per-edge
    /// states, so the joint conditional entropy splits into per-stage terms;
    /// this keeps the enumeration small even for many stages.
    pub fn cut_entropy(&self, mask: u64, inputs: &[Pmf]) -> Result<f64, CapacityError> {
        let dist = InputDist::Product(inputs.to_vec());
        let inside = |v: usize| mask & (1 << (v - 1)) != 0;
        let mut total = 0.0;
        for stage in 1..=self.stages {
            let mut receivers: Vec<usize> = Vec::new();
            for (id0, &(_, s)) in self.origin.iter().enumerate() {
                let v = id0 + 1;
                if s == stage && !inside(v) {
                    let feeds = self
                        .network
                        .in_edge_indices(v)
                        .iter()
                        .any(|&e| inside(self.network.edges()[e].0));
                    if feeds {
                        receivers.push(v);
                    }
                }
            }
            receivers.sort_unstable();
            total += boundary_entropy(&self.network, &receivers, &inside, &dist)?;
        }
        Ok(total)
    }
}

/// Unfolds `net` over `t` stages with memory lanes of width `w`.
pub fn unfold(net: &Network, t: usize, w: usize) -> Result<UnfoldedNetwork, UnfoldError> {
    if t == 0 {
        return Err(UnfoldError::ZeroStages);
    }
    let base_pmfs = match net.state_model() {
        StateModel::PerEdgeIid(pmfs) => pmfs.clone(),
        StateModel::Joint(_) => return Err(UnfoldError::JointStateUnsupported),
    };
    if net.is_linear() && w > 1 {
        return Err(UnfoldError::MemoryWidthUnsupported(w));
    }
    let memory = w >= 1;
    let n = net.node_count();

    // Reachability over (node, stage) pairs from (source, 0).
    let mut reach = vec![vec![false; t + 1]; n + 1];
    reach[SOURCE][0] = true;
    for stage in 0..t {
        for v in 1..=n {
            if !reach[v][stage] {
                continue;
            }
            if memory {
                reach[v][stage + 1] = true;
            }
            for &(from, to) in net.edges() {
                if from == v {
                    reach[to][stage + 1] = true;
                }
            }
        }
    }
    for &d in net.destinations() {
        if !reach[d][t] {
            return Err(UnfoldError::DestinationUnreachable { dest: d, stages: t });
        }
    }

    // Deterministic ids: sort kept copies by (stage, base node).
    let mut origin = Vec::new();
    let mut ids = BTreeMap::new();
    for stage in 0..=t {
        for v in 1..=n {
            if reach[v][stage] {
                origin.push((v, stage));
                ids.insert((v, stage), origin.len());
            }
        }
    }
    if origin.len() > 64 {
        return Err(UnfoldError::TooManyCopies(origin.len()));
    }

    // Cross-edge copies then memory edges, stage by stage.
    let mut edges = Vec::new();
    let mut pmfs = Vec::new();
    let mut edge_origin: Vec<Option<usize>> = Vec::new();
    for stage in 0..t {
        for (e, &(u, v)) in net.edges().iter().enumerate() {
            if reach[u][stage] && reach[v][stage + 1] {
                edges.push((ids[&(u, stage)], ids[&(v, stage + 1)]));
                pmfs.push(base_pmfs[e].clone());
                edge_origin.push(Some(e));
            }
        }
        if memory {
            for v in 1..=n {
                if reach[v][stage] && reach[v][stage + 1] {
                    edges.push((ids[&(v, stage)], ids[&(v, stage + 1)]));
                    edge_origin.push(None);
                    pmfs.push(match net.mode() {
                        Mode::Linear { field } => {
                            let mut probs = vec![0.0; field.order() as usize];
                            probs[1] = 1.0;
                            Pmf::new(probs).expect("memory pmf is valid")
                        }
                        Mode::General { .. } => Pmf::point(1, 0),
                    });
                }
            }
        }
    }

    let destinations: Vec<usize> = net.destinations().iter().map(|&d| ids[&(d, t)]).collect();
    let mode = match net.mode() {
        Mode::Linear { field } => Mode::Linear { field: *field },
        Mode::General { io, .. } => {
            general_mode(net, io, &origin, &edges, &edge_origin, memory)
        }
    };
    let network = Network::new(
        origin.len(),
        edges,
        destinations,
        mode,
        StateModel::PerEdgeIid(pmfs),
    );
    Ok(UnfoldedNetwork { network, stages: t, memory_width: w, origin, ids })
}

/// Builds per-copy alphabets and tables for a general-mode unfolding.
///
/// A copy transmits a pair (channel symbol, memory symbol), packed
/// channel-major. Receivers apply the base table to the channel halves of
/// their cross inputs and append the memory half of their own predecessor.
/// Cross senders trimmed away are treated as silent (symbol 0, state 0).
fn general_mode(
    net: &Network,
    io: &[NodeIo],
    origin: &[(usize, usize)],
    edges: &[(usize, usize)],
    edge_origin: &[Option<usize>],
    memory: bool,
) -> Mode {
    let copy_count = origin.len();
    let mem_size = |base: usize| if memory { io[base - 1].output_size } else { 1 };
    let mut new_io = Vec::with_capacity(copy_count);
    for &(base, _) in origin {
        new_io.push(NodeIo {
            input_size: io[base - 1].input_size * mem_size(base),
            output_size: 1, // adjusted below once in-edges are known
        });
    }

    let mut tables: Vec<Option<ChannelTable>> = vec![None; copy_count];
    for id in 1..=copy_count {
        let (base, _stage) = origin[id - 1];
        let mut in_sorted: Vec<usize> =
            (0..edges.len()).filter(|&e| edges[e].1 == id).collect();
        in_sorted.sort_by_key(|&e| edges[e].0);
        if in_sorted.is_empty() {
            continue;
        }
        let has_memory_in = in_sorted.iter().any(|&e| edge_origin[e].is_none());
        let has_cross_in = in_sorted.iter().any(|&e| edge_origin[e].is_some());
        let base_out = if has_cross_in { io[base - 1].output_size } else { 1 };
        let out_size = base_out * if has_memory_in { io[base - 1].output_size } else { 1 };
        new_io[id - 1].output_size = out_size;

        let base_in_edges = net.in_edge_indices(base);
        let input_sizes: Vec<usize> = in_sorted
            .iter()
            .map(|&e| {
                let (sender_base, _) = origin[edges[e].0 - 1];
                io[sender_base - 1].input_size * mem_size(sender_base)
            })
            .collect();
        let state_sizes: Vec<usize> = in_sorted
            .iter()
            .map(|&e| match edge_origin[e] {
                Some(base_e) => net.edge_state_size(base_e),
                None => 1,
            })
            .collect();
        let mut cells = 1usize;
        for s in input_sizes.iter().chain(state_sizes.iter()) {
            cells *= s;
        }
        let mut map = Vec::with_capacity(cells);
        let mut digits = vec![0u32; in_sorted.len() * 2];
        let sizes: Vec<usize> =
            input_sizes.iter().chain(state_sizes.iter()).copied().collect();
        for _ in 0..cells {
            let xs = &digits[..in_sorted.len()];
            let ss = &digits[in_sorted.len()..];
            // Assemble the base-table arguments from channel halves; base
            // digit order is base in-neighbors ascending.
            let mut base_xs = Vec::with_capacity(base_in_edges.len());
            let mut base_ss = Vec::with_capacity(base_in_edges.len());
            for &be in &base_in_edges {
                let pos = in_sorted
                    .iter()
                    .position(|&e| edge_origin[e] == Some(be));
                match pos {
                    Some(p) => {
                        let sender_base = origin[edges[in_sorted[p]].0 - 1].0;
                        base_xs.push(xs[p] / mem_size(sender_base) as u32);
                        base_ss.push(ss[p]);
                    }
                    None => {
                        base_xs.push(0);
                        base_ss.push(0);
                    }
                }
            }
            let base_y = if !has_cross_in {
                0
            } else {
                match net.mode() {
                    Mode::General { tables: base_tables, .. } => base_tables[base - 1]
                        .as_ref()
                        .expect("validated base has tables")
                        .eval(&base_xs, &base_ss),
                    Mode::Linear { .. } => unreachable!("general path"),
                }
            };
            let y = if has_memory_in {
                let mem_pos = in_sorted
                    .iter()
                    .position(|&e| edge_origin[e].is_none())
                    .expect("memory in-edge present");
                let sender_base = origin[edges[in_sorted[mem_pos]].0 - 1].0;
                let mem_symbol = xs[mem_pos] % mem_size(sender_base) as u32;
                base_y * io[base - 1].output_size as u32 + mem_symbol
            } else {
                base_y
            };
            map.push(y);
            for pos in (0..digits.len()).rev() {
                digits[pos] += 1;
                if (digits[pos] as usize) < sizes[pos] {
                    break;
                }
                digits[pos] = 0;
            }
        }
        tables[id - 1] =
            Some(ChannelTable::new(input_sizes, state_sizes, out_size, map)
                .expect("constructed table is total"));
    }
    Mode::General { io: new_io, tables }
}

/// One evaluated unfolded cut.
#[derive(Debug, Clone, PartialEq)]
pub struct CutEval {
    pub mask: u64,
    /// Base cut mask when this is a steady image.
    pub steady_of: Option<u64>,
    pub entropy: f64,
    /// entropy - lower_coeff * base_min; negative means the lower relation
    /// failed on this cut.
    pub lower_margin: f64,
}

/// Joint report for the normalized-rate and sandwich checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub stages: usize,
    pub memory_width: usize,
    /// Number of base cuts per destination (2^(|V|-2)).
    pub base_cut_count: u64,
    /// min over base destinations and cuts of the base conditional entropy.
    pub base_min: f64,
    /// Coefficient of the per-cut lower relation: max(T - N + 1, 0).
    pub lower_coeff: f64,
    pub evaluated: Vec<CutEval>,
    pub lower_ok: bool,
    pub lower_violations: Vec<u64>,
    /// T * base_min - (min entropy over evaluated cuts); the upper relation
    /// holds when this is nonnegative (steady cuts guarantee it).
    pub upper_margin: f64,
    pub upper_ok: bool,
    /// (min over steady cuts of entropy) / T.
    pub steady_normalized: f64,
    /// (min over steady images of the base argmin cuts) / T. Source-side
    /// argmin cuts keep a full crossing copy per stage, making this value
    /// exactly the base minimum at every T.
    pub argmin_steady_normalized: f64,
    /// (min over all evaluated cuts of entropy) / T.
    pub normalized_min: f64,
}

const VERIFY_TOL: f64 = 1e-9;

/// Evaluates steady cuts, structured adversarial cuts (staircases and
/// last-stage cuts), and up to `budget` random cuts of the unfolded network,
/// then checks both rate relations:
///
/// (a) every evaluated cut's entropy is at least `max(T - N + 1, 0)` times
///     the base min-cut entropy (the time-expansion lower relation), and
/// (b) the minimum over evaluated cuts is at most `T` times the base
///     min-cut entropy (witnessed by steady cuts).
pub fn verify_sandwich(
    net: &Network,
    t: usize,
    w: usize,
    base_inputs: &[Pmf],
    budget: usize,
    seed: u64,
    threads: usize,
) -> Result<SandwichReport, UnfoldError> {
    let unfolded = unfold(net, t, w)?;
    let inputs = unfolded.replicate_inputs(base_inputs);
    let base_dist = InputDist::Product(base_inputs.to_vec());

    let mut base_min = f64::INFINITY;
    let mut base_masks = Vec::new();
    let mut base_values: Vec<f64> = Vec::new();
    for &d in net.destinations() {
        for cut in enumerate_cuts(net, d)? {
            let h = cut_conditional_entropy(net, &cut, &base_dist)?;
            base_min = base_min.min(h);
            if !base_masks.contains(&cut.mask()) {
                base_masks.push(cut.mask());
                base_values.push(h);
            }
        }
    }
    let argmin_masks: Vec<u64> = base_masks
        .iter()
        .zip(&base_values)
        .filter(|(_, &h)| h <= base_min + VERIFY_TOL)
        .map(|(&m, _)| m)
        .collect();
    let base_cut_count = 1u64 << (net.node_count() - 2);
    let lower_coeff = (t as f64 - base_cut_count as f64 + 1.0).max(0.0);

    // Cut masks to evaluate, deduplicated. Steady images first; distinct
    // base cuts may share one image when copies are missing at small T.
    let mut steady: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for &bm in &base_masks {
        steady.entry(unfolded.steady_mask(bm)).or_default().push(bm);
    }
    let mut masks: BTreeSet<u64> = steady.keys().copied().collect();

    let full: u64 = if unfolded.network.node_count() == 64 {
        u64::MAX
    } else {
        (1u64 << unfolded.network.node_count()) - 1
    };
    let source_bit = 1u64 << (SOURCE - 1);
    let dest_bits: u64 = unfolded
        .network
        .destinations()
        .iter()
        .map(|&d| 1u64 << (d - 1))
        .fold(0, |a, b| a | b);

    // Staircases between nested base cuts, every switch stage.
    for &early in &base_masks {
        for &late in &base_masks {
            if early != late && early & late == early {
                for switch in 1..=t {
                    masks.insert(unfolded.staircase_mask(early, late, switch));
                }
            }
        }
    }
    // Everything except each final destination copy.
    for &d in unfolded.network.destinations() {
        masks.insert(full & !(1u64 << (d - 1)));
    }
    // Random cuts up to the budget (exhaustive when the space is small).
    let free: Vec<usize> = (1..=unfolded.network.node_count())
        .filter(|&v| v != SOURCE && dest_bits & (1 << (v - 1)) == 0)
        .collect();
    let mut rng = Stream::derive(seed, &[SAMPLE_TAG, t as u64, w as u64]);
    let total_cuts = 1u128 << free.len();
    if total_cuts <= budget as u128 {
        for code in 0..total_cuts as u64 {
            let mut mask = source_bit;
            for (bit, &v) in free.iter().enumerate() {
                if code & (1 << bit) != 0 {
                    mask |= 1 << (v - 1);
                }
            }
            masks.insert(mask);
        }
    } else {
        let mut tries = 0;
        while masks.len() < budget && tries < budget * 4 {
            let mut mask = source_bit;
            for &v in &free {
                if rng.next_u64() & 1 == 1 {
                    mask |= 1 << (v - 1);
                }
            }
            masks.insert(mask);
            tries += 1;
        }
    }

    let ordered: Vec<u64> = masks.into_iter().collect();
    let entropies: Vec<Result<f64, CapacityError>> =
        map_indexed(ordered.len(), threads, |i| unfolded.cut_entropy(ordered[i], &inputs));
    let mut evaluated = Vec::with_capacity(ordered.len());
    let mut lower_violations = Vec::new();
    let mut min_entropy = f64::INFINITY;
    let mut steady_min = f64::INFINITY;
    let mut argmin_steady_min = f64::INFINITY;
    for (i, res) in entropies.into_iter().enumerate() {
        let h = res?;
        let lower_margin = h - lower_coeff * base_min;
        if lower_margin < -VERIFY_TOL {
            lower_violations.push(ordered[i]);
        }
        min_entropy = min_entropy.min(h);
        let sources = steady.get(&ordered[i]);
        if let Some(base_of) = sources {
            steady_min = steady_min.min(h);
            if base_of.iter().any(|m| argmin_masks.contains(m)) {
                argmin_steady_min = argmin_steady_min.min(h);
            }
        }
        let steady_of = sources.map(|v| v[0]);
        evaluated.push(CutEval { mask: ordered[i], steady_of, entropy: h, lower_margin });
    }

    let upper_margin = t as f64 * base_min - min_entropy;
    Ok(SandwichReport {
        stages: t,
        memory_width: w,
        base_cut_count,
        base_min,
        lower_coeff,
        lower_ok: lower_violations.is_empty(),
        lower_violations,
        evaluated,
        upper_margin,
        upper_ok: upper_margin >= -VERIFY_TOL,
        steady_normalized: steady_min / t as f64,
        argmin_steady_normalized: argmin_steady_min / t as f64,
        normalized_min: min_entropy / t as f64,
    })
}

/// The normalized-rate view of the same evaluation: per-use value of the
/// unfolded min-cut over steady cuts and the sampled rest.
pub fn verify_normalized_rate(
    net: &Network,
    t: usize,
    w: usize,
    base_inputs: &[Pmf],
    budget: usize,
    seed: u64,
    threads: usize,
) -> Result<SandwichReport, UnfoldError> {
    verify_sandwich(net, t, w, base_inputs, budget, seed, threads)
}
