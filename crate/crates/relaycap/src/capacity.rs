//! The capacity engine: min-cut expected rank for linear networks, cut-set
//! conditional entropies, achievable-rate and cut-set-bound searches over
//! input distributions.
//!
//! For a linear network over GF(q) the multicast capacity is
//! `min over destinations, min over cuts of E[rank(G_U)] * log2 q`. For a
//! general deterministic network the same min-cut structure applies to the
//! conditional entropy `H(Y_boundary | X_feeders, S)`; maximizing it over
//! product input distributions gives the achievable rate, over joint
//! distributions the cut-set upper bound. Both searches are grid searches on
//! the probability simplex so results are exactly reproducible.

use crate::cut::{enumerate_cuts, Cut, CutError};
use crate::info::{entropy_of, Pmf};
use crate::network::{Network, StateModel};
use crate::parallel::map_indexed;
use crate::rng::Stream;
use std::collections::BTreeMap;
use thiserror::Error;

/// Cap on exact state enumeration over a cut's crossing edges.
pub const EXACT_STATE_CAP: u64 = 1 << 20;
/// Cap on (inputs x states) cells enumerated for one entropy evaluation.
pub const ENTROPY_ENUM_CAP: u64 = 1 << 24;
/// Ties in min-cut certificates are resolved within this slack.
pub const TIE_TOL: f64 = 1e-9;

const MC_TAG: u64 = 0x4d43;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CapacityError {
    #[error("operation requires a linear network")]
    NotLinear,
    #[error("exact enumeration needs {0} state assignments (cap {EXACT_STATE_CAP})")]
    StateSpaceTooLarge(u64),
    #[error("entropy evaluation needs {0} cells (cap {ENTROPY_ENUM_CAP})")]
    EnumerationTooLarge(u64),
    #[error("Monte Carlo needs at least one sample")]
    ZeroSamples,
    #[error("grid resolution must be at least 1")]
    ZeroGrid,
    #[error("distribution search mode does not match the operation")]
    WrongSearchMode,
    #[error("input distribution does not cover node {0}")]
    MissingInput(usize),
    #[error(transparent)]
    Cut(#[from] CutError),
}

/// How to evaluate an expected rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMethod {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// An expected rank with its 95% half-width (zero for exact evaluation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedRank {
    pub value: f64,
    pub half_width: f64,
}

/// Expected rank of a cut's transfer matrix under the network state law.
pub fn expected_rank(
    net: &Network,
    cut: &Cut,
    method: RankMethod,
) -> Result<ExpectedRank, CapacityError> {
    expected_rank_threaded(net, cut, method, 1)
}

pub fn expected_rank_threaded(
    net: &Network,
    cut: &Cut,
    method: RankMethod,
    threads: usize,
) -> Result<ExpectedRank, CapacityError> {
    if !net.is_linear() {
        return Err(CapacityError::NotLinear);
    }
    match method {
        RankMethod::Exact => exact_expected_rank(net, cut),
        RankMethod::MonteCarlo { samples, seed } => {
            mc_expected_rank(net, cut, samples, seed, threads)
        }
    }
}

/// Positive-probability atoms of each listed pmf.
fn supports_of(pmfs: &[Pmf], indices: &[usize]) -> Vec<Vec<(u32, f64)>> {
    indices
        .iter()
        .map(|&i| {
            pmfs[i]
                .probs()
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(s, &p)| (s as u32, p))
                .collect()
        })
        .collect()
}

/// Cartesian product of per-coordinate supports with accumulated
/// probabilities. Errors when the atom count would exceed `cap`.
fn product_atoms(
    supports: &[Vec<(u32, f64)>],
    cap: u64,
) -> Result<Vec<(Vec<u32>, f64)>, u64> {
    let mut cells: u64 = 1;
    for s in supports {
        cells = cells.saturating_mul(s.len().max(1) as u64);
        if cells > cap {
            return Err(cells);
        }
    }
    let mut atoms: Vec<(Vec<u32>, f64)> = vec![(vec![0; supports.len()], 1.0)];
    for (i, support) in supports.iter().enumerate() {
        let mut next = Vec::with_capacity(atoms.len() * support.len());
        for (assign, p) in &atoms {
            for &(x, px) in support {
                let mut a = assign.clone();
                a[i] = x;
                next.push((a, p * px));
            }
        }
        atoms = next;
    }
    Ok(atoms)
}

fn exact_expected_rank(net: &Network, cut: &Cut) -> Result<ExpectedRank, CapacityError> {
    let crossing: Vec<usize> = cut.crossing().iter().map(|&(e, _, _)| e).collect();
    if crossing.is_empty() {
        return Ok(ExpectedRank { value: 0.0, half_width: 0.0 });
    }
    let mut total = 0.0f64;
    match net.state_model() {
        StateModel::PerEdgeIid(pmfs) => {
            let supports = supports_of(pmfs, &crossing);
            let atoms = product_atoms(&supports, EXACT_STATE_CAP)
                .map_err(CapacityError::StateSpaceTooLarge)?;
            let mut states = vec![0u32; net.edges().len()];
            for (assign, p) in atoms {
                for (i, &e) in crossing.iter().enumerate() {
                    states[e] = assign[i];
                }
                let rank = cut.transfer_matrix(net, &states)?.rank();
                total += p * rank as f64;
            }
        }
        StateModel::Joint(rows) => {
            for (assignment, p) in rows {
                if *p <= 0.0 {
                    continue;
                }
                let rank = cut.transfer_matrix(net, assignment)?.rank();
                total += p * rank as f64;
            }
        }
    }
    Ok(ExpectedRank { value: total, half_width: 0.0 })
}

fn mc_expected_rank(
    net: &Network,
    cut: &Cut,
    samples: usize,
    seed: u64,
    threads: usize,
) -> Result<ExpectedRank, CapacityError> {
    if samples == 0 {
        return Err(CapacityError::ZeroSamples);
    }
    let ranks: Vec<f64> = map_indexed(samples, threads, |i| {
        let mut rng =
            Stream::derive(seed, &[MC_TAG, cut.destination as u64, cut.mask(), i as u64]);
        let states = net.sample_state(&mut rng);
        cut.transfer_matrix(net, &states).expect("sampled state covers all edges").rank() as f64
    });
    let n = samples as f64;
    let mean = ranks.iter().sum::<f64>() / n;
    let half_width = if samples > 1 {
        let var = ranks.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
        1.96 * (var / n).sqrt()
    } else {
        0.0
    };
    Ok(ExpectedRank { value: mean, half_width })
}

/// Per-cut evaluation inside a capacity report.
#[derive(Debug, Clone, PartialEq)]
pub struct CutValue {
    pub members: Vec<usize>,
    pub mask: u64,
    pub value: f64,
    pub half_width: f64,
}

/// Result for one destination: the minimum over its cuts plus certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct DestinationMin {
    pub destination: usize,
    pub min_value: f64,
    pub half_width: f64,
    /// All cuts attaining the minimum (within half-widths), canonical order.
    pub argmin: Vec<CutValue>,
    pub per_cut: Vec<CutValue>,
}

/// A multicast capacity evaluation with min-cut certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityReport {
    /// Capacity in bits per network use.
    pub value_bits: f64,
    /// The per-symbol scale log2 q.
    pub log2_q: f64,
    pub method: RankMethod,
    pub per_destination: Vec<DestinationMin>,
}

/// Min-cut expected-rank capacity of a linear network: the minimum over
/// destinations and cuts of the expected transfer-matrix rank, times log2 q.
pub fn linear_capacity(
    net: &Network,
    method: RankMethod,
    threads: usize,
) -> Result<CapacityReport, CapacityError> {
    let field = net.field().ok_or(CapacityError::NotLinear)?;
    let log2_q = (field.order() as f64).log2();
    let mut per_destination = Vec::new();
    for &d in net.destinations() {
        let cuts = enumerate_cuts(net, d)?;
        let mut per_cut = Vec::with_capacity(cuts.len());
        for cut in &cuts {
            let er = expected_rank_threaded(net, cut, method, threads)?;
            per_cut.push(CutValue {
                members: cut.members(),
                mask: cut.mask(),
                value: er.value,
                half_width: er.half_width,
            });
        }
        let min_idx = per_cut
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.value.total_cmp(&b.value))
            .map(|(i, _)| i)
            .expect("at least one cut per destination");
        let min_value = per_cut[min_idx].value;
        let min_hw = per_cut[min_idx].half_width;
        let argmin: Vec<CutValue> = per_cut
            .iter()
            .filter(|c| c.value <= min_value + min_hw + c.half_width + TIE_TOL)
            .cloned()
            .collect();
        per_destination.push(DestinationMin {
            destination: d,
            min_value,
            half_width: min_hw,
            argmin,
            per_cut,
        });
    }
    let overall = per_destination
        .iter()
        .map(|d| d.min_value)
        .fold(f64::INFINITY, f64::min);
    Ok(CapacityReport { value_bits: overall * log2_q, log2_q, method, per_destination })
}

/// An input distribution over node transmissions.
#[derive(Debug, Clone, PartialEq)]
pub enum InputDist {
    /// One pmf per node (index v-1). Non-transmitting nodes should carry a
    /// point mass.
    Product(Vec<Pmf>),
    /// A joint pmf over the listed nodes' product alphabet, last node
    /// fastest. Unlisted nodes transmit the constant 0.
    Joint { nodes: Vec<usize>, probs: Vec<f64> },
}

impl InputDist {
    /// Uniform product distribution over every transmitting node.
    pub fn uniform(net: &Network) -> InputDist {
        let pmfs = net
            .nodes()
            .map(|v| {
                if net.out_degree(v) > 0 {
                    Pmf::uniform(net.input_size(v))
                } else {
                    Pmf::point(net.input_size(v).max(1), 0)
                }
            })
            .collect();
        InputDist::Product(pmfs)
    }
}

/// Conditional entropy of a cut's receiver-boundary observations given the
/// complement-side inputs that feed them and the relevant states, in bits.
pub fn cut_conditional_entropy(
    net: &Network,
    cut: &Cut,
    dist: &InputDist,
) -> Result<f64, CapacityError> {
    boundary_entropy(net, cut.receivers(), &|v| cut.contains(v), dist)
}

/// Core of the cut-set entropy: H(observations of `receivers` | inputs of
/// outside-the-cut feeders, relevant states).
///
/// The evaluation enumerates (generating inputs) x (relevant edge states),
/// computes each receiver's observation, and accumulates the joint over
/// (feeder inputs, states, observations). States on edges that do not touch
/// `receivers` are independent of everything evaluated here and are left
/// out; they do not change the conditional entropy. `receivers` must be
/// sorted ascending.
pub(crate) fn boundary_entropy(
    net: &Network,
    receivers: &[usize],
    is_inside: &dyn Fn(usize) -> bool,
    dist: &InputDist,
) -> Result<f64, CapacityError> {
    if receivers.is_empty() {
        return Ok(0.0);
    }
    // Edges into any receiver: crossing edges plus feeder edges.
    let relevant_edges: Vec<usize> = (0..net.edges().len())
        .filter(|&e| receivers.binary_search(&net.edges()[e].1).is_ok())
        .collect();
    // Nodes whose inputs reach a receiver: the cut's sender boundary plus
    // complement-side feeders.
    let mut generators: Vec<usize> = relevant_edges.iter().map(|&e| net.edges()[e].0).collect();
    generators.sort_unstable();
    generators.dedup();
    let feeders: Vec<usize> =
        generators.iter().copied().filter(|&u| !is_inside(u)).collect();

    let input_atoms: Vec<(Vec<u32>, f64)> = match dist {
        InputDist::Product(pmfs) => {
            if pmfs.len() != net.node_count() {
                return Err(CapacityError::MissingInput(net.node_count()));
            }
            let idx: Vec<usize> = generators.iter().map(|&u| u - 1).collect();
            let supports = supports_of(pmfs, &idx);
            product_atoms(&supports, ENTROPY_ENUM_CAP)
                .map_err(CapacityError::EnumerationTooLarge)?
        }
        InputDist::Joint { nodes, probs } => {
            // Marginalize the joint onto the generating nodes.
            let sizes: Vec<usize> = nodes.iter().map(|&v| net.input_size(v)).collect();
            let positions: Vec<Option<usize>> = generators
                .iter()
                .map(|&u| nodes.iter().position(|&v| v == u))
                .collect();
            let mut marginal: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
            let mut assignment = vec![0u32; nodes.len()];
            for &p in probs {
                if p > 0.0 {
                    let projected: Vec<u32> = positions
                        .iter()
                        .map(|pos| pos.map_or(0, |i| assignment[i]))
                        .collect();
                    *marginal.entry(projected).or_insert(0.0) += p;
                }
                for pos in (0..nodes.len()).rev() {
                    assignment[pos] += 1;
                    if (assignment[pos] as usize) < sizes[pos] {
                        break;
                    }
                    assignment[pos] = 0;
                }
            }
            marginal.into_iter().collect()
        }
    };

    let state_atoms: Vec<(Vec<u32>, f64)> = match net.state_model() {
        StateModel::PerEdgeIid(pmfs) => {
            let supports = supports_of(pmfs, &relevant_edges);
            let cap = ENTROPY_ENUM_CAP / input_atoms.len().max(1) as u64;
            product_atoms(&supports, cap.max(1)).map_err(|cells| {
                CapacityError::EnumerationTooLarge(cells * input_atoms.len() as u64)
            })?
        }
        StateModel::Joint(rows) => {
            // Merge support rows that agree on the relevant edges.
            let mut merged: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
            for (assignment, p) in rows {
                if *p > 0.0 {
                    let projected: Vec<u32> =
                        relevant_edges.iter().map(|&e| assignment[e]).collect();
                    *merged.entry(projected).or_insert(0.0) += p;
                }
            }
            merged.into_iter().collect()
        }
    };

    let cells = input_atoms.len() as u64 * state_atoms.len() as u64;
    if cells > ENTROPY_ENUM_CAP {
        return Err(CapacityError::EnumerationTooLarge(cells));
    }

    // Keys pack (feeder inputs, relevant states) for the conditioning side
    // and receiver observations for the target side.
    let feeder_positions: Vec<usize> = feeders
        .iter()
        .map(|&u| generators.binary_search(&u).expect("feeder is a generator"))
        .collect();
    let feeder_sizes: Vec<u64> = feeders.iter().map(|&u| net.input_size(u) as u64).collect();
    let state_sizes: Vec<u64> =
        relevant_edges.iter().map(|&e| net.edge_state_size(e) as u64).collect();
    let recv_sizes: Vec<u64> = receivers.iter().map(|&v| net.output_size(v) as u64).collect();

    let mut joint_map: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let mut cond_map: BTreeMap<u64, f64> = BTreeMap::new();
    let mut inputs = vec![0u32; net.node_count()];
    let mut states = vec![0u32; net.edges().len()];
    for (x_assign, px) in &input_atoms {
        if *px <= 0.0 {
            continue;
        }
        for (i, &u) in generators.iter().enumerate() {
            inputs[u - 1] = x_assign[i];
        }
        let mut cond_prefix = 0u64;
        for (k, &pos) in feeder_positions.iter().enumerate() {
            cond_prefix = cond_prefix * feeder_sizes[k] + x_assign[pos] as u64;
        }
        for (s_assign, ps) in &state_atoms {
            for (i, &e) in relevant_edges.iter().enumerate() {
                states[e] = s_assign[i];
            }
            let mut cond_key = cond_prefix;
            for (i, &s) in s_assign.iter().enumerate() {
                cond_key = cond_key * state_sizes[i] + s as u64;
            }
            let mut y_key = 0u64;
            for (k, &v) in receivers.iter().enumerate() {
                let y = net.observe(v, &inputs, &states) as u64;
                y_key = y_key * recv_sizes[k] + y;
            }
            let p = px * ps;
            if p > 0.0 {
                *joint_map.entry((cond_key, y_key)).or_insert(0.0) += p;
                *cond_map.entry(cond_key).or_insert(0.0) += p;
            }
        }
    }
    let joint_probs: Vec<f64> = joint_map.into_values().collect();
    let cond_probs: Vec<f64> = cond_map.into_values().collect();
    Ok(entropy_of(&joint_probs) - entropy_of(&cond_probs))
}

/// min over destinations and cuts of the cut conditional entropy.
pub fn min_cut_entropy(net: &Network, dist: &InputDist) -> Result<f64, CapacityError> {
    let mut best = f64::INFINITY;
    for &d in net.destinations() {
        for cut in enumerate_cuts(net, d)? {
            let h = cut_conditional_entropy(net, &cut, dist)?;
            if h < best {
                best = h;
            }
        }
    }
    Ok(best)
}

/// Which simplex the distribution search walks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Product,
    Joint,
}

/// Grid-search configuration: probabilities are multiples of 1/grid; each
/// ascent round re-optimizes one node at doubled resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistSearchConfig {
    pub mode: SearchMode,
    pub grid: usize,
    pub ascent_rounds: usize,
}

/// Outcome of a distribution search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    /// Best min-cut conditional entropy found, in bits per use.
    pub value_bits: f64,
    pub witness: InputDist,
    pub grid: usize,
    /// Number of objective evaluations performed.
    pub evaluations: usize,
}

/// All compositions of `total` into `parts` nonnegative integers, in
/// lexicographic order.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(total: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            let mut c = prefix.clone();
            c.push(total);
            out.push(c);
            return;
        }
        for first in 0..=total {
            prefix.push(first);
            rec(total - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, parts, &mut Vec::new(), &mut out);
    out
}

fn grid_pmf(counts: &[usize], grid: usize) -> Pmf {
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / grid as f64).collect();
    Pmf::new(probs).expect("grid point is a valid pmf")
}

fn decode_product_point(
    base: &[Pmf],
    transmitting: &[usize],
    node_grids: &[Vec<Vec<usize>>],
    grid: usize,
    mut code: usize,
) -> Vec<Pmf> {
    let mut pmfs = base.to_vec();
    for (i, &v) in transmitting.iter().enumerate() {
        let g = &node_grids[i];
        pmfs[v - 1] = grid_pmf(&g[code % g.len()], grid);
        code /= g.len();
    }
    pmfs
}

/// Maximizes the min-cut conditional entropy over product input
/// distributions on the grid, with optional coordinate-ascent refinement.
pub fn achievable_rate(
    net: &Network,
    cfg: DistSearchConfig,
    threads: usize,
) -> Result<SearchReport, CapacityError> {
    if cfg.mode != SearchMode::Product {
        return Err(CapacityError::WrongSearchMode);
    }
    if cfg.grid == 0 {
        return Err(CapacityError::ZeroGrid);
    }
    let transmitting = net.transmitting_nodes();
    let node_grids: Vec<Vec<Vec<usize>>> = transmitting
        .iter()
        .map(|&v| compositions(cfg.grid, net.input_size(v)))
        .collect();
    let mut combo_count: u64 = 1;
    for g in &node_grids {
        combo_count = combo_count.saturating_mul(g.len() as u64);
    }
    if combo_count > ENTROPY_ENUM_CAP {
        return Err(CapacityError::EnumerationTooLarge(combo_count));
    }

    let base_pmfs = match InputDist::uniform(net) {
        InputDist::Product(p) => p,
        _ => unreachable!(),
    };
    let combos = combo_count as usize;
    let values: Vec<Result<f64, CapacityError>> = map_indexed(combos, threads, |code| {
        let pmfs = decode_product_point(&base_pmfs, &transmitting, &node_grids, cfg.grid, code);
        min_cut_entropy(net, &InputDist::Product(pmfs))
    });
    let mut best_code = 0usize;
    let mut best_value = f64::NEG_INFINITY;
    for (code, v) in values.into_iter().enumerate() {
        let v = v?;
        if v > best_value {
            best_value = v;
            best_code = code;
        }
    }
    let mut best_pmfs =
        decode_product_point(&base_pmfs, &transmitting, &node_grids, cfg.grid, best_code);
    let mut evaluations = combos;

    // Coordinate ascent: each round doubles the per-node resolution and
    // keeps strict improvements, so the value never decreases.
    let mut resolution = cfg.grid;
    for _ in 0..cfg.ascent_rounds {
        resolution *= 2;
        for &node in &transmitting {
            let options = compositions(resolution, net.input_size(node));
            let candidates: Vec<Result<f64, CapacityError>> =
                map_indexed(options.len(), threads, |i| {
                    let mut pmfs = best_pmfs.clone();
                    pmfs[node - 1] = grid_pmf(&options[i], resolution);
                    min_cut_entropy(net, &InputDist::Product(pmfs))
                });
            evaluations += options.len();
            let mut winner: Option<(usize, f64)> = None;
            for (i, v) in candidates.into_iter().enumerate() {
                let v = v?;
                if v > best_value + 1e-12 && winner.map_or(true, |(_, wv)| wv < v) {
                    winner = Some((i, v));
                }
            }
            if let Some((i, v)) = winner {
                best_value = v;
                best_pmfs[node - 1] = grid_pmf(&options[i], resolution);
            }
        }
    }

    Ok(SearchReport {
        value_bits: best_value,
        witness: InputDist::Product(best_pmfs),
        grid: cfg.grid,
        evaluations,
    })
}

/// Maximizes the min-cut conditional entropy over joint input distributions
/// on the grid. The search also covers every product grid point (products
/// are joints too), so the bound never falls below the product-search value
/// at the same resolution.
pub fn cutset_bound(
    net: &Network,
    cfg: DistSearchConfig,
    threads: usize,
) -> Result<SearchReport, CapacityError> {
    if cfg.mode != SearchMode::Joint {
        return Err(CapacityError::WrongSearchMode);
    }
    if cfg.grid == 0 {
        return Err(CapacityError::ZeroGrid);
    }
    let transmitting = net.transmitting_nodes();
    let mut cells: u64 = 1;
    for &v in &transmitting {
        cells = cells.saturating_mul(net.input_size(v) as u64);
    }
    // The joint simplex has C(grid + cells - 1, cells - 1) points; keep the
    // cell count tiny.
    if cells > 64 {
        return Err(CapacityError::EnumerationTooLarge(cells));
    }
    let grid_points = compositions(cfg.grid, cells as usize);
    let values: Vec<Result<f64, CapacityError>> =
        map_indexed(grid_points.len(), threads, |i| {
            let probs: Vec<f64> =
                grid_points[i].iter().map(|&c| c as f64 / cfg.grid as f64).collect();
            let dist = InputDist::Joint { nodes: transmitting.clone(), probs };
            min_cut_entropy(net, &dist)
        });
    let mut best_idx = 0usize;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        let v = v?;
        if v > best_value {
            best_value = v;
            best_idx = i;
        }
    }
    let mut witness = InputDist::Joint {
        nodes: transmitting.clone(),
        probs: grid_points[best_idx].iter().map(|&c| c as f64 / cfg.grid as f64).collect(),
    };
    let mut evaluations = grid_points.len();

    let product = achievable_rate(
        net,
        DistSearchConfig {
            mode: SearchMode::Product,
            grid: cfg.grid,
            ascent_rounds: cfg.ascent_rounds,
        },
        threads,
    )?;
    evaluations += product.evaluations;
    if product.value_bits > best_value {
        best_value = product.value_bits;
        witness = product.witness;
    }

    Ok(SearchReport { value_bits: best_value, witness, grid: cfg.grid, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Field, FfMatrix};
    use crate::fixtures::{diamond_bernoulli, fig1};
    use crate::network::{Mode, Network};

    fn single_link(eps: f64, field: Field) -> Network {
        Network::erasure(2, vec![(1, 2)], [2], &[eps], field).unwrap()
    }

    #[test]
    fn fig1_cut_12_expected_rank_is_9_eighths() {
        let net = fig1(Field::prime(2).unwrap(), 0.5);
        let cut = Cut::new(&net, 4, [1, 2]).unwrap();
        let er = expected_rank(&net, &cut, RankMethod::Exact).unwrap();
        assert!((er.value - 1.125).abs() < 1e-15);
        assert_eq!(er.half_width, 0.0);

        // Independent oracle: enumerate the 8 assignments of the three
        // crossing coefficients and build the matrices by hand.
        let f = Field::prime(2).unwrap();
        let mut total = 0.0;
        for code in 0u32..8 {
            let (s13, s23, s24) = (code >> 2 & 1, code >> 1 & 1, code & 1);
            let m = FfMatrix::new(f, 2, 2, vec![s13, s23, 0, s24]).unwrap();
            total += m.rank() as f64 / 8.0;
        }
        assert!((er.value - total).abs() < 1e-15);
    }

    #[test]
    fn single_link_expected_rank() {
        let net = single_link(0.25, Field::prime(2).unwrap());
        let cut = Cut::new(&net, 2, [1]).unwrap();
        let er = expected_rank(&net, &cut, RankMethod::Exact).unwrap();
        assert!((er.value - 0.75).abs() < 1e-15);

        let sure = single_link(0.0, Field::prime(2).unwrap());
        let cut = Cut::new(&sure, 2, [1]).unwrap();
        let er = expected_rank(&sure, &cut, RankMethod::Exact).unwrap();
        assert!((er.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_tracks_exact() {
        let net = fig1(Field::prime(2).unwrap(), 0.5);
        let cut = Cut::new(&net, 4, [1, 2]).unwrap();
        let mut covered = 0;
        for seed in 0..20u64 {
            let mc = expected_rank(&net, &cut, RankMethod::MonteCarlo { samples: 10_000, seed })
                .unwrap();
            if (mc.value - 1.125).abs() <= mc.half_width {
                covered += 1;
            }
        }
        assert!(covered >= 17, "covered {covered}/20");
    }

    #[test]
    fn monte_carlo_is_thread_invariant() {
        let net = fig1(Field::prime(2).unwrap(), 0.5);
        let cut = Cut::new(&net, 4, [1, 2]).unwrap();
        let method = RankMethod::MonteCarlo { samples: 5000, seed: 11 };
        let a = expected_rank_threaded(&net, &cut, method, 1).unwrap();
        let b = expected_rank_threaded(&net, &cut, method, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn linear_capacity_single_link() {
        let net = single_link(0.25, Field::prime(2).unwrap());
        let report = linear_capacity(&net, RankMethod::Exact, 1).unwrap();
        assert!((report.value_bits - 0.75).abs() < 1e-12);

        // Coefficient uniform over GF(3) \ {0}: always full rank.
        let f3 = Field::prime(3).unwrap();
        let pmf = Pmf::new(vec![0.0, 0.5, 0.5]).unwrap();
        let net3 = Network::new(
            2,
            vec![(1, 2)],
            [2],
            Mode::Linear { field: f3 },
            StateModel::PerEdgeIid(vec![pmf]),
        );
        let report = linear_capacity(&net3, RankMethod::Exact, 1).unwrap();
        assert!((report.value_bits - 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn all_zero_coefficients_kill_capacity() {
        let f = Field::prime(2).unwrap();
        let net = Network::erasure(4, vec![(1, 2), (1, 3), (2, 4), (3, 4)], [4], &[1.0; 4], f)
            .unwrap();
        let report = linear_capacity(&net, RankMethod::Exact, 1).unwrap();
        assert_eq!(report.value_bits, 0.0);
        // Every cut attains the zero minimum.
        assert_eq!(report.per_destination[0].argmin.len(), 4);
    }

    #[test]
    fn dropping_a_destination_never_decreases_capacity() {
        let f = Field::prime(2).unwrap();
        let edges = vec![(1, 2), (1, 3), (2, 4), (3, 4), (2, 3)];
        let both = Network::erasure(4, edges.clone(), [3, 4], &[0.3; 5], f).unwrap();
        let only4 = Network::erasure(4, edges, [4], &[0.3; 5], f).unwrap();
        let c_both = linear_capacity(&both, RankMethod::Exact, 1).unwrap().value_bits;
        let c_only = linear_capacity(&only4, RankMethod::Exact, 1).unwrap().value_bits;
        assert!(c_only >= c_both - 1e-12);
    }

    #[test]
    fn identity_link_entropy_is_one_bit() {
        let net = single_link(0.0, Field::prime(2).unwrap());
        let cut = Cut::new(&net, 2, [1]).unwrap();
        let h = cut_conditional_entropy(&net, &cut, &InputDist::uniform(&net)).unwrap();
        assert!((h - 1.0).abs() < 1e-12);
    }

    #[test]
    fn erasure_link_entropy() {
        let net = single_link(0.25, Field::prime(2).unwrap());
        let cut = Cut::new(&net, 2, [1]).unwrap();
        let h = cut_conditional_entropy(&net, &cut, &InputDist::uniform(&net)).unwrap();
        assert!((h - 0.75).abs() < 1e-12);
    }

    #[test]
    fn fig1_rank_entropy_identity_on_cut_12() {
        let net = fig1(Field::prime(2).unwrap(), 0.5);
        let cut = Cut::new(&net, 4, [1, 2]).unwrap();
        let h = cut_conditional_entropy(&net, &cut, &InputDist::uniform(&net)).unwrap();
        assert!((h - 1.125).abs() < 1e-12);
    }

    #[test]
    fn rank_entropy_identity_across_cuts() {
        // Uniform product inputs make every cut's conditional entropy equal
        // its expected rank (times log2 q) in linear networks.
        for field in [Field::prime(2).unwrap(), Field::prime(3).unwrap()] {
            let net = diamond_bernoulli(field, 0.6);
            let uniform = InputDist::uniform(&net);
            for cut in enumerate_cuts(&net, 4).unwrap() {
                let h = cut_conditional_entropy(&net, &cut, &uniform).unwrap();
                let er = expected_rank(&net, &cut, RankMethod::Exact).unwrap();
                let expect = er.value * (field.order() as f64).log2();
                assert!(
                    (h - expect).abs() < 1e-9,
                    "GF({}) cut {:?}: H = {h}, scaled E rank = {expect}",
                    field.order(),
                    cut.members()
                );
            }
        }
    }

    #[test]
    fn achievable_rate_identity_link() {
        let net = single_link(0.0, Field::prime(2).unwrap());
        let cfg = DistSearchConfig { mode: SearchMode::Product, grid: 4, ascent_rounds: 0 };
        let report = achievable_rate(&net, cfg, 1).unwrap();
        assert!((report.value_bits - 1.0).abs() < 1e-12);
        match &report.witness {
            InputDist::Product(pmfs) => {
                assert!((pmfs[0].prob(0) - 0.5).abs() < 1e-12);
            }
            _ => panic!("product witness expected"),
        }
    }

    #[test]
    fn achievable_rate_matches_linear_capacity_at_uniform() {
        let net = diamond_bernoulli(Field::prime(2).unwrap(), 0.5);
        let capacity = linear_capacity(&net, RankMethod::Exact, 1).unwrap().value_bits;
        let at_uniform = min_cut_entropy(&net, &InputDist::uniform(&net)).unwrap();
        assert!((at_uniform - capacity).abs() < 1e-9);
        let cfg = DistSearchConfig { mode: SearchMode::Product, grid: 4, ascent_rounds: 0 };
        let searched = achievable_rate(&net, cfg, 2).unwrap();
        assert!((searched.value_bits - capacity).abs() < 1e-9);
    }

    #[test]
    fn dead_channel_nullifies_rate() {
        // Both coefficients identically zero on the only path.
        let f = Field::prime(2).unwrap();
        let net = Network::erasure(3, vec![(1, 2), (2, 3)], [3], &[1.0, 1.0], f).unwrap();
        let cfg = DistSearchConfig { mode: SearchMode::Product, grid: 2, ascent_rounds: 0 };
        let report = achievable_rate(&net, cfg, 1).unwrap();
        assert_eq!(report.value_bits, 0.0);
    }

    #[test]
    fn cutset_bound_identity_link_and_ordering() {
        let net = single_link(0.0, Field::prime(2).unwrap());
        let joint_cfg = DistSearchConfig { mode: SearchMode::Joint, grid: 4, ascent_rounds: 0 };
        let bound = cutset_bound(&net, joint_cfg, 1).unwrap();
        assert!((bound.value_bits - 1.0).abs() < 1e-12);

        let product_cfg =
            DistSearchConfig { mode: SearchMode::Product, grid: 4, ascent_rounds: 0 };
        let rate = achievable_rate(&net, product_cfg, 1).unwrap();
        assert!(bound.value_bits >= rate.value_bits - 1e-12);
    }

    #[test]
    fn cutset_bound_tight_on_fig1() {
        let net = fig1(Field::prime(2).unwrap(), 0.5);
        let capacity = linear_capacity(&net, RankMethod::Exact, 1).unwrap().value_bits;
        let cfg = DistSearchConfig { mode: SearchMode::Joint, grid: 4, ascent_rounds: 0 };
        let bound = cutset_bound(&net, cfg, 2).unwrap();
        assert!(
            (bound.value_bits - capacity).abs() < 1e-6,
            "bound {} vs capacity {capacity}",
            bound.value_bits
        );
    }

    #[test]
    fn achievable_rate_nondecreasing_in_grid() {
        let net = diamond_bernoulli(Field::prime(2).unwrap(), 0.7);
        let mut last = f64::NEG_INFINITY;
        for grid in [1usize, 2, 4] {
            let cfg = DistSearchConfig { mode: SearchMode::Product, grid, ascent_rounds: 0 };
            let v = achievable_rate(&net, cfg, 1).unwrap().value_bits;
            assert!(v >= last - 1e-12, "grid {grid}: {v} < {last}");
            last = v;
        }
    }

    #[test]
    fn ascent_never_decreases() {
        let net = fig1(Field::prime(2).unwrap(), 0.3);
        let plain = achievable_rate(
            &net,
            DistSearchConfig { mode: SearchMode::Product, grid: 2, ascent_rounds: 0 },
            1,
        )
        .unwrap();
        let refined = achievable_rate(
            &net,
            DistSearchConfig { mode: SearchMode::Product, grid: 2, ascent_rounds: 2 },
            1,
        )
        .unwrap();
        assert!(refined.value_bits >= plain.value_bits - 1e-12);
    }

    #[test]
    fn config_validation() {
        let net = single_link(0.0, Field::prime(2).unwrap());
        let bad = DistSearchConfig { mode: SearchMode::Joint, grid: 4, ascent_rounds: 0 };
        assert_eq!(achievable_rate(&net, bad, 1).unwrap_err(), CapacityError::WrongSearchMode);
        let zero = DistSearchConfig { mode: SearchMode::Product, grid: 0, ascent_rounds: 0 };
        assert_eq!(achievable_rate(&net, zero, 1).unwrap_err(), CapacityError::ZeroGrid);
        let cut = Cut::new(&net, 2, [1]).unwrap();
        assert_eq!(
            expected_rank(&net, &cut, RankMethod::MonteCarlo { samples: 0, seed: 1 })
                .unwrap_err(),
            CapacityError::ZeroSamples
        );
    }

    #[test]
    fn rank_entropy_identity_on_extension_field() {
        // GF(4) diamond with a mix of erased and pinned coefficients.
        let f4 = Field::binary_ext(2).unwrap();
        let net = diamond_bernoulli(f4, 0.5);
        let uniform = InputDist::uniform(&net);
        for cut in enumerate_cuts(&net, 4).unwrap() {
            let h = cut_conditional_entropy(&net, &cut, &uniform).unwrap();
            let er = expected_rank(&net, &cut, RankMethod::Exact).unwrap();
            assert!((h - er.value * 2.0).abs() < 1e-9, "cut {:?}", cut.members());
        }
    }

    #[test]
    fn joint_state_expected_rank() {
        // Two edges with perfectly correlated states.
        let f = Field::prime(2).unwrap();
        let net = Network::new(
            3,
            vec![(1, 2), (1, 3)],
            [3],
            Mode::Linear { field: f },
            StateModel::Joint(vec![(vec![0, 0], 0.5), (vec![1, 1], 0.5)]),
        );
        let cut = Cut::new(&net, 3, [1, 2]).unwrap();
        // Crossing edge (1,3) alone; its marginal is Bernoulli(1/2).
        let er = expected_rank(&net, &cut, RankMethod::Exact).unwrap();
        assert!((er.value - 0.5).abs() < 1e-15);
    }
}
