//! Probability mass functions, entropies over enumerable joints, and the
//! robust typicality test used by the general-network decoder.
//!
//! All entropies are in bits.

use thiserror::Error;

/// Probabilities must sum to 1 within this slack for a [`Pmf`].
pub const PMF_SUM_TOL: f64 = 1e-12;
/// Joint tables get a looser slack since they are often built by
/// accumulating many products.
pub const JOINT_SUM_TOL: f64 = 1e-9;
/// Hard cap on flat joint-table cells.
pub const JOINT_CELL_CAP: usize = 1 << 24;

#[derive(Debug, Error, PartialEq)]
pub enum InfoError {
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("negative probability {0}")]
    NegativeProbability(f64),
    #[error("joint table would need {0} cells (cap {JOINT_CELL_CAP})")]
    TableTooLarge(u128),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("variable {0} appears in both targets and conditioning set")]
    OverlappingVariables(String),
    #[error("sequence lengths differ")]
    LengthMismatch,
    #[error("symbol {0} is outside the support")]
    SymbolOutOfRange(usize),
    #[error("epsilon must be positive")]
    NonPositiveEps,
    #[error("probability vector is empty")]
    EmptySupport,
}

/// A pmf over an indexed finite support `0..len`. Zero atoms are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self, InfoError> {
        if probs.is_empty() {
            return Err(InfoError::EmptySupport);
        }
        if let Some(&bad) = probs.iter().find(|&&p| p < 0.0) {
            return Err(InfoError::NegativeProbability(bad));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOL {
            return Err(InfoError::NotNormalized(total));
        }
        Ok(Pmf { probs })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        Pmf { probs: vec![1.0 / n as f64; n] }
    }

    /// Point mass on `atom` within a support of size `n`.
    pub fn point(n: usize, atom: usize) -> Self {
        assert!(atom < n);
        let mut probs = vec![0.0; n];
        probs[atom] = 1.0;
        Pmf { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, atom: usize) -> f64 {
        self.probs[atom]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Shannon entropy in bits, with 0 log 0 = 0.
    pub fn entropy(&self) -> f64 {
        entropy_of(&self.probs)
    }
}

pub(crate) fn entropy_of(probs: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in probs {
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    h
}

/// One variable of a joint table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Var {
    pub name: String,
    pub size: usize,
}

/// A dense joint distribution over a product alphabet, stored row-major with
/// the last variable fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    vars: Vec<Var>,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn new(vars: Vec<Var>, probs: Vec<f64>) -> Result<Self, InfoError> {
        let mut cells: u128 = 1;
        for v in &vars {
            cells = cells.saturating_mul(v.size.max(1) as u128);
        }
        if cells > JOINT_CELL_CAP as u128 {
            return Err(InfoError::TableTooLarge(cells));
        }
        if probs.len() as u128 != cells {
            return Err(InfoError::NotNormalized(probs.len() as f64));
        }
        if let Some(&bad) = probs.iter().find(|&&p| p < 0.0) {
            return Err(InfoError::NegativeProbability(bad));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > JOINT_SUM_TOL {
            return Err(InfoError::NotNormalized(total));
        }
        Ok(JointTable { vars, probs })
    }

    /// Builds a joint by evaluating `prob` on every cell of the product
    /// alphabet. Cells are visited last-variable-fastest.
    pub fn from_fn(
        vars: Vec<Var>,
        mut prob: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self, InfoError> {
        let mut cells: u128 = 1;
        for v in &vars {
            cells = cells.saturating_mul(v.size.max(1) as u128);
        }
        if cells > JOINT_CELL_CAP as u128 {
            return Err(InfoError::TableTooLarge(cells));
        }
        let cells = cells as usize;
        let mut assignment = vec![0usize; vars.len()];
        let mut probs = Vec::with_capacity(cells);
        for _ in 0..cells {
            probs.push(prob(&assignment));
            // odometer increment, last variable fastest
            for pos in (0..vars.len()).rev() {
                assignment[pos] += 1;
                if assignment[pos] < vars[pos].size {
                    break;
                }
                assignment[pos] = 0;
            }
        }
        Self::new(vars, probs)
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn var_index(&self, name: &str) -> Result<usize, InfoError> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| InfoError::UnknownVariable(name.to_string()))
    }

    /// Flat cell index of a full assignment.
    pub fn cell_index(&self, assignment: &[usize]) -> usize {
        debug_assert_eq!(assignment.len(), self.vars.len());
        let mut idx = 0usize;
        for (pos, &a) in assignment.iter().enumerate() {
            debug_assert!(a < self.vars[pos].size);
            idx = idx * self.vars[pos].size + a;
        }
        idx
    }

    /// Entropy in bits of the marginal over `names` (the full joint entropy
    /// when `names` covers every variable).
    pub fn marginal_entropy(&self, names: &[&str]) -> Result<f64, InfoError> {
        let idxs: Vec<usize> =
            names.iter().map(|n| self.var_index(n)).collect::<Result<_, _>>()?;
        let mut sizes = Vec::with_capacity(idxs.len());
        let mut stride = Vec::with_capacity(idxs.len());
        let mut total = 1usize;
        for &i in &idxs {
            sizes.push(self.vars[i].size);
            total *= self.vars[i].size;
        }
        let mut s = 1usize;
        for &sz in sizes.iter().rev() {
            stride.push(s);
            s *= sz;
        }
        stride.reverse();

        let mut marginal = vec![0.0f64; total];
        let mut assignment = vec![0usize; self.vars.len()];
        for &p in &self.probs {
            if p > 0.0 {
                let mut key = 0usize;
                for (k, &i) in idxs.iter().enumerate() {
                    key += assignment[i] * stride[k];
                }
                marginal[key] += p;
            }
            for pos in (0..self.vars.len()).rev() {
                assignment[pos] += 1;
                if assignment[pos] < self.vars[pos].size {
                    break;
                }
                assignment[pos] = 0;
            }
        }
        Ok(entropy_of(&marginal))
    }

    /// H(targets | given) = H(targets, given) - H(given).
    pub fn conditional_entropy(&self, targets: &[&str], given: &[&str]) -> Result<f64, InfoError> {
        for t in targets {
            if given.contains(t) {
                return Err(InfoError::OverlappingVariables(t.to_string()));
            }
        }
        let mut all: Vec<&str> = targets.to_vec();
        all.extend_from_slice(given);
        let joint = self.marginal_entropy(&all)?;
        if given.is_empty() {
            return Ok(joint);
        }
        let cond = self.marginal_entropy(given)?;
        Ok(joint - cond)
    }
}

/// Robust typicality: every symbol's relative frequency is within a
/// multiplicative `eps` of its probability, and zero-probability symbols do
/// not appear. The empty sequence is typical by convention.
pub fn typical(p: &Pmf, xs: &[usize], eps: f64) -> Result<bool, InfoError> {
    if eps <= 0.0 {
        return Err(InfoError::NonPositiveEps);
    }
    typical_with_counts(p.probs(), xs, eps)
}

fn typical_with_counts(probs: &[f64], xs: &[usize], eps: f64) -> Result<bool, InfoError> {
    if xs.is_empty() {
        return Ok(true);
    }
    let n = xs.len() as f64;
    let mut counts = vec![0usize; probs.len()];
    for &x in xs {
        if x >= probs.len() {
            return Err(InfoError::SymbolOutOfRange(x));
        }
        counts[x] += 1;
    }
    for (a, &c) in counts.iter().enumerate() {
        let p = probs[a];
        if p == 0.0 {
            if c > 0 {
                return Ok(false);
            }
            continue;
        }
        if (c as f64 / n - p).abs() > eps * p {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Joint typicality of parallel sequences against a joint table: the induced
/// sequence of joint symbols must be typical for the flattened pmf. One
/// sequence per table variable, equal lengths. `eps = 0` is allowed here and
/// demands exact empirical frequencies.
pub fn joint_typical(
    joint: &JointTable,
    sequences: &[&[usize]],
    eps: f64,
) -> Result<bool, InfoError> {
    if sequences.len() != joint.vars().len() {
        return Err(InfoError::LengthMismatch);
    }
    if eps < 0.0 {
        return Err(InfoError::NonPositiveEps);
    }
    let n = sequences.first().map_or(0, |s| s.len());
    if sequences.iter().any(|s| s.len() != n) {
        return Err(InfoError::LengthMismatch);
    }
    if n == 0 {
        return Ok(true);
    }
    let mut flat = Vec::with_capacity(n);
    let mut assignment = vec![0usize; sequences.len()];
    for t in 0..n {
        for (v, seq) in sequences.iter().enumerate() {
            if seq[t] >= joint.vars()[v].size {
                return Err(InfoError::SymbolOutOfRange(seq[t]));
            }
            assignment[v] = seq[t];
        }
        flat.push(joint.cell_index(&assignment));
    }
    if eps == 0.0 {
        // Degenerate tolerance: exact match of frequencies required.
        let nn = flat.len() as f64;
        let mut counts = vec![0usize; joint.probs().len()];
        for &c in &flat {
            counts[c] += 1;
        }
        for (cell, &c) in counts.iter().enumerate() {
            if (c as f64 / nn - joint.probs()[cell]).abs() > 0.0 {
                return Ok(false);
            }
        }
        return Ok(true);
    }
    typical_with_counts(joint.probs(), &flat, eps)
}
