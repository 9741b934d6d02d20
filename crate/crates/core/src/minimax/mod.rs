//! Numerical redundancy machinery: Bayes redundancy (mutual information),
//! single-letter minimax redundancy, the tail games `T_m` and `T̃_m`,
//! Hellinger and packing lower bounds, and limit diagnostics.
//!
//! All game values are certified: a solution carries both the primal value
//! `sup_p` at the returned coding distribution (an upper bound on the game)
//! and the gap to the best Bayes lower bound found, so `value − duality_gap`
//! is a rigorous lower bound and `value` a rigorous upper bound.

mod bayes;
mod bounds;
mod solver;

use std::fmt;

use serde::Serialize;

use crate::num::Real;
use crate::pmf::{Pmf, PmfError, Symbol};

pub use bayes::{bayes_redundancy, bayes_redundancy_mc, BayesRedundancy};
pub use bounds::{
    fekete_limit, hellinger_lower_bound, max_sequence_limit, packing_lower_bound,
    partition_diameter, FeketeReport,
};
pub use solver::{
    minimax_redundancy, minimax_redundancy_seq, minimax_redundancy_with, tail_minimax,
    tail_minimax_normalized, tail_minimax_tilde, tail_minimax_tilde_with, tail_minimax_with,
    tail_redundancy_curve, primal_tail_value, TailCurvePoint,
};

#[derive(Debug, Clone, PartialEq)]
pub enum MinimaxError {
    /// Exact computation would exceed the enumeration guard.
    GuardExceeded { needed: f64, guard: f64 },
    BadInput(String),
    BadPartition(String),
    LengthMismatch { expected: usize, got: usize },
    Pmf(PmfError),
}

impl fmt::Display for MinimaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MinimaxError::GuardExceeded { needed, guard } => {
                write!(f, "exact enumeration needs {needed:.3e} states, guard is {guard:.3e}")
            }
            MinimaxError::BadInput(msg) => write!(f, "bad input: {msg}"),
            MinimaxError::BadPartition(msg) => write!(f, "bad partition: {msg}"),
            MinimaxError::LengthMismatch { expected, got } => {
                write!(f, "sequence length mismatch: expected {expected}, got {got}")
            }
            MinimaxError::Pmf(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for MinimaxError {}

impl From<PmfError> for MinimaxError {
    fn from(e: PmfError) -> Self {
        MinimaxError::Pmf(e)
    }
}

/// Prior over the members of a family.
#[derive(Debug, Clone)]
pub struct Prior<T>(Vec<T>);

impl<T: Real> Prior<T> {
    pub fn new(weights: Vec<T>) -> Result<Self, MinimaxError> {
        if weights.is_empty() {
            return Err(MinimaxError::BadInput("empty prior".into()));
        }
        let mut total = T::zero();
        for &w in &weights {
            if w < T::zero() || !w.is_finite() {
                return Err(MinimaxError::BadInput("prior weights must be in [0, 1]".into()));
            }
            total = total + w;
        }
        if (total - T::one()).abs() > T::normalization_tol() {
            return Err(MinimaxError::BadInput(format!(
                "prior sums to {total}, expected 1"
            )));
        }
        Ok(Prior(weights))
    }

    pub fn uniform(len: usize) -> Self {
        Prior(vec![T::of(1.0 / len as f64); len])
    }

    /// All mass on one member.
    pub fn point(len: usize, index: usize) -> Self {
        let mut w = vec![T::zero(); len];
        w[index] = T::one();
        Prior(w)
    }

    pub fn weights(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Options for the game solvers.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Target certified duality gap in bits.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-6,
            max_iters: 100_000,
        }
    }
}

/// Output of a minimax game solve.
///
/// `value` is the primal value `sup_p` at `q_star`, hence a guaranteed upper
/// bound; `value − duality_gap` is the best Bayes lower bound found.
#[derive(Debug, Clone, Serialize)]
#[serde(bound(serialize = "T: Real + Serialize"))]
pub struct MinimaxSolution<T> {
    #[serde(serialize_with = "serialize_pmf_atoms")]
    pub q_star: Pmf<T>,
    pub value: T,
    pub duality_gap: T,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the primal value kept growing across successive doublings of
    /// the iteration budget — the numerical signature of an unbounded game.
    pub diverging: bool,
}

fn serialize_pmf_atoms<S, T>(pmf: &Pmf<T>, s: S) -> Result<S::Ok, S::Error>
where
    S: serde::Serializer,
    T: Real + Serialize,
{
    // Symbols reach 2^64 and beyond, so emit them as decimal strings.
    let atoms: Vec<(String, T)> = pmf
        .atoms()
        .iter()
        .map(|&(x, p)| (x.to_string(), p))
        .collect();
    serde::Serialize::serialize(&atoms, s)
}

pub(crate) fn union_symbols<T: Real>(members: &[Pmf<T>], threshold: Symbol) -> Vec<Symbol> {
    let mut symbols: Vec<Symbol> = members
        .iter()
        .flat_map(|p| p.atoms().iter().map(|&(x, _)| x))
        .filter(|&x| x >= threshold)
        .collect();
    symbols.sort_unstable();
    symbols.dedup();
    symbols
}
