//! Probability mass functions over the naturals: divergences, quantiles,
//! and the tail functionals everything else is built from.
//!
//! A [`Pmf`] stores explicit sorted atoms plus an optional *analytic residual
//! tail*: a single scalar of mass known to lie at or beyond a recorded start
//! symbol. Residuals let constructions with closed-form tails (block laws,
//! heavy-tailed coding distributions) be represented faithfully without
//! materializing astronomically many atoms. Operations that would need the
//! unresolved region refuse with [`PmfError::UnresolvedTail`] rather than
//! silently truncate.
//!
//! Conventions used throughout:
//! - all logarithms are base 2 and all information quantities are in bits;
//! - KL divergence of `p` against a `q` that misses part of `p`'s support is
//!   the *distinguished value* `+∞`, not an error, because the surrounding
//!   theory reasons about infinite redundancy as a first-class outcome;
//! - Hellinger distance is the squared, unnormalized form
//!   `Σ (√p(x) − √q(x))²`, ranging in `[0, 2]`. Other sources halve this or
//!   take its square root; callers comparing against external tables should
//!   convert.

use std::fmt;

use crate::num::{KahanSum, Real};

/// Alphabet symbol. Wide enough for atoms at 2^64 and beyond, which the
/// two-point spike family reaches for small spike masses.
pub type Symbol = u128;

/// Errors from constructing or querying a [`Pmf`].
#[derive(Debug, Clone, PartialEq)]
pub enum PmfError {
    /// Total mass deviates from 1 beyond tolerance.
    Normalization { total: f64 },
    /// The same symbol appears twice in the atom list.
    DuplicateSymbol { symbol: Symbol },
    /// An atom carries a negative (or non-finite) probability.
    InvalidProb { symbol: Symbol, prob: f64 },
    /// Residual tail mass is positive but the start symbol does not exceed
    /// every atom, or is missing.
    BadResidualTail,
    /// The operation needs probabilities in the analytically-unresolved
    /// residual region.
    UnresolvedTail,
    /// Conditional tail requested past the entire support.
    EmptyTail,
    /// Quantile level outside (0, 1).
    BadLevel { level: f64 },
}

impl fmt::Display for PmfError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PmfError::Normalization { total } => {
                write!(f, "atom and tail mass sums to {total}, expected 1")
            }
            PmfError::DuplicateSymbol { symbol } => {
                write!(f, "duplicate symbol {symbol} in atom list")
            }
            PmfError::InvalidProb { symbol, prob } => {
                write!(f, "invalid probability {prob} at symbol {symbol}")
            }
            PmfError::BadResidualTail => {
                write!(f, "residual tail start must exceed every atom symbol")
            }
            PmfError::UnresolvedTail => {
                write!(f, "operation requires symbols inside the unresolved residual tail")
            }
            PmfError::EmptyTail => write!(f, "no mass at or beyond the requested threshold"),
            PmfError::BadLevel { level } => {
                write!(f, "quantile level {level} outside the resolvable range")
            }
        }
    }
}

impl std::error::Error for PmfError {}

/// A probability mass function over the naturals.
///
/// Invariants (enforced at construction):
/// - atom symbols strictly increasing, probabilities nonnegative;
/// - `Σ atom probs + residual_tail_mass = 1` within [`Real::normalization_tol`];
/// - if the residual mass is positive, its start symbol exceeds every atom.
///
/// Atoms with exactly zero probability are dropped, so `prob(x) == 0` means
/// "resolved and zero" while the residual region answers `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf<T> {
    atoms: Vec<(Symbol, T)>,
    residual_tail_mass: T,
    residual_tail_start: Option<Symbol>,
}

impl<T: Real> Pmf<T> {
    /// Build a fully-resolved pmf from `(symbol, prob)` pairs.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (Symbol, T)>) -> Result<Self, PmfError> {
        Self::build(atoms, T::zero(), None)
    }

    /// Build a pmf whose mass beyond `tail_start` is known only in aggregate.
    pub fn with_residual_tail(
        atoms: impl IntoIterator<Item = (Symbol, T)>,
        tail_mass: T,
        tail_start: Symbol,
    ) -> Result<Self, PmfError> {
        Self::build(atoms, tail_mass, Some(tail_start))
    }

    fn build(
        atoms: impl IntoIterator<Item = (Symbol, T)>,
        tail_mass: T,
        tail_start: Option<Symbol>,
    ) -> Result<Self, PmfError> {
        let mut atoms: Vec<(Symbol, T)> = atoms.into_iter().collect();
        atoms.sort_by_key(|&(x, _)| x);
        for w in atoms.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(PmfError::DuplicateSymbol { symbol: w[0].0 });
            }
        }
        let mut total = KahanSum::new();
        for &(x, p) in &atoms {
            if !(p >= T::zero()) || !p.is_finite() {
                return Err(PmfError::InvalidProb {
                    symbol: x,
                    prob: p.to_f64().unwrap_or(f64::NAN),
                });
            }
            total.add(p);
        }
        if tail_mass < T::zero() || !tail_mass.is_finite() {
            return Err(PmfError::InvalidProb {
                symbol: tail_start.unwrap_or(0),
                prob: tail_mass.to_f64().unwrap_or(f64::NAN),
            });
        }
        total.add(tail_mass);
        let t = total.value();
        if (t - T::one()).abs() > T::normalization_tol() {
            return Err(PmfError::Normalization {
                total: t.to_f64().unwrap_or(f64::NAN),
            });
        }
        let residual_tail_start = if tail_mass > T::zero() {
            let start = tail_start.ok_or(PmfError::BadResidualTail)?;
            if let Some(&(last, _)) = atoms.last() {
                if start <= last {
                    return Err(PmfError::BadResidualTail);
                }
            }
            Some(start)
        } else {
            None
        };
        atoms.retain(|&(_, p)| p > T::zero());
        Ok(Pmf {
            atoms,
            residual_tail_mass: if residual_tail_start.is_some() {
                tail_mass
            } else {
                T::zero()
            },
            residual_tail_start,
        })
    }

    /// Point mass at a single symbol.
    pub fn point_mass(symbol: Symbol) -> Self {
        Pmf {
            atoms: vec![(symbol, T::one())],
            residual_tail_mass: T::zero(),
            residual_tail_start: None,
        }
    }

    pub fn atoms(&self) -> &[(Symbol, T)] {
        &self.atoms
    }

    pub fn residual_tail_mass(&self) -> T {
        self.residual_tail_mass
    }

    pub fn residual_tail_start(&self) -> Option<Symbol> {
        self.residual_tail_start
    }

    /// True when every symbol's probability is explicitly known.
    pub fn is_fully_resolved(&self) -> bool {
        self.residual_tail_start.is_none()
    }

    /// Largest atom symbol, if any.
    pub fn max_atom(&self) -> Option<Symbol> {
        self.atoms.last().map(|&(x, _)| x)
    }

    /// Probability of `x`, or `None` when `x` falls in the unresolved
    /// residual region.
    pub fn prob(&self, x: Symbol) -> Option<T> {
        if let Some(start) = self.residual_tail_start {
            if x >= start {
                return None;
            }
        }
        match self.atoms.binary_search_by_key(&x, |&(s, _)| s) {
            Ok(i) => Some(self.atoms[i].1),
            Err(_) => Some(T::zero()),
        }
    }
}

/// A probability law given by pointwise evaluation rather than an atom list.
///
/// Used for coding distributions with closed-form values on all of the
/// naturals (block laws, heavy-tailed laws), whose deep members cannot be
/// materialized but are needed as KL comparison points at arbitrary symbols.
pub trait MassFn<T> {
    fn prob_at(&self, x: Symbol) -> T;
}

impl<T: Real> MassFn<T> for Pmf<T> {
    /// Panics on unresolved symbols; callers pairing a truncated law with
    /// deep supports should use the closed-form law instead.
    fn prob_at(&self, x: Symbol) -> T {
        self.prob(x)
            .expect("prob_at hit the unresolved residual region")
    }
}

/// A view of the mass of `source` at or beyond a threshold.
#[derive(Debug, Clone)]
pub struct TailView<'a, T> {
    pub source: &'a Pmf<T>,
    pub threshold: Symbol,
    pub tail_mass: T,
}

impl<'a, T: Real> TailView<'a, T> {
    pub fn new(source: &'a Pmf<T>, threshold: Symbol) -> Result<Self, PmfError> {
        Ok(TailView {
            source,
            threshold,
            tail_mass: tail_mass(source, threshold)?,
        })
    }
}

/// `Σ_x p(x) log₂(p(x)/q(x))` in bits.
///
/// `p` must be fully resolved. `q` may carry a residual tail as long as every
/// positive atom of `p` lies in `q`'s resolved region (the sum only ever
/// evaluates `q` on `p`'s support). Support mismatch — `p` positive where `q`
/// is zero — yields `Ok(+∞)`.
pub fn kl_divergence<T: Real>(p: &Pmf<T>, q: &Pmf<T>) -> Result<T, PmfError> {
    tail_kl(p, q, 0)
}

/// `Σ_{x≥m} p(x) log₂(p(x)/q(x))` in bits; may be negative.
///
/// Same resolution rules as [`kl_divergence`]. An `m` above `p`'s entire
/// support gives 0 (empty sum).
pub fn tail_kl<T: Real>(p: &Pmf<T>, q: &Pmf<T>, m: Symbol) -> Result<T, PmfError> {
    if !p.is_fully_resolved() {
        return Err(PmfError::UnresolvedTail);
    }
    let mut acc = KahanSum::new();
    for &(x, px) in p.atoms() {
        if x < m || px <= T::zero() {
            continue;
        }
        let qx = q.prob(x).ok_or(PmfError::UnresolvedTail)?;
        if qx <= T::zero() {
            return Ok(T::infinity());
        }
        acc.add(px * (px / qx).log2());
    }
    Ok(acc.value())
}

/// KL divergence against a law given in closed form.
pub fn kl_divergence_vs_law<T: Real>(p: &Pmf<T>, q: &impl MassFn<T>) -> Result<T, PmfError> {
    tail_kl_vs_law(p, q, 0)
}

/// Tail KL against a law given in closed form.
pub fn tail_kl_vs_law<T: Real>(
    p: &Pmf<T>,
    q: &impl MassFn<T>,
    m: Symbol,
) -> Result<T, PmfError> {
    if !p.is_fully_resolved() {
        return Err(PmfError::UnresolvedTail);
    }
    let mut acc = KahanSum::new();
    for &(x, px) in p.atoms() {
        if x < m || px <= T::zero() {
            continue;
        }
        let qx = q.prob_at(x);
        if qx <= T::zero() {
            return Ok(T::infinity());
        }
        acc.add(px * (px / qx).log2());
    }
    Ok(acc.value())
}

/// Squared Hellinger distance `Σ (√p(x) − √q(x))²`, in `[0, 2]`.
///
/// Needs both arguments fully resolved: unlike KL, the sum sees `q`'s whole
/// support, not just `p`'s.
pub fn hellinger<T: Real>(p: &Pmf<T>, q: &Pmf<T>) -> Result<T, PmfError> {
    if !p.is_fully_resolved() || !q.is_fully_resolved() {
        return Err(PmfError::UnresolvedTail);
    }
    let mut acc = KahanSum::new();
    let (pa, qa) = (p.atoms(), q.atoms());
    let (mut i, mut j) = (0, 0);
    while i < pa.len() || j < qa.len() {
        let (px, qx) = match (pa.get(i), qa.get(j)) {
            (Some(&(xs, xp)), Some(&(ys, yp))) => {
                if xs == ys {
                    i += 1;
                    j += 1;
                    (xp, yp)
                } else if xs < ys {
                    i += 1;
                    (xp, T::zero())
                } else {
                    j += 1;
                    (T::zero(), yp)
                }
            }
            (Some(&(_, xp)), None) => {
                i += 1;
                (xp, T::zero())
            }
            (None, Some(&(_, yp))) => {
                j += 1;
                (T::zero(), yp)
            }
            (None, None) => break,
        };
        let d = px.sqrt() - qx.sqrt();
        acc.add(d * d);
    }
    Ok(acc.value())
}

/// `p(x ≥ m)`, using the analytic residual when present.
///
/// Errors with [`PmfError::UnresolvedTail`] only when the threshold cuts
/// *into* the residual region (`m` strictly beyond the residual start), where
/// the split of the residual mass is unknowable.
pub fn tail_mass<T: Real>(p: &Pmf<T>, m: Symbol) -> Result<T, PmfError> {
    if let Some(start) = p.residual_tail_start {
        if m > start {
            return Err(PmfError::UnresolvedTail);
        }
    }
    let mut acc = KahanSum::new();
    for &(x, px) in p.atoms().iter().rev() {
        if x < m {
            break;
        }
        acc.add(px);
    }
    acc.add(p.residual_tail_mass);
    Ok(acc.value().min(T::one()))
}

/// Smallest symbol whose cumulative mass reaches `level`.
///
/// `level` must lie in `(0, 1)` and strictly below `1 − residual_tail_mass`;
/// otherwise the quantile sits in the unresolved region.
pub fn quantile<T: Real>(p: &Pmf<T>, level: T) -> Result<Symbol, PmfError> {
    if !(level > T::zero() && level < T::one()) {
        return Err(PmfError::BadLevel {
            level: level.to_f64().unwrap_or(f64::NAN),
        });
    }
    if level >= T::one() - p.residual_tail_mass() {
        return Err(PmfError::UnresolvedTail);
    }
    let mut acc = KahanSum::new();
    for &(x, px) in p.atoms() {
        acc.add(px);
        if acc.value() >= level {
            return Ok(x);
        }
    }
    // Cumulative never reached the level despite the resolvability check;
    // can only happen through rounding at the very top of the range.
    Err(PmfError::UnresolvedTail)
}

/// Distribution of `X` given `X ≥ m`: `p'(x) = p(x) / p(x ≥ m)`.
pub fn conditional_tail<T: Real>(p: &Pmf<T>, m: Symbol) -> Result<Pmf<T>, PmfError> {
    if !p.is_fully_resolved() {
        return Err(PmfError::UnresolvedTail);
    }
    let tau = tail_mass(p, m)?;
    if tau <= T::zero() {
        return Err(PmfError::EmptyTail);
    }
    let atoms: Vec<(Symbol, T)> = p
        .atoms()
        .iter()
        .filter(|&&(x, _)| x >= m)
        .map(|&(x, px)| (x, px / tau))
        .collect();
    // Renormalized explicitly so the constructor's 1e-9 check is immune to
    // the division rounding.
    let total = kahan_total(atoms.iter().map(|&(_, p)| p));
    Pmf::from_atoms(atoms.into_iter().map(|(x, p)| (x, p / total)))
}

/// Shannon entropy `Σ p(x) log₂(1/p(x))` in bits, with `0·log(1/0) = 0`.
pub fn entropy<T: Real>(p: &Pmf<T>) -> Result<T, PmfError> {
    if !p.is_fully_resolved() {
        return Err(PmfError::UnresolvedTail);
    }
    let mut acc = KahanSum::new();
    for &(_, px) in p.atoms() {
        if px > T::zero() {
            acc.add(-px * px.log2());
        }
    }
    Ok(acc.value())
}

fn kahan_total<T: Real>(iter: impl Iterator<Item = T>) -> T {
    let mut acc = KahanSum::new();
    for v in iter {
        acc.add(v);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pmf(atoms: &[(Symbol, f64)]) -> Pmf<f64> {
        Pmf::from_atoms(atoms.iter().copied()).unwrap()
    }

    #[test]
    fn make_pmf_accepts_exact_mass() {
        let p = pmf(&[(1, 0.5), (4, 0.5)]);
        assert_eq!(p.atoms().len(), 2);
        assert!(p.is_fully_resolved());
    }

    #[test]
    fn make_pmf_accepts_residual_tail() {
        let p = Pmf::with_residual_tail([(1, 0.5), (4, 0.4)], 0.1, 5).unwrap();
        assert_eq!(p.residual_tail_mass(), 0.1);
        assert_eq!(p.residual_tail_start(), Some(5));
    }

    #[test]
    fn make_pmf_rejects_bad_mass() {
        let err = Pmf::from_atoms([(1u128, 0.6), (4, 0.6)]).unwrap_err();
        assert!(matches!(err, PmfError::Normalization { .. }));
    }

    #[test]
    fn make_pmf_rejects_duplicates_and_negatives() {
        let err = Pmf::from_atoms([(3u128, 0.5), (3, 0.5)]).unwrap_err();
        assert!(matches!(err, PmfError::DuplicateSymbol { symbol: 3 }));
        let err = Pmf::from_atoms([(1u128, 1.2), (2, -0.2)]).unwrap_err();
        assert!(matches!(err, PmfError::InvalidProb { .. }));
    }

    #[test]
    fn make_pmf_rejects_tail_start_inside_atoms() {
        let err = Pmf::with_residual_tail([(1u128, 0.5), (4, 0.4)], 0.1, 4).unwrap_err();
        assert!(matches!(err, PmfError::BadResidualTail));
    }

    #[test]
    fn zero_prob_atoms_are_dropped() {
        let p = pmf(&[(1, 0.0), (2, 1.0)]);
        assert_eq!(p.atoms(), &[(2, 1.0)]);
        assert_eq!(p.prob(1), Some(0.0));
    }

    #[test]
    fn kl_identity_is_zero() {
        let p = pmf(&[(1, 0.5), (4, 0.5)]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_uniform_halving_is_one_bit() {
        let p = pmf(&[(1, 0.5), (2, 0.5)]);
        let q = pmf(&[(1, 0.25), (2, 0.25), (3, 0.25), (4, 0.25)]);
        assert!((kl_divergence(&p, &q).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_support_mismatch_is_infinite() {
        let p = pmf(&[(1, 0.5), (2, 0.5)]);
        let q = pmf(&[(1, 1.0)]);
        assert!(kl_divergence(&p, &q).unwrap().is_infinite());
    }

    #[test]
    fn kl_refuses_unresolved_p() {
        let p = Pmf::with_residual_tail([(1u128, 0.5)], 0.5, 2).unwrap();
        let q = pmf(&[(1, 1.0)]);
        assert_eq!(kl_divergence(&p, &q).unwrap_err(), PmfError::UnresolvedTail);
    }

    #[test]
    fn kl_allows_truncated_q_covering_support() {
        // q's residual starts past p's atoms, so the sum is exact.
        let p = pmf(&[(1, 0.5), (4, 0.5)]);
        let q = Pmf::with_residual_tail([(1u128, 0.5), (4, 0.25)], 0.25, 5).unwrap();
        let expect = 0.5 * (0.5f64 / 0.25).log2();
        assert!((kl_divergence(&p, &q).unwrap() - expect).abs() < 1e-12);
        // ...but not when an atom of p falls inside q's residual region.
        let deep = pmf(&[(1, 0.5), (10, 0.5)]);
        assert_eq!(kl_divergence(&deep, &q).unwrap_err(), PmfError::UnresolvedTail);
    }

    #[test]
    fn hellinger_identity_and_disjoint() {
        let p = pmf(&[(1, 0.5), (2, 0.5)]);
        let q = pmf(&[(3, 0.25), (4, 0.75)]);
        assert_eq!(hellinger(&p, &p).unwrap(), 0.0);
        assert!((hellinger(&p, &q).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tail_mass_handles_residuals() {
        let p: Pmf<f64> = Pmf::with_residual_tail([(1u128, 0.5), (4, 0.3)], 0.2, 8).unwrap();
        assert!((tail_mass(&p, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!((tail_mass(&p, 2).unwrap() - 0.5).abs() < 1e-12);
        assert!((tail_mass(&p, 8).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(tail_mass(&p, 9).unwrap_err(), PmfError::UnresolvedTail);
    }

    #[test]
    fn quantile_matches_cdf_jumps() {
        let p = pmf(&[(1, 0.5), (4, 0.5)]);
        assert_eq!(quantile(&p, 0.5).unwrap(), 1);
        assert_eq!(quantile(&p, 0.75).unwrap(), 4);
        assert_eq!(quantile(&p, 0.500001).unwrap(), 4);
        assert!(matches!(quantile(&p, 1.5), Err(PmfError::BadLevel { .. })));
    }

    #[test]
    fn quantile_refuses_levels_in_residual() {
        let p = Pmf::with_residual_tail([(1u128, 0.9)], 0.1, 2).unwrap();
        assert_eq!(quantile(&p, 0.95).unwrap_err(), PmfError::UnresolvedTail);
        assert_eq!(quantile(&p, 0.85).unwrap(), 1);
    }

    #[test]
    fn tail_kl_spike_example() {
        // p has a 0.1 spike at 5, q gives it 0.5: 0.1·log₂(0.2) ≈ −0.2322.
        let p = pmf(&[(1, 0.9), (5, 0.1)]);
        let q = pmf(&[(1, 0.5), (5, 0.5)]);
        let v = tail_kl(&p, &q, 5).unwrap();
        assert!((v - 0.1 * (0.2f64).log2()).abs() < 1e-12);
        assert!((v + 0.23219).abs() < 1e-4);
    }

    #[test]
    fn tail_kl_whole_support_and_empty() {
        let p = pmf(&[(1, 0.5), (4, 0.5)]);
        let q = pmf(&[(1, 0.25), (4, 0.75)]);
        let whole = tail_kl(&p, &q, 1).unwrap();
        assert!((whole - kl_divergence(&p, &q).unwrap()).abs() < 1e-12);
        assert_eq!(tail_kl(&p, &q, 100).unwrap(), 0.0);
    }

    #[test]
    fn tail_kl_partition_identity() {
        let p = pmf(&[(1, 0.3), (3, 0.25), (7, 0.25), (9, 0.2)]);
        let q = pmf(&[(1, 0.1), (3, 0.4), (7, 0.2), (9, 0.3)]);
        let total = kl_divergence(&p, &q).unwrap();
        for m in [0u128, 1, 2, 3, 5, 8, 10] {
            let head: f64 = p
                .atoms()
                .iter()
                .filter(|&&(x, _)| x < m)
                .map(|&(x, px)| px * (px / q.prob(x).unwrap()).log2())
                .sum();
            let tail = tail_kl(&p, &q, m).unwrap();
            assert!((head + tail - total).abs() < 1e-12, "m = {m}");
        }
    }

    #[test]
    fn conditional_tail_renormalizes() {
        let p = pmf(&[(1, 0.5), (8, 0.25), (9, 0.25)]);
        let t = conditional_tail(&p, 8).unwrap();
        assert_eq!(t.atoms(), &[(8, 0.5), (9, 0.5)]);
        let whole = conditional_tail(&p, 1).unwrap();
        assert_eq!(whole.atoms(), p.atoms());
        let point = conditional_tail(&pmf(&[(1, 0.7), (12, 0.3)]), 10).unwrap();
        assert_eq!(point.atoms(), &[(12, 1.0)]);
        assert_eq!(conditional_tail(&p, 100).unwrap_err(), PmfError::EmptyTail);
    }

    #[test]
    fn entropy_examples() {
        let u4 = pmf(&[(1, 0.25), (2, 0.25), (3, 0.25), (4, 0.25)]);
        assert!((entropy(&u4).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(entropy(&Pmf::<f64>::point_mass(7)).unwrap(), 0.0);
        let b = pmf(&[(1, 0.5), (4, 0.5)]);
        assert!((entropy(&b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tail_view_carries_mass() {
        let p = pmf(&[(1, 0.5), (4, 0.5)]);
        let v = TailView::new(&p, 2).unwrap();
        assert_eq!(v.threshold, 2);
        assert!((v.tail_mass - 0.5).abs() < 1e-12);
    }
}
