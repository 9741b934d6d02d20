//! Redundancy games over countable alphabets and a bit-exact censoring codec.
//!
//! The crate is organized around a handful of questions about a collection of
//! probability distributions on the naturals:
//!
//! - **How much does it cost to not know the source?** [`minimax`] computes
//!   single-letter minimax redundancy `inf_q sup_p D(p‖q)` by capacity
//!   iteration, along with Bayes, Hellinger and packing lower bounds.
//! - **How much complexity lurks in the tails?** [`minimax::tail_minimax`]
//!   and friends solve the restricted games
//!   `T_m = inf_q sup_p Σ_{x≥m} p(x) log₂(p(x)/q(x))` whose large-`m` limit
//!   characterizes whether per-symbol redundancy of iid strings vanishes
//!   uniformly over the collection.
//! - **Can we realize the matching coding strategy?** [`codec`] implements the
//!   censoring code — symbols above a threshold are replaced by an escape,
//!   the censored string is coded with a Krichevsky–Trofimov mixture, escape
//!   payloads with a fixed block law — as a real arithmetic-coded compressor,
//!   plus a horizon-free Bayesian mixture over thresholds.
//! - **Do measurements agree with the theory?** [`harness`] runs Monte Carlo
//!   and exhaustive redundancy experiments and emits CSV/SVG reports.
//!
//! Distributions ([`pmf::Pmf`]) and the numeric core are generic over the
//! scalar type through [`num::Real`]; concrete `f64`/`f32` aliases are at the
//! crate root. All information quantities are in bits (logarithms base 2).

pub mod codec;
pub mod families;
pub mod harness;
pub mod minimax;
pub mod num;
pub mod pmf;

/// Double-precision probability mass function (the default throughout).
pub type Pmf64 = pmf::Pmf<f64>;
/// Single-precision probability mass function.
pub type Pmf32 = pmf::Pmf<f32>;
/// Double-precision indexed family of distributions.
pub type Family64 = families::Family<f64>;
/// Single-precision indexed family of distributions.
pub type Family32 = families::Family<f32>;
/// Double-precision prior over family members.
pub type Prior64 = minimax::Prior<f64>;
/// Double-precision solver output.
pub type MinimaxSolution64 = minimax::MinimaxSolution<f64>;
