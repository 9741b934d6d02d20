//! The convex game engine behind the redundancy and tail-redundancy values.
//!
//! Every quantity here is an instance of one game: pick a coding distribution
//! `q` on a finite symbol set, an adversary picks a member `p`, the payoff is
//!
//! ```text
//! G_p(q) = Σ_x p̃(x) log₂(p̃(x)/q(x)) + shift_p
//! ```
//!
//! where `p̃` is the member restricted to symbols at or above a threshold
//! (the whole member for the single-letter game) and `shift_p` is 0 for the
//! plain tail game or `τ_p log₂(1/τ_p)` for its nonnegative variant. The
//! payoff is convex in `q` and linear in a mixing prior over members, so the
//! game has a value and the classic alternating scheme applies: the
//! Bayes-optimal response to a prior `π` has the closed form
//! `q_π ∝ Σ_p π_p p̃` — the mass-weighted mixture — and the prior is improved
//! multiplicatively by `π_p ← π_p·2^(η·G_p(q_π))`, which for the full-support
//! game with `η = 1` is exactly the capacity iteration.
//!
//! Each iterate certifies the value from both sides: `max_p G_p(q_π)` upper
//! bounds the game, and the Bayes value `Σ_p π_p G_p(q_π)` lower bounds it.
//! The solver keeps the best of each and stops when they pinch to tolerance.

use crate::families::Family;
use crate::num::{KahanSum, Real};
use crate::pmf::{Pmf, Symbol};

use super::{union_symbols, MinimaxError, MinimaxSolution, SolverOptions};

/// One adversary row: a member's restricted mass over the union support.
struct GameRow<T> {
    /// `(symbol index, p̃(x))`, only positive entries.
    entries: Vec<(u32, T)>,
    /// `Σ p̃(x) log₂ p̃(x)`.
    plogp: T,
    /// Constant payoff offset.
    shift: T,
}

enum ShiftKind {
    /// Plain game: no offset.
    Plain,
    /// Add `τ log₂(1/τ)`.
    Tilde,
    /// Scale the row by `1/τ` and add `log₂ τ` (payoff `D(p'‖q) + log₂ τ`),
    /// i.e. tail divergence normalized by tail mass.
    Normalized,
}

fn build_rows<T: Real>(
    members: &[Pmf<T>],
    symbols: &[Symbol],
    threshold: Symbol,
    kind: &ShiftKind,
) -> Result<Vec<GameRow<T>>, MinimaxError> {
    let index_of = |x: Symbol| -> u32 {
        symbols.binary_search(&x).expect("symbol in union support") as u32
    };
    let mut rows = Vec::with_capacity(members.len());
    for p in members {
        if !p.is_fully_resolved() {
            return Err(MinimaxError::Pmf(crate::pmf::PmfError::UnresolvedTail));
        }
        let mut entries = Vec::new();
        let mut mass = KahanSum::new();
        for &(x, px) in p.atoms() {
            if x >= threshold && px > T::zero() {
                entries.push((index_of(x), px));
                mass.add(px);
            }
        }
        let tau = mass.value();
        let (entries, plogp, shift) = match kind {
            ShiftKind::Plain | ShiftKind::Tilde => {
                let mut plogp = KahanSum::new();
                for &(_, px) in &entries {
                    plogp.add(px * px.log2());
                }
                let shift = match kind {
                    ShiftKind::Tilde if tau > T::zero() => -tau * tau.log2(),
                    _ => T::zero(),
                };
                (entries, plogp.value(), shift)
            }
            ShiftKind::Normalized => {
                if tau <= T::zero() {
                    (Vec::new(), T::zero(), T::zero())
                } else {
                    let scaled: Vec<(u32, T)> =
                        entries.iter().map(|&(i, px)| (i, px / tau)).collect();
                    let mut plogp = KahanSum::new();
                    for &(_, px) in &scaled {
                        plogp.add(px * px.log2());
                    }
                    (scaled, plogp.value(), tau.log2())
                }
            }
        };
        rows.push(GameRow {
            entries,
            plogp,
            shift,
        });
    }
    Ok(rows)
}

fn solve<T: Real>(
    symbols: Vec<Symbol>,
    rows: Vec<GameRow<T>>,
    opts: &SolverOptions,
    fallback_symbol: Symbol,
) -> MinimaxSolution<T> {
    let n_syms = symbols.len();
    let n_rows = rows.len();
    let active = rows.iter().any(|r| !r.entries.is_empty());
    if !active || n_syms == 0 {
        // Nothing at or beyond the threshold: the game is empty and worth 0.
        return MinimaxSolution {
            q_star: Pmf::point_mass(fallback_symbol),
            value: T::zero(),
            duality_gap: T::zero(),
            iterations: 0,
            converged: true,
            diverging: false,
        };
    }

    let tol = T::of(opts.tolerance);
    let floor = T::min_positive_value().sqrt();
    let mut pi = vec![T::of(1.0 / n_rows as f64); n_rows];
    let mut weights = vec![T::zero(); n_syms];
    let mut logq = vec![T::zero(); n_syms];
    let mut payoffs = vec![T::zero(); n_rows];

    let mut best_ub = T::infinity();
    let mut best_lb = T::neg_infinity();
    let mut q_best: Vec<T> = Vec::new();
    let mut eta = T::one();
    let mut iterations = 0;
    let mut converged = false;

    // Divergence bookkeeping: primal snapshots at doubling checkpoints.
    let mut checkpoint = (opts.max_iters / 8).max(16);
    let mut snapshots: Vec<T> = Vec::new();
    let mut last_gap_probe = T::infinity();

    for t in 1..=opts.max_iters {
        iterations = t;

        for w in weights.iter_mut() {
            *w = T::zero();
        }
        for (row, &p) in rows.iter().zip(pi.iter()) {
            for &(i, px) in &row.entries {
                weights[i as usize] = weights[i as usize] + p * px;
            }
        }
        let total = crate::num::kahan_sum(weights.iter().copied());
        for (lq, &w) in logq.iter_mut().zip(weights.iter()) {
            *lq = (w / total).max(floor).log2();
        }

        let mut ub = T::neg_infinity();
        let mut lb = KahanSum::new();
        for (k, row) in rows.iter().enumerate() {
            let mut cross = KahanSum::new();
            for &(i, px) in &row.entries {
                cross.add(px * logq[i as usize]);
            }
            let g = row.plogp - cross.value() + row.shift;
            payoffs[k] = g;
            if g > ub {
                ub = g;
            }
            lb.add(pi[k] * g);
        }
        let lb = lb.value();

        if ub < best_ub {
            best_ub = ub;
            q_best = weights.iter().map(|&w| w / total).collect();
        }
        if lb > best_lb {
            best_lb = lb;
        }
        if best_ub - best_lb <= tol {
            converged = true;
            break;
        }

        if t == checkpoint {
            snapshots.push(ub);
            checkpoint *= 2;
        }

        // Damp the step when the certified gap stalls; the bounds stay valid
        // at any step size, this only helps oscillating instances settle.
        if t % 512 == 0 {
            let gap = best_ub - best_lb;
            if gap > last_gap_probe * T::of(0.99) {
                eta = (eta * T::of(0.7)).max(T::of(0.05));
            }
            last_gap_probe = gap;
        }

        let gmax = payoffs.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut norm = KahanSum::new();
        for (p, &g) in pi.iter_mut().zip(payoffs.iter()) {
            *p = (*p * ((g - gmax) * eta).exp2()).max(floor);
            norm.add(*p);
        }
        let norm = norm.value();
        for p in pi.iter_mut() {
            *p = *p / norm;
        }
    }

    let diverging = !converged
        && snapshots.len() >= 3
        && snapshots
            .windows(2)
            .all(|w| w[1] > w[0] * T::of(1.05) + T::of(1e-9));

    let q_atoms: Vec<(Symbol, T)> = symbols
        .iter()
        .zip(q_best.iter())
        .filter(|&(_, &p)| p > T::zero())
        .map(|(&x, &p)| (x, p))
        .collect();
    let q_star = Pmf::from_atoms(q_atoms).unwrap_or_else(|_| Pmf::point_mass(fallback_symbol));

    MinimaxSolution {
        q_star,
        value: best_ub,
        duality_gap: best_ub - best_lb,
        iterations,
        converged,
        diverging,
    }
}

fn solve_family_game<T: Real>(
    family: &Family<T>,
    threshold: Symbol,
    kind: ShiftKind,
    opts: &SolverOptions,
) -> Result<MinimaxSolution<T>, MinimaxError> {
    let symbols = union_symbols(family.members(), threshold);
    let rows = build_rows(family.members(), &symbols, threshold, &kind)?;
    Ok(solve(symbols, rows, opts, threshold.max(1)))
}

/// Single-letter minimax redundancy `inf_q sup_p D(p‖q)` by capacity
/// iteration. `q_star` is the capacity-achieving mixture.
pub fn minimax_redundancy<T: Real>(family: &Family<T>) -> Result<MinimaxSolution<T>, MinimaxError> {
    minimax_redundancy_with(family, &SolverOptions::default())
}

pub fn minimax_redundancy_with<T: Real>(
    family: &Family<T>,
    opts: &SolverOptions,
) -> Result<MinimaxSolution<T>, MinimaxError> {
    solve_family_game(family, 0, ShiftKind::Plain, opts)
}

/// Tail game `T_m = inf_q sup_p Σ_{x≥m} p(x) log₂(p(x)/q(x))`.
///
/// The value may be negative. The coding distribution is restricted (without
/// loss) to the union tail support: mass below `m` or outside every member's
/// tail can only hurt. A family with no mass at or beyond `m` yields value 0.
pub fn tail_minimax<T: Real>(
    family: &Family<T>,
    m: Symbol,
) -> Result<MinimaxSolution<T>, MinimaxError> {
    tail_minimax_with(family, m, &SolverOptions::default())
}

pub fn tail_minimax_with<T: Real>(
    family: &Family<T>,
    m: Symbol,
    opts: &SolverOptions,
) -> Result<MinimaxSolution<T>, MinimaxError> {
    if m < 1 {
        return Err(MinimaxError::BadInput("tail threshold must be ≥ 1".into()));
    }
    solve_family_game(family, m, ShiftKind::Plain, opts)
}

/// Nonnegative tail game
/// `T̃_m = inf_q sup_p [Σ_{x≥m} p log₂(p/q) + τ_p log₂(1/τ_p)]`,
/// equivalently `inf_q sup_p τ_p·D(p'‖q)` for the renormalized tails `p'`.
pub fn tail_minimax_tilde<T: Real>(
    family: &Family<T>,
    m: Symbol,
) -> Result<MinimaxSolution<T>, MinimaxError> {
    tail_minimax_tilde_with(family, m, &SolverOptions::default())
}

pub fn tail_minimax_tilde_with<T: Real>(
    family: &Family<T>,
    m: Symbol,
    opts: &SolverOptions,
) -> Result<MinimaxSolution<T>, MinimaxError> {
    if m < 1 {
        return Err(MinimaxError::BadInput("tail threshold must be ≥ 1".into()));
    }
    solve_family_game(family, m, ShiftKind::Tilde, opts)
}

/// Diagnostic variant: tail divergence normalized by tail mass,
/// `inf_q sup_p [Σ_{x≥m} p log₂(p/q)] / τ_p`. Exposed for exploration; no
/// structural claims are attached to it.
pub fn tail_minimax_normalized<T: Real>(
    family: &Family<T>,
    m: Symbol,
) -> Result<MinimaxSolution<T>, MinimaxError> {
    if m < 1 {
        return Err(MinimaxError::BadInput("tail threshold must be ≥ 1".into()));
    }
    solve_family_game(family, m, ShiftKind::Normalized, &SolverOptions::default())
}

/// Primal tail value `sup_p Σ_{x≥m} p log₂(p/q)` of a fixed coding
/// distribution — the upper-bound side of the game, used by the union test
/// and by curve diagnostics.
pub fn primal_tail_value<T: Real>(
    family: &Family<T>,
    q: &Pmf<T>,
    m: Symbol,
) -> Result<T, MinimaxError> {
    let mut sup = T::neg_infinity();
    for p in family.members() {
        let v = crate::pmf::tail_kl(p, q, m)?;
        if v > sup {
            sup = v;
        }
    }
    Ok(sup)
}

/// One point of the tail-redundancy curve.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TailCurvePoint<T> {
    pub m: String,
    pub t_m: T,
    pub t_m_converged: bool,
    pub tilde_t_m: T,
    pub tilde_converged: bool,
}

/// Game values along an increasing threshold grid. The final entry is the
/// working estimate of the limiting tail redundancy.
pub fn tail_redundancy_curve<T: Real>(
    family: &Family<T>,
    m_grid: &[Symbol],
) -> Result<Vec<TailCurvePoint<T>>, MinimaxError> {
    tail_redundancy_curve_with(family, m_grid, &SolverOptions::default())
}

pub fn tail_redundancy_curve_with<T: Real>(
    family: &Family<T>,
    m_grid: &[Symbol],
    opts: &SolverOptions,
) -> Result<Vec<TailCurvePoint<T>>, MinimaxError> {
    if m_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MinimaxError::BadInput("m grid must be increasing".into()));
    }
    let mut out = Vec::with_capacity(m_grid.len());
    for &m in m_grid {
        let plain = tail_minimax_with(family, m, opts)?;
        let tilde = tail_minimax_tilde_with(family, m, opts)?;
        out.push(TailCurvePoint {
            m: m.to_string(),
            t_m: plain.value,
            t_m_converged: plain.converged,
            tilde_t_m: tilde.value,
            tilde_converged: tilde.converged,
        });
    }
    Ok(out)
}

/// Minimax redundancy of length-`n` iid strings from the family, by capacity
/// iteration over the product channel. Exact but exponential: guarded by
/// `(union support)^n ≤ 10^7`.
pub fn minimax_redundancy_seq<T: Real>(
    family: &Family<T>,
    n: usize,
    opts: &SolverOptions,
) -> Result<MinimaxSolution<T>, MinimaxError> {
    const GUARD: f64 = 1e7;
    let symbols = union_symbols(family.members(), 0);
    let s = symbols.len();
    let needed = (s as f64).powi(n as i32);
    if needed > GUARD {
        return Err(MinimaxError::GuardExceeded {
            needed,
            guard: GUARD,
        });
    }
    for p in family.members() {
        if !p.is_fully_resolved() {
            return Err(MinimaxError::Pmf(crate::pmf::PmfError::UnresolvedTail));
        }
    }
    // Member probabilities per single symbol, dense over the union support.
    let per_symbol: Vec<Vec<T>> = family
        .members()
        .iter()
        .map(|p| symbols.iter().map(|&x| p.prob(x).unwrap()).collect())
        .collect();
    let n_seqs = s.pow(n as u32);
    let mut rows: Vec<GameRow<T>> = Vec::with_capacity(family.len());
    for member in &per_symbol {
        let mut entries = Vec::new();
        let mut plogp = KahanSum::new();
        let mut idx = vec![0usize; n];
        for seq in 0..n_seqs {
            let mut q = seq;
            let mut prob = T::one();
            for slot in idx.iter_mut() {
                *slot = q % s;
                q /= s;
                prob = prob * member[*slot];
            }
            if prob > T::zero() {
                entries.push((seq as u32, prob));
                plogp.add(prob * prob.log2());
            }
        }
        rows.push(GameRow {
            entries,
            plogp: plogp.value(),
            shift: T::zero(),
        });
    }
    // Sequence index space stands in for the symbol set; remap afterwards is
    // not needed since only the value and gap are consumed.
    let fake_symbols: Vec<Symbol> = (0..n_seqs as u128).collect();
    Ok(solve(fake_symbols, rows, opts, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::Family;
    use crate::pmf::{conditional_tail, tail_mass};

    fn family(members: Vec<Pmf<f64>>) -> Family<f64> {
        let labels = (0..members.len()).map(|i| format!("m{i}")).collect();
        Family::custom(members, labels).unwrap()
    }

    #[test]
    fn disjoint_point_masses_cost_log_k() {
        for k in [2usize, 4, 8, 16] {
            let members = (0..k).map(|i| Pmf::point_mass(i as u128 + 1)).collect();
            let sol = minimax_redundancy(&family(members)).unwrap();
            assert!(sol.converged);
            assert!(
                (sol.value - (k as f64).log2()).abs() < 1e-6,
                "k = {k}: {}",
                sol.value
            );
            for &(_, qx) in sol.q_star.atoms() {
                assert!((qx - 1.0 / k as f64).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn two_member_channel_closed_form() {
        // Members (½,½) and (1,0): value log₂(1.25) at prior (0.4, 0.6).
        let members = vec![
            Pmf::from_atoms([(1u128, 0.5), (2, 0.5)]).unwrap(),
            Pmf::from_atoms([(1u128, 1.0)]).unwrap(),
        ];
        let sol = minimax_redundancy(&family(members)).unwrap();
        assert!(sol.converged, "gap {}", sol.duality_gap);
        assert!((sol.value - 1.25f64.log2()).abs() < 1e-5);
        assert!(sol.duality_gap <= 1e-6);
        assert!((sol.q_star.prob(1).unwrap() - 0.8).abs() < 1e-4);
    }

    #[test]
    fn singleton_tail_game_closed_form() {
        let p = Pmf::from_atoms([(1u128, 0.75), (9, 0.25)]).unwrap();
        let fam = family(vec![p.clone()]);
        let sol = tail_minimax(&fam, 5).unwrap();
        let tau = tail_mass(&p, 5).unwrap();
        assert!((sol.value - tau * tau.log2()).abs() < 1e-9);
        assert!((sol.value + 0.5).abs() < 1e-9);
        // Optimal q is the conditional tail.
        let cond = conditional_tail(&p, 5).unwrap();
        for &(x, qx) in sol.q_star.atoms() {
            assert!((qx - cond.prob(x).unwrap()).abs() < 1e-9);
        }
        let tilde = tail_minimax_tilde(&fam, 5).unwrap();
        assert!(tilde.value.abs() < 1e-9);
    }

    #[test]
    fn two_disjoint_spikes() {
        let members = vec![
            Pmf::from_atoms([(1u128, 0.9), (16, 0.1)]).unwrap(),
            Pmf::from_atoms([(1u128, 0.9), (17, 0.1)]).unwrap(),
        ];
        let fam = family(members);
        let sol = tail_minimax(&fam, 8).unwrap();
        assert!((sol.value - 0.1 * (0.1f64 / 0.5).log2()).abs() < 1e-6);
        assert!((sol.value + 0.2322).abs() < 1e-4);
        let tilde = tail_minimax_tilde(&fam, 8).unwrap();
        assert!((tilde.value - 0.1).abs() < 1e-4);
        // q* splits evenly across the two spikes.
        assert!((sol.q_star.prob(16).unwrap() - 0.5).abs() < 1e-4);
    }

    #[test]
    fn t1_matches_full_game() {
        let members = vec![
            Pmf::from_atoms([(1u128, 0.5), (2, 0.5)]).unwrap(),
            Pmf::from_atoms([(1u128, 1.0)]).unwrap(),
        ];
        let fam = family(members);
        let full = minimax_redundancy(&fam).unwrap();
        let t1 = tail_minimax(&fam, 1).unwrap();
        assert!((full.value - t1.value).abs() < 2e-6);
    }

    #[test]
    fn tilde_dominates_plain() {
        let members = vec![
            Pmf::from_atoms([(1u128, 0.6), (10, 0.25), (12, 0.15)]).unwrap(),
            Pmf::from_atoms([(2u128, 0.5), (11, 0.5)]).unwrap(),
        ];
        let fam = family(members);
        for m in [1u128, 3, 10, 11] {
            let plain = tail_minimax(&fam, m).unwrap();
            let tilde = tail_minimax_tilde(&fam, m).unwrap();
            assert!(tilde.value >= plain.value - 2e-6, "m = {m}");
        }
    }

    #[test]
    fn empty_game_is_zero() {
        let members = vec![Pmf::from_atoms([(1u128, 1.0)]).unwrap()];
        let sol = tail_minimax(&family(members), 100).unwrap();
        assert_eq!(sol.value, 0.0);
        assert!(sol.converged);
    }

    #[test]
    fn curve_requires_increasing_grid() {
        let members = vec![Pmf::from_atoms([(1u128, 1.0)]).unwrap()];
        let fam = family(members);
        assert!(tail_redundancy_curve(&fam, &[4, 2]).is_err());
        let pts = tail_redundancy_curve(&fam, &[1, 2]).unwrap();
        assert_eq!(pts.len(), 2);
    }

    #[test]
    fn seq_minimax_reduces_to_single_letter_at_n1() {
        let members = vec![
            Pmf::from_atoms([(1u128, 0.5), (2, 0.5)]).unwrap(),
            Pmf::from_atoms([(1u128, 1.0)]).unwrap(),
        ];
        let fam = family(members);
        let r1 = minimax_redundancy(&fam).unwrap();
        let rs = minimax_redundancy_seq(&fam, 1, &SolverOptions::default()).unwrap();
        assert!((r1.value - rs.value).abs() < 2e-6);
    }

    #[test]
    fn weak_duality_sandwich() {
        let members = vec![
            Pmf::from_atoms([(1u128, 0.5), (3, 0.3), (7, 0.2)]).unwrap(),
            Pmf::from_atoms([(1u128, 0.2), (3, 0.5), (9, 0.3)]).unwrap(),
            Pmf::from_atoms([(2u128, 0.6), (7, 0.25), (9, 0.15)]).unwrap(),
        ];
        let fam = family(members);
        let sol = minimax_redundancy(&fam).unwrap();
        assert!(sol.converged);
        assert!(sol.duality_gap >= -1e-7 && sol.duality_gap <= 1e-6);
        // Primal at q_star must match the reported value.
        let primal = primal_tail_value(&fam, &sol.q_star, 0).unwrap();
        assert!((primal - sol.value).abs() < 1e-9);
    }
}
