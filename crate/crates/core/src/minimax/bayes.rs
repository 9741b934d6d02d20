//! Bayes redundancy: the mutual information between the member index and the
//! observation, which lower-bounds the minimax redundancy for every prior.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::families::Family;
use crate::num::{KahanSum, Real};
use crate::pmf::{Pmf, Symbol};

use super::{union_symbols, MinimaxError, Prior};

/// Exact enumeration guard for length-`n` products.
const ENUM_GUARD: f64 = 1e7;

/// Bayes redundancy value with the prior mixture it is achieved by.
#[derive(Debug, Clone)]
pub struct BayesRedundancy<T> {
    /// `inf_q E_π D(p_θⁿ ‖ q) = I(θ; Xⁿ)` in bits.
    pub value: T,
    /// The single-letter π-mixture (the optimal `q` marginal).
    pub mixture: Pmf<T>,
    /// Standard error of the estimate; `None` when exact.
    pub stderr: Option<T>,
    /// 95% confidence interval; `None` when exact.
    pub ci95: Option<(T, T)>,
}

fn single_letter_mixture<T: Real>(
    family: &Family<T>,
    prior: &Prior<T>,
    symbols: &[Symbol],
) -> Vec<T> {
    let mut mix = vec![T::zero(); symbols.len()];
    for (p, &w) in family.members().iter().zip(prior.weights()) {
        for &(x, px) in p.atoms() {
            let i = symbols.binary_search(&x).expect("symbol in union");
            mix[i] = mix[i] + w * px;
        }
    }
    mix
}

fn mixture_pmf<T: Real>(symbols: &[Symbol], mix: &[T]) -> Pmf<T> {
    let total = crate::num::kahan_sum(mix.iter().copied());
    Pmf::from_atoms(
        symbols
            .iter()
            .zip(mix.iter())
            .filter(|&(_, &p)| p > T::zero())
            .map(|(&x, &p)| (x, p / total)),
    )
    .expect("mixture of normalized members is normalized")
}

/// Exact Bayes redundancy `I(θ; Xⁿ)` by product-distribution enumeration.
///
/// Always exact for `n = 1`; for larger `n` requires
/// `(union support)ⁿ ≤ 10⁷`, else [`MinimaxError::GuardExceeded`] — use
/// [`bayes_redundancy_mc`] to opt into a Monte Carlo estimate instead.
pub fn bayes_redundancy<T: Real>(
    family: &Family<T>,
    prior: &Prior<T>,
    n: usize,
) -> Result<BayesRedundancy<T>, MinimaxError> {
    check_args(family, prior, n)?;
    let symbols = union_symbols(family.members(), 0);
    let s = symbols.len();
    let needed = (s as f64).powi(n as i32);
    if n > 1 && needed > ENUM_GUARD {
        return Err(MinimaxError::GuardExceeded {
            needed,
            guard: ENUM_GUARD,
        });
    }
    let per_symbol: Vec<Vec<T>> = family
        .members()
        .iter()
        .map(|p| symbols.iter().map(|&x| p.prob(x).unwrap()).collect())
        .collect();
    let mix = single_letter_mixture(family, prior, &symbols);
    let mixture = mixture_pmf(&symbols, &mix);

    let mut value = KahanSum::new();
    if n == 1 {
        for (row, &w) in per_symbol.iter().zip(prior.weights()) {
            if w <= T::zero() {
                continue;
            }
            for (i, &px) in row.iter().enumerate() {
                if px > T::zero() {
                    value.add(w * px * (px / mix[i]).log2());
                }
            }
        }
    } else {
        let n_seqs = s.pow(n as u32);
        let weights = prior.weights();
        let mut digits = vec![0usize; n];
        let mut member_probs = vec![T::zero(); family.len()];
        for seq in 0..n_seqs {
            let mut q = seq;
            for d in digits.iter_mut() {
                *d = q % s;
                q /= s;
            }
            let mut mix_prob = T::zero();
            for (k, row) in per_symbol.iter().enumerate() {
                let mut prob = T::one();
                for &d in &digits {
                    prob = prob * row[d];
                    if prob == T::zero() {
                        break;
                    }
                }
                member_probs[k] = prob;
                mix_prob = mix_prob + weights[k] * prob;
            }
            if mix_prob <= T::zero() {
                continue;
            }
            for (k, &prob) in member_probs.iter().enumerate() {
                if prob > T::zero() && weights[k] > T::zero() {
                    value.add(weights[k] * prob * (prob / mix_prob).log2());
                }
            }
        }
    }
    Ok(BayesRedundancy {
        value: value.value(),
        mixture,
        stderr: None,
        ci95: None,
    })
}

/// Monte Carlo estimate of the Bayes redundancy for instances past the
/// enumeration guard: sample `θ ∼ π`, `xⁿ ∼ p_θⁿ`, average
/// `log₂(p_θ(xⁿ)/mix(xⁿ))`. Unbiased; reports a 95% CI.
pub fn bayes_redundancy_mc<T: Real>(
    family: &Family<T>,
    prior: &Prior<T>,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<BayesRedundancy<T>, MinimaxError> {
    check_args(family, prior, n)?;
    if trials < 2 {
        return Err(MinimaxError::BadInput("need at least 2 trials".into()));
    }
    let symbols = union_symbols(family.members(), 0);
    let per_symbol: Vec<Vec<T>> = family
        .members()
        .iter()
        .map(|p| symbols.iter().map(|&x| p.prob(x).unwrap()).collect())
        .collect();
    let mix = single_letter_mixture(family, prior, &symbols);
    let mixture = mixture_pmf(&symbols, &mix);
    let weights = prior.weights();

    // Member CDFs over the union support for inverse sampling.
    let cdfs: Vec<Vec<f64>> = per_symbol
        .iter()
        .map(|row| {
            let mut acc = 0.0;
            row.iter()
                .map(|&p| {
                    acc += p.to_f64().unwrap_or(0.0);
                    acc
                })
                .collect()
        })
        .collect();
    let prior_cdf: Vec<f64> = {
        let mut acc = 0.0;
        weights
            .iter()
            .map(|&w| {
                acc += w.to_f64().unwrap_or(0.0);
                acc
            })
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<f64> = Vec::with_capacity(trials);
    let draw = |cdf: &[f64], rng: &mut ChaCha8Rng| -> usize {
        let u: f64 = rand::Rng::gen(rng);
        cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
    };
    let mut seq = vec![0usize; n];
    for _ in 0..trials {
        let theta = draw(&prior_cdf, &mut rng);
        let mut log_member = 0.0f64;
        for slot in seq.iter_mut() {
            let xi = draw(&cdfs[theta], &mut rng);
            *slot = xi;
            log_member += per_symbol[theta][xi].to_f64().unwrap().log2();
        }
        // The mixture does not factorize over symbols, so evaluate it on the
        // whole string.
        let mut mix_prob = 0.0f64;
        for (k, row) in per_symbol.iter().enumerate() {
            let mut prob = 1.0f64;
            for &xi in &seq {
                prob *= row[xi].to_f64().unwrap();
                if prob == 0.0 {
                    break;
                }
            }
            mix_prob += weights[k].to_f64().unwrap() * prob;
        }
        samples.push(log_member - mix_prob.log2());
    }

    let mean = samples.iter().sum::<f64>() / trials as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0);
    let stderr = (var / trials as f64).sqrt();
    Ok(BayesRedundancy {
        value: T::of(mean),
        mixture,
        stderr: Some(T::of(stderr)),
        ci95: Some((T::of(mean - 1.96 * stderr), T::of(mean + 1.96 * stderr))),
    })
}

fn check_args<T: Real>(
    family: &Family<T>,
    prior: &Prior<T>,
    n: usize,
) -> Result<(), MinimaxError> {
    if prior.len() != family.len() {
        return Err(MinimaxError::BadInput(format!(
            "prior has {} weights for {} members",
            prior.len(),
            family.len()
        )));
    }
    if n == 0 {
        return Err(MinimaxError::BadInput("n must be ≥ 1".into()));
    }
    for p in family.members() {
        if !p.is_fully_resolved() {
            return Err(MinimaxError::Pmf(crate::pmf::PmfError::UnresolvedTail));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::Family;

    fn family(members: Vec<Pmf<f64>>) -> Family<f64> {
        let labels = (0..members.len()).map(|i| format!("m{i}")).collect();
        Family::custom(members, labels).unwrap()
    }

    #[test]
    fn disjoint_point_masses_one_bit() {
        let fam = family(vec![Pmf::point_mass(1), Pmf::point_mass(2)]);
        let b = bayes_redundancy(&fam, &Prior::uniform(2), 1).unwrap();
        assert!((b.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_and_point_mass_closed_form() {
        let fam = family(vec![
            Pmf::from_atoms([(1u128, 0.5), (2, 0.5)]).unwrap(),
            Pmf::from_atoms([(1u128, 1.0)]).unwrap(),
        ]);
        let b = bayes_redundancy(&fam, &Prior::uniform(2), 1).unwrap();
        // H(0.25) − 0.5 ≈ 0.3113 bits.
        let expect = -(0.25f64 * 0.25f64.log2() + 0.75 * 0.75f64.log2()) - 0.5;
        assert!((b.value - expect).abs() < 1e-12);
        assert!((b.value - 0.3113).abs() < 1e-4);
        assert!((b.mixture.prob(1).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn point_prior_is_zero() {
        let fam = family(vec![
            Pmf::from_atoms([(1u128, 0.5), (2, 0.5)]).unwrap(),
            Pmf::from_atoms([(3u128, 1.0)]).unwrap(),
        ]);
        let b = bayes_redundancy(&fam, &Prior::point(2, 0), 1).unwrap();
        assert!(b.value.abs() < 1e-12);
    }

    #[test]
    fn product_enumeration_scales_mutual_information() {
        // Disjoint supports: I(θ; Xⁿ) = H(θ) for every n.
        let fam = family(vec![Pmf::point_mass(1), Pmf::point_mass(2)]);
        for n in 1..=4usize {
            let b = bayes_redundancy(&fam, &Prior::uniform(2), n).unwrap();
            assert!((b.value - 1.0).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn guard_trips() {
        let members = (1..=40u128)
            .map(|x| Pmf::from_atoms([(x, 0.5), (x + 100, 0.5)]).unwrap())
            .collect();
        let fam = family(members);
        let err = bayes_redundancy(&fam, &Prior::uniform(40), 6).unwrap_err();
        assert!(matches!(err, MinimaxError::GuardExceeded { .. }));
    }

    #[test]
    fn mc_estimate_covers_exact() {
        let fam = family(vec![
            Pmf::from_atoms([(1u128, 0.5), (2, 0.5)]).unwrap(),
            Pmf::from_atoms([(1u128, 1.0)]).unwrap(),
        ]);
        let exact = bayes_redundancy(&fam, &Prior::uniform(2), 3).unwrap();
        let mc = bayes_redundancy_mc(&fam, &Prior::uniform(2), 3, 20_000, 12345).unwrap();
        let (lo, hi) = mc.ci95.unwrap();
        assert!(exact.value >= lo && exact.value <= hi);
    }
}
