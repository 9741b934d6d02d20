//! Redundancy lower bounds that don't require solving a game, plus limit
//! diagnostics (subadditivity / Fekete slope, pointwise sequence maxima).

use crate::families::Family;
use crate::num::{KahanSum, Real};
use crate::pmf::hellinger;

use super::{MinimaxError, Prior};

/// Hellinger lower bound on length-`n` redundancy:
/// `E_{p₁∼π}[ −log₂ E_{p₂∼π} e^(−n·h(p₁,p₂)/2) ]`, evaluated exactly by the
/// double sum over members (`h` is the squared Hellinger distance).
pub fn hellinger_lower_bound<T: Real>(
    family: &Family<T>,
    prior: &Prior<T>,
    n: usize,
) -> Result<T, MinimaxError> {
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
    let k = family.len();
    let mut h = vec![vec![T::zero(); k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let d = hellinger(&family.members()[i], &family.members()[j])?;
            h[i][j] = d;
            h[j][i] = d;
        }
    }
    let nf = T::of(n as f64);
    let half = T::of(0.5);
    let mut outer = KahanSum::new();
    for (i, &wi) in prior.weights().iter().enumerate() {
        if wi <= T::zero() {
            continue;
        }
        let mut inner = KahanSum::new();
        for (j, &wj) in prior.weights().iter().enumerate() {
            if wj > T::zero() {
                inner.add(wj * (-nf * h[i][j] * half).exp());
            }
        }
        outer.add(wi * -inner.value().log2());
    }
    Ok(outer.value())
}

/// Packing lower bound from `N` pairwise-disjoint high-probability events:
/// `(min event probability) · log₂ N` bits.
pub fn packing_lower_bound<T: Real>(event_probs: &[T], n_events: usize) -> Result<T, MinimaxError> {
    if n_events < 2 {
        return Err(MinimaxError::BadInput("need at least 2 events".into()));
    }
    if event_probs.is_empty() {
        return Err(MinimaxError::BadInput("no event probabilities".into()));
    }
    let mut min = T::infinity();
    for &p in event_probs {
        if !(p >= T::zero() && p <= T::one()) {
            return Err(MinimaxError::BadInput(format!(
                "event probability {p} outside [0, 1]"
            )));
        }
        min = min.min(p);
    }
    Ok(min * T::of((n_events as f64).log2()))
}

/// Largest within-cell pairwise squared-Hellinger distance over a partition
/// of the family's member indices.
pub fn partition_diameter<T: Real>(
    family: &Family<T>,
    partition: &[Vec<usize>],
) -> Result<T, MinimaxError> {
    let k = family.len();
    let mut seen = vec![false; k];
    for cell in partition {
        for &idx in cell {
            if idx >= k {
                return Err(MinimaxError::BadPartition(format!(
                    "index {idx} out of range"
                )));
            }
            if seen[idx] {
                return Err(MinimaxError::BadPartition(format!(
                    "index {idx} appears in two cells"
                )));
            }
            seen[idx] = true;
        }
    }
    if seen.iter().any(|&s| !s) {
        return Err(MinimaxError::BadPartition(
            "partition does not cover every member".into(),
        ));
    }
    let mut diameter = T::zero();
    for cell in partition {
        for (a, &i) in cell.iter().enumerate() {
            for &j in &cell[a + 1..] {
                let d = hellinger(&family.members()[i], &family.members()[j])?;
                diameter = diameter.max(d);
            }
        }
    }
    Ok(diameter)
}

/// Subadditivity check and slope estimate for a sequence `a_n`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FeketeReport<T> {
    /// `min_n a_n / n`, the Fekete estimate of `lim a_n / n`.
    pub slope_estimate: T,
    /// Index pairs `(n, m)` with `a_{n+m} > a_n + a_m` beyond tolerance.
    pub subadditivity_violations: Vec<(u64, u64)>,
}

/// Check `a_{n+m} ≤ a_n + a_m` on every index pair available in the input
/// (tolerance 1e-6) and estimate the per-`n` limit as `min a_n/n`.
pub fn fekete_limit<T: Real>(seq: &[(u64, T)]) -> Result<FeketeReport<T>, MinimaxError> {
    if seq.is_empty() {
        return Err(MinimaxError::BadInput("empty sequence".into()));
    }
    let mut sorted: Vec<(u64, T)> = seq.to_vec();
    sorted.sort_by_key(|&(n, _)| n);
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(MinimaxError::BadInput(format!(
                "duplicate index n = {}",
                w[0].0
            )));
        }
    }
    let lookup = |n: u64| -> Option<T> {
        sorted
            .binary_search_by_key(&n, |&(i, _)| i)
            .ok()
            .map(|i| sorted[i].1)
    };
    let tol = T::of(1e-6);
    let mut violations = Vec::new();
    for &(n, an) in &sorted {
        for &(m, am) in &sorted {
            if m < n {
                continue;
            }
            if let Some(anm) = lookup(n + m) {
                if anm > an + am + tol {
                    violations.push((n, m));
                }
            }
        }
    }
    let slope = sorted
        .iter()
        .map(|&(n, a)| a / T::of(n as f64))
        .fold(T::infinity(), |acc, v| acc.min(v));
    Ok(FeketeReport {
        slope_estimate: slope,
        subadditivity_violations: violations,
    })
}

/// Elementwise maximum of equally-long sequences.
pub fn max_sequence_limit<T: Real>(seqs: &[Vec<T>]) -> Result<Vec<T>, MinimaxError> {
    let first = seqs
        .first()
        .ok_or_else(|| MinimaxError::BadInput("no sequences".into()))?;
    let len = first.len();
    for s in seqs {
        if s.len() != len {
            return Err(MinimaxError::LengthMismatch {
                expected: len,
                got: s.len(),
            });
        }
    }
    Ok((0..len)
        .map(|i| {
            seqs.iter()
                .map(|s| s[i])
                .fold(T::neg_infinity(), |a, b| a.max(b))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{totally_bounded_uk, Family};
    use crate::pmf::Pmf;

    fn family(members: Vec<Pmf<f64>>) -> Family<f64> {
        let labels = (0..members.len()).map(|i| format!("m{i}")).collect();
        Family::custom(members, labels).unwrap()
    }

    #[test]
    fn hellinger_bound_examples() {
        let single = family(vec![Pmf::from_atoms([(1u128, 1.0)]).unwrap()]);
        let v = hellinger_lower_bound(&single, &Prior::uniform(1), 1).unwrap();
        assert!(v.abs() < 1e-12);

        let disjoint = family(vec![Pmf::point_mass(1), Pmf::point_mass(2)]);
        let v1 = hellinger_lower_bound(&disjoint, &Prior::uniform(2), 1).unwrap();
        let expect = -(0.5 * (1.0 + (-1.0f64).exp())).log2();
        assert!((v1 - expect).abs() < 1e-12);
        assert!((v1 - 0.5481).abs() < 2e-4);

        // Approaches 1 bit from below (within rounding at large n).
        let v10 = hellinger_lower_bound(&disjoint, &Prior::uniform(2), 10).unwrap();
        let v100 = hellinger_lower_bound(&disjoint, &Prior::uniform(2), 100).unwrap();
        assert!(v10 < 1.0 && v10 > 0.99);
        assert!(v100 <= 1.0 && v100 > v10 - 1e-12);
    }

    #[test]
    fn packing_examples() {
        // 16 events each of probability 1 − (3/4)^4.
        let p = 1.0 - 0.75f64.powi(4);
        let v = packing_lower_bound(&vec![p; 16], 16).unwrap();
        assert!((v - 2.734375).abs() < 1e-9);
        assert!((packing_lower_bound(&[1.0f64, 1.0], 8).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(packing_lower_bound(&[0.0f64, 0.5], 8).unwrap(), 0.0);
        assert!(packing_lower_bound(&[1.5f64], 4).is_err());
        assert!(packing_lower_bound(&[0.5f64], 1).is_err());
    }

    #[test]
    fn partition_diameter_u_family() {
        let members: Vec<Pmf<f64>> = (1..=4).map(|k| totally_bounded_uk(k).unwrap()).collect();
        let fam = family(members);
        let singletons: Vec<Vec<usize>> = (0..4).map(|i| vec![i]).collect();
        assert_eq!(partition_diameter(&fam, &singletons).unwrap(), 0.0);
        let cells = vec![vec![0], vec![1], vec![2, 3]];
        let d = partition_diameter(&fam, &cells).unwrap();
        assert!(d <= 3.0 / 9.0 + 1e-12);
        assert!(partition_diameter(&fam, &[vec![0, 1]]).is_err());
        assert!(partition_diameter(&fam, &[vec![0, 0], vec![1], vec![2], vec![3]]).is_err());
    }

    #[test]
    fn fekete_linear_and_super() {
        let lin: Vec<(u64, f64)> = (1..=10).map(|n| (n, 3.0 * n as f64)).collect();
        let r = fekete_limit(&lin).unwrap();
        assert!((r.slope_estimate - 3.0).abs() < 1e-12);
        assert!(r.subadditivity_violations.is_empty());

        let log_extra: Vec<(u64, f64)> = (1..=10)
            .map(|k| {
                let n = 1u64 << k;
                (n, n as f64 + (n as f64).log2())
            })
            .collect();
        let r = fekete_limit(&log_extra).unwrap();
        assert!(r.subadditivity_violations.is_empty());
        let min = log_extra
            .iter()
            .map(|&(n, a)| a / n as f64)
            .fold(f64::INFINITY, f64::min);
        assert!((r.slope_estimate - min).abs() < 1e-12);

        let quad: Vec<(u64, f64)> = (1..=10).map(|n| (n, (n * n) as f64)).collect();
        let r = fekete_limit(&quad).unwrap();
        assert!(!r.subadditivity_violations.is_empty());
    }

    #[test]
    fn pointwise_max_examples() {
        let ones = vec![1.0f64; 5];
        let twos = vec![2.0f64; 5];
        assert_eq!(max_sequence_limit(&[ones.clone(), twos.clone()]).unwrap(), twos);
        assert_eq!(max_sequence_limit(&[ones.clone()]).unwrap(), ones);
        let short = vec![0.0f64; 3];
        assert!(matches!(
            max_sequence_limit(&[ones, short]),
            Err(MinimaxError::LengthMismatch { .. })
        ));
        // Tail of the max of converging sequences approaches max of limits.
        let a: Vec<f64> = (1..=200).map(|i| 1.0 + 1.0 / i as f64).collect();
        let b: Vec<f64> = (1..=200).map(|i| 2.0 - 1.0 / i as f64).collect();
        let m = max_sequence_limit(&[a, b]).unwrap();
        assert!((m.last().unwrap() - 2.0).abs() < 0.01);
    }
}
