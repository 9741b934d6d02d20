//! Krichevsky–Trofimov add-half sequential estimator.

/// A sequential predictive probability assigner over a fixed finite
/// alphabet: deterministic state, next-symbol distribution, update rule.
/// Encoder and decoder advance twin instances symbol by symbol, so the
/// update must be a pure function of the observed prefix.
pub trait CodeModel {
    fn alphabet_size(&self) -> usize;
    /// Next-symbol probabilities; must sum to 1 within 1e-12.
    fn next_probs(&self, buf: &mut Vec<f64>);
    fn update(&mut self, symbol: usize);
}

/// Add-half estimator: after `t` symbols with per-symbol counts `c`, the
/// next-symbol probability is `(c + ½) / (t + k/2)`. Its worst-case regret
/// against iid sources on `k` symbols grows like `(k−1)/2·log₂ n`, which is
/// what makes it the workhorse behind the censored-alphabet coder.
#[derive(Debug, Clone)]
pub struct KtModel {
    counts: Vec<u64>,
    total: u64,
}

impl KtModel {
    pub fn new(alphabet_size: usize) -> Self {
        assert!(alphabet_size >= 2, "need at least a binary alphabet");
        KtModel {
            counts: vec![0; alphabet_size],
            total: 0,
        }
    }

    /// Probability of `symbol` at the current state: `(2c+1)/(2t+k)`.
    #[inline]
    pub fn prob(&self, symbol: usize) -> f64 {
        (2 * self.counts[symbol] + 1) as f64 / (2 * self.total + self.counts.len() as u64) as f64
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Ideal codelength of a whole sequence under sequential KT coding.
    pub fn ideal_bits(alphabet_size: usize, symbols: impl IntoIterator<Item = usize>) -> f64 {
        let mut model = KtModel::new(alphabet_size);
        let mut bits = 0.0;
        for s in symbols {
            bits -= model.prob(s).log2();
            model.update(s);
        }
        bits
    }
}

impl CodeModel for KtModel {
    fn alphabet_size(&self) -> usize {
        self.counts.len()
    }

    fn next_probs(&self, buf: &mut Vec<f64>) {
        buf.clear();
        let denom = (2 * self.total + self.counts.len() as u64) as f64;
        buf.extend(self.counts.iter().map(|&c| (2 * c + 1) as f64 / denom));
    }

    fn update(&mut self, symbol: usize) {
        self.counts[symbol] += 1;
        self.total += 1;
    }
}

/// Fresh add-half assigner over `alphabet_size` symbols.
pub fn kt_model(alphabet_size: usize) -> KtModel {
    KtModel::new(alphabet_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_symbol_is_uniform() {
        for k in [2usize, 3, 7, 100] {
            let model = KtModel::new(k);
            for s in 0..k {
                assert!((model.prob(s) - 1.0 / k as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn binary_two_zeros() {
        // ½ · ¾ = 3/8 for the sequence (0, 0).
        let mut model = KtModel::new(2);
        let mut prob = model.prob(0);
        model.update(0);
        prob *= model.prob(0);
        assert!((prob - 0.375).abs() < 1e-15);
    }

    #[test]
    fn probs_sum_to_one() {
        let mut model = KtModel::new(5);
        let mut buf = Vec::new();
        for s in [0usize, 3, 3, 1, 4, 4, 4, 2, 0, 3] {
            model.next_probs(&mut buf);
            let total: f64 = buf.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            model.update(s);
        }
    }

    #[test]
    fn sequence_prob_is_exchangeable() {
        let a = KtModel::ideal_bits(3, [0, 1, 1, 2, 0, 1]);
        let b = KtModel::ideal_bits(3, [1, 1, 1, 0, 2, 0]);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn binary_regret_bound_small_n() {
        // Exhaustive: max over all 2^10 sequences of
        // codelength − n·(empirical entropy) against ½·log₂10 + 1.
        let n = 10usize;
        let mut worst = f64::NEG_INFINITY;
        for mask in 0u32..(1 << n) {
            let seq: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let ones = seq.iter().sum::<usize>();
            let bits = KtModel::ideal_bits(2, seq.iter().copied());
            let emp = |c: usize| {
                if c == 0 || c == n {
                    0.0
                } else {
                    let p = c as f64 / n as f64;
                    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2()) * n as f64
                }
            };
            worst = worst.max(bits - emp(ones));
        }
        assert!(worst <= 0.5 * (n as f64).log2() + 1.0, "regret {worst}");
    }
}
