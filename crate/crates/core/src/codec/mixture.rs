//! Horizon-free operation: a sequential Bayesian mixture of censoring models
//! over a dyadic threshold grid.
//!
//! Component `j` (threshold `m_j`) assigns the raw symbol `x` the
//! (sub-)probability `KT_j(x)` for `x ≤ m_j` and `KT_j(esc)·w(x)` above it,
//! where `w` is the block law. The mixture codes a *frame* symbol — a literal
//! up to the largest grid threshold `M`, or a frame escape — under the
//! posterior-weighted blend of component conditionals, then codes frame
//! escapes with the block law conditioned on `x > M`. The per-step factors
//! telescope to `Σ_j ŵ_j q_j(xⁿ)` exactly, so the ideal codelength beats the
//! best component up to its prior weight `log₂((j+1)(j+2))`, and a
//! single-component grid degenerates to that censoring model with no
//! penalty.

use crate::pmf::Symbol;

use super::kt::{CodeModel, KtModel};
use super::rc::{cumulative, locate, quantize_row, RangeDecoder, RangeEncoder, FREQ_TOTAL};
use super::tail_code::{law_tail_mass, RestrictedTailCoder, TailCoder};
use super::CodecError;

/// Prior weight of grid slot `j` before normalization: `1/((j+1)(j+2))`.
fn slot_weight(j: usize) -> f64 {
    1.0 / ((j as f64 + 1.0) * (j as f64 + 2.0))
}

#[derive(Debug)]
pub struct MixtureModel {
    grid: Vec<u64>,
    comps: Vec<KtModel>,
    /// Unnormalized posterior log₂-weights.
    log2_w: Vec<f64>,
    frame_m: u64,
    law: TailCoder,
    payload: RestrictedTailCoder,
    /// `w(x > frame_m)` under the untruncated block law.
    law_mass_beyond: f64,
}

impl MixtureModel {
    /// Build the mixture over `grid` (strictly increasing thresholds). The
    /// grid index determines each component's prior weight.
    pub fn new(grid: &[u64], truncation: u32) -> Result<Self, CodecError> {
        if grid.is_empty() {
            return Err(CodecError::BadScheme("empty threshold grid".into()));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CodecError::BadScheme(
                "threshold grid must be strictly increasing".into(),
            ));
        }
        let frame_m = *grid.last().unwrap();
        if frame_m >= 1 << 20 {
            return Err(CodecError::BadScheme(format!(
                "largest threshold {frame_m} exceeds the 2^20 alphabet guard"
            )));
        }
        let comps: Vec<KtModel> = grid.iter().map(|&m| KtModel::new(m as usize + 1)).collect();
        let norm: f64 = (0..grid.len()).map(slot_weight).sum();
        let log2_w: Vec<f64> = (0..grid.len())
            .map(|j| (slot_weight(j) / norm).log2())
            .collect();
        let payload = RestrictedTailCoder::new(truncation, frame_m as Symbol)?;
        Ok(MixtureModel {
            grid: grid.to_vec(),
            comps,
            log2_w,
            frame_m,
            law: TailCoder::new(truncation),
            payload,
            law_mass_beyond: law_tail_mass(frame_m as Symbol + 1),
        })
    }

    /// Dyadic grid `{2, 4, …, max_m}`; `max_m` must be a power of two ≥ 2.
    pub fn dyadic(max_m: u64, truncation: u32) -> Result<Self, CodecError> {
        if max_m < 2 || !max_m.is_power_of_two() {
            return Err(CodecError::BadScheme(format!(
                "mixture threshold {max_m} must be a power of two ≥ 2"
            )));
        }
        let grid: Vec<u64> = (1..=max_m.trailing_zeros()).map(|k| 1 << k).collect();
        MixtureModel::new(&grid, truncation)
    }

    pub fn grid(&self) -> &[u64] {
        &self.grid
    }

    pub fn frame_alphabet(&self) -> usize {
        self.frame_m as usize + 1
    }

    fn posterior(&self) -> Vec<f64> {
        let max = self
            .log2_w
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let raw: Vec<f64> = self.log2_w.iter().map(|&l| (l - max).exp2()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|r| r / total).collect()
    }

    /// Component `j`'s probability of raw symbol `x` at its current state.
    fn component_raw(&self, j: usize, x: Symbol) -> f64 {
        let m = self.grid[j];
        if x <= m as Symbol {
            self.comps[j].prob((x - 1) as usize)
        } else {
            self.comps[j].prob(m as usize) * self.law.prob(x)
        }
    }

    /// Sub-normalized frame row: literals `1..=frame_m` then the frame
    /// escape. The deficit is the posterior-weighted mass each component's
    /// payload law wastes below its own threshold.
    fn frame_row(&self, post: &[f64]) -> Vec<f64> {
        let mut row = vec![0.0f64; self.frame_alphabet()];
        for (j, (&m, kt)) in self.grid.iter().zip(self.comps.iter()).enumerate() {
            let w = post[j];
            if w <= 0.0 {
                continue;
            }
            let esc = kt.prob(m as usize);
            for a in 1..=self.frame_m {
                row[(a - 1) as usize] += w
                    * if a <= m {
                        kt.prob((a - 1) as usize)
                    } else {
                        esc * self.law.prob(a as Symbol)
                    };
            }
            row[self.frame_m as usize] += w * esc * self.law_mass_beyond;
        }
        row
    }

    fn advance(&mut self, x: Symbol) {
        for j in 0..self.grid.len() {
            self.log2_w[j] += self.component_raw(j, x).log2();
            let m = self.grid[j];
            let sym = if x <= m as Symbol {
                (x - 1) as usize
            } else {
                m as usize
            };
            self.comps[j].update(sym);
        }
        // Rebase to keep the unnormalized log-weights in range.
        let max = self
            .log2_w
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        for l in self.log2_w.iter_mut() {
            *l -= max;
        }
    }

    fn check(&self, x: Symbol) -> Result<(), CodecError> {
        if x < 1 {
            return Err(CodecError::InvalidSymbol {
                symbol: x.to_string(),
            });
        }
        if crate::families::block_of(x) > self.law.i_max() {
            return Err(CodecError::SymbolBeyondTruncation {
                symbol: x.to_string(),
                i_max: self.law.i_max(),
            });
        }
        Ok(())
    }

    pub fn encode_into(&mut self, xs: &[Symbol], enc: &mut RangeEncoder) -> Result<(), CodecError> {
        for &x in xs {
            self.check(x)?;
            let post = self.posterior();
            let row = self.frame_row(&post);
            let (freqs, _) = quantize_row(&row, false);
            let cum = cumulative(&freqs);
            let frame_sym = if x <= self.frame_m as Symbol {
                (x - 1) as usize
            } else {
                self.frame_m as usize
            };
            enc.encode(cum[frame_sym], cum[frame_sym + 1], FREQ_TOTAL);
            if frame_sym == self.frame_m as usize {
                self.payload.encode(enc, x)?;
            }
            self.advance(x);
        }
        Ok(())
    }

    pub fn decode_from(
        &mut self,
        dec: &mut RangeDecoder,
        n: usize,
    ) -> Result<Vec<Symbol>, CodecError> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let post = self.posterior();
            let row = self.frame_row(&post);
            let (freqs, _) = quantize_row(&row, false);
            let cum = cumulative(&freqs);
            let target = dec.decode_target(FREQ_TOTAL);
            let frame_sym = locate(&cum, target)
                .ok_or_else(|| CodecError::Corrupt("frame symbol in reserved slack".into()))?;
            dec.advance(cum[frame_sym], cum[frame_sym + 1], FREQ_TOTAL);
            let x = if frame_sym == self.frame_m as usize {
                let x = self.payload.decode(dec)?;
                if x <= self.frame_m as Symbol {
                    return Err(CodecError::Corrupt(
                        "frame escape payload inside the frame".into(),
                    ));
                }
                x
            } else {
                (frame_sym + 1) as Symbol
            };
            self.advance(x);
            out.push(x);
        }
        Ok(out)
    }

    /// Exact model codelength: `−log₂` of the per-step frame factor plus the
    /// restricted payload factor for frame escapes.
    pub fn ideal_bits(&mut self, xs: &[Symbol]) -> Result<f64, CodecError> {
        let mut bits = 0.0;
        for &x in xs {
            self.check(x)?;
            let post = self.posterior();
            let row = self.frame_row(&post);
            if x <= self.frame_m as Symbol {
                bits -= row[(x - 1) as usize].log2();
            } else {
                bits -= row[self.frame_m as usize].log2();
                bits += self.payload.codelength(x);
            }
            self.advance(x);
        }
        Ok(bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::censor::CensoringCoder;

    #[test]
    fn single_component_equals_censoring() {
        let xs: Vec<Symbol> = vec![1, 3, 9, 2, 4, 4, 120, 1];
        let mut mix = MixtureModel::new(&[4], 40).unwrap();
        let mix_bits = mix.ideal_bits(&xs).unwrap();
        let cens = CensoringCoder::new(4, 40).unwrap();
        let cens_bits = cens.ideal_bits(&xs).unwrap();
        assert!(
            (mix_bits - cens_bits).abs() < 1e-9,
            "mixture {mix_bits} vs censoring {cens_bits}"
        );
    }

    #[test]
    fn mixture_beats_best_component_plus_weight() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for trial in 0..30 {
            let n = rng.gen_range(1..60usize);
            let xs: Vec<Symbol> = (0..n)
                .map(|_| {
                    if rng.gen_bool(0.2) {
                        rng.gen_range(20..4000u32) as Symbol
                    } else {
                        rng.gen_range(1..=6u32) as Symbol
                    }
                })
                .collect();
            let grid = [4u64, 16];
            let mut mix = MixtureModel::new(&grid, 40).unwrap();
            let mix_bits = mix.ideal_bits(&xs).unwrap();
            for (j, &m) in grid.iter().enumerate() {
                let comp_bits = CensoringCoder::new(m, 40).unwrap().ideal_bits(&xs).unwrap();
                let penalty = ((j as f64 + 1.0) * (j as f64 + 2.0)).log2();
                assert!(
                    mix_bits <= comp_bits + penalty + 1e-9,
                    "trial {trial}: {mix_bits} vs {comp_bits} + {penalty}"
                );
            }
        }
    }

    #[test]
    fn dyadic_grid_shape() {
        let mix = MixtureModel::dyadic(32, 40).unwrap();
        assert_eq!(mix.grid(), &[2, 4, 8, 16, 32]);
        assert!(MixtureModel::dyadic(12, 40).is_err());
    }

    #[test]
    fn roundtrip() {
        let xs: Vec<Symbol> = vec![1, 2, 3, 50, 4, 1, 9, 1 << 25, 2, 2, 2, 7];
        let mut mix = MixtureModel::dyadic(8, 40).unwrap();
        let mut enc = RangeEncoder::new();
        mix.encode_into(&xs, &mut enc).unwrap();
        let bytes = enc.finish().into_bytes();
        let mut dec_mix = MixtureModel::dyadic(8, 40).unwrap();
        let mut dec = RangeDecoder::new(&bytes);
        assert_eq!(dec_mix.decode_from(&mut dec, xs.len()).unwrap(), xs);
    }
}
