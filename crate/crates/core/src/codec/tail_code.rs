//! Escape-payload coder: the dyadic block law as an actual bit producer.
//!
//! A payload symbol `x ∈ T_i = {2^i, …, 2^(i+1)−1}` costs
//! `log₂((i+1)(i+2)) + i` bits: the block index is arithmetic-coded under
//! the block masses `1/((i+1)(i+2))` and the offset inside the block is `i`
//! raw bits. Blocks past the configured truncation level are reserved slack:
//! the encoder refuses such symbols and the decoder treats the region as
//! corruption.
//!
//! The restricted variant conditions the same law on `x > min_symbol` — used
//! by the threshold mixture, whose frame already rules the low symbols out —
//! renormalizing the partial first block and coding its offset uniformly.

use crate::families::block_of;
use crate::pmf::Symbol;

use super::rc::{cumulative, locate, quantize_row, RangeDecoder, RangeEncoder, FREQ_TOTAL};
use super::CodecError;

/// Block mass `1/((i+1)(i+2))`.
#[inline]
fn block_mass(i: u32) -> f64 {
    1.0 / ((i as f64 + 1.0) * (i as f64 + 2.0))
}

/// Per-symbol mass inside block `i`.
#[inline]
fn per_symbol_mass(i: u32) -> f64 {
    block_mass(i) / 2f64.powi(i as i32)
}

/// Mass of the block law at or above `m` (`m ≥ 1`): the telescoped full
/// blocks above plus the partial block containing `m`.
pub fn law_tail_mass(m: Symbol) -> f64 {
    if m <= 1 {
        return 1.0;
    }
    let b = block_of(m);
    let remaining = ((1u128 << (b + 1)) - m) as f64;
    1.0 / (b as f64 + 2.0) + remaining * per_symbol_mass(b)
}

#[derive(Debug, Clone)]
pub struct TailCoder {
    i_max: u32,
    /// Cumulative quantized block-index row; the gap to `FREQ_TOTAL` is the
    /// reserved beyond-truncation slack.
    cum: Vec<u64>,
}

impl TailCoder {
    pub fn new(i_max: u32) -> Self {
        assert!((1..=120).contains(&i_max));
        let probs: Vec<f64> = (0..=i_max).map(block_mass).collect();
        let (freqs, _slack) = quantize_row(&probs, false);
        let cum = cumulative(&freqs);
        TailCoder { i_max, cum }
    }

    pub fn i_max(&self) -> u32 {
        self.i_max
    }

    /// Ideal codelength of `x` under the untruncated law.
    pub fn codelength(&self, x: Symbol) -> f64 {
        let i = block_of(x);
        -block_mass(i).log2() + i as f64
    }

    /// `w(x)` of the untruncated law.
    pub fn prob(&self, x: Symbol) -> f64 {
        per_symbol_mass(block_of(x))
    }

    fn check(&self, x: Symbol) -> Result<u32, CodecError> {
        if x < 1 {
            return Err(CodecError::InvalidSymbol {
                symbol: x.to_string(),
            });
        }
        let i = block_of(x);
        if i > self.i_max {
            return Err(CodecError::SymbolBeyondTruncation {
                symbol: x.to_string(),
                i_max: self.i_max,
            });
        }
        Ok(i)
    }

    pub fn encode(&self, enc: &mut RangeEncoder, x: Symbol) -> Result<(), CodecError> {
        let i = self.check(x)?;
        enc.encode(self.cum[i as usize], self.cum[i as usize + 1], FREQ_TOTAL);
        let offset = x - (1u128 << i);
        for bit in (0..i).rev() {
            enc.encode_bit((offset >> bit) & 1 == 1);
        }
        Ok(())
    }

    pub fn decode(&self, dec: &mut RangeDecoder) -> Result<Symbol, CodecError> {
        let target = dec.decode_target(FREQ_TOTAL);
        let i = locate(&self.cum, target).ok_or_else(|| {
            CodecError::Corrupt("escape payload beyond truncation".into())
        })? as u32;
        dec.advance(self.cum[i as usize], self.cum[i as usize + 1], FREQ_TOTAL);
        let mut offset: Symbol = 0;
        for _ in 0..i {
            offset = (offset << 1) | dec.decode_bit() as Symbol;
        }
        Ok((1u128 << i) + offset)
    }
}

/// The block law conditioned on `x > min_symbol`, with its own quantized
/// block row. The partial first block is coded with an exact uniform over
/// its surviving offsets, so the realized cost matches
/// `log₂(w(>min)/w(x))` up to quantization.
#[derive(Debug, Clone)]
pub struct RestrictedTailCoder {
    min_symbol: Symbol,
    first_block: u32,
    first_count: u64,
    i_max: u32,
    cum: Vec<u64>,
    /// `w(x > min_symbol)` under the untruncated law.
    tail_mass: f64,
}

impl RestrictedTailCoder {
    /// `min_symbol` is excluded; payloads are `> min_symbol`. The surviving
    /// slice of the first block must fit the coder's 30-bit uniform.
    pub fn new(i_max: u32, min_symbol: Symbol) -> Result<Self, CodecError> {
        assert!((1..=120).contains(&i_max));
        let first = min_symbol + 1;
        let b0 = block_of(first.max(1));
        if b0 > i_max {
            return Err(CodecError::BadScheme(format!(
                "restriction at {min_symbol} leaves no blocks below truncation {i_max}"
            )));
        }
        let first_count = ((1u128 << (b0 + 1)) - first) as u64;
        if first_count as u128 >= (FREQ_TOTAL as u128) {
            return Err(CodecError::BadScheme(format!(
                "partial block of {first_count} offsets exceeds coder precision"
            )));
        }
        let tail = law_tail_mass(first);
        let mut probs: Vec<f64> = Vec::with_capacity((i_max - b0 + 1) as usize);
        probs.push(first_count as f64 * per_symbol_mass(b0) / tail);
        for i in (b0 + 1)..=i_max {
            probs.push(block_mass(i) / tail);
        }
        let (freqs, _slack) = quantize_row(&probs, false);
        Ok(RestrictedTailCoder {
            min_symbol,
            first_block: b0,
            first_count,
            i_max,
            cum: cumulative(&freqs),
            tail_mass: tail,
        })
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Ideal codelength `log₂(w(>min)/w(x))`.
    pub fn codelength(&self, x: Symbol) -> f64 {
        (self.tail_mass / per_symbol_mass(block_of(x))).log2()
    }

    pub fn encode(&self, enc: &mut RangeEncoder, x: Symbol) -> Result<(), CodecError> {
        if x <= self.min_symbol {
            return Err(CodecError::InvalidSymbol {
                symbol: x.to_string(),
            });
        }
        let i = block_of(x);
        if i > self.i_max {
            return Err(CodecError::SymbolBeyondTruncation {
                symbol: x.to_string(),
                i_max: self.i_max,
            });
        }
        let slot = (i - self.first_block) as usize;
        enc.encode(self.cum[slot], self.cum[slot + 1], FREQ_TOTAL);
        if i == self.first_block {
            if self.first_count > 1 {
                let idx = (x - (self.min_symbol + 1)) as u64;
                enc.encode(idx, idx + 1, self.first_count);
            }
        } else {
            let offset = x - (1u128 << i);
            for bit in (0..i).rev() {
                enc.encode_bit((offset >> bit) & 1 == 1);
            }
        }
        Ok(())
    }

    pub fn decode(&self, dec: &mut RangeDecoder) -> Result<Symbol, CodecError> {
        let target = dec.decode_target(FREQ_TOTAL);
        let slot = locate(&self.cum, target).ok_or_else(|| {
            CodecError::Corrupt("escape payload beyond truncation".into())
        })?;
        dec.advance(self.cum[slot], self.cum[slot + 1], FREQ_TOTAL);
        let i = self.first_block + slot as u32;
        if slot == 0 {
            let idx = if self.first_count > 1 {
                let t = dec.decode_target(self.first_count);
                dec.advance(t, t + 1, self.first_count);
                t
            } else {
                0
            };
            Ok(self.min_symbol + 1 + idx as Symbol)
        } else {
            let mut offset: Symbol = 0;
            for _ in 0..i {
                offset = (offset << 1) | dec.decode_bit() as Symbol;
            }
            Ok((1u128 << i) + offset)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn law_values() {
        let coder = TailCoder::new(40);
        assert!((coder.prob(1) - 0.5).abs() < 1e-15);
        assert!((coder.prob(9) - 1.0 / 160.0).abs() < 1e-15);
        assert!((coder.codelength(9) - 160f64.log2()).abs() < 1e-12);
        assert!((coder.codelength(9) - 7.3219).abs() < 1e-4);
    }

    #[test]
    fn tail_mass_telescopes() {
        assert!((law_tail_mass(1) - 1.0).abs() < 1e-15);
        // At a block boundary 2^k the mass is 1/(k+1).
        for k in 1..30u32 {
            assert!((law_tail_mass(1 << k) - 1.0 / (k as f64 + 1.0)).abs() < 1e-12);
        }
        // Mid-block: boundary value minus the skipped symbols.
        let m = 11u128; // inside T_3
        let expect = 0.25 - 3.0 * per_symbol_mass(3);
        assert!((law_tail_mass(m) - expect).abs() < 1e-15);
    }

    #[test]
    fn payload_roundtrip() {
        let coder = TailCoder::new(40);
        let symbols: [Symbol; 7] = [1, 2, 9, 100, 1023, 65536, (1 << 40) + 12345];
        let mut enc = RangeEncoder::new();
        for &x in &symbols {
            coder.encode(&mut enc, x).unwrap();
        }
        let bytes = enc.finish().into_bytes();
        let mut dec = RangeDecoder::new(&bytes);
        for &x in &symbols {
            assert_eq!(coder.decode(&mut dec).unwrap(), x);
        }
    }

    #[test]
    fn beyond_truncation_refused() {
        let coder = TailCoder::new(4);
        let mut enc = RangeEncoder::new();
        let err = coder.encode(&mut enc, 1 << 7).unwrap_err();
        assert!(matches!(err, CodecError::SymbolBeyondTruncation { .. }));
    }

    #[test]
    fn restricted_roundtrip_and_cost() {
        let coder = RestrictedTailCoder::new(40, 24).unwrap();
        let symbols: [Symbol; 6] = [25, 26, 31, 32, 1000, 1 << 20];
        let mut enc = RangeEncoder::new();
        for &x in &symbols {
            coder.encode(&mut enc, x).unwrap();
        }
        let total_ideal: f64 = symbols.iter().map(|&x| coder.codelength(x)).sum();
        let bits = enc.finish();
        assert!((bits.bit_len() as f64) <= total_ideal.ceil() + 2.0 + 1e-6);
        let bytes = bits.into_bytes();
        let mut dec = RangeDecoder::new(&bytes);
        for &x in &symbols {
            assert_eq!(coder.decode(&mut dec).unwrap(), x);
        }
        let mut enc = RangeEncoder::new();
        assert!(coder.encode(&mut enc, 24).is_err());
    }
}
