//! The censoring code at a fixed threshold `m`: symbols above `m` become an
//! escape in an auxiliary string coded by an add-half estimator over the
//! `m+1`-letter censored alphabet; each escape is followed by the original
//! symbol under the block law, coded independently of everything else.

use crate::pmf::Symbol;

use super::kt::{CodeModel, KtModel};
use super::rc::{cumulative, locate, quantize_row, RangeDecoder, RangeEncoder, FREQ_TOTAL};
use super::tail_code::TailCoder;
use super::CodecError;

/// One letter of the auxiliary string: a literal in `{1,…,m}` or the escape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CensoredSymbol {
    Literal(u64),
    Escape,
}

/// Censor a string at threshold `m`: literals stay, anything strictly above
/// `m` escapes. Strictly-above keeps the censored alphabet at exactly `m+1`
/// letters.
pub fn censor_map(xs: &[Symbol], m: u64) -> Vec<CensoredSymbol> {
    xs.iter()
        .map(|&x| {
            if x <= m as Symbol {
                CensoredSymbol::Literal(x as u64)
            } else {
                CensoredSymbol::Escape
            }
        })
        .collect()
}

#[derive(Debug)]
pub struct CensoringCoder {
    m: u64,
    kt: KtModel,
    tail: TailCoder,
    probs: Vec<f64>,
}

impl CensoringCoder {
    pub fn new(m: u64, truncation: u32) -> Result<Self, CodecError> {
        if m < 1 {
            return Err(CodecError::BadScheme("threshold must be ≥ 1".into()));
        }
        if m >= 1 << 20 {
            return Err(CodecError::BadScheme(format!(
                "threshold {m} exceeds the 2^20 alphabet guard"
            )));
        }
        Ok(CensoringCoder {
            m,
            kt: KtModel::new(m as usize + 1),
            tail: TailCoder::new(truncation),
            probs: Vec::new(),
        })
    }

    fn frame_index(&self, x: Symbol) -> Result<usize, CodecError> {
        if x < 1 {
            return Err(CodecError::InvalidSymbol {
                symbol: x.to_string(),
            });
        }
        Ok(if x <= self.m as Symbol {
            (x - 1) as usize
        } else {
            self.m as usize
        })
    }

    pub fn encode_into(&mut self, xs: &[Symbol], enc: &mut RangeEncoder) -> Result<(), CodecError> {
        for &x in xs {
            let sym = self.frame_index(x)?;
            self.kt.next_probs(&mut self.probs);
            let (freqs, _) = quantize_row(&self.probs, true);
            let cum = cumulative(&freqs);
            enc.encode(cum[sym], cum[sym + 1], FREQ_TOTAL);
            self.kt.update(sym);
            if sym == self.m as usize {
                self.tail.encode(enc, x)?;
            }
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
            self.kt.next_probs(&mut self.probs);
            let (freqs, _) = quantize_row(&self.probs, true);
            let cum = cumulative(&freqs);
            let target = dec.decode_target(FREQ_TOTAL);
            let sym = locate(&cum, target)
                .ok_or_else(|| CodecError::Corrupt("frame symbol out of range".into()))?;
            dec.advance(cum[sym], cum[sym + 1], FREQ_TOTAL);
            self.kt.update(sym);
            if sym == self.m as usize {
                let x = self.tail.decode(dec)?;
                if x <= self.m as Symbol {
                    return Err(CodecError::Corrupt(
                        "escape payload below the censoring threshold".into(),
                    ));
                }
                out.push(x);
            } else {
                out.push((sym + 1) as Symbol);
            }
        }
        Ok(out)
    }

    /// Exact model codelength, no coder overhead: the add-half cost of the
    /// censored string plus `log₂(1/w(x))` per escape.
    pub fn ideal_bits(&self, xs: &[Symbol]) -> Result<f64, CodecError> {
        let mut kt = KtModel::new(self.m as usize + 1);
        let mut bits = 0.0;
        for &x in xs {
            let sym = self.frame_index(x)?;
            bits -= kt.prob(sym).log2();
            kt.update(sym);
            if sym == self.m as usize {
                let i = crate::families::block_of(x);
                if i > self.tail.i_max() {
                    return Err(CodecError::SymbolBeyondTruncation {
                        symbol: x.to_string(),
                        i_max: self.tail.i_max(),
                    });
                }
                bits += self.tail.codelength(x);
            }
        }
        Ok(bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn censor_map_examples() {
        let xs: Vec<Symbol> = vec![1, 9, 2];
        assert_eq!(
            censor_map(&xs, 4),
            vec![
                CensoredSymbol::Literal(1),
                CensoredSymbol::Escape,
                CensoredSymbol::Literal(2)
            ]
        );
        let small: Vec<Symbol> = vec![1, 2, 3];
        assert!(censor_map(&small, 4)
            .iter()
            .all(|s| matches!(s, CensoredSymbol::Literal(_))));
        let above: Vec<Symbol> = vec![2, 3];
        assert!(censor_map(&above, 1)
            .iter()
            .all(|s| matches!(s, CensoredSymbol::Escape)));
        // Boundary: x = m stays literal.
        assert_eq!(censor_map(&[4], 4), vec![CensoredSymbol::Literal(4)]);
    }

    #[test]
    fn ideal_bits_decomposition_example() {
        // (1, 9, 2) at m = 4: KT cost of (1, esc, 2) plus log₂160 for the 9.
        let coder = CensoringCoder::new(4, 40).unwrap();
        let xs: Vec<Symbol> = vec![1, 9, 2];
        let got = coder.ideal_bits(&xs).unwrap();
        let kt = KtModel::ideal_bits(5, [0usize, 4, 1]);
        assert!((got - (kt + 160f64.log2())).abs() < 1e-12);
    }

    #[test]
    fn roundtrip_with_escapes() {
        let mut coder = CensoringCoder::new(4, 40).unwrap();
        let xs: Vec<Symbol> = vec![1, 9, 2, 4, 4, 700, 1, 1, 3, 1 << 30];
        let mut enc = RangeEncoder::new();
        coder.encode_into(&xs, &mut enc).unwrap();
        let bytes = enc.finish().into_bytes();
        let mut dec_coder = CensoringCoder::new(4, 40).unwrap();
        let mut dec = RangeDecoder::new(&bytes);
        assert_eq!(dec_coder.decode_from(&mut dec, xs.len()).unwrap(), xs);
    }

    #[test]
    fn rejects_symbol_zero() {
        let mut coder = CensoringCoder::new(4, 40).unwrap();
        let mut enc = RangeEncoder::new();
        let err = coder.encode_into(&[0], &mut enc).unwrap_err();
        assert!(matches!(err, CodecError::InvalidSymbol { .. }));
    }
}
