//! Bit-level arithmetic coder with 62-bit interval state.
//!
//! Classic low/high interval coder: the interval is narrowed by integer
//! cumulative frequencies, matching top bits are emitted as they settle
//! (with pending-bit bookkeeping for middle-straddle underflow), and
//! termination costs at most 2 bits beyond the ideal codelength of the
//! quantized model. With a 62-bit state and 30-bit frequency totals the
//! interval never collapses (`range/total ≥ 2^30`), so per-symbol precision
//! loss is bounded by ~2^-30 bits and whole-message overhead stays within
//! the 2-bit termination budget for any realistic length.
//!
//! Frequencies are quantized to a fixed 2^30 denominator with a floor of one
//! unit per declared symbol, so every symbol stays encodable. Rows may be
//! deliberately sub-normalized; the remaining mass becomes a reserved slack
//! index that the encoder never emits and the decoder rejects.

const STATE_BITS: u32 = 62;
const TOP: u64 = 1 << STATE_BITS;
const HALF: u64 = TOP >> 1;
const QUARTER: u64 = TOP >> 2;
const THREE_QUARTERS: u64 = HALF + QUARTER;

/// Fixed quantization denominator (fits comfortably under the state width).
pub const FREQ_TOTAL: u64 = 1 << 30;

#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bit_len: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, bit: bool) {
        let offset = (self.bit_len % 8) as u8;
        if offset == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> offset;
        }
        self.bit_len += 1;
    }

    pub fn bit_len(&self) -> u64 {
        self.bit_len
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

/// Reads bits MSB-first, yielding zeros past the end of the buffer (the
/// decoder's final-state bits are immaterial once `n` symbols are out).
#[derive(Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0 }
    }

    #[inline]
    pub fn next(&mut self) -> bool {
        let idx = (self.pos / 8) as usize;
        let bit = match self.bytes.get(idx) {
            Some(byte) => (byte >> (7 - (self.pos % 8))) & 1 == 1,
            None => false,
        };
        self.pos += 1;
        bit
    }
}

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    high: u64,
    pending: u64,
    out: BitWriter,
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            high: TOP - 1,
            pending: 0,
            out: BitWriter::new(),
        }
    }

    #[inline]
    fn emit(&mut self, bit: bool) {
        self.out.push(bit);
        while self.pending > 0 {
            self.out.push(!bit);
            self.pending -= 1;
        }
    }

    /// Narrow the interval to `[cum_lo, cum_hi) / total`.
    pub fn encode(&mut self, cum_lo: u64, cum_hi: u64, total: u64) {
        debug_assert!(cum_lo < cum_hi && cum_hi <= total);
        debug_assert!(total <= FREQ_TOTAL);
        let range = (self.high - self.low + 1) as u128;
        let total = total as u128;
        self.high = self.low + ((range * cum_hi as u128) / total) as u64 - 1;
        self.low += ((range * cum_lo as u128) / total) as u64;
        loop {
            if self.high < HALF {
                self.emit(false);
            } else if self.low >= HALF {
                self.emit(true);
                self.low -= HALF;
                self.high -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.pending += 1;
                self.low -= QUARTER;
                self.high -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
        }
    }

    /// Encode one raw bit at probability exactly ½.
    #[inline]
    pub fn encode_bit(&mut self, bit: bool) {
        let mid = FREQ_TOTAL / 2;
        if bit {
            self.encode(mid, FREQ_TOTAL, FREQ_TOTAL);
        } else {
            self.encode(0, mid, FREQ_TOTAL);
        }
    }

    /// Flush: pick the quarter that pins the final interval. At most 2 bits
    /// beyond the information content (plus any pending underflow bits).
    pub fn finish(mut self) -> BitWriter {
        self.pending += 1;
        if self.low < QUARTER {
            self.emit(false);
        } else {
            self.emit(true);
        }
        self.out
    }
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    low: u64,
    high: u64,
    code: u64,
    input: BitReader<'a>,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        let mut input = BitReader::new(bytes);
        let mut code = 0u64;
        for _ in 0..STATE_BITS {
            code = (code << 1) | input.next() as u64;
        }
        RangeDecoder {
            low: 0,
            high: TOP - 1,
            code,
            input,
        }
    }

    /// Cumulative-frequency target of the pending symbol under `total`.
    pub fn decode_target(&self, total: u64) -> u64 {
        let range = (self.high - self.low + 1) as u128;
        (((self.code - self.low + 1) as u128 * total as u128 - 1) / range) as u64
    }

    /// Consume the symbol occupying `[cum_lo, cum_hi) / total`; must mirror
    /// the encoder's interval update exactly.
    pub fn advance(&mut self, cum_lo: u64, cum_hi: u64, total: u64) {
        let range = (self.high - self.low + 1) as u128;
        let total = total as u128;
        self.high = self.low + ((range * cum_hi as u128) / total) as u64 - 1;
        self.low += ((range * cum_lo as u128) / total) as u64;
        loop {
            if self.high < HALF {
                // nothing to subtract
            } else if self.low >= HALF {
                self.low -= HALF;
                self.high -= HALF;
                self.code -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.low -= QUARTER;
                self.high -= QUARTER;
                self.code -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
            self.code = (self.code << 1) | self.input.next() as u64;
        }
    }

    /// Decode one raw ½-probability bit.
    #[inline]
    pub fn decode_bit(&mut self) -> bool {
        let mid = FREQ_TOTAL / 2;
        let bit = self.decode_target(FREQ_TOTAL) >= mid;
        if bit {
            self.advance(mid, FREQ_TOTAL, FREQ_TOTAL);
        } else {
            self.advance(0, mid, FREQ_TOTAL);
        }
        bit
    }
}

/// Quantize a (sub-)probability row to integer frequencies.
///
/// Every entry gets at least one unit. When `complete`, leftover units are
/// distributed by largest remainder so the row sums to exactly
/// [`FREQ_TOTAL`]; otherwise the leftover is returned as reserved slack.
pub fn quantize_row(probs: &[f64], complete: bool) -> (Vec<u64>, u64) {
    let k = probs.len();
    debug_assert!(k >= 1 && (k as u64) < FREQ_TOTAL / 2);
    let mut freqs: Vec<u64> = Vec::with_capacity(k);
    let mut fracs: Vec<(usize, f64)> = Vec::with_capacity(k);
    let mut sum = 0u64;
    for (i, &p) in probs.iter().enumerate() {
        let target = (p.max(0.0) * FREQ_TOTAL as f64).min(FREQ_TOTAL as f64);
        let f = (target.floor() as u64).max(1);
        fracs.push((i, target - target.floor()));
        freqs.push(f);
        sum += f;
    }
    // The per-symbol floor can overshoot when many near-zero entries share a
    // row; claw back from the largest entries.
    while sum > FREQ_TOTAL {
        let (idx, _) = freqs
            .iter()
            .enumerate()
            .max_by_key(|&(_, &f)| f)
            .expect("nonempty row");
        let take = (sum - FREQ_TOTAL).min(freqs[idx] - 1);
        freqs[idx] -= take;
        sum -= take;
        if take == 0 {
            break;
        }
    }
    let mut slack = FREQ_TOTAL - sum;
    if complete && slack > 0 {
        let per = slack / k as u64;
        if per > 0 {
            for f in freqs.iter_mut() {
                *f += per;
            }
            slack -= per * k as u64;
        }
        fracs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for &(i, _) in fracs.iter().take(slack as usize) {
            freqs[i] += 1;
        }
        slack = 0;
    }
    (freqs, slack)
}

/// Prefix sums for a frequency row: `cum[i] .. cum[i+1]` is symbol `i`.
pub fn cumulative(freqs: &[u64]) -> Vec<u64> {
    let mut cum = Vec::with_capacity(freqs.len() + 1);
    let mut acc = 0u64;
    cum.push(0);
    for &f in freqs {
        acc += f;
        cum.push(acc);
    }
    cum
}

/// Symbol index whose cumulative slot contains `target`; `None` lands in the
/// reserved slack region of a sub-normalized row.
pub fn locate(cum: &[u64], target: u64) -> Option<usize> {
    let idx = cum.partition_point(|&c| c <= target);
    if idx == 0 || idx >= cum.len() {
        None
    } else {
        Some(idx - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantize_complete_sums_exactly() {
        let (freqs, slack) = quantize_row(&[0.5, 0.25, 0.125, 0.125], true);
        assert_eq!(freqs.iter().sum::<u64>(), FREQ_TOTAL);
        assert_eq!(slack, 0);
        assert_eq!(freqs[0], FREQ_TOTAL / 2);
    }

    #[test]
    fn quantize_floors_tiny_probs() {
        let (freqs, slack) = quantize_row(&[1.0 - 1e-15, 1e-15], true);
        assert!(freqs[1] >= 1);
        assert_eq!(freqs.iter().sum::<u64>() + slack, FREQ_TOTAL);
    }

    #[test]
    fn quantize_deficient_reserves_slack() {
        let (freqs, slack) = quantize_row(&[0.25, 0.25], false);
        assert_eq!(freqs.iter().sum::<u64>() + slack, FREQ_TOTAL);
        assert!(slack >= FREQ_TOTAL / 2 - 2);
    }

    #[test]
    fn roundtrip_random_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..200 {
            let k = rng.gen_range(2..17usize);
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
            let (freqs, _) = quantize_row(&probs, true);
            let cum = cumulative(&freqs);
            let n = rng.gen_range(1..200usize);
            let symbols: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();

            let mut enc = RangeEncoder::new();
            for &s in &symbols {
                enc.encode(cum[s], cum[s + 1], FREQ_TOTAL);
            }
            let bits = enc.finish();
            let ideal: f64 = symbols
                .iter()
                .map(|&s| -((freqs[s] as f64 / FREQ_TOTAL as f64).log2()))
                .sum();
            assert!(
                (bits.bit_len() as f64) <= ideal.ceil() + 2.0,
                "trial {trial}: {} bits vs ideal {ideal}",
                bits.bit_len()
            );

            let bytes = bits.into_bytes();
            let mut dec = RangeDecoder::new(&bytes);
            for (i, &s) in symbols.iter().enumerate() {
                let target = dec.decode_target(FREQ_TOTAL);
                let got = locate(&cum, target).expect("inside row");
                assert_eq!(got, s, "trial {trial} symbol {i}");
                dec.advance(cum[got], cum[got + 1], FREQ_TOTAL);
            }
        }
    }

    #[test]
    fn raw_bits_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bits: Vec<bool> = (0..500).map(|_| rng.gen()).collect();
        let mut enc = RangeEncoder::new();
        for &b in &bits {
            enc.encode_bit(b);
        }
        let out = enc.finish();
        assert!(out.bit_len() <= 500 + 2);
        let bytes = out.into_bytes();
        let mut dec = RangeDecoder::new(&bytes);
        for (i, &b) in bits.iter().enumerate() {
            assert_eq!(dec.decode_bit(), b, "bit {i}");
        }
    }

    #[test]
    fn single_symbol_stream_is_tiny() {
        let (freqs, _) = quantize_row(&[0.5, 0.5], true);
        let cum = cumulative(&freqs);
        let mut enc = RangeEncoder::new();
        enc.encode(cum[1], cum[2], FREQ_TOTAL);
        let out = enc.finish();
        assert!(out.bit_len() <= 3, "got {}", out.bit_len());
    }
}
