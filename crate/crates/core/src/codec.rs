//! Binary arithmetic coding of the trained priors, turning the cross-entropy
//! rate accounting into measured bits on a real bitstream.
//!
//! The coder keeps 64-bit `low`/`high` registers with bit-at-a-time
//! renormalization and an underflow (straddle) counter, and codes against
//! integer frequency tables whose total is a power of two (up to 30 bits of
//! precision). With these widths the per-symbol truncation loss is below
//! `2^-32` bits across the whole supported precision range, so measured
//! lengths sit within a small constant of the quantized-model cross-entropy.
//!
//! Encoder and decoder must use identical models; feeding a decoder a
//! mismatched model is undefined (as in any arithmetic coder) and is exactly
//! the documented caveat of this interface.

use crate::rng::RngState;
use crate::schemes::{LayeredModel, SchemeKind, SchemeModel};
use crate::source::{sample_batch, CorrelationModel};
use crate::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

// ---------------------------------------------------------------------------
// Frequency model
// ---------------------------------------------------------------------------

/// Integer cumulative frequencies over `K` symbols, totalling `2^precision`.
/// Every symbol has frequency >= 1, so the coder can always make progress.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfModel {
    cum: Vec<u32>,
    precision: u32,
}

impl CdfModel {
    /// Quantize a probability vector to integer frequencies by largest-
    /// remainder rounding, flooring every symbol at frequency 1.
    pub fn from_probs(probs: &[f64], precision_bits: u32) -> Result<Self> {
        if !(12..=30).contains(&precision_bits) {
            return Err(Error::Codec(format!(
                "precision {precision_bits} outside [12, 30]"
            )));
        }
        let k = probs.len();
        if k == 0 {
            return Err(Error::Codec("empty alphabet".into()));
        }
        let total: u64 = 1u64 << precision_bits;
        if k as u64 > total {
            return Err(Error::Codec(format!(
                "alphabet size {k} exceeds 2^{precision_bits}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Codec(format!(
                "probabilities must be non-negative and sum to 1 (sum = {sum})"
            )));
        }

        let mut freqs: Vec<u64> = Vec::with_capacity(k);
        let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(k);
        let mut assigned: u64 = 0;
        for (i, &p) in probs.iter().enumerate() {
            let ideal = p / sum * total as f64;
            let base = ideal.floor() as u64;
            freqs.push(base);
            assigned += base;
            remainders.push((ideal - base as f64, i));
        }
        // Largest remainders first; ties by index for determinism.
        remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, i) in &remainders {
            if assigned == total {
                break;
            }
            freqs[i] += 1;
            assigned += 1;
        }
        // Float rounding can leave a residue either way; reconcile against
        // the largest entries.
        while assigned < total {
            let (j, _) = freqs.iter().enumerate().max_by_key(|(_, &f)| f).unwrap();
            freqs[j] += 1;
            assigned += 1;
        }
        while assigned > total {
            let (j, &fmax) = freqs.iter().enumerate().max_by_key(|(_, &f)| f).unwrap();
            if fmax <= 1 {
                return Err(Error::Codec("cannot trim frequencies to total".into()));
            }
            freqs[j] -= 1;
            assigned -= 1;
        }
        // Enforce the minimum frequency, stealing from the largest symbols.
        for i in 0..k {
            if freqs[i] == 0 {
                let (j, &fmax) = freqs.iter().enumerate().max_by_key(|(_, &f)| f).unwrap();
                if fmax <= 1 {
                    return Err(Error::Codec("cannot satisfy minimum frequency".into()));
                }
                freqs[j] -= 1;
                freqs[i] = 1;
            }
        }
        debug_assert_eq!(freqs.iter().sum::<u64>(), total);

        let mut cum = Vec::with_capacity(k + 1);
        let mut acc: u64 = 0;
        cum.push(0u32);
        for &f in &freqs {
            acc += f;
            cum.push(acc as u32);
        }
        Ok(CdfModel {
            cum,
            precision: precision_bits,
        })
    }

    /// Model from raw logits via a stable softmax.
    pub fn from_log_probs(log_probs: &[f64], precision_bits: u32) -> Result<Self> {
        let probs: Vec<f64> = log_probs.iter().map(|lp| lp.exp()).collect();
        CdfModel::from_probs(&probs, precision_bits)
    }

    pub fn k(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn total(&self) -> u32 {
        self.cum[self.cum.len() - 1]
    }

    /// `(cum_low, cum_high)` of a symbol.
    pub fn range_of(&self, s: usize) -> (u32, u32) {
        (self.cum[s], self.cum[s + 1])
    }

    /// Quantized probability of a symbol.
    pub fn prob_of(&self, s: usize) -> f64 {
        (self.cum[s + 1] - self.cum[s]) as f64 / self.total() as f64
    }

    /// Ideal codelength of a symbol under the quantized model, in bits.
    pub fn bits_of(&self, s: usize) -> f64 {
        -self.prob_of(s).log2()
    }

    /// Symbol whose cumulative range contains `scaled`.
    fn symbol_for(&self, scaled: u32) -> usize {
        // partition_point returns the first index with cum > scaled;
        // subtracting one lands on the owning symbol.
        self.cum.partition_point(|&c| c <= scaled) - 1
    }
}

// ---------------------------------------------------------------------------
// Bitstream
// ---------------------------------------------------------------------------

/// Bit-packed buffer, MSB-first within each byte.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bitstream {
    bytes: Vec<u8>,
    bit_len: usize,
}

/// File magic for serialized bitstreams.
pub const BITSTREAM_MAGIC: &[u8; 8] = b"HBAC0001";

impl Bitstream {
    pub fn new() -> Self {
        Bitstream::default()
    }

    pub fn push_bit(&mut self, bit: bool) {
        let byte_idx = self.bit_len / 8;
        if byte_idx == self.bytes.len() {
            self.bytes.push(0);
        }
        if bit {
            self.bytes[byte_idx] |= 0x80 >> (self.bit_len % 8);
        }
        self.bit_len += 1;
    }

    /// Bit at `idx`; reads past the end yield zero (arithmetic-coder tail).
    pub fn bit(&self, idx: usize) -> bool {
        if idx >= self.bit_len {
            return false;
        }
        self.bytes[idx / 8] & (0x80 >> (idx % 8)) != 0
    }

    pub fn len_bits(&self) -> usize {
        self.bit_len
    }

    /// Container format: 8-byte magic, 8-byte big-endian symbol count,
    /// payload bits MSB-first zero-padded to a byte boundary.
    pub fn to_container(&self, symbol_count: u64) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.bytes.len());
        out.extend_from_slice(BITSTREAM_MAGIC);
        out.extend_from_slice(&symbol_count.to_be_bytes());
        out.extend_from_slice(&self.bytes);
        out
    }

    /// Parse a container; returns the payload and the symbol count.
    pub fn from_container(data: &[u8]) -> Result<(Bitstream, u64)> {
        if data.len() < 16 {
            return Err(Error::Codec("container shorter than its header".into()));
        }
        if &data[..8] != BITSTREAM_MAGIC {
            return Err(Error::Codec("bad magic".into()));
        }
        let count = u64::from_be_bytes(data[8..16].try_into().unwrap());
        let bytes = data[16..].to_vec();
        let bit_len = bytes.len() * 8;
        Ok((Bitstream { bytes, bit_len }, count))
    }
}

// ---------------------------------------------------------------------------
// Arithmetic coder
// ---------------------------------------------------------------------------

const HALF: u64 = 1 << 63;
const QUARTER: u64 = 1 << 62;
const THREE_QUARTERS: u64 = HALF + QUARTER;

struct Encoder {
    low: u64,
    high: u64,
    pending: u64,
    out: Bitstream,
}

impl Encoder {
    fn new() -> Self {
        Encoder {
            low: 0,
            high: u64::MAX,
            pending: 0,
            out: Bitstream::new(),
        }
    }

    fn emit(&mut self, bit: bool) {
        self.out.push_bit(bit);
        for _ in 0..self.pending {
            self.out.push_bit(!bit);
        }
        self.pending = 0;
    }

    fn encode(&mut self, model: &CdfModel, s: usize) {
        let (c_lo, c_hi) = model.range_of(s);
        let p = model.precision;
        let range = (self.high - self.low) as u128 + 1;
        // c_hi can equal the total, where low + scaled overflows u64 by one;
        // stay in u128 until after the -1.
        self.high = (self.low as u128 + ((range * c_hi as u128) >> p) - 1) as u64;
        self.low = (self.low as u128 + ((range * c_lo as u128) >> p)) as u64;
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

    fn finish(mut self) -> Bitstream {
        // Two disambiguation bits pin a value inside [low, high).
        self.pending += 1;
        let bit = self.low >= QUARTER;
        self.emit(bit);
        self.out
    }
}

struct Decoder<'a> {
    low: u64,
    high: u64,
    code: u64,
    pos: usize,
    bits: &'a Bitstream,
}

impl<'a> Decoder<'a> {
    fn new(bits: &'a Bitstream) -> Self {
        let mut code = 0u64;
        let mut pos = 0;
        for _ in 0..64 {
            code = (code << 1) | bits.bit(pos) as u64;
            pos += 1;
        }
        Decoder {
            low: 0,
            high: u64::MAX,
            code,
            pos,
            bits,
        }
    }

    fn next_bit(&mut self) -> u64 {
        let b = self.bits.bit(self.pos) as u64;
        self.pos += 1;
        b
    }

    fn decode(&mut self, model: &CdfModel) -> usize {
        let p = model.precision;
        let range = (self.high - self.low) as u128 + 1;
        let offset = (self.code - self.low) as u128;
        // Largest cumulative value consistent with the code position.
        let scaled = (((offset + 1) << p) - 1) / range;
        let s = model.symbol_for(scaled as u32);
        let (c_lo, c_hi) = model.range_of(s);
        self.high = (self.low as u128 + ((range * c_hi as u128) >> p) - 1) as u64;
        self.low = (self.low as u128 + ((range * c_lo as u128) >> p)) as u64;
        loop {
            if self.high < HALF {
                // nothing
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
            self.code = (self.code << 1) | self.next_bit();
        }
        s
    }
}

/// Encode a symbol sequence. `model_at(i)` indexes into `models` for
/// position `i`, which lets a per-position context (like the first-stage
/// symbol) select the table.
pub fn ac_encode(
    symbols: &[usize],
    models: &[CdfModel],
    model_at: impl Fn(usize) -> usize,
) -> Result<Bitstream> {
    if symbols.is_empty() {
        return Ok(Bitstream::new());
    }
    let mut enc = Encoder::new();
    for (i, &s) in symbols.iter().enumerate() {
        let mi = model_at(i);
        let model = models
            .get(mi)
            .ok_or_else(|| Error::Codec(format!("model index {mi} out of range")))?;
        if s >= model.k() {
            return Err(Error::Codec(format!(
                "symbol {s} out of range for K = {} at position {i}",
                model.k()
            )));
        }
        enc.encode(model, s);
    }
    Ok(enc.finish())
}

/// Decode `n` symbols with the same per-position model selection used at
/// encode time.
pub fn ac_decode(
    bits: &Bitstream,
    n: usize,
    models: &[CdfModel],
    model_at: impl Fn(usize) -> usize,
) -> Result<Vec<usize>> {
    if n == 0 {
        if bits.len_bits() != 0 {
            return Err(Error::Codec("nonempty stream for zero symbols".into()));
        }
        return Ok(Vec::new());
    }
    let mut dec = Decoder::new(bits);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mi = model_at(i);
        let model = models
            .get(mi)
            .ok_or_else(|| Error::Codec(format!("model index {mi} out of range")))?;
        out.push(dec.decode(model));
    }
    Ok(out)
}

/// Single-model convenience wrappers.
pub fn ac_encode_single(symbols: &[usize], model: &CdfModel) -> Result<Bitstream> {
    ac_encode(symbols, std::slice::from_ref(model), |_| 0)
}

pub fn ac_decode_single(bits: &Bitstream, n: usize, model: &CdfModel) -> Result<Vec<usize>> {
    ac_decode(bits, n, std::slice::from_ref(model), |_| 0)
}

// ---------------------------------------------------------------------------
// Operational rates of trained schemes
// ---------------------------------------------------------------------------

/// Default frequency precision for scheme coding.
pub const DEFAULT_PRECISION: u32 = 16;

/// Measured bits per symbol, by stage, on real bitstreams.
#[derive(Debug, Clone, PartialEq)]
pub struct OperationalRate {
    pub stage1_bits_per_symbol: f64,
    /// Zero for the joint scheme (single description).
    pub stage2_bits_per_symbol: f64,
    pub n_symbols: usize,
    /// Stage-stream lengths in bits (termination overhead included).
    pub stage1_total_bits: usize,
    pub stage2_total_bits: usize,
}

impl OperationalRate {
    pub fn total_bits_per_symbol(&self) -> f64 {
        self.stage1_bits_per_symbol + self.stage2_bits_per_symbol
    }
}

/// Encode `n` fresh hard codes with the trained priors as frequency tables,
/// verify losslessness end to end, and return the measured bits/symbol.
///
/// Supported for the joint scheme (one stream) and the marginal scheme (two
/// streams; the stage-2 table is selected by the stage-1 symbol, which the
/// decoder already has). The conditional scheme's second stage is by design
/// an ideal side-information code with no constructive counterpart here, so
/// it is refused; see [`sw_ideal_rate`].
pub fn operational_rate(
    model: &SchemeModel,
    correlation: &CorrelationModel,
    n: usize,
    rng: &mut RngState,
) -> Result<OperationalRate> {
    operational_rate_with_precision(model, correlation, n, rng, DEFAULT_PRECISION)
}

pub fn operational_rate_with_precision(
    model: &SchemeModel,
    correlation: &CorrelationModel,
    n: usize,
    rng: &mut RngState,
    precision: u32,
) -> Result<OperationalRate> {
    if n == 0 {
        return Err(Error::invalid("operational rate needs n >= 1"));
    }
    match model {
        SchemeModel::Joint(jm) => {
            let batch = sample_batch(correlation, n, rng)?;
            let vs = jm.encode_rows(&batch.x);
            let table = CdfModel::from_log_probs(&jm.prior_log_probs(), precision)?;
            let bits = ac_encode_single(&vs, &table)?;
            let decoded = ac_decode_single(&bits, n, &table)?;
            if decoded != vs {
                return Err(Error::Codec("joint stream failed round-trip".into()));
            }
            Ok(OperationalRate {
                stage1_bits_per_symbol: bits.len_bits() as f64 / n as f64,
                stage2_bits_per_symbol: 0.0,
                n_symbols: n,
                stage1_total_bits: bits.len_bits(),
                stage2_total_bits: 0,
            })
        }
        SchemeModel::Layered(lm) if lm.kind == SchemeKind::Marginal => {
            let batch = sample_batch(correlation, n, rng)?;
            let (ws, us) = lm.encode_rows(&batch.x);

            let w_table = CdfModel::from_log_probs(&lm.prior_w_log_probs(), precision)?;
            let w_bits = ac_encode_single(&ws, &w_table)?;
            let w_dec = ac_decode_single(&w_bits, n, &w_table)?;
            if w_dec != ws {
                return Err(Error::Codec("stage-1 stream failed round-trip".into()));
            }

            // One stage-2 table per first-stage symbol; the decoder selects
            // by the w it just decoded.
            let u_tables: Vec<CdfModel> = (0..lm.config.k_w)
                .map(|w| CdfModel::from_log_probs(&lm.prior_u_log_probs_given_w(w)?, precision))
                .collect::<Result<_>>()?;
            let u_bits = ac_encode(&us, &u_tables, |i| ws[i])?;
            let u_dec = ac_decode(&u_bits, n, &u_tables, |i| w_dec[i])?;
            if u_dec != us {
                return Err(Error::Codec("stage-2 stream failed round-trip".into()));
            }

            Ok(OperationalRate {
                stage1_bits_per_symbol: w_bits.len_bits() as f64 / n as f64,
                stage2_bits_per_symbol: u_bits.len_bits() as f64 / n as f64,
                n_symbols: n,
                stage1_total_bits: w_bits.len_bits(),
                stage2_total_bits: u_bits.len_bits(),
            })
        }
        SchemeModel::Layered(_) => Err(Error::Codec(
            "conditional scheme: stage 2 is an ideal side-information code and has no \
             operational encoder here; use sw_ideal_rate for its simulated rate"
                .into(),
        )),
    }
}

/// Measured stage-1 rate alone (valid for every scheme; the first-stage
/// prior is always a plain categorical).
pub fn stage1_operational_rate(
    model: &SchemeModel,
    correlation: &CorrelationModel,
    n: usize,
    rng: &mut RngState,
    precision: u32,
) -> Result<OperationalRate> {
    if n == 0 {
        return Err(Error::invalid("operational rate needs n >= 1"));
    }
    let batch = sample_batch(correlation, n, rng)?;
    let (symbols, log_probs) = match model {
        SchemeModel::Joint(jm) => (jm.encode_rows(&batch.x), jm.prior_log_probs()),
        SchemeModel::Layered(lm) => (lm.encode_rows(&batch.x).0, lm.prior_w_log_probs()),
    };
    let table = CdfModel::from_log_probs(&log_probs, precision)?;
    let bits = ac_encode_single(&symbols, &table)?;
    let decoded = ac_decode_single(&bits, n, &table)?;
    if decoded != symbols {
        return Err(Error::Codec("stage-1 stream failed round-trip".into()));
    }
    Ok(OperationalRate {
        stage1_bits_per_symbol: bits.len_bits() as f64 / n as f64,
        stage2_bits_per_symbol: 0.0,
        n_symbols: n,
        stage1_total_bits: bits.len_bits(),
        stage2_total_bits: 0,
    })
}

/// Simulated ideal side-information rate of a conditional model:
/// `mean -log2 q(u | w, y)` over `n` fresh samples. No bitstream exists;
/// this is rate accounting at the ideal limit.
pub fn sw_ideal_rate(
    model: &LayeredModel,
    correlation: &CorrelationModel,
    n: usize,
    rng: &mut RngState,
) -> Result<f64> {
    if model.kind != SchemeKind::Conditional {
        return Err(Error::invalid("sw_ideal_rate applies to the conditional scheme"));
    }
    if n == 0 {
        return Err(Error::invalid("sw_ideal_rate needs n >= 1"));
    }
    let ku = model.config.k_u;
    let mut sum = 0.0;
    let mut remaining = n;
    while remaining > 0 {
        let m = remaining.min(8192);
        remaining -= m;
        let batch = sample_batch(correlation, m, rng)?;
        let (ws, us) = model.encode_rows(&batch.x);
        let logq = model.prior_u_log_prob_rows(&ws, &batch.y);
        for i in 0..m {
            sum += -logq[i * ku + us[i]] / LN2;
        }
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_cdf_uniform() {
        let m = CdfModel::from_probs(&[0.25; 4], 16).unwrap();
        for s in 0..4 {
            let (lo, hi) = m.range_of(s);
            assert_eq!(hi - lo, 16384);
        }
        assert_eq!(m.total(), 65536);
    }

    #[test]
    fn build_cdf_floor_protection() {
        let m = CdfModel::from_probs(&[1.0 - 1e-12, 1e-12], 16).unwrap();
        let (lo0, hi0) = m.range_of(0);
        let (lo1, hi1) = m.range_of(1);
        assert_eq!(hi0 - lo0, 65535);
        assert_eq!(hi1 - lo1, 1);
    }

    #[test]
    fn build_cdf_quantization_error_bound() {
        let mut rng = RngState::from_seed(42);
        for _ in 0..50 {
            let probs = crate::bounds::random_simplex(16, &mut rng);
            let m = CdfModel::from_probs(&probs, 16).unwrap();
            for (s, &p) in probs.iter().enumerate() {
                let q = m.prob_of(s);
                assert!(
                    (q - p).abs() <= 2.0_f64.powi(1 - 16),
                    "symbol {s}: {q} vs {p}"
                );
            }
        }
    }

    #[test]
    fn build_cdf_rejects_bad_inputs() {
        assert!(CdfModel::from_probs(&[0.5, 0.6], 16).is_err());
        assert!(CdfModel::from_probs(&[1.0], 8).is_err());
        assert!(CdfModel::from_probs(&vec![1.0 / 5000.0; 5000], 12).is_err());
    }

    #[test]
    fn empty_sequence_roundtrips_empty() {
        let m = CdfModel::from_probs(&[0.5, 0.5], 16).unwrap();
        let bits = ac_encode_single(&[], &m).unwrap();
        assert_eq!(bits.len_bits(), 0);
        let out = ac_decode_single(&bits, 0, &m).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn uniform_256_hits_eight_bits() {
        let m = CdfModel::from_probs(&vec![1.0 / 256.0; 256], 16).unwrap();
        let mut rng = RngState::from_seed(7);
        let n = 100_000;
        let syms: Vec<usize> = (0..n).map(|_| rng.below(256)).collect();
        let bits = ac_encode_single(&syms, &m).unwrap();
        assert!(bits.len_bits() >= 8 * n, "{} < {}", bits.len_bits(), 8 * n);
        assert!(bits.len_bits() <= 8 * n + 64, "{} > {}", bits.len_bits(), 8 * n + 64);
        let dec = ac_decode_single(&bits, n, &m).unwrap();
        assert_eq!(dec, syms);
    }

    #[test]
    fn skewed_binary_near_entropy() {
        let m = CdfModel::from_probs(&[0.9, 0.1], 16).unwrap();
        let mut rng = RngState::from_seed(8);
        let n = 100_000;
        let syms: Vec<usize> = (0..n).map(|_| usize::from(rng.uniform() < 0.1)).collect();
        let bits = ac_encode_single(&syms, &m).unwrap();
        let ideal = 0.468_995_593_6_f64 * n as f64;
        let len = bits.len_bits() as f64;
        assert!((len - ideal).abs() < 0.01 * ideal, "{len} vs {ideal}");
        assert_eq!(ac_decode_single(&bits, n, &m).unwrap(), syms);
    }

    #[test]
    fn random_models_roundtrip() {
        let mut rng = RngState::from_seed(99);
        for trial in 0..200 {
            let k = 2 + rng.below(63);
            let probs = crate::bounds::random_simplex(k, &mut rng);
            let m = CdfModel::from_probs(&probs, 16).unwrap();
            let n = 1 + rng.below(2000);
            let syms: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
            let bits = ac_encode_single(&syms, &m).unwrap();
            let dec = ac_decode_single(&bits, n, &m).unwrap();
            assert_eq!(dec, syms, "trial {trial} (k = {k}, n = {n})");
        }
    }

    #[test]
    fn measured_never_beats_quantized_cross_entropy() {
        let mut rng = RngState::from_seed(123);
        for _ in 0..20 {
            let k = 2 + rng.below(16);
            let probs = crate::bounds::random_simplex(k, &mut rng);
            let m = CdfModel::from_probs(&probs, 14).unwrap();
            let n = 500 + rng.below(1500);
            let syms: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
            let bits = ac_encode_single(&syms, &m).unwrap();
            let ce: f64 = syms.iter().map(|&s| m.bits_of(s)).sum();
            assert!(
                bits.len_bits() as f64 >= ce - 1e-6,
                "{} < {}",
                bits.len_bits(),
                ce
            );
            assert!((bits.len_bits() as f64) <= ce + 64.0, "{} > {} + 64", bits.len_bits(), ce);
        }
    }

    #[test]
    fn per_position_models_roundtrip() {
        let mut rng = RngState::from_seed(321);
        let models: Vec<CdfModel> = (0..3)
            .map(|_| CdfModel::from_probs(&crate::bounds::random_simplex(5, &mut rng), 16).unwrap())
            .collect();
        let ctx: Vec<usize> = (0..5000).map(|_| rng.below(3)).collect();
        let syms: Vec<usize> = (0..5000).map(|_| rng.below(5)).collect();
        let bits = ac_encode(&syms, &models, |i| ctx[i]).unwrap();
        let dec = ac_decode(&bits, 5000, &models, |i| ctx[i]).unwrap();
        assert_eq!(dec, syms);
    }

    #[test]
    fn container_roundtrip_and_corruption() {
        let m = CdfModel::from_probs(&[0.7, 0.2, 0.1], 16).unwrap();
        let syms = vec![0, 1, 2, 0, 0, 1];
        let bits = ac_encode_single(&syms, &m).unwrap();
        let container = bits.to_container(syms.len() as u64);
        let (parsed, count) = Bitstream::from_container(&container).unwrap();
        assert_eq!(count, 6);
        let dec = ac_decode_single(&parsed, count as usize, &m).unwrap();
        assert_eq!(dec, syms);

        let mut bad = container.clone();
        bad[0] ^= 0xFF;
        assert!(Bitstream::from_container(&bad).is_err());
        assert!(Bitstream::from_container(&container[..10]).is_err());
    }
}
