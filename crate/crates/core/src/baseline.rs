//! Conventional chain used for comparison: Haar compression, Hamming(7,4)
//! forward error correction and AES-128 in counter mode.

use std::collections::HashSet;

use aes::cipher::{KeyIvInit, StreamCipher};

use crate::codec::{dequantize, quantize16};
use crate::error::{Error, Result};

type Aes128Ctr = ctr::Ctr128BE<aes::Aes128>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HaarPlan {
    pub levels: usize,
    pub kept_coeffs: usize,
    pub coeff_bits: usize,
}

impl Default for HaarPlan {
    fn default() -> Self {
        Self { levels: 2, kept_coeffs: 96, coeff_bits: 16 }
    }
}

impl HaarPlan {
    pub fn compressed_bits(&self) -> usize {
        self.kept_coeffs * self.coeff_bits
    }
}

/// Orthonormal Haar analysis. Output layout: coarsest averages, then detail
/// bands from coarsest to finest.
pub fn haar_forward(x: &[f64], levels: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if !n.is_power_of_two() || (levels > 0 && n >> levels == 0) {
        return Err(Error::Param(format!("length {n} cannot take {levels} Haar levels")));
    }
    let mut c = x.to_vec();
    let mut len = n;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..levels {
        let half = len / 2;
        let mut tmp = vec![0.0; len];
        for i in 0..half {
            tmp[i] = (c[2 * i] + c[2 * i + 1]) * r;
            tmp[half + i] = (c[2 * i] - c[2 * i + 1]) * r;
        }
        c[..len].copy_from_slice(&tmp);
        len = half;
    }
    Ok(c)
}

pub fn haar_inverse(c: &[f64], levels: usize) -> Result<Vec<f64>> {
    let n = c.len();
    if !n.is_power_of_two() || (levels > 0 && n >> levels == 0) {
        return Err(Error::Param(format!("length {n} cannot take {levels} Haar levels")));
    }
    let mut x = c.to_vec();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut len = n >> levels;
    for _ in 0..levels {
        let mut tmp = vec![0.0; 2 * len];
        for i in 0..len {
            tmp[2 * i] = (x[i] + x[len + i]) * r;
            tmp[2 * i + 1] = (x[i] - x[len + i]) * r;
        }
        x[..2 * len].copy_from_slice(&tmp);
        len *= 2;
    }
    Ok(x)
}

/// Positions (in the analysis layout) of the retained coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideInfo {
    pub kept: Vec<usize>,
    pub n: usize,
}

/// Quantized retained coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarCoeffs {
    pub q: Vec<i16>,
    pub scale: f64,
}

/// Keep the whole average band plus the largest details.
pub fn haar_select(coeffs: &[f64], plan: &HaarPlan) -> Result<SideInfo> {
    let n = coeffs.len();
    let n_avg = n >> plan.levels;
    if plan.kept_coeffs > n {
        return Err(Error::Param(format!("kept_coeffs {} exceeds N={n}", plan.kept_coeffs)));
    }
    if plan.kept_coeffs < n_avg {
        return Err(Error::Param(format!("kept_coeffs {} below the {n_avg} averages", plan.kept_coeffs)));
    }
    let mut details: Vec<usize> = (n_avg..n).collect();
    details.sort_by(|&a, &b| coeffs[b].abs().total_cmp(&coeffs[a].abs()).then(a.cmp(&b)));
    let mut kept: Vec<usize> = (0..n_avg).chain(details.into_iter().take(plan.kept_coeffs - n_avg)).collect();
    kept.sort_unstable();
    Ok(SideInfo { kept, n })
}

pub fn haar_compress(x: &[f64], plan: &HaarPlan) -> Result<(HaarCoeffs, SideInfo)> {
    if plan.coeff_bits != 16 {
        return Err(Error::Param("only 16-bit coefficients are supported".into()));
    }
    let c = haar_forward(x, plan.levels)?;
    let side = haar_select(&c, plan)?;
    let vals: Vec<f64> = side.kept.iter().map(|&i| c[i]).collect();
    let (q, scale) = quantize16(&vals)?;
    Ok((HaarCoeffs { q, scale }, side))
}

pub fn haar_decompress(coeffs: &HaarCoeffs, side: &SideInfo, plan: &HaarPlan) -> Result<Vec<f64>> {
    if coeffs.q.len() != side.kept.len() || side.kept.iter().any(|&i| i >= side.n) {
        return Err(Error::Format("side info does not match the coefficients".into()));
    }
    if side.kept.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Format("side info positions must be strictly increasing".into()));
    }
    let mut c = vec![0.0; side.n];
    for (&i, v) in side.kept.iter().zip(dequantize(&coeffs.q, coeffs.scale)) {
        c[i] = v;
    }
    haar_inverse(&c, plan.levels)
}

/// Big-endian bit expansion of 16-bit words.
pub fn words_to_bits(q: &[i16]) -> Vec<u8> {
    q.iter().flat_map(|&w| (0..16).rev().map(move |k| ((w as u16 >> k) & 1) as u8)).collect()
}

pub fn bits_to_words(bits: &[u8]) -> Vec<i16> {
    bits.chunks(16).map(|c| c.iter().fold(0u16, |acc, &b| (acc << 1) | (b & 1) as u16) as i16).collect()
}

/// MSB-first packing; the tail byte is zero-padded.
pub fn pack_bits(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8).map(|c| c.iter().enumerate().fold(0u8, |acc, (k, &b)| acc | ((b & 1) << (7 - k)))).collect()
}

pub fn unpack_bits(bytes: &[u8], nbits: usize) -> Vec<u8> {
    bytes.iter().flat_map(|&b| (0..8).rev().map(move |k| (b >> k) & 1)).take(nbits).collect()
}

// Parity bits of a nibble d1..d4: p1 = d1+d2+d4, p2 = d1+d3+d4, p3 = d2+d3+d4.
const PARITY: [[u8; 3]; 4] = [[1, 1, 0], [1, 0, 1], [0, 1, 1], [1, 1, 1]];

/// Systematic Hamming(7,4): each nibble becomes `d1 d2 d3 d4 p1 p2 p3`.
/// Input is zero-padded to a multiple of 4; the pad length is returned.
pub fn hamming74_encode(bits: &[u8]) -> (Vec<u8>, usize) {
    let pad = (4 - bits.len() % 4) % 4;
    let mut out = Vec::with_capacity((bits.len() + pad) / 4 * 7);
    let mut padded = bits.to_vec();
    padded.resize(bits.len() + pad, 0);
    for d in padded.chunks(4) {
        out.extend_from_slice(d);
        for j in 0..3 {
            out.push((0..4).fold(0, |acc, i| acc ^ (d[i] & PARITY[i][j])));
        }
    }
    (out, pad)
}

/// Syndrome decoding; returns data bits and the number of corrected words.
pub fn hamming74_decode(bits: &[u8]) -> Result<(Vec<u8>, usize)> {
    if bits.len() % 7 != 0 {
        return Err(Error::Format(format!("{} bits is not a whole number of codewords", bits.len())));
    }
    // Column of the parity-check matrix for each codeword position.
    let mut cols = [[0u8; 3]; 7];
    for i in 0..4 {
        cols[i] = PARITY[i];
    }
    for j in 0..3 {
        cols[4 + j][j] = 1;
    }
    let mut out = Vec::with_capacity(bits.len() / 7 * 4);
    let mut corrected = 0;
    for cw in bits.chunks(7) {
        let mut w = [0u8; 7];
        w.copy_from_slice(cw);
        let mut syn = [0u8; 3];
        for (i, &b) in w.iter().enumerate() {
            for j in 0..3 {
                syn[j] ^= b & cols[i][j];
            }
        }
        if syn != [0, 0, 0] {
            if let Some(pos) = cols.iter().position(|c| *c == syn) {
                w[pos] ^= 1;
                corrected += 1;
            }
        }
        out.extend_from_slice(&w[..4]);
    }
    Ok((out, corrected))
}

/// AES-128-CTR over a byte stream; the counter block is `nonce || 0`
/// (big-endian), incremented per 16-byte block.
pub fn aes_ctr_apply_bytes(data: &[u8], key: &[u8; 16], nonce: u64) -> Vec<u8> {
    let mut iv = [0u8; 16];
    iv[..8].copy_from_slice(&nonce.to_be_bytes());
    aes_ctr_with_iv(data, key, &iv)
}

fn aes_ctr_with_iv(data: &[u8], key: &[u8; 16], iv: &[u8; 16]) -> Vec<u8> {
    let mut buf = data.to_vec();
    let mut cipher = Aes128Ctr::new(key.into(), iv.into());
    cipher.apply_keystream(&mut buf);
    buf
}

/// Bit-level wrapper: bits are packed MSB first and the output is cut back
/// to the input length.
pub fn aes_ctr_apply(bits: &[u8], key: &[u8; 16], nonce: u64) -> Vec<u8> {
    let bytes = aes_ctr_apply_bytes(&pack_bits(bits), key, nonce);
    unpack_bits(&bytes, bits.len())
}

/// Rejects a nonce seen before under the same key.
#[derive(Debug, Default, Clone)]
pub struct NonceRegistry {
    seen: HashSet<u64>,
}

impl NonceRegistry {
    pub fn register(&mut self, nonce: u64) -> Result<()> {
        if self.seen.insert(nonce) {
            Ok(())
        } else {
            Err(Error::NonceReuse)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Compressed,
    FecEncoded,
    Encrypted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedBitstream {
    pub bits: Vec<u8>,
    pub stage: Stage,
}

/// Everything the receiver needs besides the ciphertext bits.
#[derive(Debug, Clone, PartialEq)]
pub struct SoaSideChannel {
    pub scale: f64,
    pub side: SideInfo,
    pub pad: usize,
}

/// Haar, then Hamming(7,4), then AES-CTR.
pub fn soa_encode(x: &[f64], plan: &HaarPlan, key: &[u8; 16], nonce: u64) -> Result<(CodedBitstream, SoaSideChannel)> {
    let (coeffs, side) = haar_compress(x, plan)?;
    let compressed = words_to_bits(&coeffs.q);
    let (fec, pad) = hamming74_encode(&compressed);
    let bits = aes_ctr_apply(&fec, key, nonce);
    Ok((CodedBitstream { bits, stage: Stage::Encrypted }, SoaSideChannel { scale: coeffs.scale, side, pad }))
}

pub fn soa_decode(bits: &[u8], aux: &SoaSideChannel, plan: &HaarPlan, key: &[u8; 16], nonce: u64) -> Result<Vec<f64>> {
    let fec = aes_ctr_apply(bits, key, nonce);
    let (mut data, _) = hamming74_decode(&fec)?;
    data.truncate(data.len().saturating_sub(aux.pad));
    let q = bits_to_words(&data);
    haar_decompress(&HaarCoeffs { q, scale: aux.scale }, &aux.side, plan)
}

/// Stateful sender that refuses to reuse a nonce.
#[derive(Debug, Clone)]
pub struct SoaEncoder {
    pub plan: HaarPlan,
    key: [u8; 16],
    nonces: NonceRegistry,
}

impl SoaEncoder {
    pub fn new(plan: HaarPlan, key: [u8; 16]) -> Self {
        Self { plan, key, nonces: NonceRegistry::default() }
    }

    pub fn encode(&mut self, x: &[f64], nonce: u64) -> Result<(CodedBitstream, SoaSideChannel)> {
        self.nonces.register(nonce)?;
        soa_encode(x, &self.plan, &self.key, nonce)
    }
}
