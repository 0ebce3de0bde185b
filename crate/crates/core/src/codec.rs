//! ENCRUST and L-ENCRUST encode/decode.
//!
//! ENCRUST measures `y = A_i B x` with a fresh binary `A_i` per block whose
//! rows are seeded by keyed LFG words. L-ENCRUST keeps `A` and `B` fixed
//! and hides each block behind a keyed mask `r_i`: `y = A B x + c r_i`,
//! decoded through the augmented pair `A_u = [r_i | A]`, `B_u`.
//!
//! Decoding projects out the signal subspace, estimates the sparse channel
//! error by basis pursuit, subtracts it and reconstructs the DCT
//! coefficients by a second basis pursuit.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::l1solver::{dct_basis, BasisPursuit, Mode, SolverConfig};
use crate::matgen::{
    augment_compression_matrix, augment_error_matrix, build_binary_matrix, build_sparse_matrix, is_full_rank, numerical_rank,
    MatrixKind, SensingMatrix, SparseConfig,
};
use crate::prng::{Lfg, FP_DEFAULT, LFG_KEY_BYTES};

/// Largest ADC code of an 11-bit sample; bounds `|A B x|` for the mask envelope.
pub const ADC_FULL_SCALE: f64 = 2047.0;

/// Fixed seed of the L-ENCRUST error-recovery matrix.
pub const A_IV_DEFAULT: u16 = 0xFFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Encrust,
    LEncrust,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Encrust => "encrust",
            Scheme::LEncrust => "l_encrust",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "encrust" => Some(Scheme::Encrust),
            "l_encrust" | "l-encrust" | "lencrust" => Some(Scheme::LEncrust),
            _ => None,
        }
    }
}

/// How the L-ENCRUST mask words are scaled to reals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskScale {
    /// `(max row l1 of A B) * ADC_FULL_SCALE / 32768`: the centred word
    /// spans the worst-case range of `A B x`.
    Envelope,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecParams {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub d: usize,
    pub c: f64,
    pub alpha2: f64,
    pub scheme: Scheme,
    pub fp: u16,
    pub a_iv: u16,
    pub mask_scale: MaskScale,
}

impl CodecParams {
    pub fn new(scheme: Scheme, n: usize, m: usize, l: usize, d: usize) -> Self {
        Self {
            n,
            m,
            l,
            d,
            c: 1.0,
            alpha2: 6.0,
            scheme,
            fp: FP_DEFAULT,
            a_iv: A_IV_DEFAULT,
            mask_scale: MaskScale::Envelope,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.d == 0 {
            return Err(Error::Param("N, M and d must be positive".into()));
        }
        if self.m >= self.n {
            return Err(Error::Param(format!("M={} must be below N={}", self.m, self.n)));
        }
        if self.m >= self.l {
            return Err(Error::Param(format!("M={} must be below L={}", self.m, self.l)));
        }
        if self.l > 65535 {
            return Err(Error::Param("L does not fit the block header".into()));
        }
        if !(4.0..=6.0).contains(&self.alpha2) {
            return Err(Error::Param(format!("alpha2={} outside [4, 6]", self.alpha2)));
        }
        if !(self.c.is_finite() && self.c != 0.0) {
            return Err(Error::Param("c must be finite and nonzero".into()));
        }
        Ok(())
    }
}

/// `floor((L - M) / alpha2)`, zero without redundancy.
pub fn error_capacity(l: usize, m: usize, alpha2: f64) -> usize {
    if l <= m {
        return 0;
    }
    ((l - m) as f64 / alpha2).floor() as usize
}

/// Secret material shared by encoder and decoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeySchedule {
    pub lfg_key: [u8; LFG_KEY_BYTES],
    pub b_iv: u16,
    pub block_counter: u64,
}

impl KeySchedule {
    pub fn new(lfg_key: [u8; LFG_KEY_BYTES], b_iv: u16) -> Result<Self> {
        Lfg::from_key(&lfg_key)?;
        if b_iv == 0 {
            return Err(Error::ZeroIv);
        }
        Ok(Self { lfg_key, b_iv, block_counter: 0 })
    }
}

/// Per-block secret randomness.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockMaterial {
    /// One nonzero seed per row of `A_i`.
    RowSeeds(Vec<u16>),
    /// Mask `r_i` in real units.
    Mask(Vec<f64>),
}

/// Replays the keyed word stream block by block.
///
/// Blocks consume the stream in order; asking for an earlier block restarts
/// from the key.
#[derive(Debug, Clone)]
pub struct MaterialSource {
    key: [u8; LFG_KEY_BYTES],
    lfg: Lfg,
    next_block: u64,
}

impl MaterialSource {
    pub fn new(key: &[u8; LFG_KEY_BYTES]) -> Result<Self> {
        Ok(Self { key: *key, lfg: Lfg::from_key(key)?, next_block: 0 })
    }

    fn draw(lfg: &mut Lfg, scheme: Scheme, l: usize) -> Vec<u16> {
        match scheme {
            Scheme::Encrust => {
                let mut out = Vec::with_capacity(l);
                while out.len() < l {
                    let w = lfg.next_u16();
                    if w != 0 {
                        out.push(w);
                    }
                }
                out
            }
            Scheme::LEncrust => (0..l).map(|_| lfg.next_u16()).collect(),
        }
    }

    /// Raw words for `block_id`.
    pub fn words(&mut self, block_id: u64, scheme: Scheme, l: usize) -> Vec<u16> {
        if block_id < self.next_block {
            self.lfg = Lfg::from_key(&self.key).expect("key validated at construction");
            self.next_block = 0;
        }
        while self.next_block < block_id {
            Self::draw(&mut self.lfg, scheme, l);
            self.next_block += 1;
        }
        self.next_block += 1;
        Self::draw(&mut self.lfg, scheme, l)
    }
}

/// Quantized measurements of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBlock {
    pub q: Vec<i16>,
    pub scale: f64,
    pub block_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedBlock {
    pub x_hat: Vec<f64>,
    pub e_hat: Vec<f64>,
    pub error_support_size: usize,
    pub prd_vs_reference: Option<f64>,
    /// Recovered augmentation constant (L-ENCRUST only).
    pub c_hat: Option<f64>,
    pub converged: bool,
}

/// `scale = max|y| / 32767` (1 for an all-zero block), `q = round(y / scale)`.
pub fn quantize16(y: &[f64]) -> Result<(Vec<i16>, f64)> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let amax = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let scale = if amax == 0.0 { 1.0 } else { amax / 32767.0 };
    let q = y.iter().map(|v| (v / scale).round().clamp(-32768.0, 32767.0) as i16).collect();
    Ok((q, scale))
}

pub fn dequantize(q: &[i16], scale: f64) -> Vec<f64> {
    q.iter().map(|&v| v as f64 * scale).collect()
}

/// `I - A (A^T A)^-1 A^T`, built from a thin QR factor of `A`.
pub fn projection_matrix(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !is_full_rank(a) {
        return Err(Error::RankDeficient);
    }
    let q = a.clone().qr().q();
    Ok(DMatrix::identity(a.nrows(), a.nrows()) - &q * q.transpose())
}

/// Error-estimation variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorEstimation {
    /// Skip the stage.
    Off,
    Exact,
    /// Residual ball of radius `sqrt(L) * scale / 2` around `P y_rx`.
    Denoised,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub solver: SolverConfig,
    pub estimation: ErrorEstimation,
    /// Entries of `e_hat` above this fraction of `max|y_rx|` count towards
    /// the reported support size.
    pub support_threshold: f64,
    /// Reweighted l1 passes after the first error estimate.
    pub reweight_rounds: usize,
    /// Weight floor in quantizer steps (or in `support_threshold * max|y|`
    /// units when no scale is known).
    pub reweight_floor: f64,
    /// Re-fit `e_hat` by least squares on its detected support.
    pub debias: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            estimation: ErrorEstimation::Denoised,
            support_threshold: 1e-3,
            reweight_rounds: 1,
            reweight_floor: 100.0,
            debias: true,
        }
    }
}

pub fn estimate_error(p: &DMatrix<f64>, y_rx: &DVector<f64>, mode: Mode, cfg: &SolverConfig) -> Result<(DVector<f64>, bool)> {
    let b = p * y_rx;
    let mut bp = BasisPursuit::new(p.clone())?;
    let r = bp.solve(&b, mode, cfg)?;
    Ok((r.solution, r.converged))
}

/// One reweighted pass: `min sum |e_i| / w_i` with `w_i = |e_hat_i| + floor`,
/// posed on an orthonormal basis of the range of `P`.
pub fn reweight_error(
    p: &DMatrix<f64>,
    y_rx: &DVector<f64>,
    e_hat: &DVector<f64>,
    floor: f64,
    mode: Mode,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, bool)> {
    let eig = p.clone().symmetric_eigen();
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    if keep.is_empty() {
        return Ok((DVector::zeros(e_hat.len()), true));
    }
    let u = eig.eigenvectors.select_columns(&keep);
    let w: Vec<f64> = e_hat.iter().map(|v| v.abs() + floor).collect();
    let c = DMatrix::from_fn(u.ncols(), u.nrows(), |r, k| u[(k, r)] * w[k]);
    let rhs = u.tr_mul(y_rx);
    let r = BasisPursuit::new(c)?.solve(&rhs, mode, cfg)?;
    Ok((DVector::from_fn(e_hat.len(), |i, _| r.solution[i] * w[i]), r.converged))
}

/// Least-squares refit of `e` on the entries of `e_hat` above `tau`, keeping
/// at most `rank(P) - 1` of the largest. Removes the l1 shrinkage bias.
pub fn debias_error(p: &DMatrix<f64>, y_rx: &DVector<f64>, e_hat: &DVector<f64>, tau: f64) -> DVector<f64> {
    let rank = numerical_rank(p);
    let mut support: Vec<usize> = (0..e_hat.len()).filter(|&i| e_hat[i].abs() > tau).collect();
    if support.is_empty() || rank < 2 {
        return e_hat.clone();
    }
    support.sort_by(|&a, &b| e_hat[b].abs().total_cmp(&e_hat[a].abs()));
    support.truncate(rank - 1);
    let ps = DMatrix::from_fn(p.nrows(), support.len(), |r, c| p[(r, support[c])]);
    let rhs = p * y_rx;
    let Ok(fit) = ps.svd(true, true).solve(&rhs, 1e-10) else {
        return e_hat.clone();
    };
    let mut e = DVector::zeros(e_hat.len());
    for (k, &i) in support.iter().enumerate() {
        e[i] = fit[k];
    }
    e
}

pub fn correct_measurements(y_rx: &DVector<f64>, e_hat: &DVector<f64>) -> DVector<f64> {
    y_rx - e_hat
}

/// `min |theta|_1 s.t. A^T y_hat = A^T A B Psi theta`; returns `Psi theta`.
pub fn reconstruct_signal(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    y_hat: &DVector<f64>,
    psi: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, bool)> {
    if a.nrows() != y_hat.len() || a.ncols() != b.nrows() || b.ncols() != psi.nrows() {
        return Err(Error::Shape("inconsistent reconstruction operands".into()));
    }
    let c = a.transpose() * a * b * psi;
    let rhs = a.tr_mul(y_hat);
    let mut bp = BasisPursuit::new(c)?;
    let r = bp.solve(&rhs, Mode::Exact, cfg)?;
    Ok((psi * r.solution, r.converged))
}

/// Matrices shared by every block under one parameter set.
#[derive(Debug, Clone)]
pub struct Codec {
    params: CodecParams,
    b: SensingMatrix,
    a: Option<SensingMatrix>,
    psi: DMatrix<f64>,
    mask_scale: f64,
}

impl Codec {
    pub fn new(params: CodecParams, b_iv: u16) -> Result<Self> {
        params.validate()?;
        let b = build_sparse_matrix(&SparseConfig { iv: b_iv, fp: params.fp, ..SparseConfig::with_d(params.d) }, params.m, params.n)?;
        let (a, mask_scale) = match params.scheme {
            Scheme::Encrust => (None, 0.0),
            Scheme::LEncrust => {
                let a = build_sparse_matrix(
                    &SparseConfig { iv: params.a_iv, fp: params.fp, ..SparseConfig::with_d(params.d) },
                    params.l,
                    params.m,
                )?;
                if !is_full_rank(&a.data) {
                    return Err(Error::RankDeficient);
                }
                let scale = match params.mask_scale {
                    MaskScale::Fixed(s) => s,
                    MaskScale::Envelope => {
                        let h = &a.data * &b.data;
                        let row_l1 = h.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
                        row_l1 * ADC_FULL_SCALE / 32768.0
                    }
                };
                (Some(a), scale)
            }
        };
        Ok(Self { params, b, a, psi: dct_basis(params.n), mask_scale })
    }

    pub fn params(&self) -> &CodecParams {
        &self.params
    }

    pub fn b(&self) -> &SensingMatrix {
        &self.b
    }

    /// Fixed error-recovery matrix (L-ENCRUST only).
    pub fn a(&self) -> Option<&SensingMatrix> {
        self.a.as_ref()
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn mask_scale(&self) -> f64 {
        self.mask_scale
    }

    pub fn material_from_words(&self, words: &[u16]) -> BlockMaterial {
        match self.params.scheme {
            Scheme::Encrust => BlockMaterial::RowSeeds(words.to_vec()),
            Scheme::LEncrust => {
                BlockMaterial::Mask(words.iter().map(|&w| (w as f64 - 32768.0) * self.mask_scale).collect())
            }
        }
    }

    pub fn material(&self, src: &mut MaterialSource, block_id: u64) -> BlockMaterial {
        let w = src.words(block_id, self.params.scheme, self.params.l);
        self.material_from_words(&w)
    }

    /// Effective error-recovery and compression matrices for a block.
    pub fn effective(&self, material: &BlockMaterial) -> Result<(SensingMatrix, SensingMatrix)> {
        match (self.params.scheme, material) {
            (Scheme::Encrust, BlockMaterial::RowSeeds(ivs)) => {
                if ivs.len() != self.params.l {
                    return Err(Error::Shape(format!("{} row seeds for L={}", ivs.len(), self.params.l)));
                }
                Ok((build_binary_matrix(ivs, self.params.fp, self.params.m)?, self.b.clone()))
            }
            (Scheme::LEncrust, BlockMaterial::Mask(r)) => {
                let a = self.a.as_ref().expect("L-ENCRUST codec holds A");
                Ok((augment_error_matrix(a, r)?, augment_compression_matrix(&self.b)))
            }
            _ => Err(Error::Param("block material does not match the scheme".into())),
        }
    }

    /// Unquantized measurements.
    pub fn measure(&self, x: &[f64], material: &BlockMaterial) -> Result<Vec<f64>> {
        if x.len() != self.params.n {
            return Err(Error::Shape(format!("block of {} samples, N={}", x.len(), self.params.n)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let xv = DVector::from_column_slice(x);
        let bx = &self.b.data * xv;
        let y = match (self.params.scheme, material) {
            (Scheme::Encrust, BlockMaterial::RowSeeds(_)) => {
                let (a, _) = self.effective(material)?;
                &a.data * bx
            }
            (Scheme::LEncrust, BlockMaterial::Mask(r)) => {
                let a = self.a.as_ref().expect("L-ENCRUST codec holds A");
                if r.len() != self.params.l {
                    return Err(Error::Shape(format!("mask of {} for L={}", r.len(), self.params.l)));
                }
                &a.data * bx + DVector::from_column_slice(r) * self.params.c
            }
            _ => return Err(Error::Param("block material does not match the scheme".into())),
        };
        Ok(y.as_slice().to_vec())
    }

    /// Encode the next block under `keys` and advance its counter.
    pub fn encode(&self, x: &[f64], keys: &mut KeySchedule, src: &mut MaterialSource) -> Result<MeasurementBlock> {
        let block_id = u32::try_from(keys.block_counter).map_err(|_| Error::Param("block counter overflow".into()))?;
        let material = self.material(src, keys.block_counter);
        let y = self.measure(x, &material)?;
        let (q, scale) = quantize16(&y)?;
        keys.block_counter += 1;
        Ok(MeasurementBlock { q, scale, block_id })
    }

    /// Decode received measurements with the block's material.
    pub fn decode_with(&self, y_rx: &[f64], scale: Option<f64>, material: &BlockMaterial, cfg: &DecodeConfig) -> Result<DecodedBlock> {
        let l = self.params.l;
        if y_rx.len() != l {
            return Err(Error::Shape(format!("{} measurements, L={l}", y_rx.len())));
        }
        let (a_eff, b_eff) = self.effective(material)?;
        let y = DVector::from_column_slice(y_rx);
        let mut converged = true;
        let e_hat = match cfg.estimation {
            ErrorEstimation::Off => DVector::zeros(l),
            est => {
                let p = projection_matrix(&a_eff.data)?;
                let mode = match (est, scale) {
                    (ErrorEstimation::Denoised, Some(s)) => Mode::Denoised { epsilon: (l as f64).sqrt() * s / 2.0 },
                    _ => Mode::Exact,
                };
                let (mut e, ok) = estimate_error(&p, &y, mode, &cfg.solver)?;
                converged &= ok;
                let unit = scale.unwrap_or(cfg.support_threshold * y.amax());
                for _ in 0..cfg.reweight_rounds {
                    let (next, ok) = reweight_error(&p, &y, &e, cfg.reweight_floor * unit, mode, &cfg.solver)?;
                    converged &= ok;
                    e = next;
                }
                if cfg.debias {
                    let tau = match scale {
                        Some(s) => 2.0 * s,
                        None => cfg.support_threshold * y.amax(),
                    };
                    debias_error(&p, &y, &e, tau)
                } else {
                    e
                }
            }
        };
        let y_hat = correct_measurements(&y, &e_hat);
        let ymax = y.amax();
        let error_support_size = e_hat.iter().filter(|v| v.abs() > cfg.support_threshold * ymax).count();
        let (x_eff, ok) = match self.params.scheme {
            Scheme::Encrust => reconstruct_signal(&a_eff.data, &b_eff.data, &y_hat, &self.psi, &cfg.solver)?,
            Scheme::LEncrust => {
                let psi_u = augment_compression_matrix(&SensingMatrix::new(MatrixKind::Dense, self.psi.clone()));
                reconstruct_signal(&a_eff.data, &b_eff.data, &y_hat, &psi_u.data, &cfg.solver)?
            }
        };
        converged &= ok;
        let (x_hat, c_hat) = match self.params.scheme {
            Scheme::Encrust => (x_eff.as_slice().to_vec(), None),
            Scheme::LEncrust => (x_eff.as_slice()[1..].to_vec(), Some(x_eff[0])),
        };
        Ok(DecodedBlock {
            x_hat,
            e_hat: e_hat.as_slice().to_vec(),
            error_support_size,
            prd_vs_reference: None,
            c_hat,
            converged,
        })
    }

    /// Decode a received block, regenerating its material from the key.
    pub fn decode(&self, block: &MeasurementBlock, src: &mut MaterialSource, cfg: &DecodeConfig) -> Result<DecodedBlock> {
        let material = self.material(src, block.block_id as u64);
        let y = dequantize(&block.q, block.scale);
        self.decode_with(&y, Some(block.scale), &material, cfg)
    }
}

/// Magic prefix of a measurement stream.
pub const WIRE_MAGIC: [u8; 4] = *b"ENC\x01";

/// Parameters carried at the head of a measurement stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireHeader {
    pub scheme: Scheme,
    pub n: u16,
    pub m: u16,
    pub l: u16,
    pub d: u16,
    pub b_iv: u16,
}

/// Stream layout, big-endian: magic, scheme (u8), N, M, L, d, b_iv (u16
/// each), block count (u32); then per block: block_id (u32), scale (f64),
/// L (u16), L samples (i16).
pub fn write_wire(header: &WireHeader, blocks: &[MeasurementBlock]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(19 + blocks.len() * (14 + 2 * header.l as usize));
    out.extend_from_slice(&WIRE_MAGIC);
    out.push(match header.scheme {
        Scheme::Encrust => 0,
        Scheme::LEncrust => 1,
    });
    for v in [header.n, header.m, header.l, header.d, header.b_iv] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&(blocks.len() as u32).to_be_bytes());
    for b in blocks {
        if b.q.len() != header.l as usize {
            return Err(Error::Shape(format!("block {} has {} samples, L={}", b.block_id, b.q.len(), header.l)));
        }
        out.extend_from_slice(&b.block_id.to_be_bytes());
        out.extend_from_slice(&b.scale.to_be_bytes());
        out.extend_from_slice(&header.l.to_be_bytes());
        for v in &b.q {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const K: usize>(&mut self) -> Result<[u8; K]> {
        let end = self.pos + K;
        let s = self.buf.get(self.pos..end).ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(s.try_into().expect("slice length checked"))
    }

    fn u16(&mut self) -> Result<u16> {
        self.take::<2>().map(u16::from_be_bytes)
    }
}

pub fn read_wire(bytes: &[u8]) -> Result<(WireHeader, Vec<MeasurementBlock>)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take::<4>()? != WIRE_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let scheme = match r.take::<1>()?[0] {
        0 => Scheme::Encrust,
        1 => Scheme::LEncrust,
        s => return Err(Error::Format(format!("unknown scheme tag {s}"))),
    };
    let header = WireHeader { scheme, n: r.u16()?, m: r.u16()?, l: r.u16()?, d: r.u16()?, b_iv: r.u16()? };
    let count = u32::from_be_bytes(r.take::<4>()?);
    let mut blocks = Vec::new();
    for _ in 0..count {
        let block_id = u32::from_be_bytes(r.take::<4>()?);
        let scale = f64::from_be_bytes(r.take::<8>()?);
        if r.u16()? != header.l {
            return Err(Error::Format(format!("block {block_id} length disagrees with the stream header")));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Format(format!("block {block_id} has scale {scale}")));
        }
        let q = (0..header.l).map(|_| r.take::<2>().map(i16::from_be_bytes)).collect::<Result<Vec<_>>>()?;
        blocks.push(MeasurementBlock { q, scale, block_id });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((header, blocks))
}
