//! Experiment harness: ECG ingestion, PRD, the sweeps and the attack
//! experiments, CSV output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::baseline::{bits_to_words, soa_decode, soa_encode, words_to_bits, HaarPlan};
use crate::codec::{dequantize, quantize16, BlockMaterial, Codec, CodecParams, DecodeConfig, ErrorEstimation, MaterialSource, Scheme};
use crate::error::{Error, Result};
use crate::l1solver::dct_basis;
use crate::matgen::{build_binary_matrix, build_sparse_matrix, coherence_report, MatrixKind, SensingMatrix, SparseConfig};
use crate::phy::{transmit, ChannelConfig};
use crate::prng::{FP_DEFAULT, LFG_KEY_BYTES};

/// Record names used throughout the sweeps.
pub const DEFAULT_RECORDS: [&str; 5] = ["100", "104", "111", "210", "230"];

/// A PRD below this counts as a successful delivery.
pub const SUCCESS_PRD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub record_id: String,
    pub samples: Vec<i32>,
    pub sample_rate_hz: u32,
    pub resolution_bits: u32,
}

impl EcgRecord {
    /// Non-overlapping blocks of `n` samples.
    pub fn blocks(&self, n: usize) -> Vec<Vec<f64>> {
        self.samples.chunks_exact(n).map(|c| c.iter().map(|&v| v as f64).collect()).collect()
    }
}

/// Text format: header `# record_id rate bits`, then one ADC code per line.
pub fn parse_ecg(text: &str) -> Result<EcgRecord> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or_else(|| Error::Format("empty record".into()))?;
    let fields: Vec<&str> = head.trim().strip_prefix('#').unwrap_or("").split_whitespace().collect();
    let [id, rate, bits] = fields[..] else {
        return Err(Error::Format(format!("bad header line {head:?}")));
    };
    let rate: u32 = rate.parse().map_err(|_| Error::Format(format!("bad rate {rate:?}")))?;
    let bits: u32 = bits.parse().map_err(|_| Error::Format(format!("bad resolution {bits:?}")))?;
    if !(1..=16).contains(&bits) {
        return Err(Error::Format(format!("resolution {bits} out of range")));
    }
    let top = 1i64 << bits;
    let mut samples = Vec::new();
    for (i, line) in lines {
        let v: i64 = line.trim().parse().map_err(|_| Error::Format(format!("line {}: {line:?}", i + 1)))?;
        if !(0..top).contains(&v) {
            return Err(Error::Format(format!("line {}: sample {v} outside {bits}-bit range", i + 1)));
        }
        samples.push(v as i32);
    }
    Ok(EcgRecord { record_id: id.to_string(), samples, sample_rate_hz: rate, resolution_bits: bits })
}

pub fn load_ecg(path: &Path) -> Result<EcgRecord> {
    parse_ecg(&std::fs::read_to_string(path)?)
}

pub fn load_records(dir: &Path, ids: &[String]) -> Result<Vec<EcgRecord>> {
    ids.iter().map(|id| load_ecg(&dir.join(format!("{id}.txt")))).collect()
}

/// `100 * ||x - x_hat|| / ||x||`.
pub fn prd(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::Shape(format!("{} vs {} samples", x.len(), x_hat.len())));
    }
    let den: f64 = x.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let num: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(100.0 * (num / den).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Experiment {
    CoherenceSweep,
    QuantizationSweep,
    PrdVsSnr,
    TxEfficiency,
    AttackKpa,
    AttackKnownMatrices,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::CoherenceSweep,
        Experiment::QuantizationSweep,
        Experiment::PrdVsSnr,
        Experiment::TxEfficiency,
        Experiment::AttackKpa,
        Experiment::AttackKnownMatrices,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::CoherenceSweep => "coherence_sweep",
            Experiment::QuantizationSweep => "quantization_sweep",
            Experiment::PrdVsSnr => "prd_vs_snr",
            Experiment::TxEfficiency => "tx_efficiency",
            Experiment::AttackKpa => "attack_kpa",
            Experiment::AttackKnownMatrices => "attack_known_matrices",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeTag {
    Soa,
    Encrust,
    LEncrust,
}

impl SchemeTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeTag::Soa => "soa",
            SchemeTag::Encrust => "encrust",
            SchemeTag::LEncrust => "l_encrust",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "soa" => Some(SchemeTag::Soa),
            other => Scheme::parse(other).map(|s| match s {
                Scheme::Encrust => SchemeTag::Encrust,
                Scheme::LEncrust => SchemeTag::LEncrust,
            }),
        }
    }

    fn codec_scheme(&self) -> Option<Scheme> {
        match self {
            SchemeTag::Soa => None,
            SchemeTag::Encrust => Some(Scheme::Encrust),
            SchemeTag::LEncrust => Some(Scheme::LEncrust),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    /// N, d and the codec options; M and L come from the grids.
    pub params: CodecParams,
    pub b_iv: u16,
    pub m_grid: Vec<usize>,
    pub l_grid: Vec<usize>,
    pub d_grid: Vec<usize>,
    pub snr_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub scheme_set: Vec<SchemeTag>,
    pub records: Vec<EcgRecord>,
    /// Blocks taken from the start of each record; trial `t` uses record
    /// `t mod R`, block `(t / R) mod blocks_per_record`.
    pub blocks_per_record: usize,
    pub lfg_key: [u8; LFG_KEY_BYTES],
    pub aes_key: [u8; 16],
    /// Multipliers on the mask for the known-plaintext sweep.
    pub mask_gains: Vec<f64>,
    pub decode: DecodeConfig,
}

impl ExperimentSpec {
    /// Desk-scale defaults; keys are derived from `seed`.
    pub fn new(experiment: Experiment, records: Vec<EcgRecord>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6b65_795f_6465_7276);
        let mut lfg_key = [0u8; LFG_KEY_BYTES];
        rng.fill_bytes(&mut lfg_key);
        let mut aes_key = [0u8; 16];
        rng.fill_bytes(&mut aes_key);
        let (m_grid, l_grid, scheme_set, blocks_per_record, trials) = match experiment {
            Experiment::CoherenceSweep => (vec![96], vec![168], vec![], 1, 20),
            Experiment::QuantizationSweep => {
                ((96..=146).step_by(10).collect(), vec![168], vec![SchemeTag::Encrust, SchemeTag::LEncrust], 4, 0)
            }
            Experiment::PrdVsSnr => (vec![96], vec![168], vec![SchemeTag::Soa, SchemeTag::LEncrust], 4, 100),
            Experiment::TxEfficiency => (vec![96], vec![168], vec![SchemeTag::Soa, SchemeTag::LEncrust], 1, 100),
            Experiment::AttackKpa => (vec![96], vec![168], vec![SchemeTag::LEncrust], 1, 1),
            Experiment::AttackKnownMatrices => (vec![96], vec![168], vec![SchemeTag::LEncrust], 1, 100),
        };
        Self {
            experiment,
            params: CodecParams::new(Scheme::LEncrust, 256, 96, 168, 15),
            b_iv: 0xFFFF,
            m_grid,
            l_grid,
            d_grid: (2..=20).collect(),
            snr_grid: vec![-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            trials,
            seed,
            scheme_set,
            records,
            blocks_per_record,
            lfg_key,
            aes_key,
            mask_gains: vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            decode: DecodeConfig::default(),
        }
    }

    /// Line-based `key = value` configuration; `#` starts a comment.
    /// `data_dir` is resolved against `base`.
    pub fn from_config(text: &str, base: &Path) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format(format!("line {}: expected key = value", i + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| kv.get(k).map(String::as_str);
        let experiment = get("experiment")
            .ok_or_else(|| Error::Param("missing experiment".into()))
            .and_then(|e| Experiment::parse(e).ok_or_else(|| Error::Param(format!("unknown experiment {e:?}"))))?;
        let seed = get("seed").map(|s| parse_num::<u64>("seed", s)).transpose()?.unwrap_or(1);
        let data_dir = base.join(get("data_dir").unwrap_or("data/ecg"));
        let ids: Vec<String> = match get("records") {
            Some(s) => s.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect(),
            None => DEFAULT_RECORDS.iter().map(|s| s.to_string()).collect(),
        };
        let records = if experiment == Experiment::CoherenceSweep { Vec::new() } else { load_records(&data_dir, &ids)? };
        let mut spec = Self::new(experiment, records, seed);
        for (k, v) in &kv {
            match k.as_str() {
                "experiment" | "seed" | "data_dir" | "records" => {}
                "n" => spec.params.n = parse_num("n", v)?,
                "d" => spec.params.d = parse_num("d", v)?,
                "m" => spec.m_grid = vec![parse_num("m", v)?],
                "l" => spec.l_grid = vec![parse_num("l", v)?],
                "m_grid" => spec.m_grid = parse_list("m_grid", v)?,
                "l_grid" => spec.l_grid = parse_list("l_grid", v)?,
                "d_grid" => spec.d_grid = parse_list("d_grid", v)?,
                "snr_grid" => spec.snr_grid = parse_list("snr_grid", v)?,
                "mask_gains" => spec.mask_gains = parse_list("mask_gains", v)?,
                "trials" => spec.trials = parse_num("trials", v)?,
                "blocks_per_record" => spec.blocks_per_record = parse_num("blocks_per_record", v)?,
                "alpha2" => spec.params.alpha2 = parse_num("alpha2", v)?,
                "b_iv" => spec.b_iv = parse_hex_u16(v)?,
                "a_iv" => spec.params.a_iv = parse_hex_u16(v)?,
                "key" => spec.lfg_key = parse_hex_array(v)?,
                "aes_key" => spec.aes_key = parse_hex_array(v)?,
                "scheme_set" => {
                    spec.scheme_set = v
                        .split(',')
                        .map(|t| SchemeTag::parse(t.trim()).ok_or_else(|| Error::Param(format!("unknown scheme {t:?}"))))
                        .collect::<Result<_>>()?
                }
                other => return Err(Error::Param(format!("unknown config key {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks_per_record == 0 {
            return Err(Error::Param("blocks_per_record must be at least 1".into()));
        }
        let needs_trials = !matches!(self.experiment, Experiment::QuantizationSweep);
        if needs_trials && self.trials == 0 {
            return Err(Error::Param("trials must be at least 1".into()));
        }
        if self.experiment != Experiment::CoherenceSweep {
            if self.records.is_empty() {
                return Err(Error::Param("no ECG records".into()));
            }
            for r in &self.records {
                if r.samples.len() < self.blocks_per_record * self.params.n {
                    return Err(Error::Param(format!("record {} is shorter than {} blocks", r.record_id, self.blocks_per_record)));
                }
            }
        }
        Ok(())
    }

    fn block(&self, trial: usize) -> (usize, usize, Vec<f64>) {
        let r = trial % self.records.len();
        let b = (trial / self.records.len()) % self.blocks_per_record;
        let n = self.params.n;
        let x = self.records[r].samples[b * n..(b + 1) * n].iter().map(|&v| v as f64).collect();
        (r, b, x)
    }

    fn codec(&self, scheme: Scheme, m: usize, l: usize) -> Result<Codec> {
        let params = CodecParams { scheme, m, l, ..self.params };
        Codec::new(params, self.b_iv)
    }
}

fn parse_num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Param(format!("{k}: cannot parse {v:?}")))
}

fn parse_list<T: std::str::FromStr>(k: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').filter(|t| !t.trim().is_empty()).map(|t| parse_num(k, t)).collect()
}

pub fn parse_hex_u16(v: &str) -> Result<u16> {
    let t = v.trim();
    let t = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")).unwrap_or(t);
    u16::from_str_radix(t, 16).map_err(|_| Error::Param(format!("bad 16-bit hex value {v:?}")))
}

pub fn parse_hex_array<const K: usize>(v: &str) -> Result<[u8; K]> {
    let t = v.trim();
    if t.len() != 2 * K || !t.is_ascii() {
        return Err(Error::Param(format!("expected {} hex digits", 2 * K)));
    }
    let mut out = [0u8; K];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&t[2 * i..2 * i + 2], 16).map_err(|_| Error::Param(format!("bad hex in {v:?}")))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub scheme: String,
    pub m: usize,
    pub l: usize,
    pub d: usize,
    pub snr_db: Option<f64>,
    pub trial: usize,
    pub prd: Option<f64>,
    pub tx_efficiency_pct: Option<f64>,
    pub extra: BTreeMap<String, String>,
}

impl ResultRow {
    fn new(exp: Experiment, scheme: &str, m: usize, l: usize, d: usize, trial: usize) -> Self {
        Self {
            experiment: exp.as_str().to_string(),
            scheme: scheme.to_string(),
            m,
            l,
            d,
            snr_db: None,
            trial,
            prd: None,
            tx_efficiency_pct: None,
            extra: BTreeMap::new(),
        }
    }

    fn with(mut self, k: &str, v: impl ToString) -> Self {
        self.extra.insert(k.to_string(), v.to_string());
        self
    }

    pub fn extra_f64(&self, k: &str) -> Option<f64> {
        self.extra.get(k).and_then(|v| v.parse().ok())
    }
}

/// Independent 64-bit stream seeds from a base seed and coordinates.
fn sub_seed(seed: u64, coords: &[u64]) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &c in coords {
        h = splitmix(h ^ c.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn run(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    match spec.experiment {
        Experiment::CoherenceSweep => run_coherence_sweep(spec),
        Experiment::QuantizationSweep => run_quantization_sweep(spec),
        Experiment::PrdVsSnr => run_prd_vs_snr(spec),
        Experiment::TxEfficiency => run_tx_efficiency(spec),
        Experiment::AttackKpa => run_attack_kpa(spec),
        Experiment::AttackKnownMatrices => run_attack_known_matrices(spec),
    }
}

/// Coherence of sparse matrices over `d_grid`, plus binary and Gaussian
/// references (`trials` draws each), all against the DCT basis.
pub fn run_coherence_sweep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let (n, m) = (spec.params.n, spec.m_grid.first().copied().unwrap_or(96));
    let psi = dct_basis(n);
    let exp = Experiment::CoherenceSweep;
    let mut rows = Vec::new();
    for &d in &spec.d_grid {
        let b = build_sparse_matrix(&SparseConfig { iv: spec.b_iv, ..SparseConfig::with_d(d) }, m, n)?;
        let rep = coherence_report(&b, &psi, Some(d))?;
        rows.push(ResultRow::new(exp, "sparse", m, 0, d, 0).with("mu", rep.mu));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(spec.seed, &[1]));
    for t in 0..spec.trials {
        let ivs: Vec<u16> = (0..m).map(|_| rng.gen_range(1..=u16::MAX)).collect();
        let b = build_binary_matrix(&ivs, FP_DEFAULT, n)?;
        let mu = coherence_report(&b, &psi, None)?.mu;
        rows.push(ResultRow::new(exp, "binary", m, 0, 0, t).with("mu", mu));
        let g = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mu = coherence_report(&SensingMatrix::new(MatrixKind::Dense, g), &psi, None)?.mu;
        rows.push(ResultRow::new(exp, "gaussian", m, 0, 0, t).with("mu", mu));
    }
    Ok(rows)
}

/// PRD over `m_grid` with and without 16-bit quantization, no channel.
/// One row per (scheme, M, block, quantized).
pub fn run_quantization_sweep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let exp = Experiment::QuantizationSweep;
    let blocks = spec.records.len() * spec.blocks_per_record;
    let l = spec.l_grid.first().copied().unwrap_or(168);
    let clean_cfg = DecodeConfig { estimation: ErrorEstimation::Off, ..spec.decode };
    let mut rows = Vec::new();
    for tag in &spec.scheme_set {
        let Some(scheme) = tag.codec_scheme() else { continue };
        for &m in &spec.m_grid {
            let codec = spec.codec(scheme, m, l)?;
            let mut src = MaterialSource::new(&spec.lfg_key)?;
            for t in 0..blocks {
                let (r, b, x) = spec.block(t);
                let mat = codec.material(&mut src, t as u64);
                let y = codec.measure(&x, &mat)?;
                let clean = codec.decode_with(&y, None, &mat, &clean_cfg)?;
                let (q, s) = quantize16(&y)?;
                let quant = codec.decode_with(&dequantize(&q, s), Some(s), &mat, &spec.decode)?;
                for (flag, x_hat) in [(0, &clean.x_hat), (1, &quant.x_hat)] {
                    let mut row = ResultRow::new(exp, tag.as_str(), m, l, spec.params.d, t)
                        .with("quantized", flag)
                        .with("record", &spec.records[r].record_id)
                        .with("block", b);
                    row.prd = Some(prd(&x, x_hat)?);
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}

/// Outcome of one block sent over the simulated link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkOutcome {
    pub prd: f64,
    pub delivered: bool,
    pub retransmissions: usize,
}

/// Encode, packetize, transmit, reassemble and decode one block. A failed
/// transmission or decode yields an all-zero reconstruction (PRD 100).
pub fn link_trial(
    spec: &ExperimentSpec,
    tag: SchemeTag,
    codec: Option<&Codec>,
    x: &[f64],
    block_id: u64,
    channel: &ChannelConfig,
) -> Result<LinkOutcome> {
    let failed = |retx| Ok(LinkOutcome { prd: 100.0, delivered: false, retransmissions: retx });
    match (tag, codec) {
        (SchemeTag::Soa, _) => {
            let plan = HaarPlan::default();
            let nonce = channel.rng_seed;
            let (ct, aux) = soa_encode(x, &plan, &spec.aes_key, nonce)?;
            let Ok(rep) = transmit(&ct.bits, channel) else { return failed(channel.max_retransmissions) };
            match soa_decode(&rep.delivered_bits, &aux, &plan, &spec.aes_key, nonce) {
                Ok(x_hat) => Ok(LinkOutcome { prd: prd(x, &x_hat)?, delivered: true, retransmissions: rep.retransmissions }),
                Err(_) => failed(rep.retransmissions),
            }
        }
        (_, Some(codec)) => {
            let mut src = MaterialSource::new(&spec.lfg_key)?;
            let mat = codec.material(&mut src, block_id);
            let (q, scale) = quantize16(&codec.measure(x, &mat)?)?;
            let Ok(rep) = transmit(&words_to_bits(&q), channel) else { return failed(channel.max_retransmissions) };
            let y_rx = dequantize(&bits_to_words(&rep.delivered_bits), scale);
            match codec.decode_with(&y_rx, Some(scale), &mat, &spec.decode) {
                Ok(d) => Ok(LinkOutcome { prd: prd(x, &d.x_hat)?, delivered: true, retransmissions: rep.retransmissions }),
                Err(_) => failed(rep.retransmissions),
            }
        }
        _ => Err(Error::Param("codec scheme needs a codec".into())),
    }
}

fn link_rows(spec: &ExperimentSpec, exp: Experiment) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for (si, tag) in spec.scheme_set.iter().enumerate() {
        for &l in &spec.l_grid {
            for &m in &spec.m_grid {
                let codec = match tag.codec_scheme() {
                    Some(s) => Some(spec.codec(s, m, l)?),
                    None => None,
                };
                let (m_col, l_col) = if codec.is_some() { (m, l) } else { (0, 0) };
                for (k, &snr) in spec.snr_grid.iter().enumerate() {
                    for t in 0..spec.trials {
                        let (r, b, x) = spec.block(t);
                        let seed = sub_seed(spec.seed, &[exp as u64, si as u64, l as u64, m as u64, k as u64, t as u64]);
                        let ch = ChannelConfig::new(snr, seed);
                        let out = link_trial(spec, *tag, codec.as_ref(), &x, t as u64, &ch)?;
                        let mut row = ResultRow::new(exp, tag.as_str(), m_col, l_col, spec.params.d, t)
                            .with("record", &spec.records[r].record_id)
                            .with("block", b)
                            .with("delivered", out.delivered as u8)
                            .with("retransmissions", out.retransmissions);
                        row.snr_db = Some(snr);
                        row.prd = Some(out.prd);
                        rows.push(row);
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Full link per scheme and SNR; one row per trial.
pub fn run_prd_vs_snr(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    link_rows(spec, Experiment::PrdVsSnr)
}

/// Percentage of trials with PRD below 1, one row per (scheme, M, L, SNR);
/// `trial` holds the number of trials.
pub fn run_tx_efficiency(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let per_trial = link_rows(spec, Experiment::TxEfficiency)?;
    let mut groups: BTreeMap<(String, usize, usize, i64), (f64, Vec<f64>)> = BTreeMap::new();
    for r in &per_trial {
        let snr = r.snr_db.unwrap_or(0.0);
        let key = (r.scheme.clone(), r.m, r.l, (snr * 1000.0).round() as i64);
        groups.entry(key).or_insert((snr, Vec::new())).1.push(r.prd.unwrap_or(100.0));
    }
    let order: Vec<String> = spec.scheme_set.iter().map(|s| s.as_str().to_string()).collect();
    let mut rows: Vec<ResultRow> = groups
        .into_iter()
        .map(|((scheme, m, l, _), (snr, prds))| {
            let ok = prds.iter().filter(|&&p| p < SUCCESS_PRD).count();
            let mut row = ResultRow::new(Experiment::TxEfficiency, &scheme, m, l, spec.params.d, prds.len())
                .with("successes", ok)
                .with("mean_prd", prds.iter().sum::<f64>() / prds.len() as f64);
            row.snr_db = Some(snr);
            row.tx_efficiency_pct = Some(100.0 * ok as f64 / prds.len() as f64);
            row
        })
        .collect();
    rows.sort_by(|a, b| {
        let pa = order.iter().position(|s| *s == a.scheme);
        let pb = order.iter().position(|s| *s == b.scheme);
        pa.cmp(&pb).then(a.l.cmp(&b.l)).then(a.m.cmp(&b.m)).then(a.snr_db.unwrap_or(0.0).total_cmp(&b.snr_db.unwrap_or(0.0)))
    });
    Ok(rows)
}

/// Result of the known-plaintext estimate of the first row of `H = A B`.
#[derive(Debug, Clone, PartialEq)]
pub struct KpaResult {
    pub h_row_estimate: Vec<f64>,
    pub h_row_true: Vec<f64>,
    /// `||h_est - h|| / ||h||`.
    pub relative_error: f64,
    /// The same ratio in percent.
    pub prd_of_estimate: f64,
}

/// Known-plaintext attack on L-ENCRUST with zero channel error: stack N
/// plaintext blocks into `X`, take the first ciphertext entry of each block
/// as `d` and solve `X h = d`. The mask is multiplied by `mask_gain`.
pub fn attack_known_plaintext(codec: &Codec, blocks: &[Vec<f64>], key: &[u8; LFG_KEY_BYTES], mask_gain: f64) -> Result<KpaResult> {
    let n = codec.params().n;
    let a = codec.a().ok_or_else(|| Error::Param("the attack targets L-ENCRUST".into()))?;
    if blocks.len() < n {
        return Err(Error::Param(format!("{} plaintext blocks, need {n}", blocks.len())));
    }
    let h = (&a.data * &codec.b().data).row(0).transpose();
    let mut src = MaterialSource::new(key)?;
    // Slide the window of plaintexts until X is invertible.
    for start in 0..=blocks.len() - n {
        let set = &blocks[start..start + n];
        let x = DMatrix::from_fn(n, n, |i, j| set[i][j]);
        let mut d = DVector::zeros(n);
        for (i, xb) in set.iter().enumerate() {
            let mat = match codec.material(&mut src, (start + i) as u64) {
                BlockMaterial::Mask(r) => BlockMaterial::Mask(r.iter().map(|v| v * mask_gain).collect()),
                other => other,
            };
            d[i] = codec.measure(xb, &mat)?[0];
        }
        if let Some(est) = x.lu().solve(&d) {
            if est.iter().all(|v| v.is_finite()) {
                let rel = (&est - &h).norm() / h.norm();
                return Ok(KpaResult {
                    h_row_estimate: est.as_slice().to_vec(),
                    h_row_true: h.as_slice().to_vec(),
                    relative_error: rel,
                    prd_of_estimate: 100.0 * rel,
                });
            }
        }
    }
    Err(Error::RankDeficient)
}

fn all_blocks(spec: &ExperimentSpec) -> Vec<Vec<f64>> {
    spec.records.iter().flat_map(|r| r.blocks(spec.params.n)).collect()
}

/// Known-plaintext estimate for every gain in `mask_gains`.
pub fn run_attack_kpa(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let (m, l) = (spec.m_grid.first().copied().unwrap_or(96), spec.l_grid.first().copied().unwrap_or(168));
    let codec = spec.codec(Scheme::LEncrust, m, l)?;
    let blocks = all_blocks(spec);
    let mut rows = Vec::new();
    for (i, &g) in spec.mask_gains.iter().enumerate() {
        let res = attack_known_plaintext(&codec, &blocks, &spec.lfg_key, g)?;
        let mut row = ResultRow::new(Experiment::AttackKpa, "l_encrust", m, l, spec.params.d, i)
            .with("mask_gain", g)
            .with("relative_error", res.relative_error);
        row.prd = Some(res.prd_of_estimate);
        rows.push(row);
    }
    Ok(rows)
}

/// Per-block PRDs of an adversary holding `A` and `B` but guessing the
/// mask, and of the legitimate receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownMatricesResult {
    pub adversary_prd: Vec<f64>,
    pub control_prd: Vec<f64>,
}

pub fn attack_known_matrices(spec: &ExperimentSpec, codec: &Codec, blocks: usize) -> Result<KnownMatricesResult> {
    let l = codec.params().l;
    let mut src = MaterialSource::new(&spec.lfg_key)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(spec.seed, &[Experiment::AttackKnownMatrices as u64]));
    let mut out = KnownMatricesResult { adversary_prd: Vec::new(), control_prd: Vec::new() };
    for t in 0..blocks {
        let (_, _, x) = spec.block(t);
        let mat = codec.material(&mut src, t as u64);
        let (q, s) = quantize16(&codec.measure(&x, &mat)?)?;
        let y = dequantize(&q, s);
        let guess: Vec<u16> = (0..l).map(|_| rng.gen()).collect();
        let wrong = codec.material_from_words(&guess);
        let adv = codec.decode_with(&y, Some(s), &wrong, &spec.decode).map(|d| d.x_hat).unwrap_or_else(|_| vec![0.0; x.len()]);
        let ctl = codec.decode_with(&y, Some(s), &mat, &spec.decode)?;
        out.adversary_prd.push(prd(&x, &adv)?);
        out.control_prd.push(prd(&x, &ctl.x_hat)?);
    }
    Ok(out)
}

pub fn run_attack_known_matrices(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let (m, l) = (spec.m_grid.first().copied().unwrap_or(96), spec.l_grid.first().copied().unwrap_or(168));
    let codec = spec.codec(Scheme::LEncrust, m, l)?;
    let res = attack_known_matrices(spec, &codec, spec.trials)?;
    let mut rows = Vec::new();
    for (arm, prds) in [("adversary", &res.adversary_prd), ("control", &res.control_prd)] {
        for (t, &p) in prds.iter().enumerate() {
            let mut row = ResultRow::new(Experiment::AttackKnownMatrices, "l_encrust", m, l, spec.params.d, t).with("arm", arm);
            row.prd = Some(p);
            rows.push(row);
        }
    }
    Ok(rows)
}

pub const CSV_COLUMNS: [&str; 10] =
    ["experiment", "scheme", "M", "L", "d", "snr_db", "trial", "prd", "tx_efficiency_pct", "extra"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn csv_string(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for r in rows {
        let extra = r.extra.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";");
        w.write_record([
            r.experiment.clone(),
            r.scheme.clone(),
            r.m.to_string(),
            r.l.to_string(),
            r.d.to_string(),
            opt(r.snr_db),
            r.trial.to_string(),
            opt(r.prd),
            opt(r.tx_efficiency_pct),
            extra,
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(rows)?)?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    let header: Vec<String> = rd.headers().map_err(fmt)?.iter().map(String::from).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Format("unexpected CSV header".into()));
    }
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::Format(format!("bad number {s:?}")))
        }
    };
    let int = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad integer {s:?}")));
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(fmt)?;
        let mut extra = BTreeMap::new();
        for kv in rec[9].split(';').filter(|s| !s.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Format(format!("bad extra field {kv:?}")))?;
            extra.insert(k.to_string(), v.to_string());
        }
        rows.push(ResultRow {
            experiment: rec[0].to_string(),
            scheme: rec[1].to_string(),
            m: int(&rec[2])?,
            l: int(&rec[3])?,
            d: int(&rec[4])?,
            snr_db: num(&rec[5])?,
            trial: int(&rec[6])?,
            prd: num(&rec[7])?,
            tx_efficiency_pct: num(&rec[8])?,
            extra,
        });
    }
    Ok(rows)
}

/// Default location of the bundled records relative to a crate manifest.
pub fn default_data_dir(manifest_dir: &Path) -> PathBuf {
    manifest_dir.join("../../data/ecg")
}
