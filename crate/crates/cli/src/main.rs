use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use encrust::bench::{self, Experiment, ExperimentSpec, ResultRow, SchemeTag};
use encrust::codec::{
    read_wire, write_wire, Codec, CodecParams, DecodeConfig, KeySchedule, MaterialSource, Scheme, WireHeader,
};
use encrust::matgen::{build_binary_matrix, build_sparse_matrix, SparseConfig};
use encrust::phy::ChannelConfig;
use encrust::prng::{FP_DEFAULT, LFG_KEY_BYTES};
use encrust::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_DOMAIN: u8 = 4;

#[derive(Parser)]
#[command(name = "encrust", version, about = "Compressive-sensing ECG codec with built-in secrecy and error recovery")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Encode a sample file into measurement blocks.
    Encode(EncodeArgs),
    /// Decode measurement blocks back to samples.
    Decode(DecodeArgs),
    /// Send a sample file over the simulated 802.15.4 link and report PRD per block.
    Simulate(SimulateArgs),
    /// Run one experiment and write its CSV.
    Bench(BenchArgs),
    /// Run an attack experiment and write its CSV.
    Attack(AttackArgs),
    /// Print a generated matrix.
    MatrixDump(DumpArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Encrust,
    #[value(name = "l_encrust", alias = "l-encrust")]
    LEncrust,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Encrust => Scheme::Encrust,
            SchemeArg::LEncrust => Scheme::LEncrust,
        }
    }
}

#[derive(Args)]
struct KeyArgs {
    /// LFG key as 48 hex digits.
    #[arg(long, conflicts_with = "key_file")]
    key: Option<String>,
    /// File holding the hex key.
    #[arg(long)]
    key_file: Option<PathBuf>,
    /// Seed of the fixed compression matrix, 4 hex digits.
    #[arg(long, default_value = "ffff")]
    b_iv: String,
}

#[derive(Args)]
struct ShapeArgs {
    #[arg(long = "N", default_value_t = 256)]
    n: usize,
    #[arg(long = "M", default_value_t = 96)]
    m: usize,
    #[arg(long = "L", default_value_t = 150)]
    l: usize,
    #[arg(long, default_value_t = 15)]
    d: usize,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long, value_enum, default_value = "l_encrust")]
    scheme: SchemeArg,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    key: KeyArgs,
    #[command(flatten)]
    shape: ShapeArgs,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Must match the stream when given.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[command(flatten)]
    key: KeyArgs,
    /// Original samples; prints the PRD of the reconstruction.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkScheme {
    Soa,
    Encrust,
    #[value(name = "l_encrust", alias = "l-encrust")]
    LEncrust,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "l_encrust")]
    scheme: LinkScheme,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    snr: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[command(flatten)]
    key: KeyArgs,
    #[command(flatten)]
    shape: ShapeArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    experiment: String,
    /// key = value experiment file; its data_dir is relative to the file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_csv: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "data/ecg")]
    data_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackKind {
    Kpa,
    KnownMatrices,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long, value_enum)]
    kind: AttackKind,
    #[arg(long)]
    out_csv: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long, default_value = "data/ecg")]
    data_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixKindArg {
    Sparse,
    Binary,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long, value_enum, default_value = "sparse")]
    kind: MatrixKindArg,
    #[arg(long, default_value_t = 96)]
    rows: usize,
    #[arg(long, default_value_t = 256)]
    cols: usize,
    #[arg(long, default_value_t = 15)]
    d: usize,
    /// Register seed for the sparse matrix, 4 hex digits.
    #[arg(long, default_value = "ffff")]
    iv: String,
    /// Binary matrices take their row seeds from this key's stream.
    #[arg(long)]
    key: Option<String>,
    #[arg(long, default_value_t = 0)]
    block: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with its exit code.
struct Fail(u8, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) | Error::Format(_) => EXIT_IO,
            _ => EXIT_DOMAIN,
        };
        Fail(code, e.to_string())
    }
}

fn io_fail(path: &Path, e: std::io::Error) -> Fail {
    Fail(EXIT_IO, format!("{}: {e}", path.display()))
}

fn usage(msg: impl Into<String>) -> Fail {
    Fail(EXIT_USAGE, msg.into())
}

fn parse_key(hex_str: &str) -> Result<[u8; LFG_KEY_BYTES], Fail> {
    let bytes = hex::decode(hex_str.trim()).map_err(|e| usage(format!("key: {e}")))?;
    bytes.try_into().map_err(|_| usage(format!("key must be {} hex digits", 2 * LFG_KEY_BYTES)))
}

impl KeyArgs {
    fn lfg_key(&self) -> Result<[u8; LFG_KEY_BYTES], Fail> {
        match (&self.key, &self.key_file) {
            (Some(k), _) => parse_key(k),
            (None, Some(p)) => parse_key(&std::fs::read_to_string(p).map_err(|e| io_fail(p, e))?),
            (None, None) => Err(usage("one of --key or --key-file is required")),
        }
    }

    fn b_iv(&self) -> Result<u16, Fail> {
        bench::parse_hex_u16(&self.b_iv).map_err(|e| usage(e.to_string()))
    }
}

fn read_samples(path: &Path) -> Result<Vec<f64>, Fail> {
    let text = std::fs::read_to_string(path).map_err(|e| io_fail(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: i64 = t.parse().map_err(|_| Fail(EXIT_IO, format!("{}:{}: not an integer", path.display(), i + 1)))?;
        out.push(v as f64);
    }
    if out.is_empty() {
        return Err(Fail(EXIT_IO, format!("{}: no samples", path.display())));
    }
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Fail> {
    std::fs::write(path, bytes).map_err(|e| io_fail(path, e))
}

fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<(), Fail> {
    write_file(path, bench::csv_string(rows)?.as_bytes())
}

fn cmd_encode(a: &EncodeArgs) -> Result<(), Fail> {
    let key = a.key.lfg_key()?;
    let b_iv = a.key.b_iv()?;
    let x = read_samples(&a.input)?;
    let s = &a.shape;
    if x.len() % s.n != 0 {
        return Err(Fail(EXIT_DOMAIN, format!("{} samples is not a multiple of N={}", x.len(), s.n)));
    }
    let scheme = Scheme::from(a.scheme);
    let codec = Codec::new(CodecParams::new(scheme, s.n, s.m, s.l, s.d), b_iv)?;
    let mut keys = KeySchedule::new(key, b_iv)?;
    let mut src = MaterialSource::new(&key)?;
    let blocks = x.chunks(s.n).map(|blk| codec.encode(blk, &mut keys, &mut src)).collect::<Result<Vec<_>, _>>()?;
    let header = WireHeader { scheme, n: s.n as u16, m: s.m as u16, l: s.l as u16, d: s.d as u16, b_iv };
    write_file(&a.out, &write_wire(&header, &blocks)?)
}

fn cmd_decode(a: &DecodeArgs) -> Result<(), Fail> {
    let key = a.key.lfg_key()?;
    let bytes = std::fs::read(&a.input).map_err(|e| io_fail(&a.input, e))?;
    let (h, blocks) = read_wire(&bytes)?;
    if let Some(s) = a.scheme {
        if Scheme::from(s) != h.scheme {
            return Err(usage(format!("stream holds {} blocks", h.scheme.as_str())));
        }
    }
    let codec = Codec::new(CodecParams::new(h.scheme, h.n as usize, h.m as usize, h.l as usize, h.d as usize), h.b_iv)?;
    let mut src = MaterialSource::new(&key)?;
    let cfg = DecodeConfig::default();
    let mut x_hat = Vec::with_capacity(blocks.len() * h.n as usize);
    for b in &blocks {
        // A wrong key still decodes; the result is noise.
        let rec = codec
            .decode(b, &mut src, &cfg)
            .map(|d| d.x_hat)
            .unwrap_or_else(|_| vec![0.0; h.n as usize]);
        x_hat.extend(rec);
    }
    let text: String = x_hat.iter().map(|v| format!("{}\n", v.round() as i64)).collect();
    write_file(&a.out, text.as_bytes())?;
    if let Some(r) = &a.reference {
        let x = read_samples(r)?;
        let p = bench::prd(&x, &x_hat)?;
        println!("prd {p:.6}");
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), Fail> {
    let x = read_samples(&a.input)?;
    let s = &a.shape;
    if x.len() % s.n != 0 {
        return Err(Fail(EXIT_DOMAIN, format!("{} samples is not a multiple of N={}", x.len(), s.n)));
    }
    let mut spec = ExperimentSpec::new(Experiment::PrdVsSnr, Vec::new(), a.seed);
    spec.params.n = s.n;
    spec.params.d = s.d;
    spec.b_iv = a.key.b_iv()?;
    if a.key.key.is_some() || a.key.key_file.is_some() {
        spec.lfg_key = a.key.lfg_key()?;
    }
    let (tag, codec) = match a.scheme {
        LinkScheme::Soa => (SchemeTag::Soa, None),
        LinkScheme::Encrust => (SchemeTag::Encrust, Some(Codec::new(CodecParams::new(Scheme::Encrust, s.n, s.m, s.l, s.d), spec.b_iv)?)),
        LinkScheme::LEncrust => {
            (SchemeTag::LEncrust, Some(Codec::new(CodecParams::new(Scheme::LEncrust, s.n, s.m, s.l, s.d), spec.b_iv)?))
        }
    };
    let mut rows = Vec::new();
    for (t, blk) in x.chunks(s.n).enumerate() {
        let ch = ChannelConfig::new(a.snr, a.seed.wrapping_add(t as u64));
        let out = bench::link_trial(&spec, tag, codec.as_ref(), blk, t as u64, &ch)?;
        println!("block {t} prd {:.6} delivered {} retransmissions {}", out.prd, out.delivered, out.retransmissions);
        let mut row = ResultRow {
            experiment: "simulate".into(),
            scheme: tag.as_str().into(),
            m: if codec.is_some() { s.m } else { 0 },
            l: if codec.is_some() { s.l } else { 0 },
            d: s.d,
            snr_db: Some(a.snr),
            trial: t,
            prd: Some(out.prd),
            tx_efficiency_pct: None,
            extra: Default::default(),
        };
        row.extra.insert("delivered".into(), (out.delivered as u8).to_string());
        row.extra.insert("retransmissions".into(), out.retransmissions.to_string());
        rows.push(row);
    }
    if let Some(p) = &a.out_csv {
        write_rows(p, &rows)?;
    }
    Ok(())
}

fn load_default_records(dir: &Path) -> Result<Vec<bench::EcgRecord>, Fail> {
    let ids: Vec<String> = bench::DEFAULT_RECORDS.iter().map(|s| s.to_string()).collect();
    Ok(bench::load_records(dir, &ids)?)
}

fn cmd_bench(a: &BenchArgs) -> Result<(), Fail> {
    let exp = Experiment::parse(&a.experiment).ok_or_else(|| usage(format!("unknown experiment {:?}", a.experiment)))?;
    let mut spec = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_fail(p, e))?;
            let base = p.parent().unwrap_or(Path::new("."));
            let spec = ExperimentSpec::from_config(&text, base).map_err(|e| match e {
                Error::Param(m) => usage(m),
                other => other.into(),
            })?;
            if spec.experiment != exp {
                return Err(usage(format!("config is for {}", spec.experiment.as_str())));
            }
            spec
        }
        None => {
            let records = if exp == Experiment::CoherenceSweep { Vec::new() } else { load_default_records(&a.data_dir)? };
            ExperimentSpec::new(exp, records, a.seed.unwrap_or(1))
        }
    };
    if let Some(seed) = a.seed {
        let records = std::mem::take(&mut spec.records);
        let fresh = ExperimentSpec::new(exp, Vec::new(), seed);
        spec.seed = seed;
        spec.lfg_key = fresh.lfg_key;
        spec.aes_key = fresh.aes_key;
        spec.records = records;
    }
    if let Some(t) = a.trials {
        spec.trials = t;
    }
    let rows = bench::run(&spec)?;
    write_rows(&a.out_csv, &rows)
}

fn cmd_attack(a: &AttackArgs) -> Result<(), Fail> {
    let exp = match a.kind {
        AttackKind::Kpa => Experiment::AttackKpa,
        AttackKind::KnownMatrices => Experiment::AttackKnownMatrices,
    };
    let mut spec = ExperimentSpec::new(exp, load_default_records(&a.data_dir)?, a.seed);
    if let Some(b) = a.blocks {
        spec.trials = b;
    }
    let rows = bench::run(&spec)?;
    if exp == Experiment::AttackKnownMatrices {
        let adv: Vec<f64> = rows.iter().filter(|r| r.extra["arm"] == "adversary").filter_map(|r| r.prd).collect();
        let lo = adv.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = adv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("adversary prd range {lo:.1} .. {hi:.1} over {} blocks", adv.len());
    }
    write_rows(&a.out_csv, &rows)
}

fn cmd_matrix_dump(a: &DumpArgs) -> Result<(), Fail> {
    let m = match a.kind {
        MatrixKindArg::Sparse => {
            let iv = bench::parse_hex_u16(&a.iv).map_err(|e| usage(e.to_string()))?;
            build_sparse_matrix(&SparseConfig { iv, ..SparseConfig::with_d(a.d) }, a.rows, a.cols)?
        }
        MatrixKindArg::Binary => {
            let key = parse_key(a.key.as_deref().ok_or_else(|| usage("--key is required for binary matrices"))?)?;
            let ivs = MaterialSource::new(&key)?.words(a.block, Scheme::Encrust, a.rows);
            build_binary_matrix(&ivs, FP_DEFAULT, a.cols)?
        }
    };
    let text = m.dump();
    match &a.out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Encode(a) => cmd_encode(a),
        Cmd::Decode(a) => cmd_decode(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Attack(a) => cmd_attack(a),
        Cmd::MatrixDump(a) => cmd_matrix_dump(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("encrust: {msg}");
            ExitCode::from(code)
        }
    }
}
