//! Acceptance criteria, one line per criterion. Runs without the libtest
//! harness so every line is printed; exits non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;

use encrust::baseline::{haar_compress, soa_encode, words_to_bits, HaarPlan};
use encrust::bench::{
    self, load_records, prd, EcgRecord, Experiment, ExperimentSpec, ResultRow, SchemeTag, DEFAULT_RECORDS,
};
use encrust::codec::{
    error_capacity, projection_matrix, quantize16, Codec, CodecParams, DecodeConfig, ErrorEstimation, MaterialSource,
    Scheme,
};
use encrust::l1solver::dct_basis;
use encrust::matgen::{build_sparse_matrix, SparseConfig, GAUSSIAN_MU_BAND};
use nalgebra::DVector;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KEY: [u8; 24] = [
    0x3a, 0x91, 0x5c, 0x07, 0xe2, 0x44, 0x8b, 0x19, 0xd6, 0x70, 0x2f, 0xa3, 0x65, 0xc8, 0x0e, 0xb4, 0x57, 0x9d, 0x21,
    0xf6, 0x83, 0x4a, 0xcd, 0x12,
];
const SEED: u64 = 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn data_dir() -> PathBuf {
    bench::default_data_dir(Path::new(env!("CARGO_MANIFEST_DIR")))
}

fn records() -> Vec<EcgRecord> {
    let ids: Vec<String> = DEFAULT_RECORDS.iter().map(|s| s.to_string()).collect();
    load_records(&data_dir(), &ids).expect("ECG records under data/ecg")
}

fn c1_projection() -> Outcome {
    let a = build_sparse_matrix(&SparseConfig::default(), 150, 96).unwrap();
    let p = projection_matrix(&a.data).unwrap();
    let (pa1, idem1) = ((&p * &a.data).amax(), (&p * &p - &p).amax());
    let codec = Codec::new(CodecParams::new(Scheme::LEncrust, 256, 96, 168, 15), 0xFFFF).unwrap();
    let mat = codec.material(&mut MaterialSource::new(&KEY).unwrap(), 0);
    let (au, _) = codec.effective(&mat).unwrap();
    let p = projection_matrix(&au.data).unwrap();
    let (pa2, idem2) = ((&p * &au.data).amax(), (&p * &p - &p).amax());
    let worst = pa1.max(idem1).max(pa2).max(idem2);
    outcome(
        worst < 1e-8 && au.cols() == 97,
        format!("A 150x96: |PA| {pa1:.1e} |P^2-P| {idem1:.1e}; A_u 168x97: |PA| {pa2:.1e} |P^2-P| {idem2:.1e}"),
    )
}

fn k_sparse(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut theta = DVector::zeros(n);
    for i in sample(rng, n, k) {
        theta[i] = rng.gen_range(-100.0..100.0);
    }
    (dct_basis(n) * theta).as_slice().to_vec()
}

fn c2_noiseless() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for scheme in [Scheme::Encrust, Scheme::LEncrust] {
        let codec = Codec::new(CodecParams::new(scheme, 64, 32, 48, 8), 0xFFFF).unwrap();
        let mut src = MaterialSource::new(&KEY).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let cfg = DecodeConfig { estimation: ErrorEstimation::Exact, ..Default::default() };
        let mut good = 0;
        for t in 0..100u64 {
            let x = k_sparse(64, 8, &mut rng);
            let mat = codec.material(&mut src, t);
            let y = codec.measure(&x, &mat).unwrap();
            let ok = codec.decode_with(&y, None, &mat, &cfg).map(|d| prd(&x, &d.x_hat).unwrap() < 0.1).unwrap_or(false);
            good += ok as usize;
        }
        pass &= good >= 95;
        parts.push(format!("{} {good}/100", scheme.as_str()));
    }
    outcome(pass, format!("PRD < 0.1 with K=8 N=64 M=32 L=48: {}", parts.join(", ")))
}

fn c3_capacity(recs: &[EcgRecord]) -> Outcome {
    let (l, m) = (150, 96);
    let rho = error_capacity(l, m, 6.0);
    let blocks: Vec<Vec<f64>> = recs.iter().flat_map(|r| r.blocks(256).into_iter().take(20)).collect();
    let cfg = DecodeConfig { estimation: ErrorEstimation::Exact, ..Default::default() };
    let mut parts = Vec::new();
    let mut pass = rho == 9;
    for scheme in [Scheme::Encrust, Scheme::LEncrust] {
        let codec = Codec::new(CodecParams::new(scheme, 256, m, l, 15), 0xFFFF).unwrap();
        let mut src = MaterialSource::new(&KEY).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
        let (mut support_ok, mut prd_ok) = (0, 0);
        for (t, x) in blocks.iter().enumerate() {
            let mat = codec.material(&mut src, t as u64);
            let y = codec.measure(x, &mat).unwrap();
            let ymax = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let planted: BTreeSet<usize> = sample(&mut rng, l, rho).into_iter().collect();
            let mut yr = y.clone();
            for &i in &planted {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                yr[i] += sign * rng.gen_range(0.25..1.0) * ymax;
            }
            let clean = codec.decode_with(&y, None, &mat, &cfg).unwrap();
            let Ok(d) = codec.decode_with(&yr, None, &mat, &cfg) else { continue };
            let found: BTreeSet<usize> = (0..l).filter(|&i| d.e_hat[i].abs() > cfg.support_threshold * ymax).collect();
            if found == planted {
                support_ok += 1;
                let (p_err, p_clean) = (prd(x, &d.x_hat).unwrap(), prd(x, &clean.x_hat).unwrap());
                prd_ok += (p_err <= 2.0 * p_clean + 1e-6) as usize;
            }
        }
        pass &= support_ok >= 90 && prd_ok >= 90;
        parts.push(format!("{} support {support_ok}/{} prd {prd_ok}/{}", scheme.as_str(), blocks.len(), blocks.len()));
    }
    outcome(pass, format!("rho0={rho} at (150,96): {}", parts.join(", ")))
}

fn c4_coherence() -> Outcome {
    let mut spec = ExperimentSpec::new(Experiment::CoherenceSweep, Vec::new(), SEED);
    spec.d_grid = (10..=15).collect();
    let rows = bench::run(&spec).unwrap();
    let mu = |scheme: &str| -> Vec<f64> { rows.iter().filter(|r| r.scheme == scheme).filter_map(|r| r.extra_f64("mu")).collect() };
    let (sparse, gauss) = (mu("sparse"), mu("gaussian"));
    let lo = sparse.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sparse.iter().copied().fold(0.0, f64::max);
    let (glo, ghi) = (gauss.iter().copied().fold(f64::INFINITY, f64::min), gauss.iter().copied().fold(0.0, f64::max));
    let in_band = lo >= 0.20 - 0.05 && hi <= 0.35 + 0.05;
    let overlaps = lo <= GAUSSIAN_MU_BAND.1 + 0.05 && hi >= GAUSSIAN_MU_BAND.0 - 0.05;
    outcome(
        in_band && overlaps,
        format!("sparse d=10..15 mu [{lo:.3}, {hi:.3}]; seeded Gaussian draws [{glo:.3}, {ghi:.3}]; reference band [0.24, 0.32]"),
    )
}

fn c5_bit_budgets(recs: &[EcgRecord]) -> Outcome {
    let x = &recs[0].blocks(256)[0];
    let plan = HaarPlan::default();
    let (coeffs, _) = haar_compress(x, &plan).unwrap();
    let compressed = words_to_bits(&coeffs.q).len();
    let (coded, _) = soa_encode(x, &plan, &[7; 16], 1).unwrap();
    let codec = Codec::new(CodecParams::new(Scheme::LEncrust, 256, 96, 168, 15), 0xFFFF).unwrap();
    let mat = codec.material(&mut MaterialSource::new(&KEY).unwrap(), 0);
    let (q, _) = quantize16(&codec.measure(x, &mat).unwrap()).unwrap();
    let payload = words_to_bits(&q).len();
    outcome(
        compressed == 1536 && plan.compressed_bits() == 1536 && coded.bits.len() == 2688 && payload == 2688,
        format!("SoA compressed {compressed}, FEC {}; L-ENCRUST L=168 payload {payload}", coded.bits.len()),
    )
}

fn efficiency(rows: &[ResultRow], scheme: &str, snr: f64) -> f64 {
    rows.iter()
        .find(|r| r.scheme == scheme && r.snr_db == Some(snr))
        .and_then(|r| r.tx_efficiency_pct)
        .unwrap_or(f64::NAN)
}

fn c6_tx_efficiency(recs: &[EcgRecord]) -> Outcome {
    let mut spec = ExperimentSpec::new(Experiment::TxEfficiency, recs.to_vec(), SEED);
    spec.scheme_set = vec![SchemeTag::LEncrust];
    spec.snr_grid = vec![-1.0, 0.0, 1.0];
    let mut rows = bench::run(&spec).unwrap();
    spec.scheme_set = vec![SchemeTag::Soa];
    spec.snr_grid = vec![-1.0, 0.0, 1.0, 2.0, 3.0, 4.0];
    rows.extend(bench::run(&spec).unwrap());
    let le = |s| efficiency(&rows, "l_encrust", s);
    let soa = |s| efficiency(&rows, "soa", s);
    let soa_first_99 = spec.snr_grid.iter().copied().find(|&s| soa(s) >= 99.0);
    let pass = le(-1.0) >= 85.0 && soa(-1.0) < 10.0 && le(1.0) == 100.0 && soa_first_99.map_or(true, |s| s >= 4.0);
    let soa_line: Vec<String> = spec.snr_grid.iter().map(|&s| format!("{s}:{:.0}", soa(s))).collect();
    outcome(
        pass,
        format!(
            "L-ENCRUST (168,96) -1:{:.0}% 0:{:.0}% 1:{:.0}%; SoA {}%",
            le(-1.0),
            le(0.0),
            le(1.0),
            soa_line.join(" ")
        ),
    )
}

fn c7_prd_vs_snr(recs: &[EcgRecord]) -> Outcome {
    let mut spec = ExperimentSpec::new(Experiment::PrdVsSnr, recs.to_vec(), SEED);
    spec.snr_grid.retain(|&s| s <= 0.0);
    let rows = bench::run(&spec).unwrap();
    let mean = |scheme: &str, snr: f64| {
        let v: Vec<f64> = rows.iter().filter(|r| r.scheme == scheme && r.snr_db == Some(snr)).filter_map(|r| r.prd).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for &s in &spec.snr_grid {
        let (le, soa) = (mean("l_encrust", s), mean("soa", s));
        pass &= le < soa;
        parts.push(format!("{s} dB {le:.2} vs {soa:.2}"));
    }
    outcome(pass, format!("mean PRD L-ENCRUST vs SoA: {}", parts.join("; ")))
}

fn c8_quantization(recs: &[EcgRecord]) -> Outcome {
    let mut spec = ExperimentSpec::new(Experiment::QuantizationSweep, recs.to_vec(), SEED);
    spec.scheme_set = vec![SchemeTag::LEncrust];
    let rows = bench::run(&spec).unwrap();
    let curve: Vec<(usize, f64)> = spec
        .m_grid
        .iter()
        .map(|&m| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.m == m && r.extra.get("quantized").map(String::as_str) == Some("1"))
                .filter_map(|r| r.prd)
                .collect();
            (m, v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    let argmin = curve.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).map(|(i, _)| i).unwrap();
    let interior = argmin > 0 && argmin + 1 < curve.len();
    let shown: Vec<String> = curve.iter().map(|(m, p)| format!("{m}:{p:.3}")).collect();
    outcome(interior, format!("quantized PRD over M (L=168): {}; minimum at M={}", shown.join(" "), curve[argmin].0))
}

fn c9_attacks(recs: &[EcgRecord]) -> Outcome {
    let spec = ExperimentSpec::new(Experiment::AttackKpa, recs.to_vec(), SEED);
    let rows = bench::run(&spec).unwrap();
    let mut kpa_ok = true;
    let mut kpa = Vec::new();
    for r in &rows {
        let (g, e) = (r.extra_f64("mask_gain").unwrap(), r.extra_f64("relative_error").unwrap());
        kpa_ok &= if g == 0.0 { r.prd.unwrap() < 1.0 } else { e > 1.0 };
        kpa.push(format!("{g}:{e:.2e}"));
    }
    let spec = ExperimentSpec::new(Experiment::AttackKnownMatrices, recs.to_vec(), SEED);
    let rows = bench::run(&spec).unwrap();
    let arm = |a: &str| -> Vec<f64> {
        rows.iter().filter(|r| r.extra.get("arm").map(String::as_str) == Some(a)).filter_map(|r| r.prd).collect()
    };
    let (adv, ctl) = (arm("adversary"), arm("control"));
    let range = |v: &[f64]| (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(0.0, f64::max));
    let ((alo, ahi), (clo, chi)) = (range(&adv), range(&ctl));
    let km_ok = adv.len() == 100 && alo > 100.0 && ctl.len() == 100 && chi < 1.0;
    outcome(
        kpa_ok && km_ok,
        format!(
            "KPA relative error by mask gain {}; known-matrices adversary PRD [{alo:.0}, {ahi:.0}] (reference 262 to 731), control [{clo:.2}, {chi:.2}]",
            kpa.join(" ")
        ),
    )
}

fn run_cli(args: &[&str]) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_encrust")).args(args).output().expect("run encrust");
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn c10_determinism(recs: &[EcgRecord]) -> Outcome {
    let dir = std::env::temp_dir().join(format!("encrust-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let samples: String = recs[0].samples[..1024].iter().map(|v| format!("{v}\n")).collect();
    std::fs::write(p("in.txt"), samples).unwrap();
    let key = hex_key();
    let data = data_dir().to_string_lossy().into_owned();
    let invocations: Vec<(Vec<String>, Option<String>)> = vec![
        (argv(&["encode", "--in", &p("in.txt"), "--out", &p("out.enc"), "--key", &key]), Some(p("out.enc"))),
        (argv(&["decode", "--in", &p("out.enc"), "--out", &p("dec.txt"), "--key", &key, "--reference", &p("in.txt")]), Some(p("dec.txt"))),
        (argv(&["simulate", "--scheme", "l_encrust", "--in", &p("in.txt"), "--snr", "-1", "--seed", "5", "--key", &key, "--L", "168", "--out-csv", &p("sim.csv")]), Some(p("sim.csv"))),
        (argv(&["simulate", "--scheme", "soa", "--in", &p("in.txt"), "--snr", "2", "--seed", "5", "--key", &key, "--out-csv", &p("soa.csv")]), Some(p("soa.csv"))),
        (argv(&["bench", "--experiment", "coherence_sweep", "--trials", "3", "--seed", "9", "--out-csv", &p("coh.csv")]), Some(p("coh.csv"))),
        (argv(&["bench", "--experiment", "tx_efficiency", "--trials", "2", "--seed", "9", "--data-dir", &data, "--out-csv", &p("eff.csv")]), Some(p("eff.csv"))),
        (argv(&["attack", "--kind", "kpa", "--seed", "9", "--data-dir", &data, "--out-csv", &p("kpa.csv")]), Some(p("kpa.csv"))),
        (argv(&["attack", "--kind", "known-matrices", "--blocks", "3", "--seed", "9", "--data-dir", &data, "--out-csv", &p("km.csv")]), Some(p("km.csv"))),
        (argv(&["matrix-dump", "--kind", "sparse", "--rows", "12", "--cols", "32", "--d", "3"]), None),
        (argv(&["matrix-dump", "--kind", "binary", "--rows", "8", "--cols", "16", "--key", &key, "--block", "2"]), None),
    ];
    let mut mismatched = Vec::new();
    for (args, file) in &invocations {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let mut runs = Vec::new();
        for _ in 0..2 {
            let (code, stdout) = run_cli(&refs);
            let bytes = file.as_ref().map(|f| std::fs::read(f).unwrap_or_default()).unwrap_or_default();
            runs.push((code, stdout, bytes));
        }
        if runs[0] != runs[1] || runs[0].0 != 0 {
            mismatched.push(format!("{} (exit {})", args[0], runs[0].0));
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    outcome(
        mismatched.is_empty(),
        format!("{} invocations run twice; differing or failing: {}", invocations.len(), if mismatched.is_empty() { "none".into() } else { mismatched.join(", ") }),
    )
}

fn argv(a: &[&str]) -> Vec<String> {
    a.iter().map(|s| s.to_string()).collect()
}

fn hex_key() -> String {
    KEY.iter().map(|b| format!("{b:02x}")).collect()
}

fn main() {
    let recs = records();
    let recs = &recs;
    type Check<'a> = (u32, &'a str, Box<dyn Fn() -> Outcome + Send + Sync + 'a>);
    let checks: Vec<Check> = vec![
        (1, "projection identity", Box::new(c1_projection)),
        (2, "noiseless round trip", Box::new(c2_noiseless)),
        (3, "error-recovery capacity", Box::new(move || c3_capacity(recs))),
        (4, "mutual coherence band", Box::new(c4_coherence)),
        (5, "bit budgets", Box::new(move || c5_bit_budgets(recs))),
        (6, "transmission-efficiency ordering", Box::new(move || c6_tx_efficiency(recs))),
        (7, "PRD-vs-SNR ordering", Box::new(move || c7_prd_vs_snr(recs))),
        (8, "quantization non-monotonicity", Box::new(move || c8_quantization(recs))),
        (9, "attack resistance", Box::new(move || c9_attacks(recs))),
        (10, "determinism", Box::new(move || c10_determinism(recs))),
    ];
    let results: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = checks.iter().map(|(_, _, f)| s.spawn(|| f())).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| outcome(false, "panicked".into())))
            .collect()
    });
    let mut failed = 0;
    for ((n, name, _), r) in checks.iter().zip(&results) {
        println!("criterion {n} {name}: {} ({})", if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += !r.pass as usize;
    }
    println!("criterion 11 hardware footprint, time and energy: NOT REPRODUCIBLE (declared; needs the sensor node)");
    println!("acceptance: {} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
