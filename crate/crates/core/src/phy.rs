//! Simulated IEEE 802.15.4 link: framing, chip mapping, OQPSK over AWGN and
//! the retransmit-on-header-error rule.

use crc::{Crc, CRC_16_KERMIT};
use nalgebra::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::baseline::{pack_bits, unpack_bits};
use crate::error::{Error, Result};

pub type Symbol = Complex<f64>;

pub const MAX_PAYLOAD_BYTES: usize = 102;
pub const HEADER_BYTES: usize = 6;
pub const DEFAULT_MAX_RETRANSMISSIONS: usize = 10;

const HEADER_CRC: Crc<u16> = Crc::<u16>::new(&CRC_16_KERMIT);

/// 2.4 GHz O-QPSK symbol-to-chip table, chip 0 in the most significant bit.
pub const DSSS_CHIPS: [u32; 16] = build_chip_table();

const fn build_chip_table() -> [u32; 16] {
    let s0: u32 = 0b1101_1001_1100_0011_0101_0010_0010_1110;
    let mut t = [0u32; 16];
    let mut k = 0;
    while k < 8 {
        t[k] = s0.rotate_right(4 * k as u32);
        // Odd-indexed chips sit on the even bit positions counted from the LSB.
        t[k + 8] = t[k] ^ 0x5555_5555;
        k += 1;
    }
    t
}

/// How payload bits become chips before pulse repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChipMap {
    /// Each bit is one chip.
    Direct,
    /// Each 4-bit nibble (first bit most significant) selects a 32-chip sequence.
    Dsss,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub snr_db: f64,
    pub spreading_factor: usize,
    pub rng_seed: u64,
    pub max_retransmissions: usize,
    pub chip_map: ChipMap,
}

impl ChannelConfig {
    pub fn new(snr_db: f64, rng_seed: u64) -> Self {
        Self {
            snr_db,
            spreading_factor: 2,
            rng_seed,
            max_retransmissions: DEFAULT_MAX_RETRANSMISSIONS,
            chip_map: ChipMap::Dsss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub header: [u8; HEADER_BYTES],
    pub payload: Vec<u8>,
    pub seq: u16,
}

/// Header layout: seq (u16 BE), payload length, pad bits, CRC-16 over the
/// first four bytes (BE).
pub fn make_header(seq: u16, len: u8, pad: u8) -> [u8; HEADER_BYTES] {
    let mut h = [0u8; HEADER_BYTES];
    h[..2].copy_from_slice(&seq.to_be_bytes());
    h[2] = len;
    h[3] = pad;
    let crc = HEADER_CRC.checksum(&h[..4]);
    h[4..].copy_from_slice(&crc.to_be_bytes());
    h
}

pub fn header_ok(h: &[u8; HEADER_BYTES]) -> bool {
    HEADER_CRC.checksum(&h[..4]).to_be_bytes() == h[4..]
}

pub fn packetize(bits: &[u8]) -> Vec<Frame> {
    let pad = ((8 - bits.len() % 8) % 8) as u8;
    let bytes = pack_bits(bits);
    let n = bytes.chunks(MAX_PAYLOAD_BYTES).count();
    bytes
        .chunks(MAX_PAYLOAD_BYTES)
        .enumerate()
        .map(|(i, chunk)| {
            let seq = i as u16;
            let p = if i + 1 == n { pad } else { 0 };
            Frame { header: make_header(seq, chunk.len() as u8, p), payload: chunk.to_vec(), seq }
        })
        .collect()
}

pub fn depacketize(frames: &[Frame]) -> Vec<u8> {
    let mut bits = Vec::new();
    for f in frames {
        let pad = f.header[3] as usize;
        bits.extend(unpack_bits(&f.payload, (f.payload.len() * 8).saturating_sub(pad)));
    }
    bits
}

/// Chips to OQPSK symbols: even chips on I, odd chips on Q, each rail at
/// ±1/√2. An odd chip count is padded with a zero chip.
pub fn modulate_chips(chips: &[u8]) -> Vec<Symbol> {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let lvl = |c: u8| if c & 1 == 1 { a } else { -a };
    chips.chunks(2).map(|p| Symbol::new(lvl(p[0]), lvl(*p.get(1).unwrap_or(&0)))).collect()
}

/// Coherent hard decisions, one chip per rail.
pub fn demodulate_chips(symbols: &[Symbol]) -> Vec<u8> {
    symbols.iter().flat_map(|s| [(s.re > 0.0) as u8, (s.im > 0.0) as u8]).collect()
}

/// Repeat each bit `spreading_factor` times and map to OQPSK.
pub fn modulate(bits: &[u8], spreading_factor: usize) -> Vec<Symbol> {
    modulate_chips(&repeat(bits, spreading_factor.max(1)))
}

/// Hard chip decisions followed by a majority vote per bit; a tie takes the
/// first chip's decision.
pub fn demodulate(symbols: &[Symbol], spreading_factor: usize) -> Vec<u8> {
    majority(&demodulate_chips(symbols), spreading_factor.max(1))
}

fn repeat(chips: &[u8], sf: usize) -> Vec<u8> {
    chips.iter().flat_map(|&c| std::iter::repeat(c).take(sf)).collect()
}

fn majority(samples: &[u8], sf: usize) -> Vec<u8> {
    samples
        .chunks_exact(sf)
        .map(|g| {
            let ones = g.iter().filter(|&&c| c == 1).count();
            match (2 * ones).cmp(&sf) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => 0,
                std::cmp::Ordering::Equal => g[0],
            }
        })
        .collect()
}

/// Nibbles to 32-chip sequences. Input length must be a multiple of 4.
pub fn dsss_spread(bits: &[u8]) -> Result<Vec<u8>> {
    if bits.len() % 4 != 0 {
        return Err(Error::Param(format!("{} bits is not a whole number of nibbles", bits.len())));
    }
    Ok(bits
        .chunks(4)
        .flat_map(|n| {
            let sym = n.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
            (0..32).rev().map(move |k| ((DSSS_CHIPS[sym] >> k) & 1) as u8)
        })
        .collect())
}

/// Minimum Hamming distance despreading; ties go to the lower symbol.
pub fn dsss_despread(chips: &[u8]) -> Vec<u8> {
    chips
        .chunks_exact(32)
        .flat_map(|c| {
            let word = c.iter().fold(0u32, |acc, &b| (acc << 1) | (b & 1) as u32);
            let sym = (0..16).min_by_key(|&s| ((DSSS_CHIPS[s] ^ word).count_ones(), s)).unwrap_or(0);
            (0..4).rev().map(move |k| ((sym >> k) & 1) as u8)
        })
        .collect()
}

pub fn add_awgn(symbols: &[Symbol], snr_db: f64, rng_seed: u64) -> Vec<Symbol> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    add_awgn_with(symbols, snr_db, &mut rng)
}

/// Per-dimension noise variance Es/(2·snr) with Es = 1.
pub fn add_awgn_with(symbols: &[Symbol], snr_db: f64, rng: &mut ChaCha8Rng) -> Vec<Symbol> {
    let sigma = (0.5 / 10f64.powf(snr_db / 10.0)).sqrt();
    symbols
        .iter()
        .map(|s| {
            let nr: f64 = StandardNormal.sample(rng);
            let ni: f64 = StandardNormal.sample(rng);
            s + Symbol::new(sigma * nr, sigma * ni)
        })
        .collect()
}

/// Bits through chip mapping, modulation, noise and detection.
pub fn channel_pass(bits: &[u8], cfg: &ChannelConfig, rng: &mut ChaCha8Rng) -> Result<Vec<u8>> {
    let sf = cfg.spreading_factor.max(1);
    let chips = match cfg.chip_map {
        ChipMap::Direct => bits.to_vec(),
        ChipMap::Dsss => dsss_spread(bits)?,
    };
    let samples = repeat(&chips, sf);
    let rx = add_awgn_with(&modulate_chips(&samples), cfg.snr_db, rng);
    let mut hard = demodulate_chips(&rx);
    hard.truncate(samples.len());
    let chips_rx = majority(&hard, sf);
    Ok(match cfg.chip_map {
        ChipMap::Direct => chips_rx,
        ChipMap::Dsss => dsss_despread(&chips_rx),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TransmissionReport {
    pub delivered_bits: Vec<u8>,
    pub frames_sent: usize,
    pub retransmissions: usize,
    pub header_failures: usize,
    pub payload_bit_errors: usize,
}

/// Frame-by-frame delivery. A frame is resent only when its header fails the
/// checksum; payload errors are delivered as received.
pub fn transmit(bits: &[u8], cfg: &ChannelConfig) -> Result<TransmissionReport> {
    if !(cfg.snr_db.is_finite()) || cfg.spreading_factor == 0 {
        return Err(Error::Param("snr must be finite and spreading factor ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut report = TransmissionReport::default();
    let mut delivered = Vec::new();
    for frame in packetize(bits) {
        let mut tx = unpack_bits(&frame.header, HEADER_BYTES * 8);
        tx.extend(unpack_bits(&frame.payload, frame.payload.len() * 8));
        let mut attempts = 0;
        loop {
            report.frames_sent += 1;
            let rx = pack_bits(&channel_pass(&tx, cfg, &mut rng)?);
            let mut header = [0u8; HEADER_BYTES];
            header.copy_from_slice(&rx[..HEADER_BYTES]);
            if header_ok(&header) {
                let payload = rx[HEADER_BYTES..].to_vec();
                report.payload_bit_errors +=
                    payload.iter().zip(&frame.payload).map(|(a, b)| (a ^ b).count_ones() as usize).sum::<usize>();
                delivered.push(Frame { header, payload, seq: frame.seq });
                break;
            }
            report.header_failures += 1;
            if attempts == cfg.max_retransmissions {
                return Err(Error::TransmissionFailed(frame.seq as usize));
            }
            attempts += 1;
            report.retransmissions += 1;
        }
    }
    report.delivered_bits = depacketize(&delivered);
    report.delivered_bits.resize(bits.len(), 0);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rand_bits(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(0..2u8)).collect()
    }

    // Gaussian upper tail by Simpson integration of the density.
    fn q(x: f64) -> f64 {
        let n = 200_000;
        let upper = x + 12.0;
        let h = (upper - x) / n as f64;
        let f = |t: f64| (-0.5 * t * t).exp();
        let mut s = f(x) + f(upper);
        for i in 1..n {
            s += f(x + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn chip_table_matches_standard() {
        assert_eq!(DSSS_CHIPS[0], 0b1101_1001_1100_0011_0101_0010_0010_1110);
        assert_eq!(DSSS_CHIPS[1], 0b1110_1101_1001_1100_0011_0101_0010_0010);
        assert_eq!(DSSS_CHIPS[8], 0b1000_1100_1001_0110_0000_0111_0111_1011);
        let mut dmin = 32;
        for a in 0..16 {
            for b in 0..a {
                dmin = dmin.min((DSSS_CHIPS[a] ^ DSSS_CHIPS[b]).count_ones());
            }
        }
        assert_eq!(dmin, 12);
    }

    #[test]
    fn packetize_budget_and_round_trip() {
        let bits = rand_bits(2688, 1);
        let frames = packetize(&bits);
        let lens: Vec<usize> = frames.iter().map(|f| f.payload.len()).collect();
        assert_eq!(lens, vec![102, 102, 102, 30]);
        assert!(frames.iter().enumerate().all(|(i, f)| f.seq as usize == i && header_ok(&f.header)));
        assert_eq!(depacketize(&frames), bits);
        assert!(packetize(&[]).is_empty());
        let odd = rand_bits(13, 2);
        assert_eq!(depacketize(&packetize(&odd)), odd);
    }

    #[test]
    fn header_checksum_detects_flips() {
        let h = make_header(3, 102, 0);
        for byte in 0..HEADER_BYTES {
            for bit in 0..8 {
                let mut g = h;
                g[byte] ^= 1 << bit;
                assert!(!header_ok(&g));
            }
        }
    }

    #[test]
    fn modulation_shapes() {
        let s = modulate(&[0; 8], 2);
        assert_eq!(s.len(), 8);
        assert!(s.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        let bits = rand_bits(1000, 3);
        assert_eq!(demodulate(&modulate(&bits, 2), 2), bits);
        assert_eq!(demodulate(&modulate(&bits, 3), 3)[..1000], bits[..]);
    }

    #[test]
    fn tie_goes_to_first_chip() {
        assert_eq!(majority(&[1, 0, 0, 1, 1, 1, 0, 0], 2), vec![1, 0, 1, 0]);
    }

    #[test]
    fn dsss_round_trip_and_correction() {
        let bits = rand_bits(400, 4);
        let mut chips = dsss_spread(&bits).unwrap();
        assert_eq!(dsss_despread(&chips), bits);
        // Five chip errors per symbol stay within the decoding radius.
        for s in chips.chunks_mut(32) {
            for k in [0, 7, 13, 22, 31] {
                s[k] ^= 1;
            }
        }
        assert_eq!(dsss_despread(&chips), bits);
        assert!(dsss_spread(&[1, 0, 1]).is_err());
    }

    #[test]
    fn awgn_high_snr_and_determinism() {
        let s = modulate(&rand_bits(1000, 5), 2);
        let r = add_awgn(&s, 100.0, 9);
        assert!(s.iter().zip(&r).all(|(a, b)| (a - b).norm() < 1e-4));
        assert_eq!(add_awgn(&s, 0.0, 9), add_awgn(&s, 0.0, 9));
        assert_ne!(add_awgn(&s, 0.0, 9), add_awgn(&s, 0.0, 10));
    }

    #[test]
    fn awgn_empirical_snr() {
        let s = modulate(&rand_bits(200_000, 6), 1);
        for snr_db in [-3.0, 0.0, 7.0] {
            let r = add_awgn(&s, snr_db, 11);
            let noise: f64 = s.iter().zip(&r).map(|(a, b)| (b - a).norm_sqr()).sum::<f64>() / s.len() as f64;
            let sig: f64 = s.iter().map(|z| z.norm_sqr()).sum::<f64>() / s.len() as f64;
            let est = 10.0 * (sig / noise).log10();
            assert!((est - snr_db).abs() < 0.2, "{est} vs {snr_db}");
        }
    }

    #[test]
    fn direct_ber_matches_first_chip_rule() {
        // With ties resolved by the first chip, the SF=2 decision equals the
        // first chip's, so the bit error rate is Q(sqrt(snr)).
        let cfg = ChannelConfig { chip_map: ChipMap::Direct, ..ChannelConfig::new(0.0, 21) };
        let bits = rand_bits(1_000_000, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rx = channel_pass(&bits, &cfg, &mut rng).unwrap();
        let ber = bits.iter().zip(&rx).filter(|(a, b)| a != b).count() as f64 / bits.len() as f64;
        let expect = q(1.0);
        assert!((expect - 0.158_655).abs() < 1e-4);
        assert!((ber - expect).abs() < 0.2 * expect, "{ber} vs {expect}");
    }

    #[test]
    fn dsss_symbol_error_rate() {
        // Reference rates from an independent Monte Carlo of the same
        // detector (2e5 symbols per point).
        for (snr, reference) in [(-1.0, 0.032), (0.0, 0.013), (1.0, 0.0042)] {
            let cfg = ChannelConfig::new(snr, 5);
            let bits = rand_bits(4 * 100_000, 8);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let rx = channel_pass(&bits, &cfg, &mut rng).unwrap();
            let errs = bits.chunks(4).zip(rx.chunks(4)).filter(|(a, b)| a != b).count();
            let ser = errs as f64 / 100_000.0;
            assert!((ser - reference).abs() < 0.2 * reference, "{snr} dB: {ser}");
        }
    }

    #[test]
    fn corrupted_sample_count_binomial() {
        // 150 samples of 16 bits through the direct map at 0 dB.
        let cfg = ChannelConfig { chip_map: ChipMap::Direct, ..ChannelConfig::new(0.0, 3) };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let blocks = 200;
        let mut total = 0usize;
        for b in 0..blocks {
            let bits = rand_bits(150 * 16, 100 + b);
            let rx = channel_pass(&bits, &cfg, &mut rng).unwrap();
            total += bits.chunks(16).zip(rx.chunks(16)).filter(|(a, b)| a != b).count();
        }
        let mean = total as f64 / blocks as f64;
        let expect = 150.0 * (1.0 - (1.0 - q(1.0)).powi(16));
        assert!((mean - expect).abs() < 0.05 * expect, "{mean} vs {expect}");
    }

    #[test]
    fn transmit_extremes() {
        let bits = rand_bits(2688, 12);
        let r = transmit(&bits, &ChannelConfig::new(100.0, 1)).unwrap();
        assert_eq!(r.delivered_bits, bits);
        assert_eq!((r.frames_sent, r.retransmissions, r.header_failures, r.payload_bit_errors), (4, 0, 0, 0));
        assert!(matches!(transmit(&bits, &ChannelConfig::new(-30.0, 1)), Err(Error::TransmissionFailed(0))));
        assert!(transmit(&[], &ChannelConfig::new(0.0, 1)).unwrap().delivered_bits.is_empty());
    }

    #[test]
    fn transmit_accounting_and_determinism() {
        let bits = rand_bits(2688, 13);
        let cfg = ChannelConfig::new(-1.0, 77);
        let a = transmit(&bits, &cfg).unwrap();
        assert_eq!(a, transmit(&bits, &cfg).unwrap());
        assert_eq!(a.frames_sent, 4 + a.retransmissions);
        assert_eq!(a.header_failures, a.retransmissions);
        let diff = bits.iter().zip(&a.delivered_bits).filter(|(x, y)| x != y).count();
        assert_eq!(diff, a.payload_bit_errors);
    }

    #[test]
    fn payload_errors_fall_with_snr() {
        let bits = rand_bits(2688, 14);
        let mean = |snr: f64| {
            (0..20).map(|s| transmit(&bits, &ChannelConfig::new(snr, s)).unwrap().payload_bit_errors).sum::<usize>()
        };
        let v: Vec<usize> = [-2.0, 0.0, 2.0, 4.0].iter().map(|&s| mean(s)).collect();
        assert!(v.windows(2).all(|w| w[0] >= w[1]), "{v:?}");
    }
}
