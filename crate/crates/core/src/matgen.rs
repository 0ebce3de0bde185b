//! Sensing, error-recovery and augmented matrices.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::prng::{fold_index, Lfsr16, FP_DEFAULT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Binary,
    Sparse,
    Augmented,
    Projection,
    Product,
    Dense,
}

impl MatrixKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MatrixKind::Binary => "binary",
            MatrixKind::Sparse => "sparse",
            MatrixKind::Augmented => "augmented",
            MatrixKind::Projection => "projection",
            MatrixKind::Product => "product",
            MatrixKind::Dense => "dense",
        }
    }
}

/// A real matrix tagged with how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    pub kind: MatrixKind,
    pub data: DMatrix<f64>,
}

impl SensingMatrix {
    pub fn new(kind: MatrixKind, data: DMatrix<f64>) -> Self {
        Self { kind, data }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    /// Nonzero `(column, value)` pairs of row `i`.
    pub fn row_entries(&self, i: usize) -> Vec<(usize, f64)> {
        (0..self.cols())
            .filter_map(|j| {
                let v = self.data[(i, j)];
                (v != 0.0).then_some((j, v))
            })
            .collect()
    }

    pub fn product(&self, rhs: &SensingMatrix) -> Result<SensingMatrix> {
        if self.cols() != rhs.rows() {
            return Err(Error::Shape(format!(
                "{}x{} times {}x{}",
                self.rows(),
                self.cols(),
                rhs.rows(),
                rhs.cols()
            )));
        }
        Ok(SensingMatrix::new(MatrixKind::Product, &self.data * &rhs.data))
    }

    /// Plain-text dump: `rows cols kind`, then one line per row. Sparse
    /// matrices list `(col:weight)` pairs, everything else is dense.
    pub fn dump(&self) -> String {
        let mut s = format!("{} {} {}\n", self.rows(), self.cols(), self.kind.as_str());
        for i in 0..self.rows() {
            let line: Vec<String> = if self.kind == MatrixKind::Sparse {
                self.row_entries(i)
                    .into_iter()
                    .map(|(j, v)| format!("({}:{})", j, v as i64))
                    .collect()
            } else {
                self.data.row(i).iter().map(|v| fmt_num(*v)).collect()
            };
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:e}")
    }
}

/// Parameters of the sparse construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparseConfig {
    pub iv: u16,
    pub fp: u16,
    pub shift_bits: u32,
    pub lsb_mask: u16,
    /// Draws per row.
    pub d: usize,
}

impl Default for SparseConfig {
    fn default() -> Self {
        Self { iv: 0xFFFF, fp: FP_DEFAULT, shift_bits: 8, lsb_mask: 0x00FF, d: 15 }
    }
}

impl SparseConfig {
    pub fn with_d(d: usize) -> Self {
        Self { d, ..Self::default() }
    }
}

/// Sparse matrix with `d` signed unit draws per row.
///
/// One register runs across all rows. Each draw adds -1 (MSB set) or +1 to
/// column `index mod cols`; repeated columns accumulate.
pub fn build_sparse_matrix(cfg: &SparseConfig, rows: usize, cols: usize) -> Result<SensingMatrix> {
    if cfg.d == 0 || rows == 0 || cols == 0 {
        return Err(Error::Param("d, rows and cols must be positive".into()));
    }
    let mut lfsr = Lfsr16::new(cfg.fp, cfg.iv)?;
    let mut m = DMatrix::<f64>::zeros(rows, cols);
    for i in 0..rows {
        for _ in 0..cfg.d {
            let st = lfsr.step_alg1();
            let j = fold_index(st.j_source, cfg.shift_bits, cfg.lsb_mask) % cols;
            m[(i, j)] += if st.msb { -1.0 } else { 1.0 };
        }
    }
    Ok(SensingMatrix::new(MatrixKind::Sparse, m))
}

/// Binary ±1 matrix with one row per seed; the register restarts from
/// `ivs[i]` at row `i`.
pub fn build_binary_matrix(ivs: &[u16], fp: u16, cols: usize) -> Result<SensingMatrix> {
    let mut m = DMatrix::<f64>::zeros(ivs.len(), cols);
    for (i, &iv) in ivs.iter().enumerate() {
        let mut lfsr = Lfsr16::new(fp, iv)?;
        for j in 0..cols {
            m[(i, j)] = if lfsr.step_galois() { 1.0 } else { -1.0 };
        }
    }
    Ok(SensingMatrix::new(MatrixKind::Binary, m))
}

/// `[r | A]`.
pub fn augment_error_matrix(a: &SensingMatrix, r: &[f64]) -> Result<SensingMatrix> {
    if r.len() != a.rows() {
        return Err(Error::Shape(format!("mask length {} for {} rows", r.len(), a.rows())));
    }
    let mut m = DMatrix::<f64>::zeros(a.rows(), a.cols() + 1);
    m.set_column(0, &DVector::from_column_slice(r));
    m.columns_mut(1, a.cols()).copy_from(&a.data);
    Ok(SensingMatrix::new(MatrixKind::Augmented, m))
}

/// `[[1, 0], [0, B]]`.
pub fn augment_compression_matrix(b: &SensingMatrix) -> SensingMatrix {
    let mut m = DMatrix::<f64>::zeros(b.rows() + 1, b.cols() + 1);
    m[(0, 0)] = 1.0;
    m.view_mut((1, 1), (b.rows(), b.cols())).copy_from(&b.data);
    SensingMatrix::new(MatrixKind::Augmented, m)
}

/// Gaussian-matrix coherence band used as the reference for sparse designs.
pub const GAUSSIAN_MU_BAND: (f64, f64) = (0.24, 0.32);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceReport {
    pub mu: f64,
    pub d: Option<usize>,
    pub reference_range: (f64, f64),
}

/// Largest normalized inner product between a column of `phi` and a column
/// of `psi`.
pub fn mutual_coherence(phi: &DMatrix<f64>, psi: &DMatrix<f64>) -> Result<f64> {
    if phi.nrows() != psi.nrows() {
        return Err(Error::Shape(format!("Phi has {} rows, Psi has {}", phi.nrows(), psi.nrows())));
    }
    let norm_cols = |m: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let mut out = m.clone();
        for (j, mut c) in out.column_iter_mut().enumerate() {
            let n = c.norm();
            if n == 0.0 {
                return Err(Error::ZeroColumn(j));
            }
            c /= n;
        }
        Ok(out)
    };
    let g = norm_cols(phi)?.transpose() * norm_cols(psi)?;
    Ok(g.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
}

/// Coherence of a measurement matrix `B` (M x N) against `Psi` (N x N):
/// rows of `B` are compared with columns of `Psi`.
pub fn coherence_report(b: &SensingMatrix, psi: &DMatrix<f64>, d: Option<usize>) -> Result<CoherenceReport> {
    let mu = mutual_coherence(&b.data.transpose(), psi)?;
    Ok(CoherenceReport { mu, d, reference_range: GAUSSIAN_MU_BAND })
}

/// Numerical rank equals the column count, with the threshold
/// `max(rows, cols) * eps * sigma_max`.
pub fn is_full_rank(a: &DMatrix<f64>) -> bool {
    if a.nrows() < a.ncols() || a.ncols() == 0 {
        return false;
    }
    numerical_rank(a) == a.ncols()
}

pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let sv = a.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let tol = a.nrows().max(a.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight transcription of the sparse construction with plain integers.
    fn sparse_reference(iv: u16, d: usize, rows: usize, cols: usize) -> Vec<Vec<i32>> {
        let mut sr: u32 = iv as u32;
        let mut m = vec![vec![0i32; cols]; rows];
        for row in m.iter_mut() {
            for _ in 0..d {
                let neg = sr & 0x8000 != 0;
                if neg {
                    sr ^= 0x6801;
                }
                let j = (((sr >> 8) ^ (sr & 0xFF)) as usize) % cols;
                row[j] += if neg { -1 } else { 1 };
                sr = (sr << 1) & 0xFFFF;
            }
        }
        m
    }

    #[test]
    fn sparse_matches_reference_trace() {
        for &(rows, cols, d) in &[(96usize, 256usize, 15usize), (150, 96, 15), (7, 5, 3)] {
            let m = build_sparse_matrix(&SparseConfig::with_d(d), rows, cols).unwrap();
            let r = sparse_reference(0xFFFF, d, rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    assert_eq!(m.data[(i, j)], r[i][j] as f64);
                }
            }
        }
    }

    #[test]
    fn sparse_row_weight() {
        let m = build_sparse_matrix(&SparseConfig::default(), 96, 256).unwrap();
        for i in 0..96 {
            let nz = m.row_entries(i);
            assert!(nz.len() <= 15);
            let l1: f64 = nz.iter().map(|(_, v)| v.abs()).sum();
            assert!(l1 <= 15.0);
            let sum_abs_draws = 15.0;
            if nz.len() == 15 {
                assert_eq!(l1, sum_abs_draws);
            }
        }
        let m1 = build_sparse_matrix(&SparseConfig::with_d(1), 40, 256).unwrap();
        for i in 0..40 {
            let nz = m1.row_entries(i);
            assert_eq!(nz.len(), 1);
            assert_eq!(nz[0].1.abs(), 1.0);
        }
    }

    #[test]
    fn sparse_first_rows_frozen() {
        let m = build_sparse_matrix(&SparseConfig::default(), 2, 256).unwrap();
        let row = |i| -> Vec<(usize, i64)> { m.row_entries(i).into_iter().map(|(j, v)| (j, v as i64)).collect() };
        assert_eq!(
            row(0),
            vec![
                (32, -1), (36, -1), (38, -1), (40, -1), (81, 1), (105, -1), (134, -1), (167, 1),
                (203, -1), (211, 1), (247, 1), (251, 1), (253, 1), (254, 1), (255, -1)
            ]
        );
        assert_eq!(
            row(1),
            vec![
                (42, 1), (56, -1), (84, 1), (90, 1), (101, -1), (113, 1), (149, -1), (168, 1),
                (173, -1), (180, 1), (197, 1), (203, 1), (254, -1)
            ]
        );
    }

    #[test]
    fn binary_first_entry_and_alphabet() {
        let m = build_binary_matrix(&[0x8000], FP_DEFAULT, 3).unwrap();
        assert_eq!(m.data[(0, 0)], 1.0);
        let m = build_binary_matrix(&[0xFFFF; 150], FP_DEFAULT, 96).unwrap();
        assert!(m.data.iter().all(|&v| v == 1.0 || v == -1.0));
        let mean = m.data.mean();
        assert!(mean.abs() < 0.1, "mean {mean}");
        assert!(build_binary_matrix(&[1, 0], FP_DEFAULT, 3).is_err());
    }

    #[test]
    fn augmentation_shapes() {
        let a = SensingMatrix::new(MatrixKind::Dense, DMatrix::identity(3, 3));
        let r = [1.0, 0.0, 0.0];
        let au = augment_error_matrix(&a, &r).unwrap();
        assert_eq!(au.data.column(0).as_slice(), &r);
        assert_eq!(au.data.columns(1, 3), a.data.columns(0, 3));
        assert!(augment_error_matrix(&a, &[1.0]).is_err());
        let au0 = augment_error_matrix(&a, &[0.0; 3]).unwrap();
        assert!(!is_full_rank(&au0.data));

        let b = SensingMatrix::new(MatrixKind::Dense, DMatrix::from_element(1, 1, 2.0));
        let bu = augment_compression_matrix(&b);
        assert_eq!(bu.data, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
        let b = build_sparse_matrix(&SparseConfig::default(), 96, 256).unwrap();
        let bu = augment_compression_matrix(&b);
        assert_eq!((bu.rows(), bu.cols()), (97, 257));
    }

    #[test]
    fn augmented_full_rank_with_lfg_mask() {
        let a = build_sparse_matrix(&SparseConfig::default(), 150, 96).unwrap();
        let mut g = crate::prng::Lfg::from_key(&[0x37; 24]).unwrap();
        let r: Vec<f64> = (0..150).map(|_| g.next_u16() as f64 - 32768.0).collect();
        let au = augment_error_matrix(&a, &r).unwrap();
        assert!(is_full_rank(&au.data));
    }

    #[test]
    fn rank_checks() {
        assert!(is_full_rank(&DMatrix::identity(4, 4)));
        let mut m = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert!(!is_full_rank(&m));
        m[(0, 1)] = 0.5;
        assert!(is_full_rank(&m));
        for mm in (96..=146).step_by(10) {
            let a = build_sparse_matrix(&SparseConfig::default(), 168, mm).unwrap();
            assert!(is_full_rank(&a.data), "M={mm}");
        }
    }

    #[test]
    fn coherence_identity_and_bruteforce() {
        let i4 = DMatrix::<f64>::identity(4, 4);
        assert!((mutual_coherence(&i4, &i4).unwrap() - 1.0).abs() < 1e-12);
        let phi = DMatrix::from_row_slice(3, 4, &[0.3, -1.2, 0.5, 2.0, 1.1, 0.4, -0.7, 0.2, -0.5, 0.9, 1.3, -1.0]);
        let psi = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 1.0, 0.2, 0.0, 3.0]);
        let mut best = 0.0f64;
        for i in 0..4 {
            for j in 0..3 {
                let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
                for k in 0..3 {
                    dot += phi[(k, i)] * psi[(k, j)];
                    na += phi[(k, i)] * phi[(k, i)];
                    nb += psi[(k, j)] * psi[(k, j)];
                }
                best = best.max((dot / (na.sqrt() * nb.sqrt())).abs());
            }
        }
        assert!((mutual_coherence(&phi, &psi).unwrap() - best).abs() < 1e-12);
        let mut z = phi.clone();
        z.column_mut(2).fill(0.0);
        assert_eq!(mutual_coherence(&z, &psi), Err(Error::ZeroColumn(2)));
    }

    #[test]
    fn dump_formats() {
        let m = build_sparse_matrix(&SparseConfig::with_d(1), 2, 4).unwrap();
        let d = m.dump();
        let mut lines = d.lines();
        assert_eq!(lines.next(), Some("2 4 sparse"));
        assert!(lines.next().unwrap().starts_with('('));
        let b = build_binary_matrix(&[0x8000], FP_DEFAULT, 3).unwrap();
        assert!(b.dump().starts_with("1 3 binary\n1 "));
    }
}
