//! Basis pursuit by ADMM, and the orthonormal DCT-II basis.
//!
//! Exact mode solves `min |v|_1 s.t. C v = b` with a projection/shrinkage
//! splitting. Denoised mode solves `min |v|_1 s.t. |C v - b|_2 <= eps` with
//! a splitting over `v = z` and `C v = w`, `w` restricted to the ball; when
//! `C` is a partial isometry the ball is handled by direct projection.
//! Both rescale `b` internally so results are scale equivariant.
//! An exact-mode run finishes with a support polish: the shrinkage support
//! is refit by least squares on the constraint and kept when it stays
//! feasible without raising the l1 norm.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

// Iterations between attempts to finish on a certified basic solution.
const POLISH_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Exact,
    Denoised { epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub rho: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    pub polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iters: 5000, tol_primal: 1e-6, tol_dual: 1e-6, rho: 1.0, alpha: 1.6, polish: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub solution: DVector<f64>,
    pub iterations: usize,
    /// `|C solution - b|_2`.
    pub residual: f64,
    pub converged: bool,
}

/// A constraint matrix prepared for repeated solves.
#[derive(Debug, Clone)]
pub struct BasisPursuit {
    c: DMatrix<f64>,
    // Orthonormal basis of the row space of C (q x r) and the map
    // b -> minimum-norm solution (q x p).
    v_row: DMatrix<f64>,
    pinv: DMatrix<f64>,
    // Every nonzero singular value is 1 (e.g. an orthogonal projector), so
    // residual balls have a closed-form projection.
    isometry: bool,
    chol: Option<Cholesky<f64, nalgebra::Dyn>>,
}

impl BasisPursuit {
    pub fn new(c: DMatrix<f64>) -> Result<Self> {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if c.nrows() == 0 || c.ncols() == 0 {
            return Err(Error::Shape("empty constraint matrix".into()));
        }
        let (p, q) = c.shape();
        let svd = c.clone().svd(true, true);
        let u = svd.u.as_ref().expect("u requested");
        let vt = svd.v_t.as_ref().expect("v_t requested");
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let tol = p.max(q) as f64 * f64::EPSILON * smax;
        let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tol).collect();
        let r = keep.len();
        let mut v_row = DMatrix::zeros(q, r);
        let mut pinv = DMatrix::zeros(q, p);
        for (k, &i) in keep.iter().enumerate() {
            let vi = vt.row(i).transpose();
            v_row.set_column(k, &vi);
            pinv += (&vi / svd.singular_values[i]) * u.column(i).transpose();
        }
        let isometry = keep.iter().all(|&i| (svd.singular_values[i] - 1.0).abs() < 1e-9);
        Ok(Self { c, v_row, pinv, isometry, chol: None })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Minimum-l2 point of `C v = b` in the least-squares sense.
    pub fn min_norm(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.pinv * b
    }

    pub fn solve(&mut self, b: &DVector<f64>, mode: Mode, cfg: &SolverConfig) -> Result<SolverResult> {
        if b.len() != self.c.nrows() {
            return Err(Error::Shape(format!("b has {} entries, C has {} rows", b.len(), self.c.nrows())));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if !(cfg.rho > 0.0 && cfg.alpha > 0.0 && cfg.alpha < 2.0) {
            return Err(Error::Param("rho > 0 and 0 < alpha < 2 required".into()));
        }
        let q = self.c.ncols();
        let zero = || SolverResult { solution: DVector::zeros(q), iterations: 0, residual: b.norm(), converged: true };
        match mode {
            Mode::Exact => {
                let x0 = self.min_norm(b);
                let s = x0.amax();
                if s == 0.0 {
                    return Ok(zero());
                }
                let mut res = self.admm_affine(&(&x0 / s), 0.0, cfg);
                res.solution *= s;
                res.residual = (&self.c * &res.solution - b).norm();
                Ok(res)
            }
            Mode::Denoised { epsilon } => {
                if !(epsilon >= 0.0 && epsilon.is_finite()) {
                    return Err(Error::Param("epsilon must be finite and non-negative".into()));
                }
                if b.norm() <= epsilon {
                    return Ok(zero());
                }
                let x0 = self.min_norm(b);
                let s = x0.amax();
                let s = if s > 0.0 { s } else { b.amax() };
                let mut res = if self.isometry {
                    // Split |C v - b|^2 into the reachable part and the fixed
                    // component of b outside the range of C.
                    let off = (b.norm_squared() - (&self.c * &x0).norm_squared()).max(0.0);
                    let eps = (epsilon * epsilon - off).max(0.0).sqrt();
                    self.admm_affine(&(&x0 / s), eps / s, cfg)
                } else {
                    self.admm_denoised(&(b / s), epsilon / s, cfg)
                };
                res.solution *= s;
                res.residual = (&self.c * &res.solution - b).norm();
                Ok(res)
            }
        }
    }

    /// Projection/shrinkage splitting over `{v : |W^T v - W^T x0| <= eps}`,
    /// `W` the row-space basis. `eps = 0` is the affine set `C v = b`.
    fn admm_affine(&self, x0: &DVector<f64>, eps: f64, cfg: &SolverConfig) -> SolverResult {
        let q = x0.len();
        let mut rho = cfg.rho;
        let mut x = x0.clone();
        let mut z = x0.clone();
        let mut u = DVector::zeros(q);
        let mut v = DVector::zeros(q);
        let mut coef = DVector::zeros(self.v_row.ncols());
        let mut z_old = DVector::zeros(q);
        let target = self.v_row.tr_mul(x0);
        let sq = (q as f64).sqrt();
        let mut it = 0;
        while it < cfg.max_iters {
            it += 1;
            // x = nearest feasible point to z - u: only the row-space
            // coordinates move, onto the ball around the target.
            v.copy_from(&z);
            v -= &u;
            coef.gemv_tr(1.0, &self.v_row, &v, 0.0);
            coef -= &target;
            let dn = coef.norm();
            let keep = if dn > eps { eps / dn } else { 1.0 };
            coef *= keep - 1.0;
            x.copy_from(&v);
            x.gemv(1.0, &self.v_row, &coef, 1.0);
            z_old.copy_from(&z);
            let kappa = 1.0 / rho;
            for i in 0..q {
                let xh = cfg.alpha * x[i] + (1.0 - cfg.alpha) * z_old[i];
                let t = xh + u[i];
                z[i] = t.signum() * (t.abs() - kappa).max(0.0);
                u[i] = t - z[i];
            }
            let r = (&x - &z).norm();
            let s = rho * (&z - &z_old).norm();
            let eps_pri = sq * cfg.tol_primal * 1e-2 + cfg.tol_primal * x.norm().max(z.norm());
            let eps_dual = sq * cfg.tol_dual * 1e-2 + cfg.tol_dual * rho * u.norm();
            let done = r <= eps_pri && s <= eps_dual;
            if cfg.polish && eps == 0.0 && (done || it % POLISH_EVERY == 0) {
                if let Some((cand, optimal)) = self.polish(&x, &z, &target, cfg) {
                    if optimal || done {
                        return SolverResult { solution: cand, iterations: it, residual: 0.0, converged: true };
                    }
                }
            }
            if done {
                return SolverResult { solution: x, iterations: it, residual: 0.0, converged: true };
            }
            // Residual balancing.
            if it % 10 == 0 {
                if r * eps_dual > 10.0 * s * eps_pri {
                    rho *= 2.0;
                    u /= 2.0;
                } else if s * eps_pri > 10.0 * r * eps_dual {
                    rho /= 2.0;
                    u *= 2.0;
                }
            }
        }
        if cfg.polish && eps == 0.0 {
            if let Some((cand, optimal)) = self.polish(&x, &z, &target, cfg) {
                return SolverResult { solution: cand, iterations: it, residual: 0.0, converged: optimal };
            }
        }
        SolverResult { solution: x, iterations: it, residual: 0.0, converged: false }
    }

    fn admm_denoised(&mut self, b: &DVector<f64>, eps: f64, cfg: &SolverConfig) -> SolverResult {
        let (p, q) = self.c.shape();
        if self.chol.is_none() {
            let g = DMatrix::identity(q, q) + self.c.transpose() * &self.c;
            self.chol = Some(Cholesky::new(g).expect("I + C^T C is positive definite"));
        }
        let chol = self.chol.as_ref().unwrap();
        let rho = cfg.rho;
        let kappa = 1.0 / rho;
        let mut v = self.pinv.clone() * b;
        let mut z = v.clone();
        let mut w = &self.c * &v;
        let mut u1 = DVector::zeros(q);
        let mut u2 = DVector::zeros(p);
        let mut cv = DVector::zeros(p);
        let sq = ((p + q) as f64).sqrt();
        let mut converged = false;
        let mut it = 0;
        while it < cfg.max_iters {
            it += 1;
            let rhs = (&z - &u1) + self.c.tr_mul(&(&w - &u2));
            v = chol.solve(&rhs);
            cv.gemv(1.0, &self.c, &v, 0.0);
            let z_old = z.clone();
            let w_old = w.clone();
            let vh = cfg.alpha * &v + (1.0 - cfg.alpha) * &z_old;
            let cvh = cfg.alpha * &cv + (1.0 - cfg.alpha) * &w_old;
            let t = &vh + &u1;
            z = t.map(|t| t.signum() * (t.abs() - kappa).max(0.0));
            let t2 = &cvh + &u2;
            let d = &t2 - b;
            let dn = d.norm();
            w = if dn <= eps { t2.clone() } else { b + d * (eps / dn) };
            u1 = t - &z;
            u2 = t2 - &w;
            let r = ((&v - &z).norm_squared() + (&cv - &w).norm_squared()).sqrt();
            let s = rho * ((&z - &z_old) + self.c.tr_mul(&(&w - &w_old))).norm();
            let eps_pri = sq * cfg.tol_primal * 1e-2 + cfg.tol_primal * v.norm().max(z.norm()).max(cv.norm());
            let eps_dual = sq * cfg.tol_dual * 1e-2 + cfg.tol_dual * rho * (u1.norm() + u2.norm());
            if r <= eps_pri && s <= eps_dual {
                converged = true;
                break;
            }
        }
        // Shrinkage iterate is sparse; pull it into the ball if it sits just outside.
        let mut sol = z;
        let d = &self.c * &sol - b;
        if d.norm() > eps {
            sol = v;
        }
        SolverResult { solution: sol, iterations: it, residual: 0.0, converged }
    }

    /// Basic solution on the dominant support of `z` (topped up from `x`).
    ///
    /// Works in the orthonormal row-space coordinates `W^T v = t`, which stay
    /// well conditioned when `C` is not. Returns the refit when it is feasible
    /// and no worse in l1 than `x`, with a flag telling whether a dual
    /// certificate `|W lambda|_inf <= 1` proves it optimal.
    fn polish(&self, x: &DVector<f64>, z: &DVector<f64>, target: &DVector<f64>, cfg: &SolverConfig) -> Option<(DVector<f64>, bool)> {
        let w = &self.v_row;
        let rank = w.ncols();
        if rank == 0 || z.amax() == 0.0 {
            return None;
        }
        let mut idx: Vec<usize> = (0..z.len()).collect();
        idx.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()).then(x[b].abs().total_cmp(&x[a].abs())));
        idx.truncate(rank);
        idx.sort_unstable();
        let ws = w.select_rows(idx.iter());
        let sol_s = ws.transpose().lu().solve(target)?;
        let mut cand = DVector::zeros(x.len());
        for (k, &i) in idx.iter().enumerate() {
            cand[i] = sol_s[k];
        }
        let tol = cfg.tol_primal * (1.0 + target.norm());
        let cand_res = (w.tr_mul(&cand) - target).norm();
        let cur_res = (w.tr_mul(x) - target).norm();
        if !(cand_res <= tol.max(cur_res) && cand.lp_norm(1) <= x.lp_norm(1) * (1.0 + 1e-12)) {
            return None;
        }
        let sign = DVector::from_iterator(rank, sol_s.iter().map(|v| if *v > 0.0 { 1.0 } else if *v < 0.0 { -1.0 } else { 0.0 }));
        let optimal = ws.lu().solve(&sign).map(|lambda| (w * lambda).amax() <= 1.0 + 1e-9).unwrap_or(false);
        Some((cand, optimal))
    }
}

/// One-shot convenience wrapper around [`BasisPursuit`].
pub fn solve_basis_pursuit(c: &DMatrix<f64>, b: &DVector<f64>, mode: Mode, cfg: &SolverConfig) -> Result<SolverResult> {
    if c.nrows() != b.len() {
        return Err(Error::Shape(format!("C is {}x{}, b has {}", c.nrows(), c.ncols(), b.len())));
    }
    if b.iter().all(|&v| v == 0.0) && c.iter().all(|v| v.is_finite()) {
        return Ok(SolverResult { solution: DVector::zeros(c.ncols()), iterations: 0, residual: 0.0, converged: true });
    }
    BasisPursuit::new(c.clone())?.solve(b, mode, cfg)
}

/// Orthonormal DCT-II synthesis matrix `Psi`, so that `x = Psi * theta`.
pub fn dct_basis(n: usize) -> DMatrix<f64> {
    let nf = n as f64;
    DMatrix::from_fn(n, n, |i, k| {
        let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        s * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos()
    })
}
