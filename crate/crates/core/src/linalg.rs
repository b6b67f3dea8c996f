//! Dense and banded complex linear algebra shared by the spectral modules.
//!
//! Everything here is a thin layer over `nalgebra`, plus a banded LU and a
//! shift-invert Arnoldi iteration for the large 1D scaling matrices where a
//! dense eigensolve would be wasteful.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("eigenvalue iteration failed to converge (n = {0})")]
    EigenNoConvergence(usize),
    #[error("matrix is numerically singular")]
    Singular,
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
}

/// Unitary discrete Fourier matrix, `F[j,k] = exp(-2*pi*i*j*k/n)/sqrt(n)`.
pub fn dft_matrix(n: usize) -> DMatrix<C64> {
    let s = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |j, k| {
        let ph = -2.0 * std::f64::consts::PI * (j as f64) * (k as f64) / n as f64;
        C64::new(ph.cos() * s, ph.sin() * s)
    })
}

/// All eigenvalues of a general complex matrix via the Schur form.
pub fn complex_eigenvalues(m: &DMatrix<C64>) -> Result<Vec<C64>, LinalgError> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(LinalgError::NotSquare(n, m.ncols()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    for eps in [1e-14, 1e-12, 1e-10] {
        if let Some(schur) = m.clone().try_schur(eps, 200 * n.max(10)) {
            if let Some(ev) = schur.eigenvalues() {
                return Ok(ev.iter().copied().collect());
            }
        }
    }
    Err(LinalgError::EigenNoConvergence(n))
}

/// Spectral radius `max |lambda|`.
pub fn spectral_radius(m: &DMatrix<C64>) -> Result<f64, LinalgError> {
    Ok(complex_eigenvalues(m)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending.
pub fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let se = nalgebra::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(m.nrows(), m.ncols());
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Operator (spectral) norm.
pub fn operator_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let svd = nalgebra::SVD::new(m.clone(), false, false);
    svd.singular_values
        .iter()
        .copied()
        .fold(0.0f64, f64::max)
}

/// All singular values, descending.
pub fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    let svd = nalgebra::SVD::new(m.clone(), false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// 2-norm condition number `sigma_max / sigma_min`.
pub fn condition_number(m: &DMatrix<C64>) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// `det(m)` through a pivoted LU factorization.
pub fn determinant(m: &DMatrix<C64>) -> C64 {
    m.clone().lu().determinant()
}

/// `log det(m)` as `ln|det| + i arg`, summed factor by factor so the modulus
/// never overflows for large matrices.
pub fn log_determinant(m: &DMatrix<C64>) -> C64 {
    let lu = m.clone().lu();
    let sign: C64 = lu.p().determinant();
    let mut log_abs = 0.0;
    let mut arg = sign.arg();
    for i in 0..m.nrows() {
        let d = lu.u()[(i, i)];
        log_abs += d.norm().ln();
        arg += d.arg();
    }
    C64::new(log_abs, arg)
}

/// Solve `m x = b` for a single right-hand side.
pub fn solve(m: &DMatrix<C64>, b: &DVector<C64>) -> Result<DVector<C64>, LinalgError> {
    m.clone().lu().solve(b).ok_or(LinalgError::Singular)
}

/// Solve `m X = B` for a matrix right-hand side.
pub fn solve_matrix(m: &DMatrix<C64>, b: &DMatrix<C64>) -> Result<DMatrix<C64>, LinalgError> {
    m.clone().lu().solve(b).ok_or(LinalgError::Singular)
}

/// Dense inverse.
pub fn inverse(m: &DMatrix<C64>) -> Result<DMatrix<C64>, LinalgError> {
    m.clone().try_inverse().ok_or(LinalgError::Singular)
}

/// Real matrix promoted to complex entries.
pub fn complexify(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_deriv(n, x);
        nodes[n - 1 - k] = x;
        weights[n - 1 - k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Complex banded matrix in LAPACK-style band storage with `kl` sub- and
/// `ku` superdiagonals.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// `data[d][j]` holds entry `(j + offsets[d], j)` column by column; row
    /// index `i` sits in diagonal slot `d = i - j + ku`.
    data: Vec<Vec<C64>>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![vec![C64::new(0.0, 0.0); n]; kl + ku + 1],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (i, j) = (i as isize, j as isize);
        let d = i - j + self.ku as isize;
        if d < 0 || d >= (self.kl + self.ku + 1) as isize {
            return C64::new(0.0, 0.0);
        }
        self.data[d as usize][j as usize]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        let d = i as isize - j as isize + self.ku as isize;
        assert!(
            d >= 0 && d < (self.kl + self.ku + 1) as isize,
            "entry ({i},{j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        self.data[d as usize][j] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn mul_vec(&self, x: &DVector<C64>) -> DVector<C64> {
        let mut y = DVector::from_element(self.n, C64::new(0.0, 0.0));
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            let xj = x[j];
            for i in lo..=hi {
                y[i] += self.get(i, j) * xj;
            }
        }
        y
    }

    /// LU factorization with partial pivoting; fill widens the upper band to
    /// `kl + ku`.
    pub fn lu(&self) -> Result<BandedLu, LinalgError> {
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku + self.kl; // fill-in room
        let mut a = BandedMatrix::zeros(n, kl, ku);
        for j in 0..n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(n - 1);
            for i in lo..=hi {
                a.set(i, j, self.get(i, j));
            }
        }
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let imax = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a.get(k, k).norm();
            for i in (k + 1)..=imax {
                let v = a.get(i, k).norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(LinalgError::Singular);
            }
            piv[k] = p;
            if p != k {
                let jmax = (k + ku).min(n - 1);
                for j in k..=jmax {
                    let t = a.get(k, j);
                    a.set(k, j, a.get(p, j));
                    a.set(p, j, t);
                }
            }
            let akk = a.get(k, k);
            for i in (k + 1)..=imax {
                let l = a.get(i, k) / akk;
                a.set(i, k, l);
                let jmax = (k + ku).min(n - 1);
                for j in (k + 1)..=jmax {
                    let v = a.get(i, j) - l * a.get(k, j);
                    a.set(i, j, v);
                }
            }
        }
        Ok(BandedLu { a, piv })
    }
}

/// Factorized banded matrix ready for repeated solves.
pub struct BandedLu {
    a: BandedMatrix,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn solve(&self, b: &DVector<C64>) -> DVector<C64> {
        let n = self.a.n;
        let kl = self.a.kl;
        let ku = self.a.ku;
        let mut x = b.clone();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap_rows(k, p);
            }
            let imax = (k + kl).min(n - 1);
            let xk = x[k];
            for i in (k + 1)..=imax {
                let l = self.a.get(i, k);
                x[i] -= l * xk;
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + ku).min(n - 1);
            let mut s = x[k];
            for j in (k + 1)..=jmax {
                s -= self.a.get(k, j) * x[j];
            }
            x[k] = s / self.a.get(k, k);
        }
        x
    }
}

/// A Ritz pair from the Arnoldi iteration.
#[derive(Debug, Clone, Copy)]
pub struct RitzValue {
    pub value: C64,
    /// Residual estimate for the shift-inverted problem.
    pub residual: f64,
}

/// Shift-invert Arnoldi: eigenvalues of the operator behind `solve_shifted`
/// closest to the shift `sigma`. `solve_shifted` must apply `(A - sigma)^-1`.
pub fn shift_invert_arnoldi<F>(
    n: usize,
    sigma: C64,
    krylov_dim: usize,
    solve_shifted: F,
    seed: u64,
) -> Result<Vec<RitzValue>, LinalgError>
where
    F: Fn(&DVector<C64>) -> DVector<C64>,
{
    let m = krylov_dim.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v0 = DVector::from_fn(n, |_, _| {
        C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    v0 /= C64::new(v0.norm(), 0.0);

    let mut basis: Vec<DVector<C64>> = vec![v0];
    let mut h = DMatrix::<C64>::zeros(m + 1, m);
    let mut steps = m;
    for j in 0..m {
        let mut w = solve_shifted(&basis[j]);
        // modified Gram-Schmidt, twice
        for _ in 0..2 {
            for (i, vi) in basis.iter().enumerate() {
                let c: C64 = vi.dotc(&w);
                h[(i, j)] += c;
                w.axpy(-c, vi, C64::new(1.0, 0.0));
            }
        }
        let nw = w.norm();
        h[(j + 1, j)] = C64::new(nw, 0.0);
        if nw < 1e-13 {
            steps = j + 1;
            break;
        }
        basis.push(w / C64::new(nw, 0.0));
    }

    let hm = h.view((0, 0), (steps, steps)).into_owned();
    let mus = complex_eigenvalues(&hm)?;
    let hlast = if steps < m {
        0.0
    } else {
        h[(steps, steps - 1)].norm()
    };
    let mut out = Vec::new();
    for mu in mus {
        if mu.norm() < 1e-13 {
            continue;
        }
        // lambda = sigma + 1/mu; residual scaled by |mu| for the original problem
        out.push(RitzValue {
            value: sigma + 1.0 / mu,
            residual: hlast / mu.norm(),
        });
    }
    out.sort_by(|a, b| {
        (a.value - sigma)
            .norm()
            .total_cmp(&(b.value - sigma).norm())
    });
    Ok(out)
}
