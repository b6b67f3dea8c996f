//! Grushin (bordered) linear algebra and the zeta determinant.
//!
//! The bordered system `[[P, R-], [R+, 0]]` reduces a spectral problem to
//! its effective Hamiltonian `E_{-+}`; invertibility of `P` is equivalent to
//! invertibility of `E_{-+}`, with matching winding numbers. On the quantum
//! map side the same machinery localizes zeros of
//! `zeta(z) = det(I - M(z))` by the argument principle and refines them by
//! multiplicity-aware Newton iteration.

use crate::linalg::{self, LinalgError};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GrushinError {
    #[error("bordered matrix numerically singular (condition {0:.3e})")]
    SingularBorder(f64),
    #[error("contour quadrature failed to settle on an integer (estimate {0:.3})")]
    ContourTooClose(f64),
    #[error("trace expansion requires spectral radius < 1, got {0:.6}")]
    DivergentExpansion(f64),
    #[error("|zeta| < 1e-12 on a cell boundary after 5 jitter attempts")]
    BoundaryZero,
    #[error("winding counts inconsistent: boundary {boundary}, children {sum}")]
    CountMismatch { boundary: i64, sum: i64 },
    #[error("bordered matrix singular at {0} interior points: Grushin problem not well-posed")]
    NotWellPosed(i64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Bordered system `[[P, R-], [R+, 0]]`.
#[derive(Debug, Clone)]
pub struct GrushinSystem {
    pub p: DMatrix<C64>,
    /// Columns of the border, `n x m`.
    pub r_minus: DMatrix<C64>,
    /// Rows of the border, `m' x n`.
    pub r_plus: DMatrix<C64>,
}

impl GrushinSystem {
    pub fn new(p: DMatrix<C64>, r_minus: DMatrix<C64>, r_plus: DMatrix<C64>) -> Self {
        assert_eq!(p.nrows(), p.ncols(), "P must be square here");
        assert_eq!(r_minus.nrows(), p.nrows());
        assert_eq!(r_plus.ncols(), p.ncols());
        Self { p, r_minus, r_plus }
    }

    /// The bordered matrix; square exactly when `rows(R+) = cols(R-)`.
    pub fn bordered(&self) -> DMatrix<C64> {
        let n = self.p.nrows();
        let mm = self.r_minus.ncols();
        let mp = self.r_plus.nrows();
        let mut b = DMatrix::<C64>::zeros(n + mp, n + mm);
        b.view_mut((0, 0), (n, n)).copy_from(&self.p);
        b.view_mut((0, n), (n, mm)).copy_from(&self.r_minus);
        b.view_mut((n, 0), (mp, n)).copy_from(&self.r_plus);
        b
    }

    pub fn is_square(&self) -> bool {
        self.r_plus.nrows() == self.r_minus.ncols()
    }
}

/// Blocks of the inverse bordered matrix.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    pub e: DMatrix<C64>,
    pub e_plus: DMatrix<C64>,
    pub e_minus: DMatrix<C64>,
    pub e_minus_plus: DMatrix<C64>,
}

/// Defects of the two Schur-complement identities for a 2x2 block split of
/// `p` at row/column `n1`:
/// `p11^-1 = q11 - q12 q22^-1 q21` and `q22^-1 = p22 - p21 p11^-1 p12`.
pub fn schur_identity_defects(p: &DMatrix<C64>, n1: usize) -> Result<(f64, f64), GrushinError> {
    let n = p.nrows();
    let q = linalg::inverse(p)?;
    let p11 = p.view((0, 0), (n1, n1)).into_owned();
    let p12 = p.view((0, n1), (n1, n - n1)).into_owned();
    let p21 = p.view((n1, 0), (n - n1, n1)).into_owned();
    let p22 = p.view((n1, n1), (n - n1, n - n1)).into_owned();
    let q11 = q.view((0, 0), (n1, n1)).into_owned();
    let q12 = q.view((0, n1), (n1, n - n1)).into_owned();
    let q21 = q.view((n1, 0), (n - n1, n1)).into_owned();
    let q22 = q.view((n1, n1), (n - n1, n - n1)).into_owned();
    let p11_inv = linalg::inverse(&p11)?;
    let q22_inv = linalg::inverse(&q22)?;
    let d1 = linalg::operator_norm(&(&p11_inv - (&q11 - &q12 * &q22_inv * &q21)));
    let d2 = linalg::operator_norm(&(&q22_inv - (&p22 - &p21 * &p11_inv * &p12)));
    Ok((d1, d2))
}

/// Inverts the bordered matrix and extracts `(E, E+, E-, E-+)`.
///
/// When `P` itself is invertible the identity `E-+^{-1} = -R+ P^-1 R-`
/// (the `p22 = 0` Schur identity) is verified and its defect returned.
pub fn schur_effective_hamiltonian(
    sys: &GrushinSystem,
) -> Result<(EffectiveHamiltonian, Option<f64>), GrushinError> {
    let b = sys.bordered();
    assert!(sys.is_square(), "bordered matrix must be square to invert");
    let cond = linalg::condition_number(&b);
    if !cond.is_finite() || cond > 1e12 {
        return Err(GrushinError::SingularBorder(cond));
    }
    let inv = linalg::inverse(&b)?;
    let n = sys.p.nrows();
    let m = sys.r_minus.ncols();
    let eff = EffectiveHamiltonian {
        e: inv.view((0, 0), (n, n)).into_owned(),
        e_plus: inv.view((0, n), (n, m)).into_owned(),
        e_minus: inv.view((n, 0), (m, n)).into_owned(),
        e_minus_plus: inv.view((n, n), (m, m)).into_owned(),
    };
    let consistency = if linalg::condition_number(&sys.p) < 1e12 {
        let p_inv = linalg::inverse(&sys.p)?;
        let schur = -(&sys.r_plus * &p_inv * &sys.r_minus);
        let empi = linalg::inverse(&eff.e_minus_plus)?;
        Some(linalg::operator_norm(&(empi - schur)))
    } else {
        None
    };
    Ok((eff, consistency))
}

/// Index (rows - cols) comparison between the bordered matrix and the
/// reduced operator `R+ P^-1 R-`; they agree for any finite dimensions.
pub fn index_check(sys: &GrushinSystem) -> (i64, i64) {
    let b_rows = sys.p.nrows() + sys.r_plus.nrows();
    let b_cols = sys.p.ncols() + sys.r_minus.ncols();
    let ind_bordered = b_cols as i64 - b_rows as i64;
    // R+ P^-1 R- : H_- -> H_+ has cols(R-) inputs, rows(R+) outputs
    let ind_schur = sys.r_minus.ncols() as i64 - sys.r_plus.nrows() as i64;
    (ind_bordered, ind_schur)
}

/// Holomorphic z-family of pencils `P(z) = A - z` with fixed borders.
#[derive(Debug, Clone)]
pub struct PencilFamily {
    pub a: DMatrix<C64>,
    pub r_minus: DMatrix<C64>,
    pub r_plus: DMatrix<C64>,
}

impl PencilFamily {
    pub fn system_at(&self, z: C64) -> GrushinSystem {
        let n = self.a.nrows();
        let p = &self.a - DMatrix::<C64>::identity(n, n) * z;
        GrushinSystem::new(p, self.r_minus.clone(), self.r_plus.clone())
    }

    /// `E_{-+}` and its analytic derivative `E_- E_+` (from
    /// `d/dz inv(B) = inv(B) diag(I, 0) inv(B)` for the pencil).
    pub fn effective_with_derivative(
        &self,
        z: C64,
    ) -> Result<(DMatrix<C64>, DMatrix<C64>), GrushinError> {
        let (eff, _) = schur_effective_hamiltonian(&self.system_at(z))?;
        let deriv = &eff.e_minus * &eff.e_plus;
        Ok((eff.e_minus_plus, deriv))
    }
}

/// Circle contour for the trace-formula check.
#[derive(Debug, Clone, Copy)]
pub struct Circle {
    pub center: C64,
    pub radius: f64,
}

/// Compares the eigenvalue count of `A` inside the contour (direct
/// eigensolve) against the winding quadrature
/// `(1/2 pi i) contour-integral tr(E_{-+}^{-1} E_{-+}') dw`.
///
/// The formula presumes the bordered problem is well-posed inside the
/// contour; the winding of `det B(w)` is computed alongside (its derivative
/// is `-tr E(w)`) and a nonzero value fails with `NotWellPosed`. The
/// quadrature order doubles until both counts settle within 0.25 of
/// integers; otherwise `ContourTooClose`.
pub fn verify_trace_formula(
    family: &PencilFamily,
    contour: Circle,
) -> Result<(i64, i64), GrushinError> {
    let eigs = linalg::complex_eigenvalues(&family.a)?;
    let lhs = eigs
        .iter()
        .filter(|l| (*l - contour.center).norm() < contour.radius)
        .count() as i64;

    // (tr E_{-+}^{-1} E_{-+}', -tr E) at one contour point
    let integrand = |w: C64| -> Result<(C64, C64), GrushinError> {
        let (eff, _) = schur_effective_hamiltonian(&family.system_at(w))?;
        let demp = &eff.e_minus * &eff.e_plus;
        let sol = linalg::solve_matrix(&eff.e_minus_plus, &demp)?;
        let border_log_deriv = -eff.e.diagonal().sum();
        Ok((sol.diagonal().sum(), border_log_deriv))
    };
    let mut prev: Option<(f64, f64)> = None;
    for npts in [16usize, 32, 64, 128, 256, 512] {
        let mut acc = C64::new(0.0, 0.0);
        let mut acc_border = C64::new(0.0, 0.0);
        let mut ok = true;
        for k in 0..npts {
            let th = 2.0 * std::f64::consts::PI * k as f64 / npts as f64;
            let w = contour.center + C64::from_polar(contour.radius, th);
            let dw = C64::from_polar(contour.radius, th + std::f64::consts::FRAC_PI_2)
                * (2.0 * std::f64::consts::PI / npts as f64);
            match integrand(w) {
                Ok((v, b)) => {
                    acc += v * dw;
                    acc_border += b * dw;
                }
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let two_pi_i = C64::new(0.0, 2.0 * std::f64::consts::PI);
        let count = (acc / two_pi_i).re;
        let border = (acc_border / two_pi_i).re;
        if let Some((p, pb)) = prev {
            if (count - p).abs() < 0.05
                && (count - count.round()).abs() < 0.25
                && (border - pb).abs() < 0.05
                && (border - border.round()).abs() < 0.25
            {
                if border.round() as i64 != 0 {
                    return Err(GrushinError::NotWellPosed(border.round() as i64));
                }
                return Ok((lhs, count.round() as i64));
            }
        }
        prev = Some((count, border));
    }
    Err(GrushinError::ContourTooClose(
        prev.map(|p| p.0).unwrap_or(f64::NAN),
    ))
}

/// `zeta = det(I - M)` by pivoted LU.
pub fn zeta(m: &DMatrix<C64>) -> C64 {
    let n = m.nrows();
    let a = DMatrix::<C64>::identity(n, n) - m;
    linalg::determinant(&a)
}

/// `log zeta` as `ln|det| + i arg`, safe for large matrices.
pub fn log_zeta(m: &DMatrix<C64>) -> C64 {
    let n = m.nrows();
    let a = DMatrix::<C64>::identity(n, n) - m;
    linalg::log_determinant(&a)
}

/// Truncated resummation `exp(-sum_{k=1}^K tr(M^k)/k)`; requires spectral
/// radius below one.
pub fn zeta_trace_expansion(m: &DMatrix<C64>, order: usize) -> Result<C64, GrushinError> {
    let rho = linalg::spectral_radius(m)?;
    if rho >= 1.0 {
        return Err(GrushinError::DivergentExpansion(rho));
    }
    let mut acc = C64::new(0.0, 0.0);
    let mut power = DMatrix::<C64>::identity(m.nrows(), m.ncols());
    for k in 1..=order {
        power = &power * m;
        let tr: C64 = power.diagonal().sum();
        acc += tr / k as f64;
    }
    Ok((-acc).exp())
}

/// Holomorphic matrix family `z -> M(z)` with an analytic derivative,
/// the input to the resonance search.
pub trait HolomorphicMapFamily: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, z: C64) -> DMatrix<C64>;
    fn eval_deriv(&self, z: C64) -> DMatrix<C64>;

    /// `zeta'/zeta = -tr((I - M)^{-1} M')`; also returns `log|zeta|`.
    fn log_derivative(&self, z: C64) -> Result<(C64, f64), LinalgError> {
        let m = self.eval(z);
        let mp = self.eval_deriv(z);
        let n = m.nrows();
        let a = DMatrix::<C64>::identity(n, n) - &m;
        let sol = linalg::solve_matrix(&a, &mp)?;
        let tr: C64 = sol.diagonal().sum();
        Ok((-tr, linalg::log_determinant(&a).re))
    }
}

/// Rectangular spectral window.
#[derive(Debug, Clone, Copy)]
pub struct Window {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Window {
    pub fn corners(&self) -> [C64; 4] {
        [
            C64::new(self.re_min, self.im_min),
            C64::new(self.re_max, self.im_min),
            C64::new(self.re_max, self.im_max),
            C64::new(self.re_min, self.im_max),
        ]
    }

    pub fn contains(&self, z: C64) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im >= self.im_min && z.im <= self.im_max
    }

    pub fn diameter(&self) -> f64 {
        let dr = self.re_max - self.re_min;
        let di = self.im_max - self.im_min;
        (dr * dr + di * di).sqrt()
    }

    fn split(&self, fx: f64, fy: f64) -> [Window; 4] {
        let xm = self.re_min + fx * (self.re_max - self.re_min);
        let ym = self.im_min + fy * (self.im_max - self.im_min);
        [
            Window {
                re_min: self.re_min,
                re_max: xm,
                im_min: self.im_min,
                im_max: ym,
            },
            Window {
                re_min: xm,
                re_max: self.re_max,
                im_min: self.im_min,
                im_max: ym,
            },
            Window {
                re_min: self.re_min,
                re_max: xm,
                im_min: ym,
                im_max: self.im_max,
            },
            Window {
                re_min: xm,
                re_max: self.re_max,
                im_min: ym,
                im_max: self.im_max,
            },
        ]
    }
}

/// A located zero of `zeta`.
#[derive(Debug, Clone, Copy)]
pub struct ResonanceZero {
    pub z: C64,
    pub multiplicity: usize,
    /// `|zeta|` at the refined zero.
    pub residual: f64,
}

/// Zeros of `zeta` in a window with winding-number multiplicities.
#[derive(Debug, Clone)]
pub struct ResonanceList {
    pub window: Window,
    pub zeros: Vec<ResonanceZero>,
    /// Winding number of the full window boundary.
    pub total_count: i64,
    /// `max |zeta|` sampled on the window boundary (residual reference).
    pub boundary_max_abs: f64,
}

/// Winding number of `zeta` around a rectangle by Gauss-Legendre edge
/// quadrature with order doubling until integer stabilization.
/// Also reports the largest and smallest `|zeta|` seen on the boundary.
fn winding_number(
    family: &dyn HolomorphicMapFamily,
    rect: &Window,
) -> Result<(i64, f64, f64), GrushinError> {
    let corners = rect.corners();
    let mut max_abs_log = f64::NEG_INFINITY;
    let mut min_abs_log = f64::INFINITY;
    let mut max_logderiv = 0.0f64;
    let mut prev: Option<f64> = None;
    for order in [8usize, 16, 32, 64, 128, 256] {
        let (nodes, weights) = linalg::gauss_legendre(order);
        let mut acc = C64::new(0.0, 0.0);
        for e in 0..4 {
            let a = corners[e];
            let b = corners[(e + 1) % 4];
            let mid = (a + b) / 2.0;
            let half = (b - a) / 2.0;
            for (x, w) in nodes.iter().zip(&weights) {
                let z = mid + half * *x;
                let (ld, labs) = family.log_derivative(z)?;
                max_abs_log = max_abs_log.max(labs);
                min_abs_log = min_abs_log.min(labs);
                max_logderiv = max_logderiv.max(ld.norm());
                acc += ld * half * *w;
            }
        }
        let count = (acc / C64::new(0.0, 2.0 * std::f64::consts::PI)).re;
        if min_abs_log < -27.0 + max_abs_log.min(0.0) {
            // |zeta| under ~1e-12 of scale on the boundary: unreliable
            return Err(GrushinError::BoundaryZero);
        }
        // 1/|zeta'/zeta| estimates the distance of the nearest zero to the
        // contour; a zero hugging the boundary would be miscounted
        if max_logderiv > 0.0 && 1.0 / max_logderiv < 0.005 * rect.diameter() {
            return Err(GrushinError::BoundaryZero);
        }
        if let Some(p) = prev {
            if (count - p).abs() < 0.05 && (count - count.round()).abs() < 0.25 {
                return Ok((count.round() as i64, max_abs_log.exp(), min_abs_log.exp()));
            }
        }
        prev = Some(count);
    }
    Err(GrushinError::ContourTooClose(prev.unwrap_or(f64::NAN)))
}

/// Outward jitter for the outermost window only; tiled cells must never be
/// expanded individually or shared-edge zeros would be counted twice.
fn winding_with_outward_jitter(
    family: &dyn HolomorphicMapFamily,
    rect: &Window,
) -> Result<(Window, i64, f64), GrushinError> {
    let mut r = *rect;
    let mut last = GrushinError::BoundaryZero;
    for attempt in 0..5 {
        match winding_number(family, &r) {
            Ok((c, maxabs, _)) => return Ok((r, c, maxabs)),
            Err(e @ GrushinError::BoundaryZero) | Err(e @ GrushinError::ContourTooClose(_)) => {
                last = e;
                let pad = 5e-3 * (attempt + 1) as f64 * r.diameter();
                r = Window {
                    re_min: r.re_min - pad,
                    re_max: r.re_max + pad * 1.3,
                    im_min: r.im_min - pad * 0.7,
                    im_max: r.im_max + pad * 1.1,
                };
            }
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// Exact tiling of `outer` into `nx x ny` cells with interior split lines
/// at the given jitter offset (fraction of a cell).
fn tile_window(outer: &Window, nx: usize, ny: usize, jitter: f64) -> Vec<Window> {
    let xs: Vec<f64> = (0..=nx)
        .map(|i| {
            let f = i as f64 / nx as f64
                + if i > 0 && i < nx { jitter / nx as f64 } else { 0.0 };
            outer.re_min + (outer.re_max - outer.re_min) * f
        })
        .collect();
    let ys: Vec<f64> = (0..=ny)
        .map(|j| {
            let f = j as f64 / ny as f64
                + if j > 0 && j < ny { -jitter / ny as f64 } else { 0.0 };
            outer.im_min + (outer.im_max - outer.im_min) * f
        })
        .collect();
    let mut cells = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            cells.push(Window {
                re_min: xs[i],
                re_max: xs[i + 1],
                im_min: ys[j],
                im_max: ys[j + 1],
            });
        }
    }
    cells
}

/// Multiplicity-damped Newton `z <- z - m zeta/zeta'` from the cell center.
fn newton_refine(
    family: &dyn HolomorphicMapFamily,
    start: C64,
    multiplicity: usize,
) -> Option<(C64, f64)> {
    let mut z = start;
    let m = multiplicity as f64;
    for _ in 0..200 {
        let (ld, _) = family.log_derivative(z).ok()?;
        if ld.norm() < 1e-300 {
            return None;
        }
        let step = -C64::new(m, 0.0) / ld;
        z += step;
        if step.norm() < 1e-14 * (1.0 + z.norm()) {
            break;
        }
    }
    let residual = log_zeta(&family.eval(z)).re.exp();
    Some((z, residual))
}

/// Localizes the zeros of `zeta(z) = det(I - M(z))` in the window by
/// recursive argument-principle subdivision, then refines each zero by
/// Newton with multiplicity damping. Child windings are checked against the
/// parent count at every split.
pub fn find_resonances(
    family: &dyn HolomorphicMapFamily,
    window: Window,
    initial_split: (usize, usize),
) -> Result<ResonanceList, GrushinError> {
    let (outer, total, boundary_max) = winding_with_outward_jitter(family, &window)?;
    let mut zeros: Vec<ResonanceZero> = Vec::new();
    if total > 0 {
        // initial tiling; a zero on an interior split line shows up as a
        // BoundaryZero, in which case all split lines move together
        let (nx, ny) = (initial_split.0.max(1), initial_split.1.max(1));
        let mut cells: Vec<(Window, i64)> = Vec::new();
        let mut tiled = false;
        'attempt: for attempt in 0..5 {
            cells.clear();
            let mut counted = 0i64;
            for cell in tile_window(&outer, nx, ny, 0.13 * attempt as f64) {
                match winding_number(family, &cell) {
                    Ok((c, _, _)) => {
                        counted += c;
                        if c > 0 {
                            cells.push((cell, c));
                        }
                    }
                    Err(GrushinError::BoundaryZero)
                    | Err(GrushinError::ContourTooClose(_)) => continue 'attempt,
                    Err(e) => return Err(e),
                }
            }
            if counted != total {
                return Err(GrushinError::CountMismatch {
                    boundary: total,
                    sum: counted,
                });
            }
            tiled = true;
            break;
        }
        if !tiled {
            return Err(GrushinError::BoundaryZero);
        }
        // parallel recursion over active cells
        let results: Result<Vec<Vec<ResonanceZero>>, GrushinError> = cells
            .par_iter()
            .map(|(cell, count)| localize_cell(family, *cell, *count, 0))
            .collect();
        for mut r in results?.into_iter() {
            zeros.append(&mut r);
        }
    }
    // deterministic order
    zeros.sort_by(|a, b| (a.z.re, a.z.im).partial_cmp(&(b.z.re, b.z.im)).unwrap());
    let sum: i64 = zeros.iter().map(|z| z.multiplicity as i64).sum();
    if sum != total {
        return Err(GrushinError::CountMismatch {
            boundary: total,
            sum,
        });
    }
    Ok(ResonanceList {
        window,
        zeros,
        total_count: total,
        boundary_max_abs: boundary_max,
    })
}

fn localize_cell(
    family: &dyn HolomorphicMapFamily,
    cell: Window,
    count: i64,
    depth: usize,
) -> Result<Vec<ResonanceZero>, GrushinError> {
    debug_assert!(count > 0);
    let isolated = count == 1 || cell.diameter() < 1e-6 || depth >= 40;
    if isolated {
        let center = C64::new(
            0.5 * (cell.re_min + cell.re_max),
            0.5 * (cell.im_min + cell.im_max),
        );
        if let Some((z, residual)) = newton_refine(family, center, count as usize) {
            // accept only refinements that stay in this cell; a Newton step
            // escaping the cell has drifted into another zero's basin
            let pad = 1e-3 * cell.diameter() + 1e-12;
            let inside = z.re >= cell.re_min - pad
                && z.re <= cell.re_max + pad
                && z.im >= cell.im_min - pad
                && z.im <= cell.im_max + pad;
            if inside || (cell.diameter() < 1e-9 && depth >= 40) {
                return Ok(vec![ResonanceZero {
                    z,
                    multiplicity: count as usize,
                    residual,
                }]);
            }
        }
        // refinement failed: keep subdividing until the basin isolates
    }
    let mut frac = (0.5, 0.5);
    for attempt in 0..5 {
        let children = cell.split(frac.0, frac.1);
        let mut ok = true;
        let mut sum = 0i64;
        let mut active: Vec<(Window, i64)> = Vec::new();
        for ch in children.iter() {
            match winding_number(family, ch) {
                Ok((c, _, _)) => {
                    sum += c;
                    if c > 0 {
                        active.push((*ch, c));
                    }
                }
                Err(GrushinError::BoundaryZero) | Err(GrushinError::ContourTooClose(_)) => {
                    ok = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if ok {
            if sum != count {
                return Err(GrushinError::CountMismatch {
                    boundary: count,
                    sum,
                });
            }
            let mut out = Vec::new();
            for (ch, c) in active {
                out.extend(localize_cell(family, ch, c, depth + 1)?);
            }
            return Ok(out);
        }
        // a zero sits on a split line: move the split point and retry
        frac = (
            0.5 + 0.11 * (attempt as f64 + 1.0) / 5.0,
            0.5 - 0.07 * (attempt as f64 + 1.0) / 5.0,
        );
    }
    Err(GrushinError::BoundaryZero)
}

/// `E(z) = integral_0^T exp(-it(A - z)/h) dt` via the Hermitian
/// eigendecomposition of `A`, and the residual of the forward-parametrix
/// identity `(i/h)(A - z) E = I - exp(-iT(A - z)/h)`.
pub fn forward_parametrix_check(a: &DMatrix<C64>, z: C64, t_final: f64, h: f64) -> f64 {
    let n = a.nrows();
    let (vals, q) = linalg::hermitian_eigen(a);
    // phi(mu) = integral_0^T e^{-it mu/h} dt = T f(T mu / h),
    // f(w) = (1 - e^{-iw})/(iw), safe near w = 0
    let f_safe = |w: C64| -> C64 {
        if w.norm() < 1e-4 {
            let iw = C64::new(0.0, 1.0) * w;
            C64::new(1.0, 0.0) - iw / 2.0 + iw * iw / 6.0 - iw * iw * iw / 24.0
        } else {
            (C64::new(1.0, 0.0) - (-C64::new(0.0, 1.0) * w).exp()) / (C64::new(0.0, 1.0) * w)
        }
    };
    let mut e_diag = DVector::<C64>::zeros(n);
    let mut prop_diag = DVector::<C64>::zeros(n);
    for j in 0..n {
        let mu = C64::new(vals[j], 0.0) - z;
        let w = mu * t_final / h;
        e_diag[j] = f_safe(w) * t_final;
        prop_diag[j] = (-C64::new(0.0, 1.0) * w).exp();
    }
    let e = &q * DMatrix::from_diagonal(&e_diag) * q.adjoint();
    let prop = &q * DMatrix::from_diagonal(&prop_diag) * q.adjoint();
    let idm = DMatrix::<C64>::identity(n, n);
    let az = a - &idm * z;
    let lhs = az * &e * C64::new(0.0, 1.0 / h);
    linalg::operator_norm(&(lhs - (idm - prop)))
}
