//! Direct 1D resonance computation by exterior complex scaling.
//!
//! The configuration axis is deformed to the totally real contour
//! `x + i f(x)` with `f = 0` on `[-R, R]` and `f = x tan(theta)` beyond
//! `2R`. Resonances become genuine eigenvalues of the scaled operator in
//! the sector `arg(z + 1) > -2 theta`, independent of `theta` and of the
//! deformation details; that independence is the cross-check this module
//! provides against the quantum-map pipeline.

use crate::linalg::{self, BandedMatrix};
use crate::quantum_maps::smooth_step;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScalingError {
    #[error("grid too coarse: npts = {npts} below the oscillation bound {bound}")]
    ResolutionError { npts: usize, bound: usize },
    #[error("no eigenvalue was stable across the scaling angles")]
    NoStableEigenvalues,
    #[error("domain must satisfy L > 2R (got L = {0}, R = {1})")]
    DomainTooSmall(f64, f64),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// Derivative of [`smooth_step`].
fn smooth_step_deriv(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let g = (-1.0 / s).exp();
    let gh = (-1.0 / (1.0 - s)).exp();
    let d = g + gh;
    g * gh * (1.0 / (s * s) + 1.0 / ((1.0 - s) * (1.0 - s))) / (d * d)
}

/// Semiclassically scaled angle `theta(h) = m1 h log(1/h)`, the option used
/// when the spectral window itself shrinks with `h`.
pub fn theta_of_h(m1: f64, h: f64) -> f64 {
    m1 * h * (1.0 / h).ln()
}

/// Exterior-scaling contour `x -> x + i f(x)` with
/// `f(x) = x tan(theta) sigma((|x| - R)/R)`.
#[derive(Debug, Clone, Copy)]
pub struct ScalingContour {
    pub theta: f64,
    pub r: f64,
}

impl ScalingContour {
    pub fn new(theta: f64, r: f64) -> Self {
        assert!((0.0..1.0).contains(&theta), "theta in [0, 1) expected");
        assert!(r > 0.0);
        Self { theta, r }
    }

    pub fn f(&self, x: f64) -> f64 {
        x * self.theta.tan() * smooth_step((x.abs() - self.r) / self.r)
    }

    pub fn f_prime(&self, x: f64) -> f64 {
        let s = (x.abs() - self.r) / self.r;
        let t = self.theta.tan();
        t * smooth_step(s) + (x * t) * smooth_step_deriv(s) * x.signum() / self.r
    }

    /// Contour point `x + i f(x)`.
    pub fn point(&self, x: f64) -> C64 {
        C64::new(x, self.f(x))
    }

    /// `1 + i f'(x)`, the contour velocity.
    pub fn velocity(&self, x: f64) -> C64 {
        C64::new(1.0, self.f_prime(x))
    }
}

/// 1D potential that admits evaluation at complex arguments.
pub trait AnalyticPotential1d: Sync {
    fn eval_complex(&self, z: C64) -> C64;

    fn eval(&self, x: f64) -> f64 {
        self.eval_complex(C64::new(x, 0.0)).re
    }
}

/// The zero potential.
#[derive(Debug, Clone, Copy)]
pub struct FreePotential1d;

impl AnalyticPotential1d for FreePotential1d {
    fn eval_complex(&self, _z: C64) -> C64 {
        C64::new(0.0, 0.0)
    }
}

/// Smoothed square barrier
/// `V(x) = (V0/4) (1 + tanh((a - x)/w)) (1 + tanh((x + a)/w))`,
/// analytic in the strip `|Im x| < pi w / 2`.
#[derive(Debug, Clone, Copy)]
pub struct SmoothBarrier {
    pub height: f64,
    pub half_width: f64,
    pub edge_width: f64,
}

impl AnalyticPotential1d for SmoothBarrier {
    fn eval_complex(&self, z: C64) -> C64 {
        let a = self.half_width;
        let w = self.edge_width;
        let one = C64::new(1.0, 0.0);
        (one + ((C64::new(a, 0.0) - z) / w).tanh()) * (one + ((z + a) / w).tanh())
            * (self.height / 4.0)
    }
}

/// Scaled principal symbol `p_theta(x, xi) = (xi/(1 + i f'))^2 + V(x + i f) - 1`.
pub fn scaled_symbol(
    potential: &dyn AnalyticPotential1d,
    contour: &ScalingContour,
    x: f64,
    xi: f64,
) -> C64 {
    let v = contour.velocity(x);
    let k = C64::new(xi, 0.0) / v;
    k * k + potential.eval_complex(contour.point(x)) - 1.0
}

/// Complex-scaled Schrödinger operator discretized on a uniform grid with
/// Dirichlet truncation at `x = -L` and `x = L`.
pub struct ScaledOperator {
    /// Interior grid nodes.
    pub grid: Vec<f64>,
    pub matrix: BandedMatrix,
    pub h: f64,
    pub theta: f64,
    pub half_length: f64,
}

impl ScaledOperator {
    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        self.matrix.to_dense()
    }

    /// `max |A - A^T|` entry: exact complex symmetry of the discretization.
    pub fn symmetry_defect(&self) -> f64 {
        let d = self.to_dense();
        let r = &d - d.transpose();
        r.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// All eigenvalues by the dense solver; use only for modest grids.
    pub fn dense_eigenvalues(&self) -> Result<Vec<C64>, ScalingError> {
        Ok(linalg::complex_eigenvalues(&self.to_dense())?)
    }

    /// Eigenvalues nearest `sigma` by shift-invert Arnoldi on the banded
    /// factorization, each polished by inverse iteration with a direct
    /// residual.
    pub fn eigenvalues_near(
        &self,
        sigma: C64,
        count: usize,
        krylov: usize,
    ) -> Result<Vec<(C64, f64)>, ScalingError> {
        let n = self.dim();
        let shifted = self.shifted(sigma);
        let lu = shifted.lu()?;
        let ritz = linalg::shift_invert_arnoldi(n, sigma, krylov, |x| lu.solve(x), 1234)?;
        let mut out = Vec::new();
        for rv in ritz.into_iter().take(2 * count) {
            if let Some(polished) = self.refine_eigenvalue(rv.value) {
                out.push(polished);
            }
            if out.len() >= 2 * count {
                break;
            }
        }
        // dedupe
        out.sort_by(|a, b| (a.0.re, a.0.im).partial_cmp(&(b.0.re, b.0.im)).unwrap());
        out.dedup_by(|a, b| (a.0 - b.0).norm() < 1e-9);
        out.sort_by(|a, b| (a.0 - sigma).norm().total_cmp(&(b.0 - sigma).norm()));
        out.truncate(count);
        Ok(out)
    }

    fn shifted(&self, sigma: C64) -> BandedMatrix {
        let mut m = self.matrix.clone();
        for i in 0..self.dim() {
            m.add(i, i, -sigma);
        }
        m
    }

    /// Inverse iteration with refactorization; returns the refined
    /// eigenvalue and the direct residual `||A v - lambda v||/||v||`.
    /// The vector is allowed to settle on the nearest eigenvector before
    /// the eigenvalue update starts, so the polish cannot drift to a
    /// better-overlapping mode further away.
    fn refine_eigenvalue(&self, lambda0: C64) -> Option<(C64, f64)> {
        use rand::Rng;
        use rand::SeedableRng;
        let n = self.dim();
        let mut lambda = lambda0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
            lambda0.re.to_bits() ^ lambda0.im.to_bits().rotate_left(17),
        );
        let mut v = DVector::from_fn(n, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        v /= C64::new(v.norm(), 0.0);
        for it in 0..5 {
            let lu = match self.shifted(lambda).lu() {
                Ok(lu) => lu,
                Err(_) => break, // exactly singular: lambda has converged
            };
            let w = lu.solve(&v);
            let nw = w.norm();
            if !nw.is_finite() || nw == 0.0 {
                return None;
            }
            if it >= 1 {
                // dominant eigenvalue of (A - lambda)^-1 along the iteration
                let nu: C64 = v.dotc(&w);
                lambda += 1.0 / nu;
            }
            v = w / C64::new(nw, 0.0);
        }
        let av = self.matrix.mul_vec(&v);
        let resid = (&av - &v * lambda).norm() / v.norm();
        Some((lambda, resid))
    }
}

/// Builds the scaled operator
/// `h^2 G^{1/2} D1^T G_half D1 G^{1/2} + V(x + i f(x)) - 1`
/// with `G = diag(1/(1 + i f'))` and `D1` the fourth-order staggered first
/// derivative; a complex-symmetric realization of
/// `-h^2 (1+if')^{-1} d/dx (1+if')^{-1} d/dx + V - 1` with the same
/// spectrum. Dirichlet truncation at `x = +-L`.
pub fn discretize_scaled(
    potential: &dyn AnalyticPotential1d,
    contour: &ScalingContour,
    h: f64,
    half_length: f64,
    npts: usize,
) -> Result<ScaledOperator, ScalingError> {
    if half_length <= 2.0 * contour.r {
        return Err(ScalingError::DomainTooSmall(half_length, contour.r));
    }
    let bound = (8.0 * half_length / (std::f64::consts::PI * h)).ceil() as usize;
    if npts < bound {
        return Err(ScalingError::ResolutionError { npts, bound });
    }
    let n = npts;
    let dx = 2.0 * half_length / (n + 1) as f64;
    let grid: Vec<f64> = (0..n)
        .map(|i| -half_length + (i + 1) as f64 * dx)
        .collect();
    // half-grid points m_j between nodes j and j+1 of the full grid
    let half: Vec<f64> = (0..=n)
        .map(|j| -half_length + (j as f64 + 0.5) * dx)
        .collect();
    let g_node: Vec<C64> = grid
        .iter()
        .map(|&x| (C64::new(1.0, 0.0) / contour.velocity(x)).sqrt())
        .collect();
    let g_half: Vec<C64> = half
        .iter()
        .map(|&x| C64::new(1.0, 0.0) / contour.velocity(x))
        .collect();

    // D1 rows: derivative at half point j from interior nodes; boundary
    // values are zero (Dirichlet). Stencil [27(u_{j+1}-u_j) - (u_{j+2}-u_{j-1})]/(24 dx)
    // in full-grid indexing; rows 0 and n fall back to the centred 2-point form.
    let d1_row = |j: usize| -> Vec<(usize, f64)> {
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(4);
        let mut push = |full_idx: isize, c: f64| {
            // full-grid node k corresponds to interior index k-1
            if full_idx >= 1 && full_idx <= n as isize {
                row.push((full_idx as usize - 1, c / dx));
            }
        };
        let j = j as isize;
        if j == 0 || j == n as isize {
            push(j, -1.0);
            push(j + 1, 1.0);
        } else {
            push(j, -27.0 / 24.0);
            push(j + 1, 27.0 / 24.0);
            push(j - 1, 1.0 / 24.0);
            push(j + 2, -1.0 / 24.0);
        }
        row
    };

    // A = h^2 G^{1/2} D1^T G_half D1 G^{1/2} + diag(V - 1)
    let mut a = BandedMatrix::zeros(n, 3, 3);
    for j in 0..=n {
        let row = d1_row(j);
        let gh = g_half[j];
        for &(c1, v1) in &row {
            for &(c2, v2) in &row {
                let contrib = gh * (v1 * v2) * h * h * g_node[c1] * g_node[c2];
                a.add(c1, c2, contrib);
            }
        }
    }
    for (i, &x) in grid.iter().enumerate() {
        let v = potential.eval_complex(contour.point(x));
        a.add(i, i, v - 1.0);
    }
    Ok(ScaledOperator {
        grid,
        matrix: a,
        h,
        theta: contour.theta,
        half_length,
    })
}

/// One theta-stable resonance.
#[derive(Debug, Clone, Copy)]
pub struct StableResonance {
    pub z: C64,
    /// Largest shift across consecutive scaling angles.
    pub theta_spread: f64,
    /// Worst direct eigen-residual across the angles.
    pub residual: f64,
}

/// Search parameters for [`resonances_direct`].
#[derive(Debug, Clone)]
pub struct DirectSearchParams {
    pub half_length: f64,
    pub npts: usize,
    pub contour_radius: f64,
    pub krylov: usize,
    pub per_shift: usize,
    /// Shift grid (real x imaginary) covering the window.
    pub shift_grid: (usize, usize),
    /// Maximal eigenvalue drift between consecutive angles.
    pub stability_tol: f64,
}

impl Default for DirectSearchParams {
    fn default() -> Self {
        Self {
            half_length: 5.0,
            npts: 4000,
            contour_radius: 2.0,
            krylov: 70,
            per_shift: 6,
            shift_grid: (3, 2),
            stability_tol: 1e-6,
        }
    }
}

/// Spectral window in the `z` plane.
#[derive(Debug, Clone, Copy)]
pub struct Window1d {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Window1d {
    pub fn contains(&self, z: C64) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im >= self.im_min && z.im <= self.im_max
    }
}

/// Eigenvalues of the scaled operator inside the window, filtered by
/// theta-stability: only eigenvalues moving less than `stability_tol`
/// between consecutive angles are reported.
pub fn resonances_direct(
    potential: &dyn AnalyticPotential1d,
    h: f64,
    window: Window1d,
    theta_list: &[f64],
    params: &DirectSearchParams,
) -> Result<Vec<StableResonance>, ScalingError> {
    assert!(theta_list.len() >= 2, "need at least two angles");
    for &theta in theta_list {
        // Fredholm sector: window must satisfy arg(z + 1) > -2 theta
        let corner = C64::new(window.re_min, window.im_min) + 1.0;
        assert!(
            corner.arg() > -2.0 * theta,
            "window outside the accessible sector for theta = {theta}"
        );
    }
    let (nre, nim) = params.shift_grid;
    let mut shifts: Vec<C64> = Vec::new();
    for k in 0..nre.max(1) {
        for j in 0..nim.max(1) {
            shifts.push(C64::new(
                window.re_min + (window.re_max - window.re_min) * (k as f64 + 0.5) / nre as f64,
                window.im_min + (window.im_max - window.im_min) * (j as f64 + 0.5) / nim as f64,
            ));
        }
    }
    let mut per_theta: Vec<Vec<(C64, f64)>> = Vec::new();
    for &theta in theta_list {
        let contour = ScalingContour::new(theta, params.contour_radius);
        let op = discretize_scaled(potential, &contour, h, params.half_length, params.npts)?;
        let mut found: Vec<(C64, f64)> = Vec::new();
        for &sigma in &shifts {
            for (z, resid) in op.eigenvalues_near(sigma, params.per_shift, params.krylov)? {
                if resid < 1e-8 && window.contains(z) {
                    found.push((z, resid));
                }
            }
        }
        found.sort_by(|a, b| (a.0.re, a.0.im).partial_cmp(&(b.0.re, b.0.im)).unwrap());
        found.dedup_by(|a, b| (a.0 - b.0).norm() < 1e-8);
        per_theta.push(found);
    }
    // match eigenvalues across consecutive angles by nearest neighbour
    let mut stable = Vec::new();
    for &(z0, r0) in &per_theta[0] {
        let mut ok = true;
        let mut spread: f64 = 0.0;
        let mut resid = r0;
        let mut cur = z0;
        for list in per_theta.iter().skip(1) {
            match list
                .iter()
                .min_by(|a, b| (a.0 - cur).norm().total_cmp(&(b.0 - cur).norm()))
            {
                Some(&(znext, rn)) if (znext - cur).norm() <= params.stability_tol => {
                    spread = spread.max((znext - cur).norm());
                    resid = resid.max(rn);
                    cur = znext;
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            stable.push(StableResonance {
                z: z0,
                theta_spread: spread,
                residual: resid,
            });
        }
    }
    if stable.is_empty() {
        return Err(ScalingError::NoStableEigenvalues);
    }
    Ok(stable)
}

/// Defect of the cutoff-resolvent identity
/// `chi (P_theta - z)^{-1} chi = chi (P - z)^{-1} chi` for `Im z > 0`,
/// measured in operator norm on the discretization by power iteration on
/// the difference.
pub fn cutoff_resolvent_defect(
    potential: &dyn AnalyticPotential1d,
    theta: f64,
    h: f64,
    z: C64,
    chi_support: f64,
    params: &DirectSearchParams,
) -> Result<f64, ScalingError> {
    assert!(z.im > 0.0, "the shared resolvent region is Im z > 0");
    let contour = ScalingContour::new(theta, params.contour_radius);
    assert!(chi_support < contour.r, "cutoff must vanish where f != 0");
    let op_theta = discretize_scaled(potential, &contour, h, params.half_length, params.npts)?;
    let flat = ScalingContour::new(0.0, params.contour_radius);
    let op_real = discretize_scaled(potential, &flat, h, params.half_length, params.npts)?;
    let n = op_theta.dim();
    let chi: Vec<f64> = op_theta
        .grid
        .iter()
        .map(|&x| smooth_step(2.0 * (chi_support - x.abs()) / chi_support))
        .collect();
    let lu_t = op_theta.shifted(z).lu()?;
    let lu_r = op_real.shifted(z).lu()?;
    // adjoint systems for the power iteration on D^H D
    let adj_t = {
        let mut m = BandedMatrix::zeros(n, 3, 3);
        for j in 0..n {
            for i in j.saturating_sub(3)..=(j + 3).min(n - 1) {
                m.set(i, j, op_theta.matrix.get(j, i).conj());
            }
        }
        for i in 0..n {
            m.add(i, i, -z.conj());
        }
        m.lu()?
    };
    let adj_r = {
        let mut m = BandedMatrix::zeros(n, 3, 3);
        for j in 0..n {
            for i in j.saturating_sub(3)..=(j + 3).min(n - 1) {
                m.set(i, j, op_real.matrix.get(j, i).conj());
            }
        }
        for i in 0..n {
            m.add(i, i, -z.conj());
        }
        m.lu()?
    };
    let apply_chi = |v: &DVector<C64>| DVector::from_fn(n, |i, _| v[i] * chi[i]);
    let apply = |v: &DVector<C64>| {
        let cv = apply_chi(v);
        apply_chi(&(lu_t.solve(&cv) - lu_r.solve(&cv)))
    };
    let apply_adj = |v: &DVector<C64>| {
        let cv = apply_chi(v);
        apply_chi(&(adj_t.solve(&cv) - adj_r.solve(&cv)))
    };
    let mut v = DVector::from_fn(n, |i, _| C64::new((0.3 * i as f64).sin(), (0.17 * i as f64).cos()));
    v /= C64::new(v.norm(), 0.0);
    let mut norm_est = 0.0;
    for _ in 0..25 {
        let w = apply_adj(&apply(&v));
        let nw = w.norm();
        if nw == 0.0 {
            return Ok(0.0);
        }
        norm_est = nw.sqrt();
        v = w / C64::new(nw, 0.0);
    }
    Ok(norm_est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn contour_constraints() {
        let c = ScalingContour::new(0.4, 1.5);
        // f vanishes identically inside |x| <= R
        for x in [-1.4f64, -0.3, 0.0, 0.9, 1.5] {
            assert_eq!(c.f(x), 0.0);
            assert_eq!(c.f_prime(x), 0.0);
        }
        // beyond 2R the contour is exactly x tan(theta)
        for x in [3.01f64, 4.0, -5.3] {
            assert_relative_eq!(c.f(x), x * 0.4f64.tan(), epsilon = 1e-12);
            assert_relative_eq!(c.f_prime(x), 0.4f64.tan(), epsilon = 1e-10);
        }
        // f' = O(theta) everywhere
        let bound = 14.0 * 0.4f64.tan();
        for k in 0..200 {
            let x = -6.0 + 0.06 * k as f64;
            assert!(c.f_prime(x).abs() <= bound);
        }
    }

    #[test]
    fn contour_derivative_matches_fd() {
        let c = ScalingContour::new(0.3, 2.0);
        for x in [2.3f64, 2.9, 3.5, -2.7, -3.9] {
            let h = 1e-6;
            let fd = (c.f(x + h) - c.f(x - h)) / (2.0 * h);
            assert_relative_eq!(c.f_prime(x), fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn scaled_symbol_theta_zero_unchanged() {
        let pot = SmoothBarrier {
            height: 1.0,
            half_width: 1.0,
            edge_width: 0.1,
        };
        let c = ScalingContour::new(0.0, 2.0);
        for (x, xi) in [(0.2, 0.4), (1.5, -0.3), (3.0, 1.1)] {
            let p = scaled_symbol(&pot, &c, x, xi);
            let expect = xi * xi + pot.eval(x) - 1.0;
            assert!((p - C64::new(expect, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn scaled_symbol_full_rotation_free() {
        // beyond 2R with V = 0: p_theta = xi^2 e^{-2 i theta} cos^2(...) form;
        // to leading order Im p_theta = -2 theta xi^2 + O(theta^2)
        let theta = 0.05;
        let c = ScalingContour::new(theta, 1.0);
        let x = 3.0;
        for xi in [0.5f64, 1.0, 1.7] {
            let p = scaled_symbol(&FreePotential1d, &c, x, xi);
            let exact = C64::new(xi, 0.0) * C64::new(xi, 0.0)
                / (C64::new(1.0, theta.tan()) * C64::new(1.0, theta.tan()))
                - 1.0;
            assert!((p - exact).norm() < 1e-12);
            let lead = -2.0 * theta * xi * xi;
            assert!((p.im - lead).abs() < 3.0 * theta * theta * xi * xi);
        }
    }

    #[test]
    fn scaled_symbol_sign_in_exterior() {
        // |p| <= delta and |x| >= 2R force Im p_theta <= -C theta
        let theta = 0.35;
        let c = ScalingContour::new(theta, 1.0);
        let delta = 0.1;
        let mut worst = f64::NEG_INFINITY;
        for k in 0..60 {
            let x = 2.0 + 0.1 * k as f64;
            for j in 0..120 {
                let xi = 0.5 + 0.01 * j as f64;
                let p_real = xi * xi - 1.0;
                if p_real.abs() <= delta {
                    let p = scaled_symbol(&FreePotential1d, &c, x, xi);
                    worst = worst.max(p.im);
                }
            }
        }
        assert!(
            worst <= -0.5 * theta,
            "Im p_theta = {worst} not pushed below -C theta"
        );
    }

    #[test]
    fn discretization_is_hermitian_at_theta_zero() {
        let pot = SmoothBarrier {
            height: 1.0,
            half_width: 1.0,
            edge_width: 0.1,
        };
        let c = ScalingContour::new(0.0, 2.0);
        let op = discretize_scaled(&pot, &c, 0.3, 4.2, 160).unwrap();
        let d = op.to_dense();
        let herm = (&d - d.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(herm < 1e-12);
    }

    #[test]
    fn discretization_complex_symmetric_at_all_theta() {
        let pot = SmoothBarrier {
            height: 1.0,
            half_width: 1.0,
            edge_width: 0.1,
        };
        for theta in [0.1, 0.3, 0.5] {
            let c = ScalingContour::new(theta, 1.8);
            let op = discretize_scaled(&pot, &c, 0.3, 4.0, 160).unwrap();
            assert!(op.symmetry_defect() < 1e-12);
        }
    }

    #[test]
    fn free_dirichlet_spectrum() {
        // theta = 0, V = 0: eigenvalues h^2 (k pi / 2L)^2 - 1
        let h = 0.5;
        let l = 3.0;
        let c = ScalingContour::new(0.0, 1.4);
        let op = discretize_scaled(&FreePotential1d, &c, h, l, 400).unwrap();
        let mut ev = op.dense_eigenvalues().unwrap();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        for (k, e) in ev.iter().take(5).enumerate() {
            let expect = h * h
                * ((k as f64 + 1.0) * std::f64::consts::PI / (2.0 * l)).powi(2)
                - 1.0;
            assert!(
                (e.re - expect).abs() < 2e-4 && e.im.abs() < 1e-10,
                "mode {k}: got {e}, expect {expect}"
            );
        }
    }

    #[test]
    fn resolution_bound_enforced() {
        let c = ScalingContour::new(0.3, 1.0);
        let res = discretize_scaled(&FreePotential1d, &c, 0.05, 4.0, 100);
        assert!(matches!(res, Err(ScalingError::ResolutionError { .. })));
    }

    #[test]
    fn continuum_rotates_with_theta() {
        // V = 0, small unscaled core: discrete continuum eigenvalues align
        // along arg(z + 1) ~ -2 theta
        let theta: f64 = 0.25;
        let h = 0.25;
        let c = ScalingContour::new(theta, 0.35);
        let op = discretize_scaled(&FreePotential1d, &c, h, 5.0, 520).unwrap();
        let ev = op.dense_eigenvalues().unwrap();
        let band: Vec<C64> = ev
            .iter()
            .copied()
            .filter(|z| {
                let s = *z + 1.0;
                s.norm() > 0.2 && s.norm() < 1.5
            })
            .collect();
        assert!(!band.is_empty());
        let on_ray = band
            .iter()
            .filter(|z| ((**z + 1.0).arg() + 2.0 * theta).abs() < 0.25)
            .count();
        assert!(
            on_ray * 2 >= band.len(),
            "only {on_ray} of {} rotated eigenvalues",
            band.len()
        );
        // and none drift into the upper half plane
        assert!(ev.iter().all(|z| z.im < 1e-8));
    }

    #[test]
    fn grid_refinement_cauchy() {
        // isolated barrier resonance under grid doubling
        let pot = SmoothBarrier {
            height: 1.0,
            half_width: 1.0,
            edge_width: 0.08,
        };
        let h = 0.1;
        let c = ScalingContour::new(0.35, 2.0);
        let sigma = C64::new(0.06, -0.01);
        let coarse = discretize_scaled(&pot, &c, h, 5.0, 1800).unwrap();
        let fine = discretize_scaled(&pot, &c, h, 5.0, 3600).unwrap();
        let zc = coarse.eigenvalues_near(sigma, 1, 60).unwrap()[0].0;
        let zf = fine.eigenvalues_near(sigma, 1, 60).unwrap()[0].0;
        assert!(
            (zc - zf).norm() < 1e-6,
            "refinement moved eigenvalue by {:.2e}",
            (zc - zf).norm()
        );
    }

    #[test]
    fn free_potential_has_no_stable_resonances() {
        let window = Window1d {
            re_min: -0.2,
            re_max: 0.2,
            im_min: -0.08,
            im_max: -0.01,
        };
        let params = DirectSearchParams {
            half_length: 4.0,
            npts: 700,
            contour_radius: 1.5,
            krylov: 40,
            per_shift: 4,
            shift_grid: (3, 2),
            stability_tol: 1e-6,
        };
        let res = resonances_direct(&FreePotential1d, 0.08, window, &[0.3, 0.4], &params);
        assert!(matches!(res, Err(ScalingError::NoStableEigenvalues)));
    }
}
