//! Classical Hamiltonian dynamics: flow and tangent (variational) flow by
//! symplectic splitting, escape times, trapped-set sampling and
//! hyperbolicity diagnostics.
//!
//! The kinetic normalization follows `x' = 2 xi`, so the symbol of the
//! Schrödinger family is `p(x, xi) = |xi|^2 + V(x) - 1` and return times are
//! measured in the same clock as the quantum phases downstream.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhaseFlowError {
    #[error("trajectory coordinate exceeded {0:.1e}: numerically escaping orbit")]
    StepOverflow(f64),
    #[error("no grid point survived the escape-time threshold")]
    EmptySample,
    #[error("invalid phase point: non-finite coordinate")]
    NonFinite,
    #[error("invalid step: dt must be positive and |t|/dt <= 1e8")]
    BadStep,
}

const OVERFLOW_LIMIT: f64 = 1e9;

/// A point `(x, xi)` of phase space `T*R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, xi: Vec<f64>) -> Result<Self, PhaseFlowError> {
        if x.len() != xi.len()
            || x.iter().chain(xi.iter()).any(|v| !v.is_finite())
        {
            return Err(PhaseFlowError::NonFinite);
        }
        Ok(Self { x, xi })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Euclidean distance in phase space.
    pub fn distance(&self, other: &Self) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .chain(self.xi.iter().zip(&other.xi))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn speed_sq(&self) -> f64 {
        self.xi.iter().map(|v| v * v).sum()
    }
}

/// Smooth potential on `R^n` with gradient and Hessian evaluators.
pub trait Potential: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    fn hessian(&self, x: &[f64], out: &mut DMatrix<f64>) {
        // central differences of the gradient
        let n = self.dim();
        let h = 1e-6;
        let mut xp = x.to_vec();
        let mut gp = vec![0.0; n];
        let mut gm = vec![0.0; n];
        for j in 0..n {
            xp[j] = x[j] + h;
            self.gradient(&xp, &mut gp);
            xp[j] = x[j] - h;
            self.gradient(&xp, &mut gm);
            xp[j] = x[j];
            for i in 0..n {
                out[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        // symmetrize
        for i in 0..n {
            for j in (i + 1)..n {
                let s = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
    }
}

/// The zero potential (free motion).
#[derive(Debug, Clone, Copy)]
pub struct FreePotential {
    pub dim: usize,
}

impl Potential for FreePotential {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn hessian(&self, _x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
    }
}

/// Three Gaussian bumps of height 2 centred on the unit circle,
/// `V(x) = 2 sum_k exp(-R |x - c_k|^2)` with
/// `c_k = (cos(2 pi k/3), sin(2 pi k/3))`.
///
/// For stiffness `R` large enough the flow is hyperbolic on the trapped set
/// at energies near zero; the channels between bump pairs carry the three
/// symmetric bouncing orbits.
#[derive(Debug, Clone)]
pub struct ThreeBumpPotential {
    pub stiffness: f64,
    centers: [[f64; 2]; 3],
}

impl ThreeBumpPotential {
    pub fn new(stiffness: f64) -> Self {
        let mut centers = [[0.0; 2]; 3];
        for (k, c) in centers.iter_mut().enumerate() {
            let ang = 2.0 * std::f64::consts::PI * (k as f64 + 1.0) / 3.0;
            *c = [ang.cos(), ang.sin()];
        }
        Self { stiffness, centers }
    }

    pub fn centers(&self) -> &[[f64; 2]; 3] {
        &self.centers
    }
}

impl Potential for ThreeBumpPotential {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r = self.stiffness;
        self.centers
            .iter()
            .map(|c| {
                let d0 = x[0] - c[0];
                let d1 = x[1] - c[1];
                2.0 * (-r * (d0 * d0 + d1 * d1)).exp()
            })
            .sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let r = self.stiffness;
        out.fill(0.0);
        for c in &self.centers {
            let d0 = x[0] - c[0];
            let d1 = x[1] - c[1];
            let e = (-r * (d0 * d0 + d1 * d1)).exp();
            out[0] += -4.0 * r * e * d0;
            out[1] += -4.0 * r * e * d1;
        }
    }

    fn hessian(&self, x: &[f64], out: &mut DMatrix<f64>) {
        let r = self.stiffness;
        out.fill(0.0);
        for c in &self.centers {
            let d = [x[0] - c[0], x[1] - c[1]];
            let e = (-r * (d[0] * d[0] + d[1] * d[1])).exp();
            for i in 0..2 {
                for j in 0..2 {
                    out[(i, j)] += 8.0 * r * r * e * d[i] * d[j];
                }
                out[(i, i)] += -4.0 * r * e;
            }
        }
    }
}

/// Potential backed by closures; derivatives fall back to finite differences
/// when not supplied.
pub struct FnPotential {
    dim: usize,
    value: Box<dyn Fn(&[f64]) -> f64 + Sync + Send>,
    gradient: Option<Box<dyn Fn(&[f64], &mut [f64]) + Sync + Send>>,
}

impl FnPotential {
    pub fn new(dim: usize, value: impl Fn(&[f64]) -> f64 + Sync + Send + 'static) -> Self {
        Self {
            dim,
            value: Box::new(value),
            gradient: None,
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&[f64], &mut [f64]) + Sync + Send + 'static,
    ) -> Self {
        self.gradient = Some(Box::new(gradient));
        self
    }
}

impl Potential for FnPotential {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        if let Some(g) = &self.gradient {
            g(x, out);
            return;
        }
        let h = 1e-6;
        let mut xp = x.to_vec();
        for j in 0..self.dim {
            xp[j] = x[j] + h;
            let vp = (self.value)(&xp);
            xp[j] = x[j] - h;
            let vm = (self.value)(&xp);
            xp[j] = x[j];
            out[j] = (vp - vm) / (2.0 * h);
        }
    }
}

/// A separable Hamiltonian `p = T(xi) + U(x)`, the shape both the
/// Schrödinger symbol and the section normal form share.
pub trait Hamiltonian: Sync {
    fn dim(&self) -> usize;
    fn kinetic(&self, xi: &[f64]) -> f64;
    fn kinetic_gradient(&self, xi: &[f64], out: &mut [f64]);
    fn kinetic_hessian(&self, xi: &[f64], out: &mut DMatrix<f64>);
    fn potential_term(&self, x: &[f64]) -> f64;
    fn potential_gradient(&self, x: &[f64], out: &mut [f64]);
    fn potential_hessian(&self, x: &[f64], out: &mut DMatrix<f64>);

    /// The symbol `p(x, xi)`.
    fn symbol(&self, rho: &PhasePoint) -> f64 {
        self.kinetic(&rho.xi) + self.potential_term(&rho.x)
    }
}

/// Schrödinger family: `p(x, xi) = |xi|^2 + V(x) - 1`.
pub struct HamiltonianSystem<P: Potential> {
    pub potential: P,
    /// Radius of the ball outside which `V` is negligible.
    pub interaction_radius: f64,
}

impl<P: Potential> HamiltonianSystem<P> {
    pub fn new(potential: P, interaction_radius: f64) -> Self {
        Self {
            potential,
            interaction_radius,
        }
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    /// Checks `grad V` against central differences of `V` at the given test
    /// points; returns the worst relative mismatch.
    pub fn gradient_consistency(&self, points: &[Vec<f64>]) -> f64 {
        let n = self.dim();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut g = vec![0.0; n];
        let mut xp;
        for x in points {
            self.potential.gradient(x, &mut g);
            let scale = 1.0 + g.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for j in 0..n {
                xp = x.clone();
                xp[j] = x[j] + h;
                let vp = self.potential.value(&xp);
                xp[j] = x[j] - h;
                let vm = self.potential.value(&xp);
                let fd = (vp - vm) / (2.0 * h);
                worst = worst.max((fd - g[j]).abs() / scale);
            }
        }
        worst
    }
}

impl<P: Potential> Hamiltonian for HamiltonianSystem<P> {
    fn dim(&self) -> usize {
        self.potential.dim()
    }
    fn kinetic(&self, xi: &[f64]) -> f64 {
        xi.iter().map(|v| v * v).sum()
    }
    fn kinetic_gradient(&self, xi: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(xi) {
            *o = 2.0 * v;
        }
    }
    fn kinetic_hessian(&self, _xi: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for i in 0..self.dim() {
            out[(i, i)] = 2.0;
        }
    }
    fn potential_term(&self, x: &[f64]) -> f64 {
        self.potential.value(x) - 1.0
    }
    fn potential_gradient(&self, x: &[f64], out: &mut [f64]) {
        self.potential.gradient(x, out);
    }
    fn potential_hessian(&self, x: &[f64], out: &mut DMatrix<f64>) {
        self.potential.hessian(x, out);
    }
}

/// Transport normal form `p = xi_n`, used to exercise the section machinery
/// in Darboux coordinates.
pub struct NormalFormHamiltonian {
    pub dim: usize,
}

impl Hamiltonian for NormalFormHamiltonian {
    fn dim(&self) -> usize {
        self.dim
    }
    fn kinetic(&self, xi: &[f64]) -> f64 {
        xi[self.dim - 1]
    }
    fn kinetic_gradient(&self, _xi: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[self.dim - 1] = 1.0;
    }
    fn kinetic_hessian(&self, _xi: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
    }
    fn potential_term(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn potential_gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn potential_hessian(&self, _x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
    }
}

/// Hamilton vector field `(dT/dxi, -dU/dx)` at `rho`; for the Schrödinger
/// symbol this is `(2 xi, -grad V)`.
pub fn hamilton_vector_field<H: Hamiltonian + ?Sized>(sys: &H, rho: &PhasePoint) -> PhasePoint {
    let n = sys.dim();
    let mut dx = vec![0.0; n];
    let mut dxi = vec![0.0; n];
    sys.kinetic_gradient(&rho.xi, &mut dx);
    sys.potential_gradient(&rho.x, &mut dxi);
    for v in dxi.iter_mut() {
        *v = -*v;
    }
    PhasePoint { x: dx, xi: dxi }
}

/// Jacobian of the flow map, a `2n x 2n` real matrix in `(x, xi)` ordering.
#[derive(Debug, Clone)]
pub struct TangentFrame {
    pub j: DMatrix<f64>,
}

impl TangentFrame {
    pub fn identity(n: usize) -> Self {
        Self {
            j: DMatrix::identity(2 * n, 2 * n),
        }
    }

    pub fn det(&self) -> f64 {
        self.j.clone().lu().determinant()
    }

    /// Max-norm of `J^T O J - O` with `O` the standard symplectic form in
    /// `(x, xi)` block ordering.
    pub fn symplectic_defect(&self) -> f64 {
        symplectic_defect(&self.j)
    }
}

/// `max |(J^T O J - O)_{ij}|` for a square matrix of even dimension.
pub fn symplectic_defect(j: &DMatrix<f64>) -> f64 {
    let d = j.nrows();
    assert!(d % 2 == 0);
    let n = d / 2;
    let mut omega = DMatrix::<f64>::zeros(d, d);
    for i in 0..n {
        omega[(i, n + i)] = 1.0;
        omega[(n + i, i)] = -1.0;
    }
    let res = j.transpose() * &omega * j - omega;
    res.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

struct Stepper<'a, H: Hamiltonian + ?Sized> {
    sys: &'a H,
    grad_u: Vec<f64>,
    grad_t: Vec<f64>,
    hess: DMatrix<f64>,
    /// Tangent propagation toggled off for plain flow integration.
    with_tangent: bool,
}

// Yoshida's fourth-order composition weights for the Strang splitting.
const YOSHIDA_W1: f64 = 1.351207191959657; // 1/(2 - 2^(1/3))
const YOSHIDA_W0: f64 = -1.702414383919315; // -2^(1/3)/(2 - 2^(1/3))

impl<'a, H: Hamiltonian + ?Sized> Stepper<'a, H> {
    fn new(sys: &'a H, with_tangent: bool) -> Self {
        let n = sys.dim();
        Self {
            sys,
            grad_u: vec![0.0; n],
            grad_t: vec![0.0; n],
            hess: DMatrix::zeros(n, n),
            with_tangent,
        }
    }

    /// One kick-drift-kick (Strang) substep of size `dt`.
    fn strang(&mut self, rho: &mut PhasePoint, j: Option<&mut DMatrix<f64>>, dt: f64) {
        let n = self.sys.dim();
        let half = 0.5 * dt;
        let mut jmat = j;

        self.sys.potential_gradient(&rho.x, &mut self.grad_u);
        if self.with_tangent {
            if let Some(j) = jmat.as_deref_mut() {
                self.sys.potential_hessian(&rho.x, &mut self.hess);
                kick_tangent(j, &self.hess, half, n);
            }
        }
        for i in 0..n {
            rho.xi[i] -= half * self.grad_u[i];
        }

        self.sys.kinetic_gradient(&rho.xi, &mut self.grad_t);
        if self.with_tangent {
            if let Some(j) = jmat.as_deref_mut() {
                self.sys.kinetic_hessian(&rho.xi, &mut self.hess);
                drift_tangent(j, &self.hess, dt, n);
            }
        }
        for i in 0..n {
            rho.x[i] += dt * self.grad_t[i];
        }

        self.sys.potential_gradient(&rho.x, &mut self.grad_u);
        if self.with_tangent {
            if let Some(j) = jmat.as_deref_mut() {
                self.sys.potential_hessian(&rho.x, &mut self.hess);
                kick_tangent(j, &self.hess, half, n);
            }
        }
        for i in 0..n {
            rho.xi[i] -= half * self.grad_u[i];
        }
    }

    /// Fourth-order step: Strang(w1 dt) Strang(w0 dt) Strang(w1 dt).
    fn step(&mut self, rho: &mut PhasePoint, mut j: Option<&mut DMatrix<f64>>, dt: f64) {
        self.strang(rho, j.as_deref_mut(), YOSHIDA_W1 * dt);
        self.strang(rho, j.as_deref_mut(), YOSHIDA_W0 * dt);
        self.strang(rho, j.as_deref_mut(), YOSHIDA_W1 * dt);
    }
}

/// xi -= tau * H * dx applied to the tangent frame (lower block update).
fn kick_tangent(j: &mut DMatrix<f64>, hess: &DMatrix<f64>, tau: f64, n: usize) {
    for col in 0..2 * n {
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += hess[(i, k)] * j[(k, col)];
            }
            j[(n + i, col)] -= tau * acc;
        }
    }
}

/// x += tau * H * dxi applied to the tangent frame (upper block update).
fn drift_tangent(j: &mut DMatrix<f64>, hess: &DMatrix<f64>, tau: f64, n: usize) {
    for col in 0..2 * n {
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += hess[(i, k)] * j[(n + k, col)];
            }
            j[(i, col)] += tau * acc;
        }
    }
}

/// Step-by-step driver over the fourth-order splitting, for callers that
/// need to watch the trajectory between steps (crossing detection).
pub struct FlowStepper<'a, H: Hamiltonian + ?Sized> {
    inner: Stepper<'a, H>,
    tangent: Stepper<'a, H>,
}

impl<'a, H: Hamiltonian + ?Sized> FlowStepper<'a, H> {
    pub fn new(sys: &'a H) -> Self {
        Self {
            inner: Stepper::new(sys, false),
            tangent: Stepper::new(sys, true),
        }
    }

    /// Advance `rho` by one composed step of (signed) size `dt`.
    pub fn step(&mut self, rho: &mut PhasePoint, dt: f64) {
        self.inner.step(rho, None, dt);
    }

    /// Advance `rho` and its tangent frame by one composed step.
    pub fn step_with_tangent(&mut self, rho: &mut PhasePoint, j: &mut DMatrix<f64>, dt: f64) {
        self.tangent.step(rho, Some(j), dt);
    }
}

fn check_step(t: f64, dt: f64) -> Result<(), PhaseFlowError> {
    if !(dt > 0.0) || !t.is_finite() || t.abs() / dt > 1e8 {
        return Err(PhaseFlowError::BadStep);
    }
    Ok(())
}

fn overflowed(rho: &PhasePoint) -> bool {
    rho.x
        .iter()
        .chain(rho.xi.iter())
        .any(|v| !v.is_finite() || v.abs() > OVERFLOW_LIMIT)
}

/// `Phi^t(rho0)` by the fourth-order symplectic splitting with step `dt`;
/// negative `t` integrates backwards.
pub fn integrate_flow<H: Hamiltonian + ?Sized>(
    sys: &H,
    rho0: &PhasePoint,
    t: f64,
    dt: f64,
) -> Result<PhasePoint, PhaseFlowError> {
    check_step(t, dt)?;
    let mut rho = rho0.clone();
    let mut stepper = Stepper::new(sys, false);
    let sdt = dt.copysign(if t < 0.0 { -1.0 } else { 1.0 });
    let nsteps = (t.abs() / dt).floor() as u64;
    let rem = t - sdt * nsteps as f64;
    for k in 0..nsteps {
        stepper.step(&mut rho, None, sdt);
        if k % 64 == 0 && overflowed(&rho) {
            return Err(PhaseFlowError::StepOverflow(OVERFLOW_LIMIT));
        }
    }
    if rem.abs() > 1e-300 {
        stepper.step(&mut rho, None, rem);
    }
    if overflowed(&rho) {
        return Err(PhaseFlowError::StepOverflow(OVERFLOW_LIMIT));
    }
    Ok(rho)
}

/// Full trajectory `(t_k, Phi^{t_k} rho0)` at every step.
pub fn integrate_flow_trajectory<H: Hamiltonian + ?Sized>(
    sys: &H,
    rho0: &PhasePoint,
    t: f64,
    dt: f64,
) -> Result<Vec<(f64, PhasePoint)>, PhaseFlowError> {
    check_step(t, dt)?;
    let mut rho = rho0.clone();
    let mut out = vec![(0.0, rho.clone())];
    let mut stepper = Stepper::new(sys, false);
    let sdt = dt.copysign(if t < 0.0 { -1.0 } else { 1.0 });
    let nsteps = (t.abs() / dt).floor() as u64;
    let rem = t - sdt * nsteps as f64;
    for k in 1..=nsteps {
        stepper.step(&mut rho, None, sdt);
        if overflowed(&rho) {
            return Err(PhaseFlowError::StepOverflow(OVERFLOW_LIMIT));
        }
        out.push((sdt * k as f64, rho.clone()));
    }
    if rem.abs() > 1e-300 {
        stepper.step(&mut rho, None, rem);
        if overflowed(&rho) {
            return Err(PhaseFlowError::StepOverflow(OVERFLOW_LIMIT));
        }
        out.push((t, rho.clone()));
    }
    Ok(out)
}

/// Endpoint and flow Jacobian from the variational equations, propagated by
/// the tangent maps of the same splitting substeps (hence exactly
/// symplectic up to roundoff).
pub fn integrate_with_tangent<H: Hamiltonian + ?Sized>(
    sys: &H,
    rho0: &PhasePoint,
    t: f64,
    dt: f64,
) -> Result<(PhasePoint, TangentFrame), PhaseFlowError> {
    check_step(t, dt)?;
    let n = sys.dim();
    let mut rho = rho0.clone();
    let mut j = DMatrix::<f64>::identity(2 * n, 2 * n);
    let mut stepper = Stepper::new(sys, true);
    let sdt = dt.copysign(if t < 0.0 { -1.0 } else { 1.0 });
    let nsteps = (t.abs() / dt).floor() as u64;
    let rem = t - sdt * nsteps as f64;
    for k in 0..nsteps {
        stepper.step(&mut rho, Some(&mut j), sdt);
        if k % 64 == 0 && (overflowed(&rho) || j.iter().any(|v| v.abs() > OVERFLOW_LIMIT)) {
            return Err(PhaseFlowError::StepOverflow(OVERFLOW_LIMIT));
        }
    }
    if rem.abs() > 1e-300 {
        stepper.step(&mut rho, Some(&mut j), rem);
    }
    if overflowed(&rho) {
        return Err(PhaseFlowError::StepOverflow(OVERFLOW_LIMIT));
    }
    Ok((rho, TangentFrame { j }))
}

/// Jacobian of `Phi^t` at `rho0`.
pub fn tangent_flow<H: Hamiltonian + ?Sized>(
    sys: &H,
    rho0: &PhasePoint,
    t: f64,
    dt: f64,
) -> Result<TangentFrame, PhaseFlowError> {
    integrate_with_tangent(sys, rho0, t, dt).map(|(_, f)| f)
}

/// First time `|x(t)| >= r` in either time direction, refined by bisection
/// between steps and capped at `t_max` (the cap encodes non-escape).
pub fn escape_time<P: Potential>(
    sys: &HamiltonianSystem<P>,
    rho: &PhasePoint,
    r: f64,
    t_max: f64,
    dt: f64,
) -> Result<f64, PhaseFlowError> {
    assert!(
        r >= sys.interaction_radius,
        "escape radius must cover the interaction region"
    );
    let fwd = directional_escape(sys, rho, r, t_max, dt)?;
    let mut back_rho = rho.clone();
    for v in back_rho.xi.iter_mut() {
        *v = -*v;
    }
    let bwd = directional_escape(sys, &back_rho, r, t_max, dt)?;
    Ok(fwd.min(bwd))
}

fn directional_escape<P: Potential>(
    sys: &HamiltonianSystem<P>,
    rho: &PhasePoint,
    r: f64,
    t_max: f64,
    dt: f64,
) -> Result<f64, PhaseFlowError> {
    check_step(t_max, dt)?;
    let radius = |p: &PhasePoint| p.x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if radius(rho) >= r {
        return Ok(0.0);
    }
    let mut stepper = Stepper::new(sys, false);
    let mut cur = rho.clone();
    let mut t = 0.0;
    while t < t_max {
        let step = dt.min(t_max - t);
        let prev = cur.clone();
        stepper.step(&mut cur, None, step);
        t += step;
        if overflowed(&cur) {
            return Err(PhaseFlowError::StepOverflow(OVERFLOW_LIMIT));
        }
        if radius(&cur) >= r {
            // bisection on the crossing inside [t - step, t]
            let mut lo = 0.0;
            let mut hi = step;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let probe = integrate_flow(sys, &prev, mid, step)?;
                if radius(&probe) >= r {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo < 1e-12 {
                    break;
                }
            }
            return Ok(t - step + 0.5 * (lo + hi));
        }
    }
    Ok(t_max)
}

/// Rectangular sampling grid in phase space: a position box with `npos`
/// points per axis times a momentum box with `nmom` points per axis.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub npos: usize,
    pub xi_lo: Vec<f64>,
    pub xi_hi: Vec<f64>,
    pub nmom: usize,
}

impl GridSpec {
    pub fn describe(&self) -> String {
        format!(
            "pos[{:?}..{:?}]x{} mom[{:?}..{:?}]x{}",
            self.x_lo, self.x_hi, self.npos, self.xi_lo, self.xi_hi, self.nmom
        )
    }

    fn points(&self, dim: usize) -> Vec<PhasePoint> {
        let axis = |lo: f64, hi: f64, n: usize, k: usize| {
            if n == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            }
        };
        let mut pts = Vec::new();
        let pos_total = self.npos.pow(dim as u32);
        let mom_total = self.nmom.pow(dim as u32);
        for ip in 0..pos_total {
            let mut x = vec![0.0; dim];
            let mut rest = ip;
            for d in 0..dim {
                x[d] = axis(self.x_lo[d], self.x_hi[d], self.npos, rest % self.npos);
                rest /= self.npos;
            }
            for im in 0..mom_total {
                let mut xi = vec![0.0; dim];
                let mut rest = im;
                for d in 0..dim {
                    xi[d] = axis(self.xi_lo[d], self.xi_hi[d], self.nmom, rest % self.nmom);
                    rest /= self.nmom;
                }
                pts.push(PhasePoint { x: x.clone(), xi });
            }
        }
        pts
    }
}

/// Points of the energy shell surviving the escape-time threshold.
#[derive(Debug, Clone)]
pub struct TrappedSetSample {
    pub energy: f64,
    pub points: Vec<PhasePoint>,
    pub escape_times: Vec<f64>,
    pub escape_threshold_time: f64,
    pub grid_spec: String,
}

/// Rescales the momentum so that `p(x, s xi) = energy`; one-dimensional
/// Newton in the scale factor, well-defined whenever `|xi| > 0` and the
/// point is classically allowed.
pub fn project_to_shell<H: Hamiltonian + ?Sized>(
    sys: &H,
    rho: &PhasePoint,
    energy: f64,
) -> Option<PhasePoint> {
    let speed2 = rho.speed_sq();
    if speed2 < 1e-14 {
        return None;
    }
    let mut s: f64 = 1.0;
    let mut scaled = rho.clone();
    for _ in 0..100 {
        for (o, v) in scaled.xi.iter_mut().zip(&rho.xi) {
            *o = s * v;
        }
        let f = sys.symbol(&scaled) - energy;
        if f.abs() < 1e-14 {
            break;
        }
        // d/ds T(s xi) = grad T(s xi) . xi
        let mut g = vec![0.0; rho.dim()];
        sys.kinetic_gradient(&scaled.xi, &mut g);
        let df: f64 = g.iter().zip(&rho.xi).map(|(a, b)| a * b).sum();
        if df.abs() < 1e-14 {
            return None;
        }
        s -= f / df;
        if !(s.is_finite() && s > 0.0) {
            return None;
        }
    }
    for (o, v) in scaled.xi.iter_mut().zip(&rho.xi) {
        *o = s * v;
    }
    if (sys.symbol(&scaled) - energy).abs() < 1e-10 {
        Some(scaled)
    } else {
        None
    }
}

/// Grid points projected to `p^{-1}(E)` whose escape time exceeds the
/// threshold. The sweep is data-parallel; the result order is the grid
/// order, independent of work partitioning.
pub fn sample_trapped_set<P: Potential>(
    sys: &HamiltonianSystem<P>,
    energy: f64,
    grid: &GridSpec,
    t_threshold: f64,
    dt: f64,
) -> Result<TrappedSetSample, PhaseFlowError> {
    let dim = sys.dim();
    let candidates = grid.points(dim);
    let r = sys.interaction_radius;
    let t_cap = t_threshold * 1.25;
    let survivors: Vec<Option<(PhasePoint, f64)>> = candidates
        .par_iter()
        .map(|cand| {
            let on_shell = project_to_shell(sys, cand, energy)?;
            match escape_time(sys, &on_shell, r, t_cap, dt) {
                Ok(te) if te >= t_threshold => Some((on_shell, te)),
                _ => None,
            }
        })
        .collect();
    let mut points = Vec::new();
    let mut escape_times = Vec::new();
    for s in survivors.into_iter().flatten() {
        points.push(s.0);
        escape_times.push(s.1);
    }
    if points.is_empty() {
        return Err(PhaseFlowError::EmptySample);
    }
    Ok(TrappedSetSample {
        energy,
        points,
        escape_times,
        escape_threshold_time: t_threshold,
        grid_spec: grid.describe(),
    })
}

/// Expansion-rate diagnostics for one sample point.
#[derive(Debug, Clone)]
pub struct HyperbolicityRecord {
    /// Fitted exponent of the largest shell-reduced singular value, forward.
    pub lambda_forward: f64,
    /// Same, integrated backwards in time.
    pub lambda_backward: f64,
    /// Fit residual (RMS of log-linear regression), forward.
    pub fit_residual: f64,
    pub hyperbolic: bool,
}

/// Orthonormal basis of the tangent space of the energy shell modulo the
/// flow direction: the orthogonal complement of `span{grad p, H_p}`.
fn shell_basis<H: Hamiltonian + ?Sized>(sys: &H, rho: &PhasePoint) -> DMatrix<f64> {
    let n = sys.dim();
    let d = 2 * n;
    let mut gp = DVector::<f64>::zeros(d);
    let mut gx = vec![0.0; n];
    let mut gxi = vec![0.0; n];
    sys.potential_gradient(&rho.x, &mut gx);
    sys.kinetic_gradient(&rho.xi, &mut gxi);
    for i in 0..n {
        gp[i] = gx[i];
        gp[n + i] = gxi[i];
    }
    let hp = hamilton_vector_field(sys, rho);
    let mut hv = DVector::<f64>::zeros(d);
    for i in 0..n {
        hv[i] = hp.x[i];
        hv[n + i] = hp.xi[i];
    }
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let push_orth = |mut v: DVector<f64>, basis: &mut Vec<DVector<f64>>| {
        for b in basis.iter() {
            let c = b.dot(&v);
            v -= b * c;
        }
        let nv = v.norm();
        if nv > 1e-10 {
            basis.push(v / nv);
            true
        } else {
            false
        }
    };
    push_orth(gp, &mut basis);
    push_orth(hv, &mut basis);
    let fixed = basis.len();
    for k in 0..d {
        if basis.len() == fixed + (d - 2) {
            break;
        }
        let mut e = DVector::<f64>::zeros(d);
        e[k] = 1.0;
        push_orth(e, &mut basis);
    }
    let cols = basis.len() - fixed;
    let mut w = DMatrix::<f64>::zeros(d, cols);
    for (c, b) in basis[fixed..].iter().enumerate() {
        w.set_column(c, b);
    }
    w
}

fn reduced_max_singular<H: Hamiltonian + ?Sized>(
    sys: &H,
    rho0: &PhasePoint,
    t: f64,
    dt: f64,
) -> Result<f64, PhaseFlowError> {
    let w_in = shell_basis(sys, rho0);
    let (end, frame) = integrate_with_tangent(sys, rho0, t, dt)?;
    let w_out = shell_basis(sys, &end);
    let reduced = w_out.transpose() * &frame.j * w_in;
    let svd = nalgebra::SVD::new(reduced, false, false);
    Ok(svd
        .singular_values
        .iter()
        .copied()
        .fold(0.0f64, f64::max))
}

/// Fits `log s_max(t) ~ lambda t` over `t in [1, t_final]` for every sample
/// point, in both time directions; a point is flagged hyperbolic when the
/// forward rate exceeds `lambda_min`.
pub fn hyperbolicity_report<P: Potential>(
    sys: &HamiltonianSystem<P>,
    sample: &TrappedSetSample,
    t_final: f64,
    dt: f64,
    lambda_min: f64,
) -> Vec<HyperbolicityRecord> {
    assert!(t_final > 1.0);
    let nsamples = 8;
    let times: Vec<f64> = (0..nsamples)
        .map(|k| 1.0 + (t_final - 1.0) * k as f64 / (nsamples - 1) as f64)
        .collect();
    sample
        .points
        .par_iter()
        .map(|rho| {
            let fit = |sign: f64| -> (f64, f64) {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for &t in &times {
                    if let Ok(s) = reduced_max_singular(sys, rho, sign * t, dt) {
                        if s > 0.0 {
                            xs.push(t);
                            ys.push(s.ln());
                        }
                    }
                }
                if xs.len() < 2 {
                    return (0.0, f64::INFINITY);
                }
                let n = xs.len() as f64;
                let mx = xs.iter().sum::<f64>() / n;
                let my = ys.iter().sum::<f64>() / n;
                let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
                let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
                let slope = sxy / sxx;
                let rms = (xs
                    .iter()
                    .zip(&ys)
                    .map(|(x, y)| {
                        let pred = my + slope * (x - mx);
                        (y - pred) * (y - pred)
                    })
                    .sum::<f64>()
                    / n)
                    .sqrt();
                (slope, rms)
            };
            let (lf, res) = fit(1.0);
            let (lb, _) = fit(-1.0);
            HyperbolicityRecord {
                lambda_forward: lf,
                lambda_backward: lb,
                fit_residual: res,
                hyperbolic: lf > lambda_min,
            }
        })
        .collect()
}
