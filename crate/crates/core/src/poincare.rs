//! Poincaré sections and return maps.
//!
//! Sections are user-supplied oriented hypersurfaces with symplectic charts;
//! the module detects flow crossings, assembles chart-level return records
//! with symplectic Jacobians, sweeps seed grids into a return-map atlas, and
//! pushes sections to nearby energy shells.

use crate::phase_flow::{hamilton_vector_field, FlowStepper, Hamiltonian, PhasePoint};
use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PoincareError {
    #[error("no section crossing within the integration horizon")]
    NoCrossing,
    #[error("no return record survived the seed sweep")]
    EmptyAtlas,
    #[error("chart point outside the classically allowed region")]
    ChartUndefined,
    #[error("flow error: {0}")]
    Flow(#[from] crate::phase_flow::PhaseFlowError),
}

/// Compact box in chart coordinates `R^{2(n-1)}`.
#[derive(Debug, Clone)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn grid(&self, per_dim: usize) -> Vec<Vec<f64>> {
        let dim = self.lo.len();
        let total = per_dim.pow(dim as u32);
        let mut out = Vec::with_capacity(total);
        for idx in 0..total {
            let mut y = vec![0.0; dim];
            let mut rest = idx;
            for d in 0..dim {
                let k = rest % per_dim;
                rest /= per_dim;
                y[d] = if per_dim == 1 {
                    0.5 * (self.lo[d] + self.hi[d])
                } else {
                    self.lo[d] + (self.hi[d] - self.lo[d]) * k as f64 / (per_dim - 1) as f64
                };
            }
            out.push(y);
        }
        out
    }
}

/// An oriented Poincaré section component with a symplectic chart.
///
/// Crossings are counted when the defining function passes through zero with
/// `H_p s > 0`; the opposite orientation is a different section.
pub trait Section: Sync {
    fn index(&self) -> usize;

    /// Defining function `s`; the section is `{s = 0}` within the chart range.
    fn defining(&self, rho: &PhasePoint) -> f64;

    /// Gradient of `s` as `(ds/dx, ds/dxi)`.
    fn defining_gradient(&self, rho: &PhasePoint) -> (Vec<f64>, Vec<f64>);

    /// Chart `kappa_{k,E}` onto the energy shell `p^{-1}(E)`; `None` when the
    /// point is classically forbidden.
    fn chart(&self, sys: &dyn Hamiltonian, y: &[f64], energy: f64) -> Option<PhasePoint>;

    /// Chart coordinates of a phase point on (or near) the section.
    fn chart_inverse(&self, rho: &PhasePoint) -> Vec<f64>;

    /// `2n x 2(n-1)` Jacobian of the chart at `y`.
    fn chart_jacobian(&self, sys: &dyn Hamiltonian, y: &[f64], energy: f64)
        -> Option<DMatrix<f64>>;

    /// `2(n-1) x 2n` derivative of `chart_inverse`, a left inverse of
    /// `chart_jacobian` on the section tangent space.
    fn chart_inverse_jacobian(&self, rho: &PhasePoint) -> DMatrix<f64>;

    fn domain(&self) -> &DomainBox;

    /// `H_p s` at `rho` (the transversality margin on the chart range).
    fn flow_derivative(&self, sys: &dyn Hamiltonian, rho: &PhasePoint) -> f64 {
        let v = hamilton_vector_field(sys, rho);
        let (gx, gxi) = self.defining_gradient(rho);
        gx.iter()
            .zip(&v.x)
            .chain(gxi.iter().zip(&v.xi))
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Section on the affine hyperplane `{(x - c) . n = 0}` of configuration
/// space, with chart coordinates `(q_i, p_i) = ((x-c).u_i, xi.u_i)` and the
/// normal momentum fixed by the energy on the branch `xi . n > 0`.
pub struct HyperplaneSection {
    index: usize,
    base: Vec<f64>,
    tangents: Vec<Vec<f64>>,
    normal: Vec<f64>,
    domain: DomainBox,
}

impl HyperplaneSection {
    /// `normal` fixes the orientation: crossings satisfy `xi . normal > 0`.
    /// The frame `{tangents, normal}` must be orthonormal.
    pub fn new(
        index: usize,
        base: Vec<f64>,
        tangents: Vec<Vec<f64>>,
        normal: Vec<f64>,
        domain: DomainBox,
    ) -> Self {
        let n = base.len();
        assert_eq!(tangents.len(), n - 1);
        assert_eq!(domain.lo.len(), 2 * (n - 1));
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        assert!((dot(&normal, &normal) - 1.0).abs() < 1e-12);
        for (i, u) in tangents.iter().enumerate() {
            assert!((dot(u, u) - 1.0).abs() < 1e-12);
            assert!(dot(u, &normal).abs() < 1e-12);
            for v in tangents.iter().skip(i + 1) {
                assert!(dot(u, v).abs() < 1e-12);
            }
        }
        Self {
            index,
            base,
            tangents,
            normal,
            domain,
        }
    }

    /// Normal momentum on the branch, `sqrt(E - U(x) - |p|^2)`.
    fn normal_momentum(
        &self,
        sys: &dyn Hamiltonian,
        x: &[f64],
        p: &[f64],
        energy: f64,
    ) -> Option<f64> {
        let u = sys.potential_term(x);
        let pn2 = energy - u - p.iter().map(|v| v * v).sum::<f64>();
        if pn2 <= 0.0 {
            None
        } else {
            Some(pn2.sqrt())
        }
    }
}

impl Section for HyperplaneSection {
    fn index(&self) -> usize {
        self.index
    }

    fn defining(&self, rho: &PhasePoint) -> f64 {
        self.normal
            .iter()
            .zip(rho.x.iter().zip(&self.base))
            .map(|(ni, (xi, ci))| ni * (xi - ci))
            .sum()
    }

    fn defining_gradient(&self, rho: &PhasePoint) -> (Vec<f64>, Vec<f64>) {
        (self.normal.clone(), vec![0.0; rho.dim()])
    }

    fn chart(&self, sys: &dyn Hamiltonian, y: &[f64], energy: f64) -> Option<PhasePoint> {
        let n = self.base.len();
        let m = n - 1;
        let (q, p) = (&y[..m], &y[m..]);
        let mut x = self.base.clone();
        for (qi, u) in q.iter().zip(&self.tangents) {
            for (xj, uj) in x.iter_mut().zip(u) {
                *xj += qi * uj;
            }
        }
        let pn = self.normal_momentum(sys, &x, p, energy)?;
        let mut xi = vec![0.0; n];
        for (pi, u) in p.iter().zip(&self.tangents) {
            for (xij, uj) in xi.iter_mut().zip(u) {
                *xij += pi * uj;
            }
        }
        for (xij, nj) in xi.iter_mut().zip(&self.normal) {
            *xij += pn * nj;
        }
        Some(PhasePoint { x, xi })
    }

    fn chart_inverse(&self, rho: &PhasePoint) -> Vec<f64> {
        let q = self.tangents.iter().map(|u| {
            u.iter()
                .zip(rho.x.iter().zip(&self.base))
                .map(|(ui, (xi, ci))| ui * (xi - ci))
                .sum::<f64>()
        });
        let p = self
            .tangents
            .iter()
            .map(|u| u.iter().zip(&rho.xi).map(|(ui, v)| ui * v).sum::<f64>());
        q.chain(p).collect()
    }

    fn chart_jacobian(
        &self,
        sys: &dyn Hamiltonian,
        y: &[f64],
        energy: f64,
    ) -> Option<DMatrix<f64>> {
        let n = self.base.len();
        let m = n - 1;
        let rho = self.chart(sys, y, energy)?;
        let p = &y[m..];
        let pn: f64 = self
            .normal
            .iter()
            .zip(&rho.xi)
            .map(|(a, b)| a * b)
            .sum();
        let mut grad_u = vec![0.0; n];
        sys.potential_gradient(&rho.x, &mut grad_u);
        let mut jac = DMatrix::<f64>::zeros(2 * n, 2 * m);
        for (col, u) in self.tangents.iter().enumerate() {
            // d/dq_col: dx = u, dxi = (dpn/dq) n, 2 pn dpn = -gradU . u
            let dpn = -u.iter().zip(&grad_u).map(|(a, b)| a * b).sum::<f64>() / (2.0 * pn);
            for i in 0..n {
                jac[(i, col)] = u[i];
                jac[(n + i, col)] = dpn * self.normal[i];
            }
            // d/dp_col: dx = 0, dxi = u - (p_col/pn) n
            let dpn_dp = -p[col] / pn;
            for i in 0..n {
                jac[(n + i, m + col)] = u[i] + dpn_dp * self.normal[i];
            }
        }
        Some(jac)
    }

    fn chart_inverse_jacobian(&self, rho: &PhasePoint) -> DMatrix<f64> {
        let n = rho.dim();
        let m = n - 1;
        let mut jac = DMatrix::<f64>::zeros(2 * m, 2 * n);
        for (row, u) in self.tangents.iter().enumerate() {
            for i in 0..n {
                jac[(row, i)] = u[i];
                jac[(m + row, n + i)] = u[i];
            }
        }
        jac
    }

    fn domain(&self) -> &DomainBox {
        &self.domain
    }
}

/// Section `{x_n = offset}` for the transport normal form `p = xi_n`; the
/// chart keeps `(x', xi')` and sets `xi_n` to the shell energy.
pub struct NormalFormSection {
    pub index: usize,
    pub offset: f64,
    pub domain: DomainBox,
}

impl Section for NormalFormSection {
    fn index(&self) -> usize {
        self.index
    }

    fn defining(&self, rho: &PhasePoint) -> f64 {
        rho.x[rho.dim() - 1] - self.offset
    }

    fn defining_gradient(&self, rho: &PhasePoint) -> (Vec<f64>, Vec<f64>) {
        let n = rho.dim();
        let mut gx = vec![0.0; n];
        gx[n - 1] = 1.0;
        (gx, vec![0.0; n])
    }

    fn chart(&self, _sys: &dyn Hamiltonian, y: &[f64], energy: f64) -> Option<PhasePoint> {
        let m = y.len() / 2;
        let n = m + 1;
        let mut x = vec![0.0; n];
        let mut xi = vec![0.0; n];
        x[..m].copy_from_slice(&y[..m]);
        x[n - 1] = self.offset;
        xi[..m].copy_from_slice(&y[m..]);
        xi[n - 1] = energy;
        Some(PhasePoint { x, xi })
    }

    fn chart_inverse(&self, rho: &PhasePoint) -> Vec<f64> {
        let n = rho.dim();
        let m = n - 1;
        let mut y = vec![0.0; 2 * m];
        y[..m].copy_from_slice(&rho.x[..m]);
        y[m..].copy_from_slice(&rho.xi[..m]);
        y
    }

    fn chart_jacobian(
        &self,
        _sys: &dyn Hamiltonian,
        y: &[f64],
        _energy: f64,
    ) -> Option<DMatrix<f64>> {
        let m = y.len() / 2;
        let n = m + 1;
        let mut jac = DMatrix::<f64>::zeros(2 * n, 2 * m);
        for i in 0..m {
            jac[(i, i)] = 1.0;
            jac[(n + i, m + i)] = 1.0;
        }
        Some(jac)
    }

    fn chart_inverse_jacobian(&self, rho: &PhasePoint) -> DMatrix<f64> {
        let n = rho.dim();
        let m = n - 1;
        let mut jac = DMatrix::<f64>::zeros(2 * m, 2 * n);
        for i in 0..m {
            jac[(i, i)] = 1.0;
            jac[(m + i, n + i)] = 1.0;
        }
        jac
    }

    fn domain(&self) -> &DomainBox {
        &self.domain
    }
}

/// A section pushed to the energy shell `p^{-1}(z)`: same chart domain, the
/// normal momentum re-solved at energy `z`.
pub struct EnergyDeformedSection<'a> {
    pub base: &'a dyn Section,
    pub z: f64,
}

pub fn energy_deformed_section(base: &dyn Section, z: f64) -> EnergyDeformedSection<'_> {
    EnergyDeformedSection { base, z }
}

impl<'a> EnergyDeformedSection<'a> {
    pub fn chart(&self, sys: &dyn Hamiltonian, y: &[f64]) -> Option<PhasePoint> {
        self.base.chart(sys, y, self.z)
    }
}

/// A refined flow crossing of a section.
#[derive(Debug, Clone)]
pub struct Crossing {
    pub section: usize,
    pub point: PhasePoint,
    /// Signed crossing time (negative when found in backward time).
    pub time: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Backward,
}

/// First forward crossing of a single section, bisected until
/// `|s| <= 1e-10`; `NoCrossing` past the horizon.
pub fn detect_crossing(
    sys: &dyn Hamiltonian,
    rho0: &PhasePoint,
    section: &dyn Section,
    dt: f64,
    horizon: f64,
) -> Result<Crossing, PoincareError> {
    let sections: [&dyn Section; 1] = [section];
    first_crossing(sys, rho0, &sections, dt, horizon, 0.0, Direction::Forward).map(|(c, _)| c)
}

/// Steps along the flow watching all defining functions; on a sign change in
/// the oriented direction the crossing is refined inside the step. The first
/// listed section is treated as the source: its crossings before
/// `skip_source_time` are ignored (a seed starts on it).
fn first_crossing(
    sys: &dyn Hamiltonian,
    rho0: &PhasePoint,
    sections: &[&dyn Section],
    dt: f64,
    horizon: f64,
    skip_source_time: f64,
    direction: Direction,
) -> Result<(Crossing, DMatrix<f64>), PoincareError> {
    let n = sys.dim();
    let sgn = match direction {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };
    let sdt = sgn * dt;
    let mut stepper = FlowStepper::new(sys);
    let mut rho = rho0.clone();
    let mut j = DMatrix::<f64>::identity(2 * n, 2 * n);
    let mut s_prev: Vec<f64> = sections.iter().map(|sec| sec.defining(&rho)).collect();
    let mut t = 0.0f64;
    let max_steps = (horizon / dt).ceil() as usize;
    for _ in 0..max_steps {
        let rho_prev = rho.clone();
        let j_prev = j.clone();
        stepper.step_with_tangent(&mut rho, &mut j, sdt);
        t += dt;
        let mut best: Option<(usize, f64)> = None;
        for (is, sec) in sections.iter().enumerate() {
            let s_now = sec.defining(&rho);
            // crossing through zero in the flow-oriented direction
            let crossed = match direction {
                Direction::Forward => s_prev[is] < 0.0 && s_now >= 0.0,
                Direction::Backward => s_prev[is] > 0.0 && s_now <= 0.0,
            };
            let skipped = is == 0 && (t - dt) < skip_source_time;
            if crossed && !skipped {
                // earliest crossing inside this step wins
                let frac = s_prev[is].abs() / (s_prev[is].abs() + s_now.abs()).max(1e-300);
                if best.map(|(_, f)| frac < f).unwrap_or(true) {
                    best = Some((is, frac));
                }
            }
            s_prev[is] = s_now;
        }
        if let Some((is, _)) = best {
            let (point, tau, jc) =
                refine_crossing(sys, &rho_prev, &j_prev, sections[is], sdt)?;
            return Ok((
                Crossing {
                    section: sections[is].index(),
                    point,
                    time: sgn * (t - dt) + tau,
                },
                jc,
            ));
        }
    }
    Err(PoincareError::NoCrossing)
}

/// Bisection on `tau -> s(Phi^tau rho_prev)` within one step; returns the
/// crossing point, the signed in-step time and the propagated tangent.
fn refine_crossing(
    sys: &dyn Hamiltonian,
    rho_prev: &PhasePoint,
    j_prev: &DMatrix<f64>,
    section: &dyn Section,
    sdt: f64,
) -> Result<(PhasePoint, f64, DMatrix<f64>), PoincareError> {
    let mut probe_stepper = FlowStepper::new(sys);
    let mut probe = |tau: f64| -> f64 {
        if tau == 0.0 {
            return section.defining(rho_prev);
        }
        let mut r = rho_prev.clone();
        probe_stepper.step(&mut r, tau);
        section.defining(&r)
    };
    let s0 = probe(0.0);
    let mut lo = 0.0f64;
    let mut hi = sdt;
    let mut s_lo = s0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let sm = probe(mid);
        if (sm <= 0.0) == (s_lo <= 0.0) {
            lo = mid;
            s_lo = sm;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= 1e-17 * sdt.abs() {
            break;
        }
    }
    let tau = 0.5 * (lo + hi);
    let mut rho = rho_prev.clone();
    let mut j = j_prev.clone();
    let mut stepper = FlowStepper::new(sys);
    if tau != 0.0 {
        stepper.step_with_tangent(&mut rho, &mut j, tau);
    }
    Ok((rho, tau, j))
}

/// One sample of the return map `F_{ik}` in chart coordinates.
#[derive(Debug, Clone)]
pub struct ReturnRecord {
    pub from_section: usize,
    pub to_section: usize,
    pub rho_in: Vec<f64>,
    pub rho_out: Vec<f64>,
    pub t_plus: f64,
    pub jacobian: DMatrix<f64>,
}

impl ReturnRecord {
    pub fn det_defect(&self) -> f64 {
        (self.jacobian.clone().lu().determinant() - 1.0).abs()
    }

    pub fn symplectic_defect(&self) -> f64 {
        crate::phase_flow::symplectic_defect(&self.jacobian)
    }
}

/// Removes the crossing-time variation: projects tangent vectors at the
/// crossing along `H_p` onto `ker(ds)`.
fn time_correction(
    sys: &dyn Hamiltonian,
    section: &dyn Section,
    rho: &PhasePoint,
) -> DMatrix<f64> {
    let n = sys.dim();
    let d = 2 * n;
    let hp = hamilton_vector_field(sys, rho);
    let (gx, gxi) = section.defining_gradient(rho);
    let mut hvec = vec![0.0; d];
    let mut gvec = vec![0.0; d];
    for i in 0..n {
        hvec[i] = hp.x[i];
        hvec[n + i] = hp.xi[i];
        gvec[i] = gx[i];
        gvec[n + i] = gxi[i];
    }
    let hps: f64 = hvec.iter().zip(&gvec).map(|(a, b)| a * b).sum();
    let mut p = DMatrix::<f64>::identity(d, d);
    for i in 0..d {
        for k in 0..d {
            p[(i, k)] -= hvec[i] * gvec[k] / hps;
        }
    }
    p
}

/// Follows one seed of section `from` to its first arrival on any section,
/// assembling the chart-level Jacobian from the tangent flow.
pub fn return_map_sample(
    sys: &dyn Hamiltonian,
    sections: &[&dyn Section],
    from: usize,
    rho_in: &[f64],
    energy: f64,
    dt: f64,
    horizon: f64,
) -> Result<ReturnRecord, PoincareError> {
    let start = sections[from]
        .chart(sys, rho_in, energy)
        .ok_or(PoincareError::ChartUndefined)?;
    // reorder so the source section comes first and its t ~ 0 crossing is skipped
    let mut order: Vec<&dyn Section> = Vec::with_capacity(sections.len());
    order.push(sections[from]);
    for (i, s) in sections.iter().enumerate() {
        if i != from {
            order.push(*s);
        }
    }
    let (crossing, j_full) = first_crossing(
        sys,
        &start,
        &order,
        dt,
        horizon,
        10.0 * dt,
        Direction::Forward,
    )?;
    let to = sections
        .iter()
        .position(|s| s.index() == crossing.section)
        .expect("crossing reported an unknown section");
    let d_in = sections[from]
        .chart_jacobian(sys, rho_in, energy)
        .ok_or(PoincareError::ChartUndefined)?;
    let p = time_correction(sys, sections[to], &crossing.point);
    let d_out = sections[to].chart_inverse_jacobian(&crossing.point);
    let jacobian = d_out * p * j_full * d_in;
    Ok(ReturnRecord {
        from_section: from,
        to_section: to,
        rho_in: rho_in.to_vec(),
        rho_out: sections[to].chart_inverse(&crossing.point),
        t_plus: crossing.time,
        jacobian,
    })
}

/// Time-reversed return: from a chart point of section `to`, flow backwards
/// to the first forward-oriented crossing and report its chart point.
/// Recovers `rho_in` of the matching forward record.
pub fn return_map_backward(
    sys: &dyn Hamiltonian,
    sections: &[&dyn Section],
    to: usize,
    rho_out: &[f64],
    energy: f64,
    dt: f64,
    horizon: f64,
) -> Result<(usize, Vec<f64>, f64), PoincareError> {
    let start = sections[to]
        .chart(sys, rho_out, energy)
        .ok_or(PoincareError::ChartUndefined)?;
    let mut order: Vec<&dyn Section> = Vec::with_capacity(sections.len());
    order.push(sections[to]);
    for (i, s) in sections.iter().enumerate() {
        if i != to {
            order.push(*s);
        }
    }
    let (crossing, _) = first_crossing(
        sys,
        &start,
        &order,
        dt,
        horizon,
        10.0 * dt,
        Direction::Backward,
    )?;
    let from = sections
        .iter()
        .position(|s| s.index() == crossing.section)
        .expect("crossing reported an unknown section");
    Ok((
        from,
        sections[from].chart_inverse(&crossing.point),
        crossing.time.abs(),
    ))
}

/// Atlas of sampled return-map branches.
#[derive(Debug, Clone)]
pub struct ReturnMapAtlas {
    pub n_sections: usize,
    pub energy: f64,
    pub records: Vec<ReturnRecord>,
    /// `adjacency[k]` lists the successor sections observed from `k`.
    pub adjacency: Vec<Vec<usize>>,
    pub t_max: f64,
    /// Seeds whose orbit left without hitting any section.
    pub escaped_seeds: usize,
    /// Seeds whose first return hit their own section (rejected records).
    pub self_returns: usize,
}

impl ReturnMapAtlas {
    pub fn successors(&self, k: usize) -> &[usize] {
        &self.adjacency[k]
    }
}

/// Sweeps a seed grid over every section domain and assembles the atlas.
/// Records returning to their own section violate the section hypotheses;
/// they are counted in `self_returns` and never stored.
pub fn build_atlas(
    sys: &dyn Hamiltonian,
    sections: &[&dyn Section],
    seeds_per_dim: usize,
    energy: f64,
    dt: f64,
    horizon: f64,
) -> Result<ReturnMapAtlas, PoincareError> {
    let mut jobs: Vec<(usize, Vec<f64>)> = Vec::new();
    for (k, sec) in sections.iter().enumerate() {
        for y in sec.domain().grid(seeds_per_dim) {
            jobs.push((k, y));
        }
    }
    let results: Vec<Option<ReturnRecord>> = jobs
        .par_iter()
        .map(|(k, y)| return_map_sample(sys, sections, *k, y, energy, dt, horizon).ok())
        .collect();
    let mut records = Vec::new();
    let mut escaped = 0usize;
    let mut self_returns = 0usize;
    for r in results {
        match r {
            Some(rec) if rec.from_section == rec.to_section => self_returns += 1,
            Some(rec) => records.push(rec),
            None => escaped += 1,
        }
    }
    if records.is_empty() {
        return Err(PoincareError::EmptyAtlas);
    }
    let mut adjacency = vec![Vec::new(); sections.len()];
    for rec in &records {
        if !adjacency[rec.from_section].contains(&rec.to_section) {
            adjacency[rec.from_section].push(rec.to_section);
        }
    }
    for adj in adjacency.iter_mut() {
        adj.sort_unstable();
    }
    let t_max = records.iter().map(|r| r.t_plus).fold(0.0, f64::max);
    Ok(ReturnMapAtlas {
        n_sections: sections.len(),
        energy,
        records,
        adjacency,
        t_max,
        escaped_seeds: escaped,
        self_returns,
    })
}

/// Transversality margin of a section: the minimal `|H_p s|` over a grid
/// of chart points on the shell (eq. hypotheses demand a positive margin
/// uniformly up to the boundary). `None` when no grid point is classically
/// allowed.
pub fn transversality_margin(
    sys: &dyn Hamiltonian,
    section: &dyn Section,
    energy: f64,
    per_dim: usize,
) -> Option<f64> {
    let mut margin = f64::INFINITY;
    let mut seen = false;
    for y in section.domain().grid(per_dim) {
        if let Some(rho) = section.chart(sys, &y, energy) {
            margin = margin.min(section.flow_derivative(sys, &rho).abs());
            seen = true;
        }
    }
    seen.then_some(margin)
}

/// Minimal phase-space distance between the sampled ranges of two charts;
/// positive distance realizes the disjointness hypothesis numerically.
pub fn chart_range_distance(
    sys: &dyn Hamiltonian,
    a: &dyn Section,
    b: &dyn Section,
    energy: f64,
    per_dim: usize,
) -> Option<f64> {
    let pa: Vec<PhasePoint> = a
        .domain()
        .grid(per_dim)
        .iter()
        .filter_map(|y| a.chart(sys, y, energy))
        .collect();
    let pb: Vec<PhasePoint> = b
        .domain()
        .grid(per_dim)
        .iter()
        .filter_map(|y| b.chart(sys, y, energy))
        .collect();
    if pa.is_empty() || pb.is_empty() {
        return None;
    }
    let mut best = f64::INFINITY;
    for x in &pa {
        for y in &pb {
            best = best.min(x.distance(y));
        }
    }
    Some(best)
}

/// Per-atlas symplecticity statistics.
#[derive(Debug, Clone)]
pub struct SymplecticReport {
    pub max_det_defect: f64,
    pub mean_det_defect: f64,
    pub max_form_defect: f64,
}

pub fn symplectic_check(records: &[ReturnRecord]) -> SymplecticReport {
    let mut max_det: f64 = 0.0;
    let mut sum_det = 0.0;
    let mut max_form: f64 = 0.0;
    for r in records {
        let d = r.det_defect();
        max_det = max_det.max(d);
        sum_det += d;
        max_form = max_form.max(r.symplectic_defect());
    }
    SymplecticReport {
        max_det_defect: max_det,
        mean_det_defect: sum_det / records.len().max(1) as f64,
        max_form_defect: max_form,
    }
}
