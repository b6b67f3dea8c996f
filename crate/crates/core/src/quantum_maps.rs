//! Finite-dimensional open quantum maps.
//!
//! Two constructions realize the abstract quantized return map at desk
//! scale: exact model maps on the torus (the open baker family) and
//! Bogomolny transfer matrices built from generating functions on section
//! windows. Both produce [`OpenMapMatrix`] values that the spectral layer
//! dresses with energy phases and feeds into the zeta determinant.
//!
//! Torus convention: matrix size `N` corresponds to `h = 1/(2 pi N)`.

use crate::linalg::{self, dft_matrix};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuantumMapError {
    #[error("matrix size {0} not divisible by the number of branches {1}")]
    DimensionError(usize, usize),
    #[error("generating function has a caustic inside the window (d2S changes sign)")]
    CausticError,
    #[error("an eigenvalue lies within {0:.1e} of zero: projector rank ill-defined at this size")]
    SpectralGapWarning(f64),
    #[error("block dimensions are inconsistent")]
    BlockShape,
}

/// Torus semiclassical parameter for an `N`-dimensional quantization.
pub fn torus_h(n: usize) -> f64 {
    1.0 / (2.0 * std::f64::consts::PI * n as f64)
}

/// Distance from `y` to the nearest integer (periodic radial coordinate).
pub fn torus_dist(y: f64) -> f64 {
    let f = y.rem_euclid(1.0);
    f.min(1.0 - f)
}

/// Smooth window: 0 outside `[lo, hi]`, 1 on `[lo + ramp, hi - ramp]`,
/// C-infinity ramps in between.
pub fn smooth_window(q: f64, lo: f64, hi: f64, ramp: f64) -> f64 {
    if q <= lo || q >= hi {
        return 0.0;
    }
    let up = smooth_step((q - lo) / ramp);
    let down = smooth_step((hi - q) / ramp);
    up * down
}

/// Smooth 0 -> 1 ramp on [0, 1] with all derivatives vanishing at the ends.
pub fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let g = |t: f64| (-1.0 / t).exp();
        g(s) / (g(s) + g(1.0 - s))
    }
}

/// Smooth periodic bump on the circle: 1 within `inner` of `center`,
/// 0 beyond `outer` (distances on the torus).
pub fn periodic_bump(y: f64, center: f64, inner: f64, outer: f64) -> f64 {
    let d = torus_dist(y - center);
    if d <= inner {
        1.0
    } else if d >= outer {
        0.0
    } else {
        smooth_step((outer - d) / (outer - inner))
    }
}

/// Block matrix of an open quantum map `M(z, h)`: block `(i, k)` quantizes
/// the branch `F_{ik}` and is absent when `i` is not a successor of `k`.
#[derive(Debug, Clone)]
pub struct OpenMapMatrix {
    /// `blocks[i][k]`, `None` outside the adjacency.
    pub blocks: Vec<Vec<Option<DMatrix<C64>>>>,
    /// Per-section dimensions (block `(i,k)` is `dims[i] x dims[k]`).
    pub dims: Vec<usize>,
    pub h: f64,
    pub z: C64,
    pub meta: String,
}

impl OpenMapMatrix {
    /// Single-section map (model maps on the torus).
    pub fn single(matrix: DMatrix<C64>, h: f64, meta: impl Into<String>) -> Self {
        let d = matrix.nrows();
        Self {
            blocks: vec![vec![Some(matrix)]],
            dims: vec![d],
            h,
            z: C64::new(0.0, 0.0),
            meta: meta.into(),
        }
    }

    pub fn from_blocks(
        blocks: Vec<Vec<Option<DMatrix<C64>>>>,
        h: f64,
        meta: impl Into<String>,
    ) -> Result<Self, QuantumMapError> {
        let n = blocks.len();
        let mut dims = vec![0usize; n];
        for (i, row) in blocks.iter().enumerate() {
            if row.len() != n {
                return Err(QuantumMapError::BlockShape);
            }
            for (k, b) in row.iter().enumerate() {
                if let Some(b) = b {
                    if dims[i] == 0 {
                        dims[i] = b.nrows();
                    } else if dims[i] != b.nrows() {
                        return Err(QuantumMapError::BlockShape);
                    }
                    if dims[k] == 0 {
                        dims[k] = b.ncols();
                    } else if dims[k] != b.ncols() {
                        return Err(QuantumMapError::BlockShape);
                    }
                }
            }
        }
        Ok(Self {
            blocks,
            dims,
            h,
            z: C64::new(0.0, 0.0),
            meta: meta.into(),
        })
    }

    pub fn n_sections(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Successor sets observed in the block sparsity.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let n = self.n_sections();
        let mut adj = vec![Vec::new(); n];
        for k in 0..n {
            for (i, row) in self.blocks.iter().enumerate() {
                if row[k].is_some() {
                    adj[k].push(i);
                }
            }
        }
        adj
    }

    /// Assembles the dense matrix with zero blocks filled in.
    pub fn to_dense(&self) -> DMatrix<C64> {
        let total = self.total_dim();
        let mut out = DMatrix::<C64>::zeros(total, total);
        let offset: Vec<usize> = self
            .dims
            .iter()
            .scan(0usize, |acc, d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        for (i, row) in self.blocks.iter().enumerate() {
            for (k, b) in row.iter().enumerate() {
                if let Some(b) = b {
                    out.view_mut((offset[i], offset[k]), (b.nrows(), b.ncols()))
                        .copy_from(b);
                }
            }
        }
        out
    }

    pub fn operator_norm(&self) -> f64 {
        linalg::operator_norm(&self.to_dense())
    }

    /// `max(0, ||M|| - 1)`: how far the map is from subunitarity.
    pub fn subunitarity_defect(&self) -> f64 {
        (self.operator_norm() - 1.0).max(0.0)
    }

    /// Largest rank the block structure can carry (column count of nonzero
    /// block columns); with projector truncation this is the actual rank
    /// bound reported for the Weyl-law fits.
    pub fn rank(&self) -> usize {
        self.to_dense().rank(1e-12)
    }
}

/// Weyl quantization of a symbol on the unit torus cell, realized on the
/// `N`-point position grid with `h = 1/(2 pi N)`:
///
/// `A[j,k] = (1/N) sum_m a((j+k)/(2N), m/N) exp(2 pi i m (j-k)/N)`.
///
/// Hermitian for real symbols; exactly diagonal for position-only symbols.
pub fn weyl_quantize_torus(a: &dyn Fn(f64, f64) -> f64, n: usize) -> DMatrix<C64> {
    assert!(n >= 2);
    let nf = n as f64;
    // table[s][d] = (1/N) sum_m a(s/(2N), m/N) e^{2 pi i m d / N}
    let mut table = vec![vec![C64::new(0.0, 0.0); n]; 2 * n - 1];
    for (s, row) in table.iter_mut().enumerate() {
        let y = s as f64 / (2.0 * nf);
        let vals: Vec<f64> = (0..n).map(|m| a(y, m as f64 / nf)).collect();
        for (d, out) in row.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (m, v) in vals.iter().enumerate() {
                let ph = 2.0 * std::f64::consts::PI * (m * d) as f64 / nf;
                acc += C64::new(ph.cos() * v, ph.sin() * v);
            }
            *out = acc / nf;
        }
    }
    DMatrix::from_fn(n, n, |j, k| {
        let d = (j + n - k) % n;
        table[j + k][d]
    })
}

/// General `D`-branch quantized baker map with a subset of branches kept:
/// `B = F_N^{-1} blockdiag(G_0 .. G_{D-1})`, `G_b = F_{N/D}` when kept and
/// zero otherwise.
pub fn baker(n: usize, branches: usize, kept: &[usize]) -> Result<OpenMapMatrix, QuantumMapError> {
    if branches == 0 || n % branches != 0 {
        return Err(QuantumMapError::DimensionError(n, branches));
    }
    let m = n / branches;
    let f_small = dft_matrix(m);
    let f_inv = dft_matrix(n).adjoint();
    let mut g = DMatrix::<C64>::zeros(n, n);
    for &b in kept {
        assert!(b < branches, "branch index out of range");
        g.view_mut((b * m, b * m), (m, m)).copy_from(&f_small);
    }
    let mat = f_inv * g;
    Ok(OpenMapMatrix::single(
        mat,
        torus_h(n),
        format!("baker(N={n}, D={branches}, kept={kept:?})"),
    ))
}

/// Three-branch open baker map; `N` must be divisible by 3.
pub fn open_baker(n: usize, kept: &[usize]) -> Result<OpenMapMatrix, QuantumMapError> {
    baker(n, 3, kept)
}

/// Classical `D`-branch baker map on the torus with removed branches:
/// `(y, eta) -> (D y - b, (eta + b)/D)` for `y` in branch `b`.
pub fn baker_classical_map(
    branches: usize,
    kept: &[usize],
) -> impl Fn(f64, f64) -> Option<(f64, f64)> + '_ {
    move |y: f64, eta: f64| {
        let yy = y.rem_euclid(1.0);
        let b = ((yy * branches as f64).floor() as usize).min(branches - 1);
        if !kept.contains(&b) {
            return None;
        }
        Some((
            branches as f64 * yy - b as f64,
            (eta.rem_euclid(1.0) + b as f64) / branches as f64,
        ))
    }
}

/// Survivor-box count of the classical repeller of the open baker base map
/// at resolution `D^-depth`, by iterating box midpoints.
pub fn baker_repeller_box_count(branches: usize, kept: &[usize], depth: usize) -> usize {
    let total = branches.pow(depth as u32);
    let mut count = 0usize;
    'boxes: for j in 0..total {
        let mut y = (j as f64 + 0.5) / total as f64;
        for _ in 0..depth {
            let b = ((y * branches as f64).floor() as usize).min(branches - 1);
            if !kept.contains(&b) {
                continue 'boxes;
            }
            y = branches as f64 * y - b as f64;
        }
        count += 1;
    }
    count
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    sxy / sxx
}

/// Box-counting dimension of the open-baker repeller fitted over the given
/// depths.
pub fn baker_repeller_dimension(branches: usize, kept: &[usize], depths: &[usize]) -> f64 {
    let xs: Vec<f64> = depths
        .iter()
        .map(|&d| (branches as f64).powi(d as i32))
        .collect();
    let ys: Vec<f64> = depths
        .iter()
        .map(|&d| baker_repeller_box_count(branches, kept, d) as f64)
        .collect();
    fit_loglog_slope(&xs, &ys)
}

/// Generating function `S(q_out, q_in; E)` of a section-to-section branch.
pub trait GeneratingFunction: Sync {
    fn value(&self, q_out: f64, q_in: f64, energy: f64) -> f64;

    fn d_in(&self, q_out: f64, q_in: f64, energy: f64) -> f64 {
        let h = 1e-6;
        (self.value(q_out, q_in + h, energy) - self.value(q_out, q_in - h, energy)) / (2.0 * h)
    }

    fn d_out(&self, q_out: f64, q_in: f64, energy: f64) -> f64 {
        let h = 1e-6;
        (self.value(q_out + h, q_in, energy) - self.value(q_out - h, q_in, energy)) / (2.0 * h)
    }

    /// `d2 S / dq_out dq_in`.
    fn d2_mixed(&self, q_out: f64, q_in: f64, energy: f64) -> f64 {
        let h = 1e-5;
        (self.value(q_out + h, q_in + h, energy) - self.value(q_out + h, q_in - h, energy)
            - self.value(q_out - h, q_in + h, energy)
            + self.value(q_out - h, q_in - h, energy))
            / (4.0 * h * h)
    }
}

/// Quadrature window: interval with a smooth taper over a fraction of its
/// length at each end.
#[derive(Debug, Clone)]
pub struct QuadratureWindow {
    pub lo: f64,
    pub hi: f64,
    pub npts: usize,
    pub taper_fraction: f64,
}

impl QuadratureWindow {
    pub fn grid(&self) -> Vec<f64> {
        let n = self.npts;
        (0..n)
            .map(|k| self.lo + (self.hi - self.lo) * (k as f64 + 0.5) / n as f64)
            .collect()
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.npts as f64
    }

    pub fn weight(&self, q: f64) -> f64 {
        let ramp = self.taper_fraction * (self.hi - self.lo);
        smooth_window(q, self.lo, self.hi, ramp)
    }
}

/// One Bogomolny transfer block
/// `T[a,b] = (2 pi i h)^{-1/2} |d2S|^{1/2} e^{i S(q_a, q_b; E)/h}
///           w_out(q_a) w_in(q_b) sqrt(dq_out dq_in)`
/// on midpoint grids over the arrival/departure windows.
///
/// Fails with `CausticError` when the mixed second derivative changes sign
/// (or vanishes) inside the windows.
pub fn bogomolny_transfer_block(
    gen: &dyn GeneratingFunction,
    h: f64,
    energy: f64,
    out_window: &QuadratureWindow,
    in_window: &QuadratureWindow,
) -> Result<DMatrix<C64>, QuantumMapError> {
    let qo = out_window.grid();
    let qi = in_window.grid();
    // caustic scan
    let mut sign = 0.0f64;
    for &a in &qo {
        for &b in &qi {
            let d2 = gen.d2_mixed(a, b, energy);
            if d2 == 0.0 {
                return Err(QuantumMapError::CausticError);
            }
            if sign == 0.0 {
                sign = d2.signum();
            } else if d2.signum() != sign {
                return Err(QuantumMapError::CausticError);
            }
        }
    }
    // (2 pi i h)^{-1/2} = e^{-i pi/4} / sqrt(2 pi h)
    let pref = C64::from_polar(
        1.0 / (2.0 * std::f64::consts::PI * h).sqrt(),
        -std::f64::consts::FRAC_PI_4,
    );
    let scale = (out_window.spacing() * in_window.spacing()).sqrt();
    let mut t = DMatrix::<C64>::zeros(qo.len(), qi.len());
    for (r, &a) in qo.iter().enumerate() {
        let wo = out_window.weight(a);
        for (c, &b) in qi.iter().enumerate() {
            let wi = in_window.weight(b);
            if wo == 0.0 || wi == 0.0 {
                continue;
            }
            let amp = gen.d2_mixed(a, b, energy).abs().sqrt();
            let phase = C64::from_polar(1.0, gen.value(a, b, energy) / h);
            t[(r, c)] = pref * scale * amp * phase * wo * wi;
        }
    }
    Ok(t)
}

/// Worst defect of the generating-function relations
/// `dS/dq_in = -p_in`, `dS/dq_out = p_out` against sampled return-map data
/// `(q_in, p_in) -> (q_out, p_out)`.
pub fn generating_function_consistency(
    gen: &dyn GeneratingFunction,
    energy: f64,
    samples: &[((f64, f64), (f64, f64))],
) -> f64 {
    let mut worst: f64 = 0.0;
    for ((q_in, p_in), (q_out, p_out)) in samples {
        let din = gen.d_in(*q_out, *q_in, energy);
        let dout = gen.d_out(*q_out, *q_in, energy);
        worst = worst.max((din + p_in).abs()).max((dout - p_out).abs());
    }
    worst
}

/// Return-time factor of one section: constant or sampled on the section's
/// input grid.
#[derive(Debug, Clone)]
pub enum DressingTimes {
    Constant(f64),
    PerColumn(Vec<f64>),
}

impl DressingTimes {
    fn at(&self, col: usize) -> f64 {
        match self {
            DressingTimes::Constant(t) => *t,
            DressingTimes::PerColumn(v) => v[col],
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            DressingTimes::Constant(t) => *t,
            DressingTimes::PerColumn(v) => v.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// Right-multiplies every block `(i, k)` by the diagonal quantization of
/// `exp(i z t_k(q)/h)` on the departure grid of section `k`. With `z = 0`
/// this is the identity; the z-dependence of the result is entirely through
/// these entrywise factors, so the family is holomorphic.
pub fn dress_with_energy_phase(
    m0: &OpenMapMatrix,
    times: &[DressingTimes],
    z: C64,
) -> OpenMapMatrix {
    assert_eq!(times.len(), m0.n_sections());
    let mut blocks = m0.blocks.clone();
    for row in blocks.iter_mut() {
        for (k, b) in row.iter_mut().enumerate() {
            if let Some(b) = b {
                for c in 0..b.ncols() {
                    let t = times[k].at(c);
                    let factor = (C64::new(0.0, 1.0) * z * t / m0.h).exp();
                    for r in 0..b.nrows() {
                        b[(r, c)] *= factor;
                    }
                }
            }
        }
    }
    OpenMapMatrix {
        blocks,
        dims: m0.dims.clone(),
        h: m0.h,
        z,
        meta: m0.meta.clone(),
    }
}

/// A holomorphic family `z -> M(z)` given by a base map and dressing times.
#[derive(Debug, Clone)]
pub struct DressedFamily {
    pub base: OpenMapMatrix,
    pub times: Vec<DressingTimes>,
}

impl DressedFamily {
    pub fn new(base: OpenMapMatrix, times: Vec<DressingTimes>) -> Self {
        assert_eq!(times.len(), base.n_sections());
        Self { base, times }
    }

    pub fn constant_time(base: OpenMapMatrix, t: f64) -> Self {
        let n = base.n_sections();
        Self {
            base,
            times: vec![DressingTimes::Constant(t); n],
        }
    }

    pub fn eval(&self, z: C64) -> OpenMapMatrix {
        dress_with_energy_phase(&self.base, &self.times, z)
    }
}

impl crate::grushin::HolomorphicMapFamily for DressedFamily {
    fn dim(&self) -> usize {
        self.base.total_dim()
    }

    fn eval(&self, z: C64) -> DMatrix<C64> {
        self.eval(z).to_dense()
    }

    fn eval_deriv(&self, z: C64) -> DMatrix<C64> {
        // d/dz of e^{izt/h} multiplies each column by it/h
        let m = self.eval(z);
        let mut blocks = m.blocks;
        for row in blocks.iter_mut() {
            for (k, b) in row.iter_mut().enumerate() {
                if let Some(b) = b {
                    for c in 0..b.ncols() {
                        let f = C64::new(0.0, self.times[k].at(c) / m.h);
                        for r in 0..b.nrows() {
                            b[(r, c)] *= f;
                        }
                    }
                }
            }
        }
        OpenMapMatrix {
            blocks,
            dims: m.dims,
            h: m.h,
            z,
            meta: m.meta,
        }
        .to_dense()
    }
}

/// Spectral projector onto the negative spectrum of a quantized symbol.
#[derive(Debug, Clone)]
pub struct SpectralProjector {
    pub pi: DMatrix<C64>,
    pub rank: usize,
    pub source_symbol: String,
}

impl SpectralProjector {
    pub fn idempotency_defect(&self) -> f64 {
        linalg::operator_norm(&(&self.pi * &self.pi - &self.pi))
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::operator_norm(&(self.pi.adjoint() - &self.pi))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            pi: DMatrix::identity(n, n),
            rank: n,
            source_symbol: "identity".into(),
        }
    }
}

/// Projector onto the negative spectrum of the Weyl quantization of `q`.
/// Warns when an eigenvalue sits within `1e-8` of zero (the rank is not
/// resolved at this matrix size).
pub fn spectral_projector(
    q: &dyn Fn(f64, f64) -> f64,
    n: usize,
    source: impl Into<String>,
) -> Result<SpectralProjector, QuantumMapError> {
    let quant = weyl_quantize_torus(q, n);
    let herm = (&quant + quant.adjoint()) * C64::new(0.5, 0.0);
    let (vals, vecs) = linalg::hermitian_eigen(&herm);
    if vals.iter().any(|v| v.abs() < 1e-8) {
        return Err(QuantumMapError::SpectralGapWarning(1e-8));
    }
    let rank = vals.iter().filter(|v| **v < 0.0).count();
    let neg = vecs.columns(0, rank).into_owned();
    let pi = &neg * neg.adjoint();
    Ok(SpectralProjector {
        pi,
        rank,
        source_symbol: source.into(),
    })
}

/// Blockwise truncation `Pi_i M_{ik} Pi_k`.
pub fn truncate(m: &OpenMapMatrix, pis: &[SpectralProjector]) -> OpenMapMatrix {
    assert_eq!(pis.len(), m.n_sections());
    let mut blocks = m.blocks.clone();
    for (i, row) in blocks.iter_mut().enumerate() {
        for (k, b) in row.iter_mut().enumerate() {
            if let Some(b) = b {
                *b = &pis[i].pi * &*b * &pis[k].pi;
            }
        }
    }
    OpenMapMatrix {
        blocks,
        dims: m.dims.clone(),
        h: m.h,
        z: m.z,
        meta: format!("{} | truncated", m.meta),
    }
}

/// Egorov defect of a single-block map against the classical branch map.
#[derive(Debug, Clone)]
pub struct EgorovReport {
    /// `|| Op(chi) (M* Op(a) M - Op(alpha . (a o F))) Op(chi) ||` with the
    /// phase-space window `chi` where the cutoff is identically one.
    pub windowed: f64,
    /// The same residual without the window.
    pub unwindowed: f64,
    /// `|| Op(a o F) ||` without the cutoff `alpha`, for comparison on
    /// erased regions.
    pub transported_norm: f64,
}

/// Measures `M^H Op(a) M  vs  Op(alpha * (a o F))` on the torus cell.
///
/// `classical` maps a phase point to its image (or `None` on erased
/// branches), `alpha` is the cutoff equal to one near the reduced trapped
/// set, and `window` localizes the comparison away from the discontinuity
/// set of the map where no decay can occur.
pub fn egorov_residual(
    m: &DMatrix<C64>,
    a: &dyn Fn(f64, f64) -> f64,
    classical: &dyn Fn(f64, f64) -> Option<(f64, f64)>,
    alpha: &dyn Fn(f64, f64) -> f64,
    window: &dyn Fn(f64, f64) -> f64,
) -> EgorovReport {
    let n = m.nrows();
    let op_a = weyl_quantize_torus(a, n);
    let transported = |y: f64, eta: f64| classical(y, eta).map(|(y2, e2)| a(y2, e2)).unwrap_or(0.0);
    let cut: &dyn Fn(f64, f64) -> f64 = &|y, eta| alpha(y, eta) * transported(y, eta);
    let op_taf = weyl_quantize_torus(cut, n);
    let op_tf = weyl_quantize_torus(&transported, n);
    let resid = m.adjoint() * op_a * m - op_taf;
    let chi = weyl_quantize_torus(window, n);
    EgorovReport {
        windowed: linalg::operator_norm(&(&chi * &resid * &chi)),
        unwindowed: linalg::operator_norm(&resid),
        transported_norm: linalg::operator_norm(&op_tf),
    }
}

/// Smoothed step profiles for the Poisson normalization check.
#[derive(Debug, Clone, Copy)]
pub enum StepProfile {
    /// C-infinity ramp over `[-width/2, width/2]`.
    Smooth { width: f64 },
    /// `(1 + tanh(x/scale))/2`.
    Tanh { scale: f64 },
}

impl StepProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            StepProfile::Smooth { width } => smooth_step(x / width + 0.5),
            StepProfile::Tanh { scale } => 0.5 * (1.0 + (x / scale).tanh()),
        }
    }
}

/// Discretized check of the Poisson-operator normalization
/// `<(i/h)[hD, chi0] K(z) v, K(conj z) v> / ||v||^2 = 1`.
///
/// `K(z) v (x', x_n) = e^{i x_n z / h} v(x')` on a 2D grid; the commutator
/// uses a dense fourth-order derivative along `x_n`, so the identity holds
/// up to quadrature error.
pub fn poisson_normalization_check(
    nx_prime: usize,
    nx_n: usize,
    half_length: f64,
    h: f64,
    z: C64,
    profile: StepProfile,
) -> C64 {
    let dxn = 2.0 * half_length / (nx_n - 1) as f64;
    let xn: Vec<f64> = (0..nx_n).map(|b| -half_length + b as f64 * dxn).collect();
    let dxp = 2.0 / (nx_prime - 1) as f64;
    let xp: Vec<f64> = (0..nx_prime).map(|a| -1.0 + a as f64 * dxp).collect();
    let v: Vec<f64> = xp.iter().map(|x| (-4.0 * x * x).exp()).collect();

    // fourth-order antisymmetric first derivative, truncated at the ends
    let mut d = DMatrix::<f64>::zeros(nx_n, nx_n);
    for i in 0..nx_n {
        let mut put = |j: isize, c: f64| {
            if j >= 0 && (j as usize) < nx_n {
                d[(i, j as usize)] += c / dxn;
            }
        };
        put(i as isize - 2, 1.0 / 12.0);
        put(i as isize - 1, -8.0 / 12.0);
        put(i as isize + 1, 8.0 / 12.0);
        put(i as isize + 2, -1.0 / 12.0);
    }
    let chi: Vec<f64> = xn.iter().map(|x| profile.eval(*x)).collect();
    // (i/h)[hD, chi] = D chi - chi D as grid operators (D ~ d/dx)
    let mut comm = DMatrix::<f64>::zeros(nx_n, nx_n);
    for i in 0..nx_n {
        for j in 0..nx_n {
            comm[(i, j)] = d[(i, j)] * (chi[j] - chi[i]);
        }
    }

    let i_unit = C64::new(0.0, 1.0);
    let ez: Vec<C64> = xn.iter().map(|x| (i_unit * z * *x / h).exp()).collect();
    let ezbar: Vec<C64> = xn
        .iter()
        .map(|x| (i_unit * z.conj() * *x / h).exp())
        .collect();
    let cez: Vec<C64> = (0..nx_n)
        .map(|i| (0..nx_n).map(|j| comm[(i, j)] * ez[j]).sum())
        .collect();
    // <C K(z)v, K(conj z)v> factorizes into (sum_a |v_a|^2) * (x_n sum)
    let xn_sum: C64 = (0..nx_n)
        .map(|b| cez[b] * ezbar[b].conj() * dxn)
        .sum();
    let vsum: f64 = v.iter().map(|a| a * a * dxp).sum();
    xn_sum * vsum / vsum
}

/// Verifies that a family is holomorphic at `z`: compares difference
/// quotients along the real and imaginary directions (Cauchy–Riemann).
pub fn cauchy_riemann_defect<F>(eval: F, z: C64, eps: f64) -> f64
where
    F: Fn(C64) -> DMatrix<C64>,
{
    let one = C64::new(1.0, 0.0);
    let iunit = C64::new(0.0, 1.0);
    let d_re = (eval(z + one * eps) - eval(z - one * eps)) / C64::new(2.0 * eps, 0.0);
    let d_im = (eval(z + iunit * eps) - eval(z - iunit * eps)) / (C64::new(2.0 * eps, 0.0) * iunit);
    linalg::operator_norm(&(d_re - d_im))
}

/// Rank of `|lambda| >= threshold` eigenvalue counts for a family of sizes,
/// used by the fractal Weyl fits.
pub fn eigenvalue_count_above(m: &DMatrix<C64>, threshold: f64) -> usize {
    linalg::complex_eigenvalues(m)
        .map(|ev| ev.iter().filter(|l| l.norm() >= threshold).count())
        .unwrap_or(0)
}

/// Applies a matrix to sampled values of a function on the window grid.
pub fn apply_to_samples(
    t: &DMatrix<C64>,
    in_window: &QuadratureWindow,
    f: &dyn Fn(f64) -> C64,
) -> DVector<C64> {
    let u = DVector::from_iterator(in_window.npts, in_window.grid().iter().map(|&q| f(q)));
    t * u
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weyl_constant_symbol_is_identity() {
        let a = weyl_quantize_torus(&|_, _| 1.0, 12);
        let err = (&a - DMatrix::<C64>::identity(12, 12)).norm();
        assert!(err < 1e-12);
    }

    #[test]
    fn weyl_is_linear() {
        let n = 10;
        let a1 = |y: f64, e: f64| (2.0 * std::f64::consts::PI * y).cos() + 0.3 * e;
        let a2 = |y: f64, e: f64| (2.0 * std::f64::consts::PI * e).sin() - y;
        let sum = |y: f64, e: f64| a1(y, e) + a2(y, e);
        let q1 = weyl_quantize_torus(&a1, n);
        let q2 = weyl_quantize_torus(&a2, n);
        let qs = weyl_quantize_torus(&sum, n);
        assert!((q1 + q2 - qs).norm() < 1e-12);
    }

    #[test]
    fn weyl_position_symbol_is_diagonal() {
        let n = 16;
        let a = |y: f64, _: f64| (2.0 * std::f64::consts::PI * y).cos();
        let q = weyl_quantize_torus(&a, n);
        for j in 0..n {
            for k in 0..n {
                let expect = if j == k {
                    (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()
                } else {
                    0.0
                };
                assert!((q[(j, k)] - C64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn weyl_real_symbol_is_hermitian() {
        let a = |y: f64, e: f64| {
            (2.0 * std::f64::consts::PI * y).cos() * (2.0 * std::f64::consts::PI * e).sin()
        };
        let q = weyl_quantize_torus(&a, 14);
        assert!((q.adjoint() - q).norm() < 1e-12);
    }

    #[test]
    fn closed_baker_is_unitary() {
        let b = baker(24, 2, &[0, 1]).unwrap();
        let m = b.to_dense();
        let err = (m.adjoint() * &m - DMatrix::<C64>::identity(24, 24)).norm();
        assert!(err < 1e-12);
        // eigenvalues on the unit circle
        let ev = linalg::complex_eigenvalues(&m).unwrap();
        for l in ev {
            assert!((l.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn open_baker_rank_and_dimension_error() {
        assert!(matches!(
            open_baker(10, &[0]),
            Err(QuantumMapError::DimensionError(10, 3))
        ));
        let b = open_baker(3, &[0, 2]).unwrap();
        assert_eq!(b.to_dense().rank(1e-10), 2);
    }

    #[test]
    fn open_baker_subunitary() {
        let b = open_baker(27, &[0, 2]).unwrap();
        let sv = linalg::singular_values(&b.to_dense());
        assert!(sv[0] <= 1.0 + 1e-12);
    }

    #[test]
    fn repeller_dimension_middle_thirds() {
        // kept branches {0, 2}: exact Cantor middle-thirds, dim = ln2/ln3
        let dim = baker_repeller_dimension(3, &[0, 2], &[4, 5, 6, 7, 8]);
        assert_relative_eq!(dim, 2f64.ln() / 3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn dressing_identity_and_composition() {
        let b = open_baker(9, &[0, 2]).unwrap();
        let times = vec![DressingTimes::Constant(1.3)];
        let z0 = dress_with_energy_phase(&b, &times, C64::new(0.0, 0.0));
        assert!((z0.to_dense() - b.to_dense()).norm() < 1e-14);
        let z1 = C64::new(0.01, -0.002);
        let z2 = C64::new(-0.004, 0.001);
        let once = dress_with_energy_phase(&b, &times, z1 + z2);
        let twice = dress_with_energy_phase(&dress_with_energy_phase(&b, &times, z1), &times, z2);
        assert!((once.to_dense() - twice.to_dense()).norm() < 1e-12);
    }

    #[test]
    fn dressing_constant_time_is_scalar_factor() {
        let b = open_baker(9, &[0, 1]).unwrap();
        let t = 0.7;
        let z = C64::new(0.02, -0.01);
        let dressed = dress_with_energy_phase(&b, &[DressingTimes::Constant(t)], z);
        let factor = (C64::new(0.0, 1.0) * z * t / b.h).exp();
        let expect = b.to_dense() * factor;
        assert!((dressed.to_dense() - expect).norm() < 1e-12);
    }

    #[test]
    fn dressing_norm_amplification_bound() {
        // Im z = -M0 h log(1/h): |e^{izt/h}| = h^{-M0 t} <= h^{-M0 tmax}
        let b = open_baker(27, &[0, 2]).unwrap();
        let h = b.h;
        let m0 = 1.5;
        let t = 0.8;
        let z = C64::new(0.0, -m0 * h * (1.0 / h).ln());
        let dressed = dress_with_energy_phase(&b, &[DressingTimes::Constant(t)], z);
        let base_norm = b.operator_norm();
        let dressed_norm = dressed.operator_norm();
        let bound = base_norm * h.powf(-m0 * t) + 1e-9;
        assert!(
            dressed_norm <= bound,
            "dressed {dressed_norm} vs bound {bound}"
        );
    }

    #[test]
    fn dressed_family_is_holomorphic() {
        let b = open_baker(9, &[0, 2]).unwrap();
        let fam = DressedFamily::constant_time(b, 1.0);
        let defect = cauchy_riemann_defect(|z| fam.eval(z).to_dense(), C64::new(0.01, -0.005), 1e-6);
        assert!(defect < 1e-7);
    }

    #[test]
    fn projector_positive_symbol_rank_zero() {
        let p = spectral_projector(&|_, _| 1.5, 16, "positive").unwrap();
        assert_eq!(p.rank, 0);
        assert!(p.idempotency_defect() < 1e-10);
    }

    #[test]
    fn projector_disk_symbol_weyl_count() {
        let r = 0.3;
        let q = move |y: f64, e: f64| {
            let dy = torus_dist(y);
            let de = torus_dist(e);
            dy * dy + de * de - r * r
        };
        let n = 64;
        let p = spectral_projector(&q, n, "disk r=0.3").unwrap();
        // rank/N -> pi r^2 (area of the negative set)
        let frac = p.rank as f64 / n as f64;
        let target = std::f64::consts::PI * r * r;
        assert!(
            (frac - target).abs() < 0.05,
            "rank fraction {frac} vs area {target}"
        );
        assert!(p.idempotency_defect() < 1e-10);
        assert!(p.hermiticity_defect() < 1e-10);
    }

    #[test]
    fn truncation_by_identity_and_zero() {
        let b = open_baker(9, &[0, 1]).unwrap();
        let id = SpectralProjector::identity(9);
        let t = truncate(&b, &[id]);
        assert!((t.to_dense() - b.to_dense()).norm() < 1e-14);
        let zero = SpectralProjector {
            pi: DMatrix::zeros(9, 9),
            rank: 0,
            source_symbol: "zero".into(),
        };
        let t0 = truncate(&b, &[zero]);
        assert!(t0.to_dense().norm() < 1e-14);
    }

    #[test]
    fn truncation_never_increases_norm_and_bounds_rank() {
        let b = open_baker(27, &[0, 2]).unwrap();
        let r = 0.35;
        let q = move |y: f64, e: f64| {
            let dy = torus_dist(y);
            let de = torus_dist(e);
            dy * dy + de * de - r * r
        };
        let p = spectral_projector(&q, 27, "disk").unwrap();
        let rank_bound = p.rank;
        let t = truncate(&b, &[p]);
        assert!(t.operator_norm() <= b.operator_norm() + 1e-12);
        assert!(t.rank() <= rank_bound);
    }

    #[test]
    fn poisson_normalization_complex_z_trend() {
        // for Im z > 0 the discretized ratio drifts from 1 proportionally
        // to the amplification across the step width, but stays controlled
        let h = 0.1;
        let real = poisson_normalization_check(
            12,
            320,
            1.0,
            h,
            C64::new(0.3, 0.0),
            StepProfile::Smooth { width: 0.8 },
        );
        let complex = poisson_normalization_check(
            12,
            320,
            1.0,
            h,
            C64::new(0.3, h),
            StepProfile::Smooth { width: 0.8 },
        );
        let d_real = (real - C64::new(1.0, 0.0)).norm();
        let d_complex = (complex - C64::new(1.0, 0.0)).norm();
        assert!(d_real < 1e-6);
        // measured drift grows with Im z but stays far below order one
        assert!(d_complex < 0.05, "complex-z drift {d_complex:.2e}");
    }

    #[test]
    fn poisson_normalization_real_z() {
        let ratio = poisson_normalization_check(
            24,
            320,
            1.0,
            0.1,
            C64::new(0.3, 0.0),
            StepProfile::Smooth { width: 0.8 },
        );
        assert!(
            (ratio - C64::new(1.0, 0.0)).norm() < 1e-6,
            "ratio = {ratio}"
        );
    }

    #[test]
    fn poisson_normalization_profile_independent() {
        let z = C64::new(0.25, 0.0);
        let r1 = poisson_normalization_check(16, 320, 1.0, 0.1, z, StepProfile::Smooth { width: 0.9 });
        let r2 = poisson_normalization_check(16, 320, 1.0, 0.1, z, StepProfile::Tanh { scale: 0.09 });
        assert!((r1 - r2).norm() < 1e-6, "profiles differ: {r1} vs {r2}");
    }

    #[test]
    fn transfer_block_caustic_detected() {
        // S with d2S/dqdq' = q_out q_in changes sign on a window through zero
        struct Caustic;
        impl GeneratingFunction for Caustic {
            fn value(&self, q_out: f64, q_in: f64, _e: f64) -> f64 {
                0.25 * q_out * q_out * q_in * q_in
            }
        }
        let w = QuadratureWindow {
            lo: -1.0,
            hi: 1.0,
            npts: 12,
            taper_fraction: 0.2,
        };
        assert!(matches!(
            bogomolny_transfer_block(&Caustic, 0.05, 0.0, &w, &w),
            Err(QuantumMapError::CausticError)
        ));
    }

    #[test]
    fn transfer_block_fourier_generator_matches_quadrature_oracle() {
        // S = Lambda q q': the transfer block applied to a wavepacket must
        // agree with high-order Gauss-Legendre evaluation of the integral.
        struct Dilation {
            lambda: f64,
        }
        impl GeneratingFunction for Dilation {
            fn value(&self, q_out: f64, q_in: f64, _e: f64) -> f64 {
                self.lambda * q_out * q_in
            }
            fn d2_mixed(&self, _q: f64, _p: f64, _e: f64) -> f64 {
                self.lambda
            }
        }
        let gen = Dilation { lambda: 1.4 };
        let h = 0.02;
        let w = QuadratureWindow {
            lo: -1.0,
            hi: 1.0,
            npts: 220,
            taper_fraction: 0.15,
        };
        let t = bogomolny_transfer_block(&gen, h, 0.0, &w, &w).unwrap();
        let packet = |q: f64| C64::from_polar((-30.0 * q * q).exp(), 0.3 * q / h);
        let out = apply_to_samples(&t, &w, &packet);
        // oracle: 64-node Gauss-Legendre on the same windowed integrand
        let (nodes, weights) = crate::linalg::gauss_legendre(64);
        let pref = C64::from_polar(
            (gen.lambda / (2.0 * std::f64::consts::PI * h)).sqrt(),
            -std::f64::consts::FRAC_PI_4,
        );
        let grid = w.grid();
        // with equal grids the sqrt(dq dq') matrix normalization makes
        // (T u)_a approximate the continuum integral directly
        for idx in [w.npts / 2, w.npts / 3, 2 * w.npts / 3] {
            let qa = grid[idx];
            let mut oracle = C64::new(0.0, 0.0);
            for (x, wt) in nodes.iter().zip(&weights) {
                let q = x; // window is [-1, 1]
                let kern = C64::from_polar(1.0, gen.lambda * qa * q / h);
                oracle += kern * packet(*q) * w.weight(*q) * *wt;
            }
            oracle *= pref * w.weight(qa);
            let got = out[idx];
            assert!(
                (got - oracle).norm() < 1e-3 * oracle.norm().max(1.0),
                "row {idx}: got {got}, oracle {oracle}"
            );
        }
    }

    #[test]
    fn generating_consistency_dilation() {
        // S = Lambda q q' generates p_in = -Lambda q_out, p_out = Lambda q_in
        struct Dilation {
            lambda: f64,
        }
        impl GeneratingFunction for Dilation {
            fn value(&self, q_out: f64, q_in: f64, _e: f64) -> f64 {
                self.lambda * q_out * q_in
            }
        }
        let gen = Dilation { lambda: 2.0 };
        let samples: Vec<((f64, f64), (f64, f64))> = (0..10)
            .map(|k| {
                let q_in = -0.4 + 0.08 * k as f64;
                let p_in: f64 = 0.3;
                // map induced by S: q_out = -p_in/Lambda, p_out = Lambda q_in
                ((q_in, p_in), (-p_in / 2.0, 2.0 * q_in))
            })
            .collect();
        assert!(generating_function_consistency(&gen, 0.0, &samples) < 1e-3);
    }
}
