//! Shared oracles for the integration tests: a shooting/Newton search for
//! the symmetric periodic orbits of the three-bump system, and an ODE
//! matching-determinant locator for 1D barrier resonances. Both are
//! independent of the code paths they are used to check.

#![allow(dead_code)]

use num_complex::Complex64 as C64;
use poincarezeta::phase_flow::{
    integrate_with_tangent, FlowStepper, HamiltonianSystem, PhasePoint, ThreeBumpPotential,
};
use poincarezeta::poincare::{DomainBox, HyperplaneSection};
use poincarezeta::scaling1d::AnalyticPotential1d;

pub fn three_bump_system() -> HamiltonianSystem<ThreeBumpPotential> {
    HamiltonianSystem::new(ThreeBumpPotential::new(4.0), 4.0)
}

/// The symmetric bouncing orbit between bumps 1 and 2 (the pair straddling
/// the x axis), found by shooting from the symmetry axis.
pub struct PeriodicOrbit {
    /// Axis crossing point `(u, 0)` with vertical momentum.
    pub axis_x: f64,
    pub start: PhasePoint,
    pub period: f64,
    /// Larger eigenvalue of the section-reduced monodromy.
    pub expansion: f64,
}

/// Momentum magnitude on the zero-energy shell at `(x, 0)`.
fn shell_momentum(sys: &HamiltonianSystem<ThreeBumpPotential>, x: f64) -> f64 {
    use poincarezeta::phase_flow::Potential;
    (1.0 - sys.potential.value(&[x, 0.0])).sqrt()
}

/// Integrates from `(u, 0)` straight up until the first downward crossing
/// of the axis `y = 0`; returns `(xi_x at crossing, crossing time)`, or
/// `None` when the orbit escapes the interaction region first.
fn shoot(sys: &HamiltonianSystem<ThreeBumpPotential>, u: f64, dt: f64) -> Option<(f64, f64)> {
    let xi0 = shell_momentum(sys, u);
    let mut rho = PhasePoint::new(vec![u, 0.0], vec![0.0, xi0]).unwrap();
    let mut stepper = FlowStepper::new(sys);
    let mut t = 0.0;
    let mut prev_y = 0.0;
    for _ in 0..2_000_000 {
        let prev = rho.clone();
        stepper.step(&mut rho, dt);
        t += dt;
        if rho.x[0] * rho.x[0] + rho.x[1] * rho.x[1] > 16.0 {
            return None;
        }
        if t > 5.0 * dt && prev_y > 0.0 && rho.x[1] <= 0.0 && rho.xi[1] < 0.0 {
            // bisect the crossing inside the last step
            let mut lo = 0.0;
            let mut hi = dt;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let mut probe = prev.clone();
                let mut st = FlowStepper::new(sys);
                st.step(&mut probe, mid);
                if probe.x[1] > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let tau = 0.5 * (lo + hi);
            let mut fin = prev.clone();
            let mut st = FlowStepper::new(sys);
            st.step(&mut fin, tau);
            return Some((fin.xi[0], t - dt + tau));
        }
        prev_y = rho.x[1];
    }
    None
}

/// Locates the symmetric periodic orbit by bisection on the shooting angle
/// and extracts period and monodromy expansion factor.
pub fn find_symmetric_orbit(sys: &HamiltonianSystem<ThreeBumpPotential>, dt: f64) -> PeriodicOrbit {
    let eval_angle = |u: f64| shoot(sys, u, dt).map(|s| s.0);
    // scan for a sign change among non-escaping shots
    let mut bracket: Option<(f64, f64, f64)> = None;
    let mut last: Option<(f64, f64)> = None;
    for k in 0..=40 {
        let u = -0.56 + 0.004 * k as f64;
        if let Some(g) = eval_angle(u) {
            if let Some((up, gp)) = last {
                if gp * g <= 0.0 {
                    bracket = Some((up, u, gp));
                    break;
                }
            }
            last = Some((u, g));
        } else {
            last = None;
        }
    }
    let (mut lo, mut hi, mut flo) = bracket.expect("no shooting bracket found for the orbit");
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let fm = eval_angle(mid).expect("orbit escaped inside the bracket");
        if flo * fm <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let u = 0.5 * (lo + hi);
    let (_, t_half) = shoot(sys, u, dt).expect("refined orbit escaped");
    let period = 2.0 * t_half;
    let start = PhasePoint::new(vec![u, 0.0], vec![0.0, shell_momentum(sys, u)]).unwrap();
    let (_, frame) = integrate_with_tangent(sys, &start, period, dt).unwrap();
    // eigenvalues of the 4x4 monodromy are {1, 1, L, 1/L};
    // trace = 2 + L + 1/L gives the expansion factor
    let tr = (0..4).map(|i| frame.j[(i, i)]).sum::<f64>();
    let s = tr - 2.0;
    let expansion = 0.5 * (s + (s * s - 4.0).max(0.0).sqrt());
    PeriodicOrbit {
        axis_x: u,
        start,
        period,
        expansion,
    }
}

/// The six oriented midplane sections of the three-bump system: for each
/// bump pair, the perpendicular bisector plane of the connecting segment,
/// once per crossing direction. Section `2p + o` belongs to pair `p` with
/// orientation `o`.
pub fn three_bump_sections() -> Vec<HyperplaneSection> {
    let centers: Vec<[f64; 2]> = (1..=3)
        .map(|k| {
            let ang = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
            [ang.cos(), ang.sin()]
        })
        .collect();
    let pairs = [(0usize, 1usize), (1, 2), (2, 0)];
    let mut out = Vec::new();
    for (p, (i, j)) in pairs.iter().enumerate() {
        let mid = [
            0.5 * (centers[*i][0] + centers[*j][0]),
            0.5 * (centers[*i][1] + centers[*j][1]),
        ];
        let mut axis = [
            centers[*j][0] - centers[*i][0],
            centers[*j][1] - centers[*i][1],
        ];
        let norm = (axis[0] * axis[0] + axis[1] * axis[1]).sqrt();
        axis = [axis[0] / norm, axis[1] / norm];
        for o in 0..2 {
            let sign = if o == 0 { 1.0 } else { -1.0 };
            let normal = vec![sign * axis[0], sign * axis[1]];
            // tangent chosen so (tangent, normal) is positively oriented
            let tangent = vec![sign * -axis[1], sign * axis[0]];
            out.push(HyperplaneSection::new(
                2 * p + o,
                mid.to_vec(),
                vec![tangent],
                normal,
                DomainBox {
                    lo: vec![-0.25, -0.45],
                    hi: vec![0.25, 0.45],
                },
            ));
        }
    }
    out
}

/// Resonances of a 1D potential by outgoing-wave matching: integrates
/// `h^2 u'' = (V - 1 - z) u` across the interaction region from a
/// left-outgoing wave and finds the zeros of the right-matching
/// determinant `W(z) = u'(X) - (i k / h) u(X)` by secant iteration.
pub struct MatchingOracle<'a> {
    pub potential: &'a dyn AnalyticPotential1d,
    pub h: f64,
    pub x_max: f64,
    pub steps: usize,
}

impl<'a> MatchingOracle<'a> {
    fn wavenumber(&self, z: C64) -> C64 {
        // outgoing branch: Re k > 0
        let k = (z + 1.0).sqrt();
        if k.re < 0.0 {
            -k
        } else {
            k
        }
    }

    /// Matching determinant via RK4 integration of the second-order ODE.
    pub fn matching_determinant(&self, z: C64) -> C64 {
        let k = self.wavenumber(z);
        let h2 = self.h * self.h;
        let dx = 2.0 * self.x_max / self.steps as f64;
        let ik_h = C64::new(0.0, 1.0) * k / self.h;
        // left-outgoing initial data u = e^{-i k x / h} at x = -X
        let x0 = -self.x_max;
        let mut u = (-ik_h * x0).exp();
        let mut v = -ik_h * u;
        let rhs = |x: f64, u: C64| -> C64 {
            ((self.potential.eval_complex(C64::new(x, 0.0)) - 1.0 - z) / h2) * u
        };
        let mut x = x0;
        for _ in 0..self.steps {
            let k1u = v;
            let k1v = rhs(x, u);
            let k2u = v + 0.5 * dx * k1v;
            let k2v = rhs(x + 0.5 * dx, u + 0.5 * dx * k1u);
            let k3u = v + 0.5 * dx * k2v;
            let k3v = rhs(x + 0.5 * dx, u + 0.5 * dx * k2u);
            let k4u = v + dx * k3v;
            let k4v = rhs(x + dx, u + dx * k3u);
            u += dx / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            v += dx / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            x += dx;
        }
        // right-outgoing means u'/u = +ik/h at x = +X; normalize by |u|
        (v - ik_h * u) / u.norm()
    }

    /// Secant refinement from an initial guess; `None` when the iteration
    /// leaves the basin or stalls.
    pub fn refine(&self, guess: C64) -> Option<C64> {
        let mut z0 = guess;
        let mut z1 = guess + C64::new(1e-4, -1e-4);
        let mut w0 = self.matching_determinant(z0);
        for _ in 0..80 {
            let w1 = self.matching_determinant(z1);
            let denom = w1 - w0;
            if denom.norm() < 1e-300 {
                return None;
            }
            let z2 = z1 - w1 * (z1 - z0) / denom;
            if !z2.re.is_finite() || !z2.im.is_finite() || (z2 - guess).norm() > 0.2 {
                return None;
            }
            z0 = z1;
            w0 = w1;
            z1 = z2;
            if (z1 - z0).norm() < 1e-12 {
                return Some(z1);
            }
        }
        None
    }
}
