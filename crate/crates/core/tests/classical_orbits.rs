//! Three-bump classical dynamics against the shooting-orbit oracle.

mod common;

use poincarezeta::phase_flow::{
    escape_time, hyperbolicity_report, integrate_flow, sample_trapped_set, GridSpec, PhasePoint,
    TrappedSetSample,
};

fn rotate_point(p: &PhasePoint, angle: f64) -> PhasePoint {
    let (s, c) = angle.sin_cos();
    PhasePoint::new(
        vec![c * p.x[0] - s * p.x[1], s * p.x[0] + c * p.x[1]],
        vec![c * p.xi[0] - s * p.xi[1], s * p.xi[0] + c * p.xi[1]],
    )
    .unwrap()
}

#[test]
fn periodic_orbit_closes_and_escape_is_capped() {
    let sys = common::three_bump_system();
    let orbit = common::find_symmetric_orbit(&sys, 1e-3);
    // one full period returns to the start well within the 1e-3 contract
    let end = integrate_flow(&sys, &orbit.start, orbit.period, 1e-3).unwrap();
    assert!(
        end.distance(&orbit.start) < 1e-3,
        "periodic orbit failed to close: {:.3e}",
        end.distance(&orbit.start)
    );
    // the orbit never escapes: the cap value is returned. The cap must stay
    // below the shadowing horizon ~ ln(1/closure_err)/lyapunov, beyond which
    // roundoff pushes the computed orbit off the true one.
    let t_cap = 6.0;
    let te = escape_time(&sys, &orbit.start, 4.0, t_cap, 1e-3).unwrap();
    assert_eq!(te, t_cap);
    // the threefold symmetry gives two more copies; all trapped
    for k in 1..3 {
        let copy = rotate_point(&orbit.start, 2.0 * std::f64::consts::PI * k as f64 / 3.0);
        let te = escape_time(&sys, &copy, 4.0, t_cap, 1e-3).unwrap();
        assert_eq!(te, t_cap, "rotated orbit {k} escaped");
    }
}

#[test]
fn trapped_sample_contains_the_three_bouncing_orbits() {
    let sys = common::three_bump_system();
    let orbit = common::find_symmetric_orbit(&sys, 1e-3);
    use poincarezeta::phase_flow::Hamiltonian;
    // survivors of the escape-time threshold cluster in tubes of width
    // ~ exp(-lambda (t - transit)) around the trapped set, so each channel
    // needs a grid fine enough to resolve its tube
    for k in 0..3 {
        let target = rotate_point(&orbit.start, 2.0 * std::f64::consts::PI * k as f64 / 3.0);
        let grid = GridSpec {
            x_lo: vec![target.x[0] - 0.1, target.x[1] - 0.1],
            x_hi: vec![target.x[0] + 0.1, target.x[1] + 0.1],
            npos: 5,
            xi_lo: vec![target.xi[0] - 0.15, target.xi[1] - 0.15],
            xi_hi: vec![target.xi[0] + 0.15, target.xi[1] + 0.15],
            nmom: 7,
        };
        let sample = sample_trapped_set(&sys, 0.0, &grid, 2.6, 2e-3)
            .unwrap_or_else(|e| panic!("channel {k}: {e}"));
        // shell contract for every stored point
        for p in &sample.points {
            assert!(sys.symbol(p).abs() <= 1e-8);
            let r = (p.x[0] * p.x[0] + p.x[1] * p.x[1]).sqrt();
            assert!(r < 4.0);
        }
        let nearest = sample
            .points
            .iter()
            .map(|p| p.distance(&target).min(p.distance(&flip(&target))))
            .fold(f64::INFINITY, f64::min);
        assert!(
            nearest < 0.35,
            "no sample point near bouncing orbit {k}: nearest {nearest:.3}"
        );
        // threshold honored
        for te in &sample.escape_times {
            assert!(*te >= 2.6);
        }
    }
}

fn flip(p: &PhasePoint) -> PhasePoint {
    PhasePoint::new(p.x.clone(), vec![-p.xi[0], -p.xi[1]]).unwrap()
}

#[test]
fn hyperbolicity_flags_orbit_but_not_free_motion() {
    let sys = common::three_bump_system();
    let orbit = common::find_symmetric_orbit(&sys, 1e-3);
    let lyap_oracle = orbit.expansion.ln() / orbit.period;
    assert!(
        orbit.expansion > 1.0,
        "monodromy expansion must exceed 1, got {}",
        orbit.expansion
    );
    let sample = TrappedSetSample {
        energy: 0.0,
        points: vec![orbit.start.clone()],
        escape_times: vec![f64::INFINITY],
        escape_threshold_time: 10.0,
        grid_spec: "oracle orbit".into(),
    };
    let report = hyperbolicity_report(&sys, &sample, 4.0, 1e-3, 0.1);
    let rec = &report[0];
    assert!(rec.hyperbolic, "orbit not flagged hyperbolic");
    assert!(
        (rec.lambda_forward - lyap_oracle).abs() < 0.35 * lyap_oracle,
        "fitted rate {:.3} vs oracle {:.3}",
        rec.lambda_forward,
        lyap_oracle
    );
    // time-reversal symmetry: forward and backward rates agree within 20%
    assert!(
        (rec.lambda_forward - rec.lambda_backward).abs()
            <= 0.2 * rec.lambda_forward.abs().max(rec.lambda_backward.abs()),
        "forward {:.3} vs backward {:.3}",
        rec.lambda_forward,
        rec.lambda_backward
    );

    // free flow: polynomial growth only on a long window
    let free = poincarezeta::phase_flow::HamiltonianSystem::new(
        poincarezeta::phase_flow::FreePotential { dim: 2 },
        1.0,
    );
    let free_sample = TrappedSetSample {
        energy: 0.0,
        points: vec![PhasePoint::new(vec![0.2, -0.1], vec![0.6, 0.8]).unwrap()],
        escape_times: vec![0.6],
        escape_threshold_time: 0.0,
        grid_spec: "free".into(),
    };
    let report = hyperbolicity_report(&free, &free_sample, 50.0, 1e-2, 0.1);
    assert!(!report[0].hyperbolic);
    assert!(
        report[0].lambda_forward.abs() < 0.1,
        "free flow fitted rate {:.3}",
        report[0].lambda_forward
    );
}
