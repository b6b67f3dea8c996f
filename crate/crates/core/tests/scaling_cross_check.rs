//! Complex-scaling resonances against the independent matching oracle.

mod common;

use num_complex::Complex64 as C64;
use poincarezeta::scaling1d::{
    cutoff_resolvent_defect, resonances_direct, DirectSearchParams, SmoothBarrier, Window1d,
};

fn barrier() -> SmoothBarrier {
    SmoothBarrier {
        height: 1.0,
        half_width: 1.0,
        edge_width: 0.08,
    }
}

fn params() -> DirectSearchParams {
    DirectSearchParams {
        half_length: 5.0,
        npts: 4000,
        contour_radius: 2.0,
        krylov: 70,
        per_shift: 6,
        shift_grid: (3, 2),
        stability_tol: 1e-6,
    }
}

#[test]
fn barrier_resonances_match_matching_oracle() {
    let pot = barrier();
    let h = 0.05;
    let window = Window1d {
        re_min: 0.0,
        re_max: 0.12,
        im_min: -0.05,
        im_max: -1e-6,
    };
    let mut direct = resonances_direct(&pot, h, window, &[0.3, 0.4, 0.5], &params()).unwrap();
    direct.sort_by(|a, b| a.z.re.total_cmp(&b.z.re));
    assert!(direct.len() >= 3, "found only {} resonances", direct.len());

    // independent oracle: outgoing-wave matching with sharp-barrier guesses
    let oracle = common::MatchingOracle {
        potential: &pot,
        h,
        x_max: 3.0,
        steps: 30_000,
    };
    let mut oracle_zs = Vec::new();
    for m in 1..=4 {
        let guess = C64::new((m as f64 * std::f64::consts::PI * h / 2.0).powi(2), -0.003);
        if let Some(z) = oracle.refine(guess) {
            if window.contains(z) {
                oracle_zs.push(z);
            }
        }
    }
    oracle_zs.sort_by(|a, b| a.re.total_cmp(&b.re));
    assert!(oracle_zs.len() >= 3);

    for (d, o) in direct.iter().zip(&oracle_zs).take(3) {
        assert!(
            (d.z - o).norm() < 1e-6,
            "direct {} vs oracle {o}",
            d.z
        );
        // theta-independence
        assert!(d.theta_spread <= 1e-6);
    }
}

#[test]
fn cutoff_resolvent_identity_above_the_axis() {
    // chi (P_theta - z)^{-1} chi = chi (P - z)^{-1} chi for Im z > 0
    let pot = barrier();
    let mut p = params();
    p.npts = 2400;
    let defect = cutoff_resolvent_defect(&pot, 0.3, 0.05, C64::new(0.05, 0.6), 1.6, &p).unwrap();
    assert!(defect <= 1e-6, "cutoff resolvent defect {defect:.3e}");
}

#[test]
fn log_scaled_angle_option_agrees_with_fixed_angles() {
    // theta(h) = m1 h log(1/h) lands in the stable sector for m1 ~ 2
    use poincarezeta::scaling1d::theta_of_h;
    let pot = barrier();
    let h = 0.05;
    let th = theta_of_h(2.0, h);
    assert!(th > 0.25 && th < 0.35, "theta(h) = {th}");
    let window = Window1d {
        re_min: 0.0,
        re_max: 0.08,
        im_min: -0.03,
        im_max: -1e-6,
    };
    let fixed = resonances_direct(&pot, h, window, &[0.4, 0.5], &params()).unwrap();
    let scaled = resonances_direct(&pot, h, window, &[th, 0.4], &params()).unwrap();
    for s in &scaled {
        let nearest = fixed
            .iter()
            .map(|f| (f.z - s.z).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest <= 1e-6, "log-scaled angle moved a resonance by {nearest:.2e}");
    }
}
