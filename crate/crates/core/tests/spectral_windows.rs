//! Resonance localization against dressed-map closed forms.

use num_complex::Complex64 as C64;
use poincarezeta::grushin::{find_resonances, Window};
use poincarezeta::quantum_maps::{DressedFamily, OpenMapMatrix};
use nalgebra::DMatrix;

fn scalar_family(lambda: C64, h: f64, t: f64) -> DressedFamily {
    let base = OpenMapMatrix::single(DMatrix::from_element(1, 1, lambda), h, "scalar model");
    DressedFamily::constant_time(base, t)
}

/// Zeros of `1 - e^{izT/h} lambda`: `z_k = (h/T)(2 pi k + i ln lambda)`.
fn closed_form_zeros(lambda: C64, h: f64, t: f64, window: &Window) -> Vec<C64> {
    let mut out = Vec::new();
    let ln = lambda.ln();
    for k in -10..=10 {
        let z = C64::new(h / t, 0.0)
            * (C64::new(2.0 * std::f64::consts::PI * k as f64, 0.0) + C64::new(0.0, 1.0) * ln);
        if z.re >= window.re_min
            && z.re <= window.re_max
            && z.im >= window.im_min
            && z.im <= window.im_max
        {
            out.push(z);
        }
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re));
    out
}

#[test]
fn dressed_scalar_zeros_match_the_logarithm_lattice() {
    let h = 0.01;
    let t = 1.0;
    let lambda = C64::new(0.5, 0.0);
    let fam = scalar_family(lambda, h, t);
    // window wide enough for the k = -1, 0, 1 lattice points
    let window = Window {
        re_min: -0.07,
        re_max: 0.07,
        im_min: -0.02,
        im_max: 0.0,
    };
    let expected = closed_form_zeros(lambda, h, t, &window);
    assert_eq!(expected.len(), 3);
    let list = find_resonances(&fam, window, (3, 1)).unwrap();
    assert_eq!(list.total_count, 3);
    assert_eq!(list.zeros.len(), 3);
    for (z, e) in list.zeros.iter().zip(&expected) {
        assert_eq!(z.multiplicity, 1);
        assert!(
            (z.z - e).norm() < 1e-8,
            "zero {} vs closed form {e}",
            z.z
        );
        assert!(z.residual <= 1e-10 * list.boundary_max_abs);
    }
}

#[test]
fn refinement_invariance_of_the_zero_list() {
    let h = 0.01;
    let t = 1.0;
    let lambda = C64::new(0.35, 0.12);
    let fam = scalar_family(lambda, h, t);
    let window = Window {
        re_min: -0.05,
        re_max: 0.055,
        im_min: -0.025,
        im_max: 0.0,
    };
    let coarse = find_resonances(&fam, window, (1, 1)).unwrap();
    let fine = find_resonances(&fam, window, (4, 3)).unwrap();
    assert_eq!(coarse.total_count, fine.total_count);
    assert_eq!(coarse.zeros.len(), fine.zeros.len());
    for (a, b) in coarse.zeros.iter().zip(&fine.zeros) {
        assert!((a.z - b.z).norm() < 1e-8);
        assert_eq!(a.multiplicity, b.multiplicity);
    }
}

#[test]
fn two_scale_diagonal_family() {
    // two eigenvalues produce interleaved lattices with distinct imaginary parts
    let h = 0.01;
    let t = 1.0;
    let l1 = C64::new(0.5, 0.0);
    let l2 = C64::new(0.3, 0.1);
    let base = OpenMapMatrix::single(
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![l1, l2])),
        h,
        "diag model",
    );
    let fam = DressedFamily::constant_time(base, t);
    let window = Window {
        re_min: -0.05,
        re_max: 0.05,
        im_min: -0.02,
        im_max: 0.0,
    };
    let mut expected = closed_form_zeros(l1, h, t, &window);
    expected.extend(closed_form_zeros(l2, h, t, &window));
    expected.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    let list = find_resonances(&fam, window, (2, 2)).unwrap();
    assert_eq!(list.zeros.len(), expected.len());
    for (z, e) in list.zeros.iter().zip(&expected) {
        assert!((z.z - e).norm() < 1e-8, "{} vs {e}", z.z);
    }
}

/// Full pipeline on a two-section loop: Bogomolny transfer blocks for two
/// free flights, assembled into a sparse block map, dressed with the
/// energy phase, and fed to the zero search. The expected lattice comes
/// from an eigendecomposition of the one-cycle product.
#[test]
fn two_section_transfer_loop_pipeline() {
    use poincarezeta::quantum_maps::{
        bogomolny_transfer_block, DressingTimes, GeneratingFunction, QuadratureWindow,
    };

    struct Flight;
    impl GeneratingFunction for Flight {
        fn value(&self, q_out: f64, q_in: f64, energy: f64) -> f64 {
            let d = q_out - q_in;
            (energy + 1.0).sqrt() * (d * d + 1.0).sqrt()
        }
    }
    let h = 0.05;
    let w = QuadratureWindow {
        lo: -0.5,
        hi: 0.5,
        npts: 40,
        taper_fraction: 0.25,
    };
    let t01 = bogomolny_transfer_block(&Flight, h, 0.0, &w, &w).unwrap();
    let t10 = t01.clone();
    let base = OpenMapMatrix::from_blocks(
        vec![
            vec![None, Some(t10.clone())],
            vec![Some(t01.clone()), None],
        ],
        h,
        "two-section loop",
    )
    .unwrap();
    // adjacency reflects the loop sparsity
    assert_eq!(base.adjacency(), vec![vec![1], vec![0]]);
    let flight_time = 0.5; // distance 1 at speed 2
    let fam = DressedFamily::new(
        base,
        vec![
            DressingTimes::PerColumn(vec![flight_time; w.npts]),
            DressingTimes::Constant(flight_time),
        ],
    );
    // one-cycle eigenvalue oracle: det(I - M(z)) = det(I - e^{izT/h} BA)
    let cycle = &t10 * &t01;
    let eigs = poincarezeta::linalg::complex_eigenvalues(&cycle).unwrap();
    let period = 2.0 * flight_time;
    let window = Window {
        re_min: -0.1,
        re_max: 0.1,
        im_min: -0.06,
        im_max: -1e-4,
    };
    let mut expected: Vec<C64> = Vec::new();
    for mu in &eigs {
        if mu.norm() < 1e-6 {
            continue;
        }
        let ln = mu.ln();
        for k in -2..=2i32 {
            let z = C64::new(h / period, 0.0)
                * (C64::new(2.0 * std::f64::consts::PI * k as f64, 0.0)
                    + C64::new(0.0, 1.0) * ln);
            if window.contains(z) {
                expected.push(z);
            }
        }
    }
    expected.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    assert!(expected.len() >= 2, "oracle found too few lattice points");
    let list = find_resonances(&fam, window, (2, 2)).unwrap();
    assert_eq!(
        list.zeros.len(),
        expected.len(),
        "pipeline zeros {:?} vs oracle {:?}",
        list.zeros.iter().map(|z| z.z).collect::<Vec<_>>(),
        expected
    );
    for (z, e) in list.zeros.iter().zip(&expected) {
        assert!(
            (z.z - e).norm() < 1e-7,
            "pipeline zero {} vs oracle {e}",
            z.z
        );
    }
}
