mod common;

use common::square_space;
use nondiv_fem::coefficients::{
    constant_a, hoelder_a, identity_a, make_problem, problem_by_name, smooth_a, CatalogParams, ScalarField,
};
use nondiv_fem::geometry::Mat2;
use nondiv_fem::norms::error_norms;
use nondiv_fem::operator::{assemble_divform, load_vector};
use nondiv_fem::probe::{stability_probe, stability_probe_with, ProbeMethod, ProbeOptions};
use nondiv_fem::solver::{galerkin_residual, invertibility_check, solve};
use nondiv_fem::sparse::SparseLu;

#[test]
fn error_is_quasi_optimal() {
    let p = problem_by_name("smooth-sin", &CatalogParams::default()).unwrap();
    for r in [1, 2] {
        let ratios: Vec<f64> = [4, 8, 16]
            .iter()
            .map(|&n| {
                let s = square_space(n, r);
                let uh = solve(&p, &s).unwrap();
                let solved = error_norms(&p.exact, &uh.solution(&s).unwrap()).h1;
                let interp = error_norms(&p.exact, &s.interpolate(|x| p.exact.value(x)).unwrap()).h1;
                solved / interp
            })
            .collect();
        assert!(ratios.iter().all(|&q| q <= 10.0), "r={r}: {ratios:?}");
        assert!(ratios[2] <= 1.5 * ratios[1], "r={r}: {ratios:?}");
    }
}

#[test]
fn constant_coefficient_solution_matches_divergence_form() {
    let params = CatalogParams {
        constant: (2.0, 0.5, 1.5),
        ..CatalogParams::default()
    };
    let p = problem_by_name("constant-sin", &params).unwrap();
    let s = square_space(6, 2);
    let uh = solve(&p, &s).unwrap();
    let k = assemble_divform(&s, &p.coefficient).unwrap().matrix;
    let rhs = load_vector(&s, |x| p.forcing(x));
    let x = SparseLu::factor(&k).unwrap().solve(&rhs);
    let got = s.restrict_to_free(&uh.coeffs);
    let err = got.iter().zip(&x).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err < 1e-11, "{err}");
}

#[test]
fn zero_forcing_gives_zero_solution() {
    let p = make_problem("zero", smooth_a(), ScalarField::zero(), f64::INFINITY).unwrap();
    let s = square_space(4, 2);
    let uh = solve(&p, &s).unwrap();
    assert!(uh.coeffs.iter().all(|&c| c == 0.0));
}

#[test]
fn perturbed_solution_is_detected_by_residual() {
    let p = problem_by_name("hoelder-sin", &CatalogParams::default()).unwrap();
    let s = square_space(6, 2);
    let mut uh = solve(&p, &s).unwrap();
    assert!(galerkin_residual(&p, &s, &uh).unwrap() <= 1e-10);
    let d = s.free_dofs()[s.n_free() / 2];
    uh.coeffs[d] += 1e-3;
    assert!(galerkin_residual(&p, &s, &uh).unwrap() > 1e-6);
}

#[test]
fn matrices_are_invertible() {
    let hoelder = hoelder_a(0.5).unwrap();
    for n in [4, 8, 16, 32] {
        assert!(invertibility_check(&square_space(n, 1), &hoelder).unwrap(), "n={n}");
    }
    for n in [4, 8, 16] {
        assert!(invertibility_check(&square_space(n, 2), &smooth_a()).unwrap(), "n={n}");
    }
}

#[test]
fn constant_coefficient_constant_lies_in_spectrum_of_a() {
    let a = constant_a(Mat2::symmetric(2.0, 1.0, 2.0)).unwrap();
    for r in [1, 2] {
        let rep = stability_probe(&square_space(6, r), &a).unwrap();
        assert!(rep.invertible);
        assert!((1.0 - 1e-8..=3.0 + 1e-8).contains(&rep.sigma_h1), "{rep:?}");
        assert!((rep.sigma_adjoint - rep.sigma_h1).abs() <= 1e-10, "{rep:?}");
    }
}

#[test]
fn adjoint_constant_equals_primal() {
    let s = square_space(6, 2);
    let rep = stability_probe(&s, &smooth_a()).unwrap();
    assert!(
        (rep.sigma_adjoint - rep.sigma_h1).abs() <= 1e-8 * rep.sigma_h1,
        "{rep:?}"
    );
}

#[test]
fn dense_and_iterative_probes_agree() {
    let s = square_space(8, 1);
    let a = hoelder_a(0.5).unwrap();
    let dense = stability_probe_with(
        &s,
        &a,
        ProbeOptions {
            method: ProbeMethod::Dense,
            ..ProbeOptions::default()
        },
    )
    .unwrap();
    let lanczos = stability_probe_with(
        &s,
        &a,
        ProbeOptions {
            method: ProbeMethod::Lanczos,
            ..ProbeOptions::default()
        },
    )
    .unwrap();
    assert!((dense.sigma_h1 - lanczos.sigma_h1).abs() <= 1e-6 * dense.sigma_h1);
}

#[test]
fn second_order_constant_stays_bounded_below() {
    let sig: Vec<f64> = [4, 8, 16]
        .iter()
        .map(|&n| {
            stability_probe(&square_space(n, 2), &identity_a())
                .unwrap()
                .sigma_h2
                .unwrap()
        })
        .collect();
    assert!(sig.iter().all(|&v| v > 0.1), "{sig:?}");
    assert!(sig[2] >= 0.75 * sig[1], "{sig:?}");
    assert!(stability_probe(&square_space(4, 1), &identity_a())
        .unwrap()
        .sigma_h2
        .is_none());
}

#[test]
fn identity_h1_constant_is_one() {
    let s = square_space(5, 3);
    let rep = stability_probe(&s, &identity_a()).unwrap();
    assert!((rep.sigma_h1 - 1.0).abs() <= 1e-8);
}
