mod common;

use std::sync::Arc;

use common::{broken_space, dot, l2_distance, random_vector, rate, square_space};
use nondiv_fem::coefficients::{constant_a, identity_a, sin_bubble, smooth_a, CoefficientField, Smoothness};
use nondiv_fem::fe_space::{quad_edge, quad_triangle, FEFunction, FESpace};
use nondiv_fem::geometry::{sub, Mat2};
use nondiv_fem::mesh::unit_square_mesh;
use nondiv_fem::norms::dual_norm_hm1;
use nondiv_fem::operator::{
    adjoint, assemble_dg, assemble_divform, assemble_nondiv, assemble_stiffness, load_vector_full, DgConfig,
};
use proptest::prelude::*;

#[test]
fn constant_coefficient_matches_divergence_form() {
    let a = constant_a(Mat2::symmetric(3.0, 1.0, 2.0)).unwrap();
    for r in 1..=3 {
        let s = square_space(3, r);
        let nd = assemble_nondiv(&s, &a).unwrap().matrix;
        let dv = assemble_divform(&s, &a).unwrap().matrix;
        assert!(nd.max_abs_diff(&dv) <= 1e-12 * dv.max_abs(), "r={r}");
    }
}

#[test]
fn operator_is_linear_in_coefficient() {
    let s = square_space(4, 2);
    let a = smooth_a();
    let b = assemble_nondiv(&s, &a).unwrap().matrix;
    let b2 = assemble_nondiv(&s, &a.scaled(2.5).unwrap()).unwrap().matrix;
    assert!(b2.max_abs_diff(&b.scaled(2.5)) <= 1e-13 * b2.max_abs());
}

#[test]
fn adjoint_identity_on_random_vectors() {
    let s = square_space(5, 2);
    let op = assemble_nondiv(&s, &smooth_a()).unwrap();
    let adj = adjoint(&op).unwrap();
    for seed in 0..5 {
        let v = random_vector(seed, s.n_free());
        let w = random_vector(100 + seed, s.n_free());
        let lhs = dot(&v, &op.matrix.mul_vec(&w));
        let rhs = dot(&w, &adj.matrix.mul_vec(&v));
        assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(1.0));
    }
    assert!(adjoint(&assemble_stiffness(&s)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn edge_orientation_does_not_matter(mask in proptest::collection::vec(any::<bool>(), 40), r in 1usize..=3) {
        let mesh = unit_square_mesh(4).unwrap();
        prop_assert_eq!(mesh.interior_edges().len(), mask.len());
        let flipped = mesh.with_flipped_edges(|i| mask[i]);
        let a = smooth_a();
        let s0 = FESpace::new(Arc::new(mesh), r).unwrap();
        let s1 = FESpace::new(Arc::new(flipped), r).unwrap();
        let b0 = assemble_nondiv(&s0, &a).unwrap().matrix;
        let b1 = assemble_nondiv(&s1, &a).unwrap().matrix;
        prop_assert!(b0.max_abs_diff(&b1) <= 1e-13 * b0.max_abs());
        let cfg = DgConfig::new(-1, 10.0).unwrap();
        let d0 = assemble_dg(&FESpace::discontinuous(s0.mesh_arc().clone(), r).unwrap(), &a, cfg).unwrap().matrix;
        let d1 = assemble_dg(&FESpace::discontinuous(s1.mesh_arc().clone(), r).unwrap(), &a, cfg).unwrap().matrix;
        prop_assert!(d0.max_abs_diff(&d1) <= 1e-13 * d0.max_abs());
    }
}

#[test]
fn symmetric_dg_with_identity_is_symmetric() {
    let s = broken_space(4, 2);
    let b = assemble_dg(&s, &identity_a(), DgConfig::new(1, 10.0).unwrap())
        .unwrap()
        .matrix;
    assert!(b.asymmetry() <= 1e-12 * b.max_abs(), "{}", b.asymmetry());
    let ns = assemble_dg(&s, &identity_a(), DgConfig::new(-1, 10.0).unwrap())
        .unwrap()
        .matrix;
    assert!(ns.asymmetry() > 1e-3 * ns.max_abs());
}

#[test]
fn dg_form_is_affine_in_epsilon() {
    let s = broken_space(3, 2);
    let a = smooth_a();
    let b = |eps| assemble_dg(&s, &a, DgConfig::new(eps, 10.0).unwrap()).unwrap().matrix;
    let (bp, b0, bm) = (b(1), b(0), b(-1));
    let lhs = bp.add_scaled(&bm, -1.0);
    let rhs = b0.add_scaled(&bm, -1.0).scaled(2.0);
    assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * bp.max_abs());
    assert!(lhs.max_abs() > 1e-3);
}

#[test]
fn larger_penalty_approaches_continuous_solution() {
    let u = sin_bubble();
    let a = identity_a();
    let f = |x| -a.eval(x).contract(&u.hessian(x));
    let continuous = square_space(4, 2);
    let uc = {
        let b = assemble_nondiv(&continuous, &a).unwrap().matrix;
        let rhs = continuous.restrict_to_free(&load_vector_full(&continuous, f));
        let x = nondiv_fem::sparse::SparseLu::factor(&b).unwrap().solve(&rhs);
        continuous.function_from_free(&x)
    };
    let broken = broken_space(4, 2);
    let dists: Vec<f64> = [10.0, 100.0, 1000.0]
        .iter()
        .map(|&g| {
            let b = assemble_dg(&broken, &a, DgConfig::new(1, g).unwrap()).unwrap().matrix;
            let rhs = load_vector_full(&broken, f);
            let x = nondiv_fem::sparse::SparseLu::factor(&b).unwrap().solve(&rhs);
            l2_distance(&broken.function(x).unwrap(), &uc)
        })
        .collect();
    assert!(dists[0] > dists[1] && dists[1] > dists[2], "{dists:?}");
}

#[test]
fn load_vector_matches_fine_quadrature() {
    let f = |[x, y]: [f64; 2]| x * x * y + 3.0 * x * y - 1.0;
    for r in 1..=3 {
        let s = square_space(3, r);
        let got = load_vector_full(&s, f);
        let rule = quad_triangle(20).unwrap();
        let mut want = vec![0.0; s.n_dofs()];
        for k in 0..s.mesh().n_cells() {
            let geo = s.geometry(k);
            for (xi, w) in rule.iter() {
                let fx = f(geo.to_physical(xi));
                for (&d, phi) in s.cell_dofs(k).iter().zip(s.basis().values(xi)) {
                    want[d] += w * geo.det * fx * phi;
                }
            }
        }
        let err = got.iter().zip(&want).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-13, "r={r}: {err}");
    }
}

/// `(-A:D_h^2 w, phi_i) + sum_e <[A grad w . nu], phi_i>_e` evaluated directly
/// from point values of `w` and the basis.
fn apply_by_quadrature(w: &FEFunction, a: &CoefficientField) -> Vec<f64> {
    let s = w.space();
    let r = s.degree();
    let mut out = vec![0.0; s.n_dofs()];
    let rule = quad_triangle(2 * r + 6).unwrap();
    for k in 0..s.mesh().n_cells() {
        let geo = s.geometry(k);
        for (xi, wq) in rule.iter() {
            let x = geo.to_physical(xi);
            let lw = -a.eval(x).contract(&w.eval_hessian(k, xi));
            for (&d, phi) in s.cell_dofs(k).iter().zip(s.basis().values(xi)) {
                out[d] += wq * geo.det * lw * phi;
            }
        }
    }
    let edge = quad_edge(2 * r + 6).unwrap();
    let mesh = s.mesh();
    for e in mesh.interior_edges() {
        let [p0, p1] = [mesh.vertices()[e.endpoints[0]], mesh.vertices()[e.endpoints[1]]];
        let (gp, gm) = (s.geometry(e.t_plus), s.geometry(e.t_minus));
        for (t, wq) in edge.iter() {
            let x = [p0[0] + t[0] * (p1[0] - p0[0]), p0[1] + t[0] * (p1[1] - p0[1])];
            let (xp, xm) = (gp.to_reference(x), gm.to_reference(x));
            let g = sub(w.eval_gradient(e.t_plus, xp), w.eval_gradient(e.t_minus, xm));
            let flux = a.eval(x).mul_vec(g);
            let jump = flux[0] * e.normal[0] + flux[1] * e.normal[1];
            for (&d, phi) in s.cell_dofs(e.t_plus).iter().zip(s.basis().values(xp)) {
                if phi.abs() > 1e-14 {
                    out[d] += wq * e.length * jump * phi;
                }
            }
        }
    }
    out
}

#[test]
fn assembled_operator_matches_pointwise_evaluation() {
    let a = CoefficientField::new("quadratic", 0.5, 3.0, Smoothness::Smooth, |[x, y]| {
        Mat2::symmetric(1.0 + x * x, 0.25 * x * y, 1.0 + y)
    });
    for r in 1..=3 {
        let s = square_space(3, r);
        let w = s
            .interpolate(|[x, y]| (x * y * (1.0 - x) * (1.0 - y)).sin() + x * x)
            .unwrap();
        let full = assemble_nondiv(&s, &a).unwrap().full;
        let got = full.mul_vec(w.coeffs());
        let want = apply_by_quadrature(&w, &a);
        let scale = want.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let err = got.iter().zip(&want).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()));
        assert!(err <= 1e-12 * scale, "r={r}: {err}");
    }
}

#[test]
fn consistency_error_decays_in_discrete_dual_norm() {
    let u = sin_bubble();
    let a = smooth_a();
    for r in 1..=3 {
        let errs: Vec<f64> = [4, 8, 16]
            .iter()
            .map(|&n| {
                let s = square_space(n, r);
                let op = assemble_nondiv(&s, &a).unwrap();
                let iu = s.interpolate(|x| u.value(x)).unwrap();
                let lhs = op.matrix.mul_vec(&iu.free_coeffs());
                let rhs = s.restrict_to_free(&load_vector_full(&s, |x| -a.eval(x).contract(&u.hessian(x))));
                let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(p, q)| p - q).collect();
                dual_norm_hm1(&diff, &assemble_stiffness(&s).matrix).unwrap()
            })
            .collect();
        let p = rate(errs[1], errs[2]);
        assert!(p >= r as f64 - 1.0 - 0.1, "r={r}: {errs:?}");
    }
}
