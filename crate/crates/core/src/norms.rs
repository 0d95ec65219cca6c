//! Error norms and discrete dual norms.
//!
//! A discrete dual norm `sup_{v in V_h} F(v) / ||v||` with `||v||^2 = v^T G v`
//! equals `sqrt(F^T G^{-1} F)`; the supremum is attained at the Riesz
//! representer `z = G^{-1} F`.

use serde::{Deserialize, Serialize};

use crate::coefficients::ScalarField;
use crate::error::Result;
use crate::fe_space::{quad_edge, quad_triangle, FEFunction, Tabulation};
use crate::geometry::{dot, sub};
use crate::operator::AssembledOperator;
use crate::sparse::{CsrMatrix, SparseCholesky};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTriple {
    pub l2: f64,
    pub h1: f64,
    pub h2_broken: f64,
}

/// `||u - u_h||` in L2, the (broken) H1 seminorm and the squared-sum broken
/// H2 norm `(sum_T ||D^2 (u - u_h)||_T^2 + sum_e h_e^{-1} ||[grad u_h] . nu_e||_e^2)^{1/2}`.
///
/// Cell integrals use a rule two degrees above the space's default.
pub fn error_norms(exact: &ScalarField, uh: &FEFunction) -> ErrorTriple {
    let space = uh.space();
    let r = space.degree();
    let rule = quad_triangle(2 * r + 4).expect("supported order");
    let tab = Tabulation::new(space.basis(), &rule.points);
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    let mut h2 = 0.0;
    for k in 0..space.mesh().n_cells() {
        let geo = space.geometry(k);
        let local = uh.local(k);
        for (q, (xi, w)) in rule.iter().enumerate() {
            let jw = w * geo.det;
            let x = geo.to_physical(xi);
            let mut val = 0.0;
            let mut grad = [0.0; 2];
            let mut hess = crate::geometry::Mat2::ZERO;
            for (l, c) in local.iter().enumerate() {
                val += c * tab.values[q][l];
                let g = tab.gradients[q][l];
                grad = [grad[0] + c * g[0], grad[1] + c * g[1]];
                hess = hess + tab.hessians[q][l].scale(*c);
            }
            let grad = geo.push_gradient(grad);
            let hess = geo.push_hessian(&hess);
            let ev = exact.value(x) - val;
            let eg = sub(exact.gradient(x), grad);
            let eh = exact.hessian(x) - hess;
            l2 += jw * ev * ev;
            h1 += jw * dot(eg, eg);
            h2 += jw * eh.contract(&eh);
        }
    }
    h2 += gradient_jump_energy(uh);
    ErrorTriple {
        l2: l2.sqrt(),
        h1: h1.sqrt(),
        h2_broken: h2.sqrt(),
    }
}

/// `sum_e h_e^{-1} ||[grad w] . nu_e||^2_e` over interior edges.
pub fn gradient_jump_energy(w: &FEFunction) -> f64 {
    let space = w.space();
    let mesh = space.mesh();
    let rule = quad_edge(2 * space.degree() + 1).expect("supported order");
    let mut total = 0.0;
    for e in mesh.interior_edges() {
        let a = mesh.vertices()[e.endpoints[0]];
        let b = mesh.vertices()[e.endpoints[1]];
        let t = sub(b, a);
        for (p, wq) in rule.iter() {
            let x = [a[0] + p[0] * t[0], a[1] + p[0] * t[1]];
            let gp = w.eval_gradient(e.t_plus, space.geometry(e.t_plus).to_reference(x));
            let gm = w.eval_gradient(e.t_minus, space.geometry(e.t_minus).to_reference(x));
            let jump = dot(sub(gp, gm), e.normal);
            // h_e^{-1} times the edge measure h_e
            total += wq * jump * jump;
        }
    }
    total
}

/// Dual norm induced by a symmetric positive definite Gram matrix.
#[derive(Debug)]
pub struct DualNorm {
    gram: CsrMatrix,
    factor: SparseCholesky,
}

impl DualNorm {
    pub fn new(gram: &CsrMatrix) -> Result<Self> {
        Ok(DualNorm {
            factor: SparseCholesky::factor(gram)?,
            gram: gram.clone(),
        })
    }

    pub fn gram(&self) -> &CsrMatrix {
        &self.gram
    }

    /// `z = G^{-1} F`.
    pub fn representer(&self, functional: &[f64]) -> Vec<f64> {
        self.factor.solve(functional)
    }

    /// `sqrt(F^T G^{-1} F)`.
    pub fn value(&self, functional: &[f64]) -> f64 {
        let z = self.representer(functional);
        dot_slices(functional, &z).max(0.0).sqrt()
    }

    /// Primal norm `sqrt(v^T G v)`.
    pub fn primal(&self, v: &[f64]) -> f64 {
        dot_slices(v, &self.gram.mul_vec(v)).max(0.0).sqrt()
    }
}

fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    crate::sparse::dot(a, b)
}

/// `sup_v F(v) / ||grad v||` via the stiffness matrix `K` on the free DOFs.
pub fn dual_norm_hm1(functional: &[f64], stiffness: &CsrMatrix) -> Result<f64> {
    Ok(DualNorm::new(stiffness)?.value(functional))
}

/// `sup_v F(v) / ||v||_{L2}` via the mass matrix `M` on the free DOFs.
pub fn dual_norm_l2h(functional: &[f64], mass: &CsrMatrix) -> Result<f64> {
    Ok(DualNorm::new(mass)?.value(functional))
}

/// Dual norm of `B w`.
pub fn operator_dual_norm(op: &AssembledOperator, w: &[f64], norm: &DualNorm) -> f64 {
    norm.value(&op.matrix.mul_vec(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::sin_bubble;
    use crate::fe_space::FESpace;
    use crate::mesh::unit_square_mesh;
    use crate::operator::{assemble_mass, assemble_stiffness};
    use std::sync::Arc;

    fn space(n: usize, r: usize) -> FESpace {
        FESpace::new(Arc::new(unit_square_mesh(n).unwrap()), r).unwrap()
    }

    #[test]
    fn reproduced_polynomial_has_zero_error() {
        let s = space(4, 3);
        let u = ScalarField::new(
            "cubic",
            |[x, y]| x * x * y - 3.0 * x * y * y + x,
            |[x, y]| [2.0 * x * y - 3.0 * y * y + 1.0, x * x - 6.0 * x * y],
            |[x, y]| crate::geometry::Mat2::symmetric(2.0 * y, 2.0 * x - 6.0 * y, -6.0 * x),
        );
        let uh = s.interpolate_nodal(|x| u.value(x)).unwrap();
        let e = error_norms(&u, &uh);
        assert!(e.l2 < 1e-12 && e.h1 < 1e-11 && e.h2_broken < 1e-10, "{e:?}");
    }

    #[test]
    fn sin_against_zero() {
        let s = space(4, 1);
        let e = error_norms(&sin_bubble(), &s.zero_function());
        assert!((e.l2 - 0.5).abs() < 1e-10);
        // ||grad u||^2 = pi^2 / 2, ||D^2 u||^2 = pi^4
        let pi = std::f64::consts::PI;
        assert!((e.h1 - pi / 2.0_f64.sqrt()).abs() < 1e-9);
        assert!((e.h2_broken - pi * pi).abs() < 1e-8);
    }

    #[test]
    fn homogeneity() {
        let s = space(3, 3);
        let zero = ScalarField::zero();
        let w = s.interpolate(|[x, y]| (3.0 * x).sin() * y * (1.0 - x)).unwrap();
        let mut w2 = w.clone();
        w2.coeffs_mut().iter_mut().for_each(|c| *c *= 2.0);
        let (a, b) = (error_norms(&zero, &w), error_norms(&zero, &w2));
        assert!((b.l2 - 2.0 * a.l2).abs() < 1e-13);
        assert!((b.h1 - 2.0 * a.h1).abs() < 1e-12);
        assert!((b.h2_broken - 2.0 * a.h2_broken).abs() < 1e-11);
    }

    #[test]
    fn dual_norm_of_zero_and_scaling() {
        let s = space(2, 2);
        let k = assemble_stiffness(&s).matrix;
        assert_eq!(dual_norm_hm1(&vec![0.0; s.n_free()], &k).unwrap(), 0.0);
        let f: Vec<f64> = (0..s.n_free()).map(|i| (i as f64).cos()).collect();
        let base = dual_norm_hm1(&f, &k).unwrap();
        let scaled: Vec<f64> = f.iter().map(|v| -3.5 * v).collect();
        assert!((dual_norm_hm1(&scaled, &k).unwrap() - 3.5 * base).abs() < 1e-13 * base.max(1.0) * 10.0);
    }

    #[test]
    fn riesz_of_mass_times_w() {
        let s = space(3, 2);
        let m = assemble_mass(&s).matrix;
        let w: Vec<f64> = (0..s.n_free()).map(|i| (0.3 * i as f64).sin()).collect();
        let dn = DualNorm::new(&m).unwrap();
        assert!((dn.value(&m.mul_vec(&w)) - dn.primal(&w)).abs() < 1e-13);
    }
}
