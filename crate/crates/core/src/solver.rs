//! Linear solves for the C0 and DG discretizations.

use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientField, ManufacturedProblem};
use crate::error::{Error, Result};
use crate::fe_space::{Continuity, FEFunction, FESpace};
use crate::operator::{assemble_dg, assemble_nondiv, load_vector, AssembledOperator, DgConfig};
use crate::sparse::{max_abs, CsrMatrix, SparseLu};

/// Factorizations whose smallest-to-largest pivot ratio falls below this are
/// treated as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    C0,
    Dg(DgConfig),
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub method: Method,
    /// Coefficients over all DOFs, zero on constrained ones.
    pub coeffs: Vec<f64>,
    /// `||F - B u||_inf / ||F||_inf` after the solve.
    pub residual_norm: f64,
}

impl SolveResult {
    pub fn solution<'s>(&self, space: &'s FESpace) -> Result<FEFunction<'s>> {
        space.function(self.coeffs.clone())
    }
}

/// Assembles the discrete operator of `method` on `space`.
pub fn discrete_operator(space: &FESpace, a: &CoefficientField, method: Method) -> Result<AssembledOperator> {
    match method {
        Method::C0 => assemble_nondiv(space, a),
        Method::Dg(cfg) => assemble_dg(space, a, cfg),
    }
}

/// Solves `L_h u_h = P_h f` on a continuous space.
pub fn solve(problem: &ManufacturedProblem, space: &FESpace) -> Result<SolveResult> {
    solve_with(problem, space, Method::C0)
}

/// Solves the interior-penalty DG system on a broken space.
pub fn solve_dg(problem: &ManufacturedProblem, space: &FESpace, cfg: DgConfig) -> Result<SolveResult> {
    solve_with(problem, space, Method::Dg(cfg))
}

pub fn solve_with(problem: &ManufacturedProblem, space: &FESpace, method: Method) -> Result<SolveResult> {
    let expected = match method {
        Method::C0 => Continuity::Continuous,
        Method::Dg(_) => Continuity::Discontinuous,
    };
    if space.continuity() != expected {
        return Err(Error::InvalidArgument(format!("{method:?} needs a {expected:?} space")));
    }
    let op = discrete_operator(space, &problem.coefficient, method)?;
    let rhs = load_vector(space, |x| problem.forcing(x));
    let h = space.mesh().h_max();
    let fail = |reason: String| Error::Solver {
        h,
        degree: space.degree(),
        reason,
    };
    let lu = SparseLu::factor_fast(&op.matrix).map_err(|e| fail(e.to_string()))?;
    let mut x = lu.solve(&rhs);
    // one step of iterative refinement
    let r = residual(&op.matrix, &x, &rhs);
    let dx = lu.solve(&r);
    x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(fail("non-finite solution".into()));
    }
    let residual_norm = relative_residual(&op.matrix, &x, &rhs);
    Ok(SolveResult {
        method,
        coeffs: space.function_from_free(&x).into_coeffs(),
        residual_norm,
    })
}

fn residual(b: &CsrMatrix, x: &[f64], rhs: &[f64]) -> Vec<f64> {
    let bx = b.mul_vec(x);
    rhs.iter().zip(&bx).map(|(f, v)| f - v).collect()
}

/// `||F - B x||_inf / ||F||_inf`, or the absolute residual when `F = 0`.
pub fn relative_residual(b: &CsrMatrix, x: &[f64], rhs: &[f64]) -> f64 {
    let r = max_abs(&residual(b, x, rhs));
    let scale = max_abs(rhs);
    if scale > 0.0 {
        r / scale
    } else {
        r
    }
}

/// Reassembles the system of `result.method` and measures how well the stored
/// solution satisfies it.
pub fn galerkin_residual(problem: &ManufacturedProblem, space: &FESpace, result: &SolveResult) -> Result<f64> {
    let op = discrete_operator(space, &problem.coefficient, result.method)?;
    let rhs = load_vector(space, |x| problem.forcing(x));
    Ok(relative_residual(
        &op.matrix,
        &space.restrict_to_free(&result.coeffs),
        &rhs,
    ))
}

/// Whether the non-divergence matrix on `space` factors with a pivot ratio
/// above [`PIVOT_TOLERANCE`].
pub fn invertibility_check(space: &FESpace, a: &CoefficientField) -> Result<bool> {
    Ok(matrix_invertible(&assemble_nondiv(space, a)?.matrix))
}

pub fn matrix_invertible(m: &CsrMatrix) -> bool {
    match SparseLu::factor(m) {
        Ok(lu) => lu.pivot_ratio().is_some_and(|r| r > PIVOT_TOLERANCE),
        Err(_) => false,
    }
}
