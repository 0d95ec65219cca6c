//! Discrete inf-sup constants of the non-divergence operator.
//!
//! For a square matrix `B` and SPD Gram matrices `R` (test side) and `D`
//! (trial side),
//!
//! ```text
//! sigma = min_w sqrt(F^T R^{-1} F) / sqrt(w^T D w),   F = B w,
//! ```
//!
//! so `sigma^2` is the smallest eigenvalue of `B^T R^{-1} B x = lambda D x`.
//! Small systems use a dense SVD of `L_R^{-1} B L_D^{-T}`. Larger ones run
//! Lanczos on `T = B^{-1} R B^{-T} D`, which is self-adjoint in the
//! `D`-inner product and has largest eigenvalue `1 / sigma^2`.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::fe_space::FESpace;
use crate::operator::{assemble_broken_h2_gram, assemble_mass, assemble_nondiv, assemble_stiffness};
use crate::solver::matrix_invertible;
use crate::sparse::{dot, CsrMatrix, SparseLu};

/// Largest free-DOF count handled by the dense path under [`ProbeMethod::Auto`].
pub const DENSE_LIMIT: usize = 2000;
/// Relative residual at which a Lanczos Ritz pair counts as converged.
pub const PROBE_TOLERANCE: f64 = 1e-8;
/// Relative step-to-step change of the top Ritz value at which Lanczos stops
/// when the residual test has not fired yet (clustered spectra).
pub const RITZ_STAGNATION: f64 = 1e-10;
const MAX_LANCZOS_STEPS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMethod {
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub method: ProbeMethod,
    /// Seed of the Lanczos start vector.
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            method: ProbeMethod::Auto,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub h: f64,
    /// `min ||L_h w||_{H^-1_h} / ||grad w||`.
    pub sigma_h1: f64,
    /// `min ||L_h w||_{L2_h} / ||w||_{H2_h}`, only for degree at least two.
    pub sigma_h2: Option<f64>,
    /// The H1 constant of the discrete adjoint.
    pub sigma_adjoint: f64,
    pub invertible: bool,
}

pub fn stability_probe(space: &FESpace, a: &CoefficientField) -> Result<StabilityReport> {
    stability_probe_with(space, a, ProbeOptions::default())
}

pub fn stability_probe_with(space: &FESpace, a: &CoefficientField, opts: ProbeOptions) -> Result<StabilityReport> {
    let b = assemble_nondiv(space, a)?.matrix;
    let h = space.mesh().h_max();
    if !matrix_invertible(&b) {
        return Ok(StabilityReport {
            h,
            sigma_h1: 0.0,
            sigma_h2: (space.degree() >= 2).then_some(0.0),
            sigma_adjoint: 0.0,
            invertible: false,
        });
    }
    let k = assemble_stiffness(space).matrix;
    let sigma_h1 = min_singular_value(&b, &k, &k, opts)?;
    let sigma_adjoint = min_singular_value(&b.transpose(), &k, &k, opts)?;
    let sigma_h2 = if space.degree() >= 2 {
        let m = assemble_mass(space).matrix;
        let g = assemble_broken_h2_gram(space)?.matrix;
        Some(min_singular_value(&b, &m, &g, opts)?)
    } else {
        None
    };
    Ok(StabilityReport {
        h,
        sigma_h1,
        sigma_h2,
        sigma_adjoint,
        invertible: true,
    })
}

/// Smallest singular value of `b` from the `domain`-norm to the dual of the
/// `range`-norm.
pub fn min_singular_value(b: &CsrMatrix, range: &CsrMatrix, domain: &CsrMatrix, opts: ProbeOptions) -> Result<f64> {
    let n = b.n_rows();
    if b.n_cols() != n || range.n_rows() != n || domain.n_rows() != n {
        return Err(Error::Probe("probe needs square matrices of one size".into()));
    }
    if n == 0 {
        return Err(Error::Probe("empty system".into()));
    }
    let dense = match opts.method {
        ProbeMethod::Auto => n <= DENSE_LIMIT,
        ProbeMethod::Dense => true,
        ProbeMethod::Lanczos => false,
    };
    if dense {
        dense_min_singular_value(b, range, domain)
    } else {
        lanczos_min_singular_value(b, range, domain, opts.seed)
    }
}

fn lower_cholesky(m: &CsrMatrix) -> Result<Mat<f64>> {
    let llt = m
        .to_dense()
        .llt(Side::Lower)
        .map_err(|e| Error::Probe(format!("Gram matrix not positive definite: {e:?}")))?;
    Ok(llt.L().to_owned())
}

fn dense_min_singular_value(b: &CsrMatrix, range: &CsrMatrix, domain: &CsrMatrix) -> Result<f64> {
    use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
    let lr = lower_cholesky(range)?;
    let ld = lower_cholesky(domain)?;
    // Y = L_R^{-1} B L_D^{-T}: solve L_R X = B, then L_D Y^T = X^T
    let mut x = b.to_dense();
    solve_lower_triangular_in_place(lr.as_ref(), x.as_mut(), faer::Par::rayon(0));
    let mut yt = x.transpose().to_owned();
    solve_lower_triangular_in_place(ld.as_ref(), yt.as_mut(), faer::Par::rayon(0));
    let sv = yt
        .singular_values()
        .map_err(|e| Error::Probe(format!("SVD failed: {e:?}")))?;
    Ok(sv.iter().copied().fold(f64::INFINITY, f64::min))
}

fn lanczos_min_singular_value(b: &CsrMatrix, range: &CsrMatrix, domain: &CsrMatrix, seed: u64) -> Result<f64> {
    let n = b.n_rows();
    let lu = SparseLu::factor_fast(b)?;
    let apply = |v: &[f64]| -> Vec<f64> {
        let dv = domain.mul_vec(v);
        let y = lu.solve_transpose(&dv);
        lu.solve(&range.mul_vec(&y))
    };
    let theta = lanczos_largest(n, seed, apply, |v| domain.mul_vec(v))?;
    if !(theta > 0.0) {
        return Err(Error::Probe(format!("non-positive Ritz value {theta}")));
    }
    Ok(1.0 / theta.sqrt())
}

/// Largest eigenvalue of an operator that is self-adjoint and positive in the
/// inner product `<x, y> = x^T G y`, by Lanczos with full reorthogonalization.
pub fn lanczos_largest(
    n: usize,
    seed: u64,
    apply: impl Fn(&[f64]) -> Vec<f64>,
    gram: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut gv = gram(&v);
    let nrm = dot(&v, &gv).sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
    gv.iter_mut().for_each(|x| *x /= nrm);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut gbasis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let steps = MAX_LANCZOS_STEPS.min(n);
    let mut theta = 0.0;
    for step in 0..steps {
        let mut w = apply(&v);
        let alpha = dot(&w, &gv);
        basis.push(v);
        gbasis.push(gv);
        alphas.push(alpha);
        for _ in 0..2 {
            for (q, gq) in basis.iter().zip(&gbasis) {
                let c = dot(&w, gq);
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let gw = gram(&w);
        let beta = dot(&w, &gw).max(0.0).sqrt();
        let (top, last) = tridiagonal_top(&alphas, &betas)?;
        let previous = theta;
        theta = top;
        let estimate = (beta * last).abs();
        let stagnated = step > 0 && (theta - previous).abs() <= RITZ_STAGNATION * theta.abs();
        if estimate <= PROBE_TOLERANCE * theta.abs() || stagnated || beta <= f64::EPSILON * theta.abs() || step + 1 == n
        {
            return Ok(theta);
        }
        betas.push(beta);
        v = w.iter().map(|x| x / beta).collect();
        gv = gw.iter().map(|x| x / beta).collect();
    }
    Err(Error::Probe(format!(
        "Lanczos did not converge in {steps} steps (last Ritz value {theta:.6e})"
    )))
}

/// Largest eigenvalue of the symmetric tridiagonal matrix and the last
/// component of its unit eigenvector.
fn tridiagonal_top(alphas: &[f64], betas: &[f64]) -> Result<(f64, f64)> {
    let k = alphas.len();
    let t = Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j {
            betas[i]
        } else if j + 1 == i {
            betas[j]
        } else {
            0.0
        }
    });
    let eig = t
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Probe(format!("tridiagonal eigensolver failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let mut best = 0;
    for i in 1..k {
        if s[i] > s[best] {
            best = i;
        }
    }
    Ok((s[best], eig.U()[(k - 1, best)]))
}

/// Eigenvalues of `A x = lambda B x` for symmetric `A` and SPD `B`, ascending.
pub fn generalized_eigenvalues(a: &CsrMatrix, b: &CsrMatrix) -> Result<Vec<f64>> {
    use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
    let l = lower_cholesky(b)?;
    let mut x = a.to_dense();
    solve_lower_triangular_in_place(l.as_ref(), x.as_mut(), faer::Par::Seq);
    let mut c = x.transpose().to_owned();
    solve_lower_triangular_in_place(l.as_ref(), c.as_mut(), faer::Par::Seq);
    let sym = Mat::<f64>::from_fn(c.nrows(), c.ncols(), |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let mut ev = sym
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Probe(format!("eigensolver failed: {e:?}")))?;
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}
