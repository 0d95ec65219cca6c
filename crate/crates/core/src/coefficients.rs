//! Coefficient fields `A(x)`, manufactured solutions and their forcings
//! `f = -A : D^2 u` on the unit square.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Mat2, Point};

/// Eigenvalue slack when checking sampled values against declared bounds.
pub const ELLIPTICITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothness {
    Constant,
    Smooth,
    Hoelder,
}

type MatrixFn = dyn Fn(Point) -> Mat2 + Send + Sync;

#[derive(Clone)]
pub struct CoefficientField {
    name: String,
    eval: Arc<MatrixFn>,
    lambda_min: f64,
    lambda_max: f64,
    smoothness: Smoothness,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("name", &self.name)
            .field("lambda_min", &self.lambda_min)
            .field("lambda_max", &self.lambda_max)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

impl CoefficientField {
    /// Wraps an arbitrary evaluator with declared ellipticity bounds. The bounds
    /// are not checked here; see [`verify_ellipticity`].
    pub fn new(
        name: impl Into<String>,
        lambda_min: f64,
        lambda_max: f64,
        smoothness: Smoothness,
        eval: impl Fn(Point) -> Mat2 + Send + Sync + 'static,
    ) -> Self {
        CoefficientField {
            name: name.into(),
            eval: Arc::new(eval),
            lambda_min,
            lambda_max,
            smoothness,
        }
    }

    #[inline]
    pub fn eval(&self, x: Point) -> Mat2 {
        (self.eval)(x)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    /// `c A` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return invalid(format!("scale factor must be positive, got {c}"));
        }
        let inner = self.eval.clone();
        Ok(CoefficientField {
            name: format!("{}*{c}", self.name),
            eval: Arc::new(move |x| inner(x).scale(c)),
            lambda_min: c * self.lambda_min,
            lambda_max: c * self.lambda_max,
            smoothness: self.smoothness,
        })
    }
}

pub fn identity_a() -> CoefficientField {
    CoefficientField::new("identity", 1.0, 1.0, Smoothness::Constant, |_| Mat2::IDENTITY)
}

/// Constant symmetric positive definite matrix.
pub fn constant_a(m: Mat2) -> Result<CoefficientField> {
    if m.asymmetry() > 1e-14 * m.max_abs().max(1.0) {
        return invalid(format!("constant coefficient {m:?} is not symmetric"));
    }
    let (lo, hi) = m.sym_eigenvalues();
    if !(lo > 0.0) || !hi.is_finite() {
        return invalid(format!(
            "constant coefficient {m:?} is not positive definite (eigenvalues {lo}, {hi})"
        ));
    }
    Ok(CoefficientField::new(
        "constant",
        lo,
        hi,
        Smoothness::Constant,
        move |_| m,
    ))
}

/// `[[1 + sin(pi x) sin(pi y) / 2, xy / 10], [xy / 10, 1 + cos(pi x) cos(pi y) / 2]]`.
///
/// Gershgorin on the unit square gives eigenvalues in `[0.4, 1.6]`.
pub fn smooth_a() -> CoefficientField {
    CoefficientField::new("smooth", 0.4, 1.6, Smoothness::Smooth, |[x, y]| {
        let off = 0.1 * x * y;
        Mat2::symmetric(
            1.0 + 0.5 * (PI * x).sin() * (PI * y).sin(),
            off,
            1.0 + 0.5 * (PI * x).cos() * (PI * y).cos(),
        )
    })
}

/// `I + rho^alpha / 2 * diag(1, -1)`, `rho = |x - (1/2, 1/2)|`: Hoelder
/// continuous with exponent `alpha`, not differentiable at the centre.
pub fn hoelder_a(alpha: f64) -> Result<CoefficientField> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("Hoelder exponent must lie in (0, 1), got {alpha}"));
    }
    Ok(CoefficientField::new(
        format!("hoelder({alpha})"),
        0.5,
        1.5,
        Smoothness::Hoelder,
        move |[x, y]| {
            let rho = (x - 0.5).hypot(y - 0.5);
            let p = 0.5 * rho.powf(alpha);
            Mat2::symmetric(1.0 + p, 0.0, 1.0 - p)
        },
    ))
}

/// Extremal eigenvalues of `A` over a `resolution x resolution` grid of the
/// unit square; fails if any sample is asymmetric or leaves the declared bounds.
pub fn verify_ellipticity(a: &CoefficientField, resolution: usize) -> Result<(f64, f64)> {
    if resolution < 2 {
        return invalid("ellipticity grid needs at least 2 points per side");
    }
    let step = 1.0 / (resolution - 1) as f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for j in 0..resolution {
        for i in 0..resolution {
            let (x, y) = (i as f64 * step, j as f64 * step);
            let m = a.eval([x, y]);
            if m.asymmetry() > 1e-14 * m.max_abs().max(1.0) {
                return Err(Error::Evaluation(format!(
                    "{} is not symmetric at ({x}, {y})",
                    a.name()
                )));
            }
            let (e0, e1) = m.sym_eigenvalues();
            for e in [e0, e1] {
                if !(e >= a.lambda_min - ELLIPTICITY_TOL && e <= a.lambda_max + ELLIPTICITY_TOL) {
                    return Err(Error::Ellipticity {
                        x,
                        y,
                        eigenvalue: e,
                        lower: a.lambda_min,
                        upper: a.lambda_max,
                    });
                }
            }
            lo = lo.min(e0);
            hi = hi.max(e1);
        }
    }
    Ok((lo, hi))
}

type ValueFn = dyn Fn(Point) -> f64 + Send + Sync;
type GradFn = dyn Fn(Point) -> [f64; 2] + Send + Sync;

/// Scalar field with analytic gradient and Hessian.
#[derive(Clone)]
pub struct ScalarField {
    name: String,
    value: Arc<ValueFn>,
    gradient: Arc<GradFn>,
    hessian: Arc<MatrixFn>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField").field("name", &self.name).finish()
    }
}

impl ScalarField {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(Point) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static,
        hessian: impl Fn(Point) -> Mat2 + Send + Sync + 'static,
    ) -> Self {
        ScalarField {
            name: name.into(),
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
        }
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0, |_| [0.0, 0.0], |_| Mat2::ZERO)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn value(&self, x: Point) -> f64 {
        (self.value)(x)
    }

    #[inline]
    pub fn gradient(&self, x: Point) -> [f64; 2] {
        (self.gradient)(x)
    }

    #[inline]
    pub fn hessian(&self, x: Point) -> Mat2 {
        (self.hessian)(x)
    }
}

/// `sin(pi x) sin(pi y)`.
pub fn sin_bubble() -> ScalarField {
    ScalarField::new(
        "sin",
        |[x, y]| (PI * x).sin() * (PI * y).sin(),
        |[x, y]| {
            [
                PI * (PI * x).cos() * (PI * y).sin(),
                PI * (PI * x).sin() * (PI * y).cos(),
            ]
        },
        |[x, y]| {
            let (sx, cx, sy, cy) = ((PI * x).sin(), (PI * x).cos(), (PI * y).sin(), (PI * y).cos());
            let p2 = PI * PI;
            Mat2::symmetric(-p2 * sx * sy, p2 * cx * cy, -p2 * sx * sy)
        },
    )
}

/// `x (1 - x) y (1 - y)`.
pub fn poly_bubble() -> ScalarField {
    ScalarField::new(
        "poly",
        |[x, y]| x * (1.0 - x) * y * (1.0 - y),
        |[x, y]| [(1.0 - 2.0 * x) * y * (1.0 - y), x * (1.0 - x) * (1.0 - 2.0 * y)],
        |[x, y]| {
            Mat2::symmetric(
                -2.0 * y * (1.0 - y),
                (1.0 - 2.0 * x) * (1.0 - 2.0 * y),
                -2.0 * x * (1.0 - x),
            )
        },
    )
}

/// `(x (1 - x) y (1 - y))^(1 + beta)`; the Hessian is unbounded at the
/// boundary when `beta < 1`.
pub fn power_bubble(beta: f64) -> Result<ScalarField> {
    if !(beta > 0.0 && beta.is_finite()) {
        return invalid(format!("bubble exponent beta must be positive, got {beta}"));
    }
    let m = 1.0 + beta;
    let base = poly_bubble();
    let (b1, b2, b3) = (base.clone(), base.clone(), base);
    Ok(ScalarField::new(
        format!("power({beta})"),
        move |x| b1.value(x).powf(m),
        move |x| {
            let g = b2.value(x);
            let dg = b2.gradient(x);
            let c = m * g.powf(m - 1.0);
            [c * dg[0], c * dg[1]]
        },
        move |x| {
            let g = b3.value(x);
            let dg = b3.gradient(x);
            let outer = Mat2::symmetric(dg[0] * dg[0], dg[0] * dg[1], dg[1] * dg[1]);
            outer.scale(m * (m - 1.0) * g.powf(m - 2.0)) + b3.hessian(x).scale(m * g.powf(m - 1.0))
        },
    ))
}

/// A coefficient, an exact solution vanishing on the boundary of the unit
/// square, and the forcing they induce.
#[derive(Clone, Debug)]
pub struct ManufacturedProblem {
    pub name: String,
    pub coefficient: CoefficientField,
    pub exact: ScalarField,
    /// Sobolev index of the exact solution (`f64::INFINITY` for smooth ones).
    pub regularity_s: f64,
}

impl ManufacturedProblem {
    /// `f(x) = -sum_ij a_ij(x) u_{x_i x_j}(x)`.
    pub fn forcing(&self, x: Point) -> f64 {
        -self.coefficient.eval(x).contract(&self.exact.hessian(x))
    }
}

/// Pairs `a` with `u`; rejects solutions that do not vanish on the boundary.
pub fn make_problem(
    name: impl Into<String>,
    a: CoefficientField,
    u: ScalarField,
    regularity_s: f64,
) -> Result<ManufacturedProblem> {
    const SAMPLES: usize = 64;
    for k in 0..=SAMPLES {
        let t = k as f64 / SAMPLES as f64;
        for p in [[t, 0.0], [t, 1.0], [0.0, t], [1.0, t]] {
            let v = u.value(p);
            if !(v.abs() <= 1e-12) {
                return invalid(format!(
                    "exact solution {} does not vanish on the boundary: u({}, {}) = {v}",
                    u.name(),
                    p[0],
                    p[1]
                ));
            }
        }
    }
    Ok(ManufacturedProblem {
        name: name.into(),
        coefficient: a,
        exact: u,
        regularity_s,
    })
}

/// Parameters used when resolving catalog names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatalogParams {
    /// Hoelder exponent of the `hoelder` coefficient.
    pub alpha: f64,
    /// Exponent offset of the `power` solution.
    pub beta: f64,
    /// Entries `(a11, a12, a22)` of the `constant` coefficient.
    pub constant: (f64, f64, f64),
}

impl Default for CatalogParams {
    fn default() -> Self {
        CatalogParams {
            alpha: 0.5,
            beta: 0.75,
            constant: (2.0, 1.0, 2.0),
        }
    }
}

pub const COEFFICIENT_NAMES: [&str; 4] = ["identity", "constant", "smooth", "hoelder"];
pub const SOLUTION_NAMES: [&str; 3] = ["sin", "poly", "power"];

pub fn coefficient_by_name(name: &str, params: &CatalogParams) -> Result<CoefficientField> {
    match name {
        "identity" => Ok(identity_a()),
        "constant" => {
            let (a11, a12, a22) = params.constant;
            constant_a(Mat2::symmetric(a11, a12, a22))
        }
        "smooth" => Ok(smooth_a()),
        "hoelder" => hoelder_a(params.alpha),
        other => invalid(format!(
            "unknown coefficient '{other}' (expected one of {COEFFICIENT_NAMES:?})"
        )),
    }
}

/// Resolves `<coefficient>-<solution>`, e.g. `identity-sin` or `hoelder-power`.
pub fn problem_by_name(name: &str, params: &CatalogParams) -> Result<ManufacturedProblem> {
    let Some((coef, sol)) = name.split_once('-') else {
        return invalid(format!(
            "problem name '{name}' is not of the form <coefficient>-<solution>"
        ));
    };
    let a = coefficient_by_name(coef, params)?;
    let (u, s) = match sol {
        "sin" => (sin_bubble(), f64::INFINITY),
        "poly" => (poly_bubble(), f64::INFINITY),
        "power" => (power_bubble(params.beta)?, 1.5 + params.beta),
        other => {
            return invalid(format!(
                "unknown solution '{other}' (expected one of {SOLUTION_NAMES:?})"
            ))
        }
    };
    make_problem(name, a, u, s)
}
