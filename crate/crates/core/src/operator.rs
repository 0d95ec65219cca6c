//! Sparse assembly of the discrete operators.
//!
//! Every matrix is assembled over all DOFs of its space and then restricted to
//! the free DOFs; entry `(i, j)` is the form evaluated at trial function `j`
//! and test function `i`. Cells are processed in parallel; per-cell triplets
//! are concatenated in cell order before summation, so the result does not
//! depend on the number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::{invalid, Result};
use crate::fe_space::{Continuity, FESpace, QuadratureRule, Tabulation};
use crate::geometry::{dot, sub, Mat2, Point};
use crate::mesh::InteriorEdge;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    /// `(L_h w, v) = (-A:D_h^2 w, v) + sum_e <[A grad w . nu_e], v>_e`.
    NonDiv,
    AdjointNonDiv,
    /// `(A grad w, grad v)`.
    DivForm,
    Mass,
    Stiffness,
    /// Gram matrix of the squared broken H2 norm.
    BrokenH2,
    Dg,
}

/// Interior-penalty DG parameters. `epsilon` selects the symmetric (1),
/// incomplete (0) or non-symmetric (-1) variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgConfig {
    pub epsilon: i32,
    pub gamma0: f64,
}

impl DgConfig {
    pub fn new(epsilon: i32, gamma0: f64) -> Result<Self> {
        let cfg = DgConfig { epsilon, gamma0 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.epsilon, -1..=1) {
            return invalid(format!("DG epsilon must be 1, 0 or -1, got {}", self.epsilon));
        }
        if !(self.gamma0 > 0.0 && self.gamma0.is_finite()) {
            return invalid(format!("DG gamma0 must be positive, got {}", self.gamma0));
        }
        Ok(())
    }

    /// Edge penalty `gamma_e = gamma0 r^2`.
    pub fn penalty(&self, degree: usize) -> f64 {
        self.gamma0 * (degree * degree) as f64
    }
}

impl Default for DgConfig {
    fn default() -> Self {
        DgConfig {
            epsilon: 1,
            gamma0: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub kind: OperatorKind,
    /// Restriction to the free DOFs.
    pub matrix: CsrMatrix,
    /// Matrix over all DOFs.
    pub full: CsrMatrix,
    pub degree: usize,
    pub coefficient: Option<String>,
    pub dg: Option<DgConfig>,
}

impl AssembledOperator {
    fn new(
        space: &FESpace,
        kind: OperatorKind,
        full: CsrMatrix,
        coefficient: Option<&CoefficientField>,
        dg: Option<DgConfig>,
    ) -> Self {
        AssembledOperator {
            kind,
            matrix: full.restrict(space.free_index(), space.n_free()),
            full,
            degree: space.degree(),
            coefficient: coefficient.map(|a| a.name().to_string()),
            dg,
        }
    }
}

/// Physical basis data of one cell at the quadrature points.
struct CellValues<'t> {
    x: Vec<Point>,
    jw: Vec<f64>,
    values: &'t [Vec<f64>],
    grads: Vec<Vec<[f64; 2]>>,
    hessians: Vec<Vec<Mat2>>,
}

fn cell_values<'t>(space: &FESpace, tab: &'t Tabulation, rule: &QuadratureRule, cell: usize) -> CellValues<'t> {
    let geo = space.geometry(cell);
    CellValues {
        x: rule.points.iter().map(|&p| geo.to_physical(p)).collect(),
        jw: rule.weights.iter().map(|w| w * geo.det).collect(),
        values: &tab.values,
        grads: tab
            .gradients
            .iter()
            .map(|gs| gs.iter().map(|&g| geo.push_gradient(g)).collect())
            .collect(),
        hessians: tab
            .hessians
            .iter()
            .map(|hs| hs.iter().map(|h| geo.push_hessian(h)).collect())
            .collect(),
    }
}

/// Cell contributions; `local(cell, values, out)` fills a row-major
/// `n x n` block indexed `[test * n + trial]`.
fn cell_triplets<F>(space: &FESpace, local: F) -> Vec<(usize, usize, f64)>
where
    F: Fn(usize, &CellValues, &mut [f64]) + Sync,
{
    let rule = space.cell_rule();
    let tab = Tabulation::new(space.basis(), &rule.points);
    let n = space.dofs_per_cell();
    (0..space.mesh().n_cells())
        .into_par_iter()
        .flat_map_iter(|k| {
            let cv = cell_values(space, &tab, &rule, k);
            let mut block = vec![0.0; n * n];
            local(k, &cv, &mut block);
            let dofs = space.cell_dofs(k);
            let mut out = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    out.push((dofs[i], dofs[j], block[i * n + j]));
                }
            }
            out
        })
        .collect()
}

/// Value and physical gradient of every local basis function of `cell` at `x`.
struct Trace {
    values: Vec<f64>,
    grads: Vec<[f64; 2]>,
}

fn trace(space: &FESpace, cell: usize, x: Point) -> Trace {
    let geo = space.geometry(cell);
    let xi = geo.to_reference(x);
    Trace {
        values: space.basis().values(xi),
        grads: space
            .basis()
            .gradients(xi)
            .into_iter()
            .map(|g| geo.push_gradient(g))
            .collect(),
    }
}

/// Physical quadrature points and weights along the segment `a -> b`.
fn edge_points(rule: &QuadratureRule, a: Point, b: Point) -> Vec<(Point, f64)> {
    let t = sub(b, a);
    let len = t[0].hypot(t[1]);
    rule.iter()
        .map(|(p, w)| ([a[0] + p[0] * t[0], a[1] + p[0] * t[1]], w * len))
        .collect()
}

/// One DOF touching a C0 interior edge: its trace and its gradient on each side.
#[derive(Clone, Copy)]
struct EdgeDof {
    dof: usize,
    value: f64,
    grad_plus: [f64; 2],
    grad_minus: [f64; 2],
}

fn c0_edge_dofs(space: &FESpace, plus: usize, minus: usize, x: Point) -> Vec<EdgeDof> {
    let tp = trace(space, plus, x);
    let tm = trace(space, minus, x);
    let mut out: Vec<EdgeDof> = space
        .cell_dofs(plus)
        .iter()
        .enumerate()
        .map(|(l, &dof)| EdgeDof {
            dof,
            value: tp.values[l],
            grad_plus: tp.grads[l],
            grad_minus: [0.0, 0.0],
        })
        .collect();
    for (l, &dof) in space.cell_dofs(minus).iter().enumerate() {
        match out.iter_mut().find(|e| e.dof == dof) {
            Some(shared) => shared.grad_minus = tm.grads[l],
            None => out.push(EdgeDof {
                dof,
                value: tm.values[l],
                grad_plus: [0.0, 0.0],
                grad_minus: tm.grads[l],
            }),
        }
    }
    out
}

/// Interior-edge contributions of a C0 space. At every edge quadrature point
/// `point(x, weight, edge, dofs, block)` adds to the dense block indexed
/// `[test * dofs.len() + trial]`; the DOF order is the same at every point.
fn c0_edge_triplets<F>(space: &FESpace, point: F) -> Vec<(usize, usize, f64)>
where
    F: Fn(Point, f64, &InteriorEdge, &[EdgeDof], &mut [f64]) + Sync,
{
    let rule = space.edge_rule();
    let mesh = space.mesh();
    mesh.interior_edges()
        .par_iter()
        .flat_map_iter(|e| {
            let a = mesh.vertices()[e.endpoints[0]];
            let b = mesh.vertices()[e.endpoints[1]];
            let mut block = Vec::new();
            let mut order = Vec::new();
            for (x, w) in edge_points(&rule, a, b) {
                let dofs = c0_edge_dofs(space, e.t_plus, e.t_minus, x);
                if block.is_empty() {
                    block = vec![0.0; dofs.len() * dofs.len()];
                    order = dofs.iter().map(|d| d.dof).collect();
                }
                point(x, w, e, &dofs, &mut block);
            }
            let m = order.len();
            let mut out = Vec::with_capacity(m * m);
            for (i, &di) in order.iter().enumerate() {
                for (j, &dj) in order.iter().enumerate() {
                    out.push((di, dj, block[i * m + j]));
                }
            }
            out
        })
        .collect()
}

fn require_continuous(space: &FESpace, what: &str) -> Result<()> {
    if space.continuity() != Continuity::Continuous {
        return invalid(format!("{what} needs a continuous Lagrange space"));
    }
    Ok(())
}

/// Matrix of the non-divergence operator: broken volume term plus the flux
/// jump `[A grad w . nu_e]` tested against `v` on interior edges. `A` is
/// sampled once per edge quadrature point and shared by both traces.
pub fn assemble_nondiv(space: &FESpace, a: &CoefficientField) -> Result<AssembledOperator> {
    require_continuous(space, "the non-divergence operator")?;
    let n = space.dofs_per_cell();
    let mut t = cell_triplets(space, |_, cv, block| {
        for q in 0..cv.x.len() {
            let aq = a.eval(cv.x[q]);
            for j in 0..n {
                let lap = -aq.contract(&cv.hessians[q][j]) * cv.jw[q];
                if lap == 0.0 {
                    continue;
                }
                for i in 0..n {
                    block[i * n + j] += lap * cv.values[q][i];
                }
            }
        }
    });
    t.extend(c0_edge_triplets(space, |x, w, e, dofs, block| {
        let aq = a.eval(x);
        let m = dofs.len();
        for (j, trial) in dofs.iter().enumerate() {
            let jump = w * dot(aq.mul_vec(sub(trial.grad_plus, trial.grad_minus)), e.normal);
            for (i, test) in dofs.iter().enumerate() {
                block[i * m + j] += jump * test.value;
            }
        }
    }));
    let full = CsrMatrix::from_triplets(space.n_dofs(), space.n_dofs(), t);
    Ok(AssembledOperator::new(space, OperatorKind::NonDiv, full, Some(a), None))
}

/// `K_A[i][j] = (A grad phi_j, grad phi_i)`.
pub fn assemble_divform(space: &FESpace, a: &CoefficientField) -> Result<AssembledOperator> {
    let n = space.dofs_per_cell();
    let t = cell_triplets(space, |_, cv, block| {
        for q in 0..cv.x.len() {
            let aq = a.eval(cv.x[q]);
            for j in 0..n {
                let flux = aq.mul_vec(cv.grads[q][j]);
                for i in 0..n {
                    block[i * n + j] += cv.jw[q] * dot(flux, cv.grads[q][i]);
                }
            }
        }
    });
    let full = CsrMatrix::from_triplets(space.n_dofs(), space.n_dofs(), t);
    Ok(AssembledOperator::new(
        space,
        OperatorKind::DivForm,
        full,
        Some(a),
        None,
    ))
}

pub fn assemble_mass(space: &FESpace) -> AssembledOperator {
    let n = space.dofs_per_cell();
    let t = cell_triplets(space, |_, cv, block| {
        for q in 0..cv.x.len() {
            let v = &cv.values[q];
            for i in 0..n {
                for j in 0..n {
                    block[i * n + j] += cv.jw[q] * v[i] * v[j];
                }
            }
        }
    });
    let full = CsrMatrix::from_triplets(space.n_dofs(), space.n_dofs(), t);
    AssembledOperator::new(space, OperatorKind::Mass, full, None, None)
}

pub fn assemble_stiffness(space: &FESpace) -> AssembledOperator {
    let n = space.dofs_per_cell();
    let t = cell_triplets(space, |_, cv, block| {
        for q in 0..cv.x.len() {
            let g = &cv.grads[q];
            for i in 0..n {
                for j in 0..n {
                    block[i * n + j] += cv.jw[q] * dot(g[i], g[j]);
                }
            }
        }
    });
    let full = CsrMatrix::from_triplets(space.n_dofs(), space.n_dofs(), t);
    AssembledOperator::new(space, OperatorKind::Stiffness, full, None, None)
}

/// Gram matrix of `sum_T ||D^2 w||^2_T + sum_e h_e^{-1} ||[grad w] . nu_e||^2_e`.
pub fn assemble_broken_h2_gram(space: &FESpace) -> Result<AssembledOperator> {
    require_continuous(space, "the broken H2 Gram matrix")?;
    let n = space.dofs_per_cell();
    let mut t = cell_triplets(space, |_, cv, block| {
        for q in 0..cv.x.len() {
            let h = &cv.hessians[q];
            for i in 0..n {
                for j in 0..n {
                    block[i * n + j] += cv.jw[q] * h[i].contract(&h[j]);
                }
            }
        }
    });
    t.extend(c0_edge_triplets(space, |_, w, e, dofs, block| {
        let m = dofs.len();
        let jumps: Vec<f64> = dofs
            .iter()
            .map(|d| dot(sub(d.grad_plus, d.grad_minus), e.normal))
            .collect();
        for i in 0..m {
            for j in 0..m {
                block[i * m + j] += w * jumps[i] * jumps[j] / e.length;
            }
        }
    }));
    let full = CsrMatrix::from_triplets(space.n_dofs(), space.n_dofs(), t);
    Ok(AssembledOperator::new(space, OperatorKind::BrokenH2, full, None, None))
}

/// Interior-penalty DG form on a broken space:
///
/// `-(A:D_h^2 u, v) + sum_{e interior} <[A grad u . nu], {v}>
///  - eps sum_{e all} <{A grad v . nu}, [u]> + sum_{e all} gamma_e / h_e <[u], [v]>`
///
/// with `[w] = {w} = w` on boundary edges and `gamma_e = gamma0 r^2`.
pub fn assemble_dg(space: &FESpace, a: &CoefficientField, cfg: DgConfig) -> Result<AssembledOperator> {
    cfg.validate()?;
    if space.continuity() != Continuity::Discontinuous {
        return invalid("the DG form needs a discontinuous space");
    }
    let n = space.dofs_per_cell();
    let eps = cfg.epsilon as f64;
    let gamma = cfg.penalty(space.degree());
    let mesh = space.mesh();
    let rule = space.edge_rule();

    let mut t = cell_triplets(space, |_, cv, block| {
        for q in 0..cv.x.len() {
            let aq = a.eval(cv.x[q]);
            for j in 0..n {
                let lap = -aq.contract(&cv.hessians[q][j]) * cv.jw[q];
                for i in 0..n {
                    block[i * n + j] += lap * cv.values[q][i];
                }
            }
        }
    });

    t.extend(
        mesh.interior_edges()
            .par_iter()
            .flat_map_iter(|e| {
                let pa = mesh.vertices()[e.endpoints[0]];
                let pb = mesh.vertices()[e.endpoints[1]];
                let penalty = gamma / e.length;
                let mut out = Vec::new();
                for (x, w) in edge_points(&rule, pa, pb) {
                    let aq = a.eval(x);
                    // (dof, side sign, trace value, A grad . nu)
                    let mut sides = Vec::with_capacity(2 * n);
                    for (cell, sign) in [(e.t_plus, 1.0), (e.t_minus, -1.0)] {
                        let tr = trace(space, cell, x);
                        for (l, &dof) in space.cell_dofs(cell).iter().enumerate() {
                            sides.push((dof, sign, tr.values[l], dot(aq.mul_vec(tr.grads[l]), e.normal)));
                        }
                    }
                    for &(di, si, vi, fi) in &sides {
                        for &(dj, sj, vj, fj) in &sides {
                            let flux_jump = sj * fj * 0.5 * vi;
                            let adjoint = -eps * 0.5 * fi * sj * vj;
                            let pen = penalty * sj * vj * si * vi;
                            out.push((di, dj, w * (flux_jump + adjoint + pen)));
                        }
                    }
                }
                out
            })
            .collect::<Vec<_>>(),
    );

    t.extend(
        mesh.boundary_edges()
            .par_iter()
            .flat_map_iter(|e| {
                let pa = mesh.vertices()[e.endpoints[0]];
                let pb = mesh.vertices()[e.endpoints[1]];
                let penalty = gamma / e.length;
                let dofs = space.cell_dofs(e.cell);
                let mut out = Vec::new();
                for (x, w) in edge_points(&rule, pa, pb) {
                    let aq = a.eval(x);
                    let tr = trace(space, e.cell, x);
                    let flux: Vec<f64> = tr.grads.iter().map(|&g| dot(aq.mul_vec(g), e.normal)).collect();
                    for i in 0..n {
                        for j in 0..n {
                            let adjoint = -eps * flux[i] * tr.values[j];
                            let pen = penalty * tr.values[j] * tr.values[i];
                            out.push((dofs[i], dofs[j], w * (adjoint + pen)));
                        }
                    }
                }
                out
            })
            .collect::<Vec<_>>(),
    );

    let full = CsrMatrix::from_triplets(space.n_dofs(), space.n_dofs(), t);
    Ok(AssembledOperator::new(
        space,
        OperatorKind::Dg,
        full,
        Some(a),
        Some(cfg),
    ))
}

/// `F[i] = (f, phi_i)` over all DOFs.
pub fn load_vector_full(space: &FESpace, f: impl Fn(Point) -> f64 + Sync) -> Vec<f64> {
    let rule = space.cell_rule();
    let tab = Tabulation::new(space.basis(), &rule.points);
    let n = space.dofs_per_cell();
    let locals: Vec<Vec<f64>> = (0..space.mesh().n_cells())
        .into_par_iter()
        .map(|k| {
            let geo = space.geometry(k);
            let mut local = vec![0.0; n];
            for (q, (xi, w)) in rule.iter().enumerate() {
                let fx = f(geo.to_physical(xi)) * w * geo.det;
                for i in 0..n {
                    local[i] += fx * tab.values[q][i];
                }
            }
            local
        })
        .collect();
    let mut out = vec![0.0; space.n_dofs()];
    for (k, local) in locals.iter().enumerate() {
        for (&d, v) in space.cell_dofs(k).iter().zip(local) {
            out[d] += v;
        }
    }
    out
}

/// `F[i] = (f, phi_i)` over the free DOFs.
pub fn load_vector(space: &FESpace, f: impl Fn(Point) -> f64 + Sync) -> Vec<f64> {
    space.restrict_to_free(&load_vector_full(space, f))
}

/// Discrete adjoint `L_h^*`: the transposed matrix.
pub fn adjoint(op: &AssembledOperator) -> Result<AssembledOperator> {
    let kind = match op.kind {
        OperatorKind::NonDiv => OperatorKind::AdjointNonDiv,
        OperatorKind::AdjointNonDiv => OperatorKind::NonDiv,
        other => {
            return invalid(format!(
                "adjoint is defined for the non-divergence operator, not {other:?}"
            ))
        }
    };
    Ok(AssembledOperator {
        kind,
        matrix: op.matrix.transpose(),
        full: op.full.transpose(),
        degree: op.degree,
        coefficient: op.coefficient.clone(),
        dg: None,
    })
}
