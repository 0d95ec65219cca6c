use std::collections::BTreeSet;

use super::{FEFunction, FESpace};
use crate::error::{invalid, Result};
use crate::geometry::Point;
use crate::sparse::{CsrMatrix, SparseCholesky};

/// What to project: a pointwise field or a function from some space on the
/// same mesh.
pub enum ProjectionSource<'a> {
    Field(&'a dyn Fn(Point) -> f64),
    Discrete(&'a FEFunction<'a>),
}

impl ProjectionSource<'_> {
    fn value(&self, cell: usize, xi: [f64; 2], x: Point) -> f64 {
        match self {
            ProjectionSource::Field(f) => f(x),
            ProjectionSource::Discrete(g) => g.eval(cell, xi),
        }
    }
}

/// L2 projection onto `V_h(D)`: the free DOFs whose support lies inside the
/// cell set `D` (all cells when `subdomain` is `None`).
///
/// The result vanishes outside `D`.
pub fn l2_project<'s>(
    space: &'s FESpace,
    source: ProjectionSource<'_>,
    subdomain: Option<&[usize]>,
) -> Result<FEFunction<'s>> {
    let n_cells = space.mesh().n_cells();
    let cells: BTreeSet<usize> = match subdomain {
        Some(set) => set.iter().copied().collect(),
        None => (0..n_cells).collect(),
    };
    if cells.is_empty() {
        return invalid("empty subdomain");
    }
    if cells.iter().any(|&k| k >= n_cells) {
        return invalid("subdomain references a missing cell");
    }
    if let ProjectionSource::Discrete(g) = &source {
        if g.space().mesh().n_cells() != n_cells {
            return invalid("discrete source lives on a different mesh");
        }
    }

    // DOFs supported inside D: free and not touched by any cell outside D
    let mut inside = vec![true; space.n_dofs()];
    for (d, &b) in space.boundary_mask().iter().enumerate() {
        if b {
            inside[d] = false;
        }
    }
    for k in (0..n_cells).filter(|k| !cells.contains(k)) {
        for &d in space.cell_dofs(k) {
            inside[d] = false;
        }
    }
    let mut index = vec![None; space.n_dofs()];
    let mut local_dofs = Vec::new();
    for (d, &ok) in inside.iter().enumerate() {
        if ok {
            index[d] = Some(local_dofs.len());
            local_dofs.push(d);
        }
    }
    if local_dofs.is_empty() {
        return invalid("subdomain supports no finite element functions");
    }

    let rule = space.cell_rule();
    let basis_values: Vec<Vec<f64>> = rule.points.iter().map(|&p| space.basis().values(p)).collect();
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; local_dofs.len()];
    for &k in &cells {
        let geo = space.geometry(k);
        let dofs = space.cell_dofs(k);
        for (q, (xi, w)) in rule.iter().enumerate() {
            let jw = w * geo.det;
            let x = geo.to_physical(xi);
            let g = source.value(k, xi, x);
            let phi = &basis_values[q];
            for (i, &di) in dofs.iter().enumerate() {
                let Some(ii) = index[di] else { continue };
                rhs[ii] += jw * g * phi[i];
                for (j, &dj) in dofs.iter().enumerate() {
                    if let Some(jj) = index[dj] {
                        triplets.push((ii, jj, jw * phi[i] * phi[j]));
                    }
                }
            }
        }
    }
    let mass = CsrMatrix::from_triplets(local_dofs.len(), local_dofs.len(), triplets);
    let x = SparseCholesky::factor(&mass)?.solve(&rhs);
    let mut out = space.zero_function();
    for (&d, v) in local_dofs.iter().zip(x) {
        out.coeffs_mut()[d] = v;
    }
    Ok(out)
}
