//! Lagrange finite element spaces on a [`Mesh`].
//!
//! A continuous space numbers vertex nodes first, then edge-interior nodes
//! (walked from the lower to the higher global vertex index), then
//! cell-interior nodes. Nodes on the boundary are flagged and excluded from
//! the free set, so the free coefficients parametrize `V_h` with `u = 0` on the
//! boundary. A discontinuous space gives every cell its own nodes and has no
//! constrained DOFs.

pub mod basis;
mod projection;
pub mod quadrature;

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

pub use basis::{ReferenceBasis, Tabulation, MAX_DEGREE};
pub use projection::{l2_project, ProjectionSource};
pub use quadrature::{quad_edge, quad_triangle, QuadratureRule};

use crate::error::{Error, Result};
use crate::geometry::{sub, Mat2, Point};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Continuity {
    Continuous,
    Discontinuous,
}

/// Affine map `x = origin + jac * xi` from the reference triangle.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub origin: Point,
    pub jac: Mat2,
    pub jac_inv: Mat2,
    /// `|det J|`, twice the cell area.
    pub det: f64,
}

impl CellGeometry {
    fn new([a, b, c]: [Point; 3]) -> Self {
        let jac = Mat2::from_columns(sub(b, a), sub(c, a));
        let jac_inv = jac.inverse().expect("cells have positive area");
        CellGeometry {
            origin: a,
            jac,
            jac_inv,
            det: jac.det().abs(),
        }
    }

    #[inline]
    pub fn to_physical(&self, xi: [f64; 2]) -> Point {
        let d = self.jac.mul_vec(xi);
        [self.origin[0] + d[0], self.origin[1] + d[1]]
    }

    #[inline]
    pub fn to_reference(&self, x: Point) -> [f64; 2] {
        self.jac_inv.mul_vec(sub(x, self.origin))
    }

    /// Physical gradient from a reference gradient: `J^{-T} g`.
    #[inline]
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        self.jac_inv.transpose().mul_vec(g)
    }

    /// Physical Hessian from a reference Hessian: `J^{-T} H J^{-1}`.
    #[inline]
    pub fn push_hessian(&self, h: &Mat2) -> Mat2 {
        self.jac_inv.transpose() * *h * self.jac_inv
    }
}

#[derive(Debug, Clone)]
pub struct FESpace {
    mesh: Arc<Mesh>,
    basis: ReferenceBasis,
    continuity: Continuity,
    geometry: Vec<CellGeometry>,
    dof_points: Vec<Point>,
    cell_dofs: Vec<usize>,
    boundary_mask: Vec<bool>,
    free_index: Vec<Option<usize>>,
    free_dofs: Vec<usize>,
}

impl FESpace {
    /// Continuous degree-`degree` Lagrange space with homogeneous Dirichlet flags.
    pub fn new(mesh: Arc<Mesh>, degree: usize) -> Result<Self> {
        let basis = ReferenceBasis::new(degree)?;
        let nv = mesh.n_vertices();
        let per_edge = basis.nodes_per_edge();
        let per_interior = basis.nodes_per_interior();

        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
        for cell in mesh.cells() {
            for l in 0..3 {
                let (a, b) = (cell[l], cell[(l + 1) % 3]);
                let next = edge_ids.len();
                edge_ids.entry((a.min(b), a.max(b))).or_insert(next);
            }
        }
        let ne = edge_ids.len();
        let n_dofs = nv + ne * per_edge + mesh.n_cells() * per_interior;
        let nloc = basis.len();

        let mut cell_dofs = Vec::with_capacity(mesh.n_cells() * nloc);
        for (k, cell) in mesh.cells().iter().enumerate() {
            cell_dofs.extend_from_slice(cell);
            for l in 0..3 {
                let (a, b) = (cell[l], cell[(l + 1) % 3]);
                let e = edge_ids[&(a.min(b), a.max(b))];
                for step in 1..=per_edge {
                    let pos = if a < b { step - 1 } else { per_edge - step };
                    cell_dofs.push(nv + e * per_edge + pos);
                }
            }
            for i in 0..per_interior {
                cell_dofs.push(nv + ne * per_edge + k * per_interior + i);
            }
        }

        let geometry: Vec<_> = (0..mesh.n_cells())
            .map(|k| CellGeometry::new(mesh.cell_vertices(k)))
            .collect();
        let mut dof_points = vec![[f64::NAN; 2]; n_dofs];
        for (k, g) in geometry.iter().enumerate() {
            for (l, &node) in basis.nodes().iter().enumerate() {
                dof_points[cell_dofs[k * nloc + l]] = g.to_physical(node);
            }
        }

        let mut boundary_mask = vec![false; n_dofs];
        for be in mesh.boundary_edges() {
            let [a, b] = be.endpoints;
            boundary_mask[a] = true;
            boundary_mask[b] = true;
            let e = edge_ids[&(a.min(b), a.max(b))];
            for pos in 0..per_edge {
                boundary_mask[nv + e * per_edge + pos] = true;
            }
        }
        Ok(Self::finish(
            mesh,
            basis,
            Continuity::Continuous,
            geometry,
            dof_points,
            cell_dofs,
            boundary_mask,
        ))
    }

    /// Broken degree-`degree` space: each cell owns its nodes, nothing constrained.
    pub fn discontinuous(mesh: Arc<Mesh>, degree: usize) -> Result<Self> {
        let basis = ReferenceBasis::new(degree)?;
        let nloc = basis.len();
        let geometry: Vec<_> = (0..mesh.n_cells())
            .map(|k| CellGeometry::new(mesh.cell_vertices(k)))
            .collect();
        let cell_dofs: Vec<usize> = (0..mesh.n_cells() * nloc).collect();
        let dof_points = geometry
            .iter()
            .flat_map(|g| basis.nodes().iter().map(move |&n| g.to_physical(n)))
            .collect();
        let boundary_mask = vec![false; cell_dofs.len()];
        Ok(Self::finish(
            mesh,
            basis,
            Continuity::Discontinuous,
            geometry,
            dof_points,
            cell_dofs,
            boundary_mask,
        ))
    }

    fn finish(
        mesh: Arc<Mesh>,
        basis: ReferenceBasis,
        continuity: Continuity,
        geometry: Vec<CellGeometry>,
        dof_points: Vec<Point>,
        cell_dofs: Vec<usize>,
        boundary_mask: Vec<bool>,
    ) -> Self {
        let mut free_index = vec![None; boundary_mask.len()];
        let mut free_dofs = Vec::new();
        for (i, &on_boundary) in boundary_mask.iter().enumerate() {
            if !on_boundary {
                free_index[i] = Some(free_dofs.len());
                free_dofs.push(i);
            }
        }
        FESpace {
            mesh,
            basis,
            continuity,
            geometry,
            dof_points,
            cell_dofs,
            boundary_mask,
            free_index,
            free_dofs,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn basis(&self) -> &ReferenceBasis {
        &self.basis
    }

    pub fn continuity(&self) -> Continuity {
        self.continuity
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_points.len()
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn dofs_per_cell(&self) -> usize {
        self.basis.len()
    }

    pub fn dof_points(&self) -> &[Point] {
        &self.dof_points
    }

    pub fn cell_dofs(&self, cell: usize) -> &[usize] {
        let n = self.basis.len();
        &self.cell_dofs[cell * n..(cell + 1) * n]
    }

    pub fn geometry(&self, cell: usize) -> &CellGeometry {
        &self.geometry[cell]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary_mask
    }

    /// Position of each DOF among the free DOFs.
    pub fn free_index(&self) -> &[Option<usize>] {
        &self.free_index
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    /// Default cell rule: exact to degree `2r + 2`.
    pub fn cell_rule(&self) -> QuadratureRule {
        quad_triangle(2 * self.degree() + 2).expect("supported order")
    }

    /// Default edge rule: exact to degree `2r + 1`.
    pub fn edge_rule(&self) -> QuadratureRule {
        quad_edge(2 * self.degree() + 1).expect("supported order")
    }

    pub fn zero_function(&self) -> FEFunction<'_> {
        FEFunction {
            space: self,
            coeffs: vec![0.0; self.n_dofs()],
        }
    }

    pub fn function(&self, coeffs: Vec<f64>) -> Result<FEFunction<'_>> {
        if coeffs.len() != self.n_dofs() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                self.n_dofs(),
                coeffs.len()
            )));
        }
        Ok(FEFunction { space: self, coeffs })
    }

    /// Expands free coefficients with zeros on the constrained DOFs.
    pub fn function_from_free(&self, free: &[f64]) -> FEFunction<'_> {
        assert_eq!(free.len(), self.n_free());
        let mut coeffs = vec![0.0; self.n_dofs()];
        for (&dof, &v) in self.free_dofs.iter().zip(free) {
            coeffs[dof] = v;
        }
        FEFunction { space: self, coeffs }
    }

    pub fn restrict_to_free(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| full[d]).collect()
    }

    /// Nodal interpolant; constrained DOFs are set to zero (the result lies in `V_h`).
    pub fn interpolate(&self, g: impl Fn(Point) -> f64) -> Result<FEFunction<'_>> {
        let mut f = self.interpolate_nodal(g)?;
        for (c, &b) in f.coeffs.iter_mut().zip(&self.boundary_mask) {
            if b {
                *c = 0.0;
            }
        }
        Ok(f)
    }

    /// Nodal interpolant without boundary constraint.
    pub fn interpolate_nodal(&self, g: impl Fn(Point) -> f64) -> Result<FEFunction<'_>> {
        let coeffs = self
            .dof_points
            .iter()
            .map(|&p| {
                let v = g(p);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Evaluation(format!(
                        "non-finite value {v} at ({}, {})",
                        p[0], p[1]
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FEFunction { space: self, coeffs })
    }
}

/// A coefficient vector over all DOFs of a space.
#[derive(Debug, Clone)]
pub struct FEFunction<'a> {
    space: &'a FESpace,
    coeffs: Vec<f64>,
}

impl<'a> FEFunction<'a> {
    pub fn space(&self) -> &'a FESpace {
        self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn free_coeffs(&self) -> Vec<f64> {
        self.space.restrict_to_free(&self.coeffs)
    }

    /// Local coefficient vector on `cell`.
    pub fn local(&self, cell: usize) -> Vec<f64> {
        self.space.cell_dofs(cell).iter().map(|&d| self.coeffs[d]).collect()
    }

    pub fn eval(&self, cell: usize, xi: [f64; 2]) -> f64 {
        let local = self.local(cell);
        self.space.basis.values(xi).iter().zip(&local).map(|(p, c)| p * c).sum()
    }

    pub fn eval_gradient(&self, cell: usize, xi: [f64; 2]) -> [f64; 2] {
        let local = self.local(cell);
        let g = self
            .space
            .basis
            .gradients(xi)
            .iter()
            .zip(&local)
            .fold([0.0, 0.0], |acc, (g, c)| [acc[0] + c * g[0], acc[1] + c * g[1]]);
        self.space.geometry[cell].push_gradient(g)
    }

    /// Broken (cellwise) Hessian.
    pub fn eval_hessian(&self, cell: usize, xi: [f64; 2]) -> Mat2 {
        let local = self.local(cell);
        let h = self
            .space
            .basis
            .hessians(xi)
            .iter()
            .zip(&local)
            .fold(Mat2::ZERO, |acc, (h, c)| acc + h.scale(*c));
        self.space.geometry[cell].push_hessian(&h)
    }

    /// Lines `x y value`, one per DOF.
    pub fn write_nodal<W: Write>(&self, mut w: W) -> Result<()> {
        for (p, v) in self.space.dof_points.iter().zip(&self.coeffs) {
            writeln!(w, "{:.17e} {:.17e} {:.17e}", p[0], p[1], v)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dot;
    use crate::mesh::unit_square_mesh;

    fn space(n: usize, r: usize) -> FESpace {
        FESpace::new(Arc::new(unit_square_mesh(n).unwrap()), r).unwrap()
    }

    #[test]
    fn dof_counts() {
        let s = space(2, 1);
        assert_eq!((s.n_dofs(), s.n_free()), (9, 1));
        let s = space(2, 2);
        assert_eq!((s.n_dofs(), s.n_free()), (25, 9));
        let s = space(2, 3);
        assert_eq!(s.n_dofs(), 49);
        assert_eq!(s.n_free(), 25);
        assert!(FESpace::new(Arc::new(unit_square_mesh(2).unwrap()), 4).is_err());
        for r in 1..=3 {
            assert_eq!(space(3, r).dofs_per_cell(), (r + 1) * (r + 2) / 2);
        }
    }

    #[test]
    fn boundary_flags_match_geometry() {
        for r in 1..=3 {
            let s = space(4, r);
            for (p, &b) in s.dof_points().iter().zip(s.boundary_mask()) {
                let on = p[0].abs() < 1e-14
                    || p[1].abs() < 1e-14
                    || (p[0] - 1.0).abs() < 1e-14
                    || (p[1] - 1.0).abs() < 1e-14;
                assert_eq!(on, b, "point {p:?}");
            }
        }
    }

    #[test]
    fn shared_nodes_coincide() {
        // every local node maps to a global point equal to its physical image
        for r in 1..=3 {
            let s = space(3, r);
            for k in 0..s.mesh().n_cells() {
                for (l, &d) in s.cell_dofs(k).iter().enumerate() {
                    let x = s.geometry(k).to_physical(s.basis().nodes()[l]);
                    let p = s.dof_points()[d];
                    assert!((x[0] - p[0]).abs() < 1e-14 && (x[1] - p[1]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn affine_reproduction() {
        let s = space(3, 1);
        let f = s.interpolate_nodal(|p| p[0] + p[1]).unwrap();
        for k in 0..s.mesh().n_cells() {
            let xi = [0.2, 0.3];
            let x = s.geometry(k).to_physical(xi);
            assert!((f.eval(k, xi) - (x[0] + x[1])).abs() < 1e-14);
            let g = f.eval_gradient(k, xi);
            assert!((g[0] - 1.0).abs() < 1e-13 && (g[1] - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn quadratic_hessian() {
        let s = space(3, 2);
        let f = s.interpolate_nodal(|p| p[0] * p[0]).unwrap();
        for k in 0..s.mesh().n_cells() {
            let h = f.eval_hessian(k, [0.1, 0.6]);
            assert!((h - Mat2::new(2.0, 0.0, 0.0, 0.0)).max_abs() < 1e-11);
        }
        let s1 = space(3, 1);
        let f1 = s1.interpolate_nodal(|p| p[0] * p[1]).unwrap();
        assert_eq!(f1.eval_hessian(2, [0.3, 0.3]).max_abs(), 0.0);
    }

    #[test]
    fn interpolation_of_member_is_exact() {
        let s = space(3, 3);
        let coeffs: Vec<f64> = (0..s.n_dofs()).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = s.function(coeffs.clone()).unwrap();
        // evaluate f at its own nodes through the cell representation
        let mut re = vec![0.0; s.n_dofs()];
        for k in 0..s.mesh().n_cells() {
            for (l, &d) in s.cell_dofs(k).iter().enumerate() {
                re[d] = f.eval(k, s.basis().nodes()[l]);
            }
        }
        assert!(re.iter().zip(&coeffs).all(|(a, b)| (a - b).abs() < 1e-13));
    }

    #[test]
    fn non_finite_sample_rejected() {
        let s = space(2, 1);
        assert!(matches!(
            s.interpolate(|p| 1.0 / (p[0] - 0.5)),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn traces_continuous_and_tangential_gradient_continuous() {
        for r in 1..=3 {
            let s = space(4, r);
            let coeffs: Vec<f64> = (0..s.n_dofs())
                .map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0)
                .collect();
            let f = s.function(coeffs).unwrap();
            let rule = s.edge_rule();
            let mesh = s.mesh();
            for e in mesh.interior_edges() {
                let a = mesh.vertices()[e.endpoints[0]];
                let b = mesh.vertices()[e.endpoints[1]];
                let tangent = sub(b, a);
                for (t, _) in rule.iter() {
                    let x = [a[0] + t[0] * tangent[0], a[1] + t[0] * tangent[1]];
                    let xp = s.geometry(e.t_plus).to_reference(x);
                    let xm = s.geometry(e.t_minus).to_reference(x);
                    assert!((f.eval(e.t_plus, xp) - f.eval(e.t_minus, xm)).abs() < 1e-12);
                    let gp = f.eval_gradient(e.t_plus, xp);
                    let gm = f.eval_gradient(e.t_minus, xm);
                    let jump = [gp[0] - gm[0], gp[1] - gm[1]];
                    assert!(dot(jump, tangent).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn broken_space_has_no_constraints() {
        let mesh = Arc::new(unit_square_mesh(2).unwrap());
        let s = FESpace::discontinuous(mesh, 2).unwrap();
        assert_eq!(s.n_dofs(), 8 * 6);
        assert_eq!(s.n_free(), s.n_dofs());
        assert_eq!(s.continuity(), Continuity::Discontinuous);
    }
}
