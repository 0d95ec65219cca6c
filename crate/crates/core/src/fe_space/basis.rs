//! Nodal Lagrange basis of degree 1..=3 on the reference triangle.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;

use crate::error::{invalid, Result};
use crate::geometry::Mat2;

pub const MAX_DEGREE: usize = 3;

/// Lagrange basis with equispaced nodes.
///
/// Local node order: the three vertices `(0,0), (1,0), (0,1)`, then the interior
/// nodes of edges `v0->v1`, `v1->v2`, `v2->v0` (each walked from its first
/// vertex), then cell-interior nodes.
#[derive(Debug, Clone)]
pub struct ReferenceBasis {
    degree: usize,
    nodes: Vec<[f64; 2]>,
    monomials: Vec<(i32, i32)>,
    /// `coeffs[i][k]`: coefficient of monomial `k` in basis function `i`.
    coeffs: Vec<Vec<f64>>,
}

impl ReferenceBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if degree == 0 || degree > MAX_DEGREE {
            return invalid(format!(
                "polynomial degree {degree} unsupported (expected 1..={MAX_DEGREE})"
            ));
        }
        let r = degree as f64;
        let mut nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for k in 1..degree {
            nodes.push([k as f64 / r, 0.0]);
        }
        for k in 1..degree {
            nodes.push([1.0 - k as f64 / r, k as f64 / r]);
        }
        for k in 1..degree {
            nodes.push([0.0, 1.0 - k as f64 / r]);
        }
        for j in 1..degree {
            for i in 1..degree {
                if i + j < degree {
                    nodes.push([i as f64 / r, j as f64 / r]);
                }
            }
        }
        let monomials: Vec<(i32, i32)> = (0..=degree as i32)
            .flat_map(|total| (0..=total).map(move |b| (total - b, b)))
            .collect();
        let n = nodes.len();
        debug_assert_eq!(n, monomials.len());

        let vandermonde = Mat::<f64>::from_fn(n, n, |i, k| {
            let (a, b) = monomials[k];
            nodes[i][0].powi(a) * nodes[i][1].powi(b)
        });
        let inv = vandermonde.partial_piv_lu().inverse();
        let coeffs = (0..n).map(|i| (0..n).map(|k| inv[(k, i)]).collect()).collect();
        Ok(ReferenceBasis {
            degree,
            nodes,
            monomials,
            coeffs,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    /// Number of interior nodes per edge.
    pub fn nodes_per_edge(&self) -> usize {
        self.degree - 1
    }

    pub fn nodes_per_interior(&self) -> usize {
        (self.degree - 1) * self.degree.saturating_sub(2) / 2
    }

    pub fn values(&self, p: [f64; 2]) -> Vec<f64> {
        let m: Vec<f64> = self
            .monomials
            .iter()
            .map(|&(a, b)| p[0].powi(a) * p[1].powi(b))
            .collect();
        self.combine(&m)
    }

    pub fn gradients(&self, p: [f64; 2]) -> Vec<[f64; 2]> {
        let dx: Vec<f64> = self
            .monomials
            .iter()
            .map(|&(a, b)| dpow(p[0], a) * p[1].powi(b))
            .collect();
        let dy: Vec<f64> = self
            .monomials
            .iter()
            .map(|&(a, b)| p[0].powi(a) * dpow(p[1], b))
            .collect();
        self.combine(&dx)
            .into_iter()
            .zip(self.combine(&dy))
            .map(|(x, y)| [x, y])
            .collect()
    }

    pub fn hessians(&self, p: [f64; 2]) -> Vec<Mat2> {
        let dxx: Vec<f64> = self
            .monomials
            .iter()
            .map(|&(a, b)| d2pow(p[0], a) * p[1].powi(b))
            .collect();
        let dxy: Vec<f64> = self
            .monomials
            .iter()
            .map(|&(a, b)| dpow(p[0], a) * dpow(p[1], b))
            .collect();
        let dyy: Vec<f64> = self
            .monomials
            .iter()
            .map(|&(a, b)| p[0].powi(a) * d2pow(p[1], b))
            .collect();
        let (xx, xy, yy) = (self.combine(&dxx), self.combine(&dxy), self.combine(&dyy));
        (0..self.len()).map(|i| Mat2::symmetric(xx[i], xy[i], yy[i])).collect()
    }

    fn combine(&self, monomial_values: &[f64]) -> Vec<f64> {
        self.coeffs
            .iter()
            .map(|c| c.iter().zip(monomial_values).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn dpow(x: f64, a: i32) -> f64 {
    if a == 0 {
        0.0
    } else {
        a as f64 * x.powi(a - 1)
    }
}

fn d2pow(x: f64, a: i32) -> f64 {
    if a < 2 {
        0.0
    } else {
        (a * (a - 1)) as f64 * x.powi(a - 2)
    }
}

/// Basis values, gradients and Hessians on the reference cell at a fixed point set.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub values: Vec<Vec<f64>>,
    pub gradients: Vec<Vec<[f64; 2]>>,
    pub hessians: Vec<Vec<Mat2>>,
}

impl Tabulation {
    pub fn new(basis: &ReferenceBasis, points: &[[f64; 2]]) -> Self {
        Tabulation {
            values: points.iter().map(|&p| basis.values(p)).collect(),
            gradients: points.iter().map(|&p| basis.gradients(p)).collect(),
            hessians: points.iter().map(|&p| basis.hessians(p)).collect(),
        }
    }
}
