//! Finite element discretization of `-A:D^2 u = f` on polygonal domains in
//! two dimensions with homogeneous Dirichlet data.
//!
//! The C0 method tests the broken non-divergence operator plus interior flux
//! jumps against continuous Lagrange functions of degree 1 to 3. An interior
//! penalty DG variant, discrete dual norms, a stability probe and a
//! convergence study driver are built on the same assembly layer.

pub mod cli;
pub mod coefficients;
pub mod error;
pub mod fe_space;
pub mod geometry;
pub mod mesh;
pub mod norms;
pub mod operator;
pub mod probe;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
