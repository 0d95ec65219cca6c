#![allow(dead_code)]

use std::sync::Arc;

use nondiv_fem::fe_space::{FEFunction, FESpace};
use nondiv_fem::geometry::Point;
use nondiv_fem::mesh::unit_square_mesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn square_space(n: usize, r: usize) -> FESpace {
    FESpace::new(Arc::new(unit_square_mesh(n).unwrap()), r).unwrap()
}

pub fn broken_space(n: usize, r: usize) -> FESpace {
    FESpace::discontinuous(Arc::new(unit_square_mesh(n).unwrap()), r).unwrap()
}

pub fn random_vector(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `||f - g||_{L2}` for two functions on the same mesh, by a fine cell rule.
pub fn l2_distance(f: &FEFunction, g: &FEFunction) -> f64 {
    let space = f.space();
    let rule = nondiv_fem::fe_space::quad_triangle(2 * space.degree().max(g.space().degree()) + 4).unwrap();
    let mut total = 0.0;
    for k in 0..space.mesh().n_cells() {
        let det = space.geometry(k).det;
        for (xi, w) in rule.iter() {
            let d = f.eval(k, xi) - g.eval(k, xi);
            total += w * det * d * d;
        }
    }
    total.sqrt()
}

/// `||g||_{L2}` of a pointwise field.
pub fn l2_norm_of(space: &FESpace, g: impl Fn(Point) -> f64) -> f64 {
    let rule = nondiv_fem::fe_space::quad_triangle(12).unwrap();
    let mut total = 0.0;
    for k in 0..space.mesh().n_cells() {
        let geo = space.geometry(k);
        for (xi, w) in rule.iter() {
            let v = g(geo.to_physical(xi));
            total += w * geo.det * v * v;
        }
    }
    total.sqrt()
}

pub fn rate(e0: f64, e1: f64) -> f64 {
    (e0 / e1).log2()
}
