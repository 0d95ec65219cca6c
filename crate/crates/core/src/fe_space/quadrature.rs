//! Gauss rules on the unit interval and collapsed (Duffy) Gauss rules on the
//! reference triangle `{(x, y) : x, y >= 0, x + y <= 1}`.

use crate::error::{invalid, Result};

/// Highest polynomial degree for which a rule can be requested.
pub const MAX_ORDER: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Reference coordinates: `[t, 0]` on the interval, `[x, y]` on the triangle.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_m
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, z);
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(m, z);
        x[i] = -z;
        x[m - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(m: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Rule on [0, 1] exact for polynomials of degree `order`.
pub fn quad_edge(order: usize) -> Result<QuadratureRule> {
    if order > MAX_ORDER {
        return invalid(format!("edge quadrature order {order} exceeds {MAX_ORDER}"));
    }
    let m = order / 2 + 1;
    let (x, w) = gauss_legendre(m);
    Ok(QuadratureRule {
        points: x.iter().map(|&t| [0.5 * (t + 1.0), 0.0]).collect(),
        weights: w.iter().map(|&wi| 0.5 * wi).collect(),
        degree: 2 * m - 1,
    })
}

/// Rule on the reference triangle exact for polynomials of total degree `order`.
///
/// Collapsed tensor rule `x = u, y = (1 - u) v`; the Jacobian `1 - u` raises the
/// degree in `u` by one, hence the extra point.
pub fn quad_triangle(order: usize) -> Result<QuadratureRule> {
    if order > MAX_ORDER {
        return invalid(format!("triangle quadrature order {order} exceeds {MAX_ORDER}"));
    }
    let m = (order + 2).div_ceil(2);
    let (x, w) = gauss_legendre(m);
    let mut points = Vec::with_capacity(m * m);
    let mut weights = Vec::with_capacity(m * m);
    for (xu, wu) in x.iter().zip(&w) {
        let u = 0.5 * (xu + 1.0);
        for (xv, wv) in x.iter().zip(&w) {
            let v = 0.5 * (xv + 1.0);
            points.push([u, (1.0 - u) * v]);
            weights.push(0.25 * wu * wv * (1.0 - u));
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        degree: 2 * m - 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact integral of x^a y^b over the reference triangle: a! b! / (a + b + 2)!
    fn monomial_integral(a: u32, b: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(a) * fact(b) / fact(a + b + 2)
    }

    #[test]
    fn unit_weight_sums() {
        let t = quad_triangle(4).unwrap();
        assert!((t.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
        assert!(t.weights.iter().all(|&w| w > 0.0));
        let e = quad_edge(5).unwrap();
        assert!((e.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn edge_cubic() {
        let e = quad_edge(3).unwrap();
        let v: f64 = e.iter().map(|(p, w)| w * p[0].powi(3)).sum();
        assert!((v - 0.25).abs() < 1e-14);
    }

    #[test]
    fn triangle_monomials_exact() {
        for order in 0..=12 {
            let q = quad_triangle(order).unwrap();
            assert!(q.degree >= order);
            for a in 0..=order as u32 {
                for b in 0..=(order as u32 - a) {
                    let v: f64 = q
                        .iter()
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = monomial_integral(a, b);
                    assert!((v - exact).abs() < 1e-13, "x^{a} y^{b}: {v} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn edge_monomials_exact() {
        for order in 0..=15 {
            let q = quad_edge(order).unwrap();
            for a in 0..=order as i32 {
                let v: f64 = q.iter().map(|(p, w)| w * p[0].powi(a)).sum();
                assert!((v - 1.0 / (a as f64 + 1.0)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn unsupported_order() {
        assert!(quad_triangle(MAX_ORDER + 1).is_err());
        assert!(quad_edge(MAX_ORDER + 1).is_err());
    }
}
