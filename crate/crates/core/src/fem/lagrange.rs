//! Equispaced Lagrange elements of degree 1 to 3 on triangles.
//!
//! Basis functions are written in barycentric form: for the multi-index
//! `a` with `a0 + a1 + a2 = p`,
//! `phi_a = prod_k prod_{s < a_k} (p * lambda_k - s) / (s + 1)`.
//! Local node order is vertices, then edge nodes (edges 01, 12, 20, walking
//! from the first vertex to the second), then interior nodes.

use crate::error::{Error, Result};

/// Largest number of local basis functions (degree 3).
pub const MAX_LOCAL: usize = 10;

pub fn local_dim(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

pub fn check_degree(degree: usize) -> Result<()> {
    if (1..=3).contains(&degree) {
        Ok(())
    } else {
        Err(Error::UnsupportedDegree(degree))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeElement {
    degree: usize,
    nodes: Vec<[u8; 3]>,
}

impl LagrangeElement {
    pub fn new(degree: usize) -> Result<Self> {
        check_degree(degree)?;
        let p = degree as u8;
        let mut nodes = vec![[p, 0, 0], [0, p, 0], [0, 0, p]];
        for (a, b) in [(0usize, 1usize), (1, 2), (2, 0)] {
            for s in 1..p {
                let mut n = [0u8; 3];
                n[a] = p - s;
                n[b] = s;
                nodes.push(n);
            }
        }
        for i in 1..p {
            for j in 1..p {
                if i + j < p {
                    nodes.push([p - i - j, i, j]);
                }
            }
        }
        debug_assert_eq!(nodes.len(), local_dim(degree));
        Ok(Self { degree, nodes })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// Barycentric multi-indices of the local nodes.
    pub fn nodes(&self) -> &[[u8; 3]] {
        &self.nodes
    }

    /// Barycentric coordinates of local node `i`.
    pub fn node_barycentric(&self, i: usize) -> [f64; 3] {
        let p = self.degree as f64;
        let n = self.nodes[i];
        [n[0] as f64 / p, n[1] as f64 / p, n[2] as f64 / p]
    }

    /// Physical coordinates of the local nodes on the triangle `tri`.
    pub fn node_points(&self, tri: &[[f64; 2]; 3]) -> Vec<[f64; 2]> {
        (0..self.dim())
            .map(|i| {
                let l = self.node_barycentric(i);
                [
                    l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0],
                    l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1],
                ]
            })
            .collect()
    }

    /// Basis values at barycentric point `l`; writes `dim()` entries.
    pub fn eval(&self, l: [f64; 3], out: &mut [f64]) {
        let p = self.degree as f64;
        let f = factors(p, self.degree, l);
        for (o, n) in out.iter_mut().zip(&self.nodes) {
            *o = f[0][n[0] as usize] * f[1][n[1] as usize] * f[2][n[2] as usize];
        }
    }

    /// Derivatives of each basis function with respect to the three
    /// barycentric coordinates (treated as independent variables).
    pub fn eval_grad_bary(&self, l: [f64; 3], out: &mut [[f64; 3]]) {
        let p = self.degree as f64;
        let f = factors(p, self.degree, l);
        let d = factor_derivs(p, self.degree, l);
        for (o, n) in out.iter_mut().zip(&self.nodes) {
            let (a, b, c) = (n[0] as usize, n[1] as usize, n[2] as usize);
            *o = [
                d[0][a] * f[1][b] * f[2][c],
                f[0][a] * d[1][b] * f[2][c],
                f[0][a] * f[1][b] * d[2][c],
            ];
        }
    }
}

/// `f[k][a] = prod_{s < a} (p l_k - s) / (s + 1)` for a = 0..=p.
fn factors(p: f64, degree: usize, l: [f64; 3]) -> [[f64; 4]; 3] {
    let mut f = [[1.0; 4]; 3];
    for k in 0..3 {
        for a in 1..=degree {
            let s = (a - 1) as f64;
            f[k][a] = f[k][a - 1] * (p * l[k] - s) / (s + 1.0);
        }
    }
    f
}

/// Derivative of `factors` with respect to l_k.
fn factor_derivs(p: f64, degree: usize, l: [f64; 3]) -> [[f64; 4]; 3] {
    let f = factors(p, degree, l);
    let mut d = [[0.0; 4]; 3];
    for k in 0..3 {
        for a in 1..=degree {
            let s = (a - 1) as f64;
            // product rule on f[a] = f[a-1] * (p l - s) / (s + 1)
            d[k][a] = (d[k][a - 1] * (p * l[k] - s) + f[k][a - 1] * p) / (s + 1.0);
        }
    }
    d
}

/// Gradients of the barycentric coordinates on a triangle (constant).
pub fn barycentric_gradients(tri: &[[f64; 2]; 3]) -> [[f64; 2]; 3] {
    let [a, b, c] = *tri;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let g1 = [(c[1] - a[1]) / det, -(c[0] - a[0]) / det];
    let g2 = [-(b[1] - a[1]) / det, (b[0] - a[0]) / det];
    [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2]
}
