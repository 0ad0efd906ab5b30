//! Preconditioned conjugate gradients.

use crate::error::{Error, Result};
use crate::fem::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    Jacobi,
    None,
}

impl std::str::FromStr for Preconditioner {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jacobi" => Ok(Self::Jacobi),
            "none" => Ok(Self::None),
            _ => Err(Error::Config(format!("unknown preconditioner '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Absolute tolerance on the preconditioned residual norm.
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 20_000,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("solver tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("solver max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final preconditioned residual norm `||P^-1 r||`.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for SPD `A` from a zero initial guess.
pub fn pcg_solve(a: &SparseMatrix, b: &[f64], config: &SolverConfig) -> Result<Solution> {
    config.validate()?;
    let n = b.len();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::Dimension(format!(
            "{}x{} operator with right-hand side of length {n}",
            a.nrows(),
            a.ncols()
        )));
    }
    let inv_diag: Vec<f64> = match config.preconditioner {
        Preconditioner::Jacobi => a
            .diagonal()
            .iter()
            .map(|&d| {
                if d > 0.0 {
                    Ok(1.0 / d)
                } else {
                    Err(Error::NotPositiveDefinite { curvature: d })
                }
            })
            .collect::<Result<_>>()?,
        Preconditioner::None => vec![1.0; n],
    };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut res = dot(&z, &z).sqrt();
    if res <= config.tol {
        return Ok(Solution {
            x,
            iterations: 0,
            residual: res,
        });
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=config.max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite { curvature: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * inv_diag[i];
        }
        res = dot(&z, &z).sqrt();
        if !res.is_finite() {
            return Err(Error::NotConverged {
                iterations: it,
                residual: res,
            });
        }
        if res <= config.tol {
            return Ok(Solution {
                x,
                iterations: it,
                residual: res,
            });
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged {
        iterations: config.max_iter,
        residual: res,
    })
}
