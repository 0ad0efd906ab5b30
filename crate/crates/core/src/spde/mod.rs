//! Matérn random fields as solutions of the Whittle SPDE
//! `(I - kappa^-2 Laplace)^k u = eta W` with homogeneous Dirichlet data.

pub mod bessel;
pub mod pcg;

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::fem::{
    apply_dirichlet_matrix, assemble_helmholtz, assemble_mass, zero_boundary, Field, FunctionSpace,
    SparseMatrix,
};
use crate::geometry::{dist, Point};
use crate::whitenoise::CoupledNoisePair;

pub use bessel::bessel_k;
pub use pcg::{pcg_solve, Preconditioner, Solution, SolverConfig};

/// Spatial dimension.
const DIM: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    pub sigma: f64,
    pub nu: f64,
    pub lambda: f64,
}

impl MaternParams {
    pub fn new(sigma: f64, nu: f64, lambda: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidInput(format!("nu must be positive, got {nu}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { sigma, nu, lambda })
    }

    pub fn kappa(&self) -> f64 {
        (8.0 * self.nu).sqrt() / self.lambda
    }

    /// Marginal variance of the field driven by unit-scaled noise.
    pub fn sigma_hat_sq(&self) -> f64 {
        let nu = self.nu;
        gamma(nu) * nu.powf(DIM / 2.0) / gamma(nu + DIM / 2.0)
            * (2.0 / std::f64::consts::PI).powf(DIM / 2.0)
            * self.lambda.powf(-DIM)
    }

    /// Noise scaling `sigma / sigma_hat`.
    pub fn eta(&self) -> f64 {
        self.sigma / self.sigma_hat_sq().sqrt()
    }

    /// Number of Helmholtz solves `k = (nu + d/2) / 2`, which must be a
    /// positive integer.
    pub fn order(&self) -> Result<usize> {
        let k = (self.nu + DIM / 2.0) / 2.0;
        if (k - k.round()).abs() > 1e-12 || k.round() < 1.0 {
            return Err(Error::InvalidInput(format!(
                "nu = {} gives non-integer SPDE order {k}",
                self.nu
            )));
        }
        Ok(k.round() as usize)
    }
}

/// Matérn covariance `sigma^2 / (2^(nu-1) Gamma(nu)) (kappa r)^nu K_nu(kappa r)`.
pub fn matern_covariance(r: f64, params: &MaternParams) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidInput(format!("distance must be non-negative, got {r}")));
    }
    let s2 = params.sigma * params.sigma;
    if r == 0.0 {
        return Ok(s2);
    }
    let nu = params.nu;
    let x = params.kappa() * r;
    if x > 700.0 {
        return Ok(0.0);
    }
    Ok(s2 / (2f64.powf(nu - 1.0) * gamma(nu)) * x.powf(nu) * bessel_k(nu, x)?)
}

/// Samples Matérn fields on one space, reusing a single assembled operator
/// for all `k` solves.
#[derive(Debug)]
pub struct MaternSolver {
    space: Arc<FunctionSpace>,
    params: MaternParams,
    order: usize,
    operator: SparseMatrix,
    mass: SparseMatrix,
    config: SolverConfig,
    solves: AtomicUsize,
    iterations: AtomicUsize,
}

impl MaternSolver {
    pub fn new(space: Arc<FunctionSpace>, params: MaternParams, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let order = params.order()?;
        let mut operator = assemble_helmholtz(&space, params.kappa())?;
        apply_dirichlet_matrix(&mut operator, space.boundary_dofs());
        let mass = assemble_mass(&space);
        Ok(Self {
            space,
            params,
            order,
            operator,
            mass,
            config,
            solves: AtomicUsize::new(0),
            iterations: AtomicUsize::new(0),
        })
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn params(&self) -> &MaternParams {
        &self.params
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn operator(&self) -> &SparseMatrix {
        &self.operator
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    /// Total CG solves performed so far.
    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    /// Total CG iterations performed so far.
    pub fn iteration_count(&self) -> usize {
        self.iterations.load(Ordering::Relaxed)
    }

    fn solve_once(&self, mut rhs: Vec<f64>) -> Result<Vec<f64>> {
        zero_boundary(&mut rhs, self.space.boundary_dofs());
        let s = pcg_solve(&self.operator, &rhs, &self.config)?;
        self.solves.fetch_add(1, Ordering::Relaxed);
        self.iterations.fetch_add(s.iterations, Ordering::Relaxed);
        Ok(s.x)
    }

    /// `A u_1 = rhs`, then `A u_j = M u_{j-1}` for `j = 2..=k`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.space.num_dofs() {
            return Err(Error::Dimension(format!(
                "right-hand side of length {} for {} dofs",
                rhs.len(),
                self.space.num_dofs()
            )));
        }
        let mut u = self.solve_once(rhs.to_vec())?;
        for _ in 1..self.order {
            let mut mu = vec![0.0; u.len()];
            self.mass.matvec(&u, &mut mu);
            u = self.solve_once(mu)?;
        }
        Ok(u)
    }

    /// Matérn sample driven by the white-noise load `noise`.
    pub fn sample(&self, noise: &[f64]) -> Result<Field> {
        let eta = self.params.eta();
        let rhs: Vec<f64> = noise.iter().map(|b| eta * b).collect();
        Field::new(self.space.clone(), self.solve(&rhs)?)
    }
}

/// Solves the fine and coarse systems driven by a coupled noise pair.
pub fn sample_coupled_matern(
    fine: &MaternSolver,
    coarse: &MaternSolver,
    noise: &CoupledNoisePair,
) -> Result<(Field, Field)> {
    Ok((fine.sample(&noise.fine.values)?, coarse.sample(&noise.coarse.values)?))
}

/// One point of an estimated covariance curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceEstimate {
    pub r: f64,
    pub value: f64,
    pub stderr: f64,
}

/// Sample covariance between the anchor `x0` and each probe point.
pub fn empirical_covariance(samples: &[Field], x0: Point, probes: &[Point]) -> Result<Vec<CovarianceEstimate>> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput("covariance needs at least two samples".into()));
    }
    let space = samples[0].space();
    let locate = |p: Point| space.locate(p).ok_or(Error::OutsideMesh { x: p[0], y: p[1] });
    let (c0, l0) = locate(x0)?;
    let a: Vec<f64> = samples
        .iter()
        .map(|s| space.eval_in_cell(s.values(), c0, l0))
        .collect();
    let mut out = Vec::with_capacity(probes.len());
    for &p in probes {
        let (c, l) = locate(p)?;
        let b: Vec<f64> = samples
            .iter()
            .map(|s| space.eval_in_cell(s.values(), c, l))
            .collect();
        out.push(CovarianceEstimate::from_values(dist(x0, p), &a, &b));
    }
    Ok(out)
}

impl CovarianceEstimate {
    /// Sample covariance of paired point values `a`, `b` at distance `r`,
    /// with the standard error of the mean of centred products.
    pub fn from_values(r: f64, a: &[f64], b: &[f64]) -> Self {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
        let value = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|v| (v - value).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            r,
            value,
            stderr: (var / n).sqrt(),
        }
    }
}

/// CSV with columns `r, empirical, exact, stderr`.
pub fn write_covariance_csv<W: Write>(mut w: W, curve: &[CovarianceEstimate], params: &MaternParams) -> Result<()> {
    writeln!(w, "r,empirical,exact,stderr")?;
    for c in curve {
        writeln!(w, "{},{},{},{}", c.r, c.value, matern_covariance(c.r, params)?, c.stderr)?;
    }
    Ok(())
}
