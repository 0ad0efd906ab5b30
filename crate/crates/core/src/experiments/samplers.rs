//! Level samplers for the Matérn norm and lognormal Darcy functionals.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{apply_dirichlet, assemble_mass, assemble_weighted_stiffness, l2_norm_sq, Field, FunctionSpace};
use crate::mesh::{HierarchyLevel, MeshHierarchy};
use crate::mlmc::{LevelSample, LevelSampler};
use crate::rng::StreamRng;
use crate::spde::{pcg_solve, MaternParams, MaternSolver, SolverConfig};
use crate::whitenoise::{Coupler, CouplingMode, IndependentSampler};

/// Shift and scale of `u = mu + sigma * u_hat` so that `exp(u)` has a
/// prescribed mean and standard deviation when `u_hat` is standard normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lognormal {
    pub mu: f64,
    pub sigma: f64,
}

impl Lognormal {
    pub fn from_moments(mean: f64, std: f64) -> Result<Self> {
        if !(mean > 0.0 && std > 0.0) {
            return Err(Error::InvalidInput(format!("lognormal needs positive mean and std, got {mean}, {std}")));
        }
        let s2 = (std / mean).powi(2).ln_1p();
        Ok(Self {
            mu: mean.ln() - s2 / 2.0,
            sigma: s2.sqrt(),
        })
    }

    /// Coefficient with mean 1 and standard deviation 0.2.
    pub fn darcy() -> Self {
        let s2 = 1.04f64.ln();
        Self {
            mu: -s2 / 2.0,
            sigma: s2.sqrt(),
        }
    }

    pub fn mean(&self) -> f64 {
        (self.mu + self.sigma * self.sigma / 2.0).exp()
    }

    pub fn std(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        (s2.exp_m1() * (2.0 * self.mu + s2).exp()).sqrt()
    }

    /// The field `mu + sigma * u_hat`.
    pub fn apply(&self, u_hat: &Field) -> Field {
        let values = u_hat.values().iter().map(|v| self.mu + self.sigma * v).collect();
        Field::new(u_hat.space().clone(), values).expect("same length")
    }
}

/// `-div(exp(u) grad q) = 1` on one space with `q = 0` on the boundary.
#[derive(Debug)]
pub struct DarcySolver {
    space: Arc<FunctionSpace>,
    load: Vec<f64>,
    config: SolverConfig,
}

impl DarcySolver {
    pub fn new(space: Arc<FunctionSpace>, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let mass = assemble_mass(&space);
        let mut load = vec![0.0; space.num_dofs()];
        mass.matvec(&vec![1.0; space.num_dofs()], &mut load);
        Ok(Self { space, load, config })
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    /// Solves with log-coefficient `log_coeff`, which must share the mesh.
    pub fn solve(&self, log_coeff: &Field) -> Result<Field> {
        let mut a = assemble_weighted_stiffness(&self.space, log_coeff)?;
        let mut rhs = self.load.clone();
        apply_dirichlet(&mut a, &mut rhs, self.space.boundary_dofs(), 0.0);
        let sol = pcg_solve(&a, &rhs, &self.config)?;
        Field::new(self.space.clone(), sol.x)
    }
}

/// One-off Darcy solve on `space` with log-coefficient `log_coeff`.
pub fn solve_darcy(space: &Arc<FunctionSpace>, log_coeff: &Field, config: &SolverConfig) -> Result<Field> {
    DarcySolver::new(space.clone(), *config)?.solve(log_coeff)
}

/// Matérn sampling data of one level: the solver on the outer space and the
/// dof map restricting outer fields to the embedded inner space.
#[derive(Debug)]
struct FieldLevel {
    solver: MaternSolver,
    noise: IndependentSampler,
    inner: Arc<FunctionSpace>,
    restrict: Vec<usize>,
    h: f64,
}

impl FieldLevel {
    fn new(
        outer: Arc<FunctionSpace>,
        inner: Arc<FunctionSpace>,
        cell_map: &[usize],
        params: MaternParams,
        solver: SolverConfig,
        h: f64,
    ) -> Result<Self> {
        let mut restrict = vec![usize::MAX; inner.num_dofs()];
        for (ic, &oc) in cell_map.iter().enumerate() {
            for (&i, &o) in inner.cell_dofs(ic).iter().zip(outer.cell_dofs(oc)) {
                restrict[i] = o;
            }
        }
        if restrict.contains(&usize::MAX) {
            return Err(Error::InvalidMesh("cell map does not cover the inner space".into()));
        }
        Ok(Self {
            noise: IndependentSampler::new(outer.clone())?,
            solver: MaternSolver::new(outer, params, solver)?,
            inner,
            restrict,
            h,
        })
    }

    fn restrict(&self, u: &Field) -> Field {
        let v = u.values();
        let values = self.restrict.iter().map(|&o| v[o]).collect();
        Field::new(self.inner.clone(), values).expect("restriction length")
    }

    /// Work units of one field sample: dofs times the number of solves.
    fn cost(&self) -> f64 {
        (self.solver.order() * self.solver.space().num_dofs()) as f64
    }
}

/// Matérn fields on a sequence of levels with coupled noise between
/// consecutive levels. Fields are returned restricted to the inner domain.
#[derive(Debug)]
pub struct MaternLevels {
    levels: Vec<FieldLevel>,
    /// `couplers[l]` couples level `l + 2` with level `l + 1`.
    couplers: Vec<Coupler>,
}

impl MaternLevels {
    /// h-refinement: level `l` uses hierarchy level `l` with degree `degree`.
    /// The regression mesh size is the unperturbed one, halving per level.
    pub fn from_hierarchy(
        hierarchy: &MeshHierarchy,
        params: MaternParams,
        degree: usize,
        mode: CouplingMode,
        solver: SolverConfig,
    ) -> Result<Self> {
        let h1 = hierarchy.level(1).h;
        let spaces: Vec<_> = hierarchy
            .levels
            .iter()
            .enumerate()
            .map(|(i, lvl)| (lvl, degree, h1 * 0.5f64.powi(i as i32)))
            .collect();
        Self::build(&spaces, params, mode, solver)
    }

    /// p-refinement: level `l` uses degree `degrees[l - 1]` on one mesh pair.
    pub fn p_refinement(
        level: &HierarchyLevel,
        degrees: &[usize],
        params: MaternParams,
        solver: SolverConfig,
    ) -> Result<Self> {
        let spaces: Vec<_> = degrees.iter().map(|&p| (level, p, level.h / p as f64)).collect();
        Self::build(&spaces, params, CouplingMode::Supermesh, solver)
    }

    fn build(
        plan: &[(&HierarchyLevel, usize, f64)],
        params: MaternParams,
        mode: CouplingMode,
        solver: SolverConfig,
    ) -> Result<Self> {
        if plan.is_empty() {
            return Err(Error::InvalidInput("at least one level is required".into()));
        }
        let levels = plan
            .iter()
            .map(|&(lvl, p, h)| {
                let outer = Arc::new(FunctionSpace::new(lvl.outer.clone(), p)?);
                let inner = Arc::new(FunctionSpace::new(lvl.inner.clone(), p)?);
                FieldLevel::new(outer, inner, &lvl.cell_map, params, solver, h)
            })
            .collect::<Result<Vec<_>>>()?;
        let couplers = levels
            .windows(2)
            .map(|w| Coupler::new(mode, w[1].solver.space().clone(), w[0].solver.space().clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { levels, couplers })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level_h(&self, level: usize) -> f64 {
        self.levels[level - 1].h
    }

    /// Inner space of a level.
    pub fn inner_space(&self, level: usize) -> &Arc<FunctionSpace> {
        &self.levels[level - 1].inner
    }

    /// Outer Matérn solver of a level.
    pub fn solver(&self, level: usize) -> &MaternSolver {
        &self.levels[level - 1].solver
    }

    fn check(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.levels.len() {
            return Err(Error::InvalidInput(format!("level {level} outside 1..={}", self.levels.len())));
        }
        Ok(())
    }

    /// Unrestricted sample on the outer mesh of `level`.
    pub fn outer_field(&self, level: usize, rng: &StreamRng) -> Result<Field> {
        self.check(level)?;
        let lvl = &self.levels[level - 1];
        lvl.solver.sample(&lvl.noise.sample(rng).values)
    }

    /// Uncoupled field on the inner mesh of `level`, with its cost.
    pub fn fine_field(&self, level: usize, rng: &StreamRng) -> Result<(Field, f64)> {
        let u = self.outer_field(level, rng)?;
        let lvl = &self.levels[level - 1];
        Ok((lvl.restrict(&u), lvl.cost()))
    }

    /// Coupled fields on the inner meshes of `level` and `level - 1`.
    pub fn coupled_fields(&self, level: usize, rng: &StreamRng) -> Result<(Field, Field, f64)> {
        self.check(level)?;
        if level < 2 {
            return Err(Error::InvalidInput("coupled fields need level >= 2".into()));
        }
        let (fine, coarse) = (&self.levels[level - 1], &self.levels[level - 2]);
        let noise = self.couplers[level - 2].sample(rng);
        let uf = fine.solver.sample(&noise.fine.values)?;
        let uc = coarse.solver.sample(&noise.coarse.values)?;
        Ok((fine.restrict(&uf), coarse.restrict(&uc), fine.cost() + coarse.cost()))
    }
}

/// `P_l = ||u_l||^2` over the inner domain.
#[derive(Debug)]
pub struct MaternNormSampler {
    fields: MaternLevels,
}

impl MaternNormSampler {
    pub fn new(fields: MaternLevels) -> Self {
        Self { fields }
    }

    pub fn fields(&self) -> &MaternLevels {
        &self.fields
    }
}

/// Matérn norm sampler on an h-hierarchy.
pub fn matern_norm_sampler(
    hierarchy: &MeshHierarchy,
    params: MaternParams,
    degree: usize,
    mode: CouplingMode,
    solver: SolverConfig,
) -> Result<MaternNormSampler> {
    Ok(MaternNormSampler::new(MaternLevels::from_hierarchy(hierarchy, params, degree, mode, solver)?))
}

impl LevelSampler for MaternNormSampler {
    fn num_levels(&self) -> usize {
        self.fields.num_levels()
    }

    fn sample(&self, level: usize, rng: &StreamRng) -> Result<LevelSample> {
        if level == 1 {
            return self.sample_fine(level, rng);
        }
        let (uf, uc, cost) = self.fields.coupled_fields(level, rng)?;
        Ok(LevelSample {
            fine: l2_norm_sq(&uf),
            coarse: l2_norm_sq(&uc),
            cost,
        })
    }

    fn sample_fine(&self, level: usize, rng: &StreamRng) -> Result<LevelSample> {
        let (u, cost) = self.fields.fine_field(level, rng)?;
        Ok(LevelSample {
            fine: l2_norm_sq(&u),
            coarse: 0.0,
            cost,
        })
    }

    fn level_h(&self, level: usize) -> f64 {
        self.fields.level_h(level)
    }
}

/// `P_l = ||q_l||^2` over the inner domain, with `q_l` the Darcy solution
/// for the coefficient `exp(mu + sigma u_l)`.
#[derive(Debug)]
pub struct DarcySampler {
    fields: MaternLevels,
    darcy: Vec<DarcySolver>,
    lognormal: Lognormal,
}

impl DarcySampler {
    /// `darcy_degrees[l - 1]` is the degree of the Darcy space on level `l`.
    pub fn new(fields: MaternLevels, darcy_degrees: &[usize], lognormal: Lognormal, solver: SolverConfig) -> Result<Self> {
        if darcy_degrees.len() != fields.num_levels() {
            return Err(Error::Dimension(format!(
                "{} Darcy degrees for {} levels",
                darcy_degrees.len(),
                fields.num_levels()
            )));
        }
        let darcy = darcy_degrees
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let mesh = fields.inner_space(i + 1).mesh().clone();
                DarcySolver::new(Arc::new(FunctionSpace::new(mesh, p)?), solver)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            fields,
            darcy,
            lognormal,
        })
    }

    pub fn fields(&self) -> &MaternLevels {
        &self.fields
    }

    pub fn lognormal(&self) -> Lognormal {
        self.lognormal
    }

    /// `||q||^2` and the Darcy cost for a unit-variance field on `level`.
    fn functional(&self, level: usize, u_hat: &Field) -> Result<(f64, f64)> {
        let d = &self.darcy[level - 1];
        let q = d.solve(&self.lognormal.apply(u_hat))?;
        Ok((l2_norm_sq(&q), d.space().num_dofs() as f64))
    }
}

/// Darcy sampler on an h-hierarchy with a fixed Darcy degree.
pub fn darcy_sampler(
    hierarchy: &MeshHierarchy,
    params: MaternParams,
    degree: usize,
    darcy_degree: usize,
    mode: CouplingMode,
    solver: SolverConfig,
) -> Result<DarcySampler> {
    let fields = MaternLevels::from_hierarchy(hierarchy, params, degree, mode, solver)?;
    let degrees = vec![darcy_degree; fields.num_levels()];
    DarcySampler::new(fields, &degrees, Lognormal::darcy(), solver)
}

/// Darcy sampler whose levels raise the degree of both the field and the
/// Darcy solution on a single mesh pair.
pub fn p_refinement_sampler(
    level: &HierarchyLevel,
    degrees: &[usize],
    params: MaternParams,
    solver: SolverConfig,
) -> Result<DarcySampler> {
    let fields = MaternLevels::p_refinement(level, degrees, params, solver)?;
    DarcySampler::new(fields, degrees, Lognormal::darcy(), solver)
}

impl LevelSampler for DarcySampler {
    fn num_levels(&self) -> usize {
        self.fields.num_levels()
    }

    fn sample(&self, level: usize, rng: &StreamRng) -> Result<LevelSample> {
        if level == 1 {
            return self.sample_fine(level, rng);
        }
        let (uf, uc, cost) = self.fields.coupled_fields(level, rng)?;
        let (pf, cf) = self.functional(level, &uf)?;
        let (pc, cc) = self.functional(level - 1, &uc)?;
        Ok(LevelSample {
            fine: pf,
            coarse: pc,
            cost: cost + cf + cc,
        })
    }

    fn sample_fine(&self, level: usize, rng: &StreamRng) -> Result<LevelSample> {
        let (u, cost) = self.fields.fine_field(level, rng)?;
        let (p, c) = self.functional(level, &u)?;
        Ok(LevelSample {
            fine: p,
            coarse: 0.0,
            cost: cost + c,
        })
    }

    fn level_h(&self, level: usize) -> f64 {
        self.fields.level_h(level)
    }
}
