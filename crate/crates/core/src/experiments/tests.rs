use std::sync::Arc;

use super::*;
use crate::fem::{Field, FunctionSpace};
use crate::mesh::{HierarchyConfig, MeshHierarchy};
use crate::spde::{MaternParams, SolverConfig};
use crate::whitenoise::CouplingMode;

fn tight() -> SolverConfig {
    SolverConfig {
        tol: 1e-13,
        ..Default::default()
    }
}

fn small_hierarchy(levels: usize) -> MeshHierarchy {
    MeshHierarchy::build(&HierarchyConfig {
        levels,
        ..Default::default()
    })
    .unwrap()
}

/// `||q||^2` for `-Laplace q = 1` on a unit square with zero boundary data,
/// from the sine series of the unit load.
fn poisson_norm_sq_series() -> f64 {
    let pi4 = std::f64::consts::PI.powi(4);
    let mut s = 0.0;
    for m in (1..400).step_by(2) {
        for n in (1..400).step_by(2) {
            let (m, n) = (m as f64, n as f64);
            let c = 16.0 / (pi4 * m * n * (m * m + n * n));
            s += c * c;
        }
    }
    s / 4.0
}

#[test]
fn lognormal_calibration() {
    let ln = Lognormal::darcy();
    assert!((ln.mean() - 1.0).abs() < 1e-14);
    assert!((ln.std() - 0.2).abs() < 1e-14);
    assert!((ln.sigma * ln.sigma - 1.04f64.ln()).abs() < 1e-15);
    let m = Lognormal::from_moments(1.0, 0.2).unwrap();
    assert!((m.mu - ln.mu).abs() < 1e-15 && (m.sigma - ln.sigma).abs() < 1e-15);
    let other = Lognormal::from_moments(3.0, 0.5).unwrap();
    assert!((other.mean() - 3.0).abs() < 1e-13 && (other.std() - 0.5).abs() < 1e-13);
    assert!(Lognormal::from_moments(0.0, 1.0).is_err());
}

#[test]
fn darcy_unit_coefficient_matches_series() {
    let h = small_hierarchy(4);
    let space = Arc::new(FunctionSpace::new(h.level(4).inner.clone(), 2).unwrap());
    let zero = Field::zeros(Arc::new(FunctionSpace::new(h.level(4).inner.clone(), 1).unwrap()));
    let q = solve_darcy(&space, &zero, &tight()).unwrap();
    let exact = poisson_norm_sq_series();
    assert!((exact - 1.7025e-3).abs() < 1e-7, "series {exact}");
    let got = q.l2_norm_sq();
    assert!((got - exact).abs() < 1e-4 * exact, "{got} vs {exact}");
    for d in 0..space.num_dofs() {
        if space.is_boundary_dof(d) {
            assert_eq!(q.values()[d], 0.0);
        }
    }
}

#[test]
fn darcy_scales_inversely_with_coefficient() {
    let h = small_hierarchy(3);
    let inner = h.level(3).inner.clone();
    let space = Arc::new(FunctionSpace::new(inner.clone(), 1).unwrap());
    let coeff_space = Arc::new(FunctionSpace::new(inner, 1).unwrap());
    let q1 = solve_darcy(&space, &Field::zeros(coeff_space.clone()), &tight()).unwrap();
    let q2 = solve_darcy(&space, &Field::constant(coeff_space, 2f64.ln()), &tight()).unwrap();
    for (a, b) in q1.values().iter().zip(q2.values()) {
        assert!((a - 2.0 * b).abs() < 1e-12, "{a} vs 2 * {b}");
    }
}

#[test]
fn darcy_rejects_foreign_coefficient() {
    let h = small_hierarchy(2);
    let space = Arc::new(FunctionSpace::new(h.level(2).inner.clone(), 1).unwrap());
    let other = Arc::new(FunctionSpace::new(h.level(1).inner.clone(), 1).unwrap());
    assert!(solve_darcy(&space, &Field::zeros(other), &tight()).is_err());
}

#[test]
fn restriction_preserves_values() {
    let h = small_hierarchy(2);
    let params = MaternParams::new(1.0, 1.0, 0.2).unwrap();
    let fields = MaternLevels::from_hierarchy(&h, params, 2, CouplingMode::Supermesh, tight()).unwrap();
    let rng = StreamRng::new(3);
    let u = fields.outer_field(2, &rng).unwrap();
    let (g, cost) = fields.fine_field(2, &rng).unwrap();
    assert_eq!(cost, fields.solver(2).space().num_dofs() as f64);
    let gs = g.space();
    for (d, &x) in gs.dof_coords().iter().enumerate() {
        let v = u.eval(x).unwrap();
        assert!((v - g.values()[d]).abs() < 1e-12);
    }
    assert!((fields.level_h(2) - fields.level_h(1) / 2.0).abs() < 1e-15);
}

#[test]
fn identical_degrees_give_zero_difference() {
    let h = small_hierarchy(1);
    let params = MaternParams::new(1.0, 1.0, 0.2).unwrap();
    let s = p_refinement_sampler(h.level(1), &[2, 2], params, tight()).unwrap();
    for i in 0..5 {
        let x = s.sample(2, &StreamRng::new(i)).unwrap();
        assert_eq!(x.diff(), 0.0);
    }
    assert!(p_refinement_sampler(h.level(1), &[3, 4], params, tight()).is_err());
}

#[test]
fn samplers_are_deterministic_and_coupled() {
    let h = small_hierarchy(3);
    let params = MaternParams::new(1.0, 1.0, 0.2).unwrap();
    let s = darcy_sampler(&h, params, 1, 1, CouplingMode::Supermesh, SolverConfig::default()).unwrap();
    let rng = StreamRng::new(11);
    let a = s.sample(3, &rng).unwrap();
    let b = s.sample(3, &rng).unwrap();
    assert_eq!(a, b);
    assert!(a.fine > 0.0 && a.coarse > 0.0);
    assert_eq!(s.sample(1, &rng).unwrap().coarse, 0.0);
    assert!(s.sample(4, &rng).is_err());
    // the supermesh coupling correlates levels far more than independent draws
    let indep = darcy_sampler(&h, params, 1, 1, CouplingMode::Independent, SolverConfig::default()).unwrap();
    let var = |s: &DarcySampler| -> f64 {
        let d: Vec<f64> = (0..40).map(|i| s.sample(3, &StreamRng::new(100 + i)).unwrap().diff()).collect();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        d.iter().map(|x| (x - m).powi(2)).sum::<f64>()
    };
    let (coupled, independent) = (var(&s), var(&indep));
    assert!(coupled < 0.1 * independent, "{coupled} vs {independent}");
}

#[test]
fn matern_norm_mean_is_near_unit_variance() {
    let h = small_hierarchy(4);
    let params = MaternParams::new(1.0, 1.0, 0.2).unwrap();
    let s = matern_norm_sampler(&h, params, 1, CouplingMode::Supermesh, SolverConfig::default()).unwrap();
    let n = 200;
    let mean: f64 = (0..n)
        .map(|i| s.sample_fine(4, &StreamRng::new(i)).unwrap().fine)
        .sum::<f64>()
        / n as f64;
    // E||u||^2 over a unit-area inner domain is sigma^2 up to discretization
    assert!((0.75..1.1).contains(&mean), "{mean}");
}

fn tiny(exp: Experiment) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        n: 20,
        epsilon: vec![2e-4],
        initial_n: 20,
        initial_levels: 2,
        mc_pilot: 10,
        ..Default::default()
    };
    cfg.levels = Some(match exp {
        Experiment::Hierarchy | Experiment::Mlmc | Experiment::McCompare => LevelRange::new(1, 3),
        Experiment::Covariance => LevelRange::new(3, 3),
        Experiment::PRefine => LevelRange::new(1, 2),
        _ => LevelRange::new(1, 3),
    });
    if exp == Experiment::Telescope {
        cfg.levels = Some(LevelRange::new(2, 3));
    }
    cfg
}

#[test]
fn every_experiment_runs_and_is_thread_independent() {
    for exp in Experiment::ALL {
        let mut cfg = tiny(exp);
        cfg.threads = Some(1);
        let a = run(exp, &cfg).unwrap_or_else(|e| panic!("{exp}: {e}"));
        cfg.threads = Some(3);
        let b = run(exp, &cfg).unwrap();
        assert!(!a.files.is_empty(), "{exp}");
        assert_eq!(a.files, b.files, "{exp}");
        assert!(!a.report.is_empty());
    }
}

#[test]
fn execute_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(Experiment::Hierarchy);
    cfg.out = dir.path().join("run");
    let out = execute(Experiment::Hierarchy, &cfg).unwrap();
    let csv = std::fs::read_to_string(cfg.out.join("hierarchy.csv")).unwrap();
    assert!(csv.starts_with("level,h,n_cells"));
    assert_eq!(csv.lines().count(), 4);
    assert_eq!(out.get("hierarchy.csv").unwrap(), csv.as_bytes());
    let manifest = std::fs::read_to_string(cfg.out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 1") && manifest.contains("experiment = hierarchy"));
    assert!(cfg.out.join("outer_3.mesh").exists());
}

#[test]
fn invalid_config_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(Experiment::Rates);
    cfg.out = dir.path().join("run");
    cfg.nu = 2.0;
    assert!(matches!(execute(Experiment::Rates, &cfg), Err(Error::Config(_))));
    assert!(!cfg.out.exists());
}
