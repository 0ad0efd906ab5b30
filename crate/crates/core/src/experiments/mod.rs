//! Experiment suite: level samplers for the Matérn norm and lognormal Darcy
//! functionals, plus runners that produce CSV tables and a run manifest.
//!
//! Runners compute everything in memory and only touch the output directory
//! once the run has succeeded, so a failed run leaves no partial outputs.

mod config;
mod samplers;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::io::write_mesh;
use crate::mesh::{radius_ratios, HierarchyConfig, MeshHierarchy};
use crate::mlmc::{
    estimate_rates, level_statistics, mlmc_run, standard_mc_run, telescoping_check, write_levels_csv, LevelSampler,
    LevelSummary, MlmcConfig, MlmcResult, Rates, SeedSchedule,
};
use crate::rng::StreamRng;
use crate::spde::{write_covariance_csv, CovarianceEstimate, MaternSolver};
use crate::supermesh::build_supermesh;
use crate::whitenoise::IndependentSampler;

pub use config::{Experiment, ExperimentConfig, LevelRange, Qoi, KEYS};
pub use samplers::{
    darcy_sampler, matern_norm_sampler, p_refinement_sampler, solve_darcy, DarcySampler, DarcySolver, Lognormal,
    MaternLevels, MaternNormSampler,
};

/// Stream purpose for covariance samples, disjoint from the MLMC purposes.
const COVARIANCE_PURPOSE: u64 = 7;

/// Files produced by a run (name, contents) and human-readable report lines.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub files: Vec<(String, Vec<u8>)>,
    pub report: Vec<String>,
}

impl RunOutput {
    fn file(&mut self, name: impl Into<String>, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.files.push((name.into(), buf));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }
}

/// Validates, runs and writes outputs plus `manifest.txt` to `config.out`.
pub fn execute(exp: Experiment, config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate(exp)?;
    let start = Instant::now();
    let out = run(exp, config)?;
    write_outputs(&out, &config.out)?;
    let manifest = manifest(exp, config, start.elapsed().as_secs_f64(), &out);
    std::fs::write(config.out.join("manifest.txt"), manifest)?;
    Ok(out)
}

/// Runs an experiment in memory, on a dedicated pool when `threads` is set.
pub fn run(exp: Experiment, config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate(exp)?;
    match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?
            .install(|| dispatch(exp, config)),
        None => dispatch(exp, config),
    }
}

fn dispatch(exp: Experiment, config: &ExperimentConfig) -> Result<RunOutput> {
    match exp {
        Experiment::Hierarchy => run_hierarchy(config),
        Experiment::MaternConvergence | Experiment::Rates => run_rates(exp, config),
        Experiment::Covariance => run_covariance(config),
        Experiment::Telescope => run_telescope(config),
        Experiment::Mlmc | Experiment::McCompare => run_mlmc(exp, config),
        Experiment::PRefine => run_p_refine(config),
    }
}

pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in &out.files {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

fn manifest(exp: Experiment, config: &ExperimentConfig, seconds: f64, out: &RunOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "package = {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    for (k, v) in config.describe(exp) {
        let _ = writeln!(s, "{k} = {v}");
    }
    let threads = config.threads.unwrap_or_else(rayon::current_num_threads);
    let _ = writeln!(s, "threads = {threads}");
    let _ = writeln!(s, "wall_seconds = {seconds:.3}");
    let names: Vec<&str> = out.files.iter().map(|(n, _)| n.as_str()).collect();
    let _ = writeln!(s, "outputs = {}", names.join(","));
    s
}

fn hierarchy(config: &ExperimentConfig, levels: usize) -> Result<MeshHierarchy> {
    MeshHierarchy::build(&HierarchyConfig {
        base_nx: config.base_nx,
        levels,
        amplitude: config.amplitude,
        seed: config.mesh_seed,
        ..Default::default()
    })
}

/// Level sampler for the configured quantity on an h-hierarchy.
pub fn build_sampler(exp: Experiment, config: &ExperimentConfig, levels: usize) -> Result<Box<dyn LevelSampler>> {
    let h = hierarchy(config, levels)?;
    let params = config.matern()?;
    let degree = config.field_degree()?;
    Ok(match config.qoi_for(exp) {
        Qoi::MaternNorm => Box::new(matern_norm_sampler(&h, params, degree, config.coupling, config.solver())?),
        Qoi::Darcy => Box::new(darcy_sampler(
            &h,
            params,
            degree,
            config.darcy_degree,
            config.coupling,
            config.solver(),
        )?),
    })
}

fn run_hierarchy(config: &ExperimentConfig) -> Result<RunOutput> {
    let levels = config.levels_for(Experiment::Hierarchy);
    let h = hierarchy(config, levels.max)?;
    let mut out = RunOutput::default();
    let mut csv = String::from("level,h,n_cells,n_inner_cells,rr_min,rr_max,n_supermesh,supermesh_ratio,supermesh_area\n");
    out.report
        .push(format!("{:>5} {:>10} {:>8} {:>8} {:>15} {:>8}", "level", "h", "cells", "inner", "radius ratio", "nS/n"));
    for l in levels.min..=levels.max {
        let lvl = h.level(l);
        let (rr_min, rr_max) = radius_ratios(&lvl.outer);
        let (ns, ratio, area) = if l >= 2 {
            let sm = build_supermesh(&lvl.outer, &h.level(l - 1).outer)?;
            let ns = sm.num_cells();
            (ns.to_string(), format!("{:e}", ns as f64 / lvl.outer.num_cells() as f64), format!("{:e}", sm.total_area()))
        } else {
            ("".into(), "".into(), "".into())
        };
        let _ = writeln!(
            csv,
            "{l},{:e},{},{},{:e},{:e},{ns},{ratio},{area}",
            lvl.h,
            lvl.outer.num_cells(),
            lvl.inner.num_cells(),
            rr_min,
            rr_max
        );
        let ratio_txt = ratio.parse::<f64>().map_or("-".to_string(), |r| format!("{r:.3}"));
        out.report.push(format!(
            "{l:>5} {:>10.4e} {:>8} {:>8} {:>15} {:>8}",
            lvl.h,
            lvl.outer.num_cells(),
            lvl.inner.num_cells(),
            format!("[{rr_min:.3}, {rr_max:.3}]"),
            ratio_txt
        ));
        out.file(format!("outer_{l}.mesh"), |w| write_mesh(&lvl.outer, w))?;
        out.file(format!("inner_{l}.mesh"), |w| write_mesh(&lvl.inner, w))?;
    }
    out.files.insert(0, ("hierarchy.csv".into(), csv.into_bytes()));
    Ok(out)
}

fn rates_text(r: &Rates) -> String {
    let (a, b, g) = r.slopes();
    format!(
        "alpha = {a}\nalpha_stderr = {}\nbeta = {b}\nbeta_stderr = {}\ngamma = {g}\ngamma_stderr = {}\n",
        r.alpha.slope_stderr, r.beta.slope_stderr, r.gamma.slope_stderr
    )
}

fn level_lines(levels: &[LevelSummary]) -> Vec<String> {
    let mut lines = vec![format!(
        "{:>5} {:>7} {:>12} {:>12} {:>12} {:>12}",
        "level", "N", "mean_diff", "var_diff", "mean_fine", "cost"
    )];
    lines.extend(levels.iter().map(|l| {
        format!(
            "{:>5} {:>7} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            l.level, l.n, l.mean_diff, l.var_diff, l.mean_fine, l.cost
        )
    }));
    lines
}

fn run_rates(exp: Experiment, config: &ExperimentConfig) -> Result<RunOutput> {
    let levels = config.levels_for(exp);
    let sampler = build_sampler(exp, config, levels.max)?;
    let rates = estimate_rates(sampler.as_ref(), &levels.to_vec(), config.n, &SeedSchedule::new(config.seed))?;
    let mut out = RunOutput::default();
    out.file("levels.csv", |w| write_levels_csv(w, &rates.levels))?;
    out.file("rates.txt", |w| Ok(w.extend_from_slice(rates_text(&rates).as_bytes())))?;
    out.report = level_lines(&rates.levels);
    let (a, b, g) = rates.slopes();
    out.report.push(format!(
        "alpha = {a:.3} (+/- {:.3}), beta = {b:.3} (+/- {:.3}), gamma = {g:.3} (+/- {:.3})",
        rates.alpha.slope_stderr, rates.beta.slope_stderr, rates.gamma.slope_stderr
    ));
    Ok(out)
}

/// Empirical covariance between the anchor and points at evenly spaced radii
/// along the x-axis direction, from `n` independent samples on the finest
/// configured level.
pub fn covariance_curve(config: &ExperimentConfig) -> Result<Vec<CovarianceEstimate>> {
    let level = config.levels_for(Experiment::Covariance).max;
    let h = hierarchy(config, level)?;
    let space = std::sync::Arc::new(crate::fem::FunctionSpace::new(h.level(level).outer.clone(), config.field_degree()?)?);
    let solver = MaternSolver::new(space.clone(), config.matern()?, config.solver())?;
    let noise = IndependentSampler::new(space.clone())?;
    let x0 = config.anchor;
    let steps = config.probes.max(2) - 1;
    let radii: Vec<f64> = (0..config.probes).map(|i| config.r_max * i as f64 / steps as f64).collect();
    let points: Vec<_> = std::iter::once(x0)
        .chain(radii.iter().map(|&r| [x0[0] + r, x0[1]]))
        .map(|p| space.locate(p).ok_or(Error::OutsideMesh { x: p[0], y: p[1] }))
        .collect::<Result<_>>()?;
    let root = StreamRng::new(config.seed).substream(COVARIANCE_PURPOSE);
    let values: Vec<Vec<f64>> = (0..config.n)
        .into_par_iter()
        .map(|i| {
            let u = solver.sample(&noise.sample(&root.substream(i as u64)).values)?;
            Ok(points.iter().map(|&(c, l)| space.eval_in_cell(u.values(), c, l)).collect())
        })
        .collect::<Result<_>>()?;
    let column = |k: usize| -> Vec<f64> { values.iter().map(|v| v[k]).collect() };
    let a = column(0);
    Ok(radii
        .iter()
        .enumerate()
        .map(|(k, &r)| CovarianceEstimate::from_values(r, &a, &column(k + 1)))
        .collect())
}

fn run_covariance(config: &ExperimentConfig) -> Result<RunOutput> {
    let curve = covariance_curve(config)?;
    let params = config.matern()?;
    let mut out = RunOutput::default();
    out.file("covariance.csv", |w| write_covariance_csv(w, &curve, &params))?;
    out.report.push(format!("{:>8} {:>10} {:>10} {:>10}", "r", "empirical", "exact", "3 stderr"));
    for c in &curve {
        out.report.push(format!(
            "{:>8.4} {:>10.4} {:>10.4} {:>10.4}",
            c.r,
            c.value,
            crate::spde::matern_covariance(c.r, &params)?,
            3.0 * c.stderr
        ));
    }
    Ok(out)
}

fn run_telescope(config: &ExperimentConfig) -> Result<RunOutput> {
    let levels = config.levels_for(Experiment::Telescope);
    let sampler = build_sampler(Experiment::Telescope, config, levels.max)?;
    let mut csv = String::from("level,a,b,c,ci_a,ci_b,ci_c,T\n");
    let mut out = RunOutput::default();
    out.report.push(format!("{:>5} {:>8}", "level", "T"));
    for l in levels.min..=levels.max {
        let t = telescoping_check(sampler.as_ref(), l, config.n, config.seed)?;
        let _ = writeln!(
            csv,
            "{l},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            t.a,
            t.b,
            t.c,
            3.0 * t.var_a.sqrt(),
            3.0 * t.var_b.sqrt(),
            3.0 * t.var_c.sqrt(),
            t.t
        );
        out.report.push(format!("{l:>5} {:>8.4}", t.t));
    }
    out.files.push(("telescope.csv".into(), csv.into_bytes()));
    Ok(out)
}

/// MLMC settings for one tolerance.
pub fn mlmc_config(config: &ExperimentConfig, epsilon: f64) -> MlmcConfig {
    MlmcConfig {
        epsilon,
        initial_levels: config.initial_levels,
        initial_n: config.initial_n,
        max_levels: config.max_levels,
        start_level: config.start_level,
        seed: config.seed,
        ..Default::default()
    }
}

fn run_mlmc(exp: Experiment, config: &ExperimentConfig) -> Result<RunOutput> {
    let levels = config.levels_for(exp);
    let sampler = build_sampler(exp, config, levels.max)?;
    let mut out = RunOutput::default();
    let mut sweep = String::from("epsilon,levels,finest_level,estimate,ci,bias_estimate,total_cost,eps2_cost,alpha,beta,gamma\n");
    let mut compare = String::from("epsilon,mlmc_cost,mc_level,mc_n,mc_cost,cost_ratio,mlmc_estimate,mlmc_ci,mc_estimate,mc_ci\n");
    let mut results: Vec<MlmcResult> = Vec::new();
    for (i, &eps) in config.epsilon.iter().enumerate() {
        let r = mlmc_run(sampler.as_ref(), &mlmc_config(config, eps))?;
        let finest = r.levels.last().map_or(0, |l| l.level);
        let _ = writeln!(
            sweep,
            "{eps:e},{},{finest},{:e},{:e},{:e},{:e},{:e},{},{},{}",
            r.levels.len(),
            r.estimate,
            3.0 * r.variance.sqrt(),
            r.bias_estimate,
            r.total_cost,
            eps * eps * r.total_cost,
            r.alpha,
            r.beta,
            r.gamma
        );
        out.file(format!("mlmc_levels_{}.csv", i + 1), |w| r.write_csv(w))?;
        out.report.push(format!(
            "eps = {eps:e}: estimate {:.6e} +/- {:.2e}, {} levels, eps^2 cost {:.4e}",
            r.estimate,
            3.0 * r.variance.sqrt(),
            r.levels.len(),
            eps * eps * r.total_cost
        ));
        if exp == Experiment::McCompare {
            let mc = standard_mc_run(sampler.as_ref(), eps, finest, config.mc_pilot, config.seed)?;
            let ratio = mc.total_cost / r.total_cost;
            let _ = writeln!(
                compare,
                "{eps:e},{:e},{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.total_cost,
                mc.level,
                mc.n,
                mc.total_cost,
                ratio,
                r.estimate,
                3.0 * r.variance.sqrt(),
                mc.estimate,
                3.0 * mc.variance.sqrt()
            );
            out.report.push(format!(
                "    standard MC on level {}: N = {}, cost {:.4e}, MC/MLMC cost ratio {ratio:.2}",
                mc.level, mc.n, mc.total_cost
            ));
        }
        results.push(r);
    }
    out.files.insert(0, ("mlmc.csv".into(), sweep.into_bytes()));
    if exp == Experiment::McCompare {
        out.files.insert(1, ("mc_compare.csv".into(), compare.into_bytes()));
    }
    Ok(out)
}

fn run_p_refine(config: &ExperimentConfig) -> Result<RunOutput> {
    let degrees = config.levels_for(Experiment::PRefine).to_vec();
    let h = hierarchy(config, 1)?;
    let sampler = p_refinement_sampler(h.level(1), &degrees, config.matern()?, config.solver())?;
    let idx: Vec<usize> = (1..=degrees.len()).collect();
    let stats = level_statistics(&sampler, &idx, config.n, &SeedSchedule::new(config.seed))?;
    let summaries: Vec<LevelSummary> = stats
        .iter()
        .zip(&degrees)
        .map(|(s, &p)| LevelSummary {
            level: p,
            n: s.n,
            mean_diff: s.mean_diff(),
            var_diff: s.var_diff(),
            mean_fine: s.mean_fine(),
            var_fine: s.var_fine(),
            cost: s.avg_cost(),
        })
        .collect();
    let mut out = RunOutput::default();
    out.file("p_refine.csv", |w| write_levels_csv(w, &summaries))?;
    out.report = level_lines(&summaries);
    out.report[0] = out.report[0].replacen("level", "    p", 1);
    Ok(out)
}

#[cfg(test)]
mod tests;
