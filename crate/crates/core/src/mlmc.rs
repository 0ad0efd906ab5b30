//! Multilevel Monte Carlo: adaptive driver, rate fits, telescoping check
//! and a single-level baseline.
//!
//! Samples are drawn in parallel but every sample's randomness is fixed by
//! `(purpose, level, index)` and results are reduced in index order, so
//! outputs do not depend on the thread count.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// One evaluation of a level: `P_l` and `P_{l-1}` from a shared sample
/// point, with the work spent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSample {
    pub fine: f64,
    pub coarse: f64,
    pub cost: f64,
}

impl LevelSample {
    pub fn diff(&self) -> f64 {
        self.fine - self.coarse
    }
}

pub trait LevelSampler: Sync {
    /// Number of levels available (levels are numbered from 1).
    fn num_levels(&self) -> usize;

    /// Coupled pair `(P_l, P_{l-1})`; level 1 returns a zero coarse value.
    fn sample(&self, level: usize, rng: &StreamRng) -> Result<LevelSample>;

    /// `P_l` alone (coarse value 0).
    fn sample_fine(&self, level: usize, rng: &StreamRng) -> Result<LevelSample> {
        let s = self.sample(level, rng)?;
        Ok(LevelSample {
            fine: s.fine,
            coarse: 0.0,
            cost: s.cost,
        })
    }

    /// Mesh size of a level, used as the regression variable for rates.
    fn level_h(&self, level: usize) -> f64 {
        0.5f64.powi(level as i32)
    }
}

/// Random streams per `(purpose, level, index)`. A shared schedule ignores
/// the level, so every level sees the same sample points.
#[derive(Debug, Clone, Copy)]
pub struct SeedSchedule {
    root: StreamRng,
    shared: bool,
}

pub mod purpose {
    pub const MLMC: u64 = 1;
    pub const RATES: u64 = 2;
    pub const TELESCOPE_DIFF: u64 = 3;
    pub const TELESCOPE_FINE: u64 = 4;
    pub const TELESCOPE_COARSE: u64 = 5;
    pub const MC: u64 = 6;
}

impl SeedSchedule {
    pub fn new(seed: u64) -> Self {
        Self {
            root: StreamRng::new(seed),
            shared: false,
        }
    }

    pub fn shared(seed: u64) -> Self {
        Self {
            root: StreamRng::new(seed),
            shared: true,
        }
    }

    pub fn rng(&self, purpose: u64, level: usize, index: usize) -> StreamRng {
        let level = if self.shared { 0 } else { level as u64 };
        self.root.substream(purpose).substream(level).substream(index as u64)
    }
}

/// Running moments (count, mean, sum of squared deviations) for the level
/// differences and the fine values, plus total cost.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LevelStats {
    pub n: usize,
    mean_diff: f64,
    m2_diff: f64,
    mean_fine: f64,
    m2_fine: f64,
    pub cost: f64,
}

impl LevelStats {
    pub fn push(&mut self, s: &LevelSample) {
        self.n += 1;
        let n = self.n as f64;
        let d = s.diff() - self.mean_diff;
        self.mean_diff += d / n;
        self.m2_diff += d * (s.diff() - self.mean_diff);
        let f = s.fine - self.mean_fine;
        self.mean_fine += f / n;
        self.m2_fine += f * (s.fine - self.mean_fine);
        self.cost += s.cost;
    }

    pub fn mean_diff(&self) -> f64 {
        self.mean_diff
    }

    pub fn mean_fine(&self) -> f64 {
        self.mean_fine
    }

    /// Unbiased sample variance of the differences.
    pub fn var_diff(&self) -> f64 {
        if self.n > 1 {
            self.m2_diff / (self.n - 1) as f64
        } else {
            0.0
        }
    }

    pub fn var_fine(&self) -> f64 {
        if self.n > 1 {
            self.m2_fine / (self.n - 1) as f64
        } else {
            0.0
        }
    }

    /// Average cost per sample.
    pub fn avg_cost(&self) -> f64 {
        if self.n > 0 {
            self.cost / self.n as f64
        } else {
            0.0
        }
    }
}

/// Draws samples `start..start + count` of one level in parallel, returned
/// in index order. `first` selects the uncoupled first-level evaluation.
fn draw(
    sampler: &dyn LevelSampler,
    schedule: &SeedSchedule,
    purpose: u64,
    level: usize,
    first: bool,
    start: usize,
    count: usize,
) -> Result<Vec<LevelSample>> {
    (start..start + count)
        .into_par_iter()
        .map(|i| {
            let rng = schedule.rng(purpose, level, i);
            let s = if first {
                sampler.sample_fine(level, &rng)?
            } else {
                sampler.sample(level, &rng)?
            };
            if !(s.fine.is_finite() && s.coarse.is_finite() && s.cost.is_finite()) {
                return Err(Error::NonFinite { level });
            }
            Ok(s)
        })
        .collect()
}

fn check_level(sampler: &dyn LevelSampler, level: usize) -> Result<()> {
    if level == 0 || level > sampler.num_levels() {
        return Err(Error::InvalidInput(format!(
            "level {level} outside 1..={}",
            sampler.num_levels()
        )));
    }
    Ok(())
}

/// Least-squares line `y = a + b x` with the standard error of `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::DegenerateFit(format!("need at least two points, got {n}")));
    }
    if y.iter().chain(x).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("non-finite data (zero mean or variance?)".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("all abscissae coincide".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit {
        intercept,
        slope,
        slope_stderr,
    })
}

/// `N_l = ceil(2 eps^-2 sqrt(V_l / C_l) sum_k sqrt(V_k C_k))`.
pub fn optimal_allocation(var: &[f64], cost: &[f64], epsilon: f64) -> Vec<usize> {
    let total: f64 = var.iter().zip(cost).map(|(v, c)| (v * c).sqrt()).sum();
    var.iter()
        .zip(cost)
        .map(|(v, c)| (2.0 / (epsilon * epsilon) * (v / c).sqrt() * total).ceil() as usize)
        .collect()
}

/// `T = |a - b + c| / (3 (sqrt V_a + sqrt V_b + sqrt V_c))`, zero when the
/// numerator vanishes.
pub fn telescoping_ratio(a: f64, b: f64, c: f64, va: f64, vb: f64, vc: f64) -> f64 {
    let num = (a - b + c).abs();
    if num < 1e-14 {
        return 0.0;
    }
    num / (3.0 * (va.sqrt() + vb.sqrt() + vc.sqrt()))
}

#[derive(Debug, Clone)]
pub struct MlmcConfig {
    pub epsilon: f64,
    pub initial_levels: usize,
    pub initial_n: usize,
    /// Minimum samples taken on a newly added level.
    pub min_new_n: usize,
    /// Cap on the number of MLMC levels.
    pub max_levels: usize,
    /// Sampler level used as MLMC level 1 (1 keeps every mesh; 2 drops the
    /// coarsest).
    pub start_level: usize,
    /// Weak rate used while fewer than two differences are available.
    pub default_alpha: f64,
    pub default_beta: f64,
    pub default_gamma: f64,
    pub seed: u64,
}

impl Default for MlmcConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            initial_levels: 3,
            initial_n: 100,
            min_new_n: 2,
            max_levels: 10,
            start_level: 1,
            default_alpha: 2.0,
            default_beta: 4.0,
            default_gamma: 2.0,
            seed: 1,
        }
    }
}

impl MlmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.initial_levels == 0 || self.initial_n < 2 || self.start_level == 0 {
            return Err(Error::Config(
                "initial_levels and start_level must be >= 1 and initial_n >= 2".into(),
            ));
        }
        if self.initial_levels > self.max_levels {
            return Err(Error::Config("initial_levels exceeds max_levels".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSummary {
    /// Sampler level.
    pub level: usize,
    pub n: usize,
    pub mean_diff: f64,
    pub var_diff: f64,
    pub mean_fine: f64,
    pub var_fine: f64,
    /// Average cost per sample.
    pub cost: f64,
}

impl LevelSummary {
    fn from_stats(level: usize, s: &LevelStats) -> Self {
        Self {
            level,
            n: s.n,
            mean_diff: s.mean_diff(),
            var_diff: s.var_diff(),
            mean_fine: s.mean_fine(),
            var_fine: s.var_fine(),
            cost: s.avg_cost(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlmcResult {
    pub levels: Vec<LevelSummary>,
    pub estimate: f64,
    pub epsilon: f64,
    pub bias_estimate: f64,
    /// `sum V_l / N_l`.
    pub variance: f64,
    pub total_cost: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// CSV with one row per level; `ci_*` are `3 sqrt(V / N)` bands.
pub fn write_levels_csv<W: Write>(mut w: W, levels: &[LevelSummary]) -> Result<()> {
    writeln!(w, "level,N,mean_diff,var_diff,mean_fine,var_fine,cost,ci_diff,ci_fine")?;
    for l in levels {
        let n = l.n.max(1) as f64;
        writeln!(
            w,
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            l.level,
            l.n,
            l.mean_diff,
            l.var_diff,
            l.mean_fine,
            l.var_fine,
            l.cost,
            3.0 * (l.var_diff / n).sqrt(),
            3.0 * (l.var_fine / n).sqrt()
        )?;
    }
    Ok(())
}

impl MlmcResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_levels_csv(w, &self.levels)
    }

    /// Plain-text `key = value` summary.
    pub fn write_summary<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "estimate = {:e}", self.estimate)?;
        writeln!(w, "ci_3sigma = {:e}", 3.0 * self.variance.sqrt())?;
        writeln!(w, "epsilon = {:e}", self.epsilon)?;
        writeln!(w, "bias_estimate = {:e}", self.bias_estimate)?;
        writeln!(w, "statistical_variance = {:e}", self.variance)?;
        writeln!(w, "total_cost = {:e}", self.total_cost)?;
        writeln!(w, "levels = {}", self.levels.len())?;
        writeln!(w, "alpha = {}", self.alpha)?;
        writeln!(w, "beta = {}", self.beta)?;
        writeln!(w, "gamma = {}", self.gamma)?;
        Ok(())
    }
}

/// Slopes of `log2 |Y_l|`, `log2 V_l` and `log2 C_l` against `-log2 h_l`
/// over the given MLMC levels (index >= 1 into `stats`, i.e. differences).
fn fit_rates(sampler: &dyn LevelSampler, levels: &[usize], stats: &[LevelStats]) -> [Result<LinearFit>; 3] {
    let x: Vec<f64> = levels.iter().map(|&l| -sampler.level_h(l).log2()).collect();
    let ya: Vec<f64> = stats.iter().map(|s| s.mean_diff().abs().log2()).collect();
    let yb: Vec<f64> = stats.iter().map(|s| s.var_diff().log2()).collect();
    let yc: Vec<f64> = stats.iter().map(|s| s.avg_cost().log2()).collect();
    [linear_fit(&x, &ya), linear_fit(&x, &yb), linear_fit(&x, &yc)]
}

/// Adaptive MLMC to root-mean-square accuracy `epsilon`.
pub fn mlmc_run(sampler: &dyn LevelSampler, config: &MlmcConfig) -> Result<MlmcResult> {
    config.validate()?;
    let eps = config.epsilon;
    let cap = config
        .max_levels
        .min((sampler.num_levels() + 1).saturating_sub(config.start_level));
    if config.initial_levels > cap {
        return Err(Error::Config(format!(
            "{} initial levels requested but only {cap} are available",
            config.initial_levels
        )));
    }
    let schedule = SeedSchedule::new(config.seed);
    let sampler_level = |l: usize| config.start_level + l;
    let mut stats = vec![LevelStats::default(); config.initial_levels];
    let mut dn = vec![config.initial_n; config.initial_levels];
    // extrapolated moments for levels without samples
    let mut v_guess: Vec<Option<f64>> = vec![None; config.initial_levels];
    let mut c_guess: Vec<Option<f64>> = vec![None; config.initial_levels];
    let (mut alpha, mut beta, mut gamma);
    loop {
        for l in 0..stats.len() {
            if dn[l] > 0 {
                let got = draw(sampler, &schedule, purpose::MLMC, sampler_level(l), l == 0, stats[l].n, dn[l])?;
                got.iter().for_each(|s| stats[l].push(s));
                dn[l] = 0;
            }
        }
        let nl = stats.len();
        let lv: Vec<usize> = (1..nl).map(sampler_level).collect();
        let fits = fit_rates(sampler, &lv, &stats[1..]);
        alpha = fits[0].as_ref().map_or(config.default_alpha, |f| (-f.slope).max(0.5));
        beta = fits[1].as_ref().map_or(config.default_beta, |f| (-f.slope).max(0.5));
        gamma = fits[2].as_ref().map_or(config.default_gamma, |f| f.slope.max(0.5));

        let mut var: Vec<f64> = (0..nl)
            .map(|l| if stats[l].n > 1 { stats[l].var_diff() } else { v_guess[l].unwrap_or(0.0) })
            .collect();
        // guard thinly sampled fine levels against a lucky small variance
        for l in 2..nl {
            var[l] = var[l].max(0.5 * var[l - 1] / 2f64.powf(beta));
        }
        let cost: Vec<f64> = (0..nl)
            .map(|l| if stats[l].n > 0 { stats[l].avg_cost() } else { c_guess[l].unwrap_or(1.0) }.max(f64::MIN_POSITIVE))
            .collect();
        let target = optimal_allocation(&var, &cost, eps);
        let mut pending = false;
        for l in 0..nl {
            let want = if stats[l].n == 0 { target[l].max(config.min_new_n) } else { target[l] };
            dn[l] = want.saturating_sub(stats[l].n);
            pending |= dn[l] > 0;
        }
        if pending {
            continue;
        }
        let bias = stats[nl - 1].mean_diff().abs() / (2f64.powf(alpha) - 1.0);
        if bias <= eps / std::f64::consts::SQRT_2 {
            let levels: Vec<LevelSummary> = stats
                .iter()
                .enumerate()
                .map(|(l, s)| LevelSummary::from_stats(sampler_level(l), s))
                .collect();
            return Ok(MlmcResult {
                estimate: stats.iter().map(LevelStats::mean_diff).sum(),
                epsilon: eps,
                bias_estimate: bias,
                variance: stats.iter().map(|s| s.var_diff() / s.n as f64).sum(),
                total_cost: stats.iter().map(|s| s.cost).sum(),
                levels,
                alpha,
                beta,
                gamma,
            });
        }
        if nl >= cap {
            return Err(Error::LevelCap(cap));
        }
        v_guess.push(Some(var[nl - 1] / 2f64.powf(beta)));
        c_guess.push(Some(cost[nl - 1] * 2f64.powf(gamma)));
        stats.push(LevelStats::default());
        dn.push(0);
        let var: Vec<f64> = (0..=nl)
            .map(|l| if l < nl { var[l] } else { v_guess[l].unwrap() })
            .collect();
        let cost: Vec<f64> = (0..=nl)
            .map(|l| if l < nl { cost[l] } else { c_guess[l].unwrap() })
            .collect();
        let target = optimal_allocation(&var, &cost, eps);
        for l in 0..=nl {
            let want = if l == nl { target[l].max(config.min_new_n) } else { target[l] };
            dn[l] = want.saturating_sub(stats[l].n);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rates {
    pub levels: Vec<LevelSummary>,
    pub h: Vec<f64>,
    pub alpha: LinearFit,
    pub beta: LinearFit,
    pub gamma: LinearFit,
}

impl Rates {
    /// Weak, strong and cost rates `(alpha, beta, gamma)`.
    pub fn slopes(&self) -> (f64, f64, f64) {
        (-self.alpha.slope, -self.beta.slope, self.gamma.slope)
    }
}

/// Runs `n` coupled samples on each listed level and fits
/// `|Y_l| ~ h^alpha`, `V_l ~ h^beta`, `C_l ~ h^-gamma`.
pub fn estimate_rates(sampler: &dyn LevelSampler, levels: &[usize], n: usize, schedule: &SeedSchedule) -> Result<Rates> {
    if levels.len() < 3 {
        return Err(Error::InvalidInput("rate estimation needs at least three levels".into()));
    }
    if n < 2 {
        return Err(Error::InvalidInput("rate estimation needs at least two samples per level".into()));
    }
    let stats = level_statistics(sampler, levels, n, schedule)?;
    let [a, b, c] = fit_rates(sampler, levels, &stats);
    Ok(Rates {
        levels: levels
            .iter()
            .zip(&stats)
            .map(|(&l, s)| LevelSummary::from_stats(l, s))
            .collect(),
        h: levels.iter().map(|&l| sampler.level_h(l)).collect(),
        alpha: a?,
        beta: b?,
        gamma: c?,
    })
}

/// `n` coupled samples per level (level 1 uncoupled).
pub fn level_statistics(
    sampler: &dyn LevelSampler,
    levels: &[usize],
    n: usize,
    schedule: &SeedSchedule,
) -> Result<Vec<LevelStats>> {
    levels
        .iter()
        .map(|&l| {
            check_level(sampler, l)?;
            let mut s = LevelStats::default();
            draw(sampler, schedule, purpose::RATES, l, l == 1, 0, n)?
                .iter()
                .for_each(|x| s.push(x));
            Ok(s)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelescopeCheck {
    pub level: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Estimator variances `V / N`.
    pub var_a: f64,
    pub var_b: f64,
    pub var_c: f64,
    pub t: f64,
}

/// Compares the coupled difference mean on `level` with the difference of
/// independently estimated fine means on `level` and `level - 1`.
pub fn telescoping_check(sampler: &dyn LevelSampler, level: usize, n: usize, seed: u64) -> Result<TelescopeCheck> {
    check_level(sampler, level)?;
    if level < 2 || n < 2 {
        return Err(Error::InvalidInput("telescoping check needs level >= 2 and N >= 2".into()));
    }
    let schedule = SeedSchedule::new(seed);
    let mut sa = LevelStats::default();
    let mut sb = LevelStats::default();
    let mut sc = LevelStats::default();
    draw(sampler, &schedule, purpose::TELESCOPE_DIFF, level, false, 0, n)?
        .iter()
        .for_each(|x| sa.push(x));
    draw(sampler, &schedule, purpose::TELESCOPE_FINE, level, true, 0, n)?
        .iter()
        .for_each(|x| sb.push(x));
    draw(sampler, &schedule, purpose::TELESCOPE_COARSE, level - 1, true, 0, n)?
        .iter()
        .for_each(|x| sc.push(x));
    let nf = n as f64;
    let (a, b, c) = (sa.mean_diff(), sb.mean_fine(), sc.mean_fine());
    let (va, vb, vc) = (sa.var_diff() / nf, sb.var_fine() / nf, sc.var_fine() / nf);
    Ok(TelescopeCheck {
        level,
        a,
        b,
        c,
        var_a: va,
        var_b: vb,
        var_c: vc,
        t: telescoping_ratio(a, b, c, va, vb, vc),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McResult {
    pub level: usize,
    pub n: usize,
    pub estimate: f64,
    pub variance: f64,
    pub total_cost: f64,
}

/// Single-level Monte Carlo on `level`: a pilot of `pilot` samples, then
/// `N = ceil(2 V / eps^2)` in total.
pub fn standard_mc_run(sampler: &dyn LevelSampler, epsilon: f64, level: usize, pilot: usize, seed: u64) -> Result<McResult> {
    check_level(sampler, level)?;
    if !(epsilon > 0.0) || pilot < 2 {
        return Err(Error::Config("standard MC needs epsilon > 0 and a pilot of at least 2".into()));
    }
    let schedule = SeedSchedule::new(seed);
    let mut s = LevelStats::default();
    draw(sampler, &schedule, purpose::MC, level, true, 0, pilot)?
        .iter()
        .for_each(|x| s.push(x));
    let n = ((2.0 * s.var_fine() / (epsilon * epsilon)).ceil() as usize).max(pilot);
    if n > pilot {
        draw(sampler, &schedule, purpose::MC, level, true, pilot, n - pilot)?
            .iter()
            .for_each(|x| s.push(x));
    }
    Ok(McResult {
        level,
        n: s.n,
        estimate: s.mean_fine(),
        variance: s.var_fine() / s.n as f64,
        total_cost: s.cost,
    })
}
