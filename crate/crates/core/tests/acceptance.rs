//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the summary is
//! always printed.

use std::sync::Arc;
use std::time::{Duration, Instant};

use spde_mlmc::experiments::{
    build_sampler, covariance_curve, mlmc_config, run, Experiment, ExperimentConfig, LevelRange,
};
use spde_mlmc::fem::{
    assemble_mass, interpolation_matrix_with, DenseMatrix, reference_mass, FunctionSpace, SparseMatrix, REF_AREA,
};
use spde_mlmc::geometry::BoundingBox;
use spde_mlmc::mesh::{generate_structured, perturb_interior, refine_uniform, HierarchyConfig, MeshHierarchy};
use spde_mlmc::mlmc::{estimate_rates, mlmc_run, standard_mc_run, telescoping_check, SeedSchedule};
use spde_mlmc::rng::StreamRng;
use spde_mlmc::spde::{matern_covariance, MaternParams};
use spde_mlmc::supermesh::build_supermesh;
use spde_mlmc::whitenoise::{assemble_mixed_mass, local_mass_blocks, AffineCoupling, CouplingMode, IndependentSampler};

type Outcome = Result<(bool, String), String>;

fn square() -> BoundingBox {
    BoundingBox::new([-1.0, -1.0], [1.0, 1.0])
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

/// `A^{-1} B` by Gaussian elimination with partial pivoting. Slivers in the
/// supermesh make `A` too ill-conditioned for a pivot-thresholded Cholesky,
/// yet the products involved stay accurate.
fn solve_dense(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let n = a.rows();
    let mut a = a.clone();
    let mut x = b.clone();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs())).expect("non-empty");
        for j in 0..n {
            let t = a[(k, j)];
            a[(k, j)] = a[(p, j)];
            a[(p, j)] = t;
        }
        for j in 0..x.cols() {
            let t = x[(k, j)];
            x[(k, j)] = x[(p, j)];
            x[(p, j)] = t;
        }
        for i in k + 1..n {
            let f = a[(i, k)] / a[(k, k)];
            for j in k..n {
                a[(i, j)] -= f * a[(k, j)];
            }
            for j in 0..x.cols() {
                x[(i, j)] -= f * x[(k, j)];
            }
        }
    }
    for j in 0..x.cols() {
        for i in (0..n).rev() {
            let mut s = x[(i, j)];
            for k in i + 1..n {
                s -= a[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = s / a[(i, i)];
        }
    }
    x
}

/// Lemma identity and interpolation reproduction on every supermesh cell of
/// an 8x8 mesh and its perturbed refinement.
fn exact_coupling_algebra() -> Outcome {
    let t = Instant::now();
    let coarse = generate_structured(8, &square()).map_err(|e| e.to_string())?;
    let fine = perturb_interior(&refine_uniform(&coarse).map_err(|e| e.to_string())?, 0.2, 1).map_err(|e| e.to_string())?;
    let sm = build_supermesh(&fine, &coarse).map_err(|e| e.to_string())?;
    let (mut lemma, mut repro) = (0.0f64, 0.0f64);
    for p in [1, 2] {
        let fs = FunctionSpace::new(Arc::new(fine.clone()), p).map_err(|e| e.to_string())?;
        let cs = FunctionSpace::new(Arc::new(coarse.clone()), p).map_err(|e| e.to_string())?;
        let m_ref = reference_mass(p).map_err(|e| e.to_string())?;
        for e in 0..sm.num_cells() {
            let (ff, fc, cc) = local_mass_blocks(&fs, &cs, &sm, e);
            let x = solve_dense(&ff, &fc);
            let lhs = fc.transpose().matmul(&x);
            lemma = lemma.max(lhs.max_abs_diff(&cc));
            let mut ms = m_ref.clone();
            ms.scale(sm.areas[e] / REF_AREA);
            let tri = &sm.cells[e];
            let rf = interpolation_matrix_with(fs.element(), &fine.cell_coords(sm.parent_a[e]), tri, p)
                .map_err(|e| e.to_string())?;
            let rc = interpolation_matrix_with(cs.element(), &coarse.cell_coords(sm.parent_b[e]), tri, p)
                .map_err(|e| e.to_string())?;
            let mff = rf.transpose().matmul(&ms).matmul(&rf);
            let mcc = rc.transpose().matmul(&ms).matmul(&rc);
            repro = repro.max(mff.max_abs_diff(&ff)).max(mcc.max_abs_diff(&cc));
        }
    }
    let el = t.elapsed();
    Ok((
        lemma <= 1e-10 && repro <= 1e-12 && within(el, 10),
        format!(
            "{} supermesh cells, P1+P2: lemma max err {lemma:.1e}, R^T M R max err {repro:.1e}, {:.1} s",
            sm.num_cells(),
            el.as_secs_f64()
        ),
    ))
}

/// Running sums of `x_i y_j` and their squares.
struct CrossMoments {
    n: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl CrossMoments {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            n: 0,
            sum: vec![0.0; rows * cols],
            sq: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    fn push(&mut self, x: &[f64], y: &[f64]) {
        self.n += 1;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let p = x[i] * y[j];
                self.sum[i * self.cols + j] += p;
                self.sq[i * self.cols + j] += p * p;
            }
        }
    }

    /// Fraction of entries within `k` standard errors of `m`.
    fn fraction_within(&self, m: &SparseMatrix, k: f64) -> f64 {
        let n = self.n as f64;
        let mut ok = 0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let idx = i * self.cols + j;
                let mean = self.sum[idx] / n;
                let var = (self.sq[idx] / n - mean * mean) * n / (n - 1.0);
                if (mean - m.get(i, j)).abs() <= k * (var / n).sqrt() {
                    ok += 1;
                }
            }
        }
        ok as f64 / (self.rows * self.cols) as f64
    }
}

fn white_noise_law() -> Outcome {
    let t = Instant::now();
    let unit = BoundingBox::new([0.0, 0.0], [1.0, 1.0]);
    let n = 100_000;
    let root = StreamRng::new(2024);

    let single = Arc::new(FunctionSpace::new(Arc::new(generate_structured(6, &unit).map_err(|e| e.to_string())?), 1).map_err(|e| e.to_string())?);
    let m = assemble_mass(&single);
    let sampler = IndependentSampler::new(single.clone()).map_err(|e| e.to_string())?;
    let nd = single.num_dofs();
    let mut mom = CrossMoments::new(nd, nd);
    for i in 0..n {
        let b = sampler.sample(&root.substream(i as u64)).values;
        mom.push(&b, &b);
    }
    let f_single = mom.fraction_within(&m, 5.0);

    let fine_mesh = perturb_interior(&generate_structured(6, &unit).map_err(|e| e.to_string())?, 0.2, 1).map_err(|e| e.to_string())?;
    let coarse_mesh = generate_structured(4, &unit).map_err(|e| e.to_string())?;
    let sm = Arc::new(build_supermesh(&fine_mesh, &coarse_mesh).map_err(|e| e.to_string())?);
    let fs = Arc::new(FunctionSpace::new(Arc::new(fine_mesh), 1).map_err(|e| e.to_string())?);
    let cs = Arc::new(FunctionSpace::new(Arc::new(coarse_mesh), 1).map_err(|e| e.to_string())?);
    let mixed = assemble_mixed_mass(&fs, &cs, &sm).map_err(|e| e.to_string())?;
    let (mf, mc) = (assemble_mass(&fs), assemble_mass(&cs));
    let coupling = AffineCoupling::new(fs.clone(), cs.clone(), sm).map_err(|e| e.to_string())?;
    let (nf, nc) = (fs.num_dofs(), cs.num_dofs());
    let (mut cross, mut ff, mut cc) = (CrossMoments::new(nf, nc), CrossMoments::new(nf, nf), CrossMoments::new(nc, nc));
    let root = root.substream(1);
    for i in 0..n {
        let pair = coupling.sample(&root.substream(i as u64));
        cross.push(&pair.fine.values, &pair.coarse.values);
        ff.push(&pair.fine.values, &pair.fine.values);
        cc.push(&pair.coarse.values, &pair.coarse.values);
    }
    let (f_cross, f_ff, f_cc) = (cross.fraction_within(&mixed, 5.0), ff.fraction_within(&mf, 5.0), cc.fraction_within(&mc, 5.0));
    let el = t.elapsed();
    let worst = f_single.min(f_cross).min(f_ff).min(f_cc);
    Ok((
        worst >= 0.99 && within(el, 120),
        format!(
            "N = {n}, {nd} dofs: within 5 stderr {:.2}% (single), coupled {nf}x{nc}: cross {:.2}%, fine {:.2}%, coarse {:.2}%, {:.1} s",
            100.0 * f_single,
            100.0 * f_cross,
            100.0 * f_ff,
            100.0 * f_cc,
            el.as_secs_f64()
        ),
    ))
}

fn supermesh_conservation() -> Outcome {
    let h = MeshHierarchy::build(&HierarchyConfig {
        levels: 7,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let mut pass = true;
    let (mut worst_area, mut worst_ratio, mut worst_time) = (0.0f64, 0.0f64, 0.0f64);
    for l in 2..=7 {
        let t = Instant::now();
        let sm = build_supermesh(&h.level(l).outer, &h.level(l - 1).outer).map_err(|e| e.to_string())?;
        let el = t.elapsed().as_secs_f64();
        let area_err = (sm.total_area() - 4.0).abs() / 4.0;
        let ratio = sm.num_cells() as f64 / h.level(l).outer.num_cells() as f64;
        pass &= area_err <= 1e-10 && ratio <= 4.0 && el < 30.0;
        worst_area = worst_area.max(area_err);
        worst_ratio = worst_ratio.max(ratio);
        worst_time = worst_time.max(el);
    }
    Ok((
        pass,
        format!(
            "pairs up to {} fine cells: max rel area err {worst_area:.1e}, max nS/n {worst_ratio:.3}, max time {worst_time:.2} s",
            h.level(7).outer.num_cells()
        ),
    ))
}

fn covariance() -> Outcome {
    let t = Instant::now();
    let exp_half = MaternParams::new(1.0, 0.5, 0.2).map_err(|e| e.to_string())?;
    let mut closed = 0.0f64;
    for i in 0..=40 {
        let r = 0.01 * i as f64;
        let c = matern_covariance(r, &exp_half).map_err(|e| e.to_string())?;
        closed = closed.max((c - (-r / 0.2 * 2.0f64).exp()).abs());
    }
    let cfg = ExperimentConfig {
        levels: Some(LevelRange::new(5, 5)),
        n: 2000,
        ..Default::default()
    };
    let params = cfg.matern().map_err(|e| e.to_string())?;
    let h = MeshHierarchy::build(&HierarchyConfig {
        levels: 5,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let curve = covariance_curve(&cfg).map_err(|e| e.to_string())?;
    let mut worst = f64::NEG_INFINITY;
    for c in &curve {
        let exact = matern_covariance(c.r, &params).map_err(|e| e.to_string())?;
        worst = worst.max((c.value - exact).abs() - (3.0 * c.stderr + 0.02));
    }
    let el = t.elapsed();
    Ok((
        closed < 1e-12 && worst <= 0.0 && curve.len() == 10 && within(el, 600),
        format!(
            "nu=1/2 closed form err {closed:.1e}; nu=1 on level 5 (nominal h {:.3}, max edge {:.3}): max (|err| - allowance) {worst:+.4}, {:.1} s",
            h.level(1).h / 16.0,
            h.level(5).h,
            el.as_secs_f64()
        ),
    ))
}

fn matern_rates() -> Outcome {
    let t = Instant::now();
    let cfg = ExperimentConfig::default();
    let s = build_sampler(Experiment::MaternConvergence, &cfg, 6).map_err(|e| e.to_string())?;
    let r = estimate_rates(s.as_ref(), &[3, 4, 5, 6], 2000, &SeedSchedule::new(cfg.seed)).map_err(|e| e.to_string())?;
    let (a, b, _) = r.slopes();
    let el = t.elapsed();
    let means: Vec<String> = r.levels.iter().map(|l| format!("{:.3e}", l.mean_diff)).collect();
    Ok((
        (1.5..=2.5).contains(&a) && (3.2..=4.8).contains(&b) && within(el, 900),
        format!(
            "levels 3-6, N=2000: expectation slope {a:.3}, variance slope {b:.3} (E diffs {}), {:.0} s",
            means.join(", "),
            el.as_secs_f64()
        ),
    ))
}

fn telescoping() -> Outcome {
    let t = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for (nu, levels) in [(1.0, 2..=6), (3.0, 2..=5)] {
        let cfg = ExperimentConfig {
            nu,
            ..Default::default()
        };
        let s = build_sampler(Experiment::Telescope, &cfg, *levels.end()).map_err(|e| e.to_string())?;
        let mut ts = Vec::new();
        for l in levels {
            let c = telescoping_check(s.as_ref(), l, 2000, cfg.seed).map_err(|e| e.to_string())?;
            pass &= c.t < 1.0;
            ts.push(format!("{:.2}", c.t));
        }
        lines.push(format!("nu={nu}: T = [{}]", ts.join(", ")));
    }
    let cfg = ExperimentConfig {
        coupling: CouplingMode::Injection,
        ..Default::default()
    };
    let s = build_sampler(Experiment::Telescope, &cfg, 4).map_err(|e| e.to_string())?;
    let mut ts = Vec::new();
    let mut broken = false;
    for l in 2..=4 {
        let c = telescoping_check(s.as_ref(), l, 2000, cfg.seed).map_err(|e| e.to_string())?;
        broken |= c.t > 1.0;
        ts.push(format!("{:.1}", c.t));
    }
    lines.push(format!("broken coupling: T = [{}]", ts.join(", ")));
    let el = t.elapsed();
    Ok((
        pass && broken && within(el, 1200),
        format!("{}, {:.0} s", lines.join("; "), el.as_secs_f64()),
    ))
}

fn darcy_rates() -> Outcome {
    let t = Instant::now();
    let cfg = ExperimentConfig::default();
    let s = build_sampler(Experiment::Rates, &cfg, 7).map_err(|e| e.to_string())?;
    // the 3 -> 4 variance step is still pre-asymptotic; fit from level 4 on
    let r = estimate_rates(s.as_ref(), &[4, 5, 6, 7], 2000, &SeedSchedule::new(cfg.seed)).map_err(|e| e.to_string())?;
    let (a, b, g) = r.slopes();
    let el = t.elapsed();
    Ok((
        (1.5..=2.5).contains(&a) && (3.2..=4.8).contains(&b) && (1.7..=2.3).contains(&g) && within(el, 1800),
        format!("levels 4-7, N=2000: alpha {a:.3}, beta {b:.3}, gamma {g:.3}, {:.0} s", el.as_secs_f64()),
    ))
}

fn mlmc_efficiency() -> Outcome {
    let t = Instant::now();
    let cfg = ExperimentConfig::default();
    let s = build_sampler(Experiment::Mlmc, &cfg, 6).map_err(|e| e.to_string())?;
    let mut eps2c = Vec::new();
    let mut last = None;
    for &eps in &[4e-5, 2e-5, 1e-5] {
        let r = mlmc_run(s.as_ref(), &mlmc_config(&cfg, eps)).map_err(|e| e.to_string())?;
        eps2c.push(eps * eps * r.total_cost);
        last = Some((eps, r));
    }
    let (eps, r) = last.expect("three tolerances");
    let finest = r.levels.last().map_or(0, |l| l.level);
    let mc = standard_mc_run(s.as_ref(), eps, finest, cfg.mc_pilot, cfg.seed).map_err(|e| e.to_string())?;
    let spread = eps2c.iter().cloned().fold(0.0, f64::max) / eps2c.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = mc.total_cost / r.total_cost;
    let el = t.elapsed();
    let shown: Vec<String> = eps2c.iter().map(|v| format!("{v:.3e}")).collect();
    Ok((
        spread < 2.0 && ratio > 10.0 && r.levels.len() >= 4 && within(el, 3600),
        format!(
            "eps^2 C = [{}] (spread {spread:.2}), {} levels at eps=1e-5, MC/MLMC cost {ratio:.1}, {:.0} s",
            shown.join(", "),
            r.levels.len(),
            el.as_secs_f64()
        ),
    ))
}

fn determinism() -> Outcome {
    let t = Instant::now();
    let mut diffs = Vec::new();
    for exp in Experiment::ALL {
        let mut cfg = ExperimentConfig {
            n: 100,
            epsilon: vec![1e-4, 5e-5],
            ..Default::default()
        };
        cfg.levels = Some(match exp {
            Experiment::Hierarchy | Experiment::Mlmc | Experiment::McCompare => LevelRange::new(1, 5),
            Experiment::Covariance => LevelRange::new(4, 4),
            Experiment::Telescope => LevelRange::new(2, 4),
            Experiment::PRefine => LevelRange::new(1, 3),
            _ => LevelRange::new(2, 4),
        });
        cfg.threads = Some(1);
        let a = run(exp, &cfg).map_err(|e| format!("{exp}: {e}"))?;
        cfg.threads = Some(4);
        let b = run(exp, &cfg).map_err(|e| format!("{exp}: {e}"))?;
        if a.files != b.files {
            diffs.push(exp.name());
        }
    }
    let el = t.elapsed();
    Ok((
        diffs.is_empty(),
        if diffs.is_empty() {
            format!("all 8 experiments byte-identical at 1 and 4 threads, {:.0} s", el.as_secs_f64())
        } else {
            format!("outputs differ for: {}", diffs.join(", "))
        },
    ))
}

fn main() {
    // `cargo test -- --list` and filters are forwarded to custom harnesses
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let filter = args.iter().find(|a| !a.starts_with('-')).cloned();
    let criteria: [(&str, &str, fn() -> Outcome); 9] = [
        ("1", "exact coupling algebra", exact_coupling_algebra),
        ("2", "white-noise law", white_noise_law),
        ("3", "supermesh conservation and size", supermesh_conservation),
        ("4", "Matern covariance curve", covariance),
        ("5", "Matern convergence rates", matern_rates),
        ("6", "telescoping consistency", telescoping),
        ("7", "Darcy MLMC rates", darcy_rates),
        ("8", "MLMC efficiency", mlmc_efficiency),
        ("9", "determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if let Some(flt) = &filter {
            if !name.contains(flt.as_str()) && flt != id {
                continue;
            }
        }
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        println!("criterion {id} [{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
