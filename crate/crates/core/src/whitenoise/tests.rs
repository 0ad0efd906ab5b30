use super::*;
use crate::fem::assemble_mass;
use crate::geometry::BoundingBox;
use crate::mesh::{generate_structured, perturb_interior, refine_uniform, Mesh};
use crate::supermesh::build_supermesh;

const N: usize = 100_000;

fn unit(nx: usize) -> Mesh {
    generate_structured(nx, &BoundingBox::new([0.0, 0.0], [1.0, 1.0])).unwrap()
}

fn space(m: &Arc<Mesh>, p: usize) -> Arc<FunctionSpace> {
    Arc::new(FunctionSpace::new(m.clone(), p).unwrap())
}

/// Running estimate of `E[x y^T]` for zero-mean vectors with per-entry
/// standard errors.
struct CrossMoments {
    n: usize,
    nx: usize,
    ny: usize,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl CrossMoments {
    fn new(nx: usize, ny: usize) -> Self {
        Self {
            n: 0,
            nx,
            ny,
            s1: vec![0.0; nx * ny],
            s2: vec![0.0; nx * ny],
        }
    }

    fn add(&mut self, x: &[f64], y: &[f64]) {
        self.n += 1;
        for i in 0..self.nx {
            for j in 0..self.ny {
                let v = x[i] * y[j];
                self.s1[i * self.ny + j] += v;
                self.s2[i * self.ny + j] += v * v;
            }
        }
    }

    /// Largest |estimate - exact| in units of the standard error.
    fn max_z(&self, exact: impl Fn(usize, usize) -> f64) -> f64 {
        let n = self.n as f64;
        let mut worst = 0.0f64;
        for i in 0..self.nx {
            for j in 0..self.ny {
                let m = self.s1[i * self.ny + j] / n;
                let var = (self.s2[i * self.ny + j] / n - m * m).max(0.0);
                let se = (var / n).sqrt().max(1e-300);
                worst = worst.max((m - exact(i, j)).abs() / se);
            }
        }
        worst
    }
}

#[test]
fn independent_is_deterministic_and_has_mass_covariance() {
    for (nx, p) in [(3, 1), (2, 2)] {
        let mesh = Arc::new(perturb_interior(&unit(nx), 0.2, 2).unwrap());
        let s = space(&mesh, p);
        let m = assemble_mass(&s);
        let sampler = IndependentSampler::new(s.clone()).unwrap();
        let root = StreamRng::new(42);
        assert_eq!(sampler.sample(&root).values, sampler.sample(&root).values);
        assert_eq!(
            sample_independent(&s, &root).unwrap().values,
            sampler.sample(&root).values
        );
        let n = s.num_dofs();
        assert!(n <= 50);
        let mut mom = CrossMoments::new(n, n);
        let mut mean = vec![0.0; n];
        for k in 0..N {
            let b = sampler.sample(&root.substream(k as u64)).values;
            mean.iter_mut().zip(&b).for_each(|(m, v)| *m += v);
            mom.add(&b, &b);
        }
        for i in 0..n {
            let sd = m.get(i, i).sqrt();
            assert!((mean[i] / N as f64).abs() < 4.0 * sd / (N as f64).sqrt());
        }
        let z = mom.max_z(|i, j| m.get(i, j));
        assert!(z < 5.0, "p={p}: z={z}");
    }
}

fn nonnested_pair() -> (Arc<FunctionSpace>, Arc<FunctionSpace>, Arc<Supermesh>) {
    let fine = Arc::new(perturb_interior(&unit(4), 0.25, 9).unwrap());
    let coarse = Arc::new(perturb_interior(&unit(3), 0.25, 4).unwrap());
    let sm = Arc::new(build_supermesh(&fine, &coarse).unwrap());
    (space(&fine, 1), space(&coarse, 1), sm)
}

#[test]
fn lemma_identity_and_affine_general_blocks() {
    for p in 1..=2 {
        let fine = Arc::new(perturb_interior(&unit(4), 0.25, 9).unwrap());
        let coarse = Arc::new(perturb_interior(&unit(3), 0.25, 4).unwrap());
        let sm = Arc::new(build_supermesh(&fine, &coarse).unwrap());
        let (fs, cs) = (space(&fine, p), space(&coarse, p));
        let aff = AffineCoupling::new(fs.clone(), cs.clone(), sm.clone()).unwrap();
        let gen = GeneralCoupling::new(fs.clone(), cs.clone(), sm.clone()).unwrap();
        let (mf, mc) = (fs.dofs_per_cell(), cs.dofs_per_cell());
        for e in 0..sm.num_cells() {
            let (ff, fc, cc) = local_mass_blocks(&fs, &cs, &sm, e);
            // (M^{f,c})^T (M^f)^{-1} M^{f,c} = M^c
            let h = ff.cholesky().unwrap();
            let mut y = DenseMatrix::zeros(mf, mc);
            for j in 0..mc {
                let mut col: Vec<f64> = (0..mf).map(|i| fc[(i, j)]).collect();
                h.solve_lower(&mut col);
                h.solve_lower_t(&mut col);
                for i in 0..mf {
                    y[(i, j)] = col[i];
                }
            }
            let lemma = fc.transpose().matmul(&y);
            let scale = cc.max_abs();
            assert!(lemma.max_abs_diff(&cc) < 1e-10 * scale.max(1.0), "cell {e}");
            assert!(lemma.max_abs_diff(&cc) < 1e-8 * scale, "cell {e} relative");
            // both variants reproduce all three local covariance blocks
            for fac in [&aff.factors, &gen.factors] {
                let nz = fac.nz;
                let gf = DenseMatrix::from_rows(
                    &fac.fine[e * mf * nz..(e + 1) * mf * nz].chunks(nz).map(<[f64]>::to_vec).collect::<Vec<_>>(),
                );
                let gc = DenseMatrix::from_rows(
                    &fac.coarse[e * mc * nz..(e + 1) * mc * nz].chunks(nz).map(<[f64]>::to_vec).collect::<Vec<_>>(),
                );
                assert!(gf.matmul(&gf.transpose()).max_abs_diff(&ff) < 1e-10 * scale);
                assert!(gf.matmul(&gc.transpose()).max_abs_diff(&fc) < 1e-10 * scale);
                assert!(gc.matmul(&gc.transpose()).max_abs_diff(&cc) < 1e-10 * scale);
            }
        }
    }
}

#[test]
fn identical_parents_give_identical_loads() {
    let mesh = Arc::new(perturb_interior(&unit(3), 0.2, 1).unwrap());
    let s = space(&mesh, 2);
    let sm = Arc::new(build_supermesh(&mesh, &mesh).unwrap());
    let rng = StreamRng::new(5);
    let g = sample_coupled_general(&s, &s, &sm, &rng).unwrap();
    for (a, b) in g.fine.values.iter().zip(&g.coarse.values) {
        assert!((a - b).abs() < 1e-10);
    }
    let a = sample_coupled_affine(&s, &s, &sm, &rng).unwrap();
    assert_eq!(a.fine.values, a.coarse.values);
    let n = sample_coupled_nested(&s, &s, &rng).unwrap();
    assert_eq!(n.fine.values, n.coarse.values);
}

#[test]
fn coupled_pair_statistics() {
    let (fs, cs, sm) = nonnested_pair();
    let mixed = assemble_mixed_mass(&fs, &cs, &sm).unwrap();
    let mf = assemble_mass(&fs);
    let mc = assemble_mass(&cs);
    // mixed mass integrates products of partitions of unity to the area
    assert!((mixed.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let aff = AffineCoupling::new(fs.clone(), cs.clone(), sm.clone()).unwrap();
    let gen = GeneralCoupling::new(fs.clone(), cs.clone(), sm.clone()).unwrap();
    let (nf, nc) = (fs.num_dofs(), cs.num_dofs());
    let root = StreamRng::new(77);
    for variant in 0..2 {
        let mut cross = CrossMoments::new(nf, nc);
        let mut fine = CrossMoments::new(nf, nf);
        let mut coarse = CrossMoments::new(nc, nc);
        let mut total = CrossMoments::new(1, 1);
        for k in 0..N {
            let r = root.substream(k as u64);
            let pair = if variant == 0 { aff.sample(&r) } else { gen.sample(&r) };
            cross.add(&pair.fine.values, &pair.coarse.values);
            fine.add(&pair.fine.values, &pair.fine.values);
            coarse.add(&pair.coarse.values, &pair.coarse.values);
            let s: f64 = pair.coarse.values.iter().sum();
            total.add(&[s], &[s]);
        }
        assert!(cross.max_z(|i, j| mixed.get(i, j)) < 5.0, "cross, variant {variant}");
        assert!(fine.max_z(|i, j| mf.get(i, j)) < 5.0, "fine, variant {variant}");
        assert!(coarse.max_z(|i, j| mc.get(i, j)) < 5.0, "coarse, variant {variant}");
        assert!(total.max_z(|_, _| 1.0) < 5.0, "<W, 1>, variant {variant}");
    }
}

#[test]
fn nested_and_p_refinement_statistics() {
    let coarse = Arc::new(unit(2));
    let fine = Arc::new(refine_uniform(&coarse).unwrap());
    let root = StreamRng::new(8);
    // h-refinement: cross covariance equals the mixed mass of the nested pair
    let (fs, cs) = (space(&fine, 1), space(&coarse, 1));
    let c = nested_coupling(fs.clone(), cs.clone()).unwrap();
    let mixed = assemble_mixed_mass(&fs, &cs, c.supermesh()).unwrap();
    let mut cross = CrossMoments::new(fs.num_dofs(), cs.num_dofs());
    for k in 0..N {
        let pair = c.sample(&root.substream(k as u64));
        cross.add(&pair.fine.values, &pair.coarse.values);
    }
    assert!(cross.max_z(|i, j| mixed.get(i, j)) < 5.0);

    // p-refinement on one mesh: the P1 marginal is the P1 mass matrix
    let (p2, p1) = (space(&coarse, 2), space(&coarse, 1));
    let c = nested_coupling(p2.clone(), p1.clone()).unwrap();
    let m1 = assemble_mass(&p1);
    let mut mom = CrossMoments::new(p1.num_dofs(), p1.num_dofs());
    for k in 0..N {
        let pair = c.sample(&root.substream(k as u64));
        mom.add(&pair.coarse.values, &pair.coarse.values);
    }
    assert!(mom.max_z(|i, j| m1.get(i, j)) < 5.0);

    let wobbly = Arc::new(perturb_interior(&fine, 0.2, 3).unwrap());
    assert!(matches!(
        nested_coupling(space(&wobbly, 1), cs),
        Err(Error::NotNested(_))
    ));
}

#[test]
fn coupling_modes() {
    let fine = Arc::new(perturb_interior(&unit(4), 0.2, 1).unwrap());
    let coarse = Arc::new(unit(2));
    let (fs, cs) = (space(&fine, 1), space(&coarse, 1));
    let rng = StreamRng::new(3);
    let inj = Coupler::new(CouplingMode::Injection, fs.clone(), cs.clone()).unwrap();
    let pair = inj.sample(&rng);
    // coarse dofs coincide with (fixed) fine vertices at the lattice points
    for (j, x) in cs.dof_coords().iter().enumerate() {
        let d = fs.dof_coords().iter().position(|y| y == x);
        if let Some(d) = d {
            assert_eq!(pair.coarse.values[j], pair.fine.values[d]);
        }
    }
    let ind = Coupler::new(CouplingMode::Independent, fs.clone(), cs.clone()).unwrap();
    let a = ind.sample(&rng);
    let b = ind.sample(&rng);
    assert_eq!(a.fine.values, b.fine.values);
    let sup = Coupler::new(CouplingMode::Supermesh, fs, cs).unwrap();
    assert_eq!(sup.sample(&rng).fine.values.len(), fine.num_vertices());
    assert_eq!("injection".parse::<CouplingMode>().unwrap(), CouplingMode::Injection);
    assert!("bogus".parse::<CouplingMode>().is_err());
}

#[test]
fn mismatched_supermesh_rejected() {
    let (fs, cs, sm) = nonnested_pair();
    assert!(AffineCoupling::new(cs, fs, sm).is_err());
}
