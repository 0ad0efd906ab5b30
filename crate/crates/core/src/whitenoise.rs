//! White-noise load vectors `b_i = <W, phi_i>`, sampled independently on one
//! space or as coupled pairs on two spaces via element-local factorizations.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{
    interpolation_matrix_with, reference_mass, DenseMatrix, Field, FunctionSpace,
    SparseMatrix, TriangleQuadrature, MAX_LOCAL, REF_AREA,
};
use crate::geometry::{barycentric, Point};
use crate::mesh;
use crate::rng::StreamRng;
use crate::supermesh::{nested_supermesh_view, Supermesh};

/// Substream ids used by the uncoupled modes.
const FINE_STREAM: u64 = 0x66696e65;
const COARSE_STREAM: u64 = 0x636f6172;

/// A sample of the white-noise load vector on a space; its covariance is the
/// space's mass matrix.
#[derive(Debug, Clone)]
pub struct NoiseVector {
    pub space: Arc<FunctionSpace>,
    pub values: Vec<f64>,
}

impl NoiseVector {
    pub fn into_field(self) -> Field {
        Field::new(self.space, self.values).expect("noise length matches its space")
    }
}

/// Load vectors on a fine and a coarse space driven by one white noise.
#[derive(Debug, Clone)]
pub struct CoupledNoisePair {
    pub fine: NoiseVector,
    pub coarse: NoiseVector,
}

/// Draws `b ~ N(0, M)` cell by cell using the reference-mass Cholesky factor.
/// Cell `c` uses draws `0..m_e` of slot `c` in `rng`.
#[derive(Debug, Clone)]
pub struct IndependentSampler {
    space: Arc<FunctionSpace>,
    h_ref: DenseMatrix,
    scale: Vec<f64>,
}

impl IndependentSampler {
    pub fn new(space: Arc<FunctionSpace>) -> Result<Self> {
        let h_ref = reference_mass(space.degree())?.cholesky()?;
        let mesh = space.mesh();
        let scale = (0..mesh.num_cells())
            .map(|c| (mesh.area(c) / REF_AREA).sqrt())
            .collect();
        Ok(Self { space, h_ref, scale })
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn sample(&self, rng: &StreamRng) -> NoiseVector {
        let me = self.space.dofs_per_cell();
        let mut b = vec![0.0; self.space.num_dofs()];
        let mut z = [0.0; MAX_LOCAL];
        for (c, s) in self.scale.iter().enumerate() {
            rng.fill_normals(c as u32, &mut z[..me]);
            let dofs = self.space.cell_dofs(c);
            for i in 0..me {
                let row = self.h_ref.row(i);
                let v: f64 = row[..=i].iter().zip(&z[..=i]).map(|(h, z)| h * z).sum();
                b[dofs[i]] += s * v;
            }
        }
        NoiseVector {
            space: self.space.clone(),
            values: b,
        }
    }
}

/// Convenience wrapper around [`IndependentSampler`].
pub fn sample_independent(space: &Arc<FunctionSpace>, rng: &StreamRng) -> Result<NoiseVector> {
    Ok(IndependentSampler::new(space.clone())?.sample(rng))
}

fn check_pair(fine: &FunctionSpace, coarse: &FunctionSpace, sm: &Supermesh) -> Result<()> {
    let (nf, nc) = (fine.mesh().num_cells(), coarse.mesh().num_cells());
    if sm.parent_a.iter().any(|&c| c >= nf) || sm.parent_b.iter().any(|&c| c >= nc) {
        return Err(Error::Dimension(
            "supermesh parents do not index the given spaces (parent_a must be the fine mesh)".into(),
        ));
    }
    Ok(())
}

/// Maps reference quadrature points of a supermesh cell to physical points.
fn physical_points(tri: &[Point; 3], quad: &TriangleQuadrature) -> Vec<Point> {
    quad.points
        .iter()
        .map(|r| {
            [
                tri[0][0] + r[0] * (tri[1][0] - tri[0][0]) + r[1] * (tri[2][0] - tri[0][0]),
                tri[0][1] + r[0] * (tri[1][1] - tri[0][1]) + r[1] * (tri[2][1] - tri[0][1]),
            ]
        })
        .collect()
}

/// Local blocks `(M_e^f, M_e^{f,c}, M_e^c)` of the parent basis functions
/// restricted to supermesh cell `e`, by quadrature over `e`.
pub fn local_mass_blocks(
    fine: &FunctionSpace,
    coarse: &FunctionSpace,
    sm: &Supermesh,
    e: usize,
) -> (DenseMatrix, DenseMatrix, DenseMatrix) {
    let quad = TriangleQuadrature::for_degree(2 * fine.degree().max(coarse.degree()));
    let tri = &sm.cells[e];
    let jac = sm.areas[e] / REF_AREA;
    let tf = fine.mesh().cell_coords(sm.parent_a[e]);
    let tc = coarse.mesh().cell_coords(sm.parent_b[e]);
    let (mf, mc) = (fine.dofs_per_cell(), coarse.dofs_per_cell());
    let mut ff = DenseMatrix::zeros(mf, mf);
    let mut fc = DenseMatrix::zeros(mf, mc);
    let mut cc = DenseMatrix::zeros(mc, mc);
    let (mut pf, mut pc) = ([0.0; MAX_LOCAL], [0.0; MAX_LOCAL]);
    for (x, w) in physical_points(tri, &quad).iter().zip(&quad.weights) {
        let w = w * jac;
        fine.element().eval(barycentric(*x, &tf), &mut pf[..mf]);
        coarse.element().eval(barycentric(*x, &tc), &mut pc[..mc]);
        for i in 0..mf {
            for j in 0..mf {
                ff[(i, j)] += w * pf[i] * pf[j];
            }
            for j in 0..mc {
                fc[(i, j)] += w * pf[i] * pc[j];
            }
        }
        for i in 0..mc {
            for j in 0..mc {
                cc[(i, j)] += w * pc[i] * pc[j];
            }
        }
    }
    (ff, fc, cc)
}

/// Mixed mass matrix `M_ij = (phi_i^fine, phi_j^coarse)` assembled on the
/// supermesh.
pub fn assemble_mixed_mass(fine: &FunctionSpace, coarse: &FunctionSpace, sm: &Supermesh) -> Result<SparseMatrix> {
    check_pair(fine, coarse, sm)?;
    let mut trip = Vec::new();
    for e in 0..sm.num_cells() {
        let (_, fc, _) = local_mass_blocks(fine, coarse, sm, e);
        let df = fine.cell_dofs(sm.parent_a[e]);
        let dc = coarse.cell_dofs(sm.parent_b[e]);
        for (i, &gi) in df.iter().enumerate() {
            for (j, &gj) in dc.iter().enumerate() {
                trip.push((gi, gj, fc[(i, j)]));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(fine.num_dofs(), coarse.num_dofs(), &trip))
}

/// Per supermesh cell, `b^f_e = G^f_e z_e` and `b^c_e = G^c_e z_e` with a
/// shared `z_e` of length `nz`. Matrices are stored row-major, cell-major.
#[derive(Debug, Clone)]
struct CellFactors {
    nz: usize,
    mf: usize,
    mc: usize,
    fine: Vec<f64>,
    coarse: Vec<f64>,
}

impl CellFactors {
    fn sample(&self, fs: &Arc<FunctionSpace>, cs: &Arc<FunctionSpace>, sm: &Supermesh, rng: &StreamRng) -> CoupledNoisePair {
        let mut bf = vec![0.0; fs.num_dofs()];
        let mut bc = vec![0.0; cs.num_dofs()];
        let mut z = [0.0; MAX_LOCAL];
        let (nz, mf, mc) = (self.nz, self.mf, self.mc);
        for e in 0..sm.num_cells() {
            rng.fill_normals(e as u32, &mut z[..nz]);
            let gf = &self.fine[e * mf * nz..(e + 1) * mf * nz];
            for (i, &d) in fs.cell_dofs(sm.parent_a[e]).iter().enumerate() {
                bf[d] += gf[i * nz..(i + 1) * nz].iter().zip(&z[..nz]).map(|(a, b)| a * b).sum::<f64>();
            }
            let gc = &self.coarse[e * mc * nz..(e + 1) * mc * nz];
            for (i, &d) in cs.cell_dofs(sm.parent_b[e]).iter().enumerate() {
                bc[d] += gc[i * nz..(i + 1) * nz].iter().zip(&z[..nz]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        CoupledNoisePair {
            fine: NoiseVector {
                space: fs.clone(),
                values: bf,
            },
            coarse: NoiseVector {
                space: cs.clone(),
                values: bc,
            },
        }
    }

    fn push(&mut self, gf: &DenseMatrix, gc: &DenseMatrix) {
        self.fine.extend_from_slice(gf.data());
        self.coarse.extend_from_slice(gc.data());
    }
}

/// Coupled sampler that works with the supermesh-cell Lagrange space:
/// `b^l_e = (R^l_e)^T H_r sqrt(|e| / |e_r|) z_e`, with the interpolation
/// matrices and scaled reference factor precomputed once.
#[derive(Debug, Clone)]
pub struct AffineCoupling {
    fine: Arc<FunctionSpace>,
    coarse: Arc<FunctionSpace>,
    supermesh: Arc<Supermesh>,
    factors: CellFactors,
}

impl AffineCoupling {
    /// The supermesh cells carry the Lagrange space of the larger of the two
    /// degrees, so both parent restrictions are exactly representable.
    pub fn new(fine: Arc<FunctionSpace>, coarse: Arc<FunctionSpace>, supermesh: Arc<Supermesh>) -> Result<Self> {
        check_pair(&fine, &coarse, &supermesh)?;
        let degree = fine.degree().max(coarse.degree());
        let h_ref = reference_mass(degree)?.cholesky()?;
        let nz = h_ref.rows();
        let (mf, mc) = (fine.dofs_per_cell(), coarse.dofs_per_cell());
        let n = supermesh.num_cells();
        let mut factors = CellFactors {
            nz,
            mf,
            mc,
            fine: Vec::with_capacity(n * mf * nz),
            coarse: Vec::with_capacity(n * mc * nz),
        };
        for e in 0..n {
            let tri = &supermesh.cells[e];
            let s = (supermesh.areas[e] / REF_AREA).sqrt();
            let rf = interpolation_matrix_with(
                fine.element(),
                &fine.mesh().cell_coords(supermesh.parent_a[e]),
                tri,
                degree,
            )?;
            let rc = interpolation_matrix_with(
                coarse.element(),
                &coarse.mesh().cell_coords(supermesh.parent_b[e]),
                tri,
                degree,
            )?;
            let mut gf = rf.transpose().matmul(&h_ref);
            gf.scale(s);
            let mut gc = rc.transpose().matmul(&h_ref);
            gc.scale(s);
            factors.push(&gf, &gc);
        }
        Ok(Self {
            fine,
            coarse,
            supermesh,
            factors,
        })
    }

    pub fn supermesh(&self) -> &Arc<Supermesh> {
        &self.supermesh
    }

    /// Supermesh cell `e` uses draws `0..m_S` of slot `e`.
    pub fn sample(&self, rng: &StreamRng) -> CoupledNoisePair {
        self.factors.sample(&self.fine, &self.coarse, &self.supermesh, rng)
    }
}

/// Coupled sampler that factors the fine local mass on each supermesh cell:
/// `b^f_e = H_e z_e`, `b^c_e = (M_e^{f,c})^T H_e^{-T} z_e` with
/// `M_e^f = H_e H_e^T`.
#[derive(Debug, Clone)]
pub struct GeneralCoupling {
    fine: Arc<FunctionSpace>,
    coarse: Arc<FunctionSpace>,
    supermesh: Arc<Supermesh>,
    factors: CellFactors,
}

impl GeneralCoupling {
    pub fn new(fine: Arc<FunctionSpace>, coarse: Arc<FunctionSpace>, supermesh: Arc<Supermesh>) -> Result<Self> {
        check_pair(&fine, &coarse, &supermesh)?;
        let (mf, mc) = (fine.dofs_per_cell(), coarse.dofs_per_cell());
        let n = supermesh.num_cells();
        let mut factors = CellFactors {
            nz: mf,
            mf,
            mc,
            fine: Vec::with_capacity(n * mf * mf),
            coarse: Vec::with_capacity(n * mc * mf),
        };
        for e in 0..n {
            let (ff, fc, _) = local_mass_blocks(&fine, &coarse, &supermesh, e);
            let h = ff.cholesky()?;
            // rows of (M^{f,c})^T H^{-T}: solve H y = column j of M^{f,c}
            let mut gc = DenseMatrix::zeros(mc, mf);
            let mut col = vec![0.0; mf];
            for j in 0..mc {
                for i in 0..mf {
                    col[i] = fc[(i, j)];
                }
                h.solve_lower(&mut col);
                for i in 0..mf {
                    gc[(j, i)] = col[i];
                }
            }
            factors.push(&h, &gc);
        }
        Ok(Self {
            fine,
            coarse,
            supermesh,
            factors,
        })
    }

    /// Supermesh cell `e` uses draws `0..m_fine` of slot `e`.
    pub fn sample(&self, rng: &StreamRng) -> CoupledNoisePair {
        self.factors.sample(&self.fine, &self.coarse, &self.supermesh, rng)
    }
}

/// One-shot wrapper around [`GeneralCoupling`].
pub fn sample_coupled_general(
    fine: &Arc<FunctionSpace>,
    coarse: &Arc<FunctionSpace>,
    supermesh: &Arc<Supermesh>,
    rng: &StreamRng,
) -> Result<CoupledNoisePair> {
    Ok(GeneralCoupling::new(fine.clone(), coarse.clone(), supermesh.clone())?.sample(rng))
}

/// One-shot wrapper around [`AffineCoupling`].
pub fn sample_coupled_affine(
    fine: &Arc<FunctionSpace>,
    coarse: &Arc<FunctionSpace>,
    supermesh: &Arc<Supermesh>,
    rng: &StreamRng,
) -> Result<CoupledNoisePair> {
    Ok(AffineCoupling::new(fine.clone(), coarse.clone(), supermesh.clone())?.sample(rng))
}

/// Affine coupling on a nested pair (the fine mesh refines the coarse one)
/// or on one mesh with two degrees, using the fine mesh as the supermesh.
pub fn nested_coupling(fine: Arc<FunctionSpace>, coarse: Arc<FunctionSpace>) -> Result<AffineCoupling> {
    let sm = nested_supermesh_view(coarse.mesh(), fine.mesh())?;
    AffineCoupling::new(fine, coarse, Arc::new(sm))
}

/// One-shot wrapper around [`nested_coupling`].
pub fn sample_coupled_nested(
    fine: &Arc<FunctionSpace>,
    coarse: &Arc<FunctionSpace>,
    rng: &StreamRng,
) -> Result<CoupledNoisePair> {
    Ok(nested_coupling(fine.clone(), coarse.clone())?.sample(rng))
}

/// How the coarse load of a level pair is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingMode {
    /// Shared white noise through the supermesh (correct coupling).
    Supermesh,
    /// Independent draws on each level: correct marginals, no correlation.
    Independent,
    /// The coarse load copies the fine load at the nearest fine dof. Not a
    /// white-noise sample on the coarse space; a deliberately broken coupling.
    Injection,
}

impl std::str::FromStr for CouplingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supermesh" => Ok(Self::Supermesh),
            "independent" => Ok(Self::Independent),
            "injection" => Ok(Self::Injection),
            _ => Err(Error::Config(format!(
                "unknown coupling '{s}' (expected supermesh, independent or injection)"
            ))),
        }
    }
}

impl std::fmt::Display for CouplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Supermesh => "supermesh",
            Self::Independent => "independent",
            Self::Injection => "injection",
        })
    }
}

/// A level-pair noise sampler in one of the [`CouplingMode`]s.
#[derive(Debug, Clone)]
pub enum Coupler {
    Supermesh(AffineCoupling),
    Independent {
        fine: IndependentSampler,
        coarse: IndependentSampler,
    },
    Injection {
        fine: IndependentSampler,
        coarse: Arc<FunctionSpace>,
        nearest: Vec<usize>,
    },
}

impl Coupler {
    /// Builds the coupler; the supermesh is only computed in supermesh mode
    /// (nested view when the fine mesh refines the coarse one or equals it).
    pub fn new(mode: CouplingMode, fine: Arc<FunctionSpace>, coarse: Arc<FunctionSpace>) -> Result<Self> {
        match mode {
            CouplingMode::Supermesh => {
                let (fm, cm) = (fine.mesh(), coarse.mesh());
                let sm = if Arc::ptr_eq(fm, cm) || **fm == **cm || mesh::is_nested_within(cm, fm) {
                    nested_supermesh_view(cm, fm)?
                } else {
                    crate::supermesh::build_supermesh(fm, cm)?
                };
                Ok(Self::Supermesh(AffineCoupling::new(fine, coarse, Arc::new(sm))?))
            }
            CouplingMode::Independent => Ok(Self::Independent {
                fine: IndependentSampler::new(fine)?,
                coarse: IndependentSampler::new(coarse)?,
            }),
            CouplingMode::Injection => {
                let fs = IndependentSampler::new(fine.clone())?;
                let nearest = coarse
                    .dof_coords()
                    .iter()
                    .map(|&x| nearest_dof(&fine, x))
                    .collect();
                Ok(Self::Injection {
                    fine: fs,
                    coarse,
                    nearest,
                })
            }
        }
    }

    pub fn sample(&self, rng: &StreamRng) -> CoupledNoisePair {
        match self {
            Self::Supermesh(c) => c.sample(rng),
            Self::Independent { fine, coarse } => CoupledNoisePair {
                fine: fine.sample(&rng.substream(FINE_STREAM)),
                coarse: coarse.sample(&rng.substream(COARSE_STREAM)),
            },
            Self::Injection {
                fine,
                coarse,
                nearest,
            } => {
                let f = fine.sample(rng);
                let values = nearest.iter().map(|&d| f.values[d]).collect();
                CoupledNoisePair {
                    fine: f,
                    coarse: NoiseVector {
                        space: coarse.clone(),
                        values,
                    },
                }
            }
        }
    }
}

/// Fine dof nearest to `x`, searched among the nodes of the cell containing
/// `x` (all dofs if `x` is outside the fine mesh).
fn nearest_dof(space: &FunctionSpace, x: Point) -> usize {
    let coords = space.dof_coords();
    let d2 = |d: usize| {
        let p = coords[d];
        (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)
    };
    let pick = |it: &mut dyn Iterator<Item = usize>| {
        it.min_by(|&a, &b| d2(a).partial_cmp(&d2(b)).unwrap().then(a.cmp(&b)))
            .expect("non-empty space")
    };
    match space.locate(x) {
        Some((c, _)) => pick(&mut space.cell_dofs(c).iter().copied()),
        None => pick(&mut (0..space.num_dofs())),
    }
}

#[cfg(test)]
mod tests;
