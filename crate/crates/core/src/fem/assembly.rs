//! Global assembly of mass, stiffness and Helmholtz operators, Dirichlet
//! elimination and local interpolation matrices.

use std::sync::Arc;

use super::dense::DenseMatrix;
use super::field::Field;
use super::lagrange::{barycentric_gradients, check_degree, LagrangeElement, MAX_LOCAL};
use super::quadrature::TriangleQuadrature;
use super::sparse::SparseMatrix;
use super::space::{FunctionSpace, LOCATE_TOL};
use crate::error::{Error, Result};
use crate::geometry::{barycentric, Point};

/// Area of the reference triangle.
pub const REF_AREA: f64 = 0.5;

/// Quadrature degree used for the coefficient-weighted stiffness.
pub const WEIGHTED_QUAD_DEGREE: usize = 7;

/// Basis values and barycentric derivatives tabulated at quadrature points.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub quad: TriangleQuadrature,
    pub dim: usize,
    pub phi: Vec<f64>,
    pub dphi: Vec<[f64; 3]>,
}

impl Tabulation {
    pub fn new(element: &LagrangeElement, quad: TriangleQuadrature) -> Self {
        let dim = element.dim();
        let mut phi = vec![0.0; quad.len() * dim];
        let mut dphi = vec![[0.0; 3]; quad.len() * dim];
        for (q, p) in quad.points.iter().enumerate() {
            let l = [1.0 - p[0] - p[1], p[0], p[1]];
            element.eval(l, &mut phi[q * dim..(q + 1) * dim]);
            element.eval_grad_bary(l, &mut dphi[q * dim..(q + 1) * dim]);
        }
        Self {
            quad,
            dim,
            phi,
            dphi,
        }
    }

    pub fn phi_at(&self, q: usize) -> &[f64] {
        &self.phi[q * self.dim..(q + 1) * self.dim]
    }

    pub fn dphi_at(&self, q: usize) -> &[[f64; 3]] {
        &self.dphi[q * self.dim..(q + 1) * self.dim]
    }
}

/// Exact mass matrix of the degree-`degree` element on the reference triangle.
pub fn reference_mass(degree: usize) -> Result<DenseMatrix> {
    check_degree(degree)?;
    let e = LagrangeElement::new(degree)?;
    let t = Tabulation::new(&e, TriangleQuadrature::for_degree(2 * degree));
    let m = e.dim();
    let mut out = DenseMatrix::zeros(m, m);
    for (q, w) in t.quad.weights.iter().enumerate() {
        let phi = t.phi_at(q);
        for i in 0..m {
            for j in 0..m {
                out[(i, j)] += w * phi[i] * phi[j];
            }
        }
    }
    let sym = out.clone();
    for i in 0..m {
        for j in 0..m {
            out[(i, j)] = 0.5 * (sym[(i, j)] + sym[(j, i)]);
        }
    }
    Ok(out)
}

/// Scatter per-cell dense blocks into the space's sparsity pattern.
fn assemble_cells(space: &FunctionSpace, mut local: impl FnMut(usize, &mut [f64])) -> SparseMatrix {
    let pat = space.pattern();
    let me = space.dofs_per_cell();
    let mut values = vec![0.0; pat.indices.len()];
    let mut block = vec![0.0; me * me];
    for c in 0..space.mesh().num_cells() {
        block.iter_mut().for_each(|v| *v = 0.0);
        local(c, &mut block);
        let pos = &pat.positions[c * me * me..(c + 1) * me * me];
        for (p, v) in pos.iter().zip(&block) {
            values[*p] += v;
        }
    }
    let n = space.num_dofs();
    SparseMatrix::from_csr(n, n, pat.indptr.clone(), pat.indices.clone(), values)
        .expect("pattern is valid CSR")
}

/// Global mass matrix using affine scaling of the reference mass.
pub fn assemble_mass(space: &FunctionSpace) -> SparseMatrix {
    let mref = reference_mass(space.degree()).expect("space degree is valid");
    let mesh = space.mesh().clone();
    assemble_cells(space, |c, block| {
        let s = mesh.area(c) / REF_AREA;
        for (b, r) in block.iter_mut().zip(mref.data()) {
            *b = s * r;
        }
    })
}

fn stiffness_with(space: &FunctionSpace, tab: &Tabulation, weight: impl Fn(usize, usize) -> f64) -> SparseMatrix {
    let mesh = space.mesh().clone();
    let me = space.dofs_per_cell();
    let mut grads = [[0.0f64; 2]; MAX_LOCAL];
    assemble_cells(space, |c, block| {
        let tri = mesh.cell_coords(c);
        let gl = barycentric_gradients(&tri);
        let jac = mesh.area(c) / REF_AREA;
        for (q, w) in tab.quad.weights.iter().enumerate() {
            let wq = w * jac * weight(c, q);
            for (g, d) in grads.iter_mut().zip(tab.dphi_at(q)) {
                *g = [
                    d[0] * gl[0][0] + d[1] * gl[1][0] + d[2] * gl[2][0],
                    d[0] * gl[0][1] + d[1] * gl[1][1] + d[2] * gl[2][1],
                ];
            }
            for i in 0..me {
                for j in 0..me {
                    block[i * me + j] += wq * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                }
            }
        }
    })
}

/// Global stiffness matrix `K_ij = (grad phi_i, grad phi_j)`.
pub fn assemble_stiffness(space: &FunctionSpace) -> SparseMatrix {
    let p = space.degree();
    let tab = Tabulation::new(space.element(), TriangleQuadrature::for_degree(2 * (p - 1)));
    stiffness_with(space, &tab, |_, _| 1.0)
}

/// `A = M + kappa^-2 K`.
pub fn assemble_helmholtz(space: &FunctionSpace, kappa: f64) -> Result<SparseMatrix> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidInput(format!("kappa must be positive, got {kappa}")));
    }
    let m = assemble_mass(space);
    let k = assemble_stiffness(space);
    m.linear_combination(1.0, &k, 1.0 / (kappa * kappa))
}

/// `K_ij = int exp(u_h) grad phi_i . grad phi_j` with `u_h = coeff`, which
/// must live on the same mesh as `space`.
pub fn assemble_weighted_stiffness(space: &FunctionSpace, coeff: &Field) -> Result<SparseMatrix> {
    let cs = coeff.space();
    if !(Arc::ptr_eq(space.mesh(), cs.mesh()) || **space.mesh() == **cs.mesh()) {
        return Err(Error::Dimension("coefficient lives on a different mesh".into()));
    }
    let degree = WEIGHTED_QUAD_DEGREE.max(2 * (space.degree() - 1) + cs.degree());
    let quad = TriangleQuadrature::for_degree(degree);
    let tab = Tabulation::new(space.element(), quad.clone());
    let ctab = Tabulation::new(cs.element(), quad);
    let nq = ctab.quad.len();
    let nc = space.mesh().num_cells();
    let vals = coeff.values();
    // exp(u_h) at every quadrature point of every cell
    let mut weights = vec![0.0; nc * nq];
    for c in 0..nc {
        let dofs = cs.cell_dofs(c);
        for q in 0..nq {
            let u: f64 = dofs.iter().zip(ctab.phi_at(q)).map(|(&d, f)| vals[d] * f).sum();
            weights[c * nq + q] = u.exp();
        }
    }
    Ok(stiffness_with(space, &tab, |c, q| weights[c * nq + q]))
}

/// Symmetric elimination of Dirichlet dofs: boundary rows and columns become
/// identity rows, `rhs` is lifted and set to `value` on the boundary.
pub fn apply_dirichlet(a: &mut SparseMatrix, rhs: &mut [f64], boundary: &[bool], value: f64) {
    if value != 0.0 {
        for i in 0..a.nrows() {
            if boundary[i] {
                continue;
            }
            let (cols, vals) = a.row(i);
            let lift: f64 = cols
                .iter()
                .zip(vals)
                .filter(|(&j, _)| boundary[j])
                .map(|(_, v)| v * value)
                .sum();
            rhs[i] -= lift;
        }
    }
    apply_dirichlet_matrix(a, boundary);
    for (r, &b) in rhs.iter_mut().zip(boundary) {
        if b {
            *r = value;
        }
    }
}

/// Matrix part of [`apply_dirichlet`], for operators reused across many
/// right-hand sides with homogeneous data.
pub fn apply_dirichlet_matrix(a: &mut SparseMatrix, boundary: &[bool]) {
    let n = a.nrows();
    let indptr = a.indptr().to_vec();
    let indices = a.indices().to_vec();
    let vals = a.values_mut();
    for i in 0..n {
        for k in indptr[i]..indptr[i + 1] {
            let j = indices[k];
            if boundary[i] || boundary[j] {
                vals[k] = if i == j { 1.0 } else { 0.0 };
            }
        }
    }
}

/// Zero the boundary entries of a right-hand side.
pub fn zero_boundary(rhs: &mut [f64], boundary: &[bool]) {
    for (r, &b) in rhs.iter_mut().zip(boundary) {
        if b {
            *r = 0.0;
        }
    }
}

/// `R[i][j] = phi_j(x_i)` where `phi_j` are the basis functions of `parent`
/// on triangle `parent_tri` and `x_i` the degree-`child_degree` Lagrange
/// nodes of `child`. Expresses parent basis functions in the child basis.
pub fn interpolation_matrix_with(
    parent: &LagrangeElement,
    parent_tri: &[Point; 3],
    child: &[Point; 3],
    child_degree: usize,
) -> Result<DenseMatrix> {
    let ce = LagrangeElement::new(child_degree)?;
    let nodes = ce.node_points(child);
    let mut r = DenseMatrix::zeros(nodes.len(), parent.dim());
    let mut phi = [0.0; MAX_LOCAL];
    for (i, &x) in nodes.iter().enumerate() {
        let l = barycentric(x, parent_tri);
        let min = l[0].min(l[1]).min(l[2]);
        if min < -LOCATE_TOL {
            return Err(Error::Containment {
                x: x[0],
                y: x[1],
                min_bary: min,
            });
        }
        parent.eval(l, &mut phi[..parent.dim()]);
        for j in 0..parent.dim() {
            r[(i, j)] = phi[j];
        }
    }
    Ok(r)
}

/// Interpolation matrix from cell `parent_cell` of `space` onto a child
/// triangle, in the child's Lagrange basis of the same degree.
pub fn interpolation_matrix(space: &FunctionSpace, parent_cell: usize, child: &[Point; 3]) -> Result<DenseMatrix> {
    interpolation_matrix_with(
        space.element(),
        &space.mesh().cell_coords(parent_cell),
        child,
        space.degree(),
    )
}

/// `u^T M u`, accumulated cell by cell.
pub fn l2_norm_sq(field: &Field) -> f64 {
    let space = field.space();
    let mref = reference_mass(space.degree()).expect("space degree is valid");
    let me = space.dofs_per_cell();
    let v = field.values();
    let mut u = [0.0; MAX_LOCAL];
    let mut total = 0.0;
    for c in 0..space.mesh().num_cells() {
        for (x, &d) in u.iter_mut().zip(space.cell_dofs(c)) {
            *x = v[d];
        }
        let mut s = 0.0;
        for i in 0..me {
            let row = mref.row(i);
            let r: f64 = row.iter().zip(&u[..me]).map(|(a, b)| a * b).sum();
            s += u[i] * r;
        }
        total += s * space.mesh().area(c) / REF_AREA;
    }
    total
}
