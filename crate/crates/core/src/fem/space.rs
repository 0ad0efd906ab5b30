//! Lagrange function spaces: global dof numbering and node coordinates.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use super::lagrange::{LagrangeElement, MAX_LOCAL};
use crate::error::{Error, Result};
use crate::geometry::{CellLocator, Point};
use crate::mesh::Mesh;

/// Barycentric tolerance for point location.
pub const LOCATE_TOL: f64 = 1e-10;

/// CSR sparsity of the global operator plus, for each cell, the position of
/// each local entry `(i, j)` in the value array.
#[derive(Debug)]
pub(crate) struct Pattern {
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub positions: Vec<usize>,
}

#[derive(Debug)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    element: LagrangeElement,
    cell_dofs: Vec<usize>,
    dof_coords: Vec<Point>,
    boundary: Vec<bool>,
    pattern: OnceLock<Pattern>,
    locator: OnceLock<(CellLocator, Vec<[Point; 3]>)>,
}

impl FunctionSpace {
    /// Degree-`degree` continuous Lagrange space. Vertex dofs keep the mesh
    /// vertex numbering; edge and interior dofs follow in first-seen order.
    pub fn new(mesh: Arc<Mesh>, degree: usize) -> Result<Self> {
        let element = LagrangeElement::new(degree)?;
        let me = element.dim();
        let nv = mesh.num_vertices();
        let mut cell_dofs = Vec::with_capacity(mesh.num_cells() * me);
        let mut dof_coords: Vec<Point> = mesh.vertices().to_vec();
        let mut boundary: Vec<bool> = mesh.boundary_vertices().to_vec();
        // Non-vertex nodes are keyed by their sorted (vertex, multiplicity) support.
        let mut keys: HashMap<[(usize, u8); 3], usize> = HashMap::new();
        for (c, cell) in mesh.cells().iter().enumerate() {
            let tri = mesh.cell_coords(c);
            for (i, node) in element.nodes().iter().enumerate() {
                if i < 3 {
                    cell_dofs.push(cell[i]);
                    continue;
                }
                let mut key = [(usize::MAX, 0u8); 3];
                let mut n = 0;
                for k in 0..3 {
                    if node[k] > 0 {
                        key[n] = (cell[k], node[k]);
                        n += 1;
                    }
                }
                key[..n].sort_unstable();
                let next = dof_coords.len();
                let dof = *keys.entry(key).or_insert_with(|| {
                    let l = element.node_barycentric(i);
                    dof_coords.push([
                        l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0],
                        l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1],
                    ]);
                    boundary.push(n == 2 && mesh.is_boundary_edge(key[0].0, key[1].0));
                    next
                });
                cell_dofs.push(dof);
            }
        }
        debug_assert!(dof_coords.len() >= nv);
        Ok(Self {
            mesh,
            element,
            cell_dofs,
            dof_coords,
            boundary,
            pattern: OnceLock::new(),
            locator: OnceLock::new(),
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn element(&self) -> &LagrangeElement {
        &self.element
    }

    pub fn degree(&self) -> usize {
        self.element.degree()
    }

    /// Local dimension m_e.
    pub fn dofs_per_cell(&self) -> usize {
        self.element.dim()
    }

    pub fn num_dofs(&self) -> usize {
        self.dof_coords.len()
    }

    pub fn cell_dofs(&self, c: usize) -> &[usize] {
        let me = self.dofs_per_cell();
        &self.cell_dofs[c * me..(c + 1) * me]
    }

    pub fn dof_coords(&self) -> &[Point] {
        &self.dof_coords
    }

    pub fn is_boundary_dof(&self, d: usize) -> bool {
        self.boundary[d]
    }

    pub fn boundary_dofs(&self) -> &[bool] {
        &self.boundary
    }

    /// Interpolate a function at the dof nodes.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.dof_coords.iter().map(|&p| f(p)).collect()
    }

    pub(crate) fn pattern(&self) -> &Pattern {
        self.pattern.get_or_init(|| self.build_pattern())
    }

    fn build_pattern(&self) -> Pattern {
        let n = self.num_dofs();
        let me = self.dofs_per_cell();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for c in 0..self.mesh.num_cells() {
            let dofs = self.cell_dofs(c);
            for &i in dofs {
                rows[i].extend_from_slice(dofs);
            }
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            indices.extend_from_slice(r);
            indptr.push(indices.len());
        }
        let mut positions = Vec::with_capacity(self.mesh.num_cells() * me * me);
        for c in 0..self.mesh.num_cells() {
            let dofs = self.cell_dofs(c);
            for &i in dofs {
                let row = &indices[indptr[i]..indptr[i + 1]];
                for &j in dofs {
                    positions.push(indptr[i] + row.binary_search(&j).expect("pattern entry"));
                }
            }
        }
        Pattern {
            indptr,
            indices,
            positions,
        }
    }

    fn locator(&self) -> &(CellLocator, Vec<[Point; 3]>) {
        self.locator
            .get_or_init(|| (self.mesh.locator(), self.mesh.triangles()))
    }

    /// Cell containing `p` and its barycentric coordinates there.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let (loc, tris) = self.locator();
        loc.locate(tris, p, LOCATE_TOL)
    }

    /// Evaluate the finite-element function with coefficients `values` at `p`.
    pub fn eval(&self, values: &[f64], p: Point) -> Result<f64> {
        let (c, l) = self
            .locate(p)
            .ok_or(Error::OutsideMesh { x: p[0], y: p[1] })?;
        Ok(self.eval_in_cell(values, c, l))
    }

    /// Evaluate at barycentric point `l` of cell `c`.
    pub fn eval_in_cell(&self, values: &[f64], c: usize, l: [f64; 3]) -> f64 {
        let mut phi = [0.0; MAX_LOCAL];
        let me = self.dofs_per_cell();
        self.element.eval(l, &mut phi[..me]);
        self.cell_dofs(c)
            .iter()
            .zip(&phi[..me])
            .map(|(&d, f)| values[d] * f)
            .sum()
    }
}
