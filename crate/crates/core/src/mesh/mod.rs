//! Planar triangle meshes: construction, red refinement, interior
//! perturbation, quality metrics and the nestedness predicate.

mod embedded;
mod hierarchy;
pub mod io;

pub use embedded::{build_embedded_pair, extract_embedded, EmbeddedPair};
pub use hierarchy::{HierarchyConfig, HierarchyLevel, MeshHierarchy};

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::geometry::{self, BoundingBox, CellLocator, Point};
use crate::rng::StreamRng;

/// Relative tolerance for area bookkeeping.
pub const AREA_RTOL: f64 = 1e-12;

#[inline]
fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// A conforming triangulation with counter-clockwise cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
    boundary_vertices: Vec<bool>,
    boundary_edges: HashSet<(usize, usize)>,
}

impl Mesh {
    /// Validates indices and orientation and derives the boundary from the
    /// cell topology (edges with a single incident cell).
    pub fn new(vertices: Vec<Point>, cells: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        for (c, cell) in cells.iter().enumerate() {
            if cell.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("cell {c} references a missing vertex")));
            }
            if cell[0] == cell[1] || cell[1] == cell[2] || cell[0] == cell[2] {
                return Err(Error::InvalidMesh(format!("cell {c} repeats a vertex")));
            }
            let area = geometry::signed_area(vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]);
            if !(area > 0.0) {
                return Err(Error::InvalidMesh(format!("cell {c} has non-positive area {area:e}")));
            }
        }
        let mut used = vec![false; nv];
        cells.iter().flatten().for_each(|&v| used[v] = true);
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!("vertex {v} belongs to no cell")));
        }
        let mut counts: HashMap<(usize, usize), u32> = HashMap::with_capacity(cells.len() * 2);
        for cell in &cells {
            for e in 0..3 {
                *counts.entry(edge_key(cell[e], cell[(e + 1) % 3])).or_insert(0) += 1;
            }
        }
        if let Some((e, _)) = counts.iter().find(|(_, &n)| n > 2) {
            return Err(Error::InvalidMesh(format!("edge {e:?} shared by more than two cells")));
        }
        let boundary_edges: HashSet<_> = counts
            .into_iter()
            .filter_map(|(e, n)| (n == 1).then_some(e))
            .collect();
        let mut boundary_vertices = vec![false; nv];
        for &(a, b) in &boundary_edges {
            boundary_vertices[a] = true;
            boundary_vertices[b] = true;
        }
        Ok(Self {
            vertices,
            cells,
            boundary_vertices,
            boundary_edges,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertices[v]
    }

    pub fn boundary_vertices(&self) -> &[bool] {
        &self.boundary_vertices
    }

    pub fn is_boundary_edge(&self, a: usize, b: usize) -> bool {
        self.boundary_edges.contains(&edge_key(a, b))
    }

    /// True if the cell has at least one edge on the boundary.
    pub fn is_boundary_cell(&self, c: usize) -> bool {
        let t = self.cells[c];
        (0..3).any(|e| self.is_boundary_edge(t[e], t[(e + 1) % 3]))
    }

    #[inline]
    pub fn cell_coords(&self, c: usize) -> [Point; 3] {
        let t = self.cells[c];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn triangles(&self) -> Vec<[Point; 3]> {
        (0..self.num_cells()).map(|c| self.cell_coords(c)).collect()
    }

    #[inline]
    pub fn area(&self, c: usize) -> f64 {
        let t = self.cell_coords(c);
        geometry::signed_area(t[0], t[1], t[2])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.area(c)).sum()
    }

    /// Maximal element diameter.
    pub fn h(&self) -> f64 {
        (0..self.num_cells())
            .map(|c| geometry::diameter(&self.cell_coords(c)))
            .fold(0.0, f64::max)
    }

    pub fn bounding_box(&self) -> BoundingBox {
        BoundingBox::of_points(self.vertices.iter())
    }

    /// Checks that the cells tile `domain`: total area equal to the box area.
    pub fn check_tiles(&self, domain: &BoundingBox) -> Result<()> {
        let (got, want) = (self.total_area(), domain.area());
        if (got - want).abs() > AREA_RTOL * want {
            return Err(Error::InvalidMesh(format!(
                "cells cover area {got} but the domain has area {want}"
            )));
        }
        Ok(())
    }

    /// Point locator over the cells, binned at the mesh size.
    pub fn locator(&self) -> CellLocator {
        let tris = self.triangles();
        let bins = (self.num_cells() as f64).sqrt().max(1.0);
        let bb = self.bounding_box();
        CellLocator::new(&tris, bb.width().max(bb.height()) / bins)
    }

    /// Unique undirected edges, in first-seen order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut seen = HashSet::with_capacity(self.cells.len() * 2);
        let mut out = Vec::with_capacity(self.cells.len() * 2);
        for cell in &self.cells {
            for e in 0..3 {
                let k = edge_key(cell[e], cell[(e + 1) % 3]);
                if seen.insert(k) {
                    out.push(k);
                }
            }
        }
        out
    }
}

/// Uniform triangulation of a box with `nx` squares per axis, each split
/// along a diagonal whose direction alternates in a checkerboard pattern.
pub fn generate_structured(nx: usize, domain: &BoundingBox) -> Result<Mesh> {
    if nx == 0 {
        return Err(Error::InvalidInput("nx must be at least 1".into()));
    }
    if !(domain.width() > 0.0 && domain.height() > 0.0) {
        return Err(Error::InvalidInput("domain box must have positive side lengths".into()));
    }
    let (dx, dy) = (domain.width() / nx as f64, domain.height() / nx as f64);
    let mut vertices = Vec::with_capacity((nx + 1) * (nx + 1));
    for j in 0..=nx {
        for i in 0..=nx {
            let x = if i == nx { domain.max[0] } else { domain.min[0] + i as f64 * dx };
            let y = if j == nx { domain.max[1] } else { domain.min[1] + j as f64 * dy };
            vertices.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(2 * nx * nx);
    for j in 0..nx {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                cells.push([a, b, c]);
                cells.push([a, c, d]);
            } else {
                cells.push([a, b, d]);
                cells.push([b, c, d]);
            }
        }
    }
    let mesh = Mesh::new(vertices, cells)?;
    mesh.check_tiles(domain)?;
    Ok(mesh)
}

/// Red refinement: every triangle is split into four congruent children
/// through its edge midpoints.
pub fn refine_uniform(mesh: &Mesh) -> Result<Mesh> {
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::with_capacity(mesh.num_cells() * 2);
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
        *midpoint.entry(edge_key(a, b)).or_insert_with(|| {
            let (p, q) = (vertices[a], vertices[b]);
            vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
            vertices.len() - 1
        })
    };
    let mut cells = Vec::with_capacity(4 * mesh.num_cells());
    for &[a, b, c] in &mesh.cells {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        cells.push([a, ab, ca]);
        cells.push([ab, b, bc]);
        cells.push([ca, bc, c]);
        cells.push([ab, bc, ca]);
    }
    Mesh::new(vertices, cells)
}

const MAX_SHRINKS: usize = 30;

/// Moves interior vertices by a deterministic pseudo-random offset of length
/// at most `amplitude` times the shortest incident edge. Boundary vertices
/// stay fixed.
pub fn perturb_interior(mesh: &Mesh, amplitude: f64, seed: u64) -> Result<Mesh> {
    perturb_vertices(mesh, amplitude, seed, mesh.boundary_vertices())
}

/// Like [`perturb_interior`] but with an explicit set of fixed vertices
/// (which should include the boundary).
pub fn perturb_vertices(mesh: &Mesh, amplitude: f64, seed: u64, fixed: &[bool]) -> Result<Mesh> {
    perturb_with_floor(mesh, amplitude, seed, fixed, 0.0)
}

/// Like [`perturb_vertices`], but an offset is also shrunk while any incident
/// cell would end up with a radius ratio below `min(floor, its ratio before
/// the move)`. A vertex whose offset never qualifies stays where it is.
pub fn perturb_with_floor(mesh: &Mesh, amplitude: f64, seed: u64, fixed: &[bool], floor: f64) -> Result<Mesh> {
    if !(0.0..0.5).contains(&amplitude) {
        return Err(Error::InvalidInput(format!("amplitude {amplitude} outside [0, 0.5)")));
    }
    if fixed.len() != mesh.num_vertices() {
        return Err(Error::Dimension("fixed-vertex mask length".into()));
    }
    if amplitude == 0.0 {
        return Ok(mesh.clone());
    }
    let nv = mesh.num_vertices();
    let mut star: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (c, cell) in mesh.cells.iter().enumerate() {
        for &v in cell {
            star[v].push(c);
        }
    }
    let mut min_edge = vec![f64::INFINITY; nv];
    for (a, b) in mesh.edges() {
        let l = geometry::dist(mesh.vertices[a], mesh.vertices[b]);
        min_edge[a] = min_edge[a].min(l);
        min_edge[b] = min_edge[b].min(l);
    }
    let rng = StreamRng::new(seed).substream(0x7065_7274);
    let mut verts = mesh.vertices.clone();
    for v in 0..nv {
        if fixed[v] {
            continue;
        }
        let radius = amplitude * min_edge[v] * rng.uniform(v as u32, 0).sqrt();
        let angle = 2.0 * std::f64::consts::PI * rng.uniform(v as u32, 1);
        let (mut ox, mut oy) = (radius * angle.cos(), radius * angle.sin());
        let origin = verts[v];
        let quality = |verts: &[Point], c: usize| geometry::radius_ratio(&mesh.cells[c].map(|i| verts[i]));
        let bound: Vec<f64> = if floor > 0.0 {
            star[v].iter().map(|&c| floor.min(quality(&verts, c))).collect()
        } else {
            Vec::new()
        };
        let mut accepted = false;
        for _ in 0..MAX_SHRINKS {
            verts[v] = [origin[0] + ox, origin[1] + oy];
            let ok = star[v].iter().enumerate().all(|(k, &c)| {
                let t = mesh.cells[c];
                geometry::signed_area(verts[t[0]], verts[t[1]], verts[t[2]]) > 0.0
                    && (floor <= 0.0 || quality(&verts, c) >= bound[k])
            });
            if ok {
                accepted = true;
                break;
            }
            ox *= 0.5;
            oy *= 0.5;
        }
        if !accepted {
            if floor > 0.0 {
                verts[v] = origin;
            } else {
                return Err(Error::PerturbationFailed { vertex: v });
            }
        }
    }
    Mesh::new(verts, mesh.cells.clone())
}

/// Extremes of the radius ratio `2 r_in / r_circ` over all cells.
pub fn radius_ratios(mesh: &Mesh) -> (f64, f64) {
    (0..mesh.num_cells())
        .map(|c| geometry::radius_ratio(&mesh.cell_coords(c)))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
}

/// True if `coarse` is nested within `fine`: every coarse vertex is a fine
/// vertex and every fine cell lies inside a single coarse cell, so each
/// coarse cell is a union of fine cells.
pub fn is_nested_within(coarse: &Mesh, fine: &Mesh) -> bool {
    let scale = coarse.h().max(fine.h());
    let tol = 1e-10;
    if (coarse.total_area() - fine.total_area()).abs() > 1e-10 * coarse.total_area() {
        return false;
    }
    let fine_tris = fine.triangles();
    let fine_loc = fine.locator();
    for &p in coarse.vertices() {
        let Some((c, _)) = fine_loc.locate(&fine_tris, p, tol) else {
            return false;
        };
        if !fine_tris[c].iter().any(|&q| geometry::dist(p, q) <= tol * scale) {
            return false;
        }
    }
    let coarse_tris = coarse.triangles();
    let coarse_loc = coarse.locator();
    let mut covered = vec![0.0; coarse.num_cells()];
    for (f, t) in fine_tris.iter().enumerate() {
        let Some((c, _)) = coarse_loc.locate(&coarse_tris, geometry::centroid(t), tol) else {
            return false;
        };
        for &q in t {
            let l = geometry::barycentric(q, &coarse_tris[c]);
            if l.iter().any(|&x| x < -tol) {
                return false;
            }
        }
        covered[c] += fine.area(f);
    }
    covered
        .iter()
        .enumerate()
        .all(|(c, &a)| (a - coarse.area(c)).abs() <= 1e-10 * coarse.area(c))
}
