use std::collections::HashMap;

use super::{generate_structured, Mesh, AREA_RTOL};
use crate::error::{Error, Result};
use crate::geometry::{centroid, BoundingBox};

/// An inner mesh whose cells and vertices are cells and vertices of an outer
/// mesh, so fields transfer exactly by index lookup.
#[derive(Debug, Clone)]
pub struct EmbeddedPair {
    pub outer: Mesh,
    pub inner: Mesh,
    /// Inner cell -> outer cell.
    pub cell_map: Vec<usize>,
    /// Inner vertex -> outer vertex.
    pub vertex_map: Vec<usize>,
}

/// Extracts the cells of `outer` lying in `inner_box`. Fails unless the
/// extracted cells tile the box exactly.
pub fn extract_embedded(outer: &Mesh, inner_box: &BoundingBox) -> Result<(Mesh, Vec<usize>, Vec<usize>)> {
    let tol = 1e-12 * (inner_box.width() + inner_box.height());
    let mut cell_map = Vec::new();
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut vertex_map = Vec::new();
    let mut cells = Vec::new();
    for (c, cell) in outer.cells().iter().enumerate() {
        let t = outer.cell_coords(c);
        if !inner_box.contains(centroid(&t), -tol) {
            continue;
        }
        if t.iter().any(|&p| !inner_box.contains(p, tol)) {
            return Err(Error::NotAligned(format!("outer cell {c} straddles the inner boundary")));
        }
        let mut idx = [0; 3];
        for (k, &v) in cell.iter().enumerate() {
            idx[k] = *local.entry(v).or_insert_with(|| {
                vertex_map.push(v);
                vertex_map.len() - 1
            });
        }
        cells.push(idx);
        cell_map.push(c);
    }
    let vertices = vertex_map.iter().map(|&v| outer.vertices()[v]).collect();
    let inner = Mesh::new(vertices, cells)?;
    let (got, want) = (inner.total_area(), inner_box.area());
    if (got - want).abs() > AREA_RTOL * want {
        return Err(Error::NotAligned(format!("extracted area {got} differs from box area {want}")));
    }
    Ok((inner, cell_map, vertex_map))
}

/// Structured outer mesh on `outer_box` with an embedded inner mesh of
/// `inner_box`. The box corners of the inner domain must be lattice points.
pub fn build_embedded_pair(inner_box: &BoundingBox, outer_box: &BoundingBox, nx: usize) -> Result<EmbeddedPair> {
    let strictly_inside = inner_box.min[0] > outer_box.min[0]
        && inner_box.min[1] > outer_box.min[1]
        && inner_box.max[0] < outer_box.max[0]
        && inner_box.max[1] < outer_box.max[1];
    if !strictly_inside {
        return Err(Error::InvalidInput("inner box must lie strictly inside the outer box".into()));
    }
    let outer = generate_structured(nx, outer_box)?;
    let (inner, cell_map, vertex_map) = extract_embedded(&outer, inner_box)?;
    Ok(EmbeddedPair {
        outer,
        inner,
        cell_map,
        vertex_map,
    })
}
