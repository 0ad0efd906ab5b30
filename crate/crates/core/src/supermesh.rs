//! Common refinements (supermeshes) of two triangulations of one domain.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{self, BoundingBox, CellLocator, Point};
use crate::mesh::{self, Mesh};

/// Cells with area at most this fraction of the smaller parent are culled.
pub const AREA_EPSILON: f64 = 1e-12;
/// Relative tolerance on total area conservation.
pub const AREA_RTOL: f64 = 1e-10;
/// Length tolerance (relative to parent size) for merging clip vertices.
const MERGE_RTOL: f64 = 1e-12;

/// Triangles each contained in one cell of mesh A and one cell of mesh B.
#[derive(Debug, Clone, PartialEq)]
pub struct Supermesh {
    pub cells: Vec<[Point; 3]>,
    pub parent_a: Vec<usize>,
    pub parent_b: Vec<usize>,
    pub areas: Vec<f64>,
}

impl Supermesh {
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Writes the cells in mesh text format and one `a b` parent line per cell.
    pub fn write<W1: Write, W2: Write>(&self, mesh_out: W1, mut pairs_out: W2) -> Result<()> {
        let scale = self
            .cells
            .iter()
            .flatten()
            .fold(0.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()))
            .max(1.0);
        let q = |v: f64| (v / (scale * 1e-11)).round() as i64;
        let mut index: HashMap<(i64, i64), usize> = HashMap::new();
        let mut vertices = Vec::new();
        let mut cells = Vec::with_capacity(self.cells.len());
        for tri in &self.cells {
            let mut c = [0usize; 3];
            for (k, p) in tri.iter().enumerate() {
                c[k] = *index.entry((q(p[0]), q(p[1]))).or_insert_with(|| {
                    vertices.push(*p);
                    vertices.len() - 1
                });
            }
            cells.push(c);
        }
        let m = Mesh::new(vertices, cells)?;
        mesh::io::write_mesh(&m, mesh_out)?;
        for (a, b) in self.parent_a.iter().zip(&self.parent_b) {
            writeln!(pairs_out, "{a} {b}")?;
        }
        Ok(())
    }
}

/// Intersects every cell of `a` with the overlapping cells of `b`, found via
/// a uniform grid sized to the coarser mesh, and fan-triangulates each
/// non-empty convex intersection.
pub fn build_supermesh(a: &Mesh, b: &Mesh) -> Result<Supermesh> {
    let (area_a, area_b) = (a.total_area(), b.total_area());
    if (area_a - area_b).abs() > AREA_RTOL * area_a.max(area_b) {
        return Err(Error::SupermeshArea {
            got: area_b,
            expected: area_a,
        });
    }
    let tris_a = a.triangles();
    let tris_b = b.triangles();
    let bin = a.h().max(b.h());
    let locator = CellLocator::new(&tris_b, bin);

    let pieces: Vec<Vec<([Point; 3], usize, usize, f64)>> = (0..tris_a.len())
        .into_par_iter()
        .map_init(
            || (vec![false; tris_b.len()], Vec::new()),
            |(seen, poly), ca| {
                let ta = &tris_a[ca];
                let area_ea = a.area(ca);
                let mut out = Vec::new();
                let bb = BoundingBox::of_points(ta.iter());
                let mut cands = Vec::new();
                locator.for_each_candidate(&bb, seen, |cb| cands.push(cb));
                for cb in cands {
                    let tb = &tris_b[cb];
                    geometry::clip_by_triangle(ta, tb, poly);
                    let size = geometry::diameter(ta).min(geometry::diameter(tb));
                    geometry::clean_polygon(poly, MERGE_RTOL * size);
                    if poly.len() < 3 {
                        continue;
                    }
                    let cull = AREA_EPSILON * area_ea.min(b.area(cb));
                    for k in 1..poly.len() - 1 {
                        let t = [poly[0], poly[k], poly[k + 1]];
                        let s = geometry::signed_area(t[0], t[1], t[2]);
                        if s > cull {
                            out.push((t, ca, cb, s));
                        }
                    }
                }
                out
            },
        )
        .collect();

    let n: usize = pieces.iter().map(Vec::len).sum();
    let mut sm = Supermesh {
        cells: Vec::with_capacity(n),
        parent_a: Vec::with_capacity(n),
        parent_b: Vec::with_capacity(n),
        areas: Vec::with_capacity(n),
    };
    for (t, ca, cb, s) in pieces.into_iter().flatten() {
        sm.cells.push(t);
        sm.parent_a.push(ca);
        sm.parent_b.push(cb);
        sm.areas.push(s);
    }
    let got = sm.total_area();
    if (got - area_a).abs() > AREA_RTOL * area_a {
        return Err(Error::SupermeshArea {
            got,
            expected: area_a,
        });
    }
    Ok(sm)
}

/// Supermesh of a nested pair taken to be the fine mesh itself. `parent_a`
/// indexes `fine` (identity) and `parent_b` indexes `coarse`, matching
/// `build_supermesh(fine, coarse)`. The same mesh on both sides yields the
/// identity view used for p-refinement.
pub fn nested_supermesh_view(coarse: &Mesh, fine: &Mesh) -> Result<Supermesh> {
    let n = fine.num_cells();
    if std::ptr::eq(coarse, fine) || coarse == fine {
        return Ok(Supermesh {
            cells: fine.triangles(),
            parent_a: (0..n).collect(),
            parent_b: (0..n).collect(),
            areas: (0..n).map(|c| fine.area(c)).collect(),
        });
    }
    if !mesh::is_nested_within(coarse, fine) {
        return Err(Error::NotNested(
            "fine mesh does not refine the coarse mesh".into(),
        ));
    }
    let loc = coarse.locator();
    let coarse_tris = coarse.triangles();
    let mut parent_b = Vec::with_capacity(n);
    for c in 0..n {
        let g = geometry::centroid(&fine.cell_coords(c));
        let (cb, _) = loc
            .locate(&coarse_tris, g, 1e-12)
            .ok_or(Error::OutsideMesh { x: g[0], y: g[1] })?;
        parent_b.push(cb);
    }
    Ok(Supermesh {
        cells: fine.triangles(),
        parent_a: (0..n).collect(),
        parent_b,
        areas: (0..n).map(|c| fine.area(c)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_structured, perturb_interior, refine_uniform};
    use crate::mesh::{HierarchyConfig, MeshHierarchy};
    use crate::rng::StreamRng;

    fn unit_square(diag_up: bool) -> Mesh {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let cells = if diag_up {
            vec![[0, 1, 2], [0, 2, 3]]
        } else {
            vec![[0, 1, 3], [1, 2, 3]]
        };
        Mesh::new(v, cells).unwrap()
    }

    fn check_invariants(sm: &Supermesh, a: &Mesh, b: &Mesh) {
        let dom = a.total_area();
        assert!((sm.total_area() - dom).abs() <= 1e-10 * dom);
        let mut sum_a = vec![0.0; a.num_cells()];
        let mut sum_b = vec![0.0; b.num_cells()];
        let rng = StreamRng::new(3);
        for (k, t) in sm.cells.iter().enumerate() {
            sum_a[sm.parent_a[k]] += sm.areas[k];
            sum_b[sm.parent_b[k]] += sm.areas[k];
            assert!(sm.areas[k] > 0.0);
            // random interior points lie in both parents
            for d in 0..5u32 {
                let (mut r, mut s) = (rng.uniform(k as u32, 2 * d), rng.uniform(k as u32, 2 * d + 1));
                if r + s > 1.0 {
                    r = 1.0 - r;
                    s = 1.0 - s;
                }
                let p = [
                    t[0][0] + r * (t[1][0] - t[0][0]) + s * (t[2][0] - t[0][0]),
                    t[0][1] + r * (t[1][1] - t[0][1]) + s * (t[2][1] - t[0][1]),
                ];
                for (m, c) in [(a, sm.parent_a[k]), (b, sm.parent_b[k])] {
                    let l = geometry::barycentric(p, &m.cell_coords(c));
                    assert!(l.iter().all(|&x| x >= -1e-12), "{l:?}");
                }
            }
        }
        for (c, s) in sum_a.iter().enumerate() {
            assert!((s - a.area(c)).abs() <= 1e-10 * a.area(c));
        }
        for (c, s) in sum_b.iter().enumerate() {
            assert!((s - b.area(c)).abs() <= 1e-10 * b.area(c));
        }
    }

    #[test]
    fn two_diagonals() {
        let a = unit_square(true);
        let b = unit_square(false);
        let sm = build_supermesh(&a, &b).unwrap();
        assert_eq!(sm.num_cells(), 4);
        for s in &sm.areas {
            assert!((s - 0.25).abs() < 1e-14);
        }
        check_invariants(&sm, &a, &b);
    }

    #[test]
    fn self_intersection_is_identity() {
        let m = perturb_interior(
            &generate_structured(6, &BoundingBox::new([0.0, 0.0], [1.0, 1.0])).unwrap(),
            0.2,
            5,
        )
        .unwrap();
        let sm = build_supermesh(&m, &m).unwrap();
        assert_eq!(sm.num_cells(), m.num_cells());
        assert_eq!(sm.parent_a, sm.parent_b);
        check_invariants(&sm, &m, &m);
    }

    #[test]
    fn hierarchy_pair_is_linear_and_deterministic() {
        let h = MeshHierarchy::build(&HierarchyConfig {
            levels: 3,
            ..Default::default()
        })
        .unwrap();
        let (fine, coarse) = (&h.level(3).outer, &h.level(2).outer);
        let sm = build_supermesh(fine, coarse).unwrap();
        check_invariants(&sm, fine, coarse);
        let ratio = sm.num_cells() as f64 / fine.num_cells() as f64;
        assert!(ratio <= 4.0 && ratio > 1.0, "ratio {ratio}");
        assert_eq!(sm, build_supermesh(fine, coarse).unwrap());
    }

    #[test]
    fn mismatched_domains_rejected() {
        let a = generate_structured(2, &BoundingBox::new([0.0, 0.0], [1.0, 1.0])).unwrap();
        let b = generate_structured(2, &BoundingBox::new([0.0, 0.0], [1.0, 2.0])).unwrap();
        assert!(matches!(build_supermesh(&a, &b), Err(Error::SupermeshArea { .. })));
    }

    #[test]
    fn nested_view() {
        let coarse = generate_structured(3, &BoundingBox::new([0.0, 0.0], [1.0, 1.0])).unwrap();
        let fine = refine_uniform(&coarse).unwrap();
        let sm = nested_supermesh_view(&coarse, &fine).unwrap();
        assert_eq!(sm.num_cells(), 4 * coarse.num_cells());
        assert_eq!(sm.total_area(), fine.total_area());
        check_invariants(&sm, &fine, &coarse);
        let same = nested_supermesh_view(&coarse, &coarse).unwrap();
        assert_eq!(same.parent_a, same.parent_b);
        let wobbly = perturb_interior(&fine, 0.2, 1).unwrap();
        assert!(matches!(nested_supermesh_view(&coarse, &wobbly), Err(Error::NotNested(_))));
    }

    #[test]
    fn export_formats() {
        let sm = build_supermesh(&unit_square(true), &unit_square(false)).unwrap();
        let (mut m, mut p) = (Vec::new(), Vec::new());
        sm.write(&mut m, &mut p).unwrap();
        let back = mesh::io::read_mesh(&m[..]).unwrap();
        assert_eq!(back.num_cells(), 4);
        assert_eq!(back.num_vertices(), 5);
        assert_eq!(String::from_utf8(p).unwrap().lines().count(), 4);
    }
}
