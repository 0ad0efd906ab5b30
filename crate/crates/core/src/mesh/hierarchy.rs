use std::sync::Arc;

use super::{extract_embedded, generate_structured, perturb_with_floor, refine_uniform, Mesh};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Parameters of a refine-then-perturb hierarchy of embedded mesh pairs.
#[derive(Debug, Clone)]
pub struct HierarchyConfig {
    pub outer: BoundingBox,
    pub inner: BoundingBox,
    /// Squares per axis of the uniform level-1 mesh.
    pub base_nx: usize,
    pub levels: usize,
    /// Perturbation amplitude for levels >= 2 (level 1 stays uniform).
    pub amplitude: f64,
    /// Radius ratio below which a midpoint offset is shrunk, so that shape
    /// distortion does not compound across levels.
    pub quality_floor: f64,
    pub seed: u64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            outer: BoundingBox::new([-1.0, -1.0], [1.0, 1.0]),
            inner: BoundingBox::new([-0.5, -0.5], [0.5, 0.5]),
            base_nx: 4,
            levels: 6,
            amplitude: 0.2,
            quality_floor: 0.4,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HierarchyLevel {
    pub outer: Arc<Mesh>,
    pub inner: Arc<Mesh>,
    pub cell_map: Vec<usize>,
    pub vertex_map: Vec<usize>,
    pub h: f64,
}

/// Outer sampling meshes D_h^l with embedded inner meshes G_h^l. Consecutive
/// levels are not nested once perturbed.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    pub levels: Vec<HierarchyLevel>,
}

impl MeshHierarchy {
    pub fn build(config: &HierarchyConfig) -> Result<Self> {
        if config.levels == 0 {
            return Err(Error::InvalidInput("hierarchy needs at least one level".into()));
        }
        let base = generate_structured(config.base_nx, &config.outer)?;
        let tol = 1e-12 * (config.outer.width() + config.outer.height());
        let mut levels = Vec::with_capacity(config.levels);
        let mut prev = Arc::new(base);
        for l in 1..=config.levels {
            let outer = if l == 1 {
                prev.clone()
            } else {
                // only the new midpoints move, so inherited vertices stay shared
                // while fine edges leave the coarse ones
                let refined = refine_uniform(&prev)?;
                let inherited = prev.num_vertices();
                let fixed: Vec<bool> = refined
                    .vertices()
                    .iter()
                    .enumerate()
                    .map(|(v, &p)| v < inherited || refined.is_boundary_vertex(v) || config.inner.on_boundary(p, tol))
                    .collect();
                Arc::new(perturb_with_floor(
                    &refined,
                    config.amplitude,
                    config.seed.wrapping_add(l as u64),
                    &fixed,
                    config.quality_floor,
                )?)
            };
            let (inner, cell_map, vertex_map) = extract_embedded(&outer, &config.inner)?;
            let h = outer.h();
            levels.push(HierarchyLevel {
                outer: outer.clone(),
                inner: Arc::new(inner),
                cell_map,
                vertex_map,
                h,
            });
            prev = outer;
        }
        Ok(Self { levels })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Level `l`, counted from 1.
    pub fn level(&self, l: usize) -> &HierarchyLevel {
        &self.levels[l - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{is_nested_within, radius_ratios};

    #[test]
    fn hierarchy_is_embedded_and_non_nested() {
        let cfg = HierarchyConfig {
            levels: 4,
            ..Default::default()
        };
        let h = MeshHierarchy::build(&cfg).unwrap();
        let counts: Vec<_> = h.levels.iter().map(|l| l.outer.num_cells()).collect();
        assert_eq!(counts, vec![32, 128, 512, 2048]);
        for w in h.levels.windows(2) {
            assert!(w[1].h <= w[0].h);
            assert!(!is_nested_within(&w[0].outer, &w[1].outer));
            let n = w[0].outer.num_vertices();
            assert_eq!(&w[1].outer.vertices()[..n], w[0].outer.vertices());
            assert!(radius_ratios(&w[1].outer).0 >= cfg.quality_floor.min(radius_ratios(&w[0].outer).0));
        }
        for lvl in &h.levels {
            assert!((lvl.inner.total_area() - 1.0).abs() < 1e-12);
            assert!((lvl.outer.total_area() - 4.0).abs() < 4e-12);
            for (ic, &oc) in lvl.cell_map.iter().enumerate() {
                let mapped = lvl.inner.cells()[ic].map(|v| lvl.vertex_map[v]);
                assert_eq!(mapped, lvl.outer.cells()[oc]);
            }
        }
    }
}
