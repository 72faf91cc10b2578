//! Uniform-grid cell-list neighbor search.
//!
//! Neighbor lists are always returned in ascending particle-index order, so
//! that every SPH sum is evaluated in the canonical order regardless of
//! thread count. Particles are never reordered in memory.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::math::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeighborError {
    #[error("non-finite position for particle {0}")]
    NonFinitePosition(usize),
    #[error("cell size must be positive, got {0}")]
    BadCellSize(f64),
}

#[derive(Debug, Clone)]
pub struct CellGrid {
    cell_size: f64,
    positions: Vec<Vec2>,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl CellGrid {
    pub fn build(positions: &[Vec2], cell_size: f64) -> Result<CellGrid, NeighborError> {
        if !(cell_size > 0.0) {
            return Err(NeighborError::BadCellSize(cell_size));
        }
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in positions.iter().enumerate() {
            if !p.is_finite() {
                return Err(NeighborError::NonFinitePosition(i));
            }
            buckets.entry(cell_of(*p, cell_size)).or_default().push(i);
        }
        // Insertion order is already ascending, but make the invariant explicit.
        for list in buckets.values_mut() {
            debug_assert!(list.windows(2).all(|w| w[0] < w[1]));
            list.sort_unstable();
        }
        Ok(CellGrid {
            cell_size,
            positions: positions.to_vec(),
            buckets,
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Indices b != a with |r_a - r_b| < radius, strictly ascending.
    pub fn neighbors_of(&self, a: usize, radius: f64) -> Vec<usize> {
        assert!(
            radius <= self.cell_size,
            "query radius {radius} exceeds cell size {}",
            self.cell_size
        );
        let pa = self.positions[a];
        let (cx, cy) = cell_of(pa, self.cell_size);
        let r2 = radius * radius;
        let mut result = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = self.buckets.get(&(cx + dx, cy + dy)) {
                    for &b in list {
                        if b != a && (self.positions[b] - pa).norm_squared() < r2 {
                            result.push(b);
                        }
                    }
                }
            }
        }
        result.sort_unstable();
        result
    }

    /// Neighbor lists for all particles. Parallel over particles; each list
    /// is a pure function of positions and indices.
    pub fn neighbor_lists(&self, radius: f64) -> Vec<Vec<usize>> {
        (0..self.positions.len())
            .into_par_iter()
            .map(|a| self.neighbors_of(a, radius))
            .collect()
    }
}

fn cell_of(p: Vec2, cell_size: f64) -> (i64, i64) {
    (
        (p.x / cell_size).floor() as i64,
        (p.y / cell_size).floor() as i64,
    )
}
