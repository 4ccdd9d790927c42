//! Uniform cell grid over position space for compact-support neighbor search.
//!
//! The grid buckets particle positions into cubes whose edge equals the
//! kernel support radius, so every interaction partner of a probe point lies
//! in the probe's cell or one of its immediate neighbors. Cells are stored
//! sparsely (positions are unbounded once trajectories start escaping);
//! iteration order — offset cells in lexicographic order, particles within a
//! cell in insertion order — is a pure function of the inputs, which keeps
//! downstream sums deterministic.

use std::collections::HashMap;

/// Sparse uniform grid of particle indices keyed by integer cell coordinates.
pub struct CellGrid {
    dim: usize,
    cell_size: f64,
    cells: HashMap<Box<[i64]>, Vec<u32>>,
}

impl CellGrid {
    /// Buckets `positions` (a flat, `dim`-strided coordinate array) into
    /// cells of edge `cell_size`.
    pub fn build(dim: usize, cell_size: f64, positions: &[f64]) -> Self {
        assert!(cell_size > 0.0 && cell_size.is_finite());
        let n = positions.len() / dim;
        let mut cells: HashMap<Box<[i64]>, Vec<u32>> = HashMap::new();
        let mut key = vec![0i64; dim];
        for i in 0..n {
            let q = &positions[i * dim..(i + 1) * dim];
            for (k, c) in key.iter_mut().enumerate() {
                // `as` saturates for out-of-range floats, which only merges
                // extremely distant cells; the kernel's own support test
                // keeps results exact.
                *c = (q[k] / cell_size).floor() as i64;
            }
            cells
                .entry(key.clone().into_boxed_slice())
                .or_default()
                .push(i as u32);
        }
        Self {
            dim,
            cell_size,
            cells,
        }
    }

    /// Visits the indices of every particle within one cell of `q_ref`'s
    /// cell, in deterministic order. Visited particles are *candidates*: the
    /// caller still applies the exact support test.
    pub fn for_each_candidate(&self, q_ref: &[f64], mut visit: impl FnMut(u32)) {
        let base: Vec<i64> = q_ref
            .iter()
            .map(|&c| (c / self.cell_size).floor() as i64)
            .collect();
        let mut key = vec![0i64; self.dim];
        // Enumerate the 3^d offsets by counting in base 3.
        let total = 3usize.pow(self.dim as u32);
        for code in 0..total {
            let mut rem = code;
            for k in 0..self.dim {
                key[k] = base[k] + (rem % 3) as i64 - 1;
                rem /= 3;
            }
            if let Some(indices) = self.cells.get(key.as_slice()) {
                for &i in indices {
                    visit(i);
                }
            }
        }
    }
}
