//! Anchor systems: a coarse grid of control points whose positions drive the
//! full grid through bilinear (double convex) interpolation weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::CanvasTransform;

/// One weight-matrix row: at most four `(anchor column, weight)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    entries: [(u32, f64); 4],
    len: u8,
}

impl WeightRow {
    fn push(&mut self, col: u32, w: f64) {
        if w != 0.0 {
            self.entries[self.len as usize] = (col, w);
            self.len += 1;
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries[..self.len as usize]
    }
}

/// Underlying grid `rows × cols`, anchor grid `anchor_rows × anchor_cols`, and
/// the sparse `|G| × |Ĝ|` weight matrix between them.
#[derive(Debug, Clone)]
pub struct AnchorSystem {
    rows: usize,
    cols: usize,
    anchor_rows: Vec<usize>,
    anchor_cols: Vec<usize>,
    weights: Vec<WeightRow>,
    anchor_grid_index: Vec<usize>,
}

/// Builds the anchor system for grid `rows × cols` with the given anchor
/// row and column indices (sorted, distinct, containing both grid ends).
pub fn build_anchor_system(
    rows: usize,
    cols: usize,
    anchor_rows: &[usize],
    anchor_cols: &[usize],
) -> Result<AnchorSystem> {
    check_axis("row", rows, anchor_rows)?;
    check_axis("column", cols, anchor_cols)?;

    let row_cells: Vec<(usize, f64)> = (0..rows).map(|i| locate(anchor_rows, i)).collect();
    let col_cells: Vec<(usize, f64)> = (0..cols).map(|j| locate(anchor_cols, j)).collect();
    let n_acols = anchor_cols.len();
    let n_arows = anchor_rows.len();

    let mut weights = Vec::with_capacity(rows * cols);
    for &(a, lambda) in &row_cells {
        let a1 = (a + 1).min(n_arows - 1);
        for &(b, nu) in &col_cells {
            let b1 = (b + 1).min(n_acols - 1);
            let idx = |r: usize, c: usize| (r * n_acols + c) as u32;
            let mut row = WeightRow {
                entries: [(0, 0.0); 4],
                len: 0,
            };
            row.push(idx(a, b), (1.0 - lambda) * (1.0 - nu));
            row.push(idx(a, b1), (1.0 - lambda) * nu);
            row.push(idx(a1, b), lambda * (1.0 - nu));
            row.push(idx(a1, b1), lambda * nu);
            weights.push(row);
        }
    }

    let anchor_grid_index = anchor_rows
        .iter()
        .flat_map(|&r| anchor_cols.iter().map(move |&c| r * cols + c))
        .collect();

    Ok(AnchorSystem {
        rows,
        cols,
        anchor_rows: anchor_rows.to_vec(),
        anchor_cols: anchor_cols.to_vec(),
        weights,
        anchor_grid_index,
    })
}

fn check_axis(name: &str, len: usize, anchors: &[usize]) -> Result<()> {
    if len == 0 {
        return Err(Error::InvalidInput(format!("empty grid {name} axis")));
    }
    if anchors.first() != Some(&0) || anchors.last() != Some(&(len - 1)) {
        return Err(Error::InvalidInput(format!(
            "anchor {name}s {anchors:?} must include 0 and {} so the anchor hull covers the grid",
            len - 1
        )));
    }
    if anchors.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(format!(
            "anchor {name}s {anchors:?} must be strictly increasing"
        )));
    }
    Ok(())
}

/// Anchor cell containing `k` and the relative position inside it.
/// Cells are half-open, so a point on a shared anchor line belongs to the
/// cell with the larger indices; the last anchor closes the final cell.
fn locate(anchors: &[usize], k: usize) -> (usize, f64) {
    if anchors.len() == 1 {
        return (0, 0.0);
    }
    let cell = match anchors.binary_search(&k) {
        Ok(pos) => pos.min(anchors.len() - 2),
        Err(pos) => pos - 1,
    };
    let (lo, hi) = (anchors[cell], anchors[cell + 1]);
    (cell, (k - lo) as f64 / (hi - lo) as f64)
}

impl AnchorSystem {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn anchor_rows(&self) -> &[usize] {
        &self.anchor_rows
    }

    pub fn anchor_cols(&self) -> &[usize] {
        &self.anchor_cols
    }

    pub fn anchor_count(&self) -> usize {
        self.anchor_rows.len() * self.anchor_cols.len()
    }

    /// Number of free variables when the two color parameters are included.
    pub fn parameter_count(&self) -> usize {
        2 * self.anchor_count() + 2
    }

    pub fn weights(&self) -> &[WeightRow] {
        &self.weights
    }

    /// Grid index (lexicographic) of each anchor, in anchor order.
    pub fn anchor_grid_index(&self) -> &[usize] {
        &self.anchor_grid_index
    }

    /// Anchor coordinates of the identity transform.
    pub fn identity_anchors(&self) -> Vec<[f64; 2]> {
        self.anchor_rows
            .iter()
            .flat_map(|&r| self.anchor_cols.iter().map(move |&c| [r as f64, c as f64]))
            .collect()
    }

    /// `W · α̂` written into `out`.
    pub fn apply_into(&self, anchors: &[[f64; 2]], out: &mut Vec<[f64; 2]>) {
        debug_assert_eq!(anchors.len(), self.anchor_count());
        out.clear();
        out.extend(self.weights.iter().map(|row| {
            let mut p = [0.0, 0.0];
            for &(c, w) in row.entries() {
                let a = anchors[c as usize];
                p[0] += w * a[0];
                p[1] += w * a[1];
            }
            p
        }));
    }

    /// `Wᵀ · g`: pulls per-grid-point gradients back onto the anchors.
    pub fn pull_back_into(&self, grid_grad: &[[f64; 2]], out: &mut Vec<[f64; 2]>) {
        out.clear();
        out.resize(self.anchor_count(), [0.0, 0.0]);
        for (row, g) in self.weights.iter().zip(grid_grad) {
            for &(c, w) in row.entries() {
                let o = &mut out[c as usize];
                o[0] += w * g[0];
                o[1] += w * g[1];
            }
        }
    }

    /// Restricts a full-grid transform to this system's anchors.
    pub fn restrict(&self, full: &CanvasTransform) -> Vec<[f64; 2]> {
        self.anchor_grid_index
            .iter()
            .map(|&k| full.points()[k])
            .collect()
    }
}

/// Full transform `W · α̂`. Anchor rows of the result equal `α̂` exactly.
pub fn apply_anchors(system: &AnchorSystem, anchors: &[[f64; 2]]) -> Result<CanvasTransform> {
    if anchors.len() != system.anchor_count() {
        return Err(Error::InvalidInput(format!(
            "expected {} anchor positions, got {}",
            system.anchor_count(),
            anchors.len()
        )));
    }
    let mut out = Vec::new();
    system.apply_into(anchors, &mut out);
    CanvasTransform::new(out)
}

/// `k` indices in `0..len`, rounded even spacing including both ends.
pub fn even_anchor_indices(len: usize, k: usize) -> Vec<usize> {
    let k = k.clamp(1, len);
    if k == 1 || len == 1 {
        return if len == 1 { vec![0] } else { vec![0, len - 1] };
    }
    let mut idx: Vec<usize> = (0..k)
        .map(|t| ((t * (len - 1)) as f64 / (k - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

/// Anchor system with a `k × k` evenly spaced anchor grid (capped per axis).
pub fn even_anchor_system(rows: usize, cols: usize, k: usize) -> Result<AnchorSystem> {
    build_anchor_system(
        rows,
        cols,
        &even_anchor_indices(rows, k),
        &even_anchor_indices(cols, k),
    )
}

/// One stage of a solution path: anchor grid size and blur radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStage {
    pub anchors: usize,
    pub cutoff: f64,
}

/// Geometric blur chain `initial · decay^j`, `j = 0..steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurChain {
    pub initial: f64,
    pub decay: f64,
    pub steps: usize,
}

impl BlurChain {
    pub fn radii(&self) -> Vec<f64> {
        (0..self.steps.max(1))
            .map(|j| self.initial * self.decay.powi(j as i32))
            .collect()
    }
}

/// Anchor sizes `3^i + 1` below `size`, then `size` itself.
pub fn anchor_sizes(size: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 1usize;
    while p + 1 < size {
        out.push(p + 1);
        p *= 3;
    }
    out.push(size.max(1));
    out
}

/// Coarse-to-fine schedule pairing the anchor chain with the blur chain.
/// The schedule has as many stages as the longer chain; the shorter one
/// stays at its finest level once exhausted.
pub fn anchor_chain(size: usize, blur: BlurChain) -> Result<Vec<PathStage>> {
    if size < 2 {
        return Err(Error::InvalidInput(format!("image size {size} < 2")));
    }
    if !(blur.decay > 0.0 && blur.decay < 1.0) || !(blur.initial > 0.0) {
        return Err(Error::InvalidInput(format!(
            "blur chain needs initial > 0 and 0 < decay < 1, got {blur:?}"
        )));
    }
    let sizes = anchor_sizes(size);
    let radii = blur.radii();
    let n = sizes.len().max(radii.len());
    Ok((0..n)
        .map(|t| PathStage {
            anchors: sizes[t.min(sizes.len() - 1)],
            cutoff: radii[t.min(radii.len() - 1)],
        })
        .collect())
}

/// Warm-start lift: evaluates the coarse full transform at the finer
/// system's anchor positions.
pub fn lift_anchors(
    coarse: &AnchorSystem,
    coarse_anchors: &[[f64; 2]],
    fine: &AnchorSystem,
) -> Vec<[f64; 2]> {
    let mut full = Vec::new();
    coarse.apply_into(coarse_anchors, &mut full);
    fine.anchor_grid_index().iter().map(|&k| full[k]).collect()
}
