//! Canvas grids, transformed grids and the canvas lattice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transformed positions of every grid point, in lexicographic grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanvasTransform {
    points: Vec<[f64; 2]>,
}

impl CanvasTransform {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "canvas transform has non-finite coordinates".into(),
            ));
        }
        Ok(Self { points })
    }

    pub(crate) fn from_points_unchecked(points: Vec<[f64; 2]>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<[f64; 2]> {
        self.points
    }

    /// Largest coordinate-wise deviation from `other`.
    pub fn max_abs_diff(&self, other: &CanvasTransform) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .flat_map(|(p, q)| [(p[0] - q[0]).abs(), (p[1] - q[1]).abs()])
            .fold(0.0, f64::max)
    }
}

/// Row `k` holds the `k`-th grid coordinate `[k / cols, k % cols]`.
pub fn identity_transform(rows: usize, cols: usize) -> CanvasTransform {
    let points = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| [i as f64, j as f64]))
        .collect();
    CanvasTransform { points }
}

/// Unit steps to the eight ℓ∞ neighbours, ordered by angle in 45° increments.
const OCTANTS: [(isize, isize); 8] = [
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

/// The lattice on a canvas grid: edges join ℓ∞-adjacent grid points and
/// neighbouring-edge pairs are incident edges 45° apart.
#[derive(Debug, Clone)]
pub struct CanvasLattice {
    rows: usize,
    cols: usize,
    edges: Vec<[u32; 2]>,
    rest_lengths: Vec<f64>,
    neighbor_pairs: Vec<[u32; 2]>,
}

pub fn build_lattice(rows: usize, cols: usize) -> Result<CanvasLattice> {
    CanvasLattice::new(rows, cols)
}

impl CanvasLattice {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidInput(format!(
                "lattice needs at least a 2x2 grid, got {rows}x{cols}"
            )));
        }
        let vertex = |i: usize, j: usize| (i * cols + j) as u32;
        let inside = |i: isize, j: isize| i >= 0 && j >= 0 && (i as usize) < rows && (j as usize) < cols;

        let mut edges = Vec::new();
        let mut rest_lengths = Vec::new();
        // Per vertex and octant, the id of the incident edge in that direction.
        let mut incident = vec![[u32::MAX; 8]; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                // Forward half of the octants: each undirected edge is created once.
                for (dir, &(di, dj)) in OCTANTS.iter().enumerate().take(4) {
                    let (ni, nj) = (i as isize + di, j as isize + dj);
                    if !inside(ni, nj) {
                        continue;
                    }
                    let (ni, nj) = (ni as usize, nj as usize);
                    let id = edges.len() as u32;
                    edges.push([vertex(i, j), vertex(ni, nj)]);
                    rest_lengths.push(if di != 0 && dj != 0 {
                        std::f64::consts::SQRT_2
                    } else {
                        1.0
                    });
                    incident[i * cols + j][dir] = id;
                    incident[ni * cols + nj][dir + 4] = id;
                }
            }
        }

        let mut neighbor_pairs = Vec::new();
        for slots in &incident {
            for dir in 0..8 {
                let (a, b) = (slots[dir], slots[(dir + 1) % 8]);
                if a != u32::MAX && b != u32::MAX {
                    neighbor_pairs.push([a, b]);
                }
            }
        }

        Ok(Self {
            rows,
            cols,
            edges,
            rest_lengths,
            neighbor_pairs,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn vertex_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn edges(&self) -> &[[u32; 2]] {
        &self.edges
    }

    pub fn rest_lengths(&self) -> &[f64] {
        &self.rest_lengths
    }

    /// Pairs of edge ids (B_E).
    pub fn neighbor_pairs(&self) -> &[[u32; 2]] {
        &self.neighbor_pairs
    }
}
