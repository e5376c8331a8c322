//! Volume grids on the truncated domain `]0, R]`.
//!
//! A mesh partitions `]0, R]` into `I` cells `]edge[i], edge[i+1]]` with
//! `edge[0] = 0` and `edge[I] = R`. Cell midpoints act as grid points for
//! kernel evaluation; the widest cell sets the resolution parameter `h`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("domain extent must be positive and finite, got {0}")]
    NonPositiveExtent(f64),
    #[error("cell count must be at least 1")]
    ZeroCells,
    #[error("geometric growth factor must be positive and finite, got {0}")]
    NonPositiveRatio(f64),
    #[error("a mesh needs at least two edges, got {0}")]
    TooFewEdges(usize),
    #[error("first edge must be exactly 0, got {0}")]
    FirstEdgeNotZero(f64),
    #[error("edges must be strictly increasing, violated between indices {0} and {1}")]
    EdgesNotIncreasing(usize, usize),
    #[error("edge {0} is not finite")]
    NonFiniteEdge(usize),
    #[error("refinement factor must be at least 1")]
    ZeroRefinement,
}

/// A partition of `]0, R]` into cells with precomputed midpoints and widths.
///
/// Immutable after construction; cheap to clone and safe to share across
/// threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    edges: Vec<f64>,
    midpoints: Vec<f64>,
    widths: Vec<f64>,
}

impl Mesh {
    /// Uniform partition of `]0, r]` into `cells` equal cells.
    pub fn uniform(r: f64, cells: usize) -> Result<Self, MeshError> {
        if !r.is_finite() || r <= 0.0 {
            return Err(MeshError::NonPositiveExtent(r));
        }
        if cells == 0 {
            return Err(MeshError::ZeroCells);
        }
        // k/cells is exact at k = 0 and k = cells, so the boundary edges are
        // bit-exact 0 and r.
        let n = cells as f64;
        let edges = (0..=cells).map(|k| (k as f64 / n) * r).collect();
        Self::from_edges(edges)
    }

    /// Partition with geometrically growing widths, `width[i+1] = ratio * width[i]`.
    ///
    /// `ratio = 1` reduces to the uniform mesh (bit-for-bit). The last edge is
    /// pinned to `r` exactly rather than accumulated, so the domain boundary
    /// is bit-exact. No minimum width beyond positivity is enforced; extreme
    /// ratios trade conditioning for resolution near zero.
    pub fn geometric(r: f64, cells: usize, ratio: f64) -> Result<Self, MeshError> {
        if !r.is_finite() || r <= 0.0 {
            return Err(MeshError::NonPositiveExtent(r));
        }
        if cells == 0 {
            return Err(MeshError::ZeroCells);
        }
        if !ratio.is_finite() || ratio <= 0.0 {
            return Err(MeshError::NonPositiveRatio(ratio));
        }
        if ratio == 1.0 {
            return Self::uniform(r, cells);
        }
        // First width from the geometric sum w0 * (ratio^I - 1) / (ratio - 1) = r.
        let n = cells as f64;
        let w0 = r * (ratio - 1.0) / (ratio.powf(n) - 1.0);
        let mut edges = Vec::with_capacity(cells + 1);
        edges.push(0.0);
        let mut acc = 0.0;
        let mut w = w0;
        for _ in 0..cells - 1 {
            acc += w;
            edges.push(acc);
            w *= ratio;
        }
        edges.push(r);
        Self::from_edges(edges)
    }

    /// Mesh from explicit edges; the first edge must be exactly 0 and the
    /// sequence strictly increasing.
    pub fn from_edges(edges: Vec<f64>) -> Result<Self, MeshError> {
        if edges.len() < 2 {
            return Err(MeshError::TooFewEdges(edges.len()));
        }
        for (k, &e) in edges.iter().enumerate() {
            if !e.is_finite() {
                return Err(MeshError::NonFiniteEdge(k));
            }
        }
        if edges[0] != 0.0 {
            return Err(MeshError::FirstEdgeNotZero(edges[0]));
        }
        for k in 0..edges.len() - 1 {
            if edges[k + 1] <= edges[k] {
                return Err(MeshError::EdgesNotIncreasing(k, k + 1));
            }
        }
        let midpoints: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let widths: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
        // Strictly increasing positive edges imply increasing midpoints except
        // in pathological ulp-level cases, which we reject outright.
        for k in 0..midpoints.len() - 1 {
            if midpoints[k + 1] <= midpoints[k] {
                return Err(MeshError::EdgesNotIncreasing(k, k + 1));
            }
        }
        Ok(Self {
            edges,
            midpoints,
            widths,
        })
    }

    /// Number of cells `I`.
    pub fn cells(&self) -> usize {
        self.widths.len()
    }

    /// Right end of the domain.
    pub fn r(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    /// Widest cell, the resolution parameter `h`.
    pub fn max_width(&self) -> f64 {
        self.widths.iter().cloned().fold(0.0, f64::max)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// Lower edge of cell `i`.
    pub fn lower(&self, i: usize) -> f64 {
        self.edges[i]
    }

    /// Upper edge of cell `i`.
    pub fn upper(&self, i: usize) -> f64 {
        self.edges[i + 1]
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        self.midpoints[i]
    }

    pub fn width(&self, i: usize) -> f64 {
        self.widths[i]
    }

    /// Split every cell into `factor` equal parts, keeping the original edges
    /// bit-exact so the result nests inside `self`.
    pub fn refine(&self, factor: usize) -> Result<Self, MeshError> {
        if factor == 0 {
            return Err(MeshError::ZeroRefinement);
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let mut edges = Vec::with_capacity(self.cells() * factor + 1);
        let f = factor as f64;
        for i in 0..self.cells() {
            let (lo, w) = (self.edges[i], self.widths[i]);
            edges.push(lo);
            for k in 1..factor {
                edges.push(lo + (k as f64 / f) * w);
            }
        }
        edges.push(self.r());
        Self::from_edges(edges)
    }
}
