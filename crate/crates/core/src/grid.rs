use serde::{Deserialize, Serialize};

/// Extent of a finite 1D or 2D lattice. Plane storage is row-major
/// (`index = y * nx + x`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GridShape {
    Line(usize),
    Plane(usize, usize),
}

impl GridShape {
    pub fn dimension(&self) -> usize {
        match self {
            GridShape::Line(_) => 1,
            GridShape::Plane(..) => 2,
        }
    }

    /// Site counts `[nx, ny]`; `ny` is 1 for a line.
    pub fn extents(&self) -> [usize; 2] {
        match *self {
            GridShape::Line(n) => [n, 1],
            GridShape::Plane(nx, ny) => [nx, ny],
        }
    }

    pub fn len(&self) -> usize {
        let [nx, ny] = self.extents();
        nx * ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Smallest extent over the active axes.
    pub fn min_extent(&self) -> usize {
        match *self {
            GridShape::Line(n) => n,
            GridShape::Plane(nx, ny) => nx.min(ny),
        }
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.extents()[0] + x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Circular wrap-around; the DFT diagonalizes dispersal exactly.
    #[default]
    Periodic,
    /// Weights pointing outside the domain are dropped and each row of the
    /// remaining weights is renormalized to sum to 1. Experimental.
    AbsorbingRenormalized,
}
