//! Uniform box grids and the index shapes of the MAC staggering.
//!
//! Cell centers carry density and pressure. Velocity component `i` lives on
//! the faces normal to axis `i`. Off-diagonal velocity gradients `∂_j v_i`
//! live on edges, where both `x_i` and `x_j` sit on gridlines.
//!
//! Every array is flattened row-major over `(i0, i1, i2)`, so axis 0 is the
//! slowest index. Two-dimensional grids carry a trailing unit axis.

use crate::error::{Error, Result};

/// Default upper bound on the number of cells accepted by [`GridSpec::new`].
pub const DEFAULT_CELL_CAP: usize = 1 << 24;

pub type Index = [usize; 3];

/// Extents of a flattened index box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub dims: [usize; 3],
}

impl Shape {
    pub fn new(dims: [usize; 3]) -> Self {
        Shape { dims }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn flat(&self, i: Index) -> usize {
        debug_assert!(i[0] < self.dims[0] && i[1] < self.dims[1] && i[2] < self.dims[2]);
        (i[0] * self.dims[1] + i[1]) * self.dims[2] + i[2]
    }

    #[inline]
    pub fn unflat(&self, mut f: usize) -> Index {
        let i2 = f % self.dims[2];
        f /= self.dims[2];
        let i1 = f % self.dims[1];
        [f / self.dims[1], i1, i2]
    }

    pub fn contains(&self, i: [isize; 3]) -> bool {
        (0..3).all(|a| i[a] >= 0 && (i[a] as usize) < self.dims[a])
    }

    /// All indices in flat order.
    pub fn indices(&self) -> impl Iterator<Item = Index> + '_ {
        (0..self.len()).map(move |f| self.unflat(f))
    }
}

/// Where a quantity sits in a cell: on a gridline or at the center, per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Staggering {
    pub on_gridline: [bool; 3],
}

impl Staggering {
    pub const CELL: Staggering = Staggering { on_gridline: [false; 3] };

    pub fn face(axis: usize) -> Self {
        let mut g = [false; 3];
        g[axis] = true;
        Staggering { on_gridline: g }
    }

    /// Location of `∂_j v_i`: the cell center for `i == j`, else an edge.
    pub fn tensor(i: usize, j: usize) -> Self {
        let mut g = [false; 3];
        if i != j {
            g[i] = true;
            g[j] = true;
        }
        Staggering { on_gridline: g }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub n: [usize; 3],
    pub extent: [f64; 3],
    pub h: [f64; 3],
}

impl GridSpec {
    pub fn new(dim: usize, n: &[usize], extent: &[f64]) -> Result<Self> {
        Self::with_cap(dim, n, extent, DEFAULT_CELL_CAP)
    }

    pub fn with_cap(dim: usize, n: &[usize], extent: &[f64], cap: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Grid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if n.len() != dim || extent.len() != dim {
            return Err(Error::Grid(format!(
                "expected {dim} cell counts and extents, got {} and {}",
                n.len(),
                extent.len()
            )));
        }
        let mut nn = [1usize; 3];
        let mut ee = [1.0f64; 3];
        let mut hh = [1.0f64; 3];
        let mut total: usize = 1;
        for a in 0..dim {
            if n[a] < 2 {
                return Err(Error::Grid(format!("axis {a} needs at least 2 cells, got {}", n[a])));
            }
            if !(extent[a].is_finite() && extent[a] > 0.0) {
                return Err(Error::Grid(format!("axis {a} extent must be positive, got {}", extent[a])));
            }
            total = total.checked_mul(n[a]).ok_or_else(|| Error::Grid("cell count overflows".into()))?;
            nn[a] = n[a];
            ee[a] = extent[a];
            hh[a] = extent[a] / n[a] as f64;
        }
        if total > cap {
            return Err(Error::Grid(format!("{total} cells exceeds the cap of {cap}")));
        }
        Ok(GridSpec { dim, n: nn, extent: ee, h: hh })
    }

    /// Square or cubic box `[0, extent]^dim` with `cells` cells per axis.
    pub fn uniform(dim: usize, cells: usize, extent: f64) -> Result<Self> {
        Self::new(dim, &vec![cells; dim], &vec![extent; dim])
    }

    pub fn cells(&self) -> usize {
        self.cell_shape().len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[..self.dim].iter().product()
    }

    pub fn domain_volume(&self) -> f64 {
        self.extent[..self.dim].iter().product()
    }

    pub fn axes(&self) -> std::ops::Range<usize> {
        0..self.dim
    }

    /// Index shape of a quantity with the given staggering.
    pub fn shape(&self, s: Staggering) -> Shape {
        let mut d = [1usize; 3];
        for a in 0..self.dim {
            d[a] = if s.on_gridline[a] { self.n[a] + 1 } else { self.n[a] };
        }
        Shape::new(d)
    }

    pub fn cell_shape(&self) -> Shape {
        self.shape(Staggering::CELL)
    }

    pub fn face_shape(&self, axis: usize) -> Shape {
        self.shape(Staggering::face(axis))
    }

    /// Physical coordinates of a staggered index.
    pub fn position(&self, s: Staggering, i: Index) -> [f64; 3] {
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            let off = if s.on_gridline[a] { 0.0 } else { 0.5 };
            x[a] = (i[a] as f64 + off) * self.h[a];
        }
        x
    }

    pub fn cell_center(&self, i: Index) -> [f64; 3] {
        self.position(Staggering::CELL, i)
    }

    pub fn face_center(&self, axis: usize, i: Index) -> [f64; 3] {
        self.position(Staggering::face(axis), i)
    }

    /// Grid with every cell split into `factor` pieces per axis.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        let n: Vec<usize> = (0..self.dim).map(|a| self.n[a] * factor).collect();
        GridSpec::new(self.dim, &n, &self.extent[..self.dim])
    }

    /// Refinement factor if `self` refines `coarse` uniformly on the same box.
    pub fn refinement_factor(&self, coarse: &GridSpec) -> Option<usize> {
        if self.dim != coarse.dim {
            return None;
        }
        let mut factor = None;
        for a in 0..self.dim {
            let rel = (self.extent[a] - coarse.extent[a]).abs() / coarse.extent[a];
            if rel > 1e-12 || !self.n[a].is_multiple_of(coarse.n[a]) {
                return None;
            }
            let r = self.n[a] / coarse.n[a];
            match factor {
                None => factor = Some(r),
                Some(f) if f != r => return None,
                _ => {}
            }
        }
        factor
    }

    /// Cells that are not adjacent to any boundary face.
    pub fn is_interior_cell(&self, i: Index) -> bool {
        (0..self.dim).all(|a| i[a] > 0 && i[a] + 1 < self.n[a])
    }
}
