use crate::error::{Error, Result};

/// Uniform Cartesian grid over the unit cube `[-1/2, 1/2]^dim`.
///
/// Every axis has the same spacing `1 / cells`. A non-periodic axis carries
/// `cells + 1` nodes including both faces; a periodic axis carries `cells`
/// nodes and wraps around (the node at `+1/2` is identified with `-1/2`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    dim: usize,
    cells: usize,
    periodic: [bool; 3],
}

/// Which face of an axis a boundary node sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Low,
    High,
}

impl Grid {
    pub fn new(dim: usize, cells: usize, periodic: [bool; 3]) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dim must be 2 or 3, got {dim}")));
        }
        let mut periodic = periodic;
        if dim == 2 {
            periodic[2] = false;
        }
        let grid = Grid { dim, cells, periodic };
        for axis in 0..dim {
            if grid.nodes_on_axis(axis) < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} has {} nodes, at least 3 required",
                    grid.nodes_on_axis(axis)
                )));
            }
        }
        Ok(grid)
    }

    /// Non-periodic unit cube with `n_per_axis` nodes per axis (spacing `1/(n-1)`).
    pub fn unit_cube(dim: usize, n_per_axis: usize) -> Result<Self> {
        if n_per_axis < 3 {
            return Err(Error::InvalidGrid(format!("n_per_axis = {n_per_axis}, at least 3 required")));
        }
        Self::new(dim, n_per_axis - 1, [false; 3])
    }

    /// Fully periodic unit cell with `n_per_axis` distinct nodes per axis (spacing `1/n`).
    pub fn periodic_cell(dim: usize, n_per_axis: usize) -> Result<Self> {
        Self::new(dim, n_per_axis, [true; 3])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn origin(&self) -> f64 {
        -0.5
    }

    pub fn periodic_flags(&self) -> [bool; 3] {
        self.periodic
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        self.periodic[axis]
    }

    pub fn nodes_on_axis(&self, axis: usize) -> usize {
        if axis >= self.dim {
            1
        } else if self.periodic[axis] {
            self.cells
        } else {
            self.cells + 1
        }
    }

    /// Nodes along axis 0; the per-axis count for cube grids.
    pub fn n_per_axis(&self) -> usize {
        self.nodes_on_axis(0)
    }

    pub fn node_count(&self) -> usize {
        (0..self.dim).map(|a| self.nodes_on_axis(a)).product()
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        let n0 = self.nodes_on_axis(0);
        let n1 = self.nodes_on_axis(1);
        ijk[0] + n0 * (ijk[1] + n1 * ijk[2])
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let n0 = self.nodes_on_axis(0);
        let n1 = self.nodes_on_axis(1);
        [idx % n0, (idx / n0) % n1, idx / (n0 * n1)]
    }

    /// Physical position of a node; unused axes are zero.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let ijk = self.coords(idx);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = -0.5 + ijk[a] as f64 * h;
        }
        x
    }

    /// Neighbor `offset` nodes along `axis`, wrapping on periodic axes.
    #[inline]
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> Option<usize> {
        let mut ijk = self.coords(idx);
        let n = self.nodes_on_axis(axis) as isize;
        let mut i = ijk[axis] as isize + offset;
        if self.periodic[axis] {
            i = i.rem_euclid(n);
        } else if i < 0 || i >= n {
            return None;
        }
        ijk[axis] = i as usize;
        Some(self.index(ijk))
    }

    /// Face side of `idx` on a non-periodic `axis`, if the node is on that face.
    pub fn boundary_side(&self, idx: usize, axis: usize) -> Option<Side> {
        if axis >= self.dim || self.periodic[axis] {
            return None;
        }
        let i = self.coords(idx)[axis];
        if i == 0 {
            Some(Side::Low)
        } else if i == self.cells {
            Some(Side::High)
        } else {
            None
        }
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        (0..self.dim).any(|a| self.boundary_side(idx, a).is_some())
    }

    /// One-dimensional trapezoid factor of node `idx` along `axis` (in units of spacing).
    #[inline]
    pub fn axis_weight(&self, idx: usize, axis: usize) -> f64 {
        if self.boundary_side(idx, axis).is_some() {
            0.5
        } else {
            1.0
        }
    }

    /// Trapezoidal quadrature weight of a node; weights sum to 1.
    pub fn weight(&self, idx: usize) -> f64 {
        let h = self.spacing();
        (0..self.dim).map(|a| self.axis_weight(idx, a) * h).product()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.node_count()).map(|i| self.weight(i)).collect()
    }

    pub fn elements_on_axis(&self, axis: usize) -> usize {
        if axis >= self.dim {
            1
        } else {
            self.cells
        }
    }

    pub fn element_count(&self) -> usize {
        (0..self.dim).map(|a| self.elements_on_axis(a)).product()
    }

    /// Corner nodes of element `e` in lexicographic order (axis 0 fastest);
    /// only the first `2^dim` entries are meaningful.
    pub fn element_nodes(&self, e: usize) -> [usize; 8] {
        let m0 = self.elements_on_axis(0);
        let m1 = self.elements_on_axis(1);
        let base = [e % m0, (e / m0) % m1, e / (m0 * m1)];
        let mut out = [0usize; 8];
        for (c, slot) in out.iter_mut().enumerate().take(1 << self.dim) {
            let mut ijk = [0usize; 3];
            for a in 0..self.dim {
                let bit = (c >> a) & 1;
                let n = self.nodes_on_axis(a);
                ijk[a] = (base[a] + bit) % n;
            }
            *slot = self.index(ijk);
        }
        out
    }

    pub fn corners_per_element(&self) -> usize {
        1 << self.dim
    }

    /// Number of symmetric-tensor components, `dim (dim + 1) / 2`.
    pub fn sym_components(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }
}

/// Storage slot of entry `(i, j)` in upper-triangular row-major symmetric storage.
pub fn sym_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // rows before i hold dim, dim-1, ... entries
    i * dim - i * i.saturating_sub(1) / 2 + (j - i)
}
