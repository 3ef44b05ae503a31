//! Periodic pore/skeleton microstructure, the fluid-1/fluid-2 partition and
//! boundary classification.

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{Error, Result};
use crate::grid_core::{integral, Grid, ScalarField, Side};
use crate::scalar::Real;

/// Minimum number of grid intervals across one periodicity cell.
pub const MIN_NODES_PER_CELL: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellShape {
    /// Circle in 2D; in 3D a cylinder along `x3`.
    Disk,
    /// Ball (a circle in 2D).
    Sphere,
    /// Axis-aligned cube of half-width `radius`.
    SquareBlock,
}

/// Which phase the centred inclusion belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Inclusion {
    /// Solid inclusion in a connected pore space (the default microstructure).
    Solid,
    /// Pore inclusion in a connected solid matrix.
    Pore,
}

/// The 1-periodic indicator on the unit cell `[0, 1)^dim`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitCellPattern {
    pub kind: CellShape,
    pub radius: f64,
    pub inclusion: Inclusion,
}

impl UnitCellPattern {
    /// Solid inclusion of radius `radius` centred in the cell.
    pub fn new(kind: CellShape, radius: f64) -> Result<Self> {
        Self::with_inclusion(kind, radius, Inclusion::Solid)
    }

    /// Pore inclusion in a solid matrix.
    pub fn solid_matrix(kind: CellShape, pore_radius: f64) -> Result<Self> {
        Self::with_inclusion(kind, pore_radius, Inclusion::Pore)
    }

    pub fn with_inclusion(kind: CellShape, radius: f64, inclusion: Inclusion) -> Result<Self> {
        if !(0.0..0.5).contains(&radius) || !radius.is_finite() {
            return Err(Error::InvalidPattern(format!(
                "radius {radius} outside [0, 1/2): the inclusion must not touch the cell faces"
            )));
        }
        Ok(UnitCellPattern { kind, radius, inclusion })
    }

    fn inside_inclusion(&self, y: [f64; 3], dim: usize) -> bool {
        let d = |k: usize| y[k] - 0.5;
        let dist = match self.kind {
            CellShape::Disk => (d(0).powi(2) + d(1).powi(2)).sqrt(),
            CellShape::Sphere => (0..dim).map(|k| d(k).powi(2)).sum::<f64>().sqrt(),
            CellShape::SquareBlock => (0..dim).map(|k| d(k).abs()).fold(0.0, f64::max),
        };
        dist < self.radius
    }

    /// `chi(y)`: true in the pore space.
    pub fn is_fluid(&self, y: [f64; 3], dim: usize) -> bool {
        match self.inclusion {
            Inclusion::Solid => !self.inside_inclusion(y, dim),
            Inclusion::Pore => self.inside_inclusion(y, dim),
        }
    }
}

/// Boundary portions of the unit cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Lateral faces (all faces other than `x1 = +-1/2`, including shared edges).
    S0,
    /// Face `x1 = +1/2`.
    S1,
    /// Face `x1 = -1/2`.
    S2,
}

/// Per-node boundary tags; interior nodes and periodic directions carry none.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryClassification {
    grid: Grid,
    tags: Vec<Option<BoundaryTag>>,
}

impl BoundaryClassification {
    pub fn new(grid: &Grid) -> Self {
        let tags = (0..grid.node_count())
            .map(|i| {
                let lateral = (1..grid.dim()).any(|a| grid.boundary_side(i, a).is_some());
                if lateral {
                    return Some(BoundaryTag::S0);
                }
                match grid.boundary_side(i, 0) {
                    Some(Side::High) => Some(BoundaryTag::S1),
                    Some(Side::Low) => Some(BoundaryTag::S2),
                    None => None,
                }
            })
            .collect();
        BoundaryClassification { grid: grid.clone(), tags }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn tag(&self, node: usize) -> Option<BoundaryTag> {
        self.tags[node]
    }

    pub fn nodes_with(&self, tag: BoundaryTag) -> Vec<usize> {
        (0..self.tags.len()).filter(|&i| self.tags[i] == Some(tag)).collect()
    }

    /// True if `node` lies on the closure of the face set `tag`.
    pub fn on_closure(&self, node: usize, tag: BoundaryTag) -> bool {
        let g = &self.grid;
        match tag {
            BoundaryTag::S1 => g.boundary_side(node, 0) == Some(Side::High),
            BoundaryTag::S2 => g.boundary_side(node, 0) == Some(Side::Low),
            BoundaryTag::S0 => (1..g.dim()).any(|a| g.boundary_side(node, a).is_some()),
        }
    }
}

/// Discrete characteristic functions on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMask<T> {
    pub grid: Grid,
    /// 1 in the pore space, 0 in the skeleton.
    pub chi_eps: ScalarField<T>,
    /// 1 in fluid L1, 0 in fluid L2; only meaningful where `chi_eps = 1`.
    pub chi: ScalarField<T>,
    pub epsilon: f64,
    pub pattern: UnitCellPattern,
}

impl<T: Real> PhaseMask<T> {
    pub fn is_pore(&self, node: usize) -> bool {
        self.chi_eps.get(node) > T::half()
    }

    pub fn pore_nodes(&self) -> Vec<bool> {
        (0..self.grid.node_count()).map(|i| self.is_pore(i)).collect()
    }

    /// Solid indicator `1 - chi_eps`.
    pub fn solid_indicator(&self) -> ScalarField<T> {
        let vals = self.chi_eps.values().iter().map(|&c| T::one() - c).collect();
        ScalarField::from_values(self.grid.clone(), vals).expect("same grid")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let g = &self.grid;
        let idx = ["i", "j", "k"][..g.dim()].join(",");
        writeln!(out, "{idx},chi_eps,chi")?;
        for node in 0..g.node_count() {
            let ijk = g.coords(node);
            let ids: Vec<String> = ijk[..g.dim()].iter().map(|i| i.to_string()).collect();
            writeln!(out, "{},{},{}", ids.join(","), self.chi_eps.get(node), self.chi.get(node))?;
        }
        Ok(())
    }
}

/// Number of cells across the domain if `epsilon` is the reciprocal of a whole number.
pub fn cells_across(epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::NotIntegerReciprocal(epsilon));
    }
    let m = (1.0 / epsilon).round();
    if (m * epsilon - 1.0).abs() > 1e-9 {
        return Err(Error::NotIntegerReciprocal(epsilon));
    }
    Ok(m as usize)
}

/// Samples `chi_eps(x) = chi(x / epsilon)` at the nodes and initializes the
/// fluid partition with every pore filled by L1.
pub fn build_phase_mask<T: Real>(pattern: UnitCellPattern, epsilon: f64, grid: &Grid) -> Result<PhaseMask<T>> {
    let m = cells_across(epsilon)?;
    let per_cell = grid.cells() as f64 / m as f64;
    if per_cell < MIN_NODES_PER_CELL as f64 {
        return Err(Error::UnderResolved {
            nodes_per_cell: per_cell,
            required: MIN_NODES_PER_CELL,
        });
    }
    let cells = grid.cells();
    let dim = grid.dim();
    let values = (0..grid.node_count())
        .map(|node| {
            let ijk = grid.coords(node);
            let mut y = [0.5; 3];
            for a in 0..dim {
                // (x + 1/2) / epsilon = i m / cells, reduced mod 1 in exact integer arithmetic
                y[a] = ((ijk[a] * m) % cells) as f64 / cells as f64;
            }
            if pattern.is_fluid(y, dim) {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect();
    let chi_eps = ScalarField::from_values(grid.clone(), values)?;
    Ok(PhaseMask {
        grid: grid.clone(),
        chi: ScalarField::constant(grid, T::one()),
        chi_eps,
        epsilon,
        pattern,
    })
}

/// Trapezoid-weighted measure of the pore space.
pub fn porosity<T: Real>(mask: &PhaseMask<T>) -> T {
    integral(&mask.chi_eps)
}

/// Plane partition: `chi = 1` (fluid L1) where `x1 > plane`, `0` otherwise.
pub fn init_fluid_partition<T: Real>(mask: &PhaseMask<T>, interface_plane_x1: f64) -> PhaseMask<T> {
    let chi = ScalarField::from_fn(&mask.grid, |x| if x[0] > interface_plane_x1 { 1.0 } else { 0.0 });
    PhaseMask { chi, ..mask.clone() }
}

/// True if the `open` nodes contain a face-connected path between the two
/// faces normal to `axis` (without wrapping across that axis).
pub fn percolates(grid: &Grid, open: &[bool], axis: usize) -> bool {
    let n_axis = grid.nodes_on_axis(axis);
    let mut seen = vec![false; grid.node_count()];
    let mut queue = VecDeque::new();
    for i in 0..grid.node_count() {
        if open[i] && grid.coords(i)[axis] == 0 {
            seen[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let ci = grid.coords(i)[axis];
        if ci == n_axis - 1 {
            return true;
        }
        for a in 0..grid.dim() {
            for off in [-1isize, 1] {
                if a == axis && ((ci == 0 && off < 0) || (ci == n_axis - 1 && off > 0)) {
                    continue;
                }
                if let Some(j) = grid.shift(i, a, off) {
                    if open[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    false
}

/// True iff a face-connected fluid path joins `S1` and `S2`.
pub fn check_pore_connectivity<T: Real>(mask: &PhaseMask<T>) -> bool {
    percolates(&mask.grid, &mask.pore_nodes(), 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn disk(r: f64) -> UnitCellPattern {
        UnitCellPattern::new(CellShape::Disk, r).unwrap()
    }

    #[test]
    fn no_solid_gives_unit_porosity() {
        let g = Grid::unit_cube(2, 17).unwrap();
        let m = build_phase_mask::<f64>(disk(0.0), 1.0, &g).unwrap();
        assert!(m.chi_eps.values().iter().all(|&v| v == 1.0));
        assert!((porosity(&m) - 1.0).abs() < 1e-14);
        assert!(check_pore_connectivity(&m));
    }

    #[test]
    fn disk_porosity_matches_area() {
        let expected = 1.0 - PI * 0.0625;
        for n in [65, 129, 257] {
            let g = Grid::unit_cube(2, n).unwrap();
            let m = build_phase_mask::<f64>(disk(0.25), 1.0, &g).unwrap();
            let h = g.spacing();
            assert!((porosity(&m) - expected).abs() < 2.0 * h, "n = {n}");
        }
    }

    #[test]
    fn porosity_independent_of_epsilon() {
        let base = {
            let g = Grid::unit_cube(2, 65).unwrap();
            porosity(&build_phase_mask::<f64>(disk(0.3), 1.0, &g).unwrap())
        };
        for (eps, n) in [(0.5, 129), (0.25, 257)] {
            let g = Grid::unit_cube(2, n).unwrap();
            let p = porosity(&build_phase_mask::<f64>(disk(0.3), eps, &g).unwrap());
            assert!((p - base).abs() < 2.0 / 64.0, "eps {eps}: {p} vs {base}");
        }
    }

    #[test]
    fn mask_is_periodic_in_x_over_epsilon() {
        let g = Grid::unit_cube(2, 65).unwrap();
        let m = build_phase_mask::<f64>(disk(0.3), 0.25, &g).unwrap();
        let shift = 16; // nodes per cell
        for i in 0..g.node_count() {
            for a in 0..2 {
                if let Some(j) = g.shift(i, a, shift) {
                    assert_eq!(m.chi_eps.get(i), m.chi_eps.get(j));
                }
            }
        }
    }

    #[test]
    fn rejects_bad_epsilon_and_resolution() {
        let g = Grid::unit_cube(2, 65).unwrap();
        assert_eq!(
            build_phase_mask::<f64>(disk(0.2), 0.3, &g).unwrap_err(),
            Error::NotIntegerReciprocal(0.3)
        );
        assert!(matches!(
            build_phase_mask::<f64>(disk(0.2), 1.0 / 16.0, &g),
            Err(Error::UnderResolved { required: 8, .. })
        ));
        assert!(UnitCellPattern::new(CellShape::Disk, 0.5).is_err());
    }

    #[test]
    fn blocking_slab_disconnects() {
        // a pore inclusion in a solid matrix never reaches the cell faces
        let g = Grid::unit_cube(2, 33).unwrap();
        let p = UnitCellPattern::solid_matrix(CellShape::SquareBlock, 0.3).unwrap();
        let m = build_phase_mask::<f64>(p, 0.5, &g).unwrap();
        assert!(!check_pore_connectivity(&m));
        let m = build_phase_mask::<f64>(disk(0.25), 1.0, &g).unwrap();
        assert!(check_pore_connectivity(&m));
    }

    #[test]
    fn boundary_tags_partition_the_boundary() {
        for g in [Grid::unit_cube(2, 9).unwrap(), Grid::unit_cube(3, 5).unwrap()] {
            let b = BoundaryClassification::new(&g);
            for i in 0..g.node_count() {
                assert_eq!(b.tag(i).is_some(), g.is_boundary(i));
                if let Some(t) = b.tag(i) {
                    let x = g.position(i);
                    match t {
                        BoundaryTag::S1 => assert_eq!(x[0], 0.5),
                        BoundaryTag::S2 => assert_eq!(x[0], -0.5),
                        BoundaryTag::S0 => assert!((1..g.dim()).any(|a| x[a].abs() == 0.5)),
                    }
                }
            }
        }
    }

    #[test]
    fn plane_partition() {
        let g = Grid::unit_cube(2, 33).unwrap();
        let m = build_phase_mask::<f64>(disk(0.25), 0.5, &g).unwrap();
        let all = init_fluid_partition(&m, -0.5 + 1e-9);
        for i in 0..g.node_count() {
            if m.is_pore(i) && g.position(i)[0] > -0.5 {
                assert_eq!(all.chi.get(i), 1.0);
            }
        }
        let half = init_fluid_partition(&m, 0.0);
        let l1_mass: f64 = (0..g.node_count())
            .map(|i| g.weight(i) * half.chi.get(i) * half.chi_eps.get(i))
            .sum();
        let phi = porosity(&m);
        assert!((l1_mass - 0.5 * phi).abs() < 2.0 * g.spacing(), "{l1_mass} vs {}", 0.5 * phi);
    }
}
