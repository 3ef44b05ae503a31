//! Mollification with the standard compactly supported bump kernel.
//!
//! `J(s) = C exp(1 / (s^2 - 1))` for `|s| < 1` and zero otherwise, with `C`
//! chosen so that `J(|x|)` integrates to one over `R^dim`. Fields are extended
//! by zero outside the grid (wrapped on periodic axes), so mollified constants
//! sag within one radius of the boundary.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid_core::{l2_norm, Grid, NodalField, ScalarField, VectorField};
use crate::scalar::Real;

/// Unnormalized bump `exp(1 / (s^2 - 1))`.
fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (1.0 / (s * s - 1.0)).exp()
    } else {
        0.0
    }
}

/// Normalization constant of the bump in `R^dim` (`dim` in 1..=3).
pub fn normalization_constant(dim: usize) -> f64 {
    static CACHE: [OnceLock<f64>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    assert!((1..=3).contains(&dim), "dimension must be 1, 2 or 3");
    *CACHE[dim - 1].get_or_init(|| {
        // composite Simpson for int_0^1 bump(r) r^(dim-1) dr; the integrand is flat at r = 1
        let n = 20_000;
        let h = 1.0 / n as f64;
        let f = |r: f64| bump(r) * r.powi(dim as i32 - 1);
        let mut acc = f(0.0) + f(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        let radial = acc * h / 3.0;
        let sphere = match dim {
            1 => 2.0,
            2 => 2.0 * std::f64::consts::PI,
            _ => 4.0 * std::f64::consts::PI,
        };
        1.0 / (sphere * radial)
    })
}

/// `J(s)` in `dim` dimensions.
pub fn kernel_value(s: f64, dim: usize) -> f64 {
    normalization_constant(dim) * bump(s)
}

/// A mollifier of radius `h` on a fixed grid.
///
/// The discrete stencil is renormalized so that its weights sum to one on the
/// lattice; interior constants are then reproduced to rounding error and the
/// operator is non-expansive in every discrete `L_p`.
#[derive(Clone, Debug)]
pub struct MollifierKernel {
    radius: f64,
    normalization: f64,
    grid: Grid,
    offsets: Vec<[isize; 3]>,
    weights: Vec<f64>,
    lattice_sum: f64,
}

impl MollifierKernel {
    pub fn new(grid: &Grid, radius: f64) -> Result<Self> {
        let spacing = grid.spacing();
        let floor = 2.0 * spacing;
        if !(radius >= floor * (1.0 - 1e-12)) {
            return Err(Error::RadiusBelowResolution { h: radius, floor });
        }
        let dim = grid.dim();
        let reach = (radius / spacing).ceil() as isize;
        let mut offsets = Vec::new();
        let mut raw = Vec::new();
        let range = |a: usize| if a < dim { -reach..=reach } else { 0..=0 };
        for k2 in range(2) {
            for k1 in range(1) {
                for k0 in range(0) {
                    let r = ((k0 * k0 + k1 * k1 + k2 * k2) as f64).sqrt() * spacing / radius;
                    let j = bump(r);
                    if j > 0.0 {
                        offsets.push([k0, k1, k2]);
                        raw.push(j);
                    }
                }
            }
        }
        let c = normalization_constant(dim);
        let cell = (spacing / radius).powi(dim as i32);
        let lattice_sum: f64 = raw.iter().map(|j| c * cell * j).sum();
        let total: f64 = raw.iter().sum();
        let weights = raw.into_iter().map(|j| j / total).collect();
        Ok(MollifierKernel {
            radius,
            normalization: c,
            grid: grid.clone(),
            offsets,
            weights,
            lattice_sum,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Continuous normalization constant `C`.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Riemann sum of `h^-dim J(|x|/h)` over the grid lattice before renormalization.
    pub fn lattice_sum(&self) -> f64 {
        self.lattice_sum
    }

    pub fn stencil_len(&self) -> usize {
        self.offsets.len()
    }

    fn apply_component<T: Real>(&self, values: &[T]) -> Vec<T> {
        let g = &self.grid;
        let dim = g.dim();
        let n = g.node_count();
        let weights: Vec<T> = self.weights.iter().map(|&w| T::lit(w)).collect();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let ijk = g.coords(i);
                let mut acc = T::zero();
                'offsets: for (off, &w) in self.offsets.iter().zip(&weights) {
                    let mut tgt = [0usize; 3];
                    let mut trap = T::one();
                    for a in 0..dim {
                        let na = g.nodes_on_axis(a) as isize;
                        let mut j = ijk[a] as isize + off[a];
                        if g.is_periodic(a) {
                            j = j.rem_euclid(na);
                        } else if j < 0 || j >= na {
                            continue 'offsets;
                        } else if j == 0 || j == na - 1 {
                            trap = trap * T::half();
                        }
                        tgt[a] = j as usize;
                    }
                    acc = acc + w * trap * values[g.index(tgt)];
                }
                acc
            })
            .collect()
    }

    pub fn apply_scalar<T: Real>(&self, u: &ScalarField<T>) -> Result<ScalarField<T>> {
        if u.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        ScalarField::from_values(self.grid.clone(), self.apply_component(u.values()))
    }

    pub fn apply_vector<T: Real>(&self, u: &VectorField<T>) -> Result<VectorField<T>> {
        if u.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let comps = (0..self.grid.dim()).map(|c| self.apply_component(u.component(c))).collect();
        VectorField::from_components(&self.grid, comps)
    }
}

/// Fields that can be mollified component-wise.
pub trait Mollify<T: Real>: Sized {
    fn mollify_with(&self, kernel: &MollifierKernel) -> Result<Self>;
    fn grid_of(&self) -> &Grid;
}

impl<T: Real> Mollify<T> for ScalarField<T> {
    fn mollify_with(&self, kernel: &MollifierKernel) -> Result<Self> {
        kernel.apply_scalar(self)
    }
    fn grid_of(&self) -> &Grid {
        self.grid()
    }
}

impl<T: Real> Mollify<T> for VectorField<T> {
    fn mollify_with(&self, kernel: &MollifierKernel) -> Result<Self> {
        kernel.apply_vector(self)
    }
    fn grid_of(&self) -> &Grid {
        self.grid()
    }
}

/// `M_h u`.
pub fn mollify<T: Real, F: Mollify<T>>(u: &F, h: f64) -> Result<F> {
    let kernel = MollifierKernel::new(u.grid_of(), h)?;
    u.mollify_with(&kernel)
}

/// One row of a mollification convergence study.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub error_norm: f64,
    /// `log2`-style observed order against the previous row; `None` for the first.
    pub observed_order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Distance from the boundary defining the interior sub-domain.
    pub interior_margin: f64,
    /// True if the error norms strictly decrease along `h_list`.
    pub monotone: bool,
}

/// `|M_h u - u|_2` on the interior sub-domain at distance `max(h_list)` from the boundary.
pub fn mollify_convergence_report<T: Real>(u: &ScalarField<T>, h_list: &[f64]) -> Result<ConvergenceReport> {
    if h_list.is_empty() {
        return Err(Error::InvalidParameter("empty h_list".into()));
    }
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("h_list must be strictly decreasing".into()));
    }
    let g = u.grid();
    let margin = h_list[0];
    let interior = interior_mask::<T>(g, margin);
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let uh = mollify(u, h)?;
        let diff: Vec<T> = uh.values().iter().zip(u.values()).map(|(&a, &b)| a - b).collect();
        let diff = ScalarField::from_values(g.clone(), diff)?;
        let e = l2_norm(&diff, Some(&interior))?.to_f64_();
        let observed_order = rows.last().map(|prev| (prev.error_norm / e).ln() / (prev.h / h).ln());
        rows.push(ConvergenceRow {
            h,
            error_norm: e,
            observed_order,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].error_norm < w[0].error_norm);
    Ok(ConvergenceReport {
        rows,
        interior_margin: margin,
        monotone,
    })
}

/// Indicator of nodes at distance at least `margin` from every non-periodic face.
pub fn interior_mask<T: Real>(grid: &Grid, margin: f64) -> ScalarField<T> {
    let tol = 1e-12;
    let vals = (0..grid.node_count())
        .map(|i| {
            let x = grid.position(i);
            let inside = (0..grid.dim()).all(|a| grid.is_periodic(a) || 0.5 - x[a].abs() >= margin - tol);
            if inside {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect();
    ScalarField::from_values(grid.clone(), vals).expect("length matches grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_core::{gradient, inner, l1_norm};
    use crate::rng::XorShift64Star;

    fn max_abs<T: Real, F: NodalField<T>>(f: &F) -> T {
        f.values().iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    #[test]
    fn kernel_support_and_evenness() {
        assert_eq!(kernel_value(1.5, 2), 0.0);
        assert_eq!(kernel_value(1.0, 3), 0.0);
        assert_eq!(kernel_value(-0.3, 2), kernel_value(0.3, 2));
        assert!(kernel_value(0.0, 2) > 0.0);
    }

    #[test]
    fn one_dimensional_constant_matches_reference() {
        // int_{-1}^{1} exp(1/(x^2-1)) dx = 0.443993816168079...
        assert!((1.0 / normalization_constant(1) - 0.443_993_816_168_079_4).abs() < 1e-12);
    }

    #[test]
    fn rejects_under_resolved_radius() {
        let g = Grid::unit_cube(2, 33).unwrap();
        let u = ScalarField::<f64>::zeros(&g);
        assert!(matches!(mollify(&u, 1.5 / 32.0), Err(Error::RadiusBelowResolution { .. })));
        assert!(mollify(&u, 2.0 / 32.0).is_ok());
    }

    #[test]
    fn interior_constants_are_reproduced() {
        let g = Grid::unit_cube(2, 65).unwrap();
        let h = 0.1;
        let u = ScalarField::<f64>::constant(&g, 3.25);
        let uh = mollify(&u, h).unwrap();
        let interior = interior_mask::<f64>(&g, h);
        for i in 0..g.node_count() {
            if interior.get(i) == 1.0 {
                assert!((uh.get(i) - 3.25).abs() < 1e-10);
            } else {
                assert!(uh.get(i) <= 3.25 + 1e-12);
            }
        }
    }

    #[test]
    fn self_adjoint_and_non_expansive() {
        let g = Grid::unit_cube(2, 41).unwrap();
        let k = MollifierKernel::new(&g, 0.09).unwrap();
        let mut rng = XorShift64Star::new(11);
        for _ in 0..10 {
            let u = rng.scalar_field::<f64>(&g, -1.0, 1.0);
            let v = rng.scalar_field::<f64>(&g, -1.0, 1.0);
            let mu = k.apply_scalar(&u).unwrap();
            let mv = k.apply_scalar(&v).unwrap();
            let a = inner(&mu, &v).unwrap();
            let b = inner(&u, &mv).unwrap();
            assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()));
            assert!(l2_norm(&mu, None).unwrap() <= l2_norm(&u, None).unwrap() * (1.0 + 1e-10));
            assert!(l1_norm(&mu, None) <= l1_norm(&u, None) * (1.0 + 1e-10));
        }
    }

    #[test]
    fn positivity_preserved() {
        let g = Grid::unit_cube(2, 33).unwrap();
        let mut rng = XorShift64Star::new(5);
        let u = rng.scalar_field::<f64>(&g, 0.0, 1.0);
        let uh = mollify(&u, 0.1).unwrap();
        assert!(uh.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn smooth_convergence_is_second_order() {
        let g = Grid::unit_cube(2, 129).unwrap();
        let pi = std::f64::consts::PI;
        let u = ScalarField::<f64>::from_fn(&g, |x| (pi * x[0]).cos() * (pi * x[1]).cos());
        let rep = mollify_convergence_report(&u, &[0.2, 0.1, 0.05]).unwrap();
        assert!(rep.monotone);
        for row in &rep.rows[1..] {
            assert!(row.observed_order.unwrap() > 1.5, "{rep:?}");
        }
    }

    #[test]
    fn zero_field_has_zero_errors() {
        let g = Grid::unit_cube(2, 65).unwrap();
        let rep = mollify_convergence_report(&ScalarField::<f64>::zeros(&g), &[0.2, 0.1]).unwrap();
        assert!(rep.rows.iter().all(|r| r.error_norm == 0.0));
    }

    #[test]
    fn gradient_of_mollification_is_bounded() {
        let g = Grid::unit_cube(2, 65).unwrap();
        let mut rng = XorShift64Star::new(9);
        let u = rng.scalar_field::<f64>(&g, -1.0, 1.0);
        let h = 0.1;
        let uh = mollify(&u, h).unwrap();
        let grad = gradient(&uh);
        let ratio = max_abs(&grad) / max_abs(&u);
        // |grad M_h u| <= |u|_inf * int |grad_x h^-d J(|x|/h)| dx, which is O(1/h)
        assert!(ratio.is_finite() && ratio < 10.0 / h, "{ratio}");
    }
}
