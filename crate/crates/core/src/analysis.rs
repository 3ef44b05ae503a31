//! Discrete Poincaré and embedding constants, the solid and fluid extension
//! operators and a Hölder check.

use crate::error::{Error, Result};
use crate::fem::{lumped_mass, ElementKernels, ScalarOperator, VectorOperator};
use crate::geometry::{BoundaryClassification, BoundaryTag, PhaseMask};
use crate::grid_core::{Grid, NodalField, ScalarField, VectorField};
use crate::mollifier::mollify;
use crate::scalar::Real;
use crate::solver::inverse_power_iteration;

/// Relative Rayleigh-quotient residual at which eigen-iterations stop.
pub const EIGEN_TOL: f64 = 1e-8;
pub const EIGEN_MAX_OUTER: usize = 500;
const EIGEN_SEED: u64 = 0x5EED;

/// An inequality constant together with solver diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantEstimate<T> {
    pub value: T,
    pub iterations: usize,
    pub residual: T,
}

/// Nodes inside the mask that touch its complement or the grid boundary.
fn mask_dirichlet_nodes<T: Real>(mask: &ScalarField<T>) -> Vec<bool> {
    let g = mask.grid();
    let inside = |i: usize| mask.get(i) > T::half();
    (0..g.node_count())
        .map(|i| {
            if !inside(i) {
                return true;
            }
            (0..g.dim()).any(|a| {
                [-1isize, 1].iter().any(|&o| match g.shift(i, a, o) {
                    Some(j) => !inside(j),
                    None => true,
                })
            })
        })
        .collect()
}

/// Smallest `M` with `|w|_2 <= M |D(w)|_2` over vector fields vanishing off the
/// interior of `domain_mask` (values above one half count as inside).
pub fn poincare_constant<T: Real>(domain_mask: &ScalarField<T>) -> Result<ConstantEstimate<T>> {
    let g = domain_mask.grid();
    let fixed_nodes = mask_dirichlet_nodes(domain_mask);
    if fixed_nodes.iter().all(|&f| f) {
        return Err(Error::EmptyDomain("Poincaré mask has no interior nodes".into()));
    }
    let kernels = ElementKernels::<T>::new(g);
    let ne = g.element_count();
    let op = VectorOperator {
        grid: g,
        kernels: &kernels,
        c_dd: vec![T::one(); ne],
        c_div: vec![T::zero(); ne],
        shift: None,
    };
    let fixed: Vec<bool> = (0..g.dim()).flat_map(|_| fixed_nodes.iter().copied()).collect();
    let mass = lumped_mass::<T>(g, g.dim());
    let eig = inverse_power_iteration(&op, &mass, &fixed, T::lit(EIGEN_TOL), EIGEN_MAX_OUTER, EIGEN_SEED)?;
    Ok(ConstantEstimate {
        value: T::one() / eig.eigenvalue.sqrt(),
        iterations: eig.iterations,
        residual: eig.residual,
    })
}

/// Smallest `M` with `|u|_2 <= M |grad u|_2` over scalars vanishing on the
/// closure of the tagged boundary portions.
pub fn embedding_constant<T: Real>(grid: &Grid, zero_tags: &[BoundaryTag]) -> Result<ConstantEstimate<T>> {
    let bc = BoundaryClassification::new(grid);
    let fixed: Vec<bool> = (0..grid.node_count())
        .map(|i| zero_tags.iter().any(|&t| bc.on_closure(i, t)))
        .collect();
    if !fixed.iter().any(|&f| f) {
        return Err(Error::EmptyDomain("tagged boundary portion is empty".into()));
    }
    let kernels = ElementKernels::<T>::new(grid);
    let op = ScalarOperator {
        grid,
        kernels: &kernels,
        local: kernels.laplacian_local().to_vec(),
        c: vec![T::one(); grid.element_count()],
    };
    let mass = lumped_mass::<T>(grid, 1);
    let eig = inverse_power_iteration(&op, &mass, &fixed, T::lit(EIGEN_TOL), EIGEN_MAX_OUTER, EIGEN_SEED)?;
    Ok(ConstantEstimate {
        value: T::one() / eig.eigenvalue.sqrt(),
        iterations: eig.iterations,
        residual: eig.residual,
    })
}

/// Largest admissible mollifier radius for [`extend_solid`]: `eps (1/2 - r0) / 2`.
pub fn extension_radius_ceiling<T>(mask: &PhaseMask<T>) -> f64 {
    0.5 * mask.epsilon * (0.5 - mask.pattern.radius)
}

/// `M_h((1 - chi_eps) w_s)`: the solid field extended by zero and mollified.
pub fn extend_solid<T: Real>(w_s: &VectorField<T>, mask: &PhaseMask<T>, h: f64) -> Result<VectorField<T>> {
    if w_s.grid() != &mask.grid {
        return Err(Error::GridMismatch);
    }
    let ceiling = extension_radius_ceiling(mask);
    if !(h < ceiling) {
        return Err(Error::RadiusAboveCeiling { h, ceiling });
    }
    let nn = mask.grid.node_count();
    let mut cut = w_s.clone();
    for (k, v) in cut.values_mut().iter_mut().enumerate() {
        *v = *v * (T::one() - mask.chi_eps.get(k % nn));
    }
    mollify(&cut, h)
}

/// Sign in front of the solid term of the fluid extension.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SignConvention {
    /// `chi_eps w_f - (1 - chi_eps) w_s`.
    #[default]
    Difference,
    /// `chi_eps w_f + (1 - chi_eps) w_s`, continuous across the pore boundary.
    Continuity,
}

pub fn extend_fluid<T: Real>(
    w_f: &VectorField<T>,
    w_s: &VectorField<T>,
    mask: &PhaseMask<T>,
    sign: SignConvention,
) -> Result<VectorField<T>> {
    if w_f.grid() != &mask.grid || w_s.grid() != &mask.grid {
        return Err(Error::GridMismatch);
    }
    let nn = mask.grid.node_count();
    let s = match sign {
        SignConvention::Difference => -T::one(),
        SignConvention::Continuity => T::one(),
    };
    let values = (0..w_f.values().len())
        .map(|k| {
            if mask.is_pore(k % nn) {
                w_f.values()[k]
            } else {
                s * w_s.values()[k]
            }
        })
        .collect();
    VectorField::from_values(mask.grid.clone(), values)
}

/// `(|f g|_1, |f|_2 |g|_2)` with trapezoid weights.
pub fn holder_check<T: Real>(f: &ScalarField<T>, g: &ScalarField<T>) -> Result<(T, T)> {
    if f.grid() != g.grid() {
        return Err(Error::GridMismatch);
    }
    let w = f.grid().weights();
    let (mut lhs, mut ff, mut gg) = (T::zero(), T::zero(), T::zero());
    for ((&a, &b), &wi) in f.values().iter().zip(g.values()).zip(&w) {
        let wi = T::lit(wi);
        lhs = lhs + wi * (a * b).abs();
        ff = ff + wi * a * a;
        gg = gg + wi * b * b;
    }
    Ok((lhs, ff.sqrt() * gg.sqrt()))
}

/// `|u|_2` restricted to nodes where `indicator` is one.
pub fn restricted_norm<T: Real, F: NodalField<T>>(u: &F, indicator: &ScalarField<T>) -> Result<T> {
    crate::grid_core::l2_norm(u, Some(indicator))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_phase_mask, CellShape, UnitCellPattern};
    use crate::rng::XorShift64Star;

    fn square_mask(g: &Grid, half: f64) -> ScalarField<f64> {
        ScalarField::from_fn(g, |x| {
            if x[0].abs() <= half + 1e-12 && x[1].abs() <= half + 1e-12 {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn embedding_constant_matches_slab_eigenvalue() {
        let g = Grid::unit_cube(2, 65).unwrap();
        let both = embedding_constant::<f64>(&g, &[BoundaryTag::S1, BoundaryTag::S2]).unwrap();
        let pi = std::f64::consts::PI;
        assert!((both.value * pi - 1.0).abs() < 0.02, "{both:?}");
        let one = embedding_constant::<f64>(&g, &[BoundaryTag::S1]).unwrap();
        assert!(one.value > both.value);
        assert!((one.value * pi / 2.0 - 1.0).abs() < 0.02, "{one:?}");
    }

    #[test]
    fn embedding_rejects_empty_portion() {
        let g = Grid::new(2, 8, [true, true, false]).unwrap();
        assert!(matches!(
            embedding_constant::<f64>(&g, &[BoundaryTag::S1]),
            Err(Error::EmptyDomain(_))
        ));
    }

    #[test]
    fn poincare_is_monotone_in_domain() {
        let g = Grid::unit_cube(2, 33).unwrap();
        let small = poincare_constant(&square_mask(&g, 0.25)).unwrap();
        let large = poincare_constant(&square_mask(&g, 0.375)).unwrap();
        assert!(small.value > 0.0);
        assert!(small.value <= large.value * 1.05);
    }

    #[test]
    fn poincare_rejects_empty_mask() {
        let g = Grid::unit_cube(2, 9).unwrap();
        assert!(matches!(
            poincare_constant(&ScalarField::<f64>::zeros(&g)),
            Err(Error::EmptyDomain(_))
        ));
    }

    fn mask(n: usize, eps: f64) -> PhaseMask<f64> {
        let g = Grid::unit_cube(2, n).unwrap();
        build_phase_mask(UnitCellPattern::new(CellShape::Disk, 0.25).unwrap(), eps, &g).unwrap()
    }

    #[test]
    fn extend_solid_zero_and_ceiling() {
        let m = mask(33, 1.0);
        let zero = VectorField::<f64>::zeros(&m.grid);
        let out = extend_solid(&zero, &m, 0.1).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
        assert!(matches!(extend_solid(&zero, &m, 0.2), Err(Error::RadiusAboveCeiling { .. })));
    }

    #[test]
    fn extend_fluid_keeps_fluid_values() {
        let m = mask(33, 0.5);
        let mut rng = XorShift64Star::new(3);
        let wf = rng.vector_field::<f64>(&m.grid, -1.0, 1.0);
        let ws = rng.vector_field::<f64>(&m.grid, -1.0, 1.0);
        let nn = m.grid.node_count();
        for sign in [SignConvention::Difference, SignConvention::Continuity] {
            let out = extend_fluid(&wf, &ws, &m, sign).unwrap();
            for k in 0..out.values().len() {
                if m.is_pore(k % nn) {
                    assert_eq!(out.values()[k], wf.values()[k]);
                } else {
                    let s = if sign == SignConvention::Difference { -1.0 } else { 1.0 };
                    assert_eq!(out.values()[k], s * ws.values()[k]);
                }
            }
            let fluid = m.chi_eps.clone();
            let solid = m.solid_indicator();
            let lhs = restricted_norm(&out, &ScalarField::constant(&m.grid, 1.0)).unwrap();
            let rhs = restricted_norm(&wf, &fluid).unwrap() + restricted_norm(&ws, &solid).unwrap();
            assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }

    #[test]
    fn holder_examples() {
        let g = Grid::unit_cube(2, 17).unwrap();
        let mut rng = XorShift64Star::new(21);
        let f = rng.scalar_field::<f64>(&g, -1.0, 1.0);
        let (l, r) = holder_check(&f, &f).unwrap();
        assert!((l - r).abs() <= 1e-14 * r);
        let (l, r) = holder_check(&ScalarField::zeros(&g), &f).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
        for _ in 0..20 {
            let a = rng.scalar_field::<f64>(&g, -2.0, 2.0);
            let b = rng.scalar_field::<f64>(&g, -2.0, 2.0);
            let (l, r) = holder_check(&a, &b).unwrap();
            assert!(l <= r * (1.0 + 1e-12));
        }
    }
}
