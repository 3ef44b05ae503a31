//! Finite-difference operators on node-collocated fields.
//!
//! Central differences at interior nodes, second-order one-sided stencils on
//! non-periodic faces, wrap-around on periodic axes.

use super::field::{NodalField, ScalarField, SymTensorField, VectorField};
use super::grid::{sym_index, Grid, Side};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `d f / d x_axis` at every node.
pub fn partial<T: Real>(grid: &Grid, f: &[T], axis: usize) -> Vec<T> {
    let inv2h = T::lit(0.5 / grid.spacing());
    let three = T::lit(3.0);
    let four = T::lit(4.0);
    (0..grid.node_count())
        .map(|i| match grid.boundary_side(i, axis) {
            Some(Side::Low) => {
                let i1 = grid.shift(i, axis, 1).unwrap();
                let i2 = grid.shift(i, axis, 2).unwrap();
                (-three * f[i] + four * f[i1] - f[i2]) * inv2h
            }
            Some(Side::High) => {
                let i1 = grid.shift(i, axis, -1).unwrap();
                let i2 = grid.shift(i, axis, -2).unwrap();
                (three * f[i] - four * f[i1] + f[i2]) * inv2h
            }
            None => {
                let ip = grid.shift(i, axis, 1).unwrap();
                let im = grid.shift(i, axis, -1).unwrap();
                (f[ip] - f[im]) * inv2h
            }
        })
        .collect()
}

fn check_vector<T: Real>(u: &VectorField<T>) -> Result<()> {
    let g = u.grid();
    let expected = g.dim() * g.node_count();
    if u.values().len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: u.values().len(),
        });
    }
    Ok(())
}

/// Gradient of a scalar field.
pub fn gradient<T: Real>(f: &ScalarField<T>) -> VectorField<T> {
    let g = f.grid();
    let comps = (0..g.dim()).map(|a| partial(g, f.values(), a)).collect();
    VectorField::from_components(g, comps).expect("component count matches grid")
}

/// `D(u) = (grad u + grad u^T) / 2`.
pub fn sym_gradient<T: Real>(u: &VectorField<T>) -> Result<SymTensorField<T>> {
    check_vector(u)?;
    let g = u.grid();
    let d = g.dim();
    let n = g.node_count();
    // jac[i][j] = du_i / dx_j
    let jac: Vec<Vec<Vec<T>>> = (0..d).map(|i| (0..d).map(|j| partial(g, u.component(i), j)).collect()).collect();
    let mut out = SymTensorField::zeros(g);
    let half = T::half();
    for i in 0..d {
        for j in i..d {
            let s = sym_index(d, i, j);
            let dst = &mut out.values_mut()[s * n..(s + 1) * n];
            if i == j {
                dst.copy_from_slice(&jac[i][i]);
            } else {
                for (k, o) in dst.iter_mut().enumerate() {
                    *o = half * (jac[i][j][k] + jac[j][i][k]);
                }
            }
        }
    }
    Ok(out)
}

/// `div u` with the same stencils as [`sym_gradient`].
pub fn divergence<T: Real>(u: &VectorField<T>) -> Result<ScalarField<T>> {
    check_vector(u)?;
    let g = u.grid();
    let mut acc = vec![T::zero(); g.node_count()];
    for a in 0..g.dim() {
        for (o, v) in acc.iter_mut().zip(partial(g, u.component(a), a)) {
            *o = *o + v;
        }
    }
    ScalarField::from_values(g.clone(), acc)
}

/// Pointwise Frobenius contraction `A : B`, off-diagonal entries counted twice.
pub fn contract<T: Real>(a: &SymTensorField<T>, b: &SymTensorField<T>) -> Result<ScalarField<T>> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let g = a.grid();
    let n = g.node_count();
    let mut out = vec![T::zero(); n];
    for c in 0..g.sym_components() {
        let w = a.component_weight(c);
        for ((o, &x), &y) in out.iter_mut().zip(a.component(c)).zip(b.component(c)) {
            *o = *o + w * x * y;
        }
    }
    ScalarField::from_values(g.clone(), out)
}

/// Trapezoidal L2 norm over the grid, optionally weighted by a mask in `[0, 1]`.
pub fn l2_norm<T: Real, F: NodalField<T>>(f: &F, mask: Option<&ScalarField<T>>) -> Result<T> {
    let g = f.grid();
    if let Some(m) = mask {
        if m.grid() != g {
            return Err(Error::GridMismatch);
        }
    }
    let mut acc = T::zero();
    for i in 0..g.node_count() {
        let m = mask.map_or(T::one(), |m| m.get(i));
        if m == T::zero() {
            continue;
        }
        acc = acc + T::lit(g.weight(i)) * m * f.norm_sq_at(i);
    }
    Ok(acc.sqrt())
}

/// Trapezoidal L1 norm of a scalar field.
pub fn l1_norm<T: Real>(f: &ScalarField<T>, mask: Option<&ScalarField<T>>) -> T {
    let g = f.grid();
    (0..g.node_count())
        .map(|i| {
            let m = mask.map_or(T::one(), |m| m.get(i));
            T::lit(g.weight(i)) * m * f.get(i).abs()
        })
        .fold(T::zero(), |a, b| a + b)
}

/// Trapezoidal inner product of two scalar fields.
pub fn inner<T: Real>(f: &ScalarField<T>, g: &ScalarField<T>) -> Result<T> {
    if f.grid() != g.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = f.grid();
    Ok((0..grid.node_count())
        .map(|i| T::lit(grid.weight(i)) * f.get(i) * g.get(i))
        .fold(T::zero(), |a, b| a + b))
}

/// Trapezoidal integral of a scalar field.
pub fn integral<T: Real>(f: &ScalarField<T>) -> T {
    let g = f.grid();
    (0..g.node_count())
        .map(|i| T::lit(g.weight(i)) * f.get(i))
        .fold(T::zero(), |a, b| a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2() -> Grid {
        Grid::unit_cube(2, 11).unwrap()
    }

    #[test]
    fn constant_vector_has_zero_strain() {
        let g = grid2();
        let u = VectorField::<f64>::from_fn(&g, |_| [1.5, -2.0, 0.0]);
        let d = sym_gradient(&u).unwrap();
        assert!(d.values().iter().all(|v| v.abs() < 1e-12));
        let div = divergence(&u).unwrap();
        assert!(div.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn shear_field_strain() {
        let g = grid2();
        let u = VectorField::<f64>::from_fn(&g, |x| [x[1], x[0], 0.0]);
        let d = sym_gradient(&u).unwrap();
        for node in 0..g.node_count() {
            assert!(d.entry(node, 0, 0).abs() < 1e-12);
            assert!(d.entry(node, 1, 1).abs() < 1e-12);
            assert!((d.entry(node, 0, 1) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_of_linear_and_vortex() {
        let g = grid2();
        let u = VectorField::<f64>::from_fn(&g, |x| [x[0], x[1], 0.0]);
        let div = divergence(&u).unwrap();
        assert!(div.values().iter().all(|v| (v - 2.0).abs() < 1e-12));
        let vortex = VectorField::<f64>::from_fn(&g, |x| [-x[1], x[0], 0.0]);
        let div = divergence(&vortex).unwrap();
        assert!(div.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn one_sided_stencil_is_second_order_exact_for_quadratics() {
        let g = grid2();
        let f = ScalarField::<f64>::from_fn(&g, |x| x[0] * x[0]);
        let d = partial(&g, f.values(), 0);
        for i in 0..g.node_count() {
            let x = g.position(i)[0];
            assert!((d[i] - 2.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn contract_identity_and_zero() {
        let g = grid2();
        let id = SymTensorField::<f64>::identity(&g);
        let c = contract(&id, &id).unwrap();
        assert!(c.values().iter().all(|v| (v - 2.0).abs() < 1e-15));
        let z = SymTensorField::zeros(&g);
        let c = contract(&z, &id).unwrap();
        assert!(c.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn contract_rejects_grid_mismatch() {
        let a = SymTensorField::<f64>::zeros(&grid2());
        let b = SymTensorField::<f64>::zeros(&Grid::unit_cube(2, 5).unwrap());
        assert_eq!(contract(&a, &b), Err(Error::GridMismatch));
    }

    #[test]
    fn l2_norm_examples() {
        let g = Grid::unit_cube(2, 201).unwrap();
        let one = ScalarField::<f64>::constant(&g, 1.0);
        assert!((l2_norm(&one, None).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(l2_norm(&ScalarField::<f64>::zeros(&g), None).unwrap(), 0.0);
        // int_{-1/2}^{1/2} x^2 dx = 1/12; trapezoid error is h^2/6 relative-ish
        let x = ScalarField::<f64>::from_fn(&g, |p| p[0]);
        assert!((l2_norm(&x, None).unwrap() - (1.0f64 / 12.0).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn l2_norm_converges_to_analytic_value() {
        let g = Grid::unit_cube(2, 1001).unwrap();
        let x = ScalarField::<f64>::from_fn(&g, |p| p[0]);
        assert!((l2_norm(&x, None).unwrap() - (1.0f64 / 12.0).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn sym_gradient_rejects_wrong_length() {
        let g = grid2();
        let bad = VectorField::<f64>::from_values(g.clone(), vec![0.0; g.node_count()]);
        assert!(bad.is_err());
    }

    #[test]
    fn periodic_operators_commute_with_cyclic_shift() {
        let g = Grid::periodic_cell(2, 16).unwrap();
        let t = 2.0 * std::f64::consts::PI;
        let f = |x: [f64; 3]| [(t * x[0]).sin() * (t * x[1]).cos(), (t * x[1]).sin() + x[0].cos(), 0.0];
        let u = VectorField::<f64>::from_fn(&g, f);
        let mut shifted = VectorField::<f64>::zeros(&g);
        for i in 0..g.node_count() {
            shifted.set_at(g.shift(i, 0, 3).unwrap(), u.at(i));
        }
        let d = sym_gradient(&u).unwrap();
        let ds = sym_gradient(&shifted).unwrap();
        for i in 0..g.node_count() {
            let j = g.shift(i, 0, 3).unwrap();
            for (a, b) in [(0, 0), (0, 1), (1, 1)] {
                assert_eq!(d.entry(i, a, b), ds.entry(j, a, b));
            }
        }
    }
}
