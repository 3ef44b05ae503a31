//! Unit-cell problems for the effective permeability and stiffness, a Darcy
//! solver on the unit cube and the micro-versus-Darcy comparison in `eps`.
//!
//! Permeability is defined against the same viscous form `mu D(u):D(phi)` used
//! by the microscopic solver: with `u^k` the periodic cell velocity under unit
//! body force `e_k` (no slip on the solid, incompressible),
//! `K_ik = mu <u^k_i>`, so a micro flow with viscosity `eps^2 mu` under a mean
//! pressure gradient `g` has mean velocity `-(K / mu) g` in the limit.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fem::{lumped_mass, ElementKernels, ScalarOperator, VectorOperator};
use crate::geometry::{
    build_phase_mask, check_pore_connectivity, percolates, porosity, BoundaryClassification, BoundaryTag, PhaseMask, UnitCellPattern,
};
use crate::grid_core::{Grid, ScalarField};
use crate::microsim::{self, DrivingPressure, MaterialParams, SimState, SkeletonMode, TransportMode};
use crate::scalar::dot;
use crate::solver::{cg_solve, zero_fixed, Constrained, LinearOperator};

/// Augmented-Lagrangian penalty relative to the viscosity.
const PENALTY: f64 = 200.0;
const CELL_CG_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PermeabilityStatus {
    Ok,
    /// No fluid node in the cell.
    FullySolid,
    /// The pore space does not percolate along some axis; the matching column is zero.
    Disconnected,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Permeability {
    pub dim: usize,
    /// Symmetrized tensor; entries beyond `dim` are zero.
    pub k: [[f64; 3]; 3],
    /// `max |K_ij - K_ji| / max |K_ii|` before symmetrization.
    pub raw_asymmetry: f64,
    pub status: PermeabilityStatus,
    pub porosity: f64,
    /// Uzawa iterations per direction.
    pub iterations: Vec<usize>,
}

fn cell_mask(pattern: UnitCellPattern, grid: &Grid) -> Result<PhaseMask<f64>> {
    if (0..grid.dim()).any(|a| !grid.is_periodic(a)) {
        return Err(Error::InvalidGrid("cell problems need a fully periodic grid".into()));
    }
    build_phase_mask(pattern, 1.0, grid)
}

/// Periodic Stokes cell problem in each direction, solved by augmented-Lagrangian Uzawa
/// iterations with element-wise pressures.
pub fn permeability_cell_problem(pattern: UnitCellPattern, grid: &Grid, mu: f64) -> Result<Permeability> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("viscosity must be positive, got {mu}")));
    }
    let mask = cell_mask(pattern, grid)?;
    let dim = grid.dim();
    let nn = grid.node_count();
    let pore = mask.pore_nodes();
    let phi = porosity(&mask);
    let n_pore = pore.iter().filter(|&&p| p).count();
    let blank = |status| Permeability {
        dim,
        k: [[0.0; 3]; 3],
        raw_asymmetry: 0.0,
        status,
        porosity: phi,
        iterations: vec![0; dim],
    };
    if n_pore == 0 {
        return Ok(blank(PermeabilityStatus::FullySolid));
    }
    if n_pore == nn {
        return Err(Error::Degenerate {
            mode: "no solid in the cell: permeability unbounded".into(),
        });
    }

    let kernels = ElementKernels::<f64>::new(grid);
    let ne = grid.element_count();
    let r = PENALTY * mu;
    // same element viscosity as the micro solver
    let visc: Vec<f64> = crate::fem::masked_average(grid, &vec![mu; nn], mask.chi_eps.values());
    let op = VectorOperator {
        grid,
        kernels: &kernels,
        c_dd: visc.clone(),
        c_div: vec![r; ne],
        shift: None,
    };
    let fixed: Vec<bool> = (0..dim).flat_map(|_| pore.iter().map(|&p| !p)).collect();
    let con = Constrained::new(&op, &fixed);
    let weights = lumped_mass::<f64>(grid, 1);

    let mut raw = [[0.0; 3]; 3];
    let mut iterations = vec![0; dim];
    let mut status = PermeabilityStatus::Ok;
    for k in 0..dim {
        if !percolates(grid, &pore, k) {
            status = PermeabilityStatus::Disconnected;
            continue;
        }
        let mut force = vec![0.0; dim * nn];
        force[k * nn..(k + 1) * nn].copy_from_slice(&weights);
        let mut p = vec![0.0; ne];
        let mut u = vec![0.0; dim * nn];
        let mut converged = false;
        for it in 1..=500 {
            let mut rhs = force.clone();
            kernels.add_div_transpose(grid, &p, &mut rhs);
            zero_fixed(&fixed, &mut rhs);
            let out = cg_solve(&con, &rhs, Some(&u), CELL_CG_TOL, 20 * rhs.len()).into_result()?;
            u = out.solution;
            let div = kernels.element_divergence(grid, &u);
            for (pe, de) in p.iter_mut().zip(&div) {
                *pe -= r * de;
            }
            iterations[k] = it;
            let div_norm = (kernels.volume() * dot(&div, &div)).sqrt();
            let grad_norm = (kernels.form_dd(grid, &visc, &u, &u) / mu).sqrt();
            if div_norm <= 1e-9 * grad_norm {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NotConverged {
                iterations: iterations[k],
                residual: f64::NAN,
            });
        }
        for i in 0..dim {
            raw[i][k] = mu * dot(&u[i * nn..(i + 1) * nn], &weights);
        }
    }
    let diag = (0..dim).map(|i| raw[i][i].abs()).fold(0.0, f64::max);
    let mut asym = 0.0f64;
    let mut k = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            asym = asym.max((raw[i][j] - raw[j][i]).abs());
            k[i][j] = 0.5 * (raw[i][j] + raw[j][i]);
        }
    }
    Ok(Permeability {
        dim,
        k,
        raw_asymmetry: if diag > 0.0 { asym / diag } else { 0.0 },
        status,
        porosity: phi,
        iterations,
    })
}

/// Unit macroscopic strains in the order used for the Voigt matrix.
pub fn voigt_strains(dim: usize) -> Vec<(usize, usize)> {
    if dim == 2 {
        vec![(0, 0), (1, 1), (0, 1)]
    } else {
        vec![(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)]
    }
}

fn voigt_label(i: usize, j: usize) -> String {
    format!("E{}{}", i + 1, j + 1)
}

/// Effective stiffness `C_ab = <c (E^a + D(chi^a)) : (E^b + D(chi^b))>` with
/// `E^a = (e_i (x) e_j + e_j (x) e_i) / 2`; a homogeneous cell gives `lambda` on
/// the normal diagonal and `lambda / 2` on the shear diagonal.
///
/// Nodes touching only pore elements are dropped (traction-free void).
pub fn elasticity_cell_problem(pattern: UnitCellPattern, grid: &Grid, lambda: f64) -> Result<Vec<Vec<f64>>> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let mask = cell_mask(pattern, grid)?;
    let dim = grid.dim();
    let nn = grid.node_count();
    let solid: Vec<bool> = mask.pore_nodes().iter().map(|&p| !p).collect();
    for a in 0..dim {
        if !percolates(grid, &solid, a) {
            return Err(Error::Degenerate { mode: voigt_label(a, a) });
        }
    }
    let s = mask.solid_indicator();
    let c: Vec<f64> = crate::fem::element_average(grid, s.values()).iter().map(|&v| lambda * v).collect();
    let kernels = ElementKernels::<f64>::new(grid);
    let op = VectorOperator {
        grid,
        kernels: &kernels,
        c_dd: c.clone(),
        c_div: vec![0.0; c.len()],
        shift: None,
    };
    let diag = op.diagonal().expect("vector operator has a diagonal");
    let pin = solid.iter().position(|&b| b).expect("percolating solid is nonempty");
    let mut fixed: Vec<bool> = diag.iter().map(|&d| d == 0.0).collect();
    for comp in 0..dim {
        fixed[comp * nn + pin] = true;
    }
    let con = Constrained::new(&op, &fixed);

    let modes = voigt_strains(dim);
    let mut total: Vec<Vec<[[f64; 3]; 3]>> = Vec::with_capacity(modes.len());
    for &(i, j) in &modes {
        let mut e = [[0.0; 3]; 3];
        e[i][j] = if i == j { 1.0 } else { 0.5 };
        e[j][i] = e[i][j];
        let mut rhs = vec![0.0; dim * nn];
        kernels.add_strain_load(grid, &c, &e, &mut rhs);
        zero_fixed(&fixed, &mut rhs);
        let out = cg_solve(&con, &rhs, None, CELL_CG_TOL, 20 * rhs.len()).into_result()?;
        let mut chi = out.solution;
        zero_fixed(&fixed, &mut chi);
        // full strain at every Gauss point
        let mut strains = Vec::with_capacity(grid.element_count() * (1 << dim));
        for el in 0..grid.element_count() {
            for mut g in kernels.gauss_strains(grid, el, &chi) {
                for p in 0..dim {
                    for q in 0..dim {
                        g[p][q] += e[p][q];
                    }
                }
                strains.push(g);
            }
        }
        total.push(strains);
    }
    let npts = 1usize << dim;
    let w = kernels.gauss_weight();
    let m = modes.len();
    let mut out = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in a..m {
            let mut acc = 0.0;
            for (el, &ce) in c.iter().enumerate() {
                if ce == 0.0 {
                    continue;
                }
                for g in 0..npts {
                    let (sa, sb) = (&total[a][el * npts + g], &total[b][el * npts + g]);
                    let mut dd = 0.0;
                    for p in 0..dim {
                        for q in 0..dim {
                            dd += sa[p][q] * sb[p][q];
                        }
                    }
                    acc += ce * w * dd;
                }
            }
            out[a][b] = acc;
            out[b][a] = acc;
        }
    }
    Ok(out)
}

/// Both effective tensors of one pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveTensors {
    pub permeability: Permeability,
    /// `None` when the solid does not carry load; `degenerate_mode` names the strain.
    pub c_eff: Option<Vec<Vec<f64>>>,
    pub degenerate_mode: Option<String>,
    pub porosity: f64,
}

pub fn effective_tensors(pattern: UnitCellPattern, grid: &Grid, mu: f64, lambda: f64) -> Result<EffectiveTensors> {
    let permeability = match permeability_cell_problem(pattern, grid, mu) {
        Ok(k) => k,
        Err(Error::Degenerate { .. }) => Permeability {
            dim: grid.dim(),
            k: [[f64::INFINITY; 3]; 3],
            raw_asymmetry: 0.0,
            status: PermeabilityStatus::Ok,
            porosity: 1.0,
            iterations: vec![0; grid.dim()],
        },
        Err(e) => return Err(e),
    };
    let (c_eff, degenerate_mode) = match elasticity_cell_problem(pattern, grid, lambda) {
        Ok(c) => (Some(c), None),
        Err(Error::Degenerate { mode }) => (None, Some(mode)),
        Err(e) => return Err(e),
    };
    Ok(EffectiveTensors {
        porosity: permeability.porosity,
        permeability,
        c_eff,
        degenerate_mode,
    })
}

impl EffectiveTensors {
    /// CSV blocks `tensor,index,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "tensor,index,value")?;
        writeln!(out, "porosity,,{}", self.porosity)?;
        let d = self.permeability.dim;
        for i in 0..d {
            for j in 0..d {
                writeln!(out, "K,{}{},{}", i + 1, j + 1, self.permeability.k[i][j])?;
            }
        }
        writeln!(out, "K_raw_asymmetry,,{}", self.permeability.raw_asymmetry)?;
        writeln!(out, "K_status,,{:?}", self.permeability.status)?;
        match (&self.c_eff, &self.degenerate_mode) {
            (Some(c), _) => {
                for (a, row) in c.iter().enumerate() {
                    for (b, v) in row.iter().enumerate() {
                        writeln!(out, "C,{}{},{}", a + 1, b + 1, v)?;
                    }
                }
            }
            (None, Some(mode)) => writeln!(out, "C_degenerate,{mode},")?,
            (None, None) => {}
        }
        Ok(())
    }
}

/// Pressure and mean Darcy velocity on the unit cube.
#[derive(Clone, Debug, PartialEq)]
pub struct DarcySolution {
    pub pressure: ScalarField<f64>,
    /// Volume average of `-(K / mu) grad p`.
    pub flux: [f64; 3],
}

/// `-div((K / mu) grad p) = 0` with `p = dp` on `S1`, `p = 0` on `S2`, no flux on `S0`.
pub fn darcy_macro_solve(k: &[[f64; 3]; 3], mu: f64, dp: f64, grid: &Grid) -> Result<DarcySolution> {
    let dim = grid.dim();
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("viscosity must be positive, got {mu}")));
    }
    if grid.is_periodic(0) {
        return Err(Error::InvalidGrid("Darcy solve needs S1 and S2 faces".into()));
    }
    // positive definiteness through leading minors
    let mut a = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            a[i][j] = k[i][j] / mu;
        }
    }
    let m1 = a[0][0];
    let m2 = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let m3 = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    let minors = [m1, m2, m3];
    if minors[..dim].iter().any(|&m| !(m > 0.0) || !m.is_finite())
        || (0..dim).any(|i| (0..dim).any(|j| (k[i][j] - k[j][i]).abs() > 1e-12 * m1.abs().max(1.0)))
    {
        return Err(Error::Singular(format!("permeability {k:?} is not symmetric positive definite")));
    }
    let kernels = ElementKernels::<f64>::new(grid);
    let op = ScalarOperator {
        grid,
        kernels: &kernels,
        local: kernels.scalar_stiffness(&a),
        c: vec![1.0; grid.element_count()],
    };
    let bc = BoundaryClassification::new(grid);
    let nn = grid.node_count();
    let mut p = vec![0.0; nn];
    let mut fixed = vec![false; nn];
    for i in 0..nn {
        if bc.on_closure(i, BoundaryTag::S1) {
            fixed[i] = true;
            p[i] = dp;
        } else if bc.on_closure(i, BoundaryTag::S2) {
            fixed[i] = true;
        }
    }
    let mut lifted = vec![0.0; nn];
    op.apply(&p, &mut lifted);
    let mut rhs: Vec<f64> = lifted.iter().map(|v| -v).collect();
    zero_fixed(&fixed, &mut rhs);
    let con = Constrained::new(&op, &fixed);
    let out = cg_solve(&con, &rhs, None, 1e-13, 20 * nn + 100).into_result()?;
    for i in 0..nn {
        if !fixed[i] {
            p[i] = out.solution[i];
        }
    }
    let mut flux = [0.0; 3];
    let ne = grid.element_count() as f64;
    for e in 0..grid.element_count() {
        let g = kernels.element_gradient(grid, e, &p);
        for i in 0..dim {
            for j in 0..dim {
                flux[i] -= a[i][j] * g[j] / ne;
            }
        }
    }
    Ok(DarcySolution {
        pressure: ScalarField::from_values(grid.clone(), p)?,
        flux,
    })
}

/// Micro-scale run settings for [`compare_micro_macro`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MicroPolicy {
    /// Grid intervals per periodicity cell.
    pub nodes_per_cell: usize,
    /// Compressibility penalty `tau c^2 / (eps^2 mu)`.
    pub penalty: f64,
    /// Relative change of the mean flux below which the run counts as steady.
    pub steady_tol: f64,
    pub max_steps: usize,
}

impl Default for MicroPolicy {
    fn default() -> Self {
        MicroPolicy {
            nodes_per_cell: 16,
            penalty: 500.0,
            steady_tol: 1e-8,
            max_steps: 2000,
        }
    }
}

/// Steady mean `x1` velocity of the single-fluid micro model with a rigid
/// skeleton under the pressure drop `dp` from `S1` to `S2`.
pub fn micro_steady_flux(pattern: UnitCellPattern, mu: f64, dp: f64, eps: f64, policy: MicroPolicy) -> Result<(f64, usize)> {
    let m = crate::geometry::cells_across(eps)?;
    let grid = Grid::unit_cube(2, m * policy.nodes_per_cell + 1)?;
    let mask = build_phase_mask::<f64>(pattern, eps, &grid)?;
    if !check_pore_connectivity(&mask) {
        return Err(Error::Degenerate {
            mode: "pore space does not connect S1 and S2".into(),
        });
    }
    let tau = grid.spacing();
    let c = (policy.penalty * eps * eps * mu / tau).sqrt();
    let params = MaterialParams {
        mu1: mu,
        mu2: mu,
        lambda: 1.0,
        c_f1: c,
        c_f2: c,
        c_s: c,
        p0: 0.0,
        p_drive: DrivingPressure::linear_drop(dp),
        epsilon: eps,
        h_mollify: 2.0 * grid.spacing(),
        tau,
        t_final: f64::INFINITY,
        skeleton: SkeletonMode::Rigid,
        transport: TransportMode::Frozen,
        cg_tol: 1e-11,
        cg_max_iter: 100_000,
    };
    let weights = lumped_mass::<f64>(&grid, 1);
    let nn = grid.node_count();
    let mut state = SimState::initial(&mask, &params)?;
    let mut prev = f64::NAN;
    for n in 1..=policy.max_steps {
        state = microsim::momentum_step(&state, &mask, &params)?;
        let flux = dot(&state.v.values()[..nn], &weights);
        if (flux - prev).abs() <= policy.steady_tol * flux.abs() {
            return Ok((flux, n));
        }
        prev = flux;
    }
    Err(Error::NotConverged {
        iterations: policy.max_steps,
        residual: f64::NAN,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub micro_flux: f64,
    pub darcy_flux: f64,
    pub rel_error: f64,
    pub observed_order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub permeability: Permeability,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].rel_error < w[0].rel_error)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "eps,micro_flux,darcy_flux,rel_error,observed_order")?;
        for r in &self.rows {
            let order = r.observed_order.map(|o| o.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{}", r.eps, r.micro_flux, r.darcy_flux, r.rel_error, order)?;
        }
        Ok(())
    }
}

/// Micro flux against the Darcy flux with the cell permeability, for each `eps`.
pub fn compare_micro_macro(pattern: UnitCellPattern, mu: f64, dp: f64, eps_list: &[f64], policy: MicroPolicy) -> Result<ConvergenceTable> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("eps_list must be nonempty and strictly decreasing".into()));
    }
    for &e in eps_list {
        crate::geometry::cells_across(e)?;
    }
    let cell = Grid::periodic_cell(2, policy.nodes_per_cell)?;
    let permeability = permeability_cell_problem(pattern, &cell, mu)?;
    if permeability.status != PermeabilityStatus::Ok {
        return Err(Error::Degenerate {
            mode: format!("cell permeability {:?}", permeability.status),
        });
    }
    let darcy_grid = Grid::unit_cube(2, 2 * policy.nodes_per_cell + 1)?;
    let darcy = darcy_macro_solve(&permeability.k, mu, dp, &darcy_grid)?.flux[0];
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &eps in eps_list {
        let (micro, _) = micro_steady_flux(pattern, mu, dp, eps, policy)?;
        let rel_error = (micro - darcy).abs() / darcy.abs();
        let observed_order = rows.last().map(|p| (p.rel_error / rel_error).ln() / (p.eps / eps).ln());
        rows.push(ConvergenceRow {
            eps,
            micro_flux: micro,
            darcy_flux: darcy,
            rel_error,
            observed_order,
        });
    }
    Ok(ConvergenceTable { permeability, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CellShape, Inclusion};

    fn disk(r: f64) -> UnitCellPattern {
        UnitCellPattern::new(CellShape::Disk, r).unwrap()
    }

    #[test]
    fn fully_solid_cell_has_zero_permeability() {
        let g = Grid::periodic_cell(2, 16).unwrap();
        let pat = UnitCellPattern::with_inclusion(CellShape::Disk, 0.0, Inclusion::Pore).unwrap();
        let k = permeability_cell_problem(pat, &g, 1.0).unwrap();
        assert_eq!(k.status, PermeabilityStatus::FullySolid);
        assert!(k.k.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn isolated_pores_give_zero_permeability() {
        let g = Grid::periodic_cell(2, 16).unwrap();
        let pat = UnitCellPattern::with_inclusion(CellShape::Disk, 0.3, Inclusion::Pore).unwrap();
        let k = permeability_cell_problem(pat, &g, 1.0).unwrap();
        assert_eq!(k.status, PermeabilityStatus::Disconnected);
        assert!(k.k.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn disk_permeability_is_isotropic_and_viscosity_free() {
        let g = Grid::periodic_cell(2, 32).unwrap();
        let k = permeability_cell_problem(disk(0.25), &g, 1.0).unwrap();
        assert!(k.k[0][0] > 0.0);
        assert!((k.k[0][0] - k.k[1][1]).abs() <= 0.01 * k.k[0][0], "{k:?}");
        assert!(k.k[0][1].abs() <= 0.01 * k.k[0][0]);
        let k2 = permeability_cell_problem(disk(0.25), &g, 2.0).unwrap();
        assert!((k2.k[0][0] - k.k[0][0]).abs() <= 1e-6 * k.k[0][0]);
    }

    #[test]
    fn homogeneous_cell_stiffness() {
        let g = Grid::periodic_cell(2, 8).unwrap();
        let pat = UnitCellPattern::with_inclusion(CellShape::Disk, 0.0, Inclusion::Pore).unwrap();
        let c = elasticity_cell_problem(pat, &g, 3.0).unwrap();
        let expected = [[3.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 1.5]];
        for a in 0..3 {
            for b in 0..3 {
                assert!((c[a][b] - expected[a][b]).abs() < 1e-6, "{c:?}");
            }
        }
    }

    #[test]
    fn stiffness_drops_with_porosity() {
        let g = Grid::periodic_cell(2, 32).unwrap();
        let small = elasticity_cell_problem(UnitCellPattern::solid_matrix(CellShape::Disk, 0.15).unwrap(), &g, 1.0).unwrap();
        let large = elasticity_cell_problem(UnitCellPattern::solid_matrix(CellShape::Disk, 0.3).unwrap(), &g, 1.0).unwrap();
        for a in 0..3 {
            assert!(large[a][a] < small[a][a]);
            for b in 0..3 {
                assert_eq!(small[a][b], small[b][a]);
            }
        }
    }

    #[test]
    fn isolated_solid_is_degenerate() {
        let g = Grid::periodic_cell(2, 16).unwrap();
        assert!(matches!(
            elasticity_cell_problem(disk(0.25), &g, 1.0),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn darcy_isotropic_linear_profile() {
        let g = Grid::unit_cube(2, 17).unwrap();
        let k = [[0.3, 0.0, 0.0], [0.0, 0.3, 0.0], [0.0, 0.0, 0.0]];
        let sol = darcy_macro_solve(&k, 2.0, 1.5, &g).unwrap();
        assert!((sol.flux[0] + 0.15 * 1.5).abs() < 1e-8);
        assert!(sol.flux[1].abs() < 1e-8);
        for i in 0..g.node_count() {
            let x = g.position(i)[0];
            assert!((sol.pressure.get(i) - 1.5 * (x + 0.5)).abs() < 1e-8);
        }
        let zero = darcy_macro_solve(&k, 2.0, 0.0, &g).unwrap();
        assert_eq!(zero.flux, [0.0; 3]);
        let double = darcy_macro_solve(&k, 2.0, 3.0, &g).unwrap();
        assert!((double.flux[0] - 2.0 * sol.flux[0]).abs() < 1e-12);
    }

    #[test]
    fn darcy_rejects_singular_tensor() {
        let g = Grid::unit_cube(2, 9).unwrap();
        let k = [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0; 3]];
        assert!(matches!(darcy_macro_solve(&k, 1.0, 1.0, &g), Err(Error::Singular(_))));
    }
}
