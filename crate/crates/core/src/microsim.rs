//! Implicit-Euler solver for the microscopic model.
//!
//! One global displacement field lives on every node, so displacement
//! continuity across the pore boundary and across the fluid interface holds by
//! construction. The pressure is eliminated through the deviation form of the
//! continuity equations, `p - p0 = -c^2 div w`, which leaves a symmetric
//! positive definite problem for the velocity `v` at each step:
//!
//! ```text
//! a(v, phi) + tau b(v, phi) = L(phi) - b(w^n, phi),   w^{n+1} = w^n + tau v
//! a(v, phi) = int_pores eps^2 mu_h D(v):D(phi)
//! b(w, phi) = int (1 - chi_eps) lambda D(w):D(phi) + c^2 div w div phi
//! L(phi)    = -int grad p0_drive . phi - p0 int_{S1 u S2} n . phi
//! ```
//!
//! Spatially the forms use Q1 elements. Element coefficients of `b` are corner
//! averages of the nodal coefficients; the viscosity of an element is the mean
//! of `mu_h` over its pore corners, so elements touching the pore space carry
//! the full fluid viscosity. `D:D` is integrated with the full Gauss rule and
//! `div div` with the centre point.

use crate::error::{Error, Result};
use crate::fem::{element_average, lumped_mass, masked_average, ElementKernels, VectorOperator};
use crate::geometry::{BoundaryClassification, BoundaryTag, PhaseMask};
use crate::grid_core::{divergence, gradient, Grid, ScalarField, VectorField};
use crate::mollifier::MollifierKernel;
use crate::scalar::{dot, Real};
use crate::solver::{self, zero_fixed, CgOutcome, Constrained, LinearOperator};
use crate::transport;

/// Source of the driving pressure field `p0_drive` whose gradient loads the momentum balance.
#[derive(Clone, Debug, PartialEq)]
pub enum DrivingPressure {
    /// `p0_drive(x) = g . x`.
    Gradient([f64; 3]),
    /// Tabulated nodal values; the gradient is taken with the grid difference operator.
    Field(ScalarField<f64>),
}

impl DrivingPressure {
    /// A pressure drop `drop` from `S1` (`x1 = 1/2`) to `S2` (`x1 = -1/2`).
    pub fn linear_drop(drop: f64) -> Self {
        DrivingPressure::Gradient([drop, 0.0, 0.0])
    }

    pub fn gradient_at<T: Real>(&self, grid: &Grid) -> Result<VectorField<T>> {
        match self {
            DrivingPressure::Gradient(g) => Ok(VectorField::from_fn(grid, |_| *g)),
            DrivingPressure::Field(f) => {
                if f.grid() != grid {
                    return Err(Error::GridMismatch);
                }
                let gf = gradient(f);
                VectorField::from_values(grid.clone(), gf.values().iter().map(|&v| T::lit(v)).collect())
            }
        }
    }
}

/// How the skeleton responds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SkeletonMode {
    #[default]
    Elastic,
    /// Solid nodes are held fixed; only the pore space moves.
    Rigid,
}

/// Whether the transport step runs after each momentum solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TransportMode {
    #[default]
    Upwind,
    /// Viscosity and phase stay frozen; no CFL restriction.
    Frozen,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaterialParams {
    pub mu1: f64,
    pub mu2: f64,
    pub lambda: f64,
    pub c_f1: f64,
    pub c_f2: f64,
    pub c_s: f64,
    /// Reference pressure in the traction condition on `S1 u S2`.
    pub p0: f64,
    pub p_drive: DrivingPressure,
    pub epsilon: f64,
    pub h_mollify: f64,
    pub tau: f64,
    pub t_final: f64,
    pub skeleton: SkeletonMode,
    pub transport: TransportMode,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            mu1: 1.0,
            mu2: 1.0,
            lambda: 1.0,
            c_f1: 1.0,
            c_f2: 1.0,
            c_s: 1.0,
            p0: 0.0,
            p_drive: DrivingPressure::linear_drop(1.0),
            epsilon: 0.25,
            h_mollify: 0.05,
            tau: 2e-4,
            t_final: 2e-2,
            skeleton: SkeletonMode::Elastic,
            transport: TransportMode::Upwind,
            cg_tol: 1e-10,
            cg_max_iter: 50_000,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("lambda", self.lambda),
            ("c_f1", self.c_f1),
            ("c_f2", self.c_f2),
            ("c_s", self.c_s),
            ("tau", self.tau),
            ("h_mollify", self.h_mollify),
            ("cg_tol", self.cg_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.t_final >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "t_final must be nonnegative, got {}",
                self.t_final
            )));
        }
        crate::geometry::cells_across(self.epsilon)?;
        Ok(())
    }

    pub fn mu_range(&self) -> (f64, f64) {
        (self.mu1.min(self.mu2), self.mu1.max(self.mu2))
    }
}

/// Running energy account of a simulation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyLedger {
    pub dissipated: f64,
    pub work: f64,
    /// Relative balance residual of the most recent step.
    pub last_residual: f64,
    pub max_residual: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState<T> {
    pub w: VectorField<T>,
    pub v: VectorField<T>,
    /// Sharp viscosity, advected.
    pub mu: ScalarField<T>,
    /// Mollified viscosity used by the operator.
    pub mu_mollified: ScalarField<T>,
    pub chi: ScalarField<T>,
    pub t: f64,
    pub energy: EnergyLedger,
    /// CG iterations of the last step.
    pub last_iterations: usize,
}

impl<T: Real> SimState<T> {
    /// Rest state: `w = v = 0`, `mu = mu1` where `chi = 1` and `mu2` elsewhere.
    pub fn initial(mask: &PhaseMask<T>, params: &MaterialParams) -> Result<Self> {
        params.validate()?;
        let g = &mask.grid;
        let (m1, m2) = (T::lit(params.mu1), T::lit(params.mu2));
        let mu_vals = mask.chi.values().iter().map(|&c| c * m1 + (T::one() - c) * m2).collect();
        let mu = ScalarField::from_values(g.clone(), mu_vals)?;
        let mu_mollified = transport::mollify_viscosity(&mu, mask, params)?;
        Ok(SimState {
            w: VectorField::zeros(g),
            v: VectorField::zeros(g),
            mu,
            mu_mollified,
            chi: mask.chi.clone(),
            t: 0.0,
            energy: EnergyLedger::default(),
            last_iterations: 0,
        })
    }
}

/// Energy terms of a state under the current coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub elastic: f64,
    pub compressive: f64,
    pub dissipated_cumulative: f64,
    pub external_work_cumulative: f64,
    pub balance_residual: f64,
}

/// Nodal `c^2 = chi_eps (chi c_f1^2 + (1 - chi) c_f2^2) + (1 - chi_eps) c_s^2`.
pub fn sound_speed_sq<T: Real>(mask: &PhaseMask<T>, chi: &ScalarField<T>, params: &MaterialParams) -> Vec<T> {
    let (f1, f2, s) = (T::lit(params.c_f1.powi(2)), T::lit(params.c_f2.powi(2)), T::lit(params.c_s.powi(2)));
    mask.chi_eps
        .values()
        .iter()
        .zip(chi.values())
        .map(|(&ce, &c)| ce * (c * f1 + (T::one() - c) * f2) + (T::one() - ce) * s)
        .collect()
}

/// `p = p0 - c^2 div w`, with the phase taken from `mask.chi`.
pub fn pressure_from_displacement<T: Real>(w: &VectorField<T>, mask: &PhaseMask<T>, params: &MaterialParams) -> Result<ScalarField<T>> {
    if w.grid() != &mask.grid {
        return Err(Error::GridMismatch);
    }
    let div = divergence(w)?;
    let c2 = sound_speed_sq(mask, &mask.chi, params);
    let p0 = T::lit(params.p0);
    let vals = div.values().iter().zip(&c2).map(|(&d, &c)| p0 - c * d).collect();
    ScalarField::from_values(mask.grid.clone(), vals)
}

/// Element coefficients of one step, frozen while it is taken.
#[derive(Clone, Debug)]
pub struct StepCoefficients<T> {
    pub viscous: Vec<T>,
    pub solid: Vec<T>,
    pub compressive: Vec<T>,
    pub tau: T,
}

impl<T: Real> StepCoefficients<T> {
    pub fn new(mask: &PhaseMask<T>, state: &SimState<T>, params: &MaterialParams) -> Self {
        let g = &mask.grid;
        let eps2 = T::lit(params.epsilon * params.epsilon);
        let lam = T::lit(params.lambda);
        // a rigid skeleton stores no elastic energy
        let lam = if params.skeleton == SkeletonMode::Rigid { T::zero() } else { lam };
        let solid_nodal: Vec<T> = mask.chi_eps.values().iter().map(|&ce| (T::one() - ce) * lam).collect();
        let c2 = sound_speed_sq(mask, &state.chi, params);
        StepCoefficients {
            viscous: masked_average(g, state.mu_mollified.values(), mask.chi_eps.values())
                .into_iter()
                .map(|m| eps2 * m)
                .collect(),
            solid: element_average(g, &solid_nodal),
            compressive: element_average(g, &c2),
            tau: T::lit(params.tau),
        }
    }

    /// Coefficients of the step operator `a + tau b`.
    fn step_operator<'a>(&self, grid: &'a Grid, kernels: &'a ElementKernels<T>) -> VectorOperator<'a, T> {
        VectorOperator {
            grid,
            kernels,
            c_dd: self.viscous.iter().zip(&self.solid).map(|(&a, &s)| a + self.tau * s).collect(),
            c_div: self.compressive.iter().map(|&c| self.tau * c).collect(),
            shift: None,
        }
    }

    /// The history form `b`.
    fn storage_operator<'a>(&self, grid: &'a Grid, kernels: &'a ElementKernels<T>) -> VectorOperator<'a, T> {
        VectorOperator {
            grid,
            kernels,
            c_dd: self.solid.clone(),
            c_div: self.compressive.clone(),
            shift: None,
        }
    }
}

/// Degrees of freedom held at zero: every component on `S0`, plus solid nodes
/// for a rigid skeleton.
pub fn fixed_dofs<T: Real>(mask: &PhaseMask<T>, params: &MaterialParams) -> Vec<bool> {
    let g = &mask.grid;
    let bc = BoundaryClassification::new(g);
    let node_fixed: Vec<bool> = (0..g.node_count())
        .map(|i| bc.on_closure(i, BoundaryTag::S0) || (params.skeleton == SkeletonMode::Rigid && !mask.is_pore(i)))
        .collect();
    (0..g.dim()).flat_map(|_| node_fixed.iter().copied()).collect()
}

/// The load `L` as a nodal vector (lumped body force plus surface traction).
pub fn external_load<T: Real>(mask: &PhaseMask<T>, params: &MaterialParams) -> Result<VectorField<T>> {
    let g = &mask.grid;
    let grad = params.p_drive.gradient_at::<T>(g)?;
    let nn = g.node_count();
    let mass = lumped_mass::<T>(g, g.dim());
    let mut load: Vec<T> = grad.values().iter().zip(&mass).map(|(&gp, &m)| -gp * m).collect();
    if params.p0 != 0.0 {
        let bc = BoundaryClassification::new(g);
        let p0 = T::lit(params.p0);
        for i in 0..nn {
            let sign = match bc.tag(i) {
                Some(BoundaryTag::S1) => T::one(),
                Some(BoundaryTag::S2) => -T::one(),
                _ => continue,
            };
            let area: f64 = (1..g.dim()).map(|b| g.axis_weight(i, b) * g.spacing()).product();
            load[i] = load[i] - p0 * sign * T::lit(area);
        }
    }
    VectorField::from_values(g.clone(), load)
}

/// `A v` for the step operator at the current state, constrained to the free dofs.
pub fn apply_operator<T: Real>(
    v_trial: &VectorField<T>,
    state: &SimState<T>,
    mask: &PhaseMask<T>,
    params: &MaterialParams,
) -> Result<VectorField<T>> {
    if v_trial.grid() != &mask.grid {
        return Err(Error::GridMismatch);
    }
    let g = &mask.grid;
    let kernels = ElementKernels::new(g);
    let coef = StepCoefficients::new(mask, state, params);
    let op = coef.step_operator(g, &kernels);
    let fixed = fixed_dofs(mask, params);
    let con = Constrained::new(&op, &fixed);
    let mut y = vec![T::zero(); op.len()];
    con.apply(v_trial.values(), &mut y);
    VectorField::from_values(g.clone(), y)
}

/// `L - b(w^n, .)` restricted to the free dofs.
pub fn assemble_rhs<T: Real>(state: &SimState<T>, mask: &PhaseMask<T>, params: &MaterialParams) -> Result<VectorField<T>> {
    let g = &mask.grid;
    let kernels = ElementKernels::new(g);
    let coef = StepCoefficients::new(mask, state, params);
    let load = external_load(mask, params)?;
    let rhs = history_rhs(g, &kernels, &coef, &load, &state.w, &fixed_dofs(mask, params));
    VectorField::from_values(g.clone(), rhs)
}

fn history_rhs<T: Real>(
    g: &Grid,
    kernels: &ElementKernels<T>,
    coef: &StepCoefficients<T>,
    load: &VectorField<T>,
    w: &VectorField<T>,
    fixed: &[bool],
) -> Vec<T> {
    let storage = coef.storage_operator(g, kernels);
    let mut bw = vec![T::zero(); storage.len()];
    storage.apply(w.values(), &mut bw);
    let mut rhs: Vec<T> = load.values().iter().zip(&bw).map(|(&l, &b)| l - b).collect();
    zero_fixed(fixed, &mut rhs);
    rhs
}

/// Conjugate gradients on a vector field right-hand side.
pub fn cg_solve<T: Real, A: LinearOperator<T>>(op: &A, rhs: &VectorField<T>, tol: f64, max_iter: usize) -> CgOutcome<T> {
    solver::cg_solve(op, rhs.values(), None, T::lit(tol), max_iter)
}

fn quadratic<T: Real>(op: &VectorOperator<'_, T>, x: &[T]) -> f64 {
    let mut y = vec![T::zero(); x.len()];
    op.apply(x, &mut y);
    dot(x, &y).to_f64_()
}

/// Momentum solve only: returns the updated state before transport.
pub fn momentum_step<T: Real>(state: &SimState<T>, mask: &PhaseMask<T>, params: &MaterialParams) -> Result<SimState<T>> {
    let g = &mask.grid;
    let kernels = ElementKernels::new(g);
    let coef = StepCoefficients::new(mask, state, params);
    let fixed = fixed_dofs(mask, params);
    let load = external_load(mask, params)?;
    let rhs = history_rhs(g, &kernels, &coef, &load, &state.w, &fixed);

    let op = coef.step_operator(g, &kernels);
    let con = Constrained::new(&op, &fixed);
    let mut guess = state.v.values().to_vec();
    zero_fixed(&fixed, &mut guess);
    let out = solver::cg_solve(&con, &rhs, Some(&guess), T::lit(params.cg_tol), params.cg_max_iter).into_result()?;
    let mut v = out.solution;
    zero_fixed(&fixed, &mut v);

    let tau = coef.tau;
    let w_new: Vec<T> = state.w.values().iter().zip(&v).map(|(&w, &vi)| w + tau * vi).collect();

    // energy account with the coefficients of this step
    let storage = coef.storage_operator(g, &kernels);
    let visc = VectorOperator {
        grid: g,
        kernels: &kernels,
        c_dd: coef.viscous.clone(),
        c_div: vec![T::zero(); coef.viscous.len()],
        shift: None,
    };
    let e_old = 0.5 * quadratic(&storage, state.w.values());
    let e_new = 0.5 * quadratic(&storage, &w_new);
    let tau64 = params.tau;
    let dissipated = tau64 * quadratic(&visc, &v) + 0.5 * tau64 * tau64 * quadratic(&storage, &v);
    let mut free_load = load.values().to_vec();
    zero_fixed(&fixed, &mut free_load);
    let work = tau64 * dot(&free_load, &v).to_f64_();
    let scale = e_old.abs().max(e_new.abs()).max(dissipated).max(work.abs());
    let residual = if scale > 0.0 {
        (e_new - e_old + dissipated - work).abs() / scale
    } else {
        0.0
    };

    let mut energy = state.energy;
    energy.dissipated += dissipated;
    energy.work += work;
    energy.last_residual = residual;
    energy.max_residual = energy.max_residual.max(residual);
    energy.steps += 1;

    Ok(SimState {
        w: VectorField::from_values(g.clone(), w_new)?,
        v: VectorField::from_values(g.clone(), v)?,
        mu: state.mu.clone(),
        mu_mollified: state.mu_mollified.clone(),
        chi: state.chi.clone(),
        t: state.t + params.tau,
        energy,
        last_iterations: out.iterations,
    })
}

/// One full step: momentum solve, then phase advection, then viscosity
/// advection and mollification.
pub fn step<T: Real>(state: &SimState<T>, mask: &PhaseMask<T>, params: &MaterialParams) -> Result<SimState<T>> {
    let mut next = momentum_step(state, mask, params)?;
    if params.transport == TransportMode::Upwind {
        transport::check_cfl(&next.v, &mask.grid, params.tau)?;
        next.chi = transport::advect_phase(&next, mask, params.tau)?.field;
        let (mu, mu_h) = transport::update_viscosity(&next, mask, params)?;
        next.mu = mu;
        next.mu_mollified = mu_h;
    }
    Ok(next)
}

/// Steps until `t_final`, passing every state (the initial one included) to `observer`.
pub fn run<T: Real>(
    initial: SimState<T>,
    mask: &PhaseMask<T>,
    params: &MaterialParams,
    mut observer: impl FnMut(&SimState<T>),
) -> Result<SimState<T>> {
    let steps = (params.t_final / params.tau - 1e-9).ceil().max(0.0) as usize;
    let mut state = initial;
    observer(&state);
    for _ in 0..steps {
        state = step(&state, mask, params)?;
        observer(&state);
    }
    Ok(state)
}

/// Energies of `state` under its current coefficients.
pub fn energy_report<T: Real>(state: &SimState<T>, mask: &PhaseMask<T>, params: &MaterialParams) -> EnergyBreakdown {
    let g = &mask.grid;
    let kernels = ElementKernels::new(g);
    let coef = StepCoefficients::new(mask, state, params);
    let w = state.w.values();
    let elastic = 0.5 * kernels.form_dd(g, &coef.solid, w, w).to_f64_();
    let compressive = 0.5 * kernels.form_div(g, &coef.compressive, w, w).to_f64_();
    EnergyBreakdown {
        elastic,
        compressive,
        dissipated_cumulative: state.energy.dissipated,
        external_work_cumulative: state.energy.work,
        balance_residual: state.energy.last_residual,
    }
}

/// Mollifier for the viscosity of a grid, shared by all steps.
pub fn viscosity_kernel(grid: &Grid, params: &MaterialParams) -> Result<MollifierKernel> {
    MollifierKernel::new(grid, params.h_mollify)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_phase_mask, init_fluid_partition, CellShape, UnitCellPattern};
    use crate::rng::XorShift64Star;

    fn setup(n: usize, eps: f64) -> (PhaseMask<f64>, MaterialParams) {
        let g = Grid::unit_cube(2, n).unwrap();
        let mask = build_phase_mask(UnitCellPattern::new(CellShape::Disk, 0.25).unwrap(), eps, &g).unwrap();
        let mask = init_fluid_partition(&mask, 0.0);
        let params = MaterialParams {
            mu1: 1.0,
            mu2: 3.0,
            lambda: 2.0,
            c_f1: 1.5,
            c_f2: 0.7,
            c_s: 2.0,
            p0: 0.3,
            epsilon: eps,
            h_mollify: 2.5 * g.spacing(),
            tau: 1e-3,
            ..Default::default()
        };
        (mask, params)
    }

    #[test]
    fn pressure_examples() {
        let (mask, params) = setup(17, 1.0);
        let g = &mask.grid;
        let p = pressure_from_displacement(&VectorField::zeros(g), &mask, &params).unwrap();
        assert!(p.values().iter().all(|&v| v == params.p0));
        let d = 1e-3;
        let w = VectorField::from_fn(g, |x| [d * x[0], d * x[1], 0.0]);
        let p = pressure_from_displacement(&w, &mask, &params).unwrap();
        for i in 0..g.node_count() {
            if mask.is_pore(i) && mask.chi.get(i) == 1.0 {
                assert!((p.get(i) - params.p0 + 2.0 * d * params.c_f1.powi(2)).abs() < 1e-12);
            }
        }
        let p3 = pressure_from_displacement(&w.scaled(3.0), &mask, &params).unwrap();
        for i in 0..g.node_count() {
            assert!((p3.get(i) - params.p0 - 3.0 * (p.get(i) - params.p0)).abs() < 1e-12);
        }
    }

    #[test]
    fn operator_symmetric_and_positive() {
        let (mask, params) = setup(17, 0.5);
        let state = SimState::initial(&mask, &params).unwrap();
        let fixed = fixed_dofs(&mask, &params);
        let mut rng = XorShift64Star::new(7);
        let g = &mask.grid;
        let zero = apply_operator(&VectorField::zeros(g), &state, &mask, &params).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        for _ in 0..10 {
            let mut u = rng.vector_field::<f64>(g, -1.0, 1.0);
            let mut w = rng.vector_field::<f64>(g, -1.0, 1.0);
            zero_fixed(&fixed, u.values_mut());
            zero_fixed(&fixed, w.values_mut());
            let au = apply_operator(&u, &state, &mask, &params).unwrap();
            let aw = apply_operator(&w, &state, &mask, &params).unwrap();
            let a = dot(au.values(), w.values());
            let b = dot(u.values(), aw.values());
            assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
            assert!(dot(au.values(), u.values()) > 0.0);
        }
    }

    #[test]
    fn rhs_examples() {
        let (mask, mut params) = setup(17, 1.0);
        params.p_drive = DrivingPressure::Gradient([0.0; 3]);
        let state = SimState::initial(&mask, &params).unwrap();
        let rhs = assemble_rhs(&state, &mask, &params).unwrap();
        let bc = BoundaryClassification::new(&mask.grid);
        let nn = mask.grid.node_count();
        for (k, &r) in rhs.values().iter().enumerate() {
            let on_surface = k < nn && matches!(bc.tag(k), Some(BoundaryTag::S1 | BoundaryTag::S2));
            assert_eq!(r != 0.0, on_surface, "dof {k}");
        }
        params.p0 = 0.0;
        let rhs = assemble_rhs(&state, &mask, &params).unwrap();
        assert!(rhs.values().iter().all(|&v| v == 0.0));
        let next = step(&state, &mask, &params).unwrap();
        assert!(next.w.values().iter().all(|&v| v == 0.0));

        params.p_drive = DrivingPressure::Gradient([0.4, -0.2, 0.0]);
        let r1 = assemble_rhs(&state, &mask, &params).unwrap();
        params.p_drive = DrivingPressure::Gradient([0.8, -0.4, 0.0]);
        let r2 = assemble_rhs(&state, &mask, &params).unwrap();
        for (a, b) in r1.values().iter().zip(r2.values()) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn energy_balance_and_monotone_dissipation() {
        let (mask, mut params) = setup(33, 0.5);
        params.tau = 2e-3;
        params.t_final = 10.0 * params.tau;
        let state = SimState::initial(&mask, &params).unwrap();
        let zero = energy_report(&state, &mask, &params);
        assert_eq!((zero.elastic, zero.compressive, zero.dissipated_cumulative), (0.0, 0.0, 0.0));
        let mut prev = 0.0;
        run(state, &mask, &params, |s| {
            assert!(s.energy.last_residual <= 1e-6, "{:?}", s.energy);
            assert!(s.energy.dissipated >= prev);
            prev = s.energy.dissipated;
        })
        .unwrap();
        assert!(prev > 0.0);
    }

    #[test]
    fn energy_scales_quadratically() {
        let (mask, params) = setup(17, 0.5);
        let mut state = SimState::initial(&mask, &params).unwrap();
        let mut rng = XorShift64Star::new(4);
        state.w = rng.vector_field(&mask.grid, -1.0, 1.0);
        let e1 = energy_report(&state, &mask, &params);
        state.w = state.w.scaled(3.0);
        let e3 = energy_report(&state, &mask, &params);
        assert!((e3.elastic - 9.0 * e1.elastic).abs() <= 1e-12 * e3.elastic);
        assert!((e3.compressive - 9.0 * e1.compressive).abs() <= 1e-12 * e3.compressive);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let (mask, mut params) = setup(17, 1.0);
        params.tau = 10.0;
        params.lambda = 1e-3;
        params.p_drive = DrivingPressure::linear_drop(50.0);
        let state = SimState::initial(&mask, &params).unwrap();
        assert!(matches!(step(&state, &mask, &params), Err(Error::Cfl { .. })));
    }

    #[test]
    fn boundary_values_stay_zero() {
        let (mask, params) = setup(17, 0.5);
        let state = SimState::initial(&mask, &params).unwrap();
        let next = step(&state, &mask, &params).unwrap();
        let fixed = fixed_dofs(&mask, &params);
        for (k, &f) in fixed.iter().enumerate() {
            if f {
                assert_eq!(next.w.values()[k], 0.0);
            }
        }
        assert!(next.w.values().iter().any(|&v| v != 0.0));
    }
}
