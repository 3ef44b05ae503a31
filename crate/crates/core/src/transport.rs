//! Upwind advection of the phase indicator and the viscosity on pore nodes.
//!
//! The update is the non-conservative first-order upwind form of
//! `dq/dt + v . grad q = 0` on the dual cells of the pore nodes:
//!
//! ```text
//! q_i <- q_i + (tau / V_i) sum_{inflow faces f} A_f |u_f| (q_upwind - q_i)
//! ```
//!
//! with `u_f` the average of the normal velocity at the two nodes of an
//! interior face. Faces to solid nodes and `S0` carry nothing; faces on `S1`
//! and `S2` take the Dirichlet value on inflow and are zero-gradient on outflow.
//! Each update is a convex combination, so the scheme obeys the discrete max
//! principle; a step is split into substeps when the summed inflow Courant
//! number of some node would exceed one.

use crate::error::{Error, Result};
use crate::geometry::{BoundaryClassification, BoundaryTag, PhaseMask};
use crate::grid_core::{Grid, NodalField, ScalarField, Side, VectorField};
use crate::microsim::{MaterialParams, SimState};
use crate::mollifier::MollifierKernel;
use crate::scalar::Real;

/// Dirichlet values entering through `S1` and `S2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inflow<T> {
    pub s1: T,
    pub s2: T,
}

/// Mass bookkeeping of an advection call: `delta_mass = boundary_flux + divergence_source`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MassBudget {
    pub delta_mass: f64,
    /// Net amount carried in through `S1 u S2`.
    pub boundary_flux: f64,
    /// `sum_i q_i (net discrete outflow of cell i)`; zero for discretely divergence-free `v`.
    pub divergence_source: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Advected<T> {
    pub field: ScalarField<T>,
    pub budget: MassBudget,
    pub substeps: usize,
}

/// Rejects `tau` when `max|v| tau` exceeds the grid spacing.
pub fn check_cfl<T: Real>(v: &VectorField<T>, grid: &Grid, tau: f64) -> Result<()> {
    let vmax = (0..grid.node_count()).map(|i| v.norm_sq_at(i).to_f64_().sqrt()).fold(0.0, f64::max);
    let courant_length = vmax * tau;
    if courant_length > grid.spacing() * (1.0 + 1e-12) {
        return Err(Error::Cfl {
            courant_length,
            required_tau: grid.spacing() / vmax,
        });
    }
    Ok(())
}

/// One face flux `tau A |u|` into node `to` carrying the value of `from`.
#[derive(Clone, Copy, Debug)]
struct Link {
    to: usize,
    /// `None` for a boundary inflow face.
    from: Option<usize>,
    bc: usize,
    rate: f64,
}

struct FaceSet {
    links: Vec<Link>,
    /// Net outflow rate (per unit time) of each node.
    net_out: Vec<f64>,
    volume: Vec<f64>,
}

fn faces<T: Real>(v: &VectorField<T>, mask: &PhaseMask<T>) -> FaceSet {
    let g = &mask.grid;
    let nn = g.node_count();
    let bc = BoundaryClassification::new(g);
    let h = g.spacing();
    let volume = g.weights();
    let mut links = Vec::new();
    let mut net_out = vec![0.0; nn];
    let area = |i: usize, axis: usize| -> f64 { (0..g.dim()).filter(|&b| b != axis).map(|b| g.axis_weight(i, b) * h).product() };
    for i in 0..nn {
        if !mask.is_pore(i) || bc.tag(i) == Some(BoundaryTag::S0) {
            continue;
        }
        for a in 0..g.dim() {
            // interior face between i and its upper neighbour along a
            if let Some(j) = g.shift(i, a, 1) {
                if mask.is_pore(j) && bc.tag(j) != Some(BoundaryTag::S0) && j != i {
                    let u = 0.5 * (v.component(a)[i] + v.component(a)[j]).to_f64_();
                    let r = area(i, a) * u.abs();
                    if u > 0.0 {
                        links.push(Link {
                            to: j,
                            from: Some(i),
                            bc: 0,
                            rate: r,
                        });
                        net_out[i] += r;
                        net_out[j] -= r;
                    } else if u < 0.0 {
                        links.push(Link {
                            to: i,
                            from: Some(j),
                            bc: 0,
                            rate: r,
                        });
                        net_out[j] += r;
                        net_out[i] -= r;
                    }
                }
            }
        }
        let u0 = v.component(0)[i].to_f64_();
        let (inward, which) = match g.boundary_side(i, 0) {
            Some(Side::High) => (-u0, 1),
            Some(Side::Low) => (u0, 2),
            None => continue,
        };
        let r = area(i, 0) * inward.abs();
        if inward > 0.0 {
            links.push(Link {
                to: i,
                from: None,
                bc: which,
                rate: r,
            });
            net_out[i] -= r;
        } else if inward < 0.0 {
            net_out[i] += r;
        }
    }
    FaceSet { links, net_out, volume }
}

fn pore_mass<T: Real>(q: &[T], mask: &PhaseMask<T>, volume: &[f64]) -> f64 {
    (0..q.len()).filter(|&i| mask.is_pore(i)).map(|i| volume[i] * q[i].to_f64_()).sum()
}

/// Advances `q` by `tau` with velocity `v`; solid nodes are untouched.
pub fn advect_upwind<T: Real>(
    q: &ScalarField<T>,
    v: &VectorField<T>,
    mask: &PhaseMask<T>,
    tau: f64,
    inflow: Inflow<T>,
) -> Result<Advected<T>> {
    let g = &mask.grid;
    if q.grid() != g || v.grid() != g {
        return Err(Error::GridMismatch);
    }
    check_cfl(v, g, tau)?;
    let fs = faces(v, mask);
    let nn = g.node_count();
    let mut courant = vec![0.0; nn];
    for l in &fs.links {
        courant[l.to] += tau * l.rate / fs.volume[l.to];
    }
    let cmax = courant.iter().cloned().fold(0.0, f64::max);
    let substeps = (cmax.ceil() as usize).max(1);
    let dt = tau / substeps as f64;

    let mut cur = q.values().to_vec();
    let mut budget = MassBudget::default();
    let m0 = pore_mass(&cur, mask, &fs.volume);
    let bval = |b: usize| if b == 1 { inflow.s1 } else { inflow.s2 };
    let mut incr = vec![T::zero(); nn];
    for _ in 0..substeps {
        incr.iter_mut().for_each(|x| *x = T::zero());
        let mut boundary = 0.0;
        for l in &fs.links {
            let up = match l.from {
                Some(j) => cur[j],
                None => bval(l.bc),
            };
            let c = T::lit(dt * l.rate / fs.volume[l.to]);
            incr[l.to] = incr[l.to] + c * (up - cur[l.to]);
            if l.from.is_none() {
                boundary += dt * l.rate * up.to_f64_();
            }
        }
        // outflow through S1/S2 carries the node value
        for i in 0..nn {
            if !mask.is_pore(i) || g.boundary_side(i, 0).is_none() || (1..g.dim()).any(|b| g.boundary_side(i, b).is_some()) {
                continue;
            }
            let u0 = v.component(0)[i].to_f64_();
            let outward = if g.boundary_side(i, 0) == Some(Side::High) { u0 } else { -u0 };
            if outward > 0.0 {
                let area: f64 = (1..g.dim()).map(|b| g.axis_weight(i, b) * g.spacing()).product();
                boundary -= dt * area * outward * cur[i].to_f64_();
            }
        }
        let source: f64 = (0..nn).map(|i| dt * fs.net_out[i] * cur[i].to_f64_()).sum();
        for i in 0..nn {
            cur[i] = cur[i] + incr[i];
        }
        budget.boundary_flux += boundary;
        budget.divergence_source += source;
    }
    budget.delta_mass = pore_mass(&cur, mask, &fs.volume) - m0;
    Ok(Advected {
        field: ScalarField::from_values(g.clone(), cur)?,
        budget,
        substeps,
    })
}

/// Phase indicator after one transport step; fluid L1 enters through `S1`, L2 through `S2`.
pub fn advect_phase<T: Real>(state: &SimState<T>, mask: &PhaseMask<T>, tau: f64) -> Result<Advected<T>> {
    advect_upwind(
        &state.chi,
        &state.v,
        mask,
        tau,
        Inflow {
            s1: T::one(),
            s2: T::zero(),
        },
    )
}

/// `clamp(M_h mu)` on pore nodes; solid nodes keep `mu`.
pub fn mollify_viscosity<T: Real>(mu: &ScalarField<T>, mask: &PhaseMask<T>, params: &MaterialParams) -> Result<ScalarField<T>> {
    let kernel = MollifierKernel::new(&mask.grid, params.h_mollify)?;
    let smooth = kernel.apply_scalar(mu)?;
    let (lo, hi) = params.mu_range();
    let (lo, hi) = (T::lit(lo), T::lit(hi));
    let vals = (0..mu.values().len())
        .map(|i| {
            if mask.is_pore(i) {
                smooth.get(i).max(lo).min(hi)
            } else {
                mu.get(i)
            }
        })
        .collect();
    ScalarField::from_values(mask.grid.clone(), vals)
}

/// Advects the sharp viscosity and returns `(mu, mu_h)`.
pub fn update_viscosity<T: Real>(
    state: &SimState<T>,
    mask: &PhaseMask<T>,
    params: &MaterialParams,
) -> Result<(ScalarField<T>, ScalarField<T>)> {
    let inflow = Inflow {
        s1: T::lit(params.mu1),
        s2: T::lit(params.mu2),
    };
    let mu = advect_upwind(&state.mu, &state.v, mask, params.tau, inflow)?.field;
    let mu_h = mollify_viscosity(&mu, mask, params)?;
    Ok((mu, mu_h))
}

/// Position and width of the fluid interface along `x1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfaceSummary {
    /// Mean `x1` of the `chi = 1/2` crossings.
    pub mean_x1: f64,
    /// Distance between the mean `chi = 0.05` and `chi = 0.95` crossings.
    pub width: f64,
}

fn mean_crossing<T: Real>(chi: &ScalarField<T>, mask: &PhaseMask<T>, level: f64) -> f64 {
    let g = &mask.grid;
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..g.node_count() {
        let Some(j) = g.shift(i, 0, 1) else { continue };
        if !mask.is_pore(i) || !mask.is_pore(j) || g.coords(j)[0] < g.coords(i)[0] {
            continue;
        }
        let (a, b) = (chi.get(i).to_f64_() - level, chi.get(j).to_f64_() - level);
        if a == 0.0 || a * b < 0.0 {
            let s = if a == b { 0.0 } else { a / (a - b) };
            sum += g.position(i)[0] + s * g.spacing();
            count += 1;
        }
    }
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

pub fn interface_summary<T: Real>(chi: &ScalarField<T>, mask: &PhaseMask<T>) -> InterfaceSummary {
    InterfaceSummary {
        mean_x1: mean_crossing(chi, mask, 0.5),
        width: (mean_crossing(chi, mask, 0.05) - mean_crossing(chi, mask, 0.95)).abs(),
    }
}
