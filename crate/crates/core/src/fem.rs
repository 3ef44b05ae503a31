//! Matrix-free multilinear (Q1) element kernels on the uniform grid.
//!
//! The weak forms used by the solvers are integrated element by element:
//! the symmetric-gradient form `D(u):D(v)` and the Laplacian with the
//! two-point Gauss rule per axis, the volumetric form `div u div v` with the
//! one-point (element centre) rule. All elements are congruent, so the local
//! matrices are computed once and scaled by a per-element coefficient.

use crate::grid_core::Grid;
use crate::scalar::Real;
use crate::solver::LinearOperator;

/// Local Q1 matrices for a grid.
#[derive(Clone, Debug)]
pub struct ElementKernels<T> {
    dim: usize,
    corners: usize,
    volume: T,
    gauss_weight: T,
    /// `gauss_grads[g][a][k] = dN_a/dx_k` at Gauss point `g`.
    gauss_grads: Vec<Vec<[T; 3]>>,
    center_grads: Vec<[T; 3]>,
    /// Local dof `l = i * corners + a` (component-major).
    k_dd: Vec<T>,
    k_div: Vec<T>,
    k_lap: Vec<T>,
}

fn shape_grad(dim: usize, h: f64, a: usize, xi: [f64; 3]) -> [f64; 3] {
    let mut g = [0.0; 3];
    for (k, gk) in g.iter_mut().enumerate().take(dim) {
        let mut v = if (a >> k) & 1 == 1 { 1.0 } else { -1.0 } / h;
        for (m, &x) in xi.iter().enumerate().take(dim) {
            if m != k {
                v *= if (a >> m) & 1 == 1 { x } else { 1.0 - x };
            }
        }
        *gk = v;
    }
    g
}

impl<T: Real> ElementKernels<T> {
    pub fn new(grid: &Grid) -> Self {
        let dim = grid.dim();
        let h = grid.spacing();
        let corners = 1usize << dim;
        let npts = 1usize << dim;
        let off = 0.5 / 3f64.sqrt();
        let gauss_weight = h.powi(dim as i32) / npts as f64;
        let gauss_grads: Vec<Vec<[f64; 3]>> = (0..npts)
            .map(|gp| {
                let mut xi = [0.0; 3];
                for (k, x) in xi.iter_mut().enumerate().take(dim) {
                    *x = if (gp >> k) & 1 == 1 { 0.5 + off } else { 0.5 - off };
                }
                (0..corners).map(|a| shape_grad(dim, h, a, xi)).collect()
            })
            .collect();
        let center_grads: Vec<[f64; 3]> = (0..corners).map(|a| shape_grad(dim, h, a, [0.5; 3])).collect();
        let volume = h.powi(dim as i32);

        let nl = dim * corners;
        let mut k_dd = vec![0.0; nl * nl];
        let mut k_div = vec![0.0; nl * nl];
        let mut k_lap = vec![0.0; corners * corners];
        for grads in &gauss_grads {
            for a in 0..corners {
                for b in 0..corners {
                    let ga = grads[a];
                    let gb = grads[b];
                    let dotab: f64 = (0..dim).map(|k| ga[k] * gb[k]).sum();
                    k_lap[a * corners + b] += gauss_weight * dotab;
                    for i in 0..dim {
                        for j in 0..dim {
                            let mut v = ga[j] * gb[i];
                            if i == j {
                                v += dotab;
                            }
                            k_dd[(i * corners + a) * nl + j * corners + b] += 0.5 * gauss_weight * v;
                        }
                    }
                }
            }
        }
        for i in 0..dim {
            for a in 0..corners {
                for j in 0..dim {
                    for b in 0..corners {
                        k_div[(i * corners + a) * nl + j * corners + b] = volume * center_grads[a][i] * center_grads[b][j];
                    }
                }
            }
        }
        let conv3 = |g: &[f64; 3]| [T::lit(g[0]), T::lit(g[1]), T::lit(g[2])];
        ElementKernels {
            dim,
            corners,
            volume: T::lit(volume),
            gauss_weight: T::lit(gauss_weight),
            gauss_grads: gauss_grads.iter().map(|gs| gs.iter().map(conv3).collect()).collect(),
            center_grads: center_grads.iter().map(conv3).collect(),
            k_dd: k_dd.into_iter().map(T::lit).collect(),
            k_div: k_div.into_iter().map(T::lit).collect(),
            k_lap: k_lap.into_iter().map(T::lit).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn corners(&self) -> usize {
        self.corners
    }

    pub fn volume(&self) -> T {
        self.volume
    }

    fn local_dofs(&self) -> usize {
        self.dim * self.corners
    }

    #[inline]
    fn gather(&self, nodes: &[usize; 8], nn: usize, u: &[T], out: &mut [T; 24]) {
        for i in 0..self.dim {
            for a in 0..self.corners {
                out[i * self.corners + a] = u[i * nn + nodes[a]];
            }
        }
    }

    /// `y = sum_e (c_dd[e] K_dd + c_div[e] K_div) u_e` (overwrites `y`).
    pub fn apply_vector(&self, grid: &Grid, c_dd: &[T], c_div: &[T], u: &[T], y: &mut [T]) {
        let nn = grid.node_count();
        let nl = self.local_dofs();
        y.iter_mut().for_each(|v| *v = T::zero());
        let mut ue = [T::zero(); 24];
        let mut ye = [T::zero(); 24];
        for e in 0..grid.element_count() {
            let cd = c_dd[e];
            let cv = c_div[e];
            if cd == T::zero() && cv == T::zero() {
                continue;
            }
            let nodes = grid.element_nodes(e);
            self.gather(&nodes, nn, u, &mut ue);
            for l in 0..nl {
                let row_dd = &self.k_dd[l * nl..(l + 1) * nl];
                let mut acc = T::zero();
                for m in 0..nl {
                    acc = acc + row_dd[m] * ue[m];
                }
                ye[l] = cd * acc;
            }
            if cv != T::zero() {
                let div = self.center_div(&ue);
                let s = cv * self.volume * div;
                for i in 0..self.dim {
                    for a in 0..self.corners {
                        ye[i * self.corners + a] = ye[i * self.corners + a] + s * self.center_grads[a][i];
                    }
                }
            }
            for i in 0..self.dim {
                for a in 0..self.corners {
                    let g = i * nn + nodes[a];
                    y[g] = y[g] + ye[i * self.corners + a];
                }
            }
        }
    }

    /// Diagonal of the operator assembled by [`Self::apply_vector`].
    pub fn vector_diagonal(&self, grid: &Grid, c_dd: &[T], c_div: &[T]) -> Vec<T> {
        let nn = grid.node_count();
        let nl = self.local_dofs();
        let mut d = vec![T::zero(); self.dim * nn];
        for e in 0..grid.element_count() {
            let nodes = grid.element_nodes(e);
            for i in 0..self.dim {
                for a in 0..self.corners {
                    let l = i * self.corners + a;
                    let g = i * nn + nodes[a];
                    d[g] = d[g] + c_dd[e] * self.k_dd[l * nl + l] + c_div[e] * self.k_div[l * nl + l];
                }
            }
        }
        d
    }

    #[inline]
    fn center_div(&self, ue: &[T; 24]) -> T {
        let mut div = T::zero();
        for i in 0..self.dim {
            for a in 0..self.corners {
                div = div + self.center_grads[a][i] * ue[i * self.corners + a];
            }
        }
        div
    }

    /// Divergence of `u` at each element centre.
    pub fn element_divergence(&self, grid: &Grid, u: &[T]) -> Vec<T> {
        let nn = grid.node_count();
        let mut ue = [T::zero(); 24];
        (0..grid.element_count())
            .map(|e| {
                self.gather(&grid.element_nodes(e), nn, u, &mut ue);
                self.center_div(&ue)
            })
            .collect()
    }

    /// `y += sum_e q[e] |e| grad N` : the load of an element-wise pressure `q` tested with `div phi`.
    pub fn add_div_transpose(&self, grid: &Grid, q: &[T], y: &mut [T]) {
        let nn = grid.node_count();
        for e in 0..grid.element_count() {
            if q[e] == T::zero() {
                continue;
            }
            let nodes = grid.element_nodes(e);
            let s = q[e] * self.volume;
            for i in 0..self.dim {
                for a in 0..self.corners {
                    let g = i * nn + nodes[a];
                    y[g] = y[g] + s * self.center_grads[a][i];
                }
            }
        }
    }

    /// `sum_e c[e] u_e^T K_dd v_e`, the integral of `c D(u):D(v)`.
    pub fn form_dd(&self, grid: &Grid, c: &[T], u: &[T], v: &[T]) -> T {
        let nn = grid.node_count();
        let nl = self.local_dofs();
        let mut ue = [T::zero(); 24];
        let mut ve = [T::zero(); 24];
        let mut total = T::zero();
        for e in 0..grid.element_count() {
            if c[e] == T::zero() {
                continue;
            }
            let nodes = grid.element_nodes(e);
            self.gather(&nodes, nn, u, &mut ue);
            self.gather(&nodes, nn, v, &mut ve);
            let mut acc = T::zero();
            for l in 0..nl {
                let row = &self.k_dd[l * nl..(l + 1) * nl];
                let mut r = T::zero();
                for m in 0..nl {
                    r = r + row[m] * ve[m];
                }
                acc = acc + ue[l] * r;
            }
            total = total + c[e] * acc;
        }
        total
    }

    /// `sum_e c[e] |e| div_e(u) div_e(v)` with the one-point rule.
    pub fn form_div(&self, grid: &Grid, c: &[T], u: &[T], v: &[T]) -> T {
        let du = self.element_divergence(grid, u);
        let dv = self.element_divergence(grid, v);
        du.iter()
            .zip(&dv)
            .zip(c)
            .fold(T::zero(), |acc, ((&a, &b), &ce)| acc + ce * self.volume * a * b)
    }

    /// Symmetric gradient of `u` at the Gauss points of element `e`, as full `3x3` arrays.
    pub fn gauss_strains(&self, grid: &Grid, e: usize, u: &[T]) -> Vec<[[T; 3]; 3]> {
        let nn = grid.node_count();
        let mut ue = [T::zero(); 24];
        self.gather(&grid.element_nodes(e), nn, u, &mut ue);
        self.gauss_grads
            .iter()
            .map(|grads| {
                let mut jac = [[T::zero(); 3]; 3];
                for i in 0..self.dim {
                    for a in 0..self.corners {
                        for k in 0..self.dim {
                            jac[i][k] = jac[i][k] + ue[i * self.corners + a] * grads[a][k];
                        }
                    }
                }
                let mut d = [[T::zero(); 3]; 3];
                for i in 0..self.dim {
                    for k in 0..self.dim {
                        d[i][k] = T::half() * (jac[i][k] + jac[k][i]);
                    }
                }
                d
            })
            .collect()
    }

    pub fn gauss_weight(&self) -> T {
        self.gauss_weight
    }

    /// `y += -sum_e c[e] int E : D(phi)` for a constant strain `E` (the macroscopic-strain load).
    pub fn add_strain_load(&self, grid: &Grid, c: &[T], strain: &[[T; 3]; 3], y: &mut [T]) {
        let nn = grid.node_count();
        // int_e E : D(N_a e_j) = sum_g w_g sum_l E_jl dN_a/dx_l, identical for every element
        let mut local = vec![T::zero(); self.local_dofs()];
        for grads in &self.gauss_grads {
            for j in 0..self.dim {
                for a in 0..self.corners {
                    let mut s = T::zero();
                    for l in 0..self.dim {
                        s = s + strain[j][l] * grads[a][l];
                    }
                    local[j * self.corners + a] = local[j * self.corners + a] + self.gauss_weight * s;
                }
            }
        }
        for e in 0..grid.element_count() {
            if c[e] == T::zero() {
                continue;
            }
            let nodes = grid.element_nodes(e);
            for j in 0..self.dim {
                for a in 0..self.corners {
                    let g = j * nn + nodes[a];
                    y[g] = y[g] - c[e] * local[j * self.corners + a];
                }
            }
        }
    }

    /// Local scalar stiffness `int (A grad N_a) . grad N_b` for a constant symmetric tensor `A`.
    pub fn scalar_stiffness(&self, tensor: &[[T; 3]; 3]) -> Vec<T> {
        let nc = self.corners;
        let mut k = vec![T::zero(); nc * nc];
        for grads in &self.gauss_grads {
            for a in 0..nc {
                for b in 0..nc {
                    let mut s = T::zero();
                    for i in 0..self.dim {
                        for j in 0..self.dim {
                            s = s + grads[a][i] * tensor[i][j] * grads[b][j];
                        }
                    }
                    k[a * nc + b] = k[a * nc + b] + self.gauss_weight * s;
                }
            }
        }
        k
    }

    /// Local Laplacian matrix `int grad N_a . grad N_b`.
    pub fn laplacian_local(&self) -> &[T] {
        &self.k_lap
    }

    /// `y = sum_e c[e] K_local u_e` for a scalar local matrix.
    pub fn apply_scalar(&self, grid: &Grid, local: &[T], c: &[T], u: &[T], y: &mut [T]) {
        let nc = self.corners;
        y.iter_mut().for_each(|v| *v = T::zero());
        for e in 0..grid.element_count() {
            if c[e] == T::zero() {
                continue;
            }
            let nodes = grid.element_nodes(e);
            for a in 0..nc {
                let mut acc = T::zero();
                for b in 0..nc {
                    acc = acc + local[a * nc + b] * u[nodes[b]];
                }
                y[nodes[a]] = y[nodes[a]] + c[e] * acc;
            }
        }
    }

    pub fn scalar_diagonal(&self, grid: &Grid, local: &[T], c: &[T]) -> Vec<T> {
        let nc = self.corners;
        let mut d = vec![T::zero(); grid.node_count()];
        for e in 0..grid.element_count() {
            let nodes = grid.element_nodes(e);
            for a in 0..nc {
                d[nodes[a]] = d[nodes[a]] + c[e] * local[a * nc + a];
            }
        }
        d
    }

    /// Element-wise gradient of a scalar at the element centre.
    pub fn element_gradient(&self, grid: &Grid, e: usize, u: &[T]) -> [T; 3] {
        let nodes = grid.element_nodes(e);
        let mut g = [T::zero(); 3];
        for a in 0..self.corners {
            for k in 0..self.dim {
                g[k] = g[k] + self.center_grads[a][k] * u[nodes[a]];
            }
        }
        g
    }
}

/// `u -> sum_e (c_dd[e] K_dd + c_div[e] K_div) u_e` as a [`LinearOperator`].
pub struct VectorOperator<'a, T> {
    pub grid: &'a Grid,
    pub kernels: &'a ElementKernels<T>,
    pub c_dd: Vec<T>,
    pub c_div: Vec<T>,
    /// Added lumped mass `shift[i] * u[i]`, if any.
    pub shift: Option<Vec<T>>,
}

impl<'a, T: Real> LinearOperator<T> for VectorOperator<'a, T> {
    fn len(&self) -> usize {
        self.grid.dim() * self.grid.node_count()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        self.kernels.apply_vector(self.grid, &self.c_dd, &self.c_div, x, y);
        if let Some(s) = &self.shift {
            for ((yi, &si), &xi) in y.iter_mut().zip(s).zip(x) {
                *yi = *yi + si * xi;
            }
        }
    }
    fn diagonal(&self) -> Option<Vec<T>> {
        let mut d = self.kernels.vector_diagonal(self.grid, &self.c_dd, &self.c_div);
        if let Some(s) = &self.shift {
            d.iter_mut().zip(s).for_each(|(di, &si)| *di = *di + si);
        }
        Some(d)
    }
}

/// `u -> sum_e c[e] K_local u_e` as a [`LinearOperator`].
pub struct ScalarOperator<'a, T> {
    pub grid: &'a Grid,
    pub kernels: &'a ElementKernels<T>,
    pub local: Vec<T>,
    pub c: Vec<T>,
}

impl<'a, T: Real> LinearOperator<T> for ScalarOperator<'a, T> {
    fn len(&self) -> usize {
        self.grid.node_count()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        self.kernels.apply_scalar(self.grid, &self.local, &self.c, x, y);
    }
    fn diagonal(&self) -> Option<Vec<T>> {
        Some(self.kernels.scalar_diagonal(self.grid, &self.local, &self.c))
    }
}

/// Lumped (trapezoid) mass, repeated `components` times.
pub fn lumped_mass<T: Real>(grid: &Grid, components: usize) -> Vec<T> {
    let w: Vec<T> = grid.weights().into_iter().map(T::lit).collect();
    (0..components).flat_map(|_| w.iter().copied()).collect()
}

/// Mean of `nodal` over the corners where `indicator > 1/2`; zero for elements with no such corner.
pub fn masked_average<T: Real>(grid: &Grid, nodal: &[T], indicator: &[T]) -> Vec<T> {
    let nc = grid.corners_per_element();
    (0..grid.element_count())
        .map(|e| {
            let nodes = grid.element_nodes(e);
            let (sum, count) = nodes[..nc]
                .iter()
                .filter(|&&n| indicator[n] > T::half())
                .fold((T::zero(), 0usize), |(s, c), &n| (s + nodal[n], c + 1));
            if count == 0 {
                T::zero()
            } else {
                sum / T::from_usize_(count)
            }
        })
        .collect()
}

/// Mean of a nodal quantity over the corners of each element.
pub fn element_average<T: Real>(grid: &Grid, nodal: &[T]) -> Vec<T> {
    let nc = grid.corners_per_element();
    let inv = T::one() / T::from_usize_(nc);
    (0..grid.element_count())
        .map(|e| {
            let nodes = grid.element_nodes(e);
            nodes[..nc].iter().fold(T::zero(), |a, &n| a + nodal[n]) * inv
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::XorShift64Star::new(seed);
        (0..n).map(|_| rng.next_f64() - 0.5).collect()
    }

    #[test]
    fn dd_form_matches_exact_strain_energy_for_linear_fields() {
        // u = (a x + b y, c x + d y): |D|^2 = a^2 + d^2 + (b + c)^2 / 2, integrated over the unit square
        let g = Grid::unit_cube(2, 6).unwrap();
        let (a, b, c, d) = (0.3, -1.2, 0.7, 2.0);
        let u = crate::grid_core::VectorField::<f64>::from_fn(&g, |x| [a * x[0] + b * x[1], c * x[0] + d * x[1], 0.0]);
        let k = ElementKernels::<f64>::new(&g);
        let ones = vec![1.0; g.element_count()];
        let e = k.form_dd(&g, &ones, u.values(), u.values());
        let exact = a * a + d * d + 0.5 * (b + c) * (b + c);
        assert!((e - exact).abs() < 1e-12, "{e} vs {exact}");
        let div = k.form_div(&g, &ones, u.values(), u.values());
        assert!((div - (a + d) * (a + d)).abs() < 1e-12);
    }

    #[test]
    fn apply_is_consistent_with_forms_and_symmetric() {
        for g in [
            Grid::unit_cube(2, 5).unwrap(),
            Grid::unit_cube(3, 4).unwrap(),
            Grid::periodic_cell(2, 4).unwrap(),
        ] {
            let k = ElementKernels::<f64>::new(&g);
            let n = g.dim() * g.node_count();
            let cd: Vec<f64> = random_vec(g.element_count(), 3).iter().map(|x| 1.0 + x).collect();
            let cv: Vec<f64> = random_vec(g.element_count(), 4).iter().map(|x| 2.0 + x).collect();
            let u = random_vec(n, 1);
            let v = random_vec(n, 2);
            let mut au = vec![0.0; n];
            let mut av = vec![0.0; n];
            k.apply_vector(&g, &cd, &cv, &u, &mut au);
            k.apply_vector(&g, &cd, &cv, &v, &mut av);
            let vau: f64 = v.iter().zip(&au).map(|(a, b)| a * b).sum();
            let uav: f64 = u.iter().zip(&av).map(|(a, b)| a * b).sum();
            let form = k.form_dd(&g, &cd, &u, &v) + k.form_div(&g, &cv, &u, &v);
            assert!((vau - uav).abs() <= 1e-12 * vau.abs().max(1.0));
            assert!((vau - form).abs() <= 1e-12 * vau.abs().max(1.0));
            let diag = k.vector_diagonal(&g, &cd, &cv);
            let mut e0 = vec![0.0; n];
            e0[5] = 1.0;
            let mut col = vec![0.0; n];
            k.apply_vector(&g, &cd, &cv, &e0, &mut col);
            assert!((col[5] - diag[5]).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_annihilates_constants() {
        let g = Grid::unit_cube(3, 4).unwrap();
        let k = ElementKernels::<f64>::new(&g);
        let ones_e = vec![1.0; g.element_count()];
        let u = vec![3.0; g.node_count()];
        let mut y = vec![0.0; g.node_count()];
        k.apply_scalar(&g, k.laplacian_local(), &ones_e, &u, &mut y);
        assert!(y.iter().all(|v| v.abs() < 1e-12));
    }
}
