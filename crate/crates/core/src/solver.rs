//! Krylov and eigenvalue machinery shared by the microscopic solver, the
//! analysis constants and the cell problems.

use crate::error::{Error, Result};
use crate::rng::XorShift64Star;
use crate::scalar::{axpy, dot, norm2, Real};

/// A symmetric linear map on `R^n`.
pub trait LinearOperator<T> {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn apply(&self, x: &[T], y: &mut [T]);
    /// Diagonal used for Jacobi preconditioning, when cheaply available.
    fn diagonal(&self) -> Option<Vec<T>> {
        None
    }
}

/// Operator defined by a closure.
pub struct FnOperator<F> {
    n: usize,
    f: F,
}

impl<F> FnOperator<F> {
    pub fn new(n: usize, f: F) -> Self {
        FnOperator { n, f }
    }
}

impl<T, F: Fn(&[T], &mut [T])> LinearOperator<T> for FnOperator<F> {
    fn len(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        (self.f)(x, y)
    }
}

/// Identity on `R^n`.
pub struct Identity(pub usize);

impl<T: Real> LinearOperator<T> for Identity {
    fn len(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        y.copy_from_slice(x);
    }
    fn diagonal(&self) -> Option<Vec<T>> {
        Some(vec![T::one(); self.0])
    }
}

/// Restriction of an operator to the dofs not marked `fixed` (Dirichlet rows and
/// columns removed, the fixed block replaced by zero).
pub struct Constrained<'a, A> {
    inner: &'a A,
    fixed: &'a [bool],
}

impl<'a, A> Constrained<'a, A> {
    pub fn new(inner: &'a A, fixed: &'a [bool]) -> Self {
        Constrained { inner, fixed }
    }
}

impl<'a, T: Real, A: LinearOperator<T>> LinearOperator<T> for Constrained<'a, A> {
    fn len(&self) -> usize {
        self.inner.len()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        let mut xc = x.to_vec();
        zero_fixed(self.fixed, &mut xc);
        self.inner.apply(&xc, y);
        zero_fixed(self.fixed, y);
    }
    fn diagonal(&self) -> Option<Vec<T>> {
        self.inner.diagonal().map(|mut d| {
            for (di, &f) in d.iter_mut().zip(self.fixed) {
                if f {
                    *di = T::one();
                }
            }
            d
        })
    }
}

pub fn zero_fixed<T: Real>(fixed: &[bool], x: &mut [T]) {
    for (xi, &f) in x.iter_mut().zip(fixed) {
        if f {
            *xi = T::zero();
        }
    }
}

/// Result of a conjugate-gradient solve.
#[derive(Clone, Debug)]
pub struct CgOutcome<T> {
    pub solution: Vec<T>,
    pub iterations: usize,
    /// Final true relative residual `|A x - b| / |b|`.
    pub residual: T,
    pub converged: bool,
}

impl<T: Real> CgOutcome<T> {
    /// Converts a non-converged outcome into [`Error::NotConverged`].
    pub fn into_result(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                residual: self.residual.to_f64_(),
            })
        }
    }
}

/// Jacobi-preconditioned conjugate gradients.
///
/// Stops once the true residual satisfies `|A x - b| <= tol |b|`. If
/// `max_iter` is exhausted the best iterate is returned with `converged = false`.
pub fn cg_solve<T: Real, A: LinearOperator<T>>(op: &A, rhs: &[T], initial: Option<&[T]>, tol: T, max_iter: usize) -> CgOutcome<T> {
    let n = op.len();
    assert_eq!(rhs.len(), n, "rhs length must match operator");
    let bnorm = norm2(rhs);
    let mut x = initial.map_or_else(|| vec![T::zero(); n], |x0| x0.to_vec());
    if bnorm == T::zero() {
        return CgOutcome {
            solution: vec![T::zero(); n],
            iterations: 0,
            residual: T::zero(),
            converged: true,
        };
    }
    let inv_diag: Option<Vec<T>> = op
        .diagonal()
        .map(|d| d.into_iter().map(|v| if v > T::zero() { T::one() / v } else { T::one() }).collect());
    let precondition = |r: &[T], z: &mut [T]| match &inv_diag {
        Some(inv) => {
            for ((zi, &ri), &di) in z.iter_mut().zip(r).zip(inv) {
                *zi = ri * di;
            }
        }
        None => z.copy_from_slice(r),
    };

    let mut ax = vec![T::zero(); n];
    let mut r = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut ap = vec![T::zero(); n];
    let mut iterations = 0usize;
    let threshold = tol * bnorm;

    let true_residual = |x: &[T], ax: &mut [T], r: &mut [T]| {
        op.apply(x, ax);
        for ((ri, &bi), &ai) in r.iter_mut().zip(rhs).zip(ax.iter()) {
            *ri = bi - ai;
        }
        norm2(r)
    };

    let mut rnorm = true_residual(&x, &mut ax, &mut r);
    let mut best = (rnorm, x.clone());
    // outer loop restarts from the true residual if the recurrence drifted
    while rnorm > threshold && iterations < max_iter {
        precondition(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            op.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= T::zero() || !pap.is_finite() {
                break;
            }
            let alpha = rz / pap;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &ap, &mut r);
            iterations += 1;
            if norm2(&r) <= threshold {
                break;
            }
            precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, &zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        let prev = rnorm;
        rnorm = true_residual(&x, &mut ax, &mut r);
        if rnorm < best.0 {
            best = (rnorm, x.clone());
        }
        if rnorm > threshold && rnorm >= prev {
            // no progress from a restart: give up with the best iterate
            break;
        }
    }
    let (res, sol) = if rnorm <= best.0 { (rnorm, x) } else { best };
    CgOutcome {
        converged: res <= threshold,
        solution: sol,
        iterations,
        residual: res / bnorm,
    }
}

/// Smallest eigenpair of `K x = lambda M x` with diagonal `M`.
#[derive(Clone, Debug)]
pub struct EigenEstimate<T> {
    pub eigenvalue: T,
    pub vector: Vec<T>,
    pub iterations: usize,
    /// `|K x - lambda M x|_{M^-1} / (lambda |x|_M)`.
    pub residual: T,
}

/// Inverse power iteration with inner CG solves on the free dofs.
pub fn inverse_power_iteration<T: Real, A: LinearOperator<T>>(
    op: &A,
    mass: &[T],
    fixed: &[bool],
    tol: T,
    max_outer: usize,
    seed: u64,
) -> Result<EigenEstimate<T>> {
    let n = op.len();
    if fixed.iter().all(|&f| f) {
        return Err(Error::EmptyDomain("no free degrees of freedom".into()));
    }
    let constrained = Constrained::new(op, fixed);
    let mut rng = XorShift64Star::new(seed);
    let mut x: Vec<T> = (0..n).map(|_| T::lit(0.5 + rng.next_f64())).collect();
    zero_fixed(fixed, &mut x);
    let mnorm = |v: &[T]| v.iter().zip(mass).fold(T::zero(), |a, (&vi, &mi)| a + mi * vi * vi).sqrt();
    let s = mnorm(&x);
    x.iter_mut().for_each(|v| *v = *v / s);

    let inner_tol = T::lit(1e-12).max(T::epsilon() * T::lit(100.0));
    let mut kx = vec![T::zero(); n];
    let mut lambda = T::zero();
    let mut residual = T::infinity();
    for it in 1..=max_outer {
        let b: Vec<T> = x.iter().zip(mass).map(|(&xi, &mi)| xi * mi).collect();
        let guess: Vec<T> = if lambda > T::zero() {
            x.iter().map(|&v| v / lambda).collect()
        } else {
            vec![T::zero(); n]
        };
        let out = cg_solve(&constrained, &b, Some(&guess), inner_tol, 20 * n + 100);
        let mut y = out.solution;
        zero_fixed(fixed, &mut y);
        let s = mnorm(&y);
        if s == T::zero() || !s.is_finite() {
            return Err(Error::EigenStagnation {
                iterations: it,
                residual: residual.to_f64_(),
            });
        }
        y.iter_mut().for_each(|v| *v = *v / s);
        x = y;
        constrained.apply(&x, &mut kx);
        lambda = dot(&x, &kx);
        // x has unit M-norm
        let mut acc = T::zero();
        for i in 0..n {
            if fixed[i] {
                continue;
            }
            let ri = kx[i] - lambda * mass[i] * x[i];
            acc = acc + ri * ri / mass[i];
        }
        residual = acc.sqrt() / lambda;
        if residual <= tol {
            return Ok(EigenEstimate {
                eigenvalue: lambda,
                vector: x,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::EigenStagnation {
        iterations: max_outer,
        residual: residual.to_f64_(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1D Dirichlet Laplacian, tridiagonal `[-1, 2, -1]`.
    struct Lap1d(usize);
    impl LinearOperator<f64> for Lap1d {
        fn len(&self) -> usize {
            self.0
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            let n = self.0;
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] - l - r;
            }
        }
        fn diagonal(&self) -> Option<Vec<f64>> {
            Some(vec![2.0; self.0])
        }
    }

    #[test]
    fn identity_solves_in_one_iteration() {
        let b = vec![1.0, -2.0, 3.5];
        let out = cg_solve(&Identity(3), &b, None, 1e-12, 10);
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        assert_eq!(out.solution, b);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let out = cg_solve(&Lap1d(5), &[0.0; 5], None, 1e-10, 10);
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert!(out.solution.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_contract_holds() {
        let op = Lap1d(50);
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let out = cg_solve(&op, &b, None, 1e-10, 1000);
        assert!(out.converged);
        let mut ax = vec![0.0; 50];
        op.apply(&out.solution, &mut ax);
        let r: f64 = ax.iter().zip(&b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(r <= 1e-10 * norm2(&b));
    }

    #[test]
    fn non_convergence_is_flagged() {
        let op = Lap1d(100);
        let b = vec![1.0; 100];
        let out = cg_solve(&op, &b, None, 1e-14, 3);
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
        assert!(out.into_result().is_err());
    }

    #[test]
    fn constrained_dofs_stay_zero() {
        let op = Lap1d(10);
        let mut fixed = vec![false; 10];
        fixed[4] = true;
        let c = Constrained::new(&op, &fixed);
        let mut b = vec![1.0; 10];
        b[4] = 0.0;
        let out = cg_solve(&c, &b, None, 1e-12, 100);
        assert!(out.converged);
        assert_eq!(out.solution[4], 0.0);
    }

    #[test]
    fn inverse_iteration_finds_lowest_mode() {
        // eigenvalues of tridiag(-1,2,-1) of size n: 2 - 2 cos(k pi / (n + 1))
        let n = 40;
        let op = Lap1d(n);
        let mass = vec![1.0; n];
        let fixed = vec![false; n];
        let est = inverse_power_iteration(&op, &mass, &fixed, 1e-10, 500, 7).unwrap();
        let exact = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((est.eigenvalue - exact).abs() < 1e-12 * exact.max(1.0) + 1e-14);
    }
}
