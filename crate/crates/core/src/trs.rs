//! Exact solver for the two-norm trust-region subproblem
//!
//! ```text
//! min  g^T p + 1/2 p^T B p   subject to  ||p|| <= delta
//! ```
//!
//! when `B = gamma I + Psi M Psi^T` is a compact L-BFGS matrix.
//!
//! With `Psi = Q R` (thin QR) and `R M R^T = V diag(lambda_hat) V^T`, the
//! spectrum of `B` is `lambda_hat + gamma` on the range of `P_par = Psi R^{-1} V`
//! and `gamma` on its orthogonal complement. Only `R`, `V` and the projected
//! gradient `g_par = P_par^T g` are needed: the multiplier is found by Newton's
//! method on the secular equation `1/||v(sigma)|| - 1/delta = 0`, whose norm
//! is expressed entirely in terms of `g_par`, `||g_perp||` and the eigenvalues.
//! The step is then recovered through the Sherman-Morrison-Woodbury identity.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::lbfgs_compact::PairBuffer;
use crate::linalg::{jacobi_eigen, thin_qr_r};

/// Relative diagonal threshold on `R` below which `Psi` is rank deficient.
pub const RANK_TOL: f64 = 1e-10;
/// Newton stops once `|phi(sigma)| <= SECULAR_TOL / delta`.
pub const SECULAR_TOL: f64 = 1e-10;
pub const SECULAR_MAX_NEWTON: usize = 50;
const BISECTION_MAX: usize = 500;
const REFINE_STEPS: usize = 3;
const REFINE_TOL: f64 = 1e-10;
const POLISH_STEPS: usize = 5;
const POLISH_TOL: f64 = 1e-10;

/// Eigen-information of `B` together with the split gradient.
#[derive(Debug, Clone)]
pub struct SpectralFactors {
    /// Triangular factor of the thin QR of `Psi` (empty when no pairs).
    pub r: DMatrix<f64>,
    /// Eigenvectors of `R M R^T`.
    pub v: DMatrix<f64>,
    /// Eigenvalues of `R M R^T`, ascending.
    pub lambda_hat: DVector<f64>,
    /// `lambda_hat + gamma`: eigenvalues of `B` on the range of `Psi`.
    pub lambda1: DVector<f64>,
    /// Eigenvalue of `B` on the orthogonal complement.
    pub gamma: f64,
    pub g_par: DVector<f64>,
    pub g_perp_norm: f64,
}

impl SpectralFactors {
    /// Factors with no low-rank part: `B = gamma I`.
    pub fn scaled_identity(gamma: f64, g_norm: f64) -> Self {
        Self::from_parts(DVector::zeros(0), gamma, DVector::zeros(0), g_norm)
    }

    /// Builds factors directly from eigenvalues and projected gradient,
    /// bypassing any factorization. `lambda1` must be sorted ascending.
    pub fn from_parts(lambda1: DVector<f64>, gamma: f64, g_par: DVector<f64>, g_perp_norm: f64) -> Self {
        let k = lambda1.len();
        Self {
            r: DMatrix::zeros(0, 0),
            v: DMatrix::identity(k, k),
            lambda_hat: lambda1.add_scalar(-gamma),
            lambda1,
            gamma,
            g_par,
            g_perp_norm,
        }
    }

    /// `||v(sigma)||^2 = sum g_par_i^2/(lambda_i+sigma)^2 + ||g_perp||^2/(gamma+sigma)^2`.
    pub fn step_norm_sq(&self, sigma: f64) -> f64 {
        self.weighted_sum(sigma, 2)
    }

    fn weighted_sum(&self, sigma: f64, power: i32) -> f64 {
        let par: f64 = self
            .g_par
            .iter()
            .zip(self.lambda1.iter())
            .map(|(&gi, &li)| gi * gi / (li + sigma).powi(power))
            .sum();
        par + self.g_perp_norm * self.g_perp_norm / (self.gamma + sigma).powi(power)
    }

    /// Secular function and its derivative at `sigma`.
    fn secular_with_derivative(&self, sigma: f64, delta: f64) -> (f64, f64) {
        let norm_sq = self.step_norm_sq(sigma);
        let norm = norm_sq.sqrt();
        let value = 1.0 / norm - 1.0 / delta;
        let deriv = self.weighted_sum(sigma, 3) / (norm_sq * norm);
        (value, deriv)
    }
}

/// Secular function `1/||v(sigma)|| - 1/delta`; `+inf` when `v` vanishes.
pub fn phi_secular(sigma: f64, f: &SpectralFactors, delta: f64) -> f64 {
    let norm_sq = f.step_norm_sq(sigma);
    if norm_sq == 0.0 {
        return f64::INFINITY;
    }
    1.0 / norm_sq.sqrt() - 1.0 / delta
}

/// Root of the secular equation.
#[derive(Debug, Clone)]
pub struct SecularRoot {
    pub sigma: f64,
    pub newton_iters: usize,
    /// Newton iterates starting from `sigma = 0`.
    pub path: Vec<f64>,
    pub used_bisection: bool,
}

/// Newton's method from `sigma = 0` on the secular equation, with a
/// bisection fallback. Requires `phi_secular(0) < 0`.
pub fn solve_secular(f: &SpectralFactors, delta: f64) -> Result<SecularRoot> {
    let tol = SECULAR_TOL / delta;
    let mut sigma = 0.0;
    let mut path = vec![sigma];
    let (phi0, _) = f.secular_with_derivative(0.0, delta);
    if !(phi0 < 0.0) {
        return Err(Error::Numerical(format!(
            "secular solve requires phi(0) < 0, got {phi0}"
        )));
    }

    let mut lo = 0.0;
    let mut hi = None;
    for iter in 0..SECULAR_MAX_NEWTON {
        let (phi, dphi) = f.secular_with_derivative(sigma, delta);
        if phi.abs() <= tol && boundary_accurate(f, sigma, delta) {
            return Ok(SecularRoot {
                sigma,
                newton_iters: iter,
                path,
                used_bisection: false,
            });
        }
        if phi > 0.0 {
            // overshoot from rounding: keep the bracket and bisect
            hi = Some(sigma);
            break;
        }
        lo = sigma;
        let next = sigma - phi / dphi;
        if !next.is_finite() || next <= sigma {
            break;
        }
        sigma = next;
        path.push(sigma);
    }

    let sigma = bisect(f, delta, lo, hi)?;
    path.push(sigma);
    Ok(SecularRoot {
        sigma,
        newton_iters: path.len() - 1,
        path,
        used_bisection: true,
    })
}

fn boundary_accurate(f: &SpectralFactors, sigma: f64, delta: f64) -> bool {
    (f.step_norm_sq(sigma).sqrt() - delta).abs() <= 1e-8 * delta
}

fn bisect(f: &SpectralFactors, delta: f64, mut lo: f64, hi: Option<f64>) -> Result<f64> {
    let g_norm = (f.g_par.norm_squared() + f.g_perp_norm * f.g_perp_norm).sqrt();
    let mut hi = hi.unwrap_or_else(|| (g_norm / delta).max(lo * 2.0).max(f64::MIN_POSITIVE));
    let mut grow = 0;
    while phi_secular(hi, f, delta) < 0.0 {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 2000 || !hi.is_finite() {
            return Err(Error::Numerical("secular bracket growth failed".into()));
        }
    }
    let tol = SECULAR_TOL / delta;
    for _ in 0..BISECTION_MAX {
        let mid = 0.5 * (lo + hi);
        let phi = phi_secular(mid, f, delta);
        if (phi.abs() <= tol && boundary_accurate(f, mid, delta)) || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if phi < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    if boundary_accurate(f, mid, delta) {
        Ok(mid)
    } else {
        Err(Error::Numerical("secular equation: bisection failed".into()))
    }
}

/// Spectral factors of the buffered L-BFGS matrix and the split of `g`.
///
/// Numerically rank-deficient histories lose their oldest pairs until the
/// thin QR factor is well conditioned; an emptied buffer yields
/// [`Error::EmptyBuffer`].
pub fn factorize(buf: &mut PairBuffer, g: &DVector<f64>) -> Result<SpectralFactors> {
    check_len("gradient", buf.dim(), g.len())?;
    loop {
        if buf.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        match try_factorize(buf, g)? {
            Some(f) => return Ok(f),
            None => {
                buf.drop_oldest();
            }
        }
    }
}

fn try_factorize(buf: &PairBuffer, g: &DVector<f64>) -> Result<Option<SpectralFactors>> {
    let cf = buf.materialize()?;
    let r = thin_qr_r(&cf.psi);
    if r.nrows() < r.ncols() {
        // more columns than the dimension: Psi cannot have full column rank
        return Ok(None);
    }
    let diag_max = r.diagonal().amax();
    if !(diag_max > 0.0) || r.diagonal().iter().any(|d| d.abs() <= RANK_TOL * diag_max) {
        return Ok(None);
    }

    // M R^T through one solve against M^{-1}
    let Some(m_rt) = cf.minv.clone().lu().solve(&r.transpose()) else {
        return Ok(None);
    };
    let rmr = &r * m_rt;
    let rmr = (&rmr + rmr.transpose()) * 0.5;
    let (lambda_hat, v) = jacobi_eigen(&rmr)?;
    let gamma = buf.gamma();
    let lambda1 = lambda_hat.add_scalar(gamma);
    if lambda1.iter().any(|&l| !(l > 0.0)) {
        return Ok(None);
    }

    let psi_t_g = buf.psi_t_times(g);
    let Some(z) = r.transpose().solve_lower_triangular(&psi_t_g) else {
        return Ok(None);
    };
    let g_par = v.tr_mul(&z);
    let g_perp_norm = (g.norm_squared() - g_par.norm_squared()).max(0.0).sqrt();

    Ok(Some(SpectralFactors {
        r,
        v,
        lambda_hat,
        lambda1,
        gamma,
        g_par,
        g_perp_norm,
    }))
}

/// `p = -(B + sigma I)^{-1} g` with `tau_star = gamma + sigma`, via
/// `-(1/tau)[g - Psi (tau M^{-1} + Psi^T Psi)^{-1} Psi^T g]`.
pub fn smw_step(buf: &PairBuffer, g: &DVector<f64>, tau_star: f64) -> Result<DVector<f64>> {
    check_len("gradient", buf.dim(), g.len())?;
    if !(tau_star > 0.0) {
        return Err(Error::Numerical(format!("tau_star must be positive, got {tau_star}")));
    }
    if buf.is_empty() {
        return Ok(g * (-1.0 / tau_star));
    }
    let inner = buf.middle_inverse() * tau_star + buf.psi_gram();
    let w = inner
        .lu()
        .solve(&buf.psi_t_times(g))
        .ok_or(Error::SingularSystem("smw_step"))?;
    let mut p = buf.psi_times(&w);
    p -= g;
    p /= tau_star;
    Ok(p)
}

/// Solves `(B + sigma I) x = -rhs` with SMW and refines against `B v`.
/// Returns `x` and `B x`.
fn refined_solve(buf: &PairBuffer, rhs: &DVector<f64>, gamma: f64, sigma: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let tau_star = gamma + sigma;
    let mut x = smw_step(buf, rhs, tau_star)?;
    let mut bx = buf.b_times(&x)?;
    let target = REFINE_TOL * rhs.norm();
    // the SMW formula cancels heavily when gamma is small next to B
    for _ in 0..REFINE_STEPS {
        let mut r = &bx + rhs;
        r.axpy(sigma, &x, 1.0);
        if r.norm() <= target {
            break;
        }
        x += smw_step(buf, &r, tau_star)?;
        bx = buf.b_times(&x)?;
    }
    Ok((x, bx))
}

/// Global minimizer of the trust-region subproblem.
#[derive(Debug, Clone)]
pub struct TrSolution {
    pub p: DVector<f64>,
    pub sigma: f64,
    pub on_boundary: bool,
    pub newton_iters: usize,
    pub used_bisection: bool,
    /// Model change `g^T p + 1/2 p^T B p`.
    pub pred: f64,
}

/// Solves `min g^T p + 1/2 p^T B p` over `||p|| <= delta`.
pub fn solve_subproblem(buf: &mut PairBuffer, g: &DVector<f64>, delta: f64) -> Result<TrSolution> {
    check_len("gradient", buf.dim(), g.len())?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Numerical(format!("trust radius must be positive, got {delta}")));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("gradient is not finite".into()));
    }
    let g_norm = g.norm();
    if g_norm == 0.0 {
        return Ok(TrSolution {
            p: DVector::zeros(g.len()),
            sigma: 0.0,
            on_boundary: false,
            newton_iters: 0,
            used_bisection: false,
            pred: 0.0,
        });
    }

    let factors = match factorize(buf, g) {
        Ok(f) => f,
        Err(Error::EmptyBuffer) => SpectralFactors::scaled_identity(buf.gamma(), g_norm),
        Err(e) => return Err(e),
    };

    let (mut sigma, mut newton_iters, used_bisection) = if phi_secular(0.0, &factors, delta) >= 0.0 {
        (0.0, 0, false)
    } else {
        let root = solve_secular(&factors, delta)?;
        (root.sigma, root.newton_iters, root.used_bisection)
    };

    let gamma = factors.gamma;
    let (mut p, mut bp) = refined_solve(buf, g, gamma, sigma)?;
    // the factors carry the rounding of M^{-1}; with eigenvalues far below
    // gamma that can leave p just outside the ball
    let mut polish = 0;
    while sigma > 0.0 && p.norm() > delta * (1.0 + POLISH_TOL) && polish < POLISH_STEPS {
        let p_norm = p.norm();
        let (q, _) = refined_solve(buf, &p, gamma, sigma)?;
        let slope = -p.dot(&q) / p_norm.powi(3);
        if !(slope > 0.0) {
            break;
        }
        sigma -= (1.0 / p_norm - 1.0 / delta) / slope;
        (p, bp) = refined_solve(buf, g, gamma, sigma)?;
        polish += 1;
        newton_iters += 1;
    }
    let pred = g.dot(&p) + 0.5 * p.dot(&bp);
    Ok(TrSolution {
        p,
        sigma,
        on_boundary: sigma > 0.0,
        newton_iters,
        used_bisection,
        pred,
    })
}

/// Residuals of the global optimality conditions for a subproblem solution.
#[derive(Debug, Clone, Copy)]
pub struct Certificate {
    pub step_norm: f64,
    pub delta: f64,
    pub sigma: f64,
    /// `||(B + sigma I) p + g||`
    pub residual: f64,
    pub g_norm: f64,
}

impl Certificate {
    pub fn feasible(&self) -> bool {
        self.step_norm <= self.delta * (1.0 + 1e-8)
    }

    pub fn complementary(&self) -> bool {
        self.sigma * (self.delta - self.step_norm).abs() <= 1e-6 * self.delta * self.sigma.max(1.0)
    }

    pub fn stationary(&self) -> bool {
        self.residual <= 1e-8 * self.g_norm
    }

    pub fn passes(&self) -> bool {
        self.feasible() && self.sigma >= 0.0 && self.complementary() && self.stationary()
    }
}

/// Evaluates the optimality conditions for `sol` against `B` held in `buf`.
pub fn certificate(buf: &PairBuffer, g: &DVector<f64>, delta: f64, sol: &TrSolution) -> Result<Certificate> {
    let mut lhs = buf.b_times(&sol.p)?;
    lhs.axpy(sol.sigma, &sol.p, 1.0);
    lhs += g;
    Ok(Certificate {
        step_norm: sol.p.norm(),
        delta,
        sigma: sol.sigma,
        residual: lhs.norm(),
        g_norm: g.norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn secular_scalar_cases() {
        let f = SpectralFactors::scaled_identity(1.0, 5.0);
        assert_relative_eq!(phi_secular(0.0, &f, 10.0), 0.1, epsilon = 1e-15);

        let f = SpectralFactors::from_parts(v(&[1.0]), 1.0, v(&[2.0]), 0.0);
        assert_relative_eq!(phi_secular(0.0, &f, 1.0), -0.5, epsilon = 1e-15);
        assert_relative_eq!(phi_secular(1.0, &f, 1.0), 0.0, epsilon = 1e-15);

        let zero = SpectralFactors::scaled_identity(1.0, 0.0);
        assert_eq!(phi_secular(0.0, &zero, 1.0), f64::INFINITY);
    }

    #[test]
    fn secular_roots_are_analytic() {
        let f = SpectralFactors::from_parts(v(&[1.0]), 1.0, v(&[2.0]), 0.0);
        let root = solve_secular(&f, 1.0).unwrap();
        assert_relative_eq!(root.sigma, 1.0, epsilon = 1e-9);
        assert!(!root.used_bisection);

        let f = SpectralFactors::scaled_identity(1.0, 5.0);
        let root = solve_secular(&f, 1.0).unwrap();
        assert_relative_eq!(root.sigma, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn secular_rejects_interior_instances() {
        let f = SpectralFactors::scaled_identity(1.0, 5.0);
        assert!(solve_secular(&f, 10.0).is_err());
    }

    #[test]
    fn empty_buffer_steps() {
        let g = v(&[3.0, 4.0]);
        let buf = PairBuffer::new(2, 5).unwrap();
        let p = smw_step(&buf, &g, 5.0).unwrap();
        assert_relative_eq!(p, v(&[-0.6, -0.8]), epsilon = 1e-15);

        let mut buf = PairBuffer::new(2, 5).unwrap();
        let sol = solve_subproblem(&mut buf, &g, 10.0).unwrap();
        assert_relative_eq!(sol.p, v(&[-3.0, -4.0]), epsilon = 1e-15);
        assert_eq!(sol.sigma, 0.0);
        assert!(!sol.on_boundary);

        let sol = solve_subproblem(&mut buf, &g, 1.0).unwrap();
        assert_relative_eq!(sol.p, v(&[-0.6, -0.8]), epsilon = 1e-9);
        assert_relative_eq!(sol.sigma, 4.0, epsilon = 1e-8);
        assert!(sol.on_boundary);
        assert!(sol.pred < 0.0);
    }

    #[test]
    fn zero_gradient_gives_zero_step() {
        let mut buf = PairBuffer::new(3, 5).unwrap();
        buf.update(&v(&[1.0, 0.0, 0.0]), &v(&[2.0, 0.0, 0.0])).unwrap();
        let sol = solve_subproblem(&mut buf, &DVector::zeros(3), 1.0).unwrap();
        assert_eq!(sol.p, DVector::zeros(3));
        assert_eq!(sol.sigma, 0.0);
    }

    #[test]
    fn single_pair_spectrum_is_flat() {
        // Psi = [2 e1, 2 e1] has rank one: the pair is dropped and B = 2 I,
        // which is also the exact matrix for this pair.
        let mut buf = PairBuffer::new(3, 5).unwrap();
        buf.update(&v(&[1.0, 0.0, 0.0]), &v(&[2.0, 0.0, 0.0])).unwrap();
        assert_eq!(buf.gamma(), 2.0);
        assert_relative_eq!(buf.to_dense().unwrap(), DMatrix::identity(3, 3) * 2.0, epsilon = 1e-14);
        let g = v(&[1.0, 1.0, 1.0]);
        assert!(matches!(factorize(&mut buf.clone(), &g), Err(Error::EmptyBuffer)));
        let sol = solve_subproblem(&mut buf, &g, 100.0).unwrap();
        assert_relative_eq!(sol.p, g * -0.5, epsilon = 1e-14);
        assert_eq!(buf.gamma(), 2.0);
    }

    #[test]
    fn gradient_orthogonal_to_history() {
        let mut buf = PairBuffer::new(4, 5).unwrap();
        buf.update(&v(&[1.0, 0.0, 0.0, 0.0]), &v(&[2.0, 1.0, 0.0, 0.0])).unwrap();
        let g = v(&[0.0, 0.0, 3.0, 4.0]);
        let f = factorize(&mut buf, &g).unwrap();
        assert!(f.g_par.amax() < 1e-14);
        assert_relative_eq!(f.g_perp_norm, 5.0, epsilon = 1e-14);
    }

    #[test]
    fn parallel_pairs_are_dropped() {
        let mut buf = PairBuffer::new(3, 5).unwrap();
        let s = v(&[1.0, 1.0, 0.0]);
        let y = v(&[2.0, 1.0, 0.0]);
        buf.update(&s, &y).unwrap();
        buf.update(&s, &y).unwrap();
        assert_eq!(buf.len(), 2);
        let f = factorize(&mut buf, &v(&[1.0, 0.0, 1.0])).unwrap();
        assert_eq!(buf.len(), 1);
        assert_eq!(f.lambda1.len(), 2);
    }

    #[test]
    fn certificate_on_small_instance() {
        let mut buf = PairBuffer::new(3, 5).unwrap();
        buf.update(&v(&[1.0, 0.5, 0.0]), &v(&[3.0, 0.5, 0.2])).unwrap();
        buf.update(&v(&[0.0, 1.0, -1.0]), &v(&[0.1, 0.8, -0.4])).unwrap();
        let g = v(&[1.0, -2.0, 0.5]);
        for delta in [1e-3, 0.1, 1.0, 100.0] {
            let sol = solve_subproblem(&mut buf, &g, delta).unwrap();
            let cert = certificate(&buf, &g, delta, &sol).unwrap();
            assert!(cert.passes(), "{cert:?}");
        }
    }
}
