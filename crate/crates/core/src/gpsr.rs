//! Gradient projection with Barzilai-Borwein steps on the bound-constrained
//! split problem
//!
//! ```text
//! min 1/2 ||A(u - v) - y||^2 + tau 1^T (u + v)   s.t.  u, v >= 0
//! ```
//!
//! Monotone variant: each projected BB step is followed by an exact line
//! minimization over `[0, 1]` (the objective is quadratic along the
//! direction), then checked for sufficient decrease. No debiasing.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::driver::SolveStatus;
use crate::error::{check_len, Error, Result};
use crate::objective::{LinearOperator, SparseProblem};

pub const ALPHA_MIN: f64 = 1e-30;
pub const ALPHA_MAX: f64 = 1e30;
const SUFFICIENT_DECREASE: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn check_split<Op: LinearOperator>(prob: &SparseProblem<Op>, z: &DVector<f64>) -> Result<()> {
    check_len("split point", 2 * prob.signal_len(), z.len())
}

fn difference(z: &DVector<f64>) -> DVector<f64> {
    let n = z.len() / 2;
    DVector::from_fn(n, |j, _| z[j] - z[n + j])
}

/// Objective of the split problem at `z = [u; v]`.
pub fn split_objective<Op: LinearOperator>(prob: &SparseProblem<Op>, z: &DVector<f64>) -> Result<f64> {
    check_split(prob, z)?;
    let r = prob.operator().apply(&difference(z)) - prob.observations();
    Ok(0.5 * r.norm_squared() + prob.tau() * z.sum())
}

/// Gradient `[A^T r + tau; -A^T r + tau]` with `r = A(u - v) - y`.
pub fn split_gradient<Op: LinearOperator>(prob: &SparseProblem<Op>, z: &DVector<f64>) -> Result<DVector<f64>> {
    check_split(prob, z)?;
    let r = prob.operator().apply(&difference(z)) - prob.observations();
    Ok(gradient_from_residual(prob, &r))
}

fn gradient_from_residual<Op: LinearOperator>(prob: &SparseProblem<Op>, r: &DVector<f64>) -> DVector<f64> {
    let atr = prob.operator().apply_transpose(r);
    let n = atr.len();
    let tau = prob.tau();
    DVector::from_fn(2 * n, |i, _| if i < n { atr[i] + tau } else { tau - atr[i - n] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsrConfig {
    /// Relative objective change that ends the run.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for GpsrConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsrRecord {
    pub k: usize,
    pub objective: f64,
    /// Fraction of the projected step taken.
    pub lambda: f64,
    /// BB step length used for the projection.
    pub alpha: f64,
    /// `||z - max(0, z - grad F(z))||` before the step.
    pub fixed_point_residual: f64,
    pub a_products: u64,
}

#[derive(Debug, Clone)]
pub struct GpsrOutput {
    /// Nonnegative split variables `[u; v]`.
    pub z: DVector<f64>,
    /// `u - v`
    pub signal: DVector<f64>,
    pub objective: f64,
    /// `ConvergedGradient` means the projected step vanished (fixed point).
    pub status: SolveStatus,
    pub trace: Vec<GpsrRecord>,
    pub a_products: u64,
    pub elapsed_s: f64,
}

impl GpsrOutput {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Runs monotone GPSR-BB from `z = 0`.
pub fn gpsr_bb_solve<Op: LinearOperator>(prob: &SparseProblem<Op>, cfg: &GpsrConfig) -> Result<GpsrOutput> {
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidConfig("GPSR tolerance must be positive".into()));
    }
    let start = Instant::now();
    let a = prob.operator();
    let tau = prob.tau();
    let n = prob.signal_len();

    let mut z = DVector::zeros(2 * n);
    // residual A(u - v) - y, maintained by linearity
    let mut r = -prob.observations().clone();
    let mut grad = gradient_from_residual(prob, &r);
    let mut a_products = 1u64;
    let mut objective = 0.5 * r.norm_squared();

    let aty_inf = (0..n).map(|j| (grad[j] - tau).abs()).fold(0.0, f64::max);
    let mut alpha = if aty_inf > 0.0 { (1.0 / aty_inf).clamp(ALPHA_MIN, ALPHA_MAX) } else { 1.0 };

    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIters;

    for k in 0..cfg.max_iters {
        let fixed_point_residual = z
            .iter()
            .zip(grad.iter())
            .map(|(&zi, &gi): (&f64, &f64)| {
                let d = (zi - gi).max(0.0) - zi;
                d * d
            })
            .sum::<f64>()
            .sqrt();

        let d = DVector::from_fn(2 * n, |i, _| (z[i] - alpha * grad[i]).max(0.0) - z[i]);
        if d.iter().all(|&di| di == 0.0) {
            status = SolveStatus::ConvergedGradient;
            break;
        }
        let slope = grad.dot(&d);
        let ad = a.apply(&difference(&d));
        a_products += 1;
        let curvature = ad.norm_squared();

        let mut lambda = if curvature > 0.0 { (-slope / curvature).clamp(0.0, 1.0) } else { 1.0 };
        if lambda == 0.0 {
            lambda = 1.0;
        }
        let f_at = |lam: f64| {
            let mut rl = r.clone();
            rl.axpy(lam, &ad, 1.0);
            0.5 * rl.norm_squared() + tau * (z.sum() + lam * d.sum())
        };
        let mut trial = f_at(lambda);
        let mut backtracks = 0;
        while trial > objective + SUFFICIENT_DECREASE * lambda * slope {
            backtracks += 1;
            if backtracks > MAX_BACKTRACKS {
                break;
            }
            lambda *= 0.5;
            trial = f_at(lambda);
        }
        if !trial.is_finite() {
            status = SolveStatus::NonFinite;
            break;
        }
        if trial > objective {
            // no decrease possible at working precision
            status = SolveStatus::ConvergedObjective;
            break;
        }

        let dz = &d * lambda;
        z += &dz;
        // exact nonnegativity despite rounding in z + lambda d
        z.iter_mut().for_each(|zi| *zi = zi.max(0.0));
        r.axpy(lambda, &ad, 1.0);
        let new_grad = gradient_from_residual(prob, &r);
        a_products += 1;

        let dg = &new_grad - &grad;
        let denom = dz.dot(&dg);
        alpha = if denom > 0.0 {
            (dz.norm_squared() / denom).clamp(ALPHA_MIN, ALPHA_MAX)
        } else {
            1.0
        };

        let rel_change = (objective - trial).abs() / objective.abs();
        objective = trial;
        grad = new_grad;
        trace.push(GpsrRecord {
            k,
            objective,
            lambda,
            alpha,
            fixed_point_residual,
            a_products,
        });
        if rel_change <= cfg.tol {
            status = SolveStatus::ConvergedObjective;
            break;
        }
    }

    Ok(GpsrOutput {
        signal: difference(&z),
        z,
        objective,
        status,
        trace,
        a_products,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}
