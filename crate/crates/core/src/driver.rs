//! Outer limited-memory BFGS trust-region iteration over the softplus
//! objective.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lbfgs_compact::{PairBuffer, DEFAULT_MEMORY};
use crate::objective::{to_signal, LinearOperator, SparseProblem, TransformedPoint};
use crate::trs::{certificate, solve_subproblem};

/// Tuning knobs for [`solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Number of stored `(s, y)` pairs.
    pub memory: usize,
    /// Acceptance threshold on the reduction ratio, in `(0, 0.5)`.
    pub tau1: f64,
    /// Gradient tolerance, scaled by `max(1, ||g0||)`.
    pub grad_tol: f64,
    /// Stop when an accepted step changes the objective by at most this
    /// fraction.
    pub rel_obj_tol: f64,
    /// Initial radius; `None` means `max(1, ||g0||)`.
    pub delta0: Option<f64>,
    pub delta_max: f64,
    /// Radius below which the run is declared stalled.
    pub delta_min: f64,
    pub shrink: f64,
    pub expand: f64,
    pub expand_rho: f64,
    pub boundary_frac: f64,
    pub max_iters: usize,
    /// Feed the quasi-Newton history from rejected trial points as well.
    pub update_on_reject: bool,
    /// Evaluate the subproblem optimality certificate every iteration.
    pub check_certificates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            memory: DEFAULT_MEMORY,
            tau1: 0.1,
            grad_tol: 1e-6,
            rel_obj_tol: 1e-8,
            delta0: None,
            delta_max: 1e10,
            delta_min: 1e-15,
            shrink: 0.5,
            expand: 2.0,
            expand_rho: 0.75,
            boundary_frac: 0.8,
            max_iters: 10_000,
            update_on_reject: true,
            check_certificates: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.memory == 0 {
            return fail("memory must be positive");
        }
        if !(self.tau1 > 0.0 && self.tau1 < 0.5) {
            return fail("tau1 must lie in (0, 0.5)");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0 && self.expand > 1.0) {
            return fail("need 0 < shrink < 1 < expand");
        }
        if !(self.grad_tol >= 0.0 && self.rel_obj_tol >= 0.0) {
            return fail("tolerances must be nonnegative");
        }
        if let Some(d) = self.delta0 {
            if !(d > 0.0 && d.is_finite()) {
                return fail("delta0 must be positive");
            }
        }
        if !(self.delta_max > 0.0 && self.delta_min >= 0.0 && self.delta_min < self.delta_max) {
            return fail("need 0 <= delta_min < delta_max");
        }
        Ok(())
    }
}

/// Why the outer loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    ConvergedGradient,
    ConvergedObjective,
    MaxIters,
    Stalled,
    NonFinite,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::ConvergedGradient => "converged-gradient",
            SolveStatus::ConvergedObjective => "converged-objective",
            SolveStatus::MaxIters => "max-iters",
            SolveStatus::Stalled => "stalled",
            SolveStatus::NonFinite => "non-finite",
        }
    }

    pub fn is_converged(self) -> bool {
        matches!(self, SolveStatus::ConvergedGradient | SolveStatus::ConvergedObjective)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub k: usize,
    /// Objective at the iterate kept after this iteration.
    pub phi: f64,
    /// Gradient norm at the iterate the step was computed from.
    pub grad_norm: f64,
    /// Radius used for this iteration's subproblem.
    pub delta: f64,
    pub rho: f64,
    pub pred: f64,
    pub sigma: f64,
    pub step_norm: f64,
    pub accepted: bool,
    pub pair_accepted: bool,
    pub gamma: f64,
    pub certificate_ok: Option<bool>,
    /// Products with `A` or `A^T` so far.
    pub a_products: u64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub x: TransformedPoint,
    /// Recovered physical signal.
    pub signal: DVector<f64>,
    pub phi: f64,
    pub status: SolveStatus,
    pub trace: Vec<IterateRecord>,
    pub a_products: u64,
    pub elapsed_s: f64,
}

impl SolveOutput {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn certificate_failures(&self) -> usize {
        self.trace.iter().filter(|r| r.certificate_ok == Some(false)).count()
    }
}

/// Actual over predicted reduction.
pub fn rho(phi_old: f64, phi_trial: f64, pred: f64) -> Result<f64> {
    if !(pred < 0.0) {
        return Err(Error::Numerical(format!(
            "predicted reduction must be negative, got {pred}"
        )));
    }
    Ok((phi_trial - phi_old) / pred)
}

/// Shrinks on poor agreement, expands on good agreement near the boundary.
pub fn update_radius(delta: f64, rho: f64, step_norm: f64, cfg: &SolverConfig) -> f64 {
    if rho < cfg.tau1 {
        delta * cfg.shrink
    } else if rho >= cfg.expand_rho && step_norm >= cfg.boundary_frac * delta {
        (delta * cfg.expand).min(cfg.delta_max)
    } else {
        delta
    }
}

/// Minimizes the softplus objective from `x0`.
pub fn solve<Op: LinearOperator>(
    prob: &SparseProblem<Op>,
    cfg: &SolverConfig,
    x0: &TransformedPoint,
) -> Result<SolveOutput> {
    cfg.validate()?;
    if x0.as_vector().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidProblem("starting point is not finite".into()));
    }
    let start = Instant::now();
    let n = prob.transformed_len();
    let mut buf = PairBuffer::new(n, cfg.memory)?;

    let mut x = x0.clone();
    let (mut phi, mut g) = prob.phi_and_grad(&x)?;
    let mut a_products = 2u64;
    let g0_norm = g.norm();
    let eps = cfg.grad_tol * g0_norm.max(1.0);
    let mut delta = cfg.delta0.unwrap_or(g0_norm.max(1.0));
    let mut trace = Vec::new();

    let status = if !phi.is_finite() || !g0_norm.is_finite() {
        SolveStatus::NonFinite
    } else {
        let mut status = SolveStatus::MaxIters;
        for k in 0..cfg.max_iters {
            let grad_norm = g.norm();
            if grad_norm <= eps {
                status = SolveStatus::ConvergedGradient;
                break;
            }

            let sol = solve_subproblem(&mut buf, &g, delta)?;
            let certificate_ok = if cfg.check_certificates {
                Some(certificate(&buf, &g, delta, &sol)?.passes())
            } else {
                None
            };
            let gamma = buf.gamma();

            let trial = x.add_step(&sol.p);
            let (phi_trial, g_trial) = prob.phi_and_grad(&trial)?;
            a_products += 2;
            if !phi_trial.is_finite() || g_trial.iter().any(|v| !v.is_finite()) {
                status = SolveStatus::NonFinite;
                break;
            }
            let ratio = rho(phi, phi_trial, sol.pred)?;
            let accepted = ratio >= cfg.tau1;

            let pair_accepted = if accepted || cfg.update_on_reject {
                buf.update(&sol.p, &(&g_trial - &g))?
            } else {
                false
            };

            let step_norm = sol.p.norm();
            let mut rel_change = f64::INFINITY;
            if accepted {
                rel_change = (phi_trial - phi).abs() / phi.abs();
                x = trial;
                phi = phi_trial;
                g = g_trial;
            }
            let delta_used = delta;
            delta = update_radius(delta, ratio, step_norm, cfg);

            trace.push(IterateRecord {
                k,
                phi,
                grad_norm,
                delta: delta_used,
                rho: ratio,
                pred: sol.pred,
                sigma: sol.sigma,
                step_norm,
                accepted,
                pair_accepted,
                gamma,
                certificate_ok,
                a_products,
                elapsed_s: start.elapsed().as_secs_f64(),
            });

            if accepted && rel_change <= cfg.rel_obj_tol {
                status = SolveStatus::ConvergedObjective;
                break;
            }
            if delta < cfg.delta_min {
                status = SolveStatus::Stalled;
                break;
            }
        }
        status
    };

    let signal = to_signal(&x);
    Ok(SolveOutput {
        x,
        signal,
        phi,
        status,
        trace,
        a_products,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}
