//! Spike-recovery benchmark: problem generation, tau sweeps, repeated
//! noisy trials and reporting for both solvers.

pub mod generate;
pub mod metrics;
pub mod report;

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::driver::{self, SolveStatus, SolverConfig};
use crate::error::{Error, Result};
use crate::gpsr::{gpsr_bb_solve, GpsrConfig};
use crate::objective::{SparseProblem, TransformedPoint};

pub use generate::{add_noise, gen_matrix, gen_signal, rng_for, subseed};
pub use metrics::{count_nonzeros, mean_std, mse, NONZERO_THRESHOLD};

/// Multiples of `||A^T y||_inf` tried by the automatic tau grid.
pub const AUTO_TAU_COEFFS: [f64; 7] = [0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    TrustSpa,
    Gpsr,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::TrustSpa => "trustspa",
            SolverKind::Gpsr => "gpsr",
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverSelection {
    TrustSpa,
    Gpsr,
    Both,
}

impl SolverSelection {
    pub fn kinds(self) -> &'static [SolverKind] {
        match self {
            SolverSelection::TrustSpa => &[SolverKind::TrustSpa],
            SolverSelection::Gpsr => &[SolverKind::Gpsr],
            SolverSelection::Both => &[SolverKind::TrustSpa, SolverKind::Gpsr],
        }
    }
}

/// Everything needed to reproduce a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Signal length.
    pub n: usize,
    /// Number of measurements.
    pub m: usize,
    pub spikes: usize,
    /// Relative noise level (0.05 = 5%).
    pub noise: f64,
    pub trials: usize,
    pub seed: u64,
    /// Explicit tau values; `None` selects the automatic grid.
    pub tau_grid: Option<Vec<f64>>,
    pub solver: SolverSelection,
    /// Draw a fresh signal and matrix for every trial instead of only fresh
    /// noise.
    pub redraw_per_trial: bool,
    pub trustspa: SolverConfig,
    pub gpsr: GpsrConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            n: 4096,
            m: 1024,
            spikes: 160,
            noise: 0.05,
            trials: 10,
            seed: 20_160_101,
            tau_grid: None,
            solver: SolverSelection::Both,
            redraw_per_trial: false,
            trustspa: SolverConfig::default(),
            gpsr: GpsrConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidSpec(msg));
        if self.n == 0 || self.m == 0 {
            return fail("sizes must be positive".into());
        }
        if self.spikes > self.n {
            return fail(format!("spike count {} exceeds signal length {}", self.spikes, self.n));
        }
        if self.m > self.n {
            return fail(format!("measurements {} exceed signal length {}", self.m, self.n));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return fail(format!("noise level must be nonnegative, got {}", self.noise));
        }
        if self.trials == 0 {
            return fail("need at least one trial".into());
        }
        if let Some(grid) = &self.tau_grid {
            if grid.is_empty() || grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return fail("tau grid must be a nonempty list of positive values".into());
            }
        }
        self.trustspa.validate()?;
        Ok(())
    }
}

/// One generated benchmark problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub a: DMatrix<f64>,
    pub f_true: DVector<f64>,
    /// Noise-free measurements `A f`.
    pub clean: DVector<f64>,
    pub y: DVector<f64>,
}

impl Instance {
    pub fn tau_max(&self) -> f64 {
        self.a.tr_mul(&self.y).amax()
    }
}

/// Produces trial instances, caching the signal and matrix when they are
/// shared across trials.
pub struct InstanceGenerator<'a> {
    spec: &'a ExperimentSpec,
    shared: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl<'a> InstanceGenerator<'a> {
    pub fn new(spec: &'a ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, shared: None })
    }

    fn base(&self, trial: u64) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let s = self.spec;
        let f = gen_signal(s.n, s.spikes, &mut rng_for(s.seed, trial, "signal"))?;
        let a = gen_matrix(s.m, s.n, &mut rng_for(s.seed, trial, "matrix"))?;
        Ok((a, f))
    }

    pub fn instance(&mut self, trial: usize) -> Result<Instance> {
        let (a, f_true) = if self.spec.redraw_per_trial {
            self.base(trial as u64)?
        } else {
            if self.shared.is_none() {
                self.shared = Some(self.base(0)?);
            }
            self.shared.clone().expect("cached above")
        };
        let clean = &a * &f_true;
        let y = add_noise(&clean, self.spec.noise, &mut rng_for(self.spec.seed, trial as u64, "noise"))?;
        Ok(Instance { a, f_true, clean, y })
    }
}

/// Result of one solver run on one problem.
#[derive(Debug, Clone)]
pub struct SolverRun {
    pub solver: SolverKind,
    pub tau: f64,
    pub signal: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub a_products: u64,
    pub status: SolveStatus,
    pub elapsed_s: f64,
    /// Outer-loop trace, TrustSpa only.
    pub trace: Option<Vec<driver::IterateRecord>>,
}

/// Runs `kind` on `(A, y, tau)` from the zero starting point.
pub fn run_solver(
    kind: SolverKind,
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: f64,
    spec: &ExperimentSpec,
) -> Result<SolverRun> {
    let prob = SparseProblem::new(a, y.clone(), tau)?;
    let start = Instant::now();
    let run = match kind {
        SolverKind::TrustSpa => {
            let out = driver::solve(&prob, &spec.trustspa, &TransformedPoint::zeros(prob.signal_len()))?;
            SolverRun {
                solver: kind,
                tau,
                iterations: out.iterations(),
                a_products: out.a_products,
                status: out.status,
                objective: out.phi,
                signal: out.signal,
                elapsed_s: 0.0,
                trace: Some(out.trace),
            }
        }
        SolverKind::Gpsr => {
            let out = gpsr_bb_solve(&prob, &spec.gpsr)?;
            SolverRun {
                solver: kind,
                tau,
                iterations: out.iterations(),
                a_products: out.a_products,
                status: out.status,
                objective: out.objective,
                signal: out.signal,
                elapsed_s: 0.0,
                trace: None,
            }
        }
    };
    Ok(SolverRun {
        elapsed_s: start.elapsed().as_secs_f64(),
        ..run
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub solver: SolverKind,
    pub tau: f64,
    /// `tau / ||A^T y||_inf`
    pub coefficient: f64,
    pub mse: Option<f64>,
    pub nnz: Option<usize>,
    pub iterations: Option<usize>,
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub solver: SolverKind,
    pub rows: Vec<SweepRow>,
    pub best_tau: f64,
    /// The run at `best_tau`, kept so trial 0 need not be solved again.
    pub best_run: SolverRun,
}

/// Concrete tau values for an instance.
pub fn tau_grid(spec: &ExperimentSpec, inst: &Instance) -> Vec<f64> {
    match &spec.tau_grid {
        Some(grid) => grid.clone(),
        None => {
            let tmax = inst.tau_max();
            AUTO_TAU_COEFFS.iter().map(|c| c * tmax).collect()
        }
    }
}

/// Solves at every tau of the grid and keeps the one with the lowest MSE.
/// Failed runs are recorded and excluded.
pub fn tau_sweep(kind: SolverKind, inst: &Instance, spec: &ExperimentSpec) -> Result<SweepReport> {
    let tmax = inst.tau_max();
    let mut rows = Vec::new();
    let mut best: Option<(f64, SolverRun)> = None;
    for tau in tau_grid(spec, inst) {
        let coefficient = if tmax > 0.0 { tau / tmax } else { f64::NAN };
        match run_solver(kind, &inst.a, &inst.y, tau, spec) {
            Ok(run) if run.status != SolveStatus::NonFinite => {
                let err = mse(&run.signal, &inst.f_true)?;
                rows.push(SweepRow {
                    solver: kind,
                    tau,
                    coefficient,
                    mse: Some(err),
                    nnz: Some(count_nonzeros(&run.signal, NONZERO_THRESHOLD)),
                    iterations: Some(run.iterations),
                    status: run.status.to_string(),
                });
                if best.as_ref().is_none_or(|(b, _)| err < *b) {
                    best = Some((err, run));
                }
            }
            Ok(run) => rows.push(failed_row(kind, tau, coefficient, run.status.to_string())),
            Err(e) => rows.push(failed_row(kind, tau, coefficient, format!("error: {e}"))),
        }
    }
    let (_, best_run) = best.ok_or_else(|| Error::Numerical(format!("every tau failed for {kind}")))?;
    Ok(SweepReport {
        solver: kind,
        rows,
        best_tau: best_run.tau,
        best_run,
    })
}

fn failed_row(solver: SolverKind, tau: f64, coefficient: f64, status: String) -> SweepRow {
    SweepRow {
        solver,
        tau,
        coefficient,
        mse: None,
        nnz: None,
        iterations: None,
        status,
    }
}

/// One solver on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub solver: SolverKind,
    pub tau: f64,
    pub mse: f64,
    pub nnz: usize,
    pub iterations: usize,
    pub a_products: u64,
    pub objective: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTiming {
    pub trial: usize,
    pub solver: SolverKind,
    pub wall_time_s: f64,
}

/// Per-solver aggregate over completed trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub tau: f64,
    pub mean_mse: f64,
    pub std_mse: f64,
    pub mean_nnz: f64,
    pub mean_iters: f64,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub config: ExperimentSpec,
    pub solvers: BTreeMap<SolverKind, SolverSummary>,
    /// Trials where TrustSpa reached a strictly lower MSE than GPSR-BB.
    pub trustspa_wins: Option<usize>,
}

pub const SUMMARY_SCHEMA: &str = "trustspa-summary/1";

/// Wall-clock aggregates, kept apart from the reproducible summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub solvers: BTreeMap<SolverKind, f64>,
    pub trials: Vec<TrialTiming>,
}

/// Ground truth and estimates of one trial.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub trial: usize,
    pub f_true: DVector<f64>,
    pub estimates: Vec<(SolverKind, DVector<f64>)>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: Summary,
    pub trials: Vec<TrialReport>,
    pub timings: TimingSummary,
    pub sweeps: Vec<SweepReport>,
    pub reconstructions: Vec<Reconstruction>,
    /// Solver runs in trial order, for callers that inspect traces.
    pub runs: Vec<(usize, SolverRun)>,
}

/// Runs the full batch: tau sweep on trial 0, then every trial at the
/// selected tau for each solver.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let mut gen = InstanceGenerator::new(spec)?;
    let first = gen.instance(0)?;

    let mut sweeps = Vec::new();
    for &kind in spec.solver.kinds() {
        sweeps.push(tau_sweep(kind, &first, spec)?);
    }

    let mut trials = Vec::new();
    let mut timings = Vec::new();
    let mut reconstructions = Vec::new();
    let mut runs = Vec::new();
    for trial in 0..spec.trials {
        let inst = if trial == 0 { first.clone() } else { gen.instance(trial)? };
        let mut estimates = Vec::new();
        for sweep in &sweeps {
            let kind = sweep.solver;
            let result = if trial == 0 {
                Ok(sweep.best_run.clone())
            } else {
                run_solver(kind, &inst.a, &inst.y, sweep.best_tau, spec)
            };
            match result {
                Ok(run) => {
                    trials.push(TrialReport {
                        trial,
                        solver: kind,
                        tau: sweep.best_tau,
                        mse: mse(&run.signal, &inst.f_true)?,
                        nnz: count_nonzeros(&run.signal, NONZERO_THRESHOLD),
                        iterations: run.iterations,
                        a_products: run.a_products,
                        objective: run.objective,
                        status: run.status.to_string(),
                    });
                    timings.push(TrialTiming {
                        trial,
                        solver: kind,
                        wall_time_s: run.elapsed_s,
                    });
                    estimates.push((kind, run.signal.clone()));
                    runs.push((trial, run));
                }
                Err(e) => trials.push(TrialReport {
                    trial,
                    solver: kind,
                    tau: sweep.best_tau,
                    mse: f64::NAN,
                    nnz: 0,
                    iterations: 0,
                    a_products: 0,
                    objective: f64::NAN,
                    status: format!("error: {e}"),
                }),
            }
        }
        reconstructions.push(Reconstruction {
            trial,
            f_true: inst.f_true.clone(),
            estimates,
        });
    }

    let summary = summarize(spec.clone(), &trials);
    let timings = summarize_timings(timings);
    Ok(ExperimentOutcome {
        summary,
        trials,
        timings,
        sweeps,
        reconstructions,
        runs,
    })
}

fn is_completed(t: &TrialReport) -> bool {
    t.mse.is_finite() && !t.status.starts_with("error") && t.status != SolveStatus::NonFinite.as_str()
}

/// Aggregates trial rows per solver.
pub fn summarize(config: ExperimentSpec, trials: &[TrialReport]) -> Summary {
    let mut solvers = BTreeMap::new();
    let kinds: Vec<SolverKind> = {
        let mut k: Vec<_> = trials.iter().map(|t| t.solver).collect();
        k.sort();
        k.dedup();
        k
    };
    for kind in kinds {
        let rows: Vec<&TrialReport> = trials.iter().filter(|t| t.solver == kind).collect();
        let done: Vec<&TrialReport> = rows.iter().copied().filter(|t| is_completed(t)).collect();
        let mses: Vec<f64> = done.iter().map(|t| t.mse).collect();
        let (mean_mse, std_mse) = mean_std(&mses);
        let (mean_nnz, _) = mean_std(&done.iter().map(|t| t.nnz as f64).collect::<Vec<_>>());
        let (mean_iters, _) = mean_std(&done.iter().map(|t| t.iterations as f64).collect::<Vec<_>>());
        solvers.insert(
            kind,
            SolverSummary {
                tau: rows.first().map_or(f64::NAN, |t| t.tau),
                mean_mse,
                std_mse,
                mean_nnz,
                mean_iters,
                completed: done.len(),
                failed: rows.len() - done.len(),
            },
        );
    }
    let trustspa_wins = if solvers.len() == 2 {
        let mut wins = 0;
        let ts: BTreeMap<usize, f64> = trials
            .iter()
            .filter(|t| t.solver == SolverKind::TrustSpa && is_completed(t))
            .map(|t| (t.trial, t.mse))
            .collect();
        for t in trials.iter().filter(|t| t.solver == SolverKind::Gpsr && is_completed(t)) {
            if ts.get(&t.trial).is_some_and(|&m| m < t.mse) {
                wins += 1;
            }
        }
        Some(wins)
    } else {
        None
    };
    Summary {
        schema: SUMMARY_SCHEMA.to_string(),
        config,
        solvers,
        trustspa_wins,
    }
}

pub fn summarize_timings(trials: Vec<TrialTiming>) -> TimingSummary {
    let mut solvers = BTreeMap::new();
    for kind in [SolverKind::TrustSpa, SolverKind::Gpsr] {
        let times: Vec<f64> = trials.iter().filter(|t| t.solver == kind).map(|t| t.wall_time_s).collect();
        if !times.is_empty() {
            solvers.insert(kind, mean_std(&times).0);
        }
    }
    TimingSummary { solvers, trials }
}
