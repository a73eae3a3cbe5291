use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use trustspa::experiment::{
    self, count_nonzeros, mse, report, run_experiment, run_solver, tau_sweep, ExperimentSpec, Instance,
    InstanceGenerator, SolverSelection, TrialReport, NONZERO_THRESHOLD,
};
use trustspa::{Error, Result};

#[derive(Parser)]
#[command(name = "trustspa", version, about = "Sparse recovery with an L-BFGS trust-region method")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark problem and write it as CSV
    Gen {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Trial index whose noise realization is written
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long, default_value = "problem")]
        out: PathBuf,
    },
    /// Solve one problem with one tau (or the sweep-selected tau)
    Run {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Directory written by `gen`; generated from the flags when absent
        #[arg(long)]
        problem_dir: Option<PathBuf>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Sweep tau on trial 0 and report the MSE of every value
    Sweep {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Full batch: tau sweep, then every noisy trial for each solver
    Experiment {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Draw a fresh signal and matrix for each trial, not only fresh noise
        #[arg(long)]
        redraw_per_trial: bool,
        #[arg(long, default_value = "experiment")]
        out: PathBuf,
    },
    /// Re-aggregate trials.csv of an experiment directory
    Report {
        #[arg(long, default_value = "experiment")]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// Signal length
    #[arg(long, default_value_t = 4096)]
    n: usize,
    /// Number of measurements
    #[arg(long, default_value_t = 1024)]
    m: usize,
    #[arg(long, default_value_t = 160)]
    spikes: usize,
    /// Relative noise level
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = ExperimentSpec::default().seed)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverChoice {
    Trustspa,
    Gpsr,
    Both,
}

impl From<SolverChoice> for SolverSelection {
    fn from(c: SolverChoice) -> Self {
        match c {
            SolverChoice::Trustspa => SolverSelection::TrustSpa,
            SolverChoice::Gpsr => SolverSelection::Gpsr,
            SolverChoice::Both => SolverSelection::Both,
        }
    }
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "both")]
    solver: SolverChoice,
    /// `auto` or a comma-separated list of positive values
    #[arg(long, default_value = "auto")]
    tau: String,
    /// L-BFGS memory
    #[arg(long, default_value_t = 5)]
    memory: usize,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
}

fn parse_tau(s: &str) -> Result<Option<Vec<f64>>> {
    if s.trim().eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidSpec(format!("cannot parse tau value {t:?}")))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn build_spec(problem: &ProblemArgs, solver: Option<&SolverArgs>) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec {
        n: problem.n,
        m: problem.m,
        spikes: problem.spikes,
        noise: problem.noise,
        seed: problem.seed,
        ..Default::default()
    };
    if let Some(s) = solver {
        spec.solver = s.solver.into();
        spec.tau_grid = parse_tau(&s.tau)?;
        spec.trustspa.memory = s.memory;
        spec.trustspa.max_iters = s.max_iters;
        spec.gpsr.max_iters = s.max_iters;
    }
    spec.validate()?;
    Ok(spec)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    config: &'a ExperimentSpec,
    runs: Vec<TrialReport>,
}

fn cmd_run(mut spec: ExperimentSpec, problem_dir: Option<&Path>, out: &Path) -> Result<()> {
    let inst: Instance = match problem_dir {
        Some(dir) => {
            let inst = report::read_instance(dir)?;
            // echo the loaded sizes rather than the flag defaults
            spec.n = inst.f_true.len();
            spec.m = inst.y.len();
            spec.spikes = count_nonzeros(&inst.f_true, 0.0);
            spec.trials = 1;
            inst
        }
        None => InstanceGenerator::new(&spec)?.instance(0)?,
    };
    let spec = &spec;
    report::ensure_dir(out)?;
    let mut rows = Vec::new();
    for &kind in spec.solver.kinds() {
        let run = match &spec.tau_grid {
            Some(grid) if grid.len() == 1 => run_solver(kind, &inst.a, &inst.y, grid[0], spec)?,
            _ => tau_sweep(kind, &inst, spec)?.best_run,
        };
        let row = TrialReport {
            trial: 0,
            solver: kind,
            tau: run.tau,
            mse: mse(&run.signal, &inst.f_true)?,
            nnz: count_nonzeros(&run.signal, NONZERO_THRESHOLD),
            iterations: run.iterations,
            a_products: run.a_products,
            objective: run.objective,
            status: run.status.to_string(),
        };
        println!(
            "{kind:>8}  tau={:.4e}  mse={:.4e}  nnz={}  iters={}  time={:.2}s  status={}",
            row.tau, row.mse, row.nnz, row.iterations, run.elapsed_s, row.status
        );
        report::write_columns(
            &out.join(format!("run_{kind}.csv")),
            &[("f_true", &inst.f_true), ("f_hat", &run.signal)],
        )?;
        if let Some(trace) = &run.trace {
            report::write_rows(&out.join(format!("trace_{kind}.csv")), trace)?;
        }
        rows.push(row);
    }
    report::write_json(&out.join("run_summary.json"), &RunSummary { config: spec, runs: rows })
}

fn cmd_sweep(spec: &ExperimentSpec, out: &Path) -> Result<()> {
    let inst = InstanceGenerator::new(spec)?.instance(0)?;
    report::ensure_dir(out)?;
    for &kind in spec.solver.kinds() {
        let sweep = tau_sweep(kind, &inst, spec)?;
        for row in &sweep.rows {
            println!(
                "{kind:>8}  tau={:.4e}  c={:.3}  mse={}  nnz={}  status={}",
                row.tau,
                row.coefficient,
                row.mse.map_or("-".into(), |m| format!("{m:.4e}")),
                row.nnz.map_or("-".into(), |n| n.to_string()),
                row.status
            );
        }
        println!("{kind:>8}  best tau={:.4e}", sweep.best_tau);
        report::write_sweep(&out.join(format!("sweep_{kind}.csv")), &sweep.rows)?;
    }
    Ok(())
}

fn print_summary(summary: &experiment::Summary, timings: Option<&experiment::TimingSummary>) {
    for (kind, s) in &summary.solvers {
        let time = timings
            .and_then(|t| t.solvers.get(kind))
            .map_or(String::new(), |t| format!("  mean_time={t:.2}s"));
        println!(
            "{kind:>8}  tau={:.4e}  mean_mse={:.4e}  std_mse={:.2e}  mean_nnz={:.1}  mean_iters={:.1}{time}",
            s.tau, s.mean_mse, s.std_mse, s.mean_nnz, s.mean_iters
        );
    }
    if let Some(w) = summary.trustspa_wins {
        println!("trustspa lower MSE in {w}/{} trials", summary.config.trials);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { problem, trial, out } => {
            let spec = build_spec(&problem, None)?;
            let inst = InstanceGenerator::new(&spec)?.instance(trial)?;
            for path in report::write_instance(&out, &inst)? {
                println!("wrote {}", path.display());
            }
            report::write_json(&out.join("config.json"), &spec)
        }
        Command::Run { problem, solver, problem_dir, out } => {
            cmd_run(build_spec(&problem, Some(&solver))?, problem_dir.as_deref(), &out)
        }
        Command::Sweep { problem, solver, out } => cmd_sweep(&build_spec(&problem, Some(&solver))?, &out),
        Command::Experiment {
            problem,
            solver,
            trials,
            redraw_per_trial,
            out,
        } => {
            let mut spec = build_spec(&problem, Some(&solver))?;
            spec.trials = trials;
            spec.redraw_per_trial = redraw_per_trial;
            spec.validate()?;
            let outcome = run_experiment(&spec)?;
            report::write_outcome(&out, &outcome)?;
            print_summary(&outcome.summary, Some(&outcome.timings));
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Report { out } => {
            let (summary, timings) = report::load_report(&out)?;
            print_summary(&summary, timings.as_ref());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
