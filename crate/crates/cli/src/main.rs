use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use uavfl::baselines::run_scheme;
use uavfl::convergence::check_feasibility;
use uavfl::flsim::{generate_synthetic, run_fl, AggregationMode};
use uavfl::io::{
    write_history_csv, write_rounds_csv, write_rows_csv, write_trajectory_csv, ResultFile,
    TRAJECTORY_STRIDE,
};
use uavfl::sched::solve_sched_time;
use uavfl::{generate_scenario, Error, Result, Scenario, ScenarioFile, SchemeId, SolveOptions, SolveResult};

#[derive(Parser)]
#[command(name = "uavfl", version, about = "Completion-time minimization for UAV-served federated learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded two-cluster scenario.
    Gen(GenArgs),
    /// Solve one scheme (the joint design by default).
    Solve(SolveArgs),
    /// Run the comparison schemes.
    Baseline(SolveArgs),
    /// Train on synthetic data under a solved schedule and check the bound.
    Flsim(FlsimArgs),
    /// Solve over a grid of accuracy targets and energy budgets.
    Sweep(SweepArgs),
    /// Check whether the accuracy target and energy budgets can be met.
    Feascheck(FeascheckArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "K", default_value_t = 10)]
    devices: usize,
    /// Shrinks rounds, dataset sizes and model size together.
    #[arg(long, default_value_t = 0.05)]
    scale: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    max_outer: Option<usize>,
    /// Also write the dual trace of the final scheduling solve.
    #[arg(long)]
    trace: bool,
    /// Write every waypoint instead of every fifth.
    #[arg(long)]
    full_trajectory: bool,
}

#[derive(Args)]
struct FlsimArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Use the schedule of this result file instead of solving.
    #[arg(long)]
    result: Option<PathBuf>,
    #[arg(long, default_value = "joint")]
    scheme: String,
    /// Seed of the synthetic dataset.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Overrides the scenario's learning rate.
    #[arg(long)]
    learn_rate: Option<f64>,
    #[arg(long)]
    unweighted: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "joint")]
    scheme: String,
    #[arg(long, value_delimiter = ',')]
    epsilon: Vec<f64>,
    /// Per-device energy budgets in joules.
    #[arg(long, value_delimiter = ',')]
    energy: Vec<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
}

#[derive(Args)]
struct FeascheckArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    epsilon: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve(a, false),
        Command::Baseline(a) => solve(a, true),
        Command::Flsim(a) => flsim(a),
        Command::Sweep(a) => sweep(a),
        Command::Feascheck(a) => feascheck(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "config-parse" => 2,
        "infeasible" => 3,
        "non-convergence" => 4,
        _ => 1,
    }
}

fn report(e: &Error) {
    let reasons = match e {
        Error::Infeasible { reasons } => reasons.clone(),
        _ => Vec::new(),
    };
    let body = json!({ "category": e.category(), "message": e.to_string(), "reasons": reasons });
    eprintln!("{body}");
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn load(path: &Path) -> Result<(ScenarioFile, Scenario)> {
    let file = ScenarioFile::load(path)?;
    let scenario = file.to_scenario()?;
    Ok((file, scenario))
}

fn options(file: &ScenarioFile, max_outer: Option<usize>) -> SolveOptions {
    let mut opts = file.solver.clone();
    if let Some(m) = max_outer {
        opts.max_outer = m;
    }
    opts
}

fn gen(a: GenArgs) -> Result<()> {
    let file = generate_scenario(a.seed, a.devices, a.scale)?;
    create_dir(&a.out)?;
    let path = a.out.join("scenario.json");
    file.save(&path)?;
    println!("{}", json!({ "scenario": path, "hash": file.hash()? }));
    Ok(())
}

fn write_result(dir: &Path, file: &ScenarioFile, opts: &SolveOptions, result: &SolveResult, stride: usize) -> Result<()> {
    create_dir(dir)?;
    ResultFile {
        scenario_hash: file.hash()?,
        seed: file.seed,
        options: opts.clone(),
        result: result.clone(),
    }
    .save(&dir.join("result.json"))?;
    write_trajectory_csv(&dir.join("trajectory.csv"), &result.trajectory, stride)?;
    write_rounds_csv(&dir.join("rounds.csv"), result)?;
    write_history_csv(&dir.join("history.csv"), &result.history)?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow {
    scheme: SchemeId,
    completion_time: f64,
    bound: f64,
    scheduled: usize,
    iterations: usize,
    converged: bool,
}

fn solve(a: SolveArgs, baselines: bool) -> Result<()> {
    let (file, scenario) = load(&a.scenario)?;
    let opts = options(&file, a.max_outer);
    let schemes: Vec<SchemeId> = match (&a.scheme, baselines) {
        (Some(name), _) => vec![name.parse()?],
        (None, false) => vec![SchemeId::Joint],
        (None, true) => vec![SchemeId::StaticUav, SchemeId::StaticUavHs, SchemeId::FullScheduling],
    };
    let stride = if a.full_trajectory { 1 } else { TRAJECTORY_STRIDE };
    let mut rows = Vec::new();
    for scheme in schemes {
        let result = run_scheme(scheme, &scenario, &opts)?;
        let dir = if baselines { a.out.join(scheme.as_str()) } else { a.out.clone() };
        write_result(&dir, &file, &opts, &result, stride)?;
        if a.trace {
            let mut sched = opts.sched.clone();
            sched.trace = true;
            match solve_sched_time(&scenario, &result.trajectory, &sched, None) {
                Ok(sol) => write_rows_csv(&dir.join("dual_trace.csv"), &sol.trace)?,
                Err(Error::SchedNonConvergence { best, .. }) => write_rows_csv(&dir.join("dual_trace.csv"), &best.trace)?,
                Err(e) => return Err(e),
            }
        }
        rows.push(SummaryRow {
            scheme,
            completion_time: result.completion_time,
            bound: result.bound,
            scheduled: result.schedule.iter().filter(|&&x| x).count(),
            iterations: result.iterations,
            converged: result.converged,
        });
    }
    create_dir(&a.out)?;
    write_rows_csv(&a.out.join("summary.csv"), &rows)?;
    println!("{}", serde_json::to_string(&rows)?);
    Ok(())
}

fn flsim(a: FlsimArgs) -> Result<()> {
    let (file, scenario) = load(&a.scenario)?;
    let schedule = match &a.result {
        Some(path) => ResultFile::load(path)?.result.schedule,
        None => run_scheme(a.scheme.parse()?, &scenario, &file.solver)?.schedule,
    };
    let sizes: Vec<usize> = scenario.devices.iter().map(|d| d.dataset_size).collect();
    if schedule.dim() != (sizes.len(), scenario.rounds()) {
        return Err(Error::Config(format!(
            "schedule is {:?} but the scenario has {} devices and {} rounds",
            schedule.dim(),
            sizes.len(),
            scenario.rounds()
        )));
    }
    let ds = generate_synthetic(a.seed, sizes.len(), a.classes, a.dim, &sizes)?;
    let lr = a.learn_rate.unwrap_or(scenario.fl.learn_rate);
    let mode = if a.unweighted { AggregationMode::Unweighted } else { AggregationMode::Weighted };
    let log = run_fl(&ds, &schedule, lr, mode)?;
    create_dir(&a.out)?;
    log.write_csv(&a.out.join("fl_log.csv"))?;
    let bound = log.bound(&sizes, lr);
    let summary = json!({
        "avg_grad_norm_sq": log.avg_grad_norm_sq,
        "bound": bound,
        "bound_holds": log.avg_grad_norm_sq <= bound,
        "kappa": log.kappa,
        "final_loss": log.final_loss,
        "learn_rate": lr,
        "aggregation": mode,
    });
    std::fs::write(a.out.join("fl_summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!("{summary}");
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    scheme: SchemeId,
    epsilon: f64,
    energy: Option<f64>,
    completion_time: Option<f64>,
    status: String,
}

fn sweep(a: SweepArgs) -> Result<()> {
    let (file, scenario) = load(&a.scenario)?;
    let opts = options(&file, a.max_outer);
    let scheme: SchemeId = a.scheme.parse()?;
    let epsilons = if a.epsilon.is_empty() { vec![scenario.fl.accuracy_target] } else { a.epsilon.clone() };
    let energies: Vec<Option<f64>> = if a.energy.is_empty() {
        vec![None]
    } else {
        a.energy.iter().copied().map(Some).collect()
    };
    let jobs: Vec<(f64, Option<f64>)> = energies
        .iter()
        .flat_map(|&e| epsilons.iter().map(move |&eps| (eps, e)))
        .collect();
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(eps, energy)| {
            let mut s = scenario.with_epsilon(eps);
            if let Some(e) = energy {
                s = s.with_energy(e);
            }
            let (completion_time, status) = match run_scheme(scheme, &s, &opts) {
                Ok(r) => (Some(r.completion_time), "ok".to_string()),
                Err(e) => (None, e.category().to_string()),
            };
            SweepRow {
                scheme,
                epsilon: eps,
                energy,
                completion_time,
                status,
            }
        })
        .collect();
    create_dir(&a.out)?;
    write_rows_csv(&a.out.join("sweep.csv"), &rows)?;
    println!("{}", serde_json::to_string(&rows)?);
    Ok(())
}

fn feascheck(a: FeascheckArgs) -> Result<()> {
    let (_, mut scenario) = load(&a.scenario)?;
    if let Some(eps) = a.epsilon {
        scenario = scenario.with_epsilon(eps);
    }
    let report = check_feasibility(&scenario);
    println!("{}", serde_json::to_string(&report)?);
    if report.feasible {
        Ok(())
    } else {
        Err(Error::Infeasible { reasons: report.reasons })
    }
}
