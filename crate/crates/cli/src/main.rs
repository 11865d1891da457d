use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use autoscale_core::experiment::{read_json, write_outputs, ExperimentConfig, WorkloadSource};
use autoscale_core::mip::{
    build_instance, check_solution, compare, export_lp, realized_profit, solve_exact, MipError, MipInstance,
    MipSolution, SlotSettings, SolveLimits,
};
use autoscale_core::model::{SystemConfig, UserConfig, UserId};
use autoscale_core::pfa::PfaConfig;
use autoscale_core::sim::{read_outcomes, run, OutcomeRecord, PolicyConfig};
use autoscale_core::workload::GeneratorSpec;

/// Exit code for instances beyond the exact solver's limits.
const EXIT_LIMIT: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

#[derive(Parser)]
#[command(name = "autoscale", version, about = "Budget-constrained workflow autoscaling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every replication of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Replications run at once.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic workload.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        /// Output file; with several sets, `-1`, `-2`, ... is added before the extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Slot-model baseline.
    Mip {
        #[command(subcommand)]
        command: MipCommand,
    },
}

#[derive(Subcommand)]
enum MipCommand {
    /// Build an instance from a system, workload and slot settings.
    Build {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the instance in LP format.
    Export {
        #[arg(long)]
        instance: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the instance exactly.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Per-workflow slowdowns of the optimal plan next to simulated runs.
    Compare {
        #[arg(long)]
        instance: PathBuf,
        /// Solved when absent.
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Outcomes CSV of a run on the same workload; the built-in policies are simulated when absent.
        #[arg(long)]
        outcomes: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        limits: LimitArgs,
    },
}

#[derive(clap::Args)]
struct LimitArgs {
    #[arg(long, default_value_t = SolveLimits::default().max_tasks)]
    max_tasks: usize,
    #[arg(long, default_value_t = SolveLimits::default().max_resources)]
    max_resources: usize,
    #[arg(long, default_value_t = SolveLimits::default().max_slots)]
    max_slots: u32,
    #[arg(long, default_value_t = SolveLimits::default().max_nodes)]
    max_nodes: u64,
}

impl LimitArgs {
    fn limits(&self) -> SolveLimits {
        SolveLimits {
            max_tasks: self.max_tasks,
            max_resources: self.max_resources,
            max_slots: self.max_slots,
            max_nodes: self.max_nodes,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MipBuildSpec {
    system: SystemConfig,
    workload: WorkloadSource,
    settings: SlotSettings,
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn run_stem(label: &str, r: u32) -> String {
    let clean: String = label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' }).collect();
    format!("{clean}-r{r}")
}

fn cmd_run(config: &Path, seed: Option<u64>, jobs: usize, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let seed = seed.unwrap_or(cfg.seed);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let label = cfg.policy.label();
    let results: Vec<Result<Vec<PathBuf>>> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| {
                let trace = cfg.run_replication(seed, r).with_context(|| format!("replication {r}"))?;
                Ok(write_outputs(out, &run_stem(&label, r), &trace)?)
            })
            .collect()
    });
    for r in results {
        for p in r? {
            println!("{}", p.display());
        }
    }
    Ok(())
}

fn set_path(out: &Path, i: usize) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}-{i}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{i}"),
    };
    out.with_file_name(name)
}

fn cmd_gen(spec: &Path, out: &Path) -> Result<()> {
    let spec: GeneratorSpec = read_json(spec)?;
    let sets = spec.generate_sets()?;
    let single = sets.len() == 1;
    for (i, w) in sets.iter().enumerate() {
        let path = if single { out.to_path_buf() } else { set_path(out, i + 1) };
        let mut text = serde_json::to_string(w)?;
        text.push('\n');
        write_text(Some(&path), &text)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn load_instance(path: &Path) -> Result<MipInstance> {
    let inst: MipInstance = read_json(path)?;
    inst.validate()?;
    Ok(inst)
}

fn solve(inst: &MipInstance, limits: &LimitArgs) -> Result<MipSolution> {
    let (sol, stats) = solve_exact(inst, &limits.limits())?;
    eprintln!("profit {} after {} nodes", sol.profit, stats.nodes);
    let violations = check_solution(inst, &sol);
    if !violations.is_empty() {
        bail!("solver returned an infeasible schedule: {}", violations[0]);
    }
    Ok(sol)
}

/// Simulates `policy` on the instance workload with one user holding the instance budget.
fn simulate(inst: &MipInstance, policy: &PolicyConfig) -> Result<Vec<OutcomeRecord>> {
    let user = UserId(1);
    let users = [UserConfig { id: user, budget: inst.budget }];
    let mut p = policy.build()?;
    let trace = run(&inst.system(), &users, &inst.to_workload(user), p.as_mut(), 0)?;
    Ok(trace.outcomes)
}

#[derive(Serialize)]
struct CompareRow {
    source: String,
    workflow: u32,
    optimal_slowdown: f64,
    heuristic_slowdown: f64,
    optimal_profit: i64,
    heuristic_profit: i64,
}

fn cmd_compare(
    instance: &Path,
    solution: Option<&Path>,
    outcomes: Option<&Path>,
    out: Option<&Path>,
    limits: &LimitArgs,
) -> Result<()> {
    let inst = load_instance(instance)?;
    let sol = match solution {
        Some(p) => read_json::<MipSolution>(p)?,
        None => solve(&inst, limits)?,
    };
    let runs: Vec<(String, Vec<OutcomeRecord>)> = match outcomes {
        Some(p) => {
            let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            vec![(p.display().to_string(), read_outcomes(f)?)]
        }
        None => [
            PolicyConfig::pfa(PfaConfig::ma(10)),
            PolicyConfig::pfa(PfaConfig::ewma(0.7)),
            PolicyConfig::Plf,
            PolicyConfig::Scf,
        ]
        .iter()
        .map(|p| Ok((p.label(), simulate(&inst, p)?)))
        .collect::<Result<_>>()?,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for (source, outcomes) in &runs {
        let profit = realized_profit(&inst, outcomes)?;
        for pair in compare(&inst, &sol, outcomes)? {
            w.serialize(CompareRow {
                source: source.clone(),
                workflow: pair.workflow.0,
                optimal_slowdown: pair.optimal,
                heuristic_slowdown: pair.heuristic,
                optimal_profit: sol.profit,
                heuristic_profit: profit,
            })?;
        }
    }
    write_text(out, &String::from_utf8(w.into_inner()?)?)
}

fn cmd_mip(command: MipCommand) -> Result<()> {
    match command {
        MipCommand::Build { spec, out } => {
            let spec: MipBuildSpec = read_json(&spec)?;
            let workload = match &spec.workload {
                WorkloadSource::File(p) => read_json(p)?,
                WorkloadSource::Generate(g) => g.generate()?,
            };
            let inst = build_instance(&workload, &spec.system, &spec.settings)?;
            write_text(Some(&out), &to_json(&inst)?)
        }
        MipCommand::Export { instance, out } => write_text(out.as_deref(), &export_lp(&load_instance(&instance)?)?),
        MipCommand::Solve { instance, out, limits } => {
            let inst = load_instance(&instance)?;
            write_text(out.as_deref(), &to_json(&solve(&inst, &limits)?)?)
        }
        MipCommand::Compare { instance, solution, outcomes, out, limits } => {
            cmd_compare(&instance, solution.as_deref(), outcomes.as_deref(), out.as_deref(), &limits)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, jobs, out } => cmd_run(&config, seed, jobs, &out),
        Command::Gen { spec, out } => cmd_gen(&spec, &out),
        Command::Mip { command } => cmd_mip(command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<MipError>() {
                Some(MipError::LimitExceeded(_)) => ExitCode::from(EXIT_LIMIT),
                Some(MipError::Infeasible) => ExitCode::from(EXIT_INFEASIBLE),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
