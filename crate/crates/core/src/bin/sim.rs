//! Command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use icnsim::config::{load_scenario, MacMode, ScenarioConfig};
use icnsim::metrics::{emit_results, summarize, trace_jsonl, write_file};
use icnsim::sim::{adaptation_csv, plan, run_repetitions, Repetitions};
use icnsim::tsch::{check_collision_free, schedule_to_csv};
use icnsim::urt::{distribution_csv, monte_carlo_distribution, subtree_size_distribution, tail_probability};
use icnsim::SimError;

#[derive(Parser)]
#[command(name = "sim", about = "ICN over TSCH/CSMA simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write results, traces and the effective config.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// First seed; repetitions use consecutive seeds.
        #[arg(long)]
        seed: Option<u64>,
        /// `auto` (until the running mean settles) or a run count.
        #[arg(long, default_value = "1")]
        repetitions: Repetitions,
        /// Override the scenario's MAC mode.
        #[arg(long)]
        mode: Option<MacMode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the static schedule and verify it is conflict-free.
    CheckSchedule {
        #[arg(long)]
        scenario: PathBuf,
        /// Also write the schedule as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Descendant-count distribution of random recursive trees.
    AnalyzeUrt {
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 10_000)]
        iters: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Label rows by subtree size (descendants + 1).
        #[arg(long)]
        node_inclusive: bool,
        /// Leave the root out of the node mixture.
        #[arg(long)]
        exclude_root: bool,
    },
    /// Print the routing tree as `node,parent,rank`.
    DumpDodag {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn run(
    scenario: &Path,
    seed: Option<u64>,
    reps: Repetitions,
    mode: Option<MacMode>,
    out: &Path,
) -> Result<(), SimError> {
    let mut cfg = load_scenario(scenario)?;
    if let Some(m) = mode {
        cfg = cfg.with_mode(m);
    }
    let first_seed = seed.unwrap_or(cfg.seed);
    let runs = run_repetitions(&cfg, first_seed, reps)?;
    std::fs::create_dir_all(out).map_err(|e| SimError::io(out.display().to_string(), e))?;
    write_file(&out.join("effective_config.toml"), &cfg.to_toml())?;
    let records: Vec<_> = runs.iter().map(|r| r.record.clone()).collect();
    let summary = summarize(&records);
    emit_results(&records, &summary, out)?;
    for r in &runs {
        if cfg.limits.trace {
            write_file(
                &out.join(format!("trace-seed{}.jsonl", r.record.seed)),
                &trace_jsonl(&r.trace),
            )?;
        }
        if cfg.mode == MacMode::Adinr {
            write_file(
                &out.join(format!("adaptation-seed{}.csv", r.record.seed)),
                &adaptation_csv(&r.adaptation_log),
            )?;
        }
    }
    let ttc = summary
        .ttc_s
        .map_or("censored".to_string(), |s| format!("{:.3} s (sd {:.3})", s.mean, s.std));
    println!(
        "{} x{}: ttc {ttc}, pdr {:.4}, e2e retx {:.1}, dups {:.1}, mac retx {:.1}",
        summary.config, summary.runs, summary.pdr.mean, summary.e2e_retx.mean, summary.dups.mean, summary.mac_retx.mean
    );
    Ok(())
}

fn check_schedule(scenario: &Path, out: Option<&Path>) -> Result<bool, SimError> {
    let cfg = load_scenario(scenario)?;
    let (graph, _, schedules) = plan(&cfg)?;
    if let Some(p) = out {
        write_file(p, &schedule_to_csv(&schedules))?;
    }
    let violations = check_collision_free(&schedules, &graph);
    let cells: usize = schedules.values().map(|m| m.len()).sum();
    if violations.is_empty() {
        println!("collision-free: {cells} cells over {} nodes", schedules.len());
        return Ok(true);
    }
    for v in &violations {
        println!("{v}");
    }
    Ok(false)
}

fn analyze_urt(
    n: u64,
    iters: u64,
    seed: u64,
    out: &Path,
    node_inclusive: bool,
    exclude_root: bool,
) -> Result<(), SimError> {
    let analytic = subtree_size_distribution(n, !exclude_root)?;
    let empirical = monte_carlo_distribution(n as usize, iters, seed, !exclude_root);
    write_file(out, &distribution_csv(&analytic, &empirical, node_inclusive))?;
    println!(
        "N={n}: P(descendants > 7) = {:.6}, P(subtree size > 7) = {:.6}, empirical {:.6}",
        tail_probability(&analytic, 7),
        tail_probability(&analytic, 6),
        tail_probability(&empirical, 7)
    );
    Ok(())
}

fn dump_dodag(scenario: &Path) -> Result<(), SimError> {
    let cfg: ScenarioConfig = load_scenario(scenario)?;
    let (_, dodag, _) = plan(&cfg)?;
    print!("{}", dodag.to_csv());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            repetitions,
            mode,
            out,
        } => run(&scenario, seed, repetitions, mode, &out).map(|_| true),
        Command::CheckSchedule { scenario, out } => check_schedule(&scenario, out.as_deref()),
        Command::AnalyzeUrt {
            n,
            iters,
            seed,
            out,
            node_inclusive,
            exclude_root,
        } => analyze_urt(n, iters, seed, &out, node_inclusive, exclude_root).map(|_| true),
        Command::DumpDodag { scenario } => dump_dodag(&scenario).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
