//! Command-line entry point for the self-play training and evaluation
//! pipeline, running on the built-in arithmetic domain.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use spc::config::RunConfig;
use spc::core::{canonicalize_answer, Role};
use spc::evalbench::{evaluate_critic, probes_from_labeled};
use spc::pipeline::{
    default_schedule, init_sft, matchup_report, run_schedule, validate_plans, SnapshotRegistry,
};
use spc::roles::CriticRole;
use spc::search::{guided_solve, self_consistent_solve, unguided_solve};
use spc::toyworld::gen::{labeled_instances, problem_pool};
use spc::toyworld::{OracleCritic, ToyCritic, ToySolver};
use spc::util::{derive_seed, write_jsonl};
use spc::Result;

#[derive(Parser)]
#[command(name = "spc", version, about = "Adversarial self-play for step-level critics")]
struct Cli {
    /// Path to a TOML run configuration; defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the initial generator and critic checkpoints from scratch.
    InitSft,
    /// Play the two-round evolution schedule, training new versions.
    RunRounds {
        /// Print the schedule without executing it.
        #[arg(long)]
        dry_run: bool,
    },
    /// Pit one generator version against one critic version, no training.
    Matchup {
        #[arg(long)]
        sneaky: String,
        #[arg(long)]
        critic: String,
        #[arg(long, default_value_t = 64)]
        problems: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Compare critic-guided search against the unguided solver.
    Search {
        /// Critic version from the registry, or `oracle`.
        #[arg(long, default_value = "oracle")]
        critic: String,
        #[arg(long, default_value_t = 50)]
        problems: usize,
        /// Per-step error rate of the solver under test.
        #[arg(long, default_value_t = 0.3)]
        error_rate: f64,
        /// Also run self-consistency voting over repeated guided runs.
        #[arg(long)]
        sc: bool,
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
    /// Measure critic recall on labeled correct and incorrect steps.
    Eval {
        /// Critic version from the registry, or `oracle`.
        #[arg(long)]
        critic: String,
        #[arg(long, default_value_t = 400)]
        probes: usize,
        #[arg(long, default_value_t = 13)]
        seed: u64,
    },
    /// Summarize completed rounds from the output directory.
    Report,
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn load_critic(cfg: &RunConfig, version: &str) -> Result<Box<dyn CriticRole>> {
    if version == "oracle" {
        return Ok(Box::new(OracleCritic));
    }
    let registry = SnapshotRegistry::new(cfg.registry_dir())?;
    let snap = registry.load(Role::Critic, version)?;
    Ok(Box::new(ToyCritic::from_snapshot(&snap, true)?))
}

fn cmd_init_sft(cfg: &RunConfig) -> Result<()> {
    cfg.write_resolved()?;
    let registry = SnapshotRegistry::new(cfg.registry_dir())?;
    let (sneaky_report, critic_report) = init_sft(&cfg.pipeline, &registry)?;
    println!(
        "initialized s0 ({} samples) and c0 ({} samples) in {}",
        sneaky_report.samples,
        critic_report.samples,
        cfg.registry_dir().display()
    );
    Ok(())
}

fn cmd_run_rounds(cfg: &RunConfig, dry_run: bool) -> Result<()> {
    let registry = SnapshotRegistry::new(cfg.registry_dir())?;
    let plans = default_schedule();
    if dry_run {
        validate_plans(&plans, &registry)?;
        println!("{}", serde_json::to_string_pretty(&plans)?);
        return Ok(());
    }
    cfg.write_resolved()?;
    let summaries = run_schedule(&plans, &cfg.pipeline, &cfg.rounds_dir(), &registry)?;
    for s in &summaries {
        println!(
            "round {}: {} vs {} | records {} | sneaky win {:.1}% | critic acc {:.1}% | errors {} | trained {}",
            s.round_index,
            s.sneaky_version,
            s.critic_version,
            s.game.records,
            100.0 * s.game.sneaky_win_rate,
            100.0 * s.game.critic_accuracy,
            s.game.errors,
            s.trained
                .iter()
                .map(|t| t.version.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    Ok(())
}

fn cmd_matchup(cfg: &RunConfig, sneaky: &str, critic: &str, problems: usize, seed: u64) -> Result<()> {
    let registry = SnapshotRegistry::new(cfg.registry_dir())?;
    let report = matchup_report(&registry, sneaky, critic, &cfg.pipeline, problems, seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_search(
    cfg: &RunConfig,
    critic_version: &str,
    problems: usize,
    error_rate: f64,
    sc: bool,
    seed: u64,
) -> Result<()> {
    let critic = load_critic(cfg, critic_version)?;
    let solver = ToySolver::with_error_rate(error_rate, cfg.pipeline.solver_recheck_prob);
    let pool = problem_pool(
        problems,
        derive_seed(seed, &[1]),
        cfg.pipeline.difficulty_lo,
        cfg.pipeline.difficulty_hi,
        "search",
    )?;
    let mut guided_hits = 0usize;
    let mut unguided_hits = 0usize;
    let mut sc_hits = 0usize;
    let mut failures = 0usize;
    let mut traces = Vec::new();
    for (i, problem) in pool.iter().enumerate() {
        let p_seed = derive_seed(seed, &[2, i as u64]);
        let gold = canonicalize_answer(&problem.gold_answer);
        match guided_solve(problem, &solver, critic.as_ref(), &cfg.search, p_seed) {
            Ok((answer, trace)) => {
                if answer == gold {
                    guided_hits += 1;
                }
                traces.push(trace);
            }
            Err(_) => failures += 1,
        }
        match unguided_solve(problem, &solver, &cfg.search, derive_seed(p_seed, &[1])) {
            Ok(answer) => {
                if canonicalize_answer(&answer) == gold {
                    unguided_hits += 1;
                }
            }
            Err(_) => failures += 1,
        }
        if sc {
            match self_consistent_solve(
                problem,
                &solver,
                critic.as_ref(),
                &cfg.search,
                derive_seed(p_seed, &[2]),
            ) {
                Ok((answer, _)) => {
                    if answer == gold {
                        sc_hits += 1;
                    }
                }
                Err(_) => failures += 1,
            }
        }
    }
    let dir = cfg.output_dir.join("search");
    write_jsonl(&dir.join("traces.jsonl"), &traces)?;
    let pct = |n: usize| 100.0 * n as f64 / problems.max(1) as f64;
    println!(
        "problems {problems} | solver error rate {error_rate} | critic {critic_version}"
    );
    println!("unguided solve rate: {:.1}%", pct(unguided_hits));
    println!("guided solve rate:   {:.1}%", pct(guided_hits));
    if sc {
        println!("self-consistent:     {:.1}%", pct(sc_hits));
    }
    if failures > 0 {
        println!("failed runs: {failures}");
    }
    println!("traces written to {}", dir.join("traces.jsonl").display());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, critic_version: &str, probes: usize, seed: u64) -> Result<()> {
    let critic = load_critic(cfg, critic_version)?;
    let instances = labeled_instances(
        probes,
        derive_seed(seed, &[1]),
        cfg.pipeline.difficulty_lo,
        cfg.pipeline.difficulty_hi,
        0.5,
    )?;
    let probe_records = probes_from_labeled(&instances);
    let report = evaluate_critic(&probe_records, critic.as_ref(), derive_seed(seed, &[2]));
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let rounds_dir = cfg.rounds_dir();
    let mut found = 0usize;
    for index in 1.. {
        let path = rounds_dir.join(format!("round{index}")).join("report.json");
        if !path.is_file() {
            break;
        }
        let summary: spc::pipeline::RoundSummary = spc::util::read_json(&path)?;
        found += 1;
        println!(
            "round {}: {} vs {} | invalid {} | detected {} | fooled {} | critic acc {:.1}%",
            summary.round_index,
            summary.sneaky_version,
            summary.critic_version,
            summary.game.outcome_counts["invalid_attack"],
            summary.game.outcome_counts["detected_by_critic"],
            summary.game.outcome_counts["fooled_critic"],
            100.0 * summary.game.critic_accuracy,
        );
        for t in &summary.trained {
            println!(
                "  trained {} ({:?}, {} samples)",
                t.version, t.role, t.samples
            );
        }
    }
    if found == 0 {
        println!("no completed rounds under {}", rounds_dir.display());
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = load_config(&cli.config).and_then(|cfg| match &cli.command {
        Command::InitSft => cmd_init_sft(&cfg),
        Command::RunRounds { dry_run } => cmd_run_rounds(&cfg, *dry_run),
        Command::Matchup {
            sneaky,
            critic,
            problems,
            seed,
        } => cmd_matchup(&cfg, sneaky, critic, *problems, *seed),
        Command::Search {
            critic,
            problems,
            error_rate,
            sc,
            seed,
        } => cmd_search(&cfg, critic, *problems, *error_rate, *sc, *seed),
        Command::Eval {
            critic,
            probes,
            seed,
        } => cmd_eval(&cfg, critic, *probes, *seed),
        Command::Report => cmd_report(&cfg),
    });
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
