//! Command-line harness: task generation, single-condition runs, the
//! learning phase, the full ablation matrix, and significance statistics.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hearth_core::arbitration::ArbitrationMode;
use hearth_core::backend::{
    DecisionBackend, DecodingParams, HttpTransport, OracleProfile, RemoteBackend,
};
use hearth_core::harness::{AblationConfig, Pipeline};
use hearth_core::memory::MemoryStore;
use hearth_core::prompt::ConditionFlags;
use hearth_core::stats::mcnemar_exact;
use hearth_core::taskgen::{
    generate_tasks, load_suite, proportional_counts, save_suite, uniform_counts,
};

#[derive(Parser)]
#[command(name = "hearth", version, about = "Knowledge-mediated agent harness for closed-world text environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a validated task suite (one JSON task per line).
    Gen(GenArgs),
    /// Run one condition over a suite, single-trial per task.
    Run(RunArgs),
    /// Accumulate episodic memory on a seen suite and freeze it.
    Learn(LearnArgs),
    /// Run the full factorial ablation plus arbitration-mode variants.
    Ablate(AblateArgs),
    /// Statistics utilities.
    Stats(StatsArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tasks per type (mutually exclusive with --total).
    #[arg(long, conflicts_with = "total")]
    per_type: Option<usize>,
    /// Total task count, split proportionally across types.
    #[arg(long)]
    total: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    suite: PathBuf,
    /// Experimental condition: A (baseline), B (rules-only),
    /// C (memory-only), D (full).
    #[arg(long, default_value = "D")]
    condition: String,
    /// Arbitration mode: none | soft | hard | both.
    #[arg(long, default_value = "both")]
    arbitration: String,
    /// State-consistent filtering: on | off.
    #[arg(long, default_value = "on")]
    scf: String,
    /// Decision backend: scripted | remote.
    #[arg(long, default_value = "scripted")]
    backend: String,
    #[arg(long, default_value_t = 50)]
    max_steps: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Frozen memory store (JSONL) for memory-on conditions.
    #[arg(long)]
    memory: Option<PathBuf>,
    #[command(flatten)]
    remote: RemoteArgs,
}

#[derive(Args)]
struct RemoteArgs {
    /// Chat-completions endpoint URL (remote backend).
    #[arg(long)]
    endpoint: Option<String>,
    /// Model identifier (remote backend).
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "CHAT_API_KEY")]
    api_key_env: String,
    /// Override the profile's max_tokens decoding default.
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Request/response log file (API key is never written).
    #[arg(long)]
    log_file: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long, default_value_t = 1)]
    rounds: u32,
    #[arg(long)]
    memory_out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    max_steps: u32,
}

#[derive(Args)]
struct AblateArgs {
    /// Evaluation (unseen) suite.
    #[arg(long)]
    suite: PathBuf,
    /// Seen suite for the learning phase; generated from the seed with the
    /// evaluation suite's size when omitted.
    #[arg(long)]
    learn_suite: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    rounds: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    max_steps: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[command(subcommand)]
    command: StatsCommand,
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Exact two-sided McNemar test on discordant pair counts.
    Mcnemar {
        #[arg(long)]
        n01: u64,
        #[arg(long)]
        n10: u64,
    },
}

fn parse_flags(condition: &str, arbitration: &str, scf: &str) -> Result<ConditionFlags> {
    let mut flags = ConditionFlags::from_condition_label(condition)
        .with_context(|| format!("unknown condition {condition:?}; expected A, B, C, or D"))?;
    flags.arbitration_mode = ArbitrationMode::parse(arbitration)
        .with_context(|| format!("unknown arbitration mode {arbitration:?}"))?;
    flags.scf_on = match scf {
        "on" => true,
        "off" => false,
        other => bail!("unknown --scf value {other:?}; expected on or off"),
    };
    Ok(flags)
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let profile = hearth_core::profile::EnvironmentProfile::household();
    let counts = match (args.per_type, args.total) {
        (Some(n), _) => uniform_counts(n),
        (None, Some(total)) => proportional_counts(total),
        (None, None) => proportional_counts(60),
    };
    let tasks = generate_tasks(args.seed, &counts, &profile)?;
    save_suite(&tasks, &args.out)?;
    let mut per_type: BTreeMap<&str, usize> = BTreeMap::new();
    for task in &tasks {
        *per_type.entry(task.task_type.label()).or_default() += 1;
    }
    println!("wrote {} tasks to {}", tasks.len(), args.out.display());
    for (label, n) in per_type {
        println!("  {label}: {n}");
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let pipeline = Pipeline::household();
    let flags = parse_flags(&args.condition, &args.arbitration, &args.scf)?;
    let tasks = load_suite(&args.suite)?;
    if tasks.is_empty() {
        bail!("suite {} contains no tasks", args.suite.display());
    }
    let mut store = match &args.memory {
        Some(path) => MemoryStore::load(path)
            .with_context(|| format!("loading memory store {}", path.display()))?,
        None => MemoryStore::new(),
    };
    store.freeze();
    fs::create_dir_all(&args.out)?;

    let mut condition_name = args.condition.clone();
    if args.arbitration != "both" {
        condition_name.push_str(&format!("/arb={}", args.arbitration));
    }
    if args.scf == "off" {
        condition_name.push_str("/scf=off");
    }

    let remote_backend: Option<RemoteBackend<HttpTransport>> = match args.backend.as_str() {
        "scripted" => None,
        "remote" => {
            let endpoint = args
                .remote
                .endpoint
                .as_deref()
                .context("--endpoint is required with --backend remote")?;
            let model = args
                .remote
                .model
                .as_deref()
                .context("--model is required with --backend remote")?;
            let api_key = std::env::var(&args.remote.api_key_env).ok();
            let decoding = DecodingParams {
                temperature: 0.0,
                max_tokens: args.remote.max_tokens.unwrap_or(pipeline.profile.max_tokens()),
            };
            let mut backend = RemoteBackend::new(endpoint, model, api_key, HttpTransport::new(60))
                .with_decoding(decoding);
            if let Some(log) = &args.remote.log_file {
                backend = backend.with_log(log.clone())?;
            }
            Some(backend)
        }
        other => bail!("unknown backend {other:?}; expected scripted or remote"),
    };

    let mut episodes_out = String::new();
    let mut episodes = Vec::new();
    for (i, task) in tasks.iter().enumerate() {
        let episode = match &remote_backend {
            Some(backend) => pipeline.run_episode(
                task,
                &flags,
                &condition_name,
                backend,
                &store,
                args.max_steps,
            ),
            None => {
                let seed = args.seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(i as u64);
                let oracle = pipeline.scripted_oracle(OracleProfile::default().with_seed(seed));
                pipeline.run_episode(
                    task,
                    &flags,
                    &condition_name,
                    &oracle as &dyn DecisionBackend,
                    &store,
                    args.max_steps,
                )
            }
        };
        episodes_out.push_str(&serde_json::to_string(&episode)?);
        episodes_out.push('\n');
        println!(
            "{} [{}] {} in {} steps",
            task.id,
            task.task_type.label(),
            episode.outcome.label(),
            episode.steps_used
        );
        episodes.push((task.task_type, episode));
    }
    fs::write(args.out.join("episodes.jsonl"), episodes_out)?;

    let successes = episodes.iter().filter(|(_, e)| e.succeeded()).count();
    let summary = serde_json::json!({
        "condition": condition_name,
        "n": episodes.len(),
        "successes": successes,
        "success_rate": successes as f64 / episodes.len() as f64,
    });
    fs::write(args.out.join("report.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "{}: {}/{} succeeded ({:.1}%)",
        condition_name,
        successes,
        episodes.len(),
        successes as f64 / episodes.len() as f64 * 100.0
    );
    Ok(())
}

fn cmd_learn(args: LearnArgs) -> Result<()> {
    let pipeline = Pipeline::household();
    let tasks = load_suite(&args.suite)?;
    let mut store = MemoryStore::new();
    let snapshots = pipeline.learning_phase(
        &tasks,
        args.rounds,
        &mut store,
        args.seed,
        &OracleProfile::default(),
        args.max_steps,
    )?;
    store.save(&args.memory_out)?;
    for (i, counts) in snapshots.iter().enumerate() {
        println!(
            "round {}: {} entries (success {}, failure {}, schema {}, critical {})",
            i + 1,
            counts.total(),
            counts.success,
            counts.failure,
            counts.schema,
            counts.critical_failure
        );
    }
    println!("frozen store written to {}", args.memory_out.display());
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let pipeline = Pipeline::household();
    let eval = load_suite(&args.suite)?;
    if eval.is_empty() {
        bail!("suite {} contains no tasks", args.suite.display());
    }
    let seen = match &args.learn_suite {
        Some(path) => load_suite(path)?,
        None => generate_tasks(
            args.seed.wrapping_add(1),
            &proportional_counts(eval.len()),
            &pipeline.profile,
        )?,
    };
    let config = AblationConfig {
        seed: args.seed,
        max_steps: args.max_steps,
        rounds: args.rounds,
        ..Default::default()
    };
    let (report, store) = pipeline.run_ablation(&eval, &seen, &config)?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("report.json"), report.to_json())?;
    fs::write(args.out.join("report.txt"), report.render_text())?;
    store.save(&args.out.join("memory.jsonl"))?;
    print!("{}", report.render_text());
    println!("reports written to {}", args.out.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Run(args) => cmd_run(args),
        Command::Learn(args) => cmd_learn(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Stats(args) => match args.command {
            StatsCommand::Mcnemar { n01, n10 } => {
                println!("n01 = {n01}, n10 = {n10}, p = {:.4}", mcnemar_exact(n01, n10));
                Ok(())
            }
        },
    }
}
