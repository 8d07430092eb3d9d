//! Command-line driver: learning runs, episode replay, pruning, rendering,
//! and batch evaluation. Exit codes are scriptable: 0 when the goal was
//! reached (or the command simply succeeded), 1 when a budget ran out short
//! of the goal, 2 for usage, parse, or I/O errors.
//!
//! Every learning run writes a manifest next to the tree; re-running
//! `learn --from-manifest` reproduces the `.bt` byte for byte.

use crate::bloat::prune_on_level;
use crate::bt::BehaviorTree;
use crate::env::{load_level, render_ascii, run_episode, run_episode_observed, Level};
use crate::genetics::SelectionMethod;
use crate::learning::{learn, LearnerConfig};
use crate::text;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

pub const BT_HEADER: &str = "; bt-forge v1";

#[derive(Parser)]
#[command(name = "btforge", version, about = "Behavior-tree synthesis for grid platformers")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a behavior tree for a level
    Learn(LearnArgs),
    /// Run a behavior tree on a level and report the outcome
    Run(RunArgs),
    /// Apply the anti-bloat pass to a tree
    Simplify(SimplifyArgs),
    /// Render a tree as DOT or an ASCII outline
    Render(RenderArgs),
    /// Evaluate a tree across a directory of levels and several seeds
    Eval(EvalArgs),
}

#[derive(Args)]
struct LearnArgs {
    /// Level file (required unless --from-manifest is given)
    #[arg(long)]
    level: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Moving-window length in ticks
    #[arg(long, default_value_t = 60)]
    tau: u32,
    #[arg(long = "pop-size", default_value_t = 24)]
    pop_size: usize,
    #[arg(long, default_value_t = 16)]
    generations: u32,
    #[arg(long, value_enum, default_value_t = SelectionFlag::Rank)]
    selection: SelectionFlag,
    /// Rank-space survival probability of the top individual, in (0,1)
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pc: f64,
    /// Output path for the learned tree
    #[arg(long)]
    out: PathBuf,
    /// Skip the final anti-bloat pass
    #[arg(long = "no-prune")]
    no_prune: bool,
    /// Mutation swaps actions only with actions, conditions with conditions
    #[arg(long = "strict-mutation")]
    strict_mutation: bool,
    /// Re-run a previous learning run from its manifest
    #[arg(long = "from-manifest")]
    from_manifest: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    bt: PathBuf,
    #[arg(long)]
    level: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write a JSON-lines trace ({"t","a","g"} per tick)
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Dump an ASCII frame per tick
    #[arg(long)]
    ascii: bool,
}

#[derive(Args)]
struct SimplifyArgs {
    #[arg(long)]
    bt: PathBuf,
    #[arg(long)]
    level: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    bt: PathBuf,
    #[arg(long, value_enum)]
    format: RenderFormat,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    bt: PathBuf,
    /// Directory of level files
    #[arg(long)]
    levels: PathBuf,
    /// Number of seeds (0..n) per level
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SelectionFlag {
    Naive,
    Rank,
    Diversity,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RenderFormat {
    Dot,
    Ascii,
}

/// Everything needed to reproduce a learning run byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: LearnerConfig,
    pub level_path: String,
    pub seed: u64,
    pub outputs: ManifestOutputs,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestOutputs {
    pub bt: String,
    pub phase_log: String,
    pub manifest: String,
    pub prune_report: Option<String>,
}

// ---- logging -------------------------------------------------------------------

fn log_level() -> u8 {
    static LEVEL: OnceLock<u8> = OnceLock::new();
    *LEVEL.get_or_init(|| match std::env::var("BTFORGE_LOG").as_deref() {
        Ok("quiet") => 0,
        Ok("debug") => 2,
        _ => 1,
    })
}

fn info(message: impl AsRef<str>) {
    if log_level() >= 1 {
        eprintln!("{}", message.as_ref());
    }
}

fn debug(message: impl AsRef<str>) {
    if log_level() >= 2 {
        eprintln!("{}", message.as_ref());
    }
}

// ---- entry ---------------------------------------------------------------------

/// Parse arguments from the process environment and execute. clap itself
/// exits with code 2 on usage errors.
pub fn main() -> i32 {
    execute(Cli::parse())
}

pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Learn(args) => cmd_learn(args),
        Command::Run(args) => cmd_run(args),
        Command::Simplify(args) => cmd_simplify(args),
        Command::Render(args) => cmd_render(args),
        Command::Eval(args) => cmd_eval(args),
    }
}

fn read_level(path: &Path) -> Result<Arc<Level>, i32> {
    let source = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read level {}: {e}", path.display());
        2
    })?;
    load_level(&source).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        2
    })
}

fn read_tree(path: &Path) -> Result<BehaviorTree, i32> {
    let source = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read tree {}: {e}", path.display());
        2
    })?;
    text::parse(&source).map_err(|e| {
        eprintln!("error: {}:{e}", path.display());
        2
    })
}

fn write_file(path: &Path, content: &str) -> Result<(), i32> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            let _ = std::fs::create_dir_all(parent);
        }
    }
    std::fs::write(path, content).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        2
    })
}

fn tree_file_content(tree: &BehaviorTree) -> String {
    format!("{BT_HEADER}\n{}\n", text::print(tree))
}

// ---- learn ---------------------------------------------------------------------

fn cmd_learn(args: LearnArgs) -> i32 {
    match learn_inner(args) {
        Ok(code) => code,
        Err(code) => code,
    }
}

fn learn_inner(args: LearnArgs) -> Result<i32, i32> {
    let (config, level_path) = if let Some(manifest_path) = &args.from_manifest {
        let source = std::fs::read_to_string(manifest_path).map_err(|e| {
            eprintln!("error: cannot read manifest {}: {e}", manifest_path.display());
            2
        })?;
        let manifest: RunManifest = serde_json::from_str(&source).map_err(|e| {
            eprintln!("error: bad manifest {}: {e}", manifest_path.display());
            2
        })?;
        (manifest.config, PathBuf::from(manifest.level_path))
    } else {
        if !(0.0 < args.pc && args.pc < 1.0) {
            eprintln!("error: --pc must lie strictly between 0 and 1 (got {})", args.pc);
            return Err(2);
        }
        let Some(level) = args.level.clone() else {
            eprintln!("error: --level is required unless --from-manifest is given");
            return Err(2);
        };
        let selection = match args.selection {
            SelectionFlag::Naive => SelectionMethod::Naive,
            SelectionFlag::Rank => SelectionMethod::RankSpace {
                highest_rank_probability: args.pc,
            },
            SelectionFlag::Diversity => SelectionMethod::DiversityRank,
        };
        let mut config = LearnerConfig {
            tau: args.tau,
            rng_seed: args.seed,
            prune: !args.no_prune,
            ..LearnerConfig::default()
        };
        config.gp.population_size = args.pop_size;
        config.gp.max_generations = args.generations;
        config.gp.selection = selection;
        config.gp.strict_mutation = args.strict_mutation;
        config.gp.rng_seed = args.seed;
        (config, level)
    };

    let level = read_level(&level_path)?;
    info(format!(
        "learning on {} (seed {}, tau {})",
        level_path.display(),
        config.rng_seed,
        config.tau
    ));

    let started = Instant::now();
    let outcome = learn(&level, &config);
    let elapsed = started.elapsed().as_secs_f64();

    let bt_path = args.out.clone();
    let phase_path = bt_path.with_extension("phases.jsonl");
    let manifest_path = bt_path.with_extension("manifest.json");
    let prune_path = outcome
        .prune_report
        .as_ref()
        .map(|_| bt_path.with_extension("prune.json"));

    write_file(&bt_path, &tree_file_content(&outcome.tree))?;

    let mut phase_log = String::new();
    for record in &outcome.phases {
        phase_log.push_str(&serde_json::to_string(record).expect("records serialize"));
        phase_log.push('\n');
        debug(format!(
            "phase {} ({:?}): gamma {:.4}, {} nodes",
            record.phase, record.method, record.gamma, record.nodes
        ));
    }
    write_file(&phase_path, &phase_log)?;

    if let (Some(path), Some(report)) = (&prune_path, &outcome.prune_report) {
        write_file(path, &serde_json::to_string_pretty(report).expect("report serializes"))?;
    }

    let manifest = RunManifest {
        config,
        level_path: level_path.display().to_string(),
        seed: outcome_seed(&args),
        outputs: ManifestOutputs {
            bt: bt_path.display().to_string(),
            phase_log: phase_path.display().to_string(),
            manifest: manifest_path.display().to_string(),
            prune_report: prune_path.as_ref().map(|p| p.display().to_string()),
        },
        wall_clock_seconds: elapsed,
    };
    write_file(
        &manifest_path,
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;

    info(format!(
        "final gamma {:.4} ({} nodes, {} phases, {:.2}s) -> {}",
        outcome.gamma,
        outcome.tree.node_count(),
        outcome.phases.len(),
        elapsed,
        bt_path.display()
    ));
    Ok(if outcome.achieved_goal { 0 } else { 1 })
}

fn outcome_seed(args: &LearnArgs) -> u64 {
    args.seed
}

// ---- run -----------------------------------------------------------------------

fn cmd_run(args: RunArgs) -> i32 {
    let Ok(tree) = read_tree(&args.bt) else { return 2 };
    let Ok(level) = read_level(&args.level) else { return 2 };
    let weights = crate::env::FitnessWeights::default();

    let mut frames = String::new();
    let episode = run_episode_observed(&tree, &level, &weights, args.seed, |state| {
        if args.ascii {
            frames.push_str(&format!("tick {}\n{}\n", state.tick, render_ascii(state)));
        }
    });
    let episode = match episode {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if args.ascii {
        print!("{frames}");
    }

    if let Some(trace_path) = &args.trace {
        let mut out = String::new();
        for step in &episode.trace {
            let action = step
                .action
                .map(|a| format!("\"{}\"", a.name()))
                .unwrap_or_else(|| "null".to_string());
            out.push_str(&format!(
                "{{\"t\":{},\"a\":{},\"g\":{}}}\n",
                step.tick, action, step.gamma
            ));
        }
        if write_file(trace_path, &out).is_err() {
            return 2;
        }
    }

    let gamma = episode.gamma();
    println!(
        "gamma {:.6}  terminal {}  ticks {}",
        gamma,
        episode.final_state.terminal.name(),
        episode.final_state.tick
    );
    if gamma >= 1.0 {
        0
    } else {
        1
    }
}

// ---- simplify ------------------------------------------------------------------

fn cmd_simplify(args: SimplifyArgs) -> i32 {
    let Ok(tree) = read_tree(&args.bt) else { return 2 };
    let Ok(level) = read_level(&args.level) else { return 2 };
    let weights = crate::env::FitnessWeights::default();
    let (pruned, report) = prune_on_level(&tree, &level, &weights, args.seed);
    if write_file(&args.out, &tree_file_content(&pruned)).is_err() {
        return 2;
    }
    let report_path = args.out.with_extension("prune.json");
    if write_file(
        &report_path,
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )
    .is_err()
    {
        return 2;
    }
    println!(
        "nodes {} -> {}  fitness {:.6} -> {:.6}  removals {}",
        report.initial_nodes,
        report.final_nodes,
        report.initial_fitness,
        report.final_fitness,
        report.removed.len()
    );
    0
}

// ---- render --------------------------------------------------------------------

fn cmd_render(args: RenderArgs) -> i32 {
    let Ok(tree) = read_tree(&args.bt) else { return 2 };
    match args.format {
        RenderFormat::Dot => print!("{}", text::to_dot(&tree)),
        RenderFormat::Ascii => print!("{}", text::to_ascii_outline(&tree)),
    }
    0
}

// ---- eval ----------------------------------------------------------------------

#[derive(Serialize)]
struct EvalRow {
    level: String,
    seed: u64,
    gamma: f64,
    terminal: &'static str,
    ticks: u32,
}

fn cmd_eval(args: EvalArgs) -> i32 {
    let Ok(tree) = read_tree(&args.bt) else { return 2 };
    let entries = match std::fs::read_dir(&args.levels) {
        Ok(entries) => entries,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.levels.display());
            return 2;
        }
    };
    let mut level_paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    level_paths.sort();
    if level_paths.is_empty() {
        eprintln!("error: no .txt levels in {}", args.levels.display());
        return 2;
    }

    let weights = crate::env::FitnessWeights::default();
    let mut rows = Vec::new();
    for path in &level_paths {
        let Ok(level) = read_level(path) else { return 2 };
        for seed in 0..args.seeds.max(1) {
            let episode = match run_episode(&tree, &level, &weights, seed) {
                Ok(e) => e,
                Err(e) => {
                    eprintln!("error: {e}");
                    return 2;
                }
            };
            rows.push(EvalRow {
                level: path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                seed,
                gamma: episode.gamma(),
                terminal: episode.final_state.terminal.name(),
                ticks: episode.final_state.tick,
            });
        }
    }

    let gammas: Vec<f64> = rows.iter().map(|r| r.gamma).collect();
    let mean = gammas.iter().sum::<f64>() / gammas.len() as f64;
    let min = gammas.iter().cloned().fold(f64::INFINITY, f64::min);

    if args.json {
        let summary = serde_json::json!({ "rows": rows, "mean": mean, "min": min });
        println!("{}", serde_json::to_string_pretty(&summary).expect("serializes"));
    } else {
        let mut stdout = std::io::stdout().lock();
        let _ = writeln!(stdout, "{:<20} {:>6} {:>10} {:>15} {:>7}", "level", "seed", "gamma", "terminal", "ticks");
        for row in &rows {
            let _ = writeln!(
                stdout,
                "{:<20} {:>6} {:>10.6} {:>15} {:>7}",
                row.level, row.seed, row.gamma, row.terminal, row.ticks
            );
        }
        let _ = writeln!(stdout, "mean {mean:.6}  min {min:.6}");
    }
    if min >= 1.0 {
        0
    } else {
        1
    }
}
