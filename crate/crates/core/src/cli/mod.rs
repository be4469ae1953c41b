//! The `membot` command line: demo collection, pretraining, fine-tuning,
//! evaluation and robustness sweeps.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::agent::Agent;
use crate::checkpoint::Checkpoint;
use crate::config::Config;
use crate::envs::{collect_demos, make_task, read_demos, write_demos, Task};
use crate::error::{Error, Result};
use crate::eval::{
    emit_report, evaluate, parse_grid, reference_arithmetic_check, result_line, sweep, FailedCell,
    SweepEntry, RESULTS_HEADER,
};
use crate::finetune::run_finetuning;
use crate::pretrain::{DemoDataset, Pretrainer};
use crate::report::write_lines;
use crate::seed::derive_seed;
use crate::variant::Variant;

pub const CHECKPOINT_FILE: &str = "checkpoint.mbt";
pub const LOSS_FILE: &str = "loss.csv";
pub const TRAIN_FILE: &str = "train.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const THREADS_ENV: &str = "MEMBOT_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "membot",
    version,
    about = "Belief-encoder training and evaluation under observation dropout"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll out the scripted expert and write a JSONL demo file.
    Collect(CollectArgs),
    /// Behavior-cloning pretraining of the belief encoder.
    Pretrain(PretrainArgs),
    /// Off-policy fine-tuning under observation dropout.
    Finetune(FinetuneArgs),
    /// Evaluate one checkpoint at one observation probability.
    Evaluate(EvaluateArgs),
    /// Evaluate checkpoints over a grid of observation probabilities.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    #[arg(long)]
    pub task: String,
    #[arg(long, default_value_t = 60)]
    pub episodes: usize,
    #[arg(long, default_value_t = 40)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// One or more demo files; several tasks train one shared encoder.
    #[arg(long, num_args = 1.., required = true)]
    pub demos: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// ssm, lstm, lstm-partial10, lstm-norecon, memoryless-mlp or memoryless.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a pretraining checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Save the checkpoint every this many iterations.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Stop (with a resumable checkpoint) once this iteration is reached.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Pretrained checkpoint. Without it, `--variant` starts a fresh agent.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub p_obs: Option<f64>,
    /// Demo files for behavior-cloning anchoring.
    #[arg(long, num_args = 1..)]
    pub demos: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub task: String,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Number of evaluation seeds.
    #[arg(long, default_value_t = 3)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, num_args = 1..)]
    pub ckpts: Vec<PathBuf>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub p_grid: Option<String>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Number of evaluation seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Add the scripted expert as a reference row.
    #[arg(long)]
    pub expert: bool,
    /// Recompute the embedded reference degradation table and report the
    /// largest deviation.
    #[arg(long, alias = "check-paper-arithmetic")]
    pub check_reference_arithmetic: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect(a) => cmd_collect(&a),
        Command::Pretrain(a) => cmd_pretrain(&a),
        Command::Finetune(a) => cmd_finetune(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let c = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    c.validate()?;
    Ok(c)
}

/// Concatenates the episodes of several demo files.
pub fn load_demos(paths: &[PathBuf]) -> Result<DemoDataset> {
    let mut episodes = Vec::new();
    for p in paths {
        let (_, eps) = read_demos(p)?;
        episodes.extend(eps);
    }
    DemoDataset::from_episodes(episodes)
}

/// Seeds for `n` evaluation runs derived from the base seed.
pub fn eval_seeds(seed: u64, n: usize) -> Vec<u64> {
    (0..n as u64)
        .map(|i| derive_seed(seed, 0x5EED + i))
        .collect()
}

/// Worker threads for sweeps: `MEMBOT_THREADS` when set, else all cores.
pub fn sweep_threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::config(format!(
                "{THREADS_ENV} must be a positive integer, got '{v}'"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn cmd_collect(a: &CollectArgs) -> Result<()> {
    let task = make_task(&a.task, a.seed)?;
    if a.episodes == 0 {
        return Err(Error::config("--episodes must be at least 1"));
    }
    let episodes = collect_demos(&task, a.episodes, a.max_len, a.seed)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_demos(&a.out, &task, &episodes)?;
    let pairs: usize = episodes.iter().map(|e| e.len()).sum();
    println!(
        "{} episodes, {pairs} pairs -> {}",
        episodes.len(),
        a.out.display()
    );
    Ok(())
}

pub fn cmd_pretrain(a: &PretrainArgs) -> Result<()> {
    let variant: Option<Variant> = a.variant.as_deref().map(str::parse).transpose()?;
    if let Some(n) = a.checkpoint_every {
        if n == 0 {
            return Err(Error::config("--checkpoint-every must be positive"));
        }
    }
    let data = load_demos(&a.demos)?;
    let (mut p, config_text) = match &a.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let p = ck.pretrainer()?;
            if variant.is_some_and(|v| v != p.config.variant) {
                return Err(Error::config(format!(
                    "--variant disagrees with the checkpoint's {}",
                    p.config.variant.tag()
                )));
            }
            let pairs: usize = ck.parse("pretrain.data_pairs")?;
            if pairs != data.num_pairs() {
                return Err(Error::config(format!(
                    "checkpoint was trained on {pairs} demo pairs, the given demos hold {}",
                    data.num_pairs()
                )));
            }
            if a.config.is_some() {
                warn!("resuming: the checkpoint's configuration is used, --config is ignored");
            }
            (p, ck.get("config")?.to_string())
        }
        None => {
            let cfg = load_config(a.config.as_deref())?;
            let pc = cfg.pretrain_config(variant.unwrap_or(Variant::Lstm));
            (Pretrainer::new(&data, pc, a.seed)?, cfg.to_toml())
        }
    };
    fs::create_dir_all(&a.out)?;
    let ck_path = a.out.join(CHECKPOINT_FILE);
    let save = |p: &Pretrainer| -> Result<()> {
        let mut ck = Checkpoint::from_pretrainer(p, data.num_pairs());
        ck.set("config", &config_text);
        ck.save(&ck_path)
    };
    let stop = a.stop_after.unwrap_or(usize::MAX).min(p.config.iterations);
    let every = a.checkpoint_every.unwrap_or(usize::MAX);
    while p.iteration < stop {
        let next = (p.iteration / every + 1).saturating_mul(every).min(stop);
        p.run_until(&data, next)?;
        if p.iteration % every == 0 && p.iteration < stop {
            save(&p)?;
            info!("iteration {}: checkpoint saved", p.iteration);
        }
    }
    save(&p)?;
    p.curve.write_csv(&a.out.join(LOSS_FILE))?;
    fs::write(a.out.join(CONFIG_FILE), &config_text)?;
    let last = p.curve.rows.last();
    println!(
        "{} pretraining: iteration {}/{}, final loss {}",
        p.config.variant.tag(),
        p.iteration,
        p.config.iterations,
        last.map_or("n/a".to_string(), |r| format!("{:.6}", r.total))
    );
    Ok(())
}

fn finetune_agent(
    a: &FinetuneArgs,
    cfg: &Config,
    task: &Task,
    demos: Option<&DemoDataset>,
) -> Result<Agent> {
    let variant: Option<Variant> = a.variant.as_deref().map(str::parse).transpose()?;
    match (&a.ckpt, variant) {
        (Some(path), v) => {
            let agent = Checkpoint::load(path)?.agent()?;
            if let Some(v) = v.filter(|&v| v != agent.variant) {
                return Err(Error::config(format!(
                    "--variant {} disagrees with the checkpoint's {}",
                    v.tag(),
                    agent.variant.tag()
                )));
            }
            Ok(agent)
        }
        (None, Some(v)) => {
            let width = demos.map_or(task.obs_dim(), |d| d.obs_width.max(task.obs_dim()));
            let mut agent = Agent::new(v, width, task.action_dim(), cfg.dims(), a.seed)?;
            if let Some(d) = demos {
                agent.normalizers = d.normalizers.clone();
            }
            Ok(agent)
        }
        (None, None) => Err(Error::config("finetune needs --ckpt or --variant")),
    }
}

pub fn cmd_finetune(a: &FinetuneArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(p) = a.p_obs {
        cfg.p_obs = p;
    }
    cfg.validate()?;
    let task = make_task(&a.task, a.seed)?;
    let demos = if a.demos.is_empty() {
        None
    } else {
        Some(load_demos(&a.demos)?)
    };
    let agent = finetune_agent(a, &cfg, &task, demos.as_ref())?;
    let fc = cfg.finetune_config(task.kind());
    let out = run_finetuning(agent, &task, demos.as_ref(), &fc, a.seed)?;

    fs::create_dir_all(&a.out)?;
    let mut ck = Checkpoint::new();
    ck.set("kind", "finetune");
    ck.put_agent(&out.agent);
    ck.put_optimizers(&out.opt);
    ck.put_counters(&out.counters);
    ck.set("finetune.task", task.kind());
    ck.set("finetune.seed", a.seed);
    ck.set("config", cfg.to_toml());
    ck.save(&a.out.join(CHECKPOINT_FILE))?;
    out.curve.write_csv(&a.out.join(TRAIN_FILE))?;
    fs::write(a.out.join(CONFIG_FILE), cfg.to_toml())?;
    let c = out.counters;
    println!(
        "{} on {}: {} env steps, {} episodes, {} updates, {} BC updates",
        out.agent.variant.tag(),
        task.kind(),
        c.env_steps,
        c.episodes,
        c.joint_updates,
        c.bc_updates
    );
    if let Some(r) = out.curve.rows.last() {
        println!(
            "last eval: success {:.3}, return {:.3}",
            r.eval_success, r.eval_return
        );
    }
    Ok(())
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    if a.episodes == 0 || a.seeds == 0 {
        return Err(Error::config("--episodes and --seeds must be positive"));
    }
    let task = make_task(&a.task, a.seed)?;
    let agent = Checkpoint::load(&a.ckpt)?.agent()?;
    let r = evaluate(&agent, &task, a.p, a.episodes, &eval_seeds(a.seed, a.seeds))?;
    fs::create_dir_all(&a.out)?;
    write_lines(
        &a.out.join("results.csv"),
        &[RESULTS_HEADER.to_string(), result_line(&r)],
    )?;
    println!(
        "{} on {} at p={}: success {:.3} (std {:.3}), return {:.3}",
        r.method, r.task, r.p, r.success_rate, r.success_std, r.mean_return
    );
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    if a.check_reference_arithmetic {
        let (worst, n) = reference_arithmetic_check()?;
        println!("reference degradation check: {n} entries, max deviation {worst:.3} pp");
        if a.ckpts.is_empty() {
            return Ok(());
        }
    }
    if a.ckpts.is_empty() {
        return Err(Error::config("--ckpts needs at least one checkpoint"));
    }
    let (task_name, out) = match (&a.task, &a.out) {
        (Some(t), Some(o)) => (t, o),
        _ => return Err(Error::config("sweep needs --task and --out")),
    };
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(g) = &a.p_grid {
        cfg.p_grid = g.clone();
    }
    if let Some(n) = a.episodes {
        cfg.sweep_episodes = n;
    }
    if let Some(n) = a.seeds {
        cfg.sweep_seeds = n;
    }
    cfg.validate()?;
    let grid = parse_grid(&cfg.p_grid)?;
    let task = make_task(task_name, a.seed)?;

    let mut agents = Vec::new();
    for p in &a.ckpts {
        agents.push(Checkpoint::load(p)?.agent()?);
    }
    let mut entries: Vec<SweepEntry> = agents.iter().map(SweepEntry::Agent).collect();
    if a.expert {
        entries.push(SweepEntry::Expert);
    }
    let mut names: Vec<String> = Vec::new();
    for e in &entries {
        let tag = e.tag().to_string();
        let n = names
            .iter()
            .filter(|m| m.split('@').next() == Some(&tag))
            .count();
        names.push(if n == 0 {
            tag
        } else {
            format!("{tag}@{}", n + 1)
        });
    }

    let threads = sweep_threads()?;
    let seeds = eval_seeds(a.seed, cfg.sweep_seeds);
    let (cells, _) = sweep(&entries, &task, &grid, cfg.sweep_episodes, &seeds, threads)?;
    let mut results = Vec::new();
    let mut failed = Vec::new();
    for (k, cell) in cells.into_iter().enumerate() {
        let (m, p) = (k / grid.len(), grid[k % grid.len()]);
        match cell {
            Ok(mut r) => {
                r.method = names[m].clone();
                results.push(r);
            }
            Err(e) => {
                warn!("{} at p={p} failed: {e}", names[m]);
                failed.push(FailedCell {
                    method: names[m].clone(),
                    task: task.kind(),
                    p,
                });
            }
        }
    }
    if results.is_empty() {
        return Err(Error::Numeric(format!(
            "all {} sweep cells failed",
            failed.len()
        )));
    }
    let complete: Vec<_> = results
        .iter()
        .filter(|r| results.iter().any(|f| f.method == r.method && f.p == 1.0))
        .cloned()
        .collect();
    let table = crate::eval::DegradationTable::from_results(&complete)?;
    let files = emit_report(&results, &table, &failed, out)?;
    println!(
        "{} cells evaluated, {} failed; wrote {} files under {}",
        results.len(),
        failed.len(),
        files.len(),
        out.display()
    );
    Ok(())
}
