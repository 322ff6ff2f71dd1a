//! Subcommands of the `ridematch` tool.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ridematch::baselines::{PolicySpec, TimingPolicy};
use ridematch::domain::{Mode, Tick};
use ridematch::metrics::{
    eval_episode_seed, evaluate, report_csv, run_episode, Comparison, Evaluation, IntervalSummary, Metric,
};
use ridematch::policy::PolicyParams;
use ridematch::ppo::{train, PpoConfig, RunOptions};
use ridematch::scenario::Scenario;
use ridematch::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_CHECKPOINT: i32 = 5;
pub const EXIT_INTERNAL: i32 = 70;

#[derive(Debug, Parser)]
#[command(name = "ridematch", version, about = "Match-timing experiments for ride-hailing and ride-pooling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample episodes from a scenario and write them as JSON.
    Gen(GenArgs),
    /// Train a timing policy with PPO.
    Train(TrainArgs),
    /// Evaluate one policy.
    Eval(EvalArgs),
    /// Compare first dispatch, fixed intervals and optionally a learned policy.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Override the scenario's mode.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Root seed; drawn at random and recorded when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of episodes.
    #[arg(long, default_value_t = 1)]
    pub episodes: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// TOML file overriding PPO settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the number of iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Train on natural rewards only.
    #[arg(long)]
    pub no_pbrs: bool,
    /// Write every step of the first training environment to logs/trace.log.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// first-dispatch, fixed:K or learned:PATH
    #[arg(long)]
    pub policy: String,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Sample learned actions instead of thresholding at 0.5.
    #[arg(long)]
    pub stochastic: bool,
    /// Write every step of the first episode to logs/trace.log.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated intervals in ticks; 1 stands for first dispatch.
    #[arg(long, value_delimiter = ',')]
    pub intervals: Option<Vec<Tick>>,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Add a learned policy: learned:PATH
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub stochastic: bool,
}

#[derive(Debug, Serialize)]
struct Manifest<'a, A: Serialize, C: Serialize> {
    subcommand: &'a str,
    tool_version: &'a str,
    timestamp_unix: u64,
    seed: u64,
    scenario_path: &'a Path,
    out_dir: &'a Path,
    args: &'a A,
    config: &'a C,
    scenario: &'a str,
}

/// Default sweep intervals for a mode.
pub fn default_intervals(mode: Mode) -> Vec<Tick> {
    match mode {
        Mode::Hailing => vec![1, 5, 15, 30, 60],
        Mode::Pooling => vec![1, 10, 20, 40, 80],
    }
}

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io { .. } => EXIT_IO,
                Error::Numeric(_) => EXIT_NUMERIC,
                Error::Checkpoint(_) => EXIT_CHECKPOINT,
                Error::Contract(_) => EXIT_INTERNAL,
                _ => EXIT_CONFIG,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return EXIT_CONFIG;
        }
        if cause.downcast_ref::<NumericFailure>().is_some() {
            return EXIT_NUMERIC;
        }
    }
    EXIT_INTERNAL
}

#[derive(Debug)]
struct NumericFailure(String);

impl std::fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

fn load_scenario(c: &Common) -> anyhow::Result<Scenario> {
    let mut s = Scenario::load(&c.scenario)?;
    if let Some(m) = c.mode {
        s.sim.mode = m;
    }
    Ok(s)
}

fn resolve_seed(c: &Common) -> u64 {
    c.seed.unwrap_or_else(rand::random)
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn ensure_dir(p: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_file(p: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(dir) = p.parent() {
        ensure_dir(dir)?;
    }
    fs::write(p, contents).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_manifest<A: Serialize, C: Serialize>(
    name: &str,
    c: &Common,
    seed: u64,
    scenario: &Scenario,
    args: &A,
    config: &C,
) -> anyhow::Result<()> {
    let m = Manifest {
        subcommand: name,
        tool_version: env!("CARGO_PKG_VERSION"),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        seed,
        scenario_path: &c.scenario,
        out_dir: &c.out,
        args,
        config,
        scenario: &scenario.to_toml_string(),
    };
    write_file(&c.out.join("manifest.json"), serde_json::to_string_pretty(&m)?)
}

pub fn cmd_gen(a: &GenArgs) -> anyhow::Result<()> {
    let scenario = load_scenario(&a.common)?;
    let seed = resolve_seed(&a.common);
    ensure_dir(&a.common.out)?;
    write_manifest("gen", &a.common, seed, &scenario, a, &())?;
    for k in 0..a.episodes {
        let ep = scenario.generate_episode(eval_episode_seed(seed, k))?;
        let path = a.common.out.join("episodes").join(format!("episode_{k:04}.json"));
        write_file(&path, serde_json::to_string_pretty(&ep)?)?;
    }
    eprintln!("wrote {} episodes to {}", a.episodes, a.common.out.display());
    Ok(())
}

fn load_ppo_config(a: &TrainArgs, seed: u64) -> anyhow::Result<PpoConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            toml::from_str::<PpoConfig>(&text).map_err(|e| Error::Schema {
                path: p.clone(),
                message: e.to_string(),
            })?
        }
        None => PpoConfig::default(),
    };
    if let Some(n) = a.iterations {
        cfg.iterations = n;
        cfg.total_episodes = None;
    }
    if a.no_pbrs {
        cfg.pbrs = false;
    }
    cfg.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_train(a: &TrainArgs) -> anyhow::Result<()> {
    let scenario = load_scenario(&a.common)?;
    let seed = resolve_seed(&a.common);
    let cfg = load_ppo_config(a, seed)?;
    let out = &a.common.out;
    let ckpt_dir = out.join("checkpoints");
    let log_dir = out.join("logs");
    ensure_dir(&ckpt_dir)?;
    ensure_dir(&log_dir)?;
    write_manifest("train", &a.common, seed, &scenario, a, &cfg)?;

    let log_path = log_dir.join("train.jsonl");
    let mut log = fs::File::create(&log_path).map_err(|e| Error::Io {
        path: log_path.clone(),
        source: e,
    })?;
    let trace_path = log_dir.join("trace.log");
    let mut trace = if a.trace {
        let mut f = fs::File::create(&trace_path).map_err(|e| Error::Io {
            path: trace_path.clone(),
            source: e,
        })?;
        writeln!(f, "# mode={} scenario={}", scenario.sim.mode, scenario.name)?;
        Some(f)
    } else {
        None
    };
    let iterations = cfg.resolved_iterations(scenario.sim.horizon);
    let opts = RunOptions {
        jobs: a.common.jobs,
        trace: a.trace,
    };
    let outcome = train(&scenario, &cfg, opts, |rec, params| {
        let line = serde_json::to_string(rec).map_err(|e| Error::Validation(e.to_string()))?;
        writeln!(log, "{line}").map_err(|e| io_err(&log_path, e))?;
        if let Some(f) = trace.as_mut() {
            for s in &rec.trace {
                writeln!(f, "{}", s.trace_line()).map_err(|e| io_err(&trace_path, e))?;
            }
        }
        if cfg.checkpoint_every > 0 && rec.iteration % cfg.checkpoint_every == 0 && rec.iteration < iterations {
            params.save(ckpt_dir.join(format!("policy_iter_{:05}.bin", rec.iteration)))?;
        }
        if rec.iteration % 25 == 0 || rec.iteration == iterations {
            let eps: Vec<f64> = rec.episodes.iter().map(|e| e.natural_return).collect();
            let ret = if eps.is_empty() {
                String::from("-")
            } else {
                format!("{:.1}", eps.iter().sum::<f64>() / eps.len() as f64)
            };
            eprintln!(
                "iter {:>5}/{iterations} action_rate {:.3} entropy {:.3} episode_return {ret}",
                rec.iteration, rec.action_rate, rec.stats.entropy
            );
        }
        Ok(())
    })?;
    if let Some(msg) = outcome.failure {
        let path = ckpt_dir.join("policy_last_good.bin");
        outcome.params.save(&path)?;
        return Err(anyhow!(NumericFailure(format!(
            "training halted: {msg}; last good parameters saved to {}",
            path.display()
        ))));
    }
    let final_path = ckpt_dir.join("policy_final.bin");
    outcome.params.save(&final_path)?;
    eprintln!("saved {}", final_path.display());
    Ok(())
}

fn write_eval_outputs(out: &Path, eval: &Evaluation) -> anyhow::Result<()> {
    let reports = out.join("reports");
    write_file(&reports.join("report.csv"), report_csv(&eval.report))?;
    write_file(&reports.join("summary.txt"), eval.report.summary_text())?;
    let mut eps = String::from("episode,seed");
    for m in Metric::ALL {
        eps.push(',');
        eps.push_str(m.name());
    }
    eps.push('\n');
    for (k, e) in eval.episodes.iter().enumerate() {
        eps.push_str(&format!("{k},{}", e.seed));
        for m in Metric::ALL {
            match e.get(m) {
                Some(v) => eps.push_str(&format!(",{v:.6}")),
                None => eps.push(','),
            }
        }
        eps.push('\n');
    }
    write_file(&reports.join("episodes.csv"), eps)?;
    let iv = IntervalSummary::of(&eval.intervals(), 5);
    write_file(&reports.join("intervals.csv"), iv.histogram_csv())?;
    write_file(&reports.join("intervals.json"), serde_json::to_string_pretty(&iv)?)?;
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> anyhow::Result<()> {
    let scenario = load_scenario(&a.common)?;
    let seed = resolve_seed(&a.common);
    let spec: PolicySpec = a.policy.parse()?;
    let policy = TimingPolicy::from_spec(&spec, a.stochastic)?;
    if let TimingPolicy::Learned { params, .. } = &policy {
        check_input_dim(params)?;
    }
    ensure_dir(&a.common.out)?;
    write_manifest("eval", &a.common, seed, &scenario, a, &spec.to_string())?;
    if a.trace {
        let mut lines = format!("# mode={} scenario={} policy={spec}\n", scenario.sim.mode, scenario.name);
        let mut sink = |o: &ridematch::env::StepOutcome| {
            lines.push_str(&o.trace_line());
            lines.push('\n');
        };
        run_episode(&policy, &scenario, eval_episode_seed(seed, 0), Some(&mut sink))?;
        write_file(&a.common.out.join("logs").join("trace.log"), lines)?;
    }
    let eval = evaluate(&policy, &scenario, a.episodes, seed, a.common.jobs)?;
    write_eval_outputs(&a.common.out, &eval)?;
    print!("{}", eval.report.summary_text());
    Ok(())
}

fn check_input_dim(p: &PolicyParams) -> anyhow::Result<()> {
    if p.input_dim() != ridematch::env::OBS_DIM {
        bail!(Error::Checkpoint(format!(
            "checkpoint expects {} features, the environment provides {}",
            p.input_dim(),
            ridematch::env::OBS_DIM
        )));
    }
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs) -> anyhow::Result<()> {
    let scenario = load_scenario(&a.common)?;
    let seed = resolve_seed(&a.common);
    let intervals = a.intervals.clone().unwrap_or_else(|| default_intervals(scenario.sim.mode));
    if intervals.is_empty() {
        bail!(Error::InvalidArgument("interval list is empty".into()));
    }
    if intervals.contains(&0) {
        bail!(Error::InvalidArgument("intervals must be at least 1".into()));
    }
    let mut policies: Vec<TimingPolicy> = intervals
        .iter()
        .map(|&k| {
            if k == 1 {
                TimingPolicy::FirstDispatch
            } else {
                TimingPolicy::FixedInterval(k)
            }
        })
        .collect();
    if let Some(p) = &a.policy {
        let spec: PolicySpec = p.parse()?;
        if !matches!(spec, PolicySpec::Learned(_)) {
            bail!(Error::InvalidArgument("--policy in a sweep must be learned:PATH".into()));
        }
        let policy = TimingPolicy::from_spec(&spec, a.stochastic)?;
        if let TimingPolicy::Learned { params, .. } = &policy {
            check_input_dim(params)?;
        }
        policies.push(policy);
    }
    ensure_dir(&a.common.out)?;
    write_manifest("sweep", &a.common, seed, &scenario, a, &intervals)?;
    let mut reports = Vec::with_capacity(policies.len());
    let mut summary = String::new();
    for p in &policies {
        eprintln!("evaluating {}", p.label());
        let eval = evaluate(p, &scenario, a.episodes, seed, a.common.jobs)?;
        summary.push_str(&eval.report.summary_text());
        reports.push(eval.report);
    }
    let reports_dir = a.common.out.join("reports");
    if reports.len() >= 2 {
        let cmp = Comparison::new(reports, 0)?;
        write_file(&reports_dir.join("sweep_table.csv"), cmp.to_table_csv())?;
        write_file(&reports_dir.join("sweep_long.csv"), cmp.to_long_csv())?;
        print!("{}", cmp.to_table_csv());
    } else {
        write_file(&reports_dir.join("report.csv"), report_csv(&reports[0]))?;
    }
    write_file(&reports_dir.join("summary.txt"), summary)?;
    Ok(())
}
