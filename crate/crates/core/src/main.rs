use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vecsim::config::{load_config_with_overrides, AgentKind};
use vecsim::experiments::{ablate_threshold, compare, evaluate_checkpoint, EvalProtocol};
use vecsim::nn::read_checkpoint;
use vecsim::sim::{run_experiment, RunOptions};
use vecsim::{selftest, Error, SimConfig};

#[derive(Parser)]
#[command(name = "vecsim", version, about = "Vehicle edge-computing simulator with learned offloading and federated self-supervised training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write a run directory.
    Run(Common),
    /// Frozen-policy test protocol on a finished run's agent checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Agent checkpoint; defaults to <out>/checkpoints/agent.bin.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate sac, ddpg, td3 and random on the same seed.
    Compare(Common),
    /// Paired runs with the configured offloading threshold and with none.
    AblateThreshold(Common),
    /// Run the built-in oracle suite.
    Selftest,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Config override `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for per-vehicle training.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, value_parser = ["sac", "ddpg", "td3", "random"])]
    agent: Option<String>,
    /// Number of episodes.
    #[arg(long)]
    episodes: Option<u64>,
    /// Slots per episode.
    #[arg(long)]
    slots: Option<u64>,
}

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Config file, then `--set`, then `VECSIM_SEED`, then the dedicated flags.
fn build_config(common: &Common, fallback: Option<&Path>) -> Result<SimConfig, Error> {
    let text = match (&common.config, fallback) {
        (Some(p), _) => read_text(p)?,
        (None, Some(p)) if p.is_file() => read_text(p)?,
        _ => String::new(),
    };
    let mut overrides = Vec::new();
    for item in &common.overrides {
        let Some((k, v)) = item.split_once('=') else {
            return Err(Error::invalid(item.clone(), "override must look like key=value"));
        };
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Ok(raw) = std::env::var("VECSIM_SEED") {
        let seed: u64 = raw
            .trim()
            .parse()
            .map_err(|_| Error::invalid("seed", format!("VECSIM_SEED={raw} is not an unsigned integer")))?;
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(s) = common.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    if let Some(a) = &common.agent {
        overrides.push(("agent_kind".into(), format!("\"{a}\"")));
    }
    if let Some(e) = common.episodes {
        overrides.push(("e_max".into(), e.to_string()));
    }
    if let Some(s) = common.slots {
        overrides.push(("s_max".into(), s.to_string()));
    }
    load_config_with_overrides(&text, &overrides)
}

fn out_dir(common: &Common, verb: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(verb))
}

fn execute(command: Command) -> Result<bool, Error> {
    match command {
        Command::Run(common) => {
            let cfg = build_config(&common, None)?;
            let out = out_dir(&common, "run");
            let outcome = run_experiment(
                &cfg,
                &RunOptions {
                    workers: common.workers,
                    out_dir: Some(out.clone()),
                },
            )?;
            if let Some(p) = outcome.probe {
                println!("probe top1 {:.4} top5 {:.4}", p.top1, p.top5);
            }
            println!("wrote {}", out.display());
        }
        Command::Evaluate { common, checkpoint } => {
            let out = out_dir(&common, "run");
            let cfg = build_config(&common, Some(&out.join("config.json")))?;
            let ckpt_path = checkpoint.unwrap_or_else(|| out.join("checkpoints").join("agent.bin"));
            let params = read_checkpoint(&ckpt_path)?;
            let row = evaluate_checkpoint(&cfg, &params, &out.join("eval"), EvalProtocol::default())?;
            println!(
                "{}: reward {:.4} energy {:.4} J overload {:.4}",
                row.agent, row.eval_reward, row.eval_energy_j, row.eval_overload_ratio
            );
        }
        Command::Compare(common) => {
            let cfg = build_config(&common, None)?;
            let out = out_dir(&common, "compare");
            let results = compare(&cfg, &AgentKind::ALL, Some(&out), common.workers, EvalProtocol::default())?;
            for r in results {
                println!(
                    "{}: last-10% reward {:.4} energy {:.4} J, eval reward {:.4}",
                    r.row.agent, r.row.last10_reward, r.row.last10_energy_j, r.row.eval_reward
                );
            }
        }
        Command::AblateThreshold(common) => {
            let cfg = build_config(&common, None)?;
            let out = out_dir(&common, "ablate");
            for r in ablate_threshold(&cfg, Some(&out), common.workers)? {
                println!(
                    "q_threshold {}: efficiency {:.4}% overload {:.4}",
                    r.q_threshold, r.last10_offload_efficiency_pct, r.last10_overload_ratio
                );
            }
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            println!("{}/{} checks passed", checks.iter().filter(|c| c.passed).count(), checks.len());
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
