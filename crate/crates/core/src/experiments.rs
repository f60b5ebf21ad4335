//! Multi-run drivers: agent comparison, frozen-policy evaluation and the
//! offloading-threshold ablation.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{AgentKind, SimConfig};
use crate::error::{Error, Result};
use crate::metrics::{self, first_tenth_mean, last_tenth_mean, mean, BoxRow, EpisodeMetrics, BOX_COLUMNS};
use crate::nn::ParamVector;
use crate::sim::{evaluate_policy, run_experiment, RunOptions, RunOutcome};

/// Size of the frozen-policy test protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalProtocol {
    pub rounds: u64,
    pub episodes: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            rounds: crate::sim::EVAL_ROUNDS,
            episodes: crate::sim::EVAL_EPISODES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub agent: String,
    pub seed: u64,
    pub train_episodes: usize,
    pub first10_reward: f64,
    pub last10_reward: f64,
    pub first10_energy_j: f64,
    pub last10_energy_j: f64,
    pub first10_overload_ratio: f64,
    pub last10_overload_ratio: f64,
    pub last10_offload_efficiency_pct: f64,
    /// Mean over rounds of per-round mean episode reward.
    pub eval_reward: f64,
    pub eval_energy_j: f64,
    pub eval_overload_ratio: f64,
}

pub const COMPARISON_COLUMNS: [&str; 13] = [
    "agent",
    "seed",
    "train_episodes",
    "first10_reward",
    "last10_reward",
    "first10_energy_j",
    "last10_energy_j",
    "first10_overload_ratio",
    "last10_overload_ratio",
    "last10_offload_efficiency_pct",
    "eval_reward",
    "eval_energy_j",
    "eval_overload_ratio",
];

fn column(eps: &[EpisodeMetrics], f: impl Fn(&EpisodeMetrics) -> f64) -> Vec<f64> {
    eps.iter().map(f).collect()
}

fn mean_of_means(blocks: &[Vec<EpisodeMetrics>], f: impl Fn(&EpisodeMetrics) -> f64 + Copy) -> f64 {
    let means: Vec<f64> = blocks.iter().map(|b| mean(&column(b, f))).collect();
    mean(&means)
}

pub fn comparison_row(agent: &str, seed: u64, train: &[EpisodeMetrics], eval: &[Vec<EpisodeMetrics>]) -> ComparisonRow {
    let reward = column(train, |m| m.mean_reward);
    let energy = column(train, |m| m.mean_energy_j);
    let overload = column(train, |m| m.overload_ratio);
    let eff = column(train, |m| m.offload_efficiency_pct);
    ComparisonRow {
        agent: agent.to_string(),
        seed,
        train_episodes: train.len(),
        first10_reward: first_tenth_mean(&reward),
        last10_reward: last_tenth_mean(&reward),
        first10_energy_j: first_tenth_mean(&energy),
        last10_energy_j: last_tenth_mean(&energy),
        first10_overload_ratio: first_tenth_mean(&overload),
        last10_overload_ratio: last_tenth_mean(&overload),
        last10_offload_efficiency_pct: last_tenth_mean(&eff),
        eval_reward: mean_of_means(eval, |m| m.mean_reward),
        eval_energy_j: mean_of_means(eval, |m| m.mean_energy_j),
        eval_overload_ratio: mean_of_means(eval, |m| m.overload_ratio),
    }
}

/// Box statistics of every evaluation episode, per metric.
pub fn box_rows(agent: &str, eval: &[Vec<EpisodeMetrics>]) -> Vec<BoxRow> {
    let all: Vec<EpisodeMetrics> = eval.iter().flatten().cloned().collect();
    [
        BoxRow::new(agent, "mean_reward", &column(&all, |m| m.mean_reward)),
        BoxRow::new(agent, "mean_energy_j", &column(&all, |m| m.mean_energy_j)),
        BoxRow::new(agent, "overload_ratio", &column(&all, |m| m.overload_ratio)),
        BoxRow::new(agent, "offload_efficiency_pct", &column(&all, |m| m.offload_efficiency_pct)),
    ]
    .into_iter()
    .flatten()
    .collect()
}

pub fn write_comparison(dir: &Path, rows: &[ComparisonRow], boxes: &[BoxRow]) -> Result<()> {
    metrics::write_rows(&dir.join("comparison.csv"), &COMPARISON_COLUMNS, rows)?;
    metrics::write_rows(&dir.join("boxplot.csv"), &BOX_COLUMNS, boxes)
}

pub struct AgentResult {
    pub row: ComparisonRow,
    pub outcome: RunOutcome,
}

/// Trains each agent on the same seed, evaluates it and writes one run
/// directory per agent plus the comparison tables in `out`.
pub fn compare(
    cfg: &SimConfig,
    agents: &[AgentKind],
    out: Option<&Path>,
    workers: usize,
    protocol: EvalProtocol,
) -> Result<Vec<AgentResult>> {
    let mut results = Vec::with_capacity(agents.len());
    let mut boxes = Vec::new();
    for &kind in agents {
        let run_cfg = SimConfig {
            agent_kind: kind,
            ..cfg.clone()
        };
        let outcome = run_experiment(
            &run_cfg,
            &RunOptions {
                workers,
                out_dir: out.map(|d| d.join(kind.label())),
            },
        )?;
        let checkpoint = outcome.simulation.learner.checkpoint();
        let eval = evaluate_policy(&run_cfg, Some(&checkpoint), protocol.rounds, protocol.episodes)?;
        boxes.extend(box_rows(kind.label(), &eval));
        results.push(AgentResult {
            row: comparison_row(kind.label(), cfg.seed, &outcome.episodes, &eval),
            outcome,
        });
    }
    if let Some(dir) = out {
        let rows: Vec<ComparisonRow> = results.iter().map(|r| r.row.clone()).collect();
        write_comparison(dir, &rows, &boxes)?;
    }
    Ok(results)
}

/// Frozen-policy evaluation of a saved agent checkpoint.
pub fn evaluate_checkpoint(
    cfg: &SimConfig,
    checkpoint: &ParamVector,
    out: &Path,
    protocol: EvalProtocol,
) -> Result<ComparisonRow> {
    let eval = evaluate_policy(cfg, Some(checkpoint), protocol.rounds, protocol.episodes)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let all: Vec<EpisodeMetrics> = eval.iter().flatten().cloned().collect();
    metrics::write_episodes(&out.join("eval_episodes.csv"), &all)?;
    let row = comparison_row(cfg.agent_kind.label(), cfg.seed, &[], &eval);
    write_comparison(out, std::slice::from_ref(&row), &box_rows(cfg.agent_kind.label(), &eval))?;
    Ok(row)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub q_threshold: f64,
    pub seed: u64,
    pub last10_offload_efficiency_pct: f64,
    pub last10_overload_ratio: f64,
    pub last10_reward: f64,
    pub last10_energy_j: f64,
}

pub const ABLATION_COLUMNS: [&str; 6] = [
    "q_threshold",
    "seed",
    "last10_offload_efficiency_pct",
    "last10_overload_ratio",
    "last10_reward",
    "last10_energy_j",
];

pub fn ablation_row(q_threshold: f64, seed: u64, eps: &[EpisodeMetrics]) -> AblationRow {
    AblationRow {
        q_threshold,
        seed,
        last10_offload_efficiency_pct: last_tenth_mean(&column(eps, |m| m.offload_efficiency_pct)),
        last10_overload_ratio: last_tenth_mean(&column(eps, |m| m.overload_ratio)),
        last10_reward: last_tenth_mean(&column(eps, |m| m.mean_reward)),
        last10_energy_j: last_tenth_mean(&column(eps, |m| m.mean_energy_j)),
    }
}

/// Paired runs with the configured threshold and with no threshold.
pub fn ablate_threshold(cfg: &SimConfig, out: Option<&Path>, workers: usize) -> Result<[AblationRow; 2]> {
    let mut rows = Vec::with_capacity(2);
    for (name, q) in [("threshold", cfg.q_threshold), ("no_threshold", 0.0)] {
        let run_cfg = SimConfig {
            q_threshold: q,
            ..cfg.clone()
        };
        let outcome = run_experiment(
            &run_cfg,
            &RunOptions {
                workers,
                out_dir: out.map(|d| d.join(name)),
            },
        )?;
        rows.push(ablation_row(q, cfg.seed, &outcome.episodes));
    }
    if let Some(dir) = out {
        metrics::write_rows(&dir.join("ablation.csv"), &ABLATION_COLUMNS, &rows)?;
    }
    Ok([rows[0].clone(), rows[1].clone()])
}
