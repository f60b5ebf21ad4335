//! Episode metrics, summary statistics and CSV tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean of `overload / n_total` over vehicle-slots; slots with no work
/// count as 0.
pub fn overload_ratio(items: &[(u64, u64)]) -> f64 {
    mean_ratio(items)
}

/// Mean offloaded share of the work over vehicle-slots, in percent.
pub fn offloading_efficiency(items: &[(u64, u64)]) -> f64 {
    100.0 * mean_ratio(items)
}

fn mean_ratio(items: &[(u64, u64)]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let sum: f64 = items
        .iter()
        .map(|&(num, total)| if total == 0 { 0.0 } else { num as f64 / total as f64 })
        .sum();
    sum / items.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u64,
    pub agent: String,
    /// Mean over slots of the summed vehicle energy.
    pub mean_energy_j: f64,
    pub mean_reward: f64,
    /// Local plus offloaded iterations over the episode.
    pub computation_count: u64,
    /// Offloaded iterations over the episode.
    pub offload_count: u64,
    pub overload_ratio: f64,
    pub offload_efficiency_pct: f64,
}

/// Per-vehicle-slot quantities an episode summary is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleSlotTotals {
    pub energy_j: f64,
    pub n_local: u64,
    pub n_off: u64,
    pub n_total: u64,
    pub overload: u64,
}

/// Accumulates one episode.
#[derive(Debug, Clone, Default)]
pub struct EpisodeAccumulator {
    slots: u64,
    energy_sum: f64,
    reward_sum: f64,
    computation: u64,
    offloaded: u64,
    overload_items: Vec<(u64, u64)>,
    offload_items: Vec<(u64, u64)>,
}

impl EpisodeAccumulator {
    pub fn add_slot(&mut self, reward: f64, vehicles: &[VehicleSlotTotals]) {
        self.slots += 1;
        self.reward_sum += reward;
        self.energy_sum += vehicles.iter().map(|v| v.energy_j).sum::<f64>();
        for v in vehicles {
            self.computation += v.n_local + v.n_off;
            self.offloaded += v.n_off;
            self.overload_items.push((v.overload, v.n_total));
            self.offload_items.push((v.n_off, v.n_total));
        }
    }

    pub fn finish(&self, episode: u64, agent: &str) -> EpisodeMetrics {
        let s = self.slots.max(1) as f64;
        EpisodeMetrics {
            episode,
            agent: agent.to_string(),
            mean_energy_j: self.energy_sum / s,
            mean_reward: self.reward_sum / s,
            computation_count: self.computation,
            offload_count: self.offloaded,
            overload_ratio: overload_ratio(&self.overload_items),
            offload_efficiency_pct: offloading_efficiency(&self.offload_items),
        }
    }
}

/// Quantile with linear interpolation between order statistics
/// (`h = (n - 1) p`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Most extreme observations within 1.5 IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile(&v, 0.25);
    let q3 = quantile(&v, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| (lo..=hi).contains(x)).collect();
    Some(BoxStats {
        q1,
        median: quantile(&v, 0.5),
        q3,
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers: v.iter().copied().filter(|x| !(lo..=hi).contains(x)).collect(),
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Number of episodes in the leading or trailing 10% (at least one).
pub fn tenth(n: usize) -> usize {
    (n / 10).max(1).min(n)
}

pub fn first_tenth_mean(xs: &[f64]) -> f64 {
    mean(&xs[..tenth(xs.len())])
}

pub fn last_tenth_mean(xs: &[f64]) -> f64 {
    mean(&xs[xs.len() - tenth(xs.len())..])
}

/// Trailing moving average with the given window (shorter at the start).
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            mean(&xs[lo..=i])
        })
        .collect()
}

pub fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Dataset(format!("{other:?}")),
    }
}

pub const EPISODE_COLUMNS: [&str; 8] = [
    "episode",
    "agent",
    "mean_energy_j",
    "mean_reward",
    "computation_count",
    "offload_count",
    "overload_ratio",
    "offload_efficiency_pct",
];

pub fn write_episodes(path: &Path, episodes: &[EpisodeMetrics]) -> Result<()> {
    write_rows(path, &EPISODE_COLUMNS, episodes)
}

pub fn read_episodes(path: &Path) -> Result<Vec<EpisodeMetrics>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRow {
    pub agent: String,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub n_outliers: usize,
    /// Semicolon-separated outlier values.
    pub outliers: String,
}

pub const BOX_COLUMNS: [&str; 11] = [
    "agent",
    "metric",
    "count",
    "mean",
    "q1",
    "median",
    "q3",
    "whisker_low",
    "whisker_high",
    "n_outliers",
    "outliers",
];

impl BoxRow {
    pub fn new(agent: &str, metric: &str, values: &[f64]) -> Option<BoxRow> {
        let b = box_stats(values)?;
        Some(BoxRow {
            agent: agent.to_string(),
            metric: metric.to_string(),
            count: values.len(),
            mean: mean(values),
            q1: b.q1,
            median: b.median,
            q3: b.q3,
            whisker_low: b.whisker_low,
            whisker_high: b.whisker_high,
            n_outliers: b.outliers.len(),
            outliers: b.outliers.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
        })
    }
}
