//! Slot-by-slot simulation: mobility, channels, the agent's allocation,
//! task split, federated training, energy and reward.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{achievable_rate, sample_channel, ChannelSample};
use crate::compute::{transmission, EnergyBreakdown, Transmission};
use crate::config::SimConfig;
use crate::drl::{map_action, reward, Learner, LossReport, Transition};
use crate::error::{Error, Result};
use crate::fedssl::{
    aggregate, encoder_from, evaluation_loss, evaluation_views, executed_steps, linear_probe, load_cifar_dir,
    local_train, make_synthetic_dataset, new_encoder, ContrastiveViews, ImageBatch, ProbeResult, SslHyper,
    TOY_CLASSES,
};
use crate::metrics::{self, EpisodeAccumulator, EpisodeMetrics, VehicleSlotTotals};
use crate::mobility::{distance_to, spawn, step_mobility, VehicleKinematics};
use crate::nn::{write_checkpoint, ParamVector};
use crate::rng::{stream, stream_id, SimRng, Stream};
use crate::task_alloc::{actual_iterations, allocate, expected_iterations, rsu_budget, AllocInput, TaskSplit};

/// Round index of slot `t` in episode `e` (both 1-based).
pub fn round_index(episode: u64, slot: u64, s_max: u64) -> u64 {
    (episode - 1) * s_max + slot
}

#[derive(Debug, Clone)]
struct Vehicle {
    kin: VehicleKinematics,
    backlog: u64,
    true_time_s: f64,
    channel: ChannelSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSlot {
    pub vehicle: usize,
    pub position: (f64, f64),
    pub velocity_mps: f64,
    pub true_time_s: f64,
    pub channel: ChannelSample,
    pub power_w: f64,
    pub freq_hz: f64,
    pub ratio: f64,
    pub rate_bps: f64,
    pub transmission: Transmission,
    pub split: TaskSplit,
    pub energy: EnergyBreakdown,
    pub ssl_local_steps: u64,
    pub ssl_rsu_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub episode: u64,
    pub slot: u64,
    pub round: u64,
    pub vehicles: Vec<VehicleSlot>,
    pub reward: f64,
    pub losses: Option<LossReport>,
    pub global_loss: Option<f64>,
    /// Round that produced the current global model; 0 without training.
    pub model_id: u64,
}

struct SslState {
    pool: ImageBatch,
    eval_views: ContrastiveViews,
    hyper: SslHyper,
    global: ParamVector,
    n_classes: usize,
}

pub struct Simulation {
    pub cfg: SimConfig,
    pub learner: Learner,
    /// Seed for every world stream; differs from the config seed during
    /// evaluation.
    world_seed: u64,
    vehicles: Vec<Vehicle>,
    ssl: Option<SslState>,
    workers: Option<rayon::ThreadPool>,
    steps: u64,
    model_id: u64,
}

fn ssl_pool(cfg: &SimConfig) -> Result<(ImageBatch, usize)> {
    match &cfg.cifar_dir {
        Some(dir) => Ok((load_cifar_dir(Path::new(dir))?, 10)),
        None => Ok((
            make_synthetic_dataset(
                TOY_CLASSES,
                cfg.ssl_pool_per_class,
                &mut stream(cfg.seed, Stream::Dataset, 0, 0, 0),
            ),
            TOY_CLASSES,
        )),
    }
}

impl Simulation {
    pub fn new(cfg: &SimConfig, workers: usize) -> Result<Self> {
        cfg.validate()?;
        let learner = Learner::new(cfg, &mut stream(cfg.seed, Stream::Init, 0, 0, 0));
        let ssl = if cfg.ssl_enabled {
            let (pool, n_classes) = ssl_pool(cfg)?;
            if pool.len() < 2 {
                return Err(Error::Dataset("SSL pool needs at least two images".into()));
            }
            let encoder = new_encoder(pool.format, &mut stream(cfg.seed, Stream::Init, 1, 0, 0));
            let eval_batch = pool.sample(cfg.ssl_batch, &mut stream(cfg.seed, Stream::SslEval, 0, 0, 0));
            let eval_views = evaluation_views(&eval_batch, &mut stream(cfg.seed, Stream::SslEval, 1, 0, 0));
            Some(SslState {
                pool,
                eval_views,
                hyper: SslHyper::from_config(cfg),
                global: encoder.params().clone(),
                n_classes,
            })
        } else {
            None
        };
        let workers = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::Dataset(format!("worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Simulation {
            cfg: cfg.clone(),
            learner,
            world_seed: cfg.seed,
            vehicles: Vec::new(),
            ssl,
            workers,
            steps: 0,
            model_id: 0,
        })
    }

    pub fn global_model(&self) -> Option<&ParamVector> {
        self.ssl.as_ref().map(|s| &s.global)
    }

    fn rng(&self, s: Stream, a: u64, b: u64, c: u64) -> SimRng {
        stream(self.world_seed, s, a, b, c)
    }

    /// Samples true training time and channel for the coming slot.
    fn observe(&mut self, episode: u64, slot: u64) -> Result<()> {
        let (lo, hi) = self.cfg.true_time_fraction_range;
        let t = self.cfg.slot_duration_s;
        for n in 0..self.vehicles.len() {
            let mut rng = self.rng(Stream::TrueTime, episode, slot, n as u64);
            let tt = if lo == hi { lo * t } else { rng.random_range(lo * t..=hi * t) };
            let d = distance_to(self.cfg.rsu_position, &self.vehicles[n].kin);
            let mut crng = self.rng(Stream::Channel, episode, slot, n as u64);
            let ch = sample_channel(d, &self.cfg, &mut crng)?;
            let v = &mut self.vehicles[n];
            v.true_time_s = tt;
            v.channel = ch;
        }
        Ok(())
    }

    fn state(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.cfg.state_dim());
        s.extend(self.vehicles.iter().map(|v| v.channel.gain.max(1e-300).log10()));
        s.extend(self.vehicles.iter().map(|v| v.kin.velocity_mps));
        s.extend(self.vehicles.iter().map(|v| v.backlog as f64));
        s
    }

    /// Places vehicles afresh with empty backlogs and observes slot 1.
    pub fn reset_episode(&mut self, episode: u64, learn: bool) -> Result<()> {
        let mut vehicles = Vec::with_capacity(self.cfg.n_vehicles);
        for n in 0..self.cfg.n_vehicles {
            let kin = spawn(n, &self.cfg, &mut self.rng(Stream::Reset, episode, n as u64, 0));
            let d = distance_to(self.cfg.rsu_position, &kin);
            vehicles.push(Vehicle {
                channel: ChannelSample::from_draws(d, 0.0, 1.0, &self.cfg)?,
                kin,
                backlog: 0,
                true_time_s: self.cfg.slot_duration_s,
            });
        }
        self.vehicles = vehicles;
        self.observe(episode, 1)?;
        if learn {
            let s = self.state();
            self.learner.observe(&s);
        }
        Ok(())
    }

    fn train_ssl(&self, round: u64, plan: &[(bool, u64, u64)]) -> Result<Vec<(ParamVector, Option<ParamVector>)>> {
        let ssl = self.ssl.as_ref().expect("training enabled");
        let seed = self.cfg.seed;
        let z = self.cfg.ssl_batch;
        let job = |n: usize| -> Result<(ParamVector, Option<ParamVector>)> {
            let (offload, local_steps, rsu_steps) = plan[n];
            let batch = ssl.pool.sample(z, &mut stream(seed, Stream::SslData, round, n as u64, 0));
            let local = local_train(
                &ssl.global,
                &batch,
                local_steps,
                &ssl.hyper,
                &mut stream(seed, Stream::SslLocal, round, n as u64, 0),
            )?;
            let rsu = if offload {
                Some(local_train(
                    &ssl.global,
                    &batch,
                    rsu_steps,
                    &ssl.hyper,
                    &mut stream(seed, Stream::SslRsu, round, n as u64, 0),
                )?)
            } else {
                None
            };
            Ok((local, rsu))
        };
        let results: Vec<Result<_>> = match &self.workers {
            Some(pool) => pool.install(|| (0..plan.len()).into_par_iter().map(job).collect()),
            None => (0..plan.len()).map(job).collect(),
        };
        results.into_iter().collect()
    }

    pub fn run_slot(&mut self, episode: u64, slot: u64, learn: bool) -> Result<SlotRecord> {
        self.run_slot_inner(episode, slot, learn)
            .map_err(|e| e.at_slot(episode, slot))
    }

    fn run_slot_inner(&mut self, episode: u64, slot: u64, learn: bool) -> Result<SlotRecord> {
        let cfg = self.cfg.clone();
        let round = round_index(episode, slot, cfg.s_max);
        let state = self.state();
        let mut agent_rng = self.rng(Stream::Agent, episode, slot, 0);
        let raw = self.learner.act(&state, learn, &mut agent_rng)?;
        let action = map_action(&raw, &cfg);

        let mut records = Vec::with_capacity(self.vehicles.len());
        for (n, v) in self.vehicles.iter().enumerate() {
            let (p, f, q) = (action.powers_w[n], action.freqs_hz[n], action.ratios[n]);
            let rate_bps = achievable_rate(&v.channel, p, &cfg);
            let tx = transmission(p, rate_bps, &cfg);
            let split = allocate(
                AllocInput {
                    q,
                    feasible: tx.feasible,
                    n_expected: expected_iterations(f, &cfg),
                    n_actual: actual_iterations(f, v.true_time_s, &cfg),
                    buffer_in: v.backlog,
                    n_rsu_budget: if tx.feasible { rsu_budget(tx.delay_s, &cfg) } else { 0 },
                },
                cfg.q_threshold,
            );
            let energy = EnergyBreakdown::compose(split.offload, split.n_local, split.n_off, f, tx.energy_j, &cfg);
            records.push(VehicleSlot {
                vehicle: n,
                position: v.kin.position,
                velocity_mps: v.kin.velocity_mps,
                true_time_s: v.true_time_s,
                channel: v.channel,
                power_w: p,
                freq_hz: f,
                ratio: q,
                rate_bps,
                transmission: tx,
                split,
                energy,
                ssl_local_steps: executed_steps(split.n_local, cfg.ssl_iteration_scale),
                ssl_rsu_steps: if split.offload {
                    executed_steps(split.n_off, cfg.ssl_iteration_scale)
                } else {
                    0
                },
            });
        }

        let mut global_loss = None;
        if self.ssl.is_some() && learn {
            let plan: Vec<(bool, u64, u64)> = records
                .iter()
                .map(|r| (r.split.offload, r.ssl_local_steps, r.ssl_rsu_steps))
                .collect();
            let trained = self.train_ssl(round, &plan)?;
            let (locals, rsu): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
            let ssl = self.ssl.as_mut().expect("checked above");
            ssl.global = aggregate(&locals, &rsu, cfg.aggregation_mode)?;
            global_loss = Some(evaluation_loss(&ssl.global, ssl.pool.format, &ssl.eval_views, &ssl.hyper)?);
            self.model_id = round;
        }

        let energies: Vec<f64> = records.iter().map(|r| r.energy.e_total_j).collect();
        let overloads: Vec<u64> = records.iter().map(|r| r.split.overload).collect();
        let buffers: Vec<u64> = records.iter().map(|r| r.split.buffer_out).collect();
        let r = reward(&energies, &overloads, &buffers, &cfg);

        for (v, rec) in self.vehicles.iter_mut().zip(&records) {
            v.backlog = rec.split.buffer_out;
        }
        for n in 0..self.vehicles.len() {
            let mut rng = self.rng(Stream::Mobility, episode, slot, n as u64);
            self.vehicles[n].kin = step_mobility(&self.vehicles[n].kin, &cfg, &mut rng);
        }
        self.observe(episode, slot + 1)?;

        let mut losses = None;
        if learn {
            let next_state = self.state();
            self.learner.observe(&next_state);
            self.learner.push(Transition {
                state,
                action: raw,
                reward: r,
                next_state,
            });
            self.steps += 1;
            let mut update_rng = self.rng(Stream::Agent, episode, slot, 1);
            if self.learner.replay.len() >= cfg.warmup_size.max(cfg.minibatch)
                && self.steps % cfg.update_every_slots == 0
            {
                losses = Some(self.learner.update(&mut update_rng)?);
            }
            if self.steps % cfg.target_update_every_slots == 0 {
                self.learner.agent.update_targets(cfg.tau_soft)?;
            }
        }

        Ok(SlotRecord {
            episode,
            slot,
            round,
            vehicles: records,
            reward: r,
            losses,
            global_loss,
            model_id: self.model_id,
        })
    }

    /// Runs one episode and returns its metrics. `sink` sees every slot.
    pub fn run_episode<F: FnMut(&SlotRecord) -> Result<()>>(
        &mut self,
        episode: u64,
        learn: bool,
        mut sink: F,
    ) -> Result<EpisodeMetrics> {
        self.reset_episode(episode, learn)?;
        let mut acc = EpisodeAccumulator::default();
        for slot in 1..=self.cfg.s_max {
            let rec = self.run_slot(episode, slot, learn)?;
            acc.add_slot(rec.reward, &slot_totals(&rec));
            sink(&rec)?;
        }
        Ok(acc.finish(episode, self.cfg.agent_kind.label()))
    }

    /// Linear-probe accuracy of the current global encoder.
    pub fn probe(&self) -> Result<Option<ProbeResult>> {
        let Some(ssl) = &self.ssl else {
            return Ok(None);
        };
        let (train, test) = if self.cfg.cifar_dir.is_some() {
            let mut rng = stream(self.cfg.seed, Stream::Probe, 0, 0, 0);
            let picked = ssl.pool.sample(2000, &mut rng);
            picked.split(1000)
        } else {
            let per_class = 100;
            (
                make_synthetic_dataset(ssl.n_classes, per_class, &mut stream(self.cfg.seed, Stream::Probe, 0, 0, 0)),
                make_synthetic_dataset(ssl.n_classes, per_class, &mut stream(self.cfg.seed, Stream::Probe, 1, 0, 0)),
            )
        };
        let encoder = encoder_from(ssl.pool.format, ssl.global.clone())?;
        Ok(Some(linear_probe(&encoder, &train, &test, ssl.n_classes)?))
    }
}

pub fn slot_totals(rec: &SlotRecord) -> Vec<VehicleSlotTotals> {
    rec.vehicles
        .iter()
        .map(|v| VehicleSlotTotals {
            energy_j: v.energy.e_total_j,
            n_local: v.split.n_local,
            n_off: v.split.n_off,
            n_total: v.split.n_total,
            overload: v.split.overload,
        })
        .collect()
}

/// One row of `slots.csv`: one vehicle in one slot.
#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct SlotRow {
    pub episode: u64,
    pub slot: u64,
    pub round: u64,
    pub vehicle: usize,
    pub x_m: f64,
    pub y_m: f64,
    pub velocity_mps: f64,
    pub distance_m: f64,
    pub true_time_s: f64,
    pub path_loss_db: f64,
    pub shadow_db: f64,
    pub small_scale: f64,
    pub gain: f64,
    pub power_w: f64,
    pub freq_hz: f64,
    pub ratio: f64,
    pub rate_bps: f64,
    pub trans_delay_s: f64,
    pub feasible: u8,
    pub offload: u8,
    pub n_expected: u64,
    pub n_actual: u64,
    pub buffer_in: u64,
    pub n_total: u64,
    pub n_rsu_budget: u64,
    pub n_off_expected: u64,
    pub n_off: u64,
    pub n_local: u64,
    pub overload: u64,
    pub buffer_out: u64,
    pub e_local_j: f64,
    pub e_rsu_j: f64,
    pub e_trans_j: f64,
    pub e_total_j: f64,
    pub ssl_local_steps: u64,
    pub ssl_rsu_steps: u64,
    pub reward: f64,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub beta: Option<f64>,
    pub global_loss: Option<f64>,
    pub model_id: u64,
}

pub const SLOT_COLUMNS: [&str; 42] = [
    "episode",
    "slot",
    "round",
    "vehicle",
    "x_m",
    "y_m",
    "velocity_mps",
    "distance_m",
    "true_time_s",
    "path_loss_db",
    "shadow_db",
    "small_scale",
    "gain",
    "power_w",
    "freq_hz",
    "ratio",
    "rate_bps",
    "trans_delay_s",
    "feasible",
    "offload",
    "n_expected",
    "n_actual",
    "buffer_in",
    "n_total",
    "n_rsu_budget",
    "n_off_expected",
    "n_off",
    "n_local",
    "overload",
    "buffer_out",
    "e_local_j",
    "e_rsu_j",
    "e_trans_j",
    "e_total_j",
    "ssl_local_steps",
    "ssl_rsu_steps",
    "reward",
    "critic_loss",
    "actor_loss",
    "beta",
    "global_loss",
    "model_id",
];

pub fn slot_rows(rec: &SlotRecord) -> Vec<SlotRow> {
    rec.vehicles
        .iter()
        .map(|v| SlotRow {
            episode: rec.episode,
            slot: rec.slot,
            round: rec.round,
            vehicle: v.vehicle,
            x_m: v.position.0,
            y_m: v.position.1,
            velocity_mps: v.velocity_mps,
            distance_m: v.channel.distance_m,
            true_time_s: v.true_time_s,
            path_loss_db: v.channel.path_loss_db,
            shadow_db: v.channel.shadow_db,
            small_scale: v.channel.small_scale,
            gain: v.channel.gain,
            power_w: v.power_w,
            freq_hz: v.freq_hz,
            ratio: v.ratio,
            rate_bps: v.rate_bps,
            trans_delay_s: v.transmission.delay_s,
            feasible: u8::from(v.transmission.feasible),
            offload: u8::from(v.split.offload),
            n_expected: v.split.n_expected,
            n_actual: v.split.n_actual,
            buffer_in: v.split.buffer_in,
            n_total: v.split.n_total,
            n_rsu_budget: v.split.n_rsu_budget,
            n_off_expected: v.split.n_off_expected,
            n_off: v.split.n_off,
            n_local: v.split.n_local,
            overload: v.split.overload,
            buffer_out: v.split.buffer_out,
            e_local_j: v.energy.e_local_j,
            e_rsu_j: v.energy.e_rsu_j,
            e_trans_j: v.energy.e_trans_j,
            e_total_j: v.energy.e_total_j,
            ssl_local_steps: v.ssl_local_steps,
            ssl_rsu_steps: v.ssl_rsu_steps,
            reward: rec.reward,
            critic_loss: rec.losses.map(|l| l.critic),
            actor_loss: rec.losses.map(|l| l.actor),
            beta: rec.losses.map(|l| l.beta),
            global_loss: rec.global_loss,
            model_id: rec.model_id,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    /// Run directory; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: 1,
            out_dir: None,
        }
    }
}

pub struct RunOutcome {
    pub episodes: Vec<EpisodeMetrics>,
    /// Global-model loss per round (empty without federated training).
    pub global_losses: Vec<f64>,
    pub probe: Option<ProbeResult>,
    pub simulation: Simulation,
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    code_version: &'a str,
    agent: &'a str,
    episodes: u64,
    slots_per_episode: u64,
    probe_top1: Option<f64>,
    probe_top5: Option<f64>,
}

#[derive(Serialize)]
struct RoundRow {
    round: u64,
    global_loss: f64,
}

fn slot_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(SLOT_COLUMNS)?;
    Ok(w)
}

pub fn run_experiment(cfg: &SimConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut sim = Simulation::new(cfg, opts.workers)?;
    let mut writer = match &opts.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir.join("checkpoints")).map_err(|e| Error::io(dir, e))?;
            let p = dir.join("config.json");
            fs::write(&p, cfg.to_json()).map_err(|e| Error::io(&p, e))?;
            Some(slot_writer(&dir.join("slots.csv"))?)
        }
        None => None,
    };
    let mut episodes = Vec::with_capacity(cfg.e_max as usize);
    let mut global_losses = Vec::new();
    for e in 1..=cfg.e_max {
        let m = sim.run_episode(e, true, |rec| {
            if let Some(l) = rec.global_loss {
                global_losses.push(l);
            }
            if let Some(w) = writer.as_mut() {
                for row in slot_rows(rec) {
                    w.serialize(row)?;
                }
            }
            Ok(())
        })?;
        log::info!(
            "episode {e}: reward {:.4} energy {:.4} J overload {:.4}",
            m.mean_reward,
            m.mean_energy_j,
            m.overload_ratio
        );
        episodes.push(m);
    }
    let probe = sim.probe()?;
    if let Some(dir) = &opts.out_dir {
        let slots = dir.join("slots.csv");
        writer
            .take()
            .expect("opened with the directory")
            .flush()
            .map_err(|e| Error::io(&slots, e))?;
        metrics::write_episodes(&dir.join("episodes.csv"), &episodes)?;
        write_checkpoint(&dir.join("checkpoints").join("agent.bin"), &sim.learner.checkpoint())?;
        if let Some(g) = sim.global_model() {
            write_checkpoint(&dir.join("checkpoints").join("global_model.bin"), g)?;
            let rows: Vec<RoundRow> = global_losses
                .iter()
                .enumerate()
                .map(|(i, &l)| RoundRow {
                    round: i as u64 + 1,
                    global_loss: l,
                })
                .collect();
            metrics::write_rows(&dir.join("rounds.csv"), &["round", "global_loss"], &rows)?;
        }
        let manifest = Manifest {
            seed: cfg.seed,
            code_version: env!("CARGO_PKG_VERSION"),
            agent: cfg.agent_kind.label(),
            episodes: cfg.e_max,
            slots_per_episode: cfg.s_max,
            probe_top1: probe.map(|p| p.top1),
            probe_top5: probe.map(|p| p.top5),
        };
        let p = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(RunOutcome {
        episodes,
        global_losses,
        probe,
        simulation: sim,
    })
}

pub const EVAL_ROUNDS: u64 = 4;
pub const EVAL_EPISODES: u64 = 50;

/// Frozen-policy test protocol: `rounds` independent blocks of `episodes`
/// seeded episodes with greedy actions and no learning.
pub fn evaluate_policy(
    cfg: &SimConfig,
    checkpoint: Option<&ParamVector>,
    rounds: u64,
    episodes: u64,
) -> Result<Vec<Vec<EpisodeMetrics>>> {
    let eval_cfg = SimConfig {
        ssl_enabled: false,
        ..cfg.clone()
    };
    let mut sim = Simulation::new(&eval_cfg, 1)?;
    if let Some(p) = checkpoint {
        sim.learner.restore(p)?;
    }
    let mut out = Vec::with_capacity(rounds as usize);
    for round in 1..=rounds {
        sim.world_seed = stream_id(cfg.seed, Stream::Evaluation, round, 0, 0);
        let mut block = Vec::with_capacity(episodes as usize);
        for e in 1..=episodes {
            block.push(sim.run_episode(e, false, |_| Ok(()))?);
        }
        out.push(block);
    }
    Ok(out)
}
