//! Built-in oracle suite behind the `selftest` command: closed-form tables,
//! a flowchart oracle for the task split, finite-difference gradient checks
//! and sampling statistics.

use ndarray::{array, Array1, Array2};
use rand::Rng;

use crate::channel::{achievable_rate, draw_shadow_db, draw_small_scale, path_loss_db, per_vehicle_bandwidth, ChannelSample};
use crate::compute::{dvfs_power, iteration_delay, iteration_energy, payload_bits, transmission};
use crate::config::default_config;
use crate::drl::{
    actor_loss, critic_loss, deterministic_actor_loss, draw_noise, map_action, reward, temperature_loss, AgentHyper,
    ReplayBuffer, Transition,
};
use crate::fedssl::{
    augment_first, contrastive_loss_and_grad, dual_temperature_loss, info_nce, surrogate_loss, ContrastiveViews,
    ImageFormat,
};
use crate::metrics::{box_stats, offloading_efficiency, overload_ratio};
use crate::mobility::{distance_to, Heading, VehicleKinematics};
use crate::nn::{Activation, HeadInit, Mlp, ParamVector};
use crate::rng::{stream, SimRng, Stream};
use crate::sim::round_index;
use crate::task_alloc::{actual_iterations, allocate, expected_iterations, rsu_budget, AllocInput, TaskSplit};

pub const EQUATION_TOL: f64 = 1e-9;
pub const GRADIENT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

/// Closed-form values computed here by direct arithmetic, compared with the
/// library at relative tolerance [`EQUATION_TOL`].
pub fn equation_table() -> Vec<(&'static str, f64, f64)> {
    let cfg = default_config();
    let kin = |x: f64, y: f64| VehicleKinematics {
        vehicle_id: 0,
        position: (x, y),
        heading: Heading::East,
        velocity_mps: 10.0,
    };
    let ch1000 = ChannelSample::from_draws(1000.0, 0.0, 1.0, &cfg).expect("valid distance");
    // Channel whose SNR is exactly one at 1 W.
    let unit_snr = ChannelSample {
        gain: 10f64.powf((cfg.noise_dbm - 30.0) / 10.0),
        ..ch1000
    };
    let payload = (1500.0 + 11468.8) * 8192.0;
    let mapped_low = map_action(&vec![-1.0; 15], &cfg);
    let mut raw = vec![-1.0; 15];
    raw[10..].fill(1.0);
    let mapped_q = map_action(&raw, &cfg);
    let split = |q, n_exp, n_act, buf, budget| {
        allocate(
            AllocInput {
                q,
                feasible: true,
                n_expected: n_exp,
                n_actual: n_act,
                buffer_in: buf,
                n_rsu_budget: budget,
            },
            0.005,
        )
    };
    let s2 = split(0.5, 100, 80, 50, 400);
    let s3 = split(0.25, 400, 300, 100, 400);
    let nce = info_nce(array![1.0, 0.0].view(), array![1.0, 0.0].view(), array![[-1.0, 0.0]].view(), 1.0);
    let half = dual_temperature_loss(array![1.0, 0.0].view(), array![0.0, 1.0].view(), array![[0.0, 1.0]].view(), 0.1, 1.0);
    let hundred: Vec<f64> = (1..=100).map(f64::from).collect();
    let bx = box_stats(&hundred).expect("non-empty");
    let e = std::f64::consts::E;

    vec![
        ("path loss at 1000 m", path_loss_db(1000.0).unwrap(), 128.1),
        ("path loss at 100 m", path_loss_db(100.0).unwrap(), 128.1 - 37.6),
        ("path loss at 2000 m", path_loss_db(2000.0).unwrap(), 128.1 + 37.6 * 2f64.log10()),
        ("gain at 1000 m, no shadowing, unit fading", ch1000.gain, 10f64.powf(-12.81)),
        ("distance 3-4-5", distance_to((3.0, 4.0), &kin(0.0, 0.0)), 5.0),
        ("distance clamp", distance_to((250.0, 250.0), &kin(250.0, 250.0)), 1.0),
        ("distance axis", distance_to((250.0, 250.0), &kin(250.0, 0.0)), 250.0),
        ("bandwidth share", per_vehicle_bandwidth(&cfg), 4e5),
        ("rate at snr 1", achievable_rate(&unit_snr, 1.0, &cfg), 4e5),
        ("rate at zero power", achievable_rate(&ch1000, 0.0, &cfg), 0.0),
        ("dvfs power 2e8", dvfs_power(2e8, &cfg).unwrap(), 1e-27 * 8e24),
        ("dvfs power 5e7", dvfs_power(5e7, &cfg).unwrap(), 1.25e-4),
        ("iteration delay 4e8", iteration_delay(4e8, &cfg), 2.4e6 / 4e8),
        ("iteration delay rsu", iteration_delay(6e9, &cfg), 2.4e6 / 6e9),
        ("iteration delay 2.4e6", iteration_delay(2.4e6, &cfg), 1.0),
        ("iteration energy 4e8", iteration_energy(4e8, &cfg), 1e-27 * 1.6e17 * 2.4e6),
        ("iteration energy rsu", iteration_energy(6e9, &cfg), 1e-27 * 3.6e19 * 2.4e6),
        ("payload bits", payload_bits(&cfg), payload),
        ("uplink energy 10 W, 0.01 s", transmission(10.0, payload / 0.01, &cfg).energy_j, 0.1),
        ("expected iterations 4e8", expected_iterations(4e8, &cfg) as f64, (0.98f64 / 0.006).floor()),
        ("actual iterations at T'=T", actual_iterations(4e8, 1.0, &cfg) as f64, 163.0),
        ("actual iterations at T'<t_max", actual_iterations(4e8, 0.005, &cfg) as f64, 0.0),
        ("actual iterations at T'=0.5", actual_iterations(4e8, 0.5, &cfg) as f64, 80.0),
        ("rsu budget, instant uplink", rsu_budget(0.0, &cfg) as f64, 2450.0),
        ("rsu budget, no window", rsu_budget(0.98, &cfg) as f64, 0.0),
        ("below threshold offloads nothing", split(0.003, 100, 60, 0, 2450).n_off as f64, 0.0),
        ("overload n_off", s2.n_off as f64, 150.0),
        ("overload amount", s2.overload as f64, 50.0),
        ("overload n_local", s2.n_local as f64, 0.0),
        ("spill n_re", s3.n_re as f64, 400.0),
        ("spill n_local", s3.n_local as f64, 300.0),
        ("spill buffer", s3.buffer_out as f64, 100.0),
        ("round index", round_index(2, 3, 100) as f64, 103.0),
        ("action lower corner power", mapped_low.powers_w[0], cfg.p_min_w),
        ("action lower corner freq", mapped_low.freqs_hz[0], cfg.f_min_hz),
        ("action lower corner ratio", mapped_low.ratios[0], 0.0),
        ("saturated ratios", mapped_q.ratios[3], 0.2),
        ("reward, 2 J", reward(&[2.0], &[0], &[0], &cfg), -20.0),
        ("info nce probability", nce, e / (e + 1.0 / e)),
        ("dual loss at p = 0.5", half.loss, half.coefficient * 2f64.ln()),
        ("overload ratio average", overload_ratio(&[(0, 4), (1, 2), (3, 3), (2, 4)]), 0.5),
        ("efficiency, half slots at half", offloading_efficiency(&[(2, 4), (0, 4)]), 25.0),
        ("first quartile 1..100", bx.q1, 25.75),
        ("median 1..100", bx.median, 50.5),
        ("third quartile 1..100", bx.q3, 75.25),
    ]
}

pub fn equation_checks() -> Vec<Check> {
    equation_table()
        .into_iter()
        .map(|(name, got, want)| {
            let err = rel_err(got, want);
            Check::new(name, err <= EQUATION_TOL, format!("got {got:e}, want {want:e}, rel err {err:.1e}"))
        })
        .collect()
}

/// Step-by-step trace of the allocation flowchart.
pub fn flowchart_oracle(input: AllocInput, q_threshold: f64) -> TaskSplit {
    let mut out = TaskSplit {
        n_expected: input.n_expected,
        n_actual: input.n_actual,
        buffer_in: input.buffer_in,
        n_rsu_budget: input.n_rsu_budget,
        ..TaskSplit::default()
    };
    out.n_total = input.n_expected + input.buffer_in;
    let mut remaining = out.n_total;
    if input.feasible && input.q >= q_threshold {
        out.offload = true;
        out.n_off_expected = (input.q * input.n_rsu_budget as f64) as u64;
        if out.n_off_expected > remaining {
            out.overload = out.n_off_expected - remaining;
            out.n_off = remaining;
        } else {
            out.n_off = out.n_off_expected;
        }
        remaining -= out.n_off;
    }
    out.n_re = remaining;
    if remaining > input.n_actual {
        out.n_local = input.n_actual;
        out.buffer_out = remaining - input.n_actual;
    } else {
        out.n_local = remaining;
    }
    out
}

/// Random allocation inputs, including the corner cases.
pub fn random_alloc_input(rng: &mut SimRng) -> AllocInput {
    let q = match rng.random_range(0..10) {
        0 => 0.0,
        1 => 1.0,
        2 => 0.005,
        3 => rng.random_range(0.0..0.01),
        _ => rng.random(),
    };
    AllocInput {
        q,
        feasible: rng.random_bool(0.8),
        n_expected: rng.random_range(0..=200),
        n_actual: rng.random_range(0..=200),
        buffer_in: if rng.random_bool(0.3) { 0 } else { rng.random_range(0..=5000) },
        n_rsu_budget: rng.random_range(0..=2450),
    }
}

pub fn allocation_oracle_check(cases: usize, seed: u64) -> Check {
    let mut rng = stream(seed, Stream::Init, 99, 0, 0);
    let mut mismatches = 0usize;
    let mut first = None;
    for _ in 0..cases {
        let input = random_alloc_input(&mut rng);
        let got = allocate(input, 0.005);
        if got != flowchart_oracle(input, 0.005) {
            mismatches += 1;
            first.get_or_insert(input);
        }
    }
    Check::new(
        format!("allocation matches flowchart on {cases} cases"),
        mismatches == 0,
        match first {
            None => "all equal".to_string(),
            Some(i) => format!("{mismatches} mismatches, first {i:?}"),
        },
    )
}

/// Worst per-coordinate relative error between `grad` and central
/// differences of `loss` around `net`.
pub fn finite_difference_error(net: &Mlp, grad: &ParamVector, loss: impl Fn(&Mlp) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..net.params().len() {
        let mut plus = net.clone();
        plus.update_params(|v| v[i] += h).expect("finite");
        let mut minus = net.clone();
        minus.update_params(|v| v[i] -= h).expect("finite");
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let g = grad.values()[i];
        worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-6));
    }
    worst
}

fn uniform(rng: &mut SimRng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(lo..hi))
}

/// Finite-difference errors of every learned objective on width-8 networks.
pub fn gradient_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = stream(seed, Stream::Init, 77, 0, 0);
    let (s_dim, a_dim, batch) = (4, 3, 6);
    let hyper = AgentHyper {
        state_dim: s_dim,
        action_dim: a_dim,
        hidden_width: 8,
        n_hidden: 2,
        gamma: 0.9,
        lr: 1e-3,
        target_entropy: -(a_dim as f64),
        exploration_noise: 0.1,
    };
    let kaiming = |sizes: Vec<usize>, out, rng: &mut SimRng| Mlp::new(&sizes, out, HeadInit::Kaiming, rng);
    let states = uniform(&mut rng, batch, s_dim, -1.0, 1.0);
    let actions = uniform(&mut rng, batch, a_dim, -1.0, 1.0);
    let mut out = Vec::new();

    let encoder = kaiming(vec![6, 8, 8], Activation::Identity, &mut rng);
    let views = ContrastiveViews {
        first: uniform(&mut rng, 5, 6, 0.0, 1.0),
        second: uniform(&mut rng, 5, 6, 0.0, 1.0),
        raw: uniform(&mut rng, 5, 6, 0.0, 1.0),
    };
    let c = contrastive_loss_and_grad(&encoder, &views, 0.1, 1.0).expect("valid shapes");
    out.push((
        "dual-temperature contrastive loss",
        finite_difference_error(&encoder, &c.grad, |n| {
            surrogate_loss(n, &views, 0.1, &c.coefficients).expect("valid shapes")
        }),
    ));

    let critic = kaiming(hyper.sizes(s_dim + a_dim, 1), Activation::Identity, &mut rng);
    let targets: Array1<f64> = (0..batch).map(|i| i as f64 * 0.3 - 0.5).collect();
    let (_, g) = critic_loss(&critic, states.view(), actions.view(), &targets, true).expect("valid shapes");
    out.push((
        "critic regression loss",
        finite_difference_error(&critic, &g.expect("requested"), |n| {
            critic_loss(n, states.view(), actions.view(), &targets, false).expect("valid shapes").0
        }),
    ));

    let actor = kaiming(hyper.sizes(s_dim, 2 * a_dim), Activation::Identity, &mut rng);
    let c1 = kaiming(hyper.sizes(s_dim + a_dim, 1), Activation::Identity, &mut rng);
    let c2 = kaiming(hyper.sizes(s_dim + a_dim, 1), Activation::Identity, &mut rng);
    let noise = draw_noise(&mut rng, batch, a_dim);
    let beta = 0.2;
    let (_, g, _) = actor_loss(&actor, [&c1, &c2], states.view(), noise.view(), beta, true).expect("valid shapes");
    out.push((
        "stochastic actor loss",
        finite_difference_error(&actor, &g.expect("requested"), |n| {
            actor_loss(n, [&c1, &c2], states.view(), noise.view(), beta, false).expect("valid shapes").0
        }),
    ));

    let (_, d) = temperature_loss(0.3, -1.7, -3.0);
    let h = 1e-5;
    let fd = (temperature_loss(0.3 + h, -1.7, -3.0).0 - temperature_loss(0.3 - h, -1.7, -3.0).0) / (2.0 * h);
    out.push(("temperature loss", (fd - d).abs() / fd.abs().max(d.abs()).max(1e-6)));

    let det_actor = kaiming(hyper.sizes(s_dim, a_dim), Activation::Tanh, &mut rng);
    let (_, g) = deterministic_actor_loss(&det_actor, &c1, states.view(), true).expect("valid shapes");
    out.push((
        "deterministic actor loss",
        finite_difference_error(&det_actor, &g.expect("requested"), |n| {
            deterministic_actor_loss(n, &c1, states.view(), false).expect("valid shapes").0
        }),
    ));
    out
}

pub fn gradient_checks() -> Vec<Check> {
    gradient_errors(5)
        .into_iter()
        .map(|(name, err)| Check::new(format!("gradient: {name}"), err < GRADIENT_TOL, format!("max rel err {err:.2e}")))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingStats {
    pub fading_mean: f64,
    pub shadow_std_db: f64,
    pub flip_rate: f64,
    /// Largest relative deviation of a replay slot's hit count from uniform.
    pub replay_max_dev: f64,
}

pub fn sampling_stats(seed: u64) -> SamplingStats {
    let cfg = default_config();
    let n = 1_000_000;
    let mut rng = stream(seed, Stream::Channel, 0, 0, 0);
    let fading_mean = (0..n).map(|_| draw_small_scale(&mut rng)).sum::<f64>() / n as f64;

    let mut rng = stream(seed, Stream::Channel, 1, 0, 0);
    let draws: Vec<f64> = (0..n).map(|_| draw_shadow_db(&cfg, &mut rng)).collect();
    let m = draws.iter().sum::<f64>() / n as f64;
    let shadow_std_db = (draws.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64).sqrt();

    // A left-to-right ramp: after the first view's augmentations the ramp
    // direction tells whether the image was mirrored.
    let format = ImageFormat::TOY;
    let ramp: Array1<f64> = (0..format.pixels())
        .map(|i| 0.3 + 0.4 * (i % format.side) as f64 / (format.side - 1) as f64)
        .collect();
    let mut rng = stream(seed, Stream::SslLocal, 0, 0, 0);
    let trials = 100_000;
    let flips = (0..trials)
        .filter(|_| {
            let mut img = ramp.clone();
            augment_first(format, img.view_mut(), &mut rng);
            img[0] > img[format.side - 1]
        })
        .count();

    let mut buffer = ReplayBuffer::new(100);
    for i in 0..100 {
        buffer.push(Transition {
            state: vec![i as f64],
            action: vec![],
            reward: 0.0,
            next_state: vec![],
        });
    }
    let mut rng = stream(seed, Stream::Agent, 0, 0, 0);
    let mut hits = [0u64; 100];
    let (draws_n, minibatch) = (100_000, 64);
    for _ in 0..draws_n {
        for i in buffer.sample_indices(minibatch, &mut rng).expect("buffer large enough") {
            hits[i] += 1;
        }
    }
    let expected = (draws_n * minibatch) as f64 / 100.0;
    let replay_max_dev = hits.iter().map(|&h| (h as f64 - expected).abs() / expected).fold(0.0, f64::max);

    SamplingStats {
        fading_mean,
        shadow_std_db,
        flip_rate: flips as f64 / trials as f64,
        replay_max_dev,
    }
}

pub fn statistical_checks() -> Vec<Check> {
    let s = sampling_stats(1);
    vec![
        Check::new("fading mean", (s.fading_mean - 1.0).abs() <= 0.01, format!("{:.4}", s.fading_mean)),
        Check::new("shadowing std", (s.shadow_std_db - 8.0).abs() <= 0.1, format!("{:.4} dB", s.shadow_std_db)),
        Check::new("flip rate", (s.flip_rate - 0.5).abs() <= 0.01, format!("{:.4}", s.flip_rate)),
        Check::new("replay uniformity", s.replay_max_dev <= 0.05, format!("max dev {:.4}", s.replay_max_dev)),
    ]
}

/// Every check, in a fixed order.
pub fn run_all() -> Vec<Check> {
    let mut checks = equation_checks();
    checks.push(allocation_oracle_check(100_000, 1));
    checks.extend(gradient_checks());
    checks.extend(statistical_checks());
    checks
}
