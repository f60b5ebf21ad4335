//! Experiment configuration.
//!
//! A [`SimConfig`] is a flat JSON object. Omitted fields take their defaults,
//! unknown keys are rejected, and every loaded config is validated before it
//! is handed to the simulator.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Sac,
    Ddpg,
    Td3,
    Random,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [AgentKind::Sac, AgentKind::Ddpg, AgentKind::Td3, AgentKind::Random];

    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Sac => "sac",
            AgentKind::Ddpg => "ddpg",
            AgentKind::Td3 => "td3",
            AgentKind::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label() == s)
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Which SNR expression the achievable-rate computation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateFormula {
    /// `B log2(1 + p h / N0)`.
    Standard,
    /// `B log2(1 + p h d / N0)`, with the distance factor inside the SNR.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Mean over the models that were actually produced in the round.
    ProducedOnly,
    /// Mean over 2N models; a vehicle without an RSU model contributes its
    /// local model twice.
    #[serde(rename = "paper_2n")]
    Paper2n,
}

/// What happens when the uplink of model plus data would take longer than
/// `t_max_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransmissionOverflow {
    /// The vehicle is barred from offloading for the slot.
    LocalOnly,
    /// The uplink is cut off at `t_max_s`; delay and energy are charged for
    /// the full window and offloading proceeds.
    Truncate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_vehicles: usize,
    pub e_max: u64,
    pub s_max: u64,
    pub slot_duration_s: f64,
    pub t_max_s: f64,
    /// Bounds of the true training time T', as fractions of the slot.
    pub true_time_fraction_range: (f64, f64),
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub f_rsu_hz: f64,
    pub p_min_w: f64,
    pub p_max_w: f64,
    pub kappa: f64,
    pub cycles_per_kb: f64,
    pub data_size_kb: f64,
    pub model_size_kb: f64,
    pub total_bandwidth_hz: f64,
    pub noise_dbm: f64,
    pub shadow_mean_db: f64,
    pub shadow_std_db: f64,
    pub v_min_mps: f64,
    pub v_max_mps: f64,
    /// (left, right, straight)
    pub turn_probs: (f64, f64, f64),
    pub block_length_m: f64,
    pub rsu_position: (f64, f64),
    pub bs_position: (f64, f64),
    pub q_threshold: f64,
    /// (energy, overload, backlog)
    pub reward_weights: (f64, f64, f64),
    pub gamma: f64,
    pub tau_soft: f64,
    pub buffer_capacity: usize,
    pub warmup_size: usize,
    pub minibatch: usize,
    pub update_every_slots: u64,
    pub target_update_every_slots: u64,
    pub hidden_width: usize,
    pub n_hidden: usize,
    pub ssl_batch: usize,
    pub tau1: f64,
    pub tau2: f64,
    pub ssl_lr: f64,
    pub ssl_momentum: f64,
    pub agent_kind: AgentKind,
    pub rate_formula: RateFormula,
    pub aggregation_mode: AggregationMode,
    pub seed: u64,

    pub transmission_overflow: TransmissionOverflow,
    /// Adam step size for every actor, critic and temperature update.
    pub adam_lr: f64,
    /// `None` selects `-dim(action)`.
    pub target_entropy: Option<f64>,
    /// Multiplier applied to rewards before they enter critic targets.
    pub reward_scale: f64,
    /// Gaussian exploration noise std for DDPG/TD3 (raw action units).
    pub exploration_noise: f64,
    pub ssl_enabled: bool,
    /// SGD steps actually executed per allocated iteration (ceil-rounded).
    pub ssl_iteration_scale: f64,
    /// Synthetic images per class in the SSL training pool.
    pub ssl_pool_per_class: usize,
    /// Directory with CIFAR-10 `data_batch_*.bin` files; synthetic images
    /// are used when unset.
    pub cifar_dir: Option<String>,
}

impl Default for SimConfig {
    fn default() -> Self {
        default_config()
    }
}

/// Defaults for every field.
pub fn default_config() -> SimConfig {
    SimConfig {
        n_vehicles: 5,
        e_max: 3000,
        s_max: 100,
        slot_duration_s: 1.0,
        t_max_s: 0.02,
        true_time_fraction_range: (0.005, 1.0),
        f_min_hz: 5e7,
        f_max_hz: 4e8,
        f_rsu_hz: 6e9,
        p_min_w: 5.0,
        p_max_w: 200.0,
        kappa: 1e-27,
        cycles_per_kb: 1600.0,
        data_size_kb: 1500.0,
        model_size_kb: 11.2 * 1024.0,
        total_bandwidth_hz: 2e6,
        noise_dbm: -114.0,
        shadow_mean_db: 0.0,
        shadow_std_db: 8.0,
        v_min_mps: 10.0,
        v_max_mps: 15.0,
        turn_probs: (0.3, 0.3, 0.4),
        block_length_m: 250.0,
        rsu_position: (250.0, 250.0),
        bs_position: (0.0, 0.0),
        q_threshold: 0.005,
        reward_weights: (10.0, 0.001, 0.01),
        gamma: 0.99,
        tau_soft: 0.005,
        buffer_capacity: 1_000_000,
        warmup_size: 256,
        minibatch: 64,
        update_every_slots: 2,
        target_update_every_slots: 80,
        hidden_width: 512,
        n_hidden: 2,
        ssl_batch: 512,
        tau1: 0.1,
        tau2: 1.0,
        ssl_lr: 0.01,
        ssl_momentum: 0.9,
        agent_kind: AgentKind::Sac,
        rate_formula: RateFormula::Standard,
        aggregation_mode: AggregationMode::Paper2n,
        seed: 0,
        transmission_overflow: TransmissionOverflow::Truncate,
        adam_lr: 3e-4,
        target_entropy: None,
        reward_scale: 1.0,
        exploration_noise: 0.1,
        ssl_enabled: true,
        ssl_iteration_scale: 1.0,
        ssl_pool_per_class: 100,
        cifar_dir: None,
    }
}

impl SimConfig {
    /// Laptop-sized settings used by the acceptance runs: 200 episodes of 50
    /// slots, 64-wide networks and a 32-image toy SSL batch with one executed
    /// SGD step per 40 allocated iterations.
    pub fn desk_scale() -> SimConfig {
        SimConfig {
            e_max: 200,
            s_max: 50,
            hidden_width: 64,
            ssl_batch: 32,
            ssl_iteration_scale: 0.025,
            ssl_pool_per_class: 60,
            ..default_config()
        }
    }

    /// Cycles needed for one training iteration (`c * Z`).
    pub fn cycles_per_iteration(&self) -> f64 {
        self.cycles_per_kb * self.data_size_kb
    }

    pub fn state_dim(&self) -> usize {
        3 * self.n_vehicles
    }

    pub fn action_dim(&self) -> usize {
        3 * self.n_vehicles
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
            .unwrap_or(-(self.action_dim() as f64))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, field: &str, reason: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(field, reason))
            }
        }
        fn finite(v: f64) -> bool {
            v.is_finite()
        }

        check(self.n_vehicles >= 1, "n_vehicles", "must be positive")?;
        check(self.e_max >= 1, "e_max", "must be positive")?;
        check(self.s_max >= 1, "s_max", "must be positive")?;
        check(
            finite(self.slot_duration_s) && self.slot_duration_s > 0.0,
            "slot_duration_s",
            "must be positive",
        )?;
        check(
            finite(self.t_max_s) && self.t_max_s > 0.0 && self.t_max_s < self.slot_duration_s,
            "t_max_s",
            "must satisfy 0 < t_max_s < slot_duration_s",
        )?;
        let (lo, hi) = self.true_time_fraction_range;
        check(
            lo > 0.0 && lo <= hi && hi <= 1.0,
            "true_time_fraction_range",
            "must satisfy 0 < lower <= upper <= 1",
        )?;
        check(
            finite(self.f_min_hz) && self.f_min_hz > 0.0,
            "f_min_hz",
            "must be positive",
        )?;
        check(
            finite(self.f_max_hz) && self.f_min_hz < self.f_max_hz,
            "f_max_hz",
            "must exceed f_min_hz",
        )?;
        check(
            finite(self.f_rsu_hz) && self.f_rsu_hz > 0.0,
            "f_rsu_hz",
            "must be positive",
        )?;
        check(
            finite(self.p_min_w) && self.p_min_w >= 0.0,
            "p_min_w",
            "must be non-negative",
        )?;
        check(
            finite(self.p_max_w) && self.p_min_w < self.p_max_w,
            "p_max_w",
            "must exceed p_min_w",
        )?;
        check(finite(self.kappa) && self.kappa > 0.0, "kappa", "must be positive")?;
        check(
            finite(self.cycles_per_kb) && self.cycles_per_kb > 0.0,
            "cycles_per_kb",
            "must be positive",
        )?;
        check(
            finite(self.data_size_kb) && self.data_size_kb > 0.0,
            "data_size_kb",
            "must be positive",
        )?;
        check(
            finite(self.model_size_kb) && self.model_size_kb >= 0.0,
            "model_size_kb",
            "must be non-negative",
        )?;
        check(
            finite(self.total_bandwidth_hz) && self.total_bandwidth_hz > 0.0,
            "total_bandwidth_hz",
            "must be positive",
        )?;
        check(finite(self.noise_dbm), "noise_dbm", "must be finite")?;
        check(finite(self.shadow_mean_db), "shadow_mean_db", "must be finite")?;
        check(
            finite(self.shadow_std_db) && self.shadow_std_db >= 0.0,
            "shadow_std_db",
            "must be non-negative",
        )?;
        check(
            finite(self.v_min_mps) && self.v_min_mps > 0.0,
            "v_min_mps",
            "must be positive",
        )?;
        check(
            finite(self.v_max_mps) && self.v_min_mps <= self.v_max_mps,
            "v_max_mps",
            "must be at least v_min_mps",
        )?;
        let (l, r, s) = self.turn_probs;
        check(
            l >= 0.0 && r >= 0.0 && s >= 0.0 && ((l + r + s) - 1.0).abs() <= 1e-12,
            "turn_probs",
            "components must be non-negative and sum to 1",
        )?;
        check(
            finite(self.block_length_m) && self.block_length_m > 0.0,
            "block_length_m",
            "must be positive",
        )?;
        check(
            finite(self.rsu_position.0) && finite(self.rsu_position.1),
            "rsu_position",
            "must be finite",
        )?;
        check(
            finite(self.bs_position.0) && finite(self.bs_position.1),
            "bs_position",
            "must be finite",
        )?;
        // Zero is admitted so that the threshold ablation can switch the gate off.
        check(
            (0.0..1.0).contains(&self.q_threshold),
            "q_threshold",
            "must satisfy 0 <= q_threshold < 1",
        )?;
        let (w1, w2, w3) = self.reward_weights;
        check(
            [w1, w2, w3].iter().all(|w| finite(*w) && *w >= 0.0),
            "reward_weights",
            "must be non-negative",
        )?;
        check((0.0..=1.0).contains(&self.gamma), "gamma", "must lie in [0, 1]")?;
        check(
            (0.0..=1.0).contains(&self.tau_soft),
            "tau_soft",
            "must lie in [0, 1]",
        )?;
        check(self.minibatch >= 1, "minibatch", "must be positive")?;
        check(
            self.warmup_size >= self.minibatch,
            "warmup_size",
            "must be at least minibatch",
        )?;
        check(
            self.buffer_capacity >= self.warmup_size,
            "buffer_capacity",
            "must be at least warmup_size",
        )?;
        check(
            self.update_every_slots >= 1,
            "update_every_slots",
            "must be positive",
        )?;
        check(
            self.target_update_every_slots >= 1,
            "target_update_every_slots",
            "must be positive",
        )?;
        check(self.hidden_width >= 1, "hidden_width", "must be positive")?;
        check(self.n_hidden >= 1, "n_hidden", "must be positive")?;
        check(self.ssl_batch >= 1, "ssl_batch", "must be positive")?;
        check(finite(self.tau1) && self.tau1 > 0.0, "tau1", "must be positive")?;
        check(finite(self.tau2) && self.tau2 > 0.0, "tau2", "must be positive")?;
        check(
            finite(self.ssl_lr) && self.ssl_lr >= 0.0,
            "ssl_lr",
            "must be non-negative",
        )?;
        check(
            (0.0..1.0).contains(&self.ssl_momentum),
            "ssl_momentum",
            "must lie in [0, 1)",
        )?;
        check(
            finite(self.adam_lr) && self.adam_lr > 0.0,
            "adam_lr",
            "must be positive",
        )?;
        check(
            self.target_entropy.is_none_or(finite),
            "target_entropy",
            "must be finite",
        )?;
        check(
            finite(self.reward_scale) && self.reward_scale > 0.0,
            "reward_scale",
            "must be positive",
        )?;
        check(
            finite(self.exploration_noise) && self.exploration_noise >= 0.0,
            "exploration_noise",
            "must be non-negative",
        )?;
        check(
            finite(self.ssl_iteration_scale) && self.ssl_iteration_scale >= 0.0,
            "ssl_iteration_scale",
            "must be non-negative",
        )?;
        check(
            self.ssl_pool_per_class >= 1,
            "ssl_pool_per_class",
            "must be positive",
        )?;
        Ok(())
    }
}

fn known_fields() -> Vec<String> {
    match serde_json::to_value(default_config()) {
        Ok(Value::Object(map)) => map.keys().cloned().collect(),
        _ => unreachable!("config serializes to an object"),
    }
}

/// Parse a `--set key=value` right-hand side: JSON if it parses, else a string.
pub fn parse_override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Parses a config document, applies `key=value` overrides on top, then
/// validates.
pub fn load_config_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<SimConfig> {
    let value: Value = if text.trim().is_empty() {
        Value::Object(Map::new())
    } else {
        serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?
    };
    let Value::Object(mut map) = value else {
        return Err(Error::ConfigParse("top level must be an object".into()));
    };
    for (key, raw) in overrides {
        map.insert(key.clone(), parse_override_value(raw));
    }
    let known = known_fields();
    if let Some(unknown) = map.keys().find(|k| !known.contains(k)) {
        return Err(Error::invalid(unknown.clone(), "unknown field"));
    }
    let cfg: SimConfig = serde_json::from_value(Value::Object(map)).map_err(|e| {
        Error::ConfigParse(e.to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(text: &str) -> Result<SimConfig> {
    load_config_with_overrides(text, &[])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_table_defaults() {
        let cfg = load_config("{}").unwrap();
        assert_eq!(cfg.q_threshold, 0.005);
        assert_eq!(cfg.gamma, 0.99);
        assert_eq!(cfg.turn_probs, (0.3, 0.3, 0.4));
        assert_eq!(cfg, default_config());
    }

    #[test]
    fn defaults() {
        let cfg = default_config();
        assert_eq!(cfg.kappa, 1e-27);
        assert_eq!((cfg.tau1, cfg.tau2), (0.1, 1.0));
        assert_eq!(cfg.tau_soft, 0.005);
        assert_eq!(cfg.ssl_momentum, 0.9);
        assert_eq!(cfg.cycles_per_iteration(), 2.4e6);
        assert_eq!(cfg.model_size_kb, 11468.8);
        cfg.validate().unwrap();
        SimConfig::desk_scale().validate().unwrap();
    }

    #[test]
    fn gamma_out_of_range_names_gamma() {
        match load_config(r#"{"gamma": 1.5}"#) {
            Err(Error::ConfigInvalid { field, .. }) => assert_eq!(field, "gamma"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overrides_touch_only_named_fields() {
        let cfg = load_config(r#"{"n_vehicles": 5, "seed": 7}"#).unwrap();
        let expected = SimConfig {
            n_vehicles: 5,
            seed: 7,
            ..default_config()
        };
        assert_eq!(cfg, expected);
    }

    #[test]
    fn unknown_key_is_a_validation_error() {
        let err = load_config(r#"{"gamme": 0.9}"#).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("gamme"));
    }

    #[test]
    fn malformed_document_is_a_parse_error() {
        assert!(matches!(load_config("{gamma"), Err(Error::ConfigParse(_))));
        assert!(matches!(load_config("[1, 2]"), Err(Error::ConfigParse(_))));
    }

    #[test]
    fn set_overrides_match_file_edits() {
        let via_set = load_config_with_overrides(
            "{}",
            &[
                ("gamma".into(), "0.5".into()),
                ("agent_kind".into(), "td3".into()),
                ("turn_probs".into(), "[0, 0, 1]".into()),
            ],
        )
        .unwrap();
        let via_file =
            load_config(r#"{"gamma": 0.5, "agent_kind": "td3", "turn_probs": [0, 0, 1]}"#).unwrap();
        assert_eq!(via_set, via_file);
    }

    #[test]
    fn invariant_violations() {
        for (doc, field) in [
            (r#"{"f_min_hz": 5e8}"#, "f_max_hz"),
            (r#"{"p_min_w": 300}"#, "p_max_w"),
            (r#"{"q_threshold": 1.0}"#, "q_threshold"),
            (r#"{"turn_probs": [0.3, 0.3, 0.3]}"#, "turn_probs"),
            (r#"{"true_time_fraction_range": [0.5, 0.4]}"#, "true_time_fraction_range"),
            (r#"{"t_max_s": 1.0}"#, "t_max_s"),
            (r#"{"warmup_size": 10}"#, "warmup_size"),
        ] {
            match load_config(doc) {
                Err(Error::ConfigInvalid { field: f, .. }) => assert_eq!(f, field, "{doc}"),
                other => panic!("{doc}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn round_trip() {
        let cfg = load_config(r#"{"seed": 11, "agent_kind": "ddpg", "aggregation_mode": "produced_only"}"#)
            .unwrap();
        let again = load_config(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
    }
}
