//! CPU power, per-iteration cost and uplink cost for vehicles and the RSU.

use crate::config::{SimConfig, TransmissionOverflow};
use crate::error::{Error, Result};

/// Bits per kilobyte.
pub const BITS_PER_KB: f64 = 8192.0;

/// DVFS power `kappa * f^3`, for a vehicle CPU frequency within bounds.
pub fn dvfs_power(freq_hz: f64, cfg: &SimConfig) -> Result<f64> {
    let tol = 1e-9 * cfg.f_max_hz;
    if !(freq_hz >= cfg.f_min_hz - tol && freq_hz <= cfg.f_max_hz + tol) {
        return Err(Error::OutOfRange {
            what: "vehicle CPU frequency (Hz)",
            value: freq_hz,
            min: cfg.f_min_hz,
            max: cfg.f_max_hz,
        });
    }
    Ok(cfg.kappa * freq_hz.powi(3))
}

/// Seconds per training iteration at `freq_hz`.
pub fn iteration_delay(freq_hz: f64, cfg: &SimConfig) -> f64 {
    cfg.cycles_per_iteration() / freq_hz
}

/// Joules per training iteration at `freq_hz` (`kappa f^2 c Z`).
pub fn iteration_energy(freq_hz: f64, cfg: &SimConfig) -> f64 {
    cfg.kappa * freq_hz * freq_hz * cfg.cycles_per_iteration()
}

/// Uplink payload (data plus model) in bits.
pub fn payload_bits(cfg: &SimConfig) -> f64 {
    (cfg.data_size_kb + cfg.model_size_kb) * BITS_PER_KB
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    /// Uncapped `payload / rate`.
    pub raw_delay_s: f64,
    /// Delay charged to the slot.
    pub delay_s: f64,
    pub energy_j: f64,
    /// False when the uplink overflows `t_max_s` under the local-only policy.
    pub feasible: bool,
}

pub fn transmission(power_w: f64, rate_bps: f64, cfg: &SimConfig) -> Transmission {
    let raw_delay_s = if rate_bps > 0.0 {
        payload_bits(cfg) / rate_bps
    } else {
        f64::INFINITY
    };
    if raw_delay_s <= cfg.t_max_s {
        return Transmission {
            raw_delay_s,
            delay_s: raw_delay_s,
            energy_j: power_w * raw_delay_s,
            feasible: true,
        };
    }
    match cfg.transmission_overflow {
        TransmissionOverflow::LocalOnly => Transmission {
            raw_delay_s,
            delay_s: cfg.t_max_s,
            energy_j: 0.0,
            feasible: false,
        },
        TransmissionOverflow::Truncate => Transmission {
            raw_delay_s,
            delay_s: cfg.t_max_s,
            energy_j: power_w * cfg.t_max_s,
            feasible: true,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    pub e_local_j: f64,
    pub e_rsu_j: f64,
    pub e_trans_j: f64,
    pub e_total_j: f64,
}

impl EnergyBreakdown {
    /// Slot energy of one vehicle. RSU and uplink terms only count when the
    /// vehicle offloads.
    pub fn compose(
        offload: bool,
        n_local: u64,
        n_off: u64,
        freq_hz: f64,
        trans_energy_j: f64,
        cfg: &SimConfig,
    ) -> Self {
        let g = if offload { 1.0 } else { 0.0 };
        let e_local_j = iteration_energy(freq_hz, cfg) * n_local as f64;
        let e_rsu_j = g * iteration_energy(cfg.f_rsu_hz, cfg) * n_off as f64;
        let e_trans_j = g * trans_energy_j;
        EnergyBreakdown {
            e_local_j,
            e_rsu_j,
            e_trans_j,
            e_total_j: g * e_rsu_j + e_local_j + g * e_trans_j,
        }
    }
}
