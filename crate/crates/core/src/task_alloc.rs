//! Per-slot split of a vehicle's training iterations between the vehicle,
//! the RSU and the backlog carried into the next slot.

use crate::compute::iteration_delay;
use crate::config::SimConfig;

/// Floors a non-negative iteration estimate, absorbing rounding noise so that
/// an exact integer computed in floating point is not lost.
fn floor_count(x: f64) -> u64 {
    if !(x > 0.0) {
        return 0;
    }
    (x * (1.0 + 1e-12) + 1e-12).floor() as u64
}

/// Iterations the vehicle could run with the whole compute window.
pub fn expected_iterations(freq_hz: f64, cfg: &SimConfig) -> u64 {
    floor_count((cfg.slot_duration_s - cfg.t_max_s) * freq_hz / cfg.cycles_per_iteration())
}

/// Iterations the vehicle actually has time for, given true training time T'.
pub fn actual_iterations(freq_hz: f64, true_time_s: f64, cfg: &SimConfig) -> u64 {
    floor_count((true_time_s - cfg.t_max_s).max(0.0) * freq_hz / cfg.cycles_per_iteration())
}

/// RSU iteration budget left after the uplink.
pub fn rsu_budget(trans_delay_s: f64, cfg: &SimConfig) -> u64 {
    let window = cfg.slot_duration_s - cfg.t_max_s - trans_delay_s;
    floor_count(window / iteration_delay(cfg.f_rsu_hz, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TaskSplit {
    pub n_expected: u64,
    pub n_actual: u64,
    pub buffer_in: u64,
    pub n_total: u64,
    pub n_rsu_budget: u64,
    pub n_off_expected: u64,
    pub n_off: u64,
    pub n_re: u64,
    pub n_local: u64,
    pub overload: u64,
    pub buffer_out: u64,
    pub offload: bool,
}

/// Inputs to one allocation decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocInput {
    pub q: f64,
    pub feasible: bool,
    pub n_expected: u64,
    pub n_actual: u64,
    pub buffer_in: u64,
    pub n_rsu_budget: u64,
}

pub fn allocate(input: AllocInput, q_threshold: f64) -> TaskSplit {
    let offload = input.feasible && input.q >= q_threshold;
    let n_total = input.n_expected + input.buffer_in;
    let n_off_expected = if offload {
        (input.q * input.n_rsu_budget as f64).floor() as u64
    } else {
        0
    };
    let n_off = n_off_expected.min(n_total);
    let overload = n_off_expected.saturating_sub(n_total);
    let n_re = n_total - n_off;
    let n_local = n_re.min(input.n_actual);
    TaskSplit {
        n_expected: input.n_expected,
        n_actual: input.n_actual,
        buffer_in: input.buffer_in,
        n_total,
        n_rsu_budget: input.n_rsu_budget,
        n_off_expected,
        n_off,
        n_re,
        n_local,
        overload,
        buffer_out: n_re - n_local,
        offload,
    }
}
