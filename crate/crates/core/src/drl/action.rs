use crate::config::SimConfig;

/// Physical allocation decoded from a raw action in `[-1, 1]^{3N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedAction {
    pub powers_w: Vec<f64>,
    pub freqs_hz: Vec<f64>,
    pub ratios: Vec<f64>,
}

fn affine(raw: f64, lo: f64, hi: f64) -> f64 {
    let x = raw.clamp(-1.0, 1.0);
    (lo + (x + 1.0) * 0.5 * (hi - lo)).clamp(lo, hi)
}

/// Blocks are `[powers | frequencies | ratios]`. Ratios are shifted to
/// `[0, 1]` and scaled down together when their sum exceeds one.
pub fn map_action(raw: &[f64], cfg: &SimConfig) -> MappedAction {
    let n = cfg.n_vehicles;
    assert_eq!(raw.len(), 3 * n, "raw action width");
    let powers_w = raw[..n].iter().map(|&r| affine(r, cfg.p_min_w, cfg.p_max_w)).collect();
    let freqs_hz = raw[n..2 * n].iter().map(|&r| affine(r, cfg.f_min_hz, cfg.f_max_hz)).collect();
    let mut ratios: Vec<f64> = raw[2 * n..].iter().map(|&r| affine(r, 0.0, 1.0)).collect();
    let sum: f64 = ratios.iter().sum();
    if sum > 1.0 {
        ratios.iter_mut().for_each(|q| *q /= sum);
    }
    MappedAction {
        powers_w,
        freqs_hz,
        ratios,
    }
}

/// Negative weighted sum of energy, overload and backlog over all vehicles.
pub fn reward(energy_j: &[f64], overloads: &[u64], buffers: &[u64], cfg: &SimConfig) -> f64 {
    let (w_e, w_o, w_b) = cfg.reward_weights;
    let mut total = 0.0;
    for ((e, o), b) in energy_j.iter().zip(overloads).zip(buffers) {
        total += w_e * e + w_o * *o as f64 + w_b * *b as f64;
    }
    -total
}
