//! Uplink channel between a vehicle and the RSU.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{RateFormula, SimConfig};
use crate::error::{Error, Result};

/// Draws of the small-scale fading below this value are rejected.
pub const MIN_SMALL_SCALE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSample {
    pub distance_m: f64,
    pub path_loss_db: f64,
    pub shadow_db: f64,
    pub small_scale: f64,
    /// Large-scale attenuation (linear, <= 1 for realistic losses).
    pub alpha: f64,
    pub gain: f64,
    pub bandwidth_hz: f64,
}

/// Urban macro-cell path loss, `128.1 + 37.6 log10(d / 1 km)` dB.
pub fn path_loss_db(distance_m: f64) -> Result<f64> {
    if !(distance_m >= 1.0) {
        return Err(Error::OutOfRange {
            what: "path-loss distance (m)",
            value: distance_m,
            min: 1.0,
            max: f64::INFINITY,
        });
    }
    Ok(128.1 + 37.6 * (distance_m / 1000.0).log10())
}

pub fn noise_watts(noise_dbm: f64) -> f64 {
    10f64.powf((noise_dbm - 30.0) / 10.0)
}

pub fn per_vehicle_bandwidth(cfg: &SimConfig) -> f64 {
    cfg.total_bandwidth_hz / cfg.n_vehicles as f64
}

/// Unit-mean exponential via inverse CDF, redrawn while below
/// [`MIN_SMALL_SCALE`].
pub fn draw_small_scale<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        let m = -(1.0 - u).ln();
        if m > MIN_SMALL_SCALE {
            return m;
        }
    }
}

pub fn draw_shadow_db<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> f64 {
    if cfg.shadow_std_db == 0.0 {
        return cfg.shadow_mean_db;
    }
    Normal::new(cfg.shadow_mean_db, cfg.shadow_std_db)
        .expect("validated std")
        .sample(rng)
}

impl ChannelSample {
    /// Deterministic assembly from already-drawn shadowing and fading.
    pub fn from_draws(distance_m: f64, shadow_db: f64, small_scale: f64, cfg: &SimConfig) -> Result<Self> {
        let path_loss_db = path_loss_db(distance_m)?;
        let alpha = 10f64.powf(-path_loss_db / 10.0) * 10f64.powf(shadow_db / 10.0);
        Ok(ChannelSample {
            distance_m,
            path_loss_db,
            shadow_db,
            small_scale,
            alpha,
            gain: alpha * small_scale,
            bandwidth_hz: per_vehicle_bandwidth(cfg),
        })
    }
}

pub fn sample_channel<R: Rng + ?Sized>(distance_m: f64, cfg: &SimConfig, rng: &mut R) -> Result<ChannelSample> {
    let shadow = draw_shadow_db(cfg, rng);
    let m = draw_small_scale(rng);
    ChannelSample::from_draws(distance_m, shadow, m, cfg)
}

pub fn snr(sample: &ChannelSample, power_w: f64, cfg: &SimConfig) -> f64 {
    let received = power_w * sample.gain;
    let received = match cfg.rate_formula {
        RateFormula::Standard => received,
        RateFormula::PaperLiteral => received * sample.distance_m,
    };
    received / noise_watts(cfg.noise_dbm)
}

/// Shannon rate in bits/s over the vehicle's bandwidth share.
pub fn achievable_rate(sample: &ChannelSample, power_w: f64, cfg: &SimConfig) -> f64 {
    sample.bandwidth_hz * snr(sample, power_w, cfg).ln_1p() / std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;
    use rand::RngCore;

    /// Replays a fixed list of raw words, then repeats the last one.
    struct Scripted(Vec<u64>, usize);

    impl RngCore for Scripted {
        fn next_u32(&mut self) -> u32 {
            self.next_u64() as u32
        }
        fn next_u64(&mut self) -> u64 {
            let v = self.0[self.1.min(self.0.len() - 1)];
            self.1 += 1;
            v
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            for b in dst {
                *b = self.next_u64() as u8;
            }
        }
    }

    #[test]
    fn path_loss_table() {
        assert!((path_loss_db(1000.0).unwrap() - 128.1).abs() < 1e-12);
        assert!((path_loss_db(100.0).unwrap() - 90.5).abs() < 1e-12);
        let expected = 128.1 + 37.6 * 2f64.log10();
        assert!((path_loss_db(2000.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 139.418728).abs() < 1e-6);
        assert!(path_loss_db(0.5).is_err());
    }

    #[test]
    fn zero_fading_draw_is_resampled() {
        // First word maps to u = 0 (m = 0), second to u = 0.5.
        let mut rng = Scripted(vec![0, 1u64 << 63], 0);
        let m = draw_small_scale(&mut rng);
        assert!((m - 2f64.ln()).abs() < 1e-15);
        assert_eq!(rng.1, 2);
    }

    #[test]
    fn unit_draws_at_one_km() {
        let cfg = default_config();
        let s = ChannelSample::from_draws(1000.0, 0.0, 1.0, &cfg).unwrap();
        let expected = 10f64.powf(-12.81);
        assert!(((s.gain - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn rate_examples() {
        let cfg = default_config();
        assert_eq!(per_vehicle_bandwidth(&cfg), 4e5);
        let mut s = ChannelSample::from_draws(100.0, 0.0, 1.0, &cfg).unwrap();
        s.gain = 0.0;
        assert_eq!(achievable_rate(&s, 10.0, &cfg), 0.0);
        // Choose the gain so that SNR = 1 at p = 10 W.
        s.gain = noise_watts(cfg.noise_dbm) / 10.0;
        assert!((achievable_rate(&s, 10.0, &cfg) - 4e5).abs() < 1e-6);
    }

    #[test]
    fn paper_literal_multiplies_by_distance() {
        let std_cfg = default_config();
        let lit = SimConfig {
            rate_formula: RateFormula::PaperLiteral,
            ..default_config()
        };
        let s = ChannelSample::from_draws(200.0, 0.0, 1.0, &std_cfg).unwrap();
        assert!((snr(&s, 5.0, &lit) / snr(&s, 5.0, &std_cfg) - 200.0).abs() < 1e-9);
    }

    #[test]
    fn alpha_decreases_with_distance() {
        let cfg = default_config();
        let mut last = f64::INFINITY;
        for d in [1.0, 2.0, 10.0, 100.0, 350.0, 1000.0, 5000.0] {
            let a = ChannelSample::from_draws(d, 3.0, 1.0, &cfg).unwrap().alpha;
            assert!(a < last);
            last = a;
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let cfg = default_config();
        let draw = || {
            let mut rng = crate::rng::stream(9, crate::rng::Stream::Channel, 1, 1, 1);
            sample_channel(123.0, &cfg, &mut rng).unwrap()
        };
        let (a, b) = (draw(), draw());
        assert_eq!(a.gain.to_bits(), b.gain.to_bits());
        assert_eq!(a.shadow_db.to_bits(), b.shadow_db.to_bits());
    }
}
