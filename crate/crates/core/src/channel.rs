//! Geometry, path loss, Rician small-scale fading and the SINR offload rate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{Scenario, SystemConfig};

/// Composite gains and 3D distances of every user for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSnapshot {
    pub gains: Vec<f64>,
    pub distances: Vec<f64>,
}

impl ChannelSnapshot {
    pub fn for_slot(scenario: &Scenario, slot: usize) -> Result<Self> {
        let config = &scenario.config;
        let positions = scenario
            .positions
            .get(slot)
            .ok_or_else(|| Error::Precondition(format!("slot {slot} out of range")))?;
        let draws = &scenario.fading_draws[slot];
        let mut gains = Vec::with_capacity(positions.len());
        let mut distances = Vec::with_capacity(positions.len());
        for (pos, hbar) in positions.iter().zip(draws) {
            let d = distance(*pos, config.server_pos, config.server_height);
            gains.push(large_scale_gain(d, config.ref_gain)? * small_scale_gain(*hbar, config.rician_k));
            distances.push(d);
        }
        Ok(Self { gains, distances })
    }
}

/// Euclidean distance from a ground user to an elevated server.
pub fn distance(user_pos: [f64; 2], server_pos: [f64; 2], server_height: f64) -> f64 {
    let dx = user_pos[0] - server_pos[0];
    let dy = user_pos[1] - server_pos[1];
    (dx * dx + dy * dy + server_height * server_height).sqrt()
}

/// Free-space path loss `g0 / d²`. Errors at `d = 0` instead of clamping.
pub fn large_scale_gain(d: f64, ref_gain: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("path loss undefined at distance {d}")));
    }
    Ok(ref_gain / (d * d))
}

/// Rician power gain `|√(κ/(κ+1)) + √(1/(κ+1))·h̄|²`.
pub fn small_scale_gain(hbar: Complex64, rician_k: f64) -> f64 {
    let los = (rician_k / (rician_k + 1.0)).sqrt();
    let scatter = (1.0 / (rician_k + 1.0)).sqrt();
    (Complex64::new(los, 0.0) + hbar * scatter).norm_sqr()
}

pub fn channel_gain(
    user_pos: [f64; 2],
    hbar: Complex64,
    config: &SystemConfig,
) -> Result<f64> {
    let d = distance(user_pos, config.server_pos, config.server_height);
    Ok(large_scale_gain(d, config.ref_gain)? * small_scale_gain(hbar, config.rician_k))
}

/// Shannon rate of user `k` treating every other transmitting user as
/// interference. Zero when `p_k = 0`.
pub fn offload_rate(k: usize, powers: &[f64], gains: &[f64], config: &SystemConfig) -> f64 {
    let signal = powers[k] * gains[k];
    if signal <= 0.0 {
        return 0.0;
    }
    let interference: f64 = powers
        .iter()
        .zip(gains)
        .enumerate()
        .filter(|&(l, _)| l != k)
        .map(|(_, (p, h))| p * h)
        .sum();
    let sinr = signal / (interference + config.noise_power_w);
    config.bandwidth_hz * sinr.ln_1p() / std::f64::consts::LN_2
}

/// Rates of all users for one power vector.
pub fn offload_rates(powers: &[f64], gains: &[f64], config: &SystemConfig) -> Vec<f64> {
    (0..powers.len())
        .map(|k| offload_rate(k, powers, gains, config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> SystemConfig {
        SystemConfig::default()
    }

    #[test]
    fn distance_cases() {
        assert_relative_eq!(distance([100.0, 100.0], [150.0, 150.0], 20.0), 5400f64.sqrt());
        assert_eq!(distance([150.0, 150.0], [150.0, 150.0], 20.0), 20.0);
        assert_eq!(distance([0.0, 0.0], [0.0, 0.0], 0.0), 0.0);
    }

    #[test]
    fn path_loss() {
        assert_relative_eq!(large_scale_gain(100.0, 1e-5).unwrap(), 1e-9, max_relative = 1e-12);
        assert_eq!(large_scale_gain(1.0, 1e-5).unwrap(), 1e-5);
        assert_relative_eq!(large_scale_gain(10.0, 1e-5).unwrap(), 1e-7, max_relative = 1e-12);
        assert!(matches!(large_scale_gain(0.0, 1e-5), Err(Error::Domain(_))));
    }

    #[test]
    fn rician_cases() {
        let zero = Complex64::new(0.0, 0.0);
        assert_relative_eq!(small_scale_gain(zero, 50.0), 50.0 / 51.0, max_relative = 1e-14);
        assert_eq!(small_scale_gain(zero, 0.0), 0.0);
        assert_relative_eq!(small_scale_gain(Complex64::new(1.0, 0.0), 0.0), 1.0);
    }

    #[test]
    fn composite_gain() {
        let c = SystemConfig {
            server_pos: [0.0, 0.0],
            server_height: 100.0,
            ..cfg()
        };
        let g = channel_gain([0.0, 0.0], Complex64::new(0.0, 0.0), &c).unwrap();
        assert_relative_eq!(g, 1e-9 * 50.0 / 51.0, max_relative = 1e-12);

        let c0 = SystemConfig { rician_k: 0.0, ..c.clone() };
        assert_eq!(channel_gain([40.0, 0.0], Complex64::new(0.0, 0.0), &c0).unwrap(), 0.0);

        let near = SystemConfig {
            server_height: 1.0,
            rician_k: 1e9,
            ..c
        };
        let g = channel_gain([0.0, 0.0], Complex64::new(0.0, 0.0), &near).unwrap();
        assert_relative_eq!(g, 1e-5, max_relative = 1e-6);
    }

    #[test]
    fn zero_distance_propagates() {
        let c = SystemConfig {
            server_height: 0.0,
            ..cfg()
        };
        assert!(channel_gain(c.server_pos, Complex64::new(0.0, 0.0), &c).is_err());
    }

    #[test]
    fn zero_power_means_zero_rate() {
        assert_eq!(offload_rate(0, &[0.0, 1.0], &[1e-9, 1e-9], &cfg()), 0.0);
    }

    #[test]
    fn two_user_interference() {
        let rates = offload_rates(&[1.0, 1.0], &[1e-9, 1e-9], &cfg());
        let sinr: f64 = 1e-9 / (1e-9 + 1e-10);
        assert_relative_eq!(rates[0], 1e7 * (1.0 + sinr).log2(), max_relative = 1e-12);
        assert_eq!(rates[0], rates[1]);
    }

    proptest! {
        #[test]
        fn rate_monotone_in_own_and_other_power(
            pk in 0.01f64..2.0, pl in 0.0f64..2.0, dp in 0.01f64..1.0,
            hk in 1e-11f64..1e-7, hl in 1e-11f64..1e-7,
        ) {
            let c = cfg();
            let base = offload_rate(0, &[pk, pl], &[hk, hl], &c);
            prop_assert!(offload_rate(0, &[pk + dp, pl], &[hk, hl], &c) > base);
            prop_assert!(offload_rate(0, &[pk, pl + dp], &[hk, hl], &c) < base);
        }

        #[test]
        fn more_noise_lowers_rate(p in 0.01f64..2.0, h in 1e-11f64..1e-7, noise in 1e-12f64..1e-8) {
            let c = SystemConfig { noise_power_w: noise, ..cfg() };
            let c2 = SystemConfig { noise_power_w: 2.0 * noise, ..cfg() };
            prop_assert!(offload_rate(0, &[p], &[h], &c2) < offload_rate(0, &[p], &[h], &c));
        }

        #[test]
        fn small_scale_is_real_nonnegative(re in -5.0f64..5.0, im in -5.0f64..5.0, k in 0.0f64..1e3) {
            let g = small_scale_gain(Complex64::new(re, im), k);
            prop_assert!(g.is_finite() && g >= 0.0);
        }

        #[test]
        fn gain_is_exact_product(x in 0.0f64..300.0, y in 0.0f64..300.0, re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let c = cfg();
            let h = Complex64::new(re, im);
            let d = distance([x, y], c.server_pos, c.server_height);
            let expected = large_scale_gain(d, c.ref_gain).unwrap() * small_scale_gain(h, c.rician_k);
            prop_assert_eq!(channel_gain([x, y], h, &c).unwrap(), expected);
        }
    }
}
