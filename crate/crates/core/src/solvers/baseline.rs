use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::repair::repair_decision;
use crate::performance::{Decision, SlotState};

/// Everything computed on the device.
pub fn solve_local_only(state: &SlotState) -> Decision {
    Decision::zeros(state.user_count())
}

/// Everything offloaded at full power, server split evenly.
pub fn solve_full_offload_equal(state: &SlotState) -> Decision {
    let k = state.user_count();
    Decision {
        alpha: vec![1.0; k],
        beta: vec![1.0 / k as f64; k],
        power: state.users.iter().map(|u| u.max_power_w).collect(),
    }
}

/// Uniform random decision pushed through [`repair_decision`]. The stream
/// depends on `seed` and the slot index only.
pub fn solve_random_feasible(state: &SlotState, seed: u64) -> Decision {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(state.slot as u64 + 1);
    let k = state.user_count();
    let alpha = (0..k).map(|_| rng.random::<f64>()).collect();
    let raw_beta: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw_beta.iter().sum();
    let beta = raw_beta.iter().map(|b| b / total.max(1.0)).collect();
    let power = state
        .users
        .iter()
        .map(|u| rng.random::<f64>() * u.max_power_w)
        .collect();
    repair_decision(&Decision { alpha, beta, power }, state).decision
}
