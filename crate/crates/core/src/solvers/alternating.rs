//! Block-coordinate descent over `(α, β, p)`.
//!
//! Each round runs three steps and keeps a step only if it does not raise
//! the slot's mean latency:
//!
//! 1. `α` per user at the point where the local branch and the remote
//!    branch take equally long, clamped to the user's energy-feasible range;
//! 2. `β` proportional to each user's edge demand `α_k·φ_server·D_k`, with
//!    `α` re-equalised for the new shares;
//! 3. `p` per user by grid line search on `[0, P_max]` with the others
//!    fixed, each candidate paired with that user's best-response `α`.

use std::cmp::Ordering;

use super::SolverSpec;
use crate::performance::{Decision, SlotState, CONSTRAINT_TOL};

/// Offloading ratio that equalises `(1 − α)·a` with `α·(1/r + b/β)`, where
/// `a` is the user's local seconds per bit and `b` the server's. Zero when
/// the remote branch is unusable.
pub fn latency_equalizing_alpha(
    local_secs_per_bit: f64,
    rate_bps: f64,
    server_secs_per_bit: f64,
    beta: f64,
) -> f64 {
    if rate_bps <= 0.0 || beta <= 0.0 {
        return 0.0;
    }
    let remote = 1.0 / rate_bps + server_secs_per_bit / beta;
    (local_secs_per_bit / (local_secs_per_bit + remote)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternatingTrace {
    pub decision: Decision,
    /// Mean latency of the starting point followed by one entry per round.
    pub objectives: Vec<f64>,
}

pub fn solve_alternating(state: &SlotState, spec: &SolverSpec) -> Decision {
    alternating_trace(state, spec).decision
}

/// Total energy over budget across users; zero for a feasible decision.
fn energy_excess(state: &SlotState, d: &Decision) -> f64 {
    state
        .evaluate(d)
        .users
        .iter()
        .zip(&state.energy_budget_j)
        .map(|(u, b)| {
            let e = u.energy_j();
            if e > b + CONSTRAINT_TOL {
                e - b
            } else {
                0.0
            }
        })
        .sum()
}

/// Feasibility first, then latency.
fn score(state: &SlotState, d: &Decision) -> (f64, f64) {
    (energy_excess(state, d), state.mean_latency(d))
}

fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.1 < b.1,
    }
}

fn not_worse(a: (f64, f64), b: (f64, f64)) -> bool {
    !better(b, a)
}

/// Best `α` for user `k` with its link fixed: the latency-equalising point
/// clamped to the energy-feasible range, or the cheaper end when nothing
/// fits.
fn respond_alpha(state: &SlotState, k: usize, beta: f64, power: f64, rate: f64) -> f64 {
    let ideal = latency_equalizing_alpha(state.users[k].secs_per_bit(), rate, state.config.server_secs_per_bit(), beta);
    let served = ideal > 0.0;
    let (p, r) = if served { (power, rate) } else { (0.0, 0.0) };
    match state.feasible_alpha_range(k, p, r) {
        // Latency is convex piecewise-linear in α with its minimum at
        // `ideal`, so clamping gives the constrained optimum.
        Some((lo, hi)) => ideal.clamp(lo, hi),
        None => {
            let (e0, e1) = state.energy_endpoints(k, p, r);
            if served && e1 < e0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

fn equalize_alpha(state: &SlotState, beta: &[f64], power: &[f64]) -> Vec<f64> {
    let rates = state.rates(power);
    (0..state.user_count())
        .map(|k| respond_alpha(state, k, beta[k], power[k], rates[k]))
        .collect()
}

fn proportional_beta(state: &SlotState, alpha: &[f64], current: &[f64]) -> Vec<f64> {
    let demand: Vec<f64> = (0..state.user_count())
        .map(|k| alpha[k] * state.config.server_cycles_per_bit * state.task_bits[k])
        .collect();
    let total: f64 = demand.iter().sum();
    if total <= 0.0 {
        return current.to_vec();
    }
    demand.iter().map(|d| d / total).collect()
}

/// Per user, tries every grid power together with its best-response `α`
/// and keeps the best pair. Other users' rates change through interference
/// and are accounted for in the score.
fn power_line_search(state: &SlotState, d: &mut Decision, steps: usize) {
    for k in 0..state.user_count() {
        let pmax = state.users[k].max_power_w;
        let mut best_pair = (d.power[k], d.alpha[k]);
        let mut best = score(state, d);
        for j in 0..steps {
            let p = j as f64 / (steps - 1) as f64 * pmax;
            d.power[k] = p;
            let rate = state.rates(&d.power)[k];
            d.alpha[k] = respond_alpha(state, k, d.beta[k], p, rate);
            let s = score(state, d);
            // Ties go to the smaller power.
            if better(s, best) || (s == best && p < best_pair.0) {
                best = s;
                best_pair = (p, d.alpha[k]);
            }
        }
        (d.power[k], d.alpha[k]) = best_pair;
    }
}

pub fn alternating_trace(state: &SlotState, spec: &SolverSpec) -> AlternatingTrace {
    let k = state.user_count();
    let beta = vec![1.0 / k as f64; k];
    let power: Vec<f64> = state.users.iter().map(|u| u.max_power_w).collect();
    let alpha = equalize_alpha(state, &beta, &power);
    let mut d = Decision { alpha, beta, power };
    let mut current = score(state, &d);
    let mut objectives = vec![current.1];

    for _ in 0..spec.max_rounds {
        let start = current;

        let alpha = equalize_alpha(state, &d.beta, &d.power);
        let candidate = Decision { alpha, ..d.clone() };
        let s = score(state, &candidate);
        if not_worse(s, current) {
            d = candidate;
            current = s;
        }

        let beta = proportional_beta(state, &d.alpha, &d.beta);
        let alpha = equalize_alpha(state, &beta, &d.power);
        let candidate = Decision {
            alpha,
            beta,
            power: d.power.clone(),
        };
        if not_worse(score(state, &candidate), current) {
            d = candidate;
        }

        power_line_search(state, &mut d, spec.power_steps);
        current = score(state, &d);
        objectives.push(current.1);

        let improved = start.0 - current.0 > 0.0 || start.1 - current.1 > 1e-12 * start.1.abs().max(1e-300);
        if !improved {
            break;
        }
    }

    AlternatingTrace {
        decision: d,
        objectives,
    }
}
