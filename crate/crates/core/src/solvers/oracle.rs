//! Exhaustive grid search, used as a reference for small instances.
//!
//! Server shares are enumerated over the simplex grid `{j/(R−1)}^K` with
//! `Σβ ≤ 1`, powers over `linspace(0, P_max, R)` per user. For a fixed
//! `(β, p)` each user's latency and energy depend on its own `α` only, so
//! the best `α` is picked per user from `linspace(0, 1, R)` plus the
//! latency-equalising point clamped to the energy-feasible range. That is
//! the same optimum as enumerating the full `α` product.

use std::cmp::Ordering;

use rayon::prelude::*;

use super::{
    latency_equalizing_alpha, solve_alternating, solve_full_offload_equal, solve_local_only, solve_random_feasible,
    SolverSpec,
};
use crate::error::{Error, Result};
use crate::performance::{Decision, SlotState, CONSTRAINT_TOL};

/// Refuse enumerations larger than this many decision evaluations.
pub const DEFAULT_EVAL_BUDGET: f64 = 1e8;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Nominal size of the enumerated product for `users` users at grid
/// resolution `resolution`: `R^K` offloading ratios times the simplex
/// points times `R^K` powers.
pub fn enumeration_count(users: usize, resolution: usize) -> f64 {
    let r = resolution as f64;
    let simplex = binomial(resolution - 1 + users, users);
    r.powi(users as i32) * simplex * r.powi(users as i32)
}

fn linspace(hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| j as f64 / (n - 1) as f64 * hi).collect()
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn simplex_grid(users: usize, resolution: usize) -> Vec<Vec<f64>> {
    let steps = resolution - 1;
    let mut out = Vec::new();
    let mut idx = vec![0usize; users];
    loop {
        if idx.iter().sum::<usize>() <= steps {
            out.push(idx.iter().map(|&j| j as f64 / steps as f64).collect());
        }
        // Odometer increment.
        let mut pos = 0;
        loop {
            if pos == users {
                return out;
            }
            idx[pos] += 1;
            if idx[pos] <= steps {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

struct Candidate {
    objective: f64,
    decision: Decision,
}

fn prefer(a: &Candidate, b: &Candidate) -> bool {
    match a.objective.total_cmp(&b.objective) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.decision.lex_cmp(&b.decision) == Ordering::Less,
    }
}

/// Best feasible `α` for each user given `(β, p)`; `None` if some user has
/// no energy-feasible choice.
fn best_alphas(state: &SlotState, alphas: &[Vec<f64>], beta: &[f64], power: &[f64]) -> Option<(f64, Vec<f64>)> {
    let rates = state.rates(power);
    let server_spb = state.config.server_secs_per_bit();
    let mut total = 0.0;
    let mut chosen = Vec::with_capacity(state.user_count());
    for k in 0..state.user_count() {
        let budget = state.energy_budget_j[k] + CONSTRAINT_TOL;
        let mut extra = None;
        let ideal = latency_equalizing_alpha(state.users[k].secs_per_bit(), rates[k], server_spb, beta[k]);
        if let Some((lo, hi)) = state.feasible_alpha_range(k, power[k], rates[k]) {
            extra = Some(ideal.clamp(lo, hi));
        }
        let mut best: Option<(f64, f64)> = None;
        for &a in alphas[k].iter().chain(extra.iter()) {
            let u = state.evaluate_user(k, a, beta[k], power[k], rates[k]);
            if u.energy_j() > budget || !u.total_latency_s.is_finite() {
                continue;
            }
            let l = u.total_latency_s;
            let take = match best {
                None => true,
                Some((bl, ba)) => l < bl || (l == bl && a < ba),
            };
            if take {
                best = Some((l, a));
            }
        }
        let (l, a) = best?;
        total += l;
        chosen.push(a);
    }
    Some((total / state.user_count() as f64, chosen))
}

/// Grid search anchored on every baseline decision and the alternating
/// heuristic's, so its result is never worse than any of them.
pub fn solve_grid_oracle(state: &SlotState, spec: &SolverSpec) -> Result<Decision> {
    let anchors = [
        solve_local_only(state),
        solve_full_offload_equal(state),
        solve_random_feasible(state, spec.seed),
        solve_alternating(state, spec),
    ];
    solve_grid_oracle_with_anchors(state, spec, &anchors)
}

/// Grid search whose axes are extended with every coordinate of `anchors`
/// (and the whole `β` vector of each). The search space then contains
/// every feasible anchor, so the result is at least as good as each.
pub fn solve_grid_oracle_with_anchors(state: &SlotState, spec: &SolverSpec, anchors: &[Decision]) -> Result<Decision> {
    spec.validate()?;
    let k = state.user_count();
    let r = spec.grid_resolution;
    let nominal = enumeration_count(k, r);
    if nominal > spec.eval_budget {
        return Err(Error::BudgetExceeded {
            required: nominal,
            budget: spec.eval_budget,
        });
    }
    for a in anchors {
        if !a.is_well_formed(k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: a.user_count(),
            });
        }
    }

    let base_alpha = linspace(1.0, r);
    let alphas: Vec<Vec<f64>> = (0..k)
        .map(|i| sorted_unique(base_alpha.iter().copied().chain(anchors.iter().map(|a| a.alpha[i])).collect()))
        .collect();
    let powers: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let grid = linspace(state.users[i].max_power_w, r);
            sorted_unique(grid.into_iter().chain(anchors.iter().map(|a| a.power[i])).collect())
        })
        .collect();
    let mut betas = simplex_grid(k, r);
    betas.push(vec![1.0 / k as f64; k]);
    betas.extend(anchors.iter().map(|a| a.beta.clone()));
    betas.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    });
    betas.dedup();
    let combos: usize = powers.iter().map(Vec::len).product();

    let per_beta: Vec<Option<Candidate>> = betas
        .par_iter()
        .map(|beta| {
            let mut best: Option<Candidate> = None;
            let mut idx = vec![0usize; k];
            let mut power = vec![0.0; k];
            for n in 0..combos {
                let mut rem = n;
                for i in 0..k {
                    idx[i] = rem % powers[i].len();
                    rem /= powers[i].len();
                    power[i] = powers[i][idx[i]];
                }
                let Some((objective, alpha)) = best_alphas(state, &alphas, beta, &power) else {
                    continue;
                };
                let cand = Candidate {
                    objective,
                    decision: Decision {
                        alpha,
                        beta: beta.clone(),
                        power: power.clone(),
                    },
                };
                if best.as_ref().is_none_or(|b| prefer(&cand, b)) {
                    best = Some(cand);
                }
            }
            best
        })
        .collect();

    let mut best: Option<Candidate> = None;
    for cand in per_beta.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| prefer(&cand, b)) {
            best = Some(cand);
        }
    }
    best.map(|c| c.decision)
        .ok_or_else(|| Error::Infeasible(format!("no grid point meets the energy budget in slot {}", state.slot)))
}
