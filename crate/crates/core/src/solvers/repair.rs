//! Projection of arbitrary (possibly garbage) decisions onto the feasible
//! set of one slot.

use crate::performance::{Decision, SlotState, CONSTRAINT_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub decision: Decision,
    /// One entry per change applied; empty when the input was feasible.
    pub diagnostics: Vec<String>,
}

const BISECTION_STEPS: usize = 60;
/// Smallest power scale tried; far below any useful power.
const MIN_SCALE: f64 = 1e-12;

/// Clamps to the box constraints, rescales the server shares to sum to at
/// most one, drops offloading that could never complete, and finally fits
/// every user's slot energy into its budget (power bisection first, then
/// moving `α` inside its energy-feasible range).
///
/// Feasible inputs come back unchanged, and the output is a fixed point.
pub fn repair_decision(raw: &Decision, state: &SlotState) -> RepairOutcome {
    let k = state.user_count();
    let mut diagnostics = Vec::new();

    let fit = |v: &[f64], name: &str, diagnostics: &mut Vec<String>| -> Vec<f64> {
        if v.len() != k {
            diagnostics.push(format!("{name}: {} entries for {k} users", v.len()));
        }
        (0..k).map(|i| v.get(i).copied().unwrap_or(0.0)).collect()
    };
    let mut d = Decision {
        alpha: fit(&raw.alpha, "alpha", &mut diagnostics),
        beta: fit(&raw.beta, "beta", &mut diagnostics),
        power: fit(&raw.power, "power", &mut diagnostics),
    };

    for i in 0..k {
        let pmax = state.users[i].max_power_w;
        clamp_entry(&mut d.alpha[i], 0.0, 1.0, "alpha", i, &mut diagnostics);
        clamp_entry(&mut d.beta[i], 0.0, 1.0, "beta", i, &mut diagnostics);
        clamp_entry(&mut d.power[i], 0.0, pmax, "power", i, &mut diagnostics);
    }

    let sum: f64 = d.beta.iter().sum();
    if sum > 1.0 + CONSTRAINT_TOL {
        for b in &mut d.beta {
            *b /= sum;
        }
        diagnostics.push(format!("beta rescaled from sum {sum}"));
    }

    drop_unserved(&mut d, state, &mut diagnostics);
    fit_energy(&mut d, state, &mut diagnostics);

    RepairOutcome {
        decision: d,
        diagnostics,
    }
}

fn clamp_entry(x: &mut f64, lo: f64, hi: f64, name: &str, user: usize, diagnostics: &mut Vec<String>) {
    let v = if x.is_nan() { lo } else { x.clamp(lo, hi) };
    if v != *x || x.is_nan() {
        diagnostics.push(format!("{name}[{user}] = {x} clamped to {v}"));
        *x = v;
    }
}

/// Offloading with no server share, no power or no channel never finishes.
fn drop_unserved(d: &mut Decision, state: &SlotState, diagnostics: &mut Vec<String>) {
    let rates = state.rates(&d.power);
    for (i, &rate) in rates.iter().enumerate() {
        if d.alpha[i] > 0.0 && (d.beta[i] <= 0.0 || rate <= 0.0) {
            diagnostics.push(format!("user {i} cannot be served remotely; alpha set to 0"));
            d.alpha[i] = 0.0;
        }
    }
}

fn energy_of(d: &Decision, state: &SlotState, i: usize) -> f64 {
    let rates = state.rates(&d.power);
    state
        .evaluate_user(i, d.alpha[i], d.beta[i], d.power[i], rates[i])
        .energy_j()
}

fn fit_energy(d: &mut Decision, state: &SlotState, diagnostics: &mut Vec<String>) {
    for i in 0..state.user_count() {
        let budget = state.energy_budget_j[i];
        if energy_of(d, state, i) <= budget + CONSTRAINT_TOL {
            continue;
        }
        let original = d.power[i];

        // Offload energy grows with power (airtime shrinks slower than
        // power grows), so the largest fitting scale is found by bisection.
        if d.alpha[i] > 0.0 && original > 0.0 {
            let at = |scale: f64, d: &mut Decision| {
                d.power[i] = original * scale;
                energy_of(d, state, i)
            };
            let floor = MIN_SCALE;
            if at(floor, d) <= budget {
                let (mut lo, mut hi) = (floor, 1.0);
                for _ in 0..BISECTION_STEPS {
                    let mid = 0.5 * (lo + hi);
                    if at(mid, d) <= budget {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                d.power[i] = original * lo;
                diagnostics.push(format!("power[{i}] scaled by {lo} to fit energy budget"));
                continue;
            }
            d.power[i] = original;
        }

        // Power alone cannot fix it; move α inside its feasible range.
        let rate = state.rates(&d.power)[i];
        let served = d.beta[i] > 0.0 && rate > 0.0;
        let range = if served {
            state.feasible_alpha_range(i, d.power[i], rate)
        } else {
            state.feasible_alpha_range(i, 0.0, 0.0)
        };
        match range {
            Some((lo, hi)) => {
                let a = d.alpha[i].clamp(lo, hi);
                diagnostics.push(format!("alpha[{i}] moved from {} to {a} to fit energy budget", d.alpha[i]));
                d.alpha[i] = a;
            }
            None => {
                diagnostics.push(format!("user {i}: energy budget {budget} J unattainable this slot"));
            }
        }
    }
}
