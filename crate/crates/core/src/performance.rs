//! Latency and energy accounting, the average-latency objective and the
//! constraint checks of the offloading problem.
//!
//! A user that offloads a positive share of its task but has either no
//! uplink rate or no server share can never finish. Such latencies are
//! reported as [`UNSERVED`] (positive infinity), which orders above every
//! finite latency; solvers treat them as infeasible.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::{offload_rates, ChannelSnapshot};
use crate::error::{Error, Result};
use crate::system::{MobileUser, Scenario, SystemConfig};

pub const UNSERVED: f64 = f64::INFINITY;

/// Absolute tolerance for the server-share sum and the energy budgets.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// Offloading ratio, server share and transmit power of every user for one
/// slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub power: Vec<f64>,
}

impl Decision {
    pub fn zeros(users: usize) -> Self {
        Self {
            alpha: vec![0.0; users],
            beta: vec![0.0; users],
            power: vec![0.0; users],
        }
    }

    pub fn user_count(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_well_formed(&self, users: usize) -> bool {
        self.alpha.len() == users && self.beta.len() == users && self.power.len() == users
    }

    /// Lexicographic order on `(alpha, beta, power)`, used for tie-breaking.
    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        let chain = |d: &Self| {
            d.alpha
                .iter()
                .chain(&d.beta)
                .chain(&d.power)
                .copied()
                .collect::<Vec<f64>>()
        };
        chain(self)
            .iter()
            .zip(chain(other).iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserEvaluation {
    pub local_latency_s: f64,
    pub offload_latency_s: f64,
    pub mec_latency_s: f64,
    pub total_latency_s: f64,
    pub local_energy_j: f64,
    pub offload_energy_j: f64,
    pub rate_bps: f64,
}

impl UserEvaluation {
    pub fn energy_j(&self) -> f64 {
        self.local_energy_j + self.offload_energy_j
    }

    pub fn is_served(&self) -> bool {
        self.total_latency_s.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotEvaluation {
    pub users: Vec<UserEvaluation>,
}

impl SlotEvaluation {
    pub fn mean_latency(&self) -> f64 {
        self.users.iter().map(|u| u.total_latency_s).sum::<f64>() / self.users.len() as f64
    }
}

/// `(1 − α)·φ·D / f`.
pub fn local_latency(alpha: f64, task_bits: f64, cycles_per_bit: f64, cycles_per_sec: f64) -> f64 {
    (1.0 - alpha) * cycles_per_bit * task_bits / cycles_per_sec
}

/// `κ·f²·(1 − α)·φ·D`.
pub fn local_energy(
    alpha: f64,
    task_bits: f64,
    cycles_per_bit: f64,
    cycles_per_sec: f64,
    energy_coeff: f64,
) -> f64 {
    energy_coeff * cycles_per_sec * cycles_per_sec * (1.0 - alpha) * cycles_per_bit * task_bits
}

/// `α·D / r`; [`UNSERVED`] when bits are sent over a zero-rate link.
pub fn offload_latency(alpha: f64, task_bits: f64, rate_bps: f64) -> f64 {
    if alpha <= 0.0 {
        0.0
    } else if rate_bps <= 0.0 {
        UNSERVED
    } else {
        alpha * task_bits / rate_bps
    }
}

/// `p·L_off`. Zero power or zero airtime costs nothing.
pub fn offload_energy(power_w: f64, offload_latency_s: f64) -> f64 {
    if power_w <= 0.0 || offload_latency_s <= 0.0 {
        0.0
    } else {
        power_w * offload_latency_s
    }
}

/// `α·φ_server·D / (β·F)`; [`UNSERVED`] when work is sent to a zero share.
pub fn mec_latency(
    alpha: f64,
    task_bits: f64,
    server_cycles_per_bit: f64,
    beta: f64,
    server_cycles_per_sec: f64,
) -> f64 {
    if alpha <= 0.0 {
        0.0
    } else if beta <= 0.0 {
        UNSERVED
    } else {
        alpha * server_cycles_per_bit * task_bits / (beta * server_cycles_per_sec)
    }
}

/// Local and remote branches run in parallel; the slower one dominates.
pub fn user_latency(local_s: f64, offload_s: f64, mec_s: f64) -> f64 {
    local_s.max(offload_s + mec_s)
}

/// Everything a per-slot solver needs: system constants, users, this slot's
/// task sizes and channel, and each user's energy budget for the slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotState {
    pub slot: usize,
    pub config: SystemConfig,
    pub users: Vec<MobileUser>,
    pub task_bits: Vec<f64>,
    pub channel: ChannelSnapshot,
    pub energy_budget_j: Vec<f64>,
}

impl SlotState {
    /// Slot state with the even per-slot budget `E_max / T`.
    pub fn from_scenario(scenario: &Scenario, slot: usize) -> Result<Self> {
        if slot >= scenario.slot_count() {
            return Err(Error::Precondition(format!(
                "slot {slot} out of range (T = {})",
                scenario.slot_count()
            )));
        }
        let t = scenario.slot_count() as f64;
        Ok(Self {
            slot,
            config: scenario.config.clone(),
            users: scenario.users.clone(),
            task_bits: scenario.task_bits[slot].clone(),
            channel: ChannelSnapshot::for_slot(scenario, slot)?,
            energy_budget_j: scenario.users.iter().map(|u| u.energy_budget_j / t).collect(),
        })
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn gains(&self) -> &[f64] {
        &self.channel.gains
    }

    pub fn rates(&self, power: &[f64]) -> Vec<f64> {
        offload_rates(power, &self.channel.gains, &self.config)
    }

    pub fn evaluate_user(&self, k: usize, alpha: f64, beta: f64, power: f64, rate_bps: f64) -> UserEvaluation {
        let user = &self.users[k];
        let d = self.task_bits[k];
        let c = &self.config;
        let local_latency_s = local_latency(alpha, d, user.cycles_per_bit, user.cycles_per_sec);
        let offload_latency_s = offload_latency(alpha, d, rate_bps);
        let mec_latency_s = mec_latency(alpha, d, c.server_cycles_per_bit, beta, c.server_cycles_per_sec);
        UserEvaluation {
            local_latency_s,
            offload_latency_s,
            mec_latency_s,
            total_latency_s: user_latency(local_latency_s, offload_latency_s, mec_latency_s),
            local_energy_j: local_energy(alpha, d, user.cycles_per_bit, user.cycles_per_sec, c.energy_coeff),
            offload_energy_j: offload_energy(power, offload_latency_s),
            rate_bps,
        }
    }

    /// # Panics
    /// If the decision does not have exactly one entry per user.
    pub fn evaluate(&self, decision: &Decision) -> SlotEvaluation {
        assert!(
            decision.is_well_formed(self.user_count()),
            "decision size does not match the slot's user count"
        );
        let rates = self.rates(&decision.power);
        let users = (0..self.user_count())
            .map(|k| self.evaluate_user(k, decision.alpha[k], decision.beta[k], decision.power[k], rates[k]))
            .collect();
        SlotEvaluation { users }
    }

    pub fn mean_latency(&self, decision: &Decision) -> f64 {
        self.evaluate(decision).mean_latency()
    }

    /// Energy of user `k` as an affine function of `α` for a fixed link:
    /// returns `(E(α = 0), E(α = 1))`.
    pub fn energy_endpoints(&self, k: usize, power: f64, rate_bps: f64) -> (f64, f64) {
        let at0 = self.evaluate_user(k, 0.0, 1.0, power, rate_bps).energy_j();
        let at1 = self.evaluate_user(k, 1.0, 1.0, power, rate_bps).energy_j();
        (at0, at1)
    }

    /// Range of `α ∈ [0, 1]` whose slot energy fits user `k`'s budget, for
    /// a fixed power and rate. `None` when no `α` fits.
    pub fn feasible_alpha_range(&self, k: usize, power: f64, rate_bps: f64) -> Option<(f64, f64)> {
        let budget = self.energy_budget_j[k];
        let limit = budget + CONSTRAINT_TOL;
        let (e0, e1) = self.energy_endpoints(k, power, rate_bps);
        if !e1.is_finite() {
            return (e0 <= limit).then_some((0.0, 0.0));
        }
        // Affine in α, so the crossing point splits the interval. The
        // crossing uses the plain budget so that the cut point itself stays
        // inside the tolerance band after rounding.
        match (e0 <= limit, e1 <= limit) {
            (true, true) => Some((0.0, 1.0)),
            (false, false) => None,
            (true, false) => Some((0.0, ((budget - e0) / (e1 - e0)).clamp(0.0, 1.0))),
            (false, true) => Some((((e0 - budget) / (e0 - e1)).clamp(0.0, 1.0), 1.0)),
        }
    }

    /// Per-slot constraint report: bounds, the server-share sum and each
    /// user's slot energy against its slot budget.
    pub fn check(&self, decision: &Decision) -> ConstraintReport {
        let mut report = ConstraintReport::new();
        if !decision.is_well_formed(self.user_count()) {
            for c in &mut report.checks {
                c.record(f64::INFINITY);
            }
            return report;
        }
        report.record_decision(decision, &self.users);
        let eval = self.evaluate(decision);
        for (u, budget) in eval.users.iter().zip(&self.energy_budget_j) {
            report.record(Constraint::EnergyBudget, excess(u.energy_j(), *budget));
        }
        report
    }
}

pub fn evaluate_slot(scenario: &Scenario, slot: usize, decision: &Decision) -> Result<SlotEvaluation> {
    if !decision.is_well_formed(scenario.user_count()) {
        return Err(Error::Precondition(format!(
            "decision covers {} users, scenario has {}",
            decision.user_count(),
            scenario.user_count()
        )));
    }
    Ok(SlotState::from_scenario(scenario, slot)?.evaluate(decision))
}

/// Mean latency over all slots and users.
pub fn objective(evaluations: &[SlotEvaluation]) -> Result<f64> {
    if evaluations.is_empty() || evaluations.iter().any(|e| e.users.is_empty()) {
        return Err(Error::Precondition("objective needs at least one slot and one user".into()));
    }
    let t = evaluations.len() as f64;
    Ok(evaluations.iter().map(SlotEvaluation::mean_latency).sum::<f64>() / t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    /// `0 ≤ p ≤ P_max`
    PowerBounds,
    /// `α ∈ [0, 1]`
    AlphaBounds,
    /// `β ∈ [0, 1]`
    BetaBounds,
    /// `Σ_k β_k ≤ 1` in every slot
    BetaSum,
    /// Energy within budget (cumulative per user, or per slot for a
    /// single-slot report)
    EnergyBudget,
}

impl Constraint {
    pub const ALL: [Constraint; 5] = [
        Self::PowerBounds,
        Self::AlphaBounds,
        Self::BetaBounds,
        Self::BetaSum,
        Self::EnergyBudget,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub constraint: Constraint,
    pub passed: bool,
    pub worst_violation: f64,
}

impl ConstraintCheck {
    fn record(&mut self, violation: f64) {
        let v = if violation.is_nan() { f64::INFINITY } else { violation };
        if v > self.worst_violation {
            self.worst_violation = v;
        }
        if v > 0.0 {
            self.passed = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub checks: Vec<ConstraintCheck>,
}

impl ConstraintReport {
    fn new() -> Self {
        Self {
            checks: Constraint::ALL
                .iter()
                .map(|&constraint| ConstraintCheck {
                    constraint,
                    passed: true,
                    worst_violation: 0.0,
                })
                .collect(),
        }
    }

    pub fn get(&self, constraint: Constraint) -> &ConstraintCheck {
        self.checks
            .iter()
            .find(|c| c.constraint == constraint)
            .expect("every constraint is present")
    }

    fn record(&mut self, constraint: Constraint, violation: f64) {
        if let Some(c) = self.checks.iter_mut().find(|c| c.constraint == constraint) {
            c.record(violation);
        }
    }

    fn record_decision(&mut self, d: &Decision, users: &[MobileUser]) {
        for (k, user) in users.iter().enumerate() {
            self.record(Constraint::PowerBounds, outside(d.power[k], 0.0, user.max_power_w));
            self.record(Constraint::AlphaBounds, outside(d.alpha[k], 0.0, 1.0));
            self.record(Constraint::BetaBounds, outside(d.beta[k], 0.0, 1.0));
        }
        self.record(Constraint::BetaSum, excess(d.beta.iter().sum(), 1.0));
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Bounds and server-share sum, i.e. everything except energy.
    pub fn componentwise_passed(&self) -> bool {
        self.checks
            .iter()
            .filter(|c| c.constraint != Constraint::EnergyBudget)
            .all(|c| c.passed)
    }
}

fn outside(x: f64, lo: f64, hi: f64) -> f64 {
    if x.is_nan() {
        f64::INFINITY
    } else {
        (lo - x).max(x - hi).max(0.0)
    }
}

/// Amount by which `value` exceeds `limit` beyond the tolerance.
fn excess(value: f64, limit: f64) -> f64 {
    if value.is_nan() {
        f64::INFINITY
    } else if value > limit + CONSTRAINT_TOL {
        value - limit
    } else {
        0.0
    }
}

/// Checks every slot's decision plus each user's cumulative energy over the
/// block.
pub fn check_constraints(scenario: &Scenario, decisions: &[Decision]) -> Result<ConstraintReport> {
    let t = scenario.slot_count();
    if decisions.len() != t {
        return Err(Error::Precondition(format!(
            "{} decisions for {t} slots",
            decisions.len()
        )));
    }
    let k = scenario.user_count();
    let mut report = ConstraintReport::new();
    let mut energy = vec![0.0; k];
    for (slot, d) in decisions.iter().enumerate() {
        let eval = evaluate_slot(scenario, slot, d)?;
        report.record_decision(d, &scenario.users);
        for (acc, u) in energy.iter_mut().zip(&eval.users) {
            *acc += u.energy_j();
        }
    }
    for (used, user) in energy.iter().zip(&scenario.users) {
        report.record(Constraint::EnergyBudget, excess(*used, user.energy_budget_j));
    }
    Ok(report)
}

/// One CSV row per user and slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub slot: usize,
    pub user: usize,
    pub alpha: f64,
    pub beta: f64,
    pub power_w: f64,
    pub rate_bps: f64,
    pub local_s: f64,
    pub off_s: f64,
    pub mec_s: f64,
    pub total_s: f64,
    pub local_j: f64,
    pub off_j: f64,
}

pub fn evaluation_rows(slot: usize, decision: &Decision, eval: &SlotEvaluation) -> Vec<EvaluationRow> {
    eval.users
        .iter()
        .enumerate()
        .map(|(k, u)| EvaluationRow {
            slot,
            user: k,
            alpha: decision.alpha[k],
            beta: decision.beta[k],
            power_w: decision.power[k],
            rate_bps: u.rate_bps,
            local_s: u.local_latency_s,
            off_s: u.offload_latency_s,
            mec_s: u.mec_latency_s,
            total_s: u.total_latency_s,
            local_j: u.local_energy_j,
            off_j: u.offload_energy_j,
        })
        .collect()
}

pub fn write_evaluations_csv<W: Write>(writer: W, rows: &[EvaluationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
