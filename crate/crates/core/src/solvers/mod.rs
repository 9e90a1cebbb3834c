//! Per-slot solvers for the joint offloading / server-share / power problem.
//!
//! Slots are coupled only through the cumulative energy budget. Solvers work
//! one slot at a time against a per-slot budget chosen by [`BudgetPolicy`],
//! which keeps every block-level energy constraint satisfied whenever each
//! slot is.

mod alternating;
mod baseline;
mod oracle;
mod repair;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::performance::{check_constraints, objective, ConstraintReport, Decision, SlotEvaluation, SlotState};
use crate::system::Scenario;

pub use alternating::{alternating_trace, latency_equalizing_alpha, solve_alternating, AlternatingTrace};
pub use baseline::{solve_full_offload_equal, solve_local_only, solve_random_feasible};
pub use oracle::{enumeration_count, solve_grid_oracle, solve_grid_oracle_with_anchors, DEFAULT_EVAL_BUDGET};
pub use repair::{repair_decision, RepairOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    LocalOnly,
    FullOffloadEqual,
    RandomFeasible,
    AlternatingHeuristic,
    GridOracle,
    RagLlm,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::LocalOnly => "local-only",
            Self::FullOffloadEqual => "full-offload-equal",
            Self::RandomFeasible => "random-feasible",
            Self::AlternatingHeuristic => "alternating",
            Self::GridOracle => "grid-oracle",
            Self::RagLlm => "rag-llm",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "local-only" | "local" => Self::LocalOnly,
            "full-offload-equal" | "full-offload" => Self::FullOffloadEqual,
            "random-feasible" | "random" => Self::RandomFeasible,
            "alternating" | "alternating-heuristic" => Self::AlternatingHeuristic,
            "grid-oracle" | "oracle" => Self::GridOracle,
            "rag-llm" | "rag" => Self::RagLlm,
            _ => return Err(Error::UnknownSolver(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetPolicy {
    /// Every slot gets `E_max / T`.
    #[default]
    PerSlot,
    /// Slot `t` gets `E_max·(t + 1)/T` minus what earlier slots used, so
    /// unused budget rolls forward.
    CarryOver,
}

impl FromStr for BudgetPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-slot" => Ok(Self::PerSlot),
            "carry-over" => Ok(Self::CarryOver),
            _ => Err(Error::Precondition(format!("unknown budget policy `{s}`"))),
        }
    }
}

fn default_grid() -> usize {
    11
}
fn default_rounds() -> usize {
    20
}
fn default_power_steps() -> usize {
    21
}
fn default_eval_budget() -> f64 {
    DEFAULT_EVAL_BUDGET
}

/// Solver selection plus its tuning knobs. In plan files a bare string such
/// as `"grid-oracle"` is accepted as shorthand for the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr")]
pub struct SolverSpec {
    pub kind: SolverKind,
    /// Points per axis for the oracle grid.
    pub grid_resolution: usize,
    pub max_rounds: usize,
    /// Power candidates per user in the heuristic's line search.
    pub power_steps: usize,
    pub eval_budget: f64,
    pub seed: u64,
    pub budget_policy: BudgetPolicy,
    pub label: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecRepr {
    Name(String),
    Full {
        kind: String,
        #[serde(default = "default_grid")]
        grid_resolution: usize,
        #[serde(default = "default_rounds")]
        max_rounds: usize,
        #[serde(default = "default_power_steps")]
        power_steps: usize,
        #[serde(default = "default_eval_budget")]
        eval_budget: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        budget_policy: BudgetPolicy,
        #[serde(default)]
        label: Option<String>,
    },
}

impl TryFrom<SpecRepr> for SolverSpec {
    type Error = Error;

    fn try_from(repr: SpecRepr) -> Result<Self> {
        let spec = match repr {
            SpecRepr::Name(name) => SolverSpec::new(name.parse()?),
            SpecRepr::Full {
                kind,
                grid_resolution,
                max_rounds,
                power_steps,
                eval_budget,
                seed,
                budget_policy,
                label,
            } => SolverSpec {
                kind: kind.parse()?,
                grid_resolution,
                max_rounds,
                power_steps,
                eval_budget,
                seed,
                budget_policy,
                label,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl SolverSpec {
    pub fn new(kind: SolverKind) -> Self {
        Self {
            kind,
            grid_resolution: default_grid(),
            max_rounds: default_rounds(),
            power_steps: default_power_steps(),
            eval_budget: default_eval_budget(),
            seed: 0,
            budget_policy: BudgetPolicy::PerSlot,
            label: None,
        }
    }

    pub fn with_grid(mut self, resolution: usize) -> Self {
        self.grid_resolution = resolution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_resolution < 2 {
            return Err(Error::Precondition("grid_resolution must be >= 2".into()));
        }
        if self.max_rounds < 1 {
            return Err(Error::Precondition("max_rounds must be >= 1".into()));
        }
        if self.power_steps < 2 {
            return Err(Error::Precondition("power_steps must be >= 2".into()));
        }
        Ok(())
    }

    /// Column value used in result tables.
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.name().to_string())
    }
}

/// Solves one slot with any solver except [`SolverKind::RagLlm`], which
/// needs a knowledge base and a backend (see `llm::rag_solve`).
pub fn solve_slot(state: &SlotState, spec: &SolverSpec) -> Result<Decision> {
    spec.validate()?;
    match spec.kind {
        SolverKind::LocalOnly => Ok(solve_local_only(state)),
        SolverKind::FullOffloadEqual => Ok(solve_full_offload_equal(state)),
        SolverKind::RandomFeasible => Ok(solve_random_feasible(state, spec.seed)),
        SolverKind::AlternatingHeuristic => Ok(solve_alternating(state, spec)),
        SolverKind::GridOracle => solve_grid_oracle(state, spec),
        SolverKind::RagLlm => Err(Error::Precondition(
            "rag-llm needs a knowledge base and backend; use the decision pipeline".into(),
        )),
    }
}

/// Decisions and evaluations for every slot of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSolution {
    pub decisions: Vec<Decision>,
    pub evaluations: Vec<SlotEvaluation>,
    pub objective: f64,
    pub report: ConstraintReport,
    /// Slots whose decision came from a fallback path.
    pub fallback_slots: Vec<usize>,
}

/// Per-slot decision plus whether it came from a fallback path.
pub struct SlotOutcome {
    pub decision: Decision,
    pub fallback: bool,
}

/// Runs `per_slot` over every slot in order, handing it a [`SlotState`]
/// whose energy budgets follow `policy`.
pub fn solve_scenario_with<F>(scenario: &Scenario, policy: BudgetPolicy, mut per_slot: F) -> Result<ScenarioSolution>
where
    F: FnMut(&SlotState) -> Result<SlotOutcome>,
{
    scenario.validate()?;
    let t = scenario.slot_count();
    let mut used = vec![0.0; scenario.user_count()];
    let mut decisions = Vec::with_capacity(t);
    let mut evaluations = Vec::with_capacity(t);
    let mut fallback_slots = Vec::new();
    for slot in 0..t {
        let mut state = SlotState::from_scenario(scenario, slot)?;
        if policy == BudgetPolicy::CarryOver {
            let share = (slot + 1) as f64 / t as f64;
            for ((b, user), spent) in state.energy_budget_j.iter_mut().zip(&scenario.users).zip(&used) {
                *b = (user.energy_budget_j * share - spent).max(0.0);
            }
        }
        let outcome = per_slot(&state)?;
        let eval = state.evaluate(&outcome.decision);
        for (acc, u) in used.iter_mut().zip(&eval.users) {
            *acc += u.energy_j();
        }
        if outcome.fallback {
            fallback_slots.push(slot);
        }
        decisions.push(outcome.decision);
        evaluations.push(eval);
    }
    let report = check_constraints(scenario, &decisions)?;
    Ok(ScenarioSolution {
        objective: objective(&evaluations)?,
        decisions,
        evaluations,
        report,
        fallback_slots,
    })
}

pub fn solve_scenario(scenario: &Scenario, spec: &SolverSpec) -> Result<ScenarioSolution> {
    solve_scenario_with(scenario, spec.budget_policy, |state| {
        Ok(SlotOutcome {
            decision: solve_slot(state, spec)?,
            fallback: false,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{generate_scenario, SystemConfig};

    #[test]
    fn spec_from_name_or_object() {
        let s: SolverSpec = serde_json::from_str("\"grid-oracle\"").unwrap();
        assert_eq!(s.kind, SolverKind::GridOracle);
        assert_eq!(s.grid_resolution, 11);
        let s: SolverSpec = serde_json::from_str(r#"{"kind":"alternating","max_rounds":3}"#).unwrap();
        assert_eq!(s.kind, SolverKind::AlternatingHeuristic);
        assert_eq!(s.max_rounds, 3);
        assert!(serde_json::from_str::<SolverSpec>(r#"{"kind":"grid-oracle","grid_resolution":1}"#).is_err());
        assert!(serde_json::from_str::<SolverSpec>("\"simplex\"").is_err());
        let back: SolverSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn carry_over_respects_cumulative_budget() {
        let mut sc = generate_scenario(&SystemConfig::default(), 3, 11).unwrap();
        for u in &mut sc.users {
            u.energy_budget_j = 40.0;
        }
        let spec = SolverSpec {
            budget_policy: BudgetPolicy::CarryOver,
            ..SolverSpec::new(SolverKind::AlternatingHeuristic)
        };
        let sol = solve_scenario(&sc, &spec).unwrap();
        assert!(sol.report.all_passed(), "{:?}", sol.report);
    }

    #[test]
    fn rag_is_not_a_plain_solver() {
        let sc = generate_scenario(&SystemConfig::default(), 2, 1).unwrap();
        let st = SlotState::from_scenario(&sc, 0).unwrap();
        assert!(solve_slot(&st, &SolverSpec::new(SolverKind::RagLlm)).is_err());
    }
}
