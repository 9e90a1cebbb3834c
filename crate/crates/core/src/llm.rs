//! Generation stage of the decision pipeline: prompt assembly, completion
//! backends, defensive response parsing and the end-to-end solve.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{BackendError, Error, Result};
use crate::http::{join, JsonClient};
use crate::performance::{Decision, SlotState};
use crate::retrieval::{query_text, CapabilityRecord, Encoder, VectorStore};
use crate::solvers::{repair_decision, solve_alternating, SolverKind, SolverSpec};

/// What the prompt tells the model about the slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSummary {
    pub user_ids: Vec<usize>,
    pub task_bits: Vec<f64>,
    pub server_cycles_per_sec: f64,
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub text: String,
    pub context: Vec<CapabilityRecord>,
    pub slot_summary: SlotSummary,
    pub diagnostics: Vec<String>,
    /// The slot the prompt was built from. Only the mock backend reads it.
    pub state: SlotState,
}

/// Renders the decision request for one slot. `retrieved` is deduplicated
/// by user id (first occurrence wins) and every record's text appears once.
pub fn build_prompt(state: &SlotState, retrieved: &[CapabilityRecord]) -> Prompt {
    let mut context: Vec<CapabilityRecord> = Vec::new();
    for r in retrieved {
        if !context.iter().any(|c| c.user_id == r.user_id) {
            context.push(r.clone());
        }
    }
    let by_user: BTreeMap<usize, &CapabilityRecord> = context.iter().map(|r| (r.user_id, r)).collect();
    let c = &state.config;
    let summary = SlotSummary {
        user_ids: state.users.iter().map(|u| u.id).collect(),
        task_bits: state.task_bits.clone(),
        server_cycles_per_sec: c.server_cycles_per_sec,
        bandwidth_hz: c.bandwidth_hz,
        noise_power_w: c.noise_power_w,
    };

    let mut diagnostics = Vec::new();
    let mut t = String::new();
    t.push_str("You allocate mobile edge computing resources for one time slot.\n");
    t.push_str("Each user splits its task: a fraction alpha is uploaded and processed on the edge server, the rest runs locally.\n");
    t.push_str("Choose alpha, the server share beta and the transmit power to minimise the mean task latency.\n\n");
    t.push_str("Retrieved capability records:\n");
    if context.is_empty() {
        t.push_str("(none)\n");
    }
    for r in &context {
        let _ = writeln!(t, "- {}", r.text);
    }
    t.push_str("\nUsers:\n");
    for (k, user) in state.users.iter().enumerate() {
        let capability = match by_user.get(&user.id) {
            Some(r) => format!("capability {:e} cycles/s", r.cycles_per_sec),
            None => {
                diagnostics.push(format!("no capability record retrieved for user {}", user.id));
                "capability unknown".to_string()
            }
        };
        let _ = writeln!(t, "user {}: data {:e} bits, {capability}", user.id, state.task_bits[k]);
    }
    let _ = writeln!(
        t,
        "\nSystem: server {:e} cycles/s, bandwidth {:e} Hz, noise {:e} W, server {} cycles/bit",
        c.server_cycles_per_sec, c.bandwidth_hz, c.noise_power_w, c.server_cycles_per_bit
    );
    let join_all = |v: Vec<String>| v.join(", ");
    let _ = writeln!(
        t,
        "Cycles per bit: [{}]",
        join_all(state.users.iter().map(|u| u.cycles_per_bit.to_string()).collect())
    );
    let _ = writeln!(
        t,
        "Channel gains: [{}]",
        join_all(state.channel.gains.iter().map(|g| format!("{g:e}")).collect())
    );
    let _ = writeln!(
        t,
        "Max power (W): [{}]",
        join_all(state.users.iter().map(|u| u.max_power_w.to_string()).collect())
    );
    let _ = writeln!(
        t,
        "Energy budget this slot (J): [{}]",
        join_all(state.energy_budget_j.iter().map(|e| format!("{e:e}")).collect())
    );
    let k = state.user_count();
    let _ = write!(
        t,
        "\nRespond with exactly one JSON object and nothing else, in user order, each array of length {k}:\n\
         {{\"alpha\": [...], \"beta\": [...], \"power_w\": [...]}}\n\
         Constraints: 0 <= alpha <= 1, beta >= 0 with sum(beta) <= 1, 0 <= power_w <= max power.\n"
    );

    Prompt {
        text: t,
        context,
        slot_summary: summary,
        diagnostics,
        state: state.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    #[default]
    Mock,
    HttpChat,
}

/// Completion backend settings. The API key is read from the environment
/// and never serialised or printed.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub temperature: f64,
    pub max_in_flight: usize,
    pub backoff_ms: u64,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            model: "gpt-4o".into(),
            timeout_s: 60.0,
            max_retries: 3,
            temperature: 0.0,
            max_in_flight: 4,
            backoff_ms: 500,
            api_key: None,
        }
    }
}

impl fmt::Debug for BackendConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendConfig")
            .field("kind", &self.kind)
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("timeout_s", &self.timeout_s)
            .field("max_retries", &self.max_retries)
            .field("temperature", &self.temperature)
            .field("max_in_flight", &self.max_in_flight)
            .field("backoff_ms", &self.backoff_ms)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    /// HTTP backend from `LLM_API_BASE`, `LLM_API_KEY` and `LLM_MODEL`.
    pub fn from_env() -> Result<Self> {
        let mut cfg = Self {
            kind: BackendKind::HttpChat,
            ..Self::default()
        };
        cfg.fill_from_env();
        if cfg.endpoint.is_none() {
            return Err(BackendError::NotConfigured("LLM_API_BASE is not set".into()).into());
        }
        Ok(cfg)
    }

    /// Fills unset HTTP fields from the environment; the key always comes
    /// from `LLM_API_KEY`.
    pub fn fill_from_env(&mut self) {
        if self.endpoint.is_none() {
            self.endpoint = std::env::var("LLM_API_BASE").ok();
        }
        if let Ok(model) = std::env::var("LLM_MODEL") {
            self.model = model;
        }
        self.api_key = std::env::var("LLM_API_KEY").ok();
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if self.kind == BackendKind::HttpChat {
            if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
                v.push(format!("timeout_s must be positive, got {}", self.timeout_s));
            }
            if self.endpoint.as_deref().is_none_or(str::is_empty) {
                v.push("endpoint is required for http-chat".to_string());
            }
            if self.max_in_flight == 0 {
                v.push("max_in_flight must be at least 1".to_string());
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().expect("gate lock poisoned");
            while *free == 0 {
                free = self.cv.wait(free).expect("gate lock poisoned");
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().expect("gate lock poisoned") += 1;
        self.cv.notify_one();
        out
    }
}

/// A configured backend, shareable across threads.
pub struct Backend {
    config: BackendConfig,
    http: Option<(JsonClient, String)>,
    gate: Gate,
}

impl Backend {
    pub fn new(config: BackendConfig) -> Result<Self> {
        config.validate()?;
        let http = match config.kind {
            BackendKind::Mock => None,
            BackendKind::HttpChat => {
                let client = JsonClient::new(
                    Duration::from_secs_f64(config.timeout_s),
                    config.api_key.clone(),
                    config.max_retries,
                    Duration::from_millis(config.backoff_ms),
                )?;
                let url = join(config.endpoint.as_deref().unwrap_or_default(), "chat/completions");
                Some((client, url))
            }
        };
        Ok(Self {
            gate: Gate {
                free: Mutex::new(config.max_in_flight.max(1)),
                cv: Condvar::new(),
            },
            config,
            http,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Raw completion text for `prompt`. The mock answers with the
    /// alternating heuristic's decision for the prompt's slot.
    pub fn complete(&self, prompt: &Prompt) -> std::result::Result<String, BackendError> {
        match &self.http {
            None => Ok(render_decision(&solve_alternating(
                &prompt.state,
                &SolverSpec::new(SolverKind::AlternatingHeuristic),
            ))),
            Some((client, url)) => {
                let body = json!({
                    "model": self.config.model,
                    "temperature": self.config.temperature,
                    "messages": [{ "role": "user", "content": prompt.text }],
                });
                let resp = self.gate.run(|| client.post(url, &body))?;
                resp.pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .ok_or_else(|| BackendError::Protocol("missing choices[0].message.content".into()))
            }
        }
    }
}

/// JSON object in the shape the prompt asks for.
pub fn render_decision(d: &Decision) -> String {
    json!({ "alpha": d.alpha, "beta": d.beta, "power_w": d.power }).to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionResponse {
    pub raw_text: String,
    pub decision: Decision,
    pub diagnostics: Vec<String>,
}

/// Byte range of the first balanced `{...}` starting at `start`, skipping
/// braces inside string literals.
fn balanced_object(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// First substring that parses as a JSON object.
fn first_object(text: &str) -> Option<Map<String, Value>> {
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(off) = bytes[from..].iter().position(|&b| b == b'{') {
        let start = from + off;
        if let Some(end) = balanced_object(bytes, start) {
            if let Ok(Value::Object(map)) = serde_json::from_slice::<Value>(&bytes[start..end]) {
                return Some(map);
            }
        }
        from = start + 1;
    }
    None
}

fn coerce(v: &Value) -> Option<f64> {
    let x = match v {
        Value::Number(n) => n.as_f64()?,
        Value::String(s) => s.trim().parse().ok()?,
        _ => return None,
    };
    x.is_finite().then_some(x)
}

fn field(map: &Map<String, Value>, names: &[&str], users: usize, diagnostics: &mut Vec<String>) -> Vec<f64> {
    let name = names[0];
    let Some(value) = names.iter().find_map(|n| map.get(*n)) else {
        diagnostics.push(format!("`{name}` missing; filled with 0"));
        return vec![0.0; users];
    };
    let Some(arr) = value.as_array() else {
        diagnostics.push(format!("`{name}` is not an array; filled with 0"));
        return vec![0.0; users];
    };
    if arr.len() != users {
        diagnostics.push(format!("`{name}` has {} entries for {users} users", arr.len()));
    }
    (0..users)
        .map(|i| match arr.get(i).map(coerce) {
            Some(Some(x)) => x,
            Some(None) => {
                diagnostics.push(format!("`{name}[{i}]` is not a number; set to 0"));
                0.0
            }
            None => 0.0,
        })
        .collect()
}

/// Extracts the first JSON object from `raw` and reads the per-user
/// `alpha`, `beta` and `power_w` arrays. Missing or malformed entries
/// become 0 and are listed in the diagnostics.
pub fn parse_decision(raw: &str, users: usize) -> Result<DecisionResponse> {
    let map = first_object(raw).ok_or(Error::NoJsonObject)?;
    let mut diagnostics = Vec::new();
    let decision = Decision {
        alpha: field(&map, &["alpha"], users, &mut diagnostics),
        beta: field(&map, &["beta"], users, &mut diagnostics),
        power: field(&map, &["power_w", "power", "p"], users, &mut diagnostics),
    };
    Ok(DecisionResponse {
        raw_text: raw.to_string(),
        decision,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RagConfig {
    pub top_k: usize,
    /// Heuristic used when the backend fails or answers with no JSON.
    pub fallback: SolverSpec,
}

impl Default for RagConfig {
    fn default() -> Self {
        Self {
            top_k: 5,
            fallback: SolverSpec::new(SolverKind::AlternatingHeuristic),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RagOutcome {
    pub decision: Decision,
    pub fallback: bool,
    pub diagnostics: Vec<String>,
}

/// Capability records for the slot's users, one query per user.
pub fn retrieve_context(state: &SlotState, store: &VectorStore, encoder: &dyn Encoder, top_k: usize) -> Result<Vec<CapabilityRecord>> {
    let mut out = Vec::new();
    for u in &state.users {
        let q = encoder.encode_text(&query_text(u.id))?;
        for hit in store.top_k(&q, top_k)?.hits {
            if let Some(r) = store.record(hit.user_id) {
                out.push(r);
            }
        }
    }
    Ok(out)
}

/// Retrieve, prompt, complete, parse and repair. Any failure along the way
/// falls back to the heuristic; the result is always feasible.
pub fn rag_solve(state: &SlotState, store: &VectorStore, encoder: &dyn Encoder, backend: &Backend, config: &RagConfig) -> RagOutcome {
    let mut diagnostics = Vec::new();
    let attempt = (|| -> Result<Decision> {
        let context = retrieve_context(state, store, encoder, config.top_k)?;
        let prompt = build_prompt(state, &context);
        diagnostics.extend(prompt.diagnostics.iter().cloned());
        let raw = backend.complete(&prompt)?;
        let parsed = parse_decision(&raw, state.user_count())?;
        diagnostics.extend(parsed.diagnostics);
        let repaired = repair_decision(&parsed.decision, state);
        diagnostics.extend(repaired.diagnostics);
        Ok(repaired.decision)
    })();
    match attempt {
        Ok(decision) => RagOutcome {
            decision,
            fallback: false,
            diagnostics,
        },
        Err(e) => {
            warn!("slot {}: decision pipeline failed ({e}); using fallback", state.slot);
            diagnostics.push(format!("fallback: {e}"));
            RagOutcome {
                decision: solve_alternating(state, &config.fallback),
                fallback: true,
                diagnostics,
            }
        }
    }
}
