//! Seeded synthetic environment with known-answer fault injection.
//!
//! This module exists to provide oracles, not realism. Every generated run
//! is a plausible-looking tool-use episode over a four-tool registry, and
//! every injected violation leaves exactly the structural signature the
//! rule judge looks for (see [`crate::judge::judge_rules`]): a wrong tool
//! name, a missing required argument, a stale cursor, a rewritten plan, a
//! drifted goal on the final submit, or a terminal error with no recovery.
//! Ground-truth flags are therefore exact by construction.
//!
//! # Determinism
//!
//! All randomness comes from ChaCha8 streams. Run ordinal `k` of a corpus
//! generated with seed `s` draws from `ChaCha8Rng::seed_from_u64(s)` with
//! `set_stream(k)`, so any single run can be regenerated byte-identically
//! from `(s, k)` without replaying its predecessors. Within a run the draw
//! order is fixed: step count, fault coins in canonical rubric order,
//! layout draws, fault placement draws, per-step payload draws, and finally
//! the outcome draw.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::convention::{ARG_GOAL, STATE_CURSOR, STATE_GOAL, STATE_PLAN};
use crate::judge::{FlagVector, JudgeError, RubricId};
use crate::trace::{
    Action, ActionKind, Observation, ObservationKind, Outcome, Step, Trajectory,
    TRACE_SCHEMA_VERSION,
};

pub const BENCHMARK_NAME: &str = "synthetic-tools-v1";

const MIN_STEPS: usize = 6;
const MAX_STEPS: usize = 20;
const BOGUS_TOOLS: [&str; 3] = ["telnet", "pager", "fax"];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid fault spec: {0}")]
    InvalidFaultSpec(String),

    #[error("invalid outcome model: {0}")]
    InvalidOutcomeModel(String),

    #[error("n_runs must be at least 1")]
    InvalidRunCount,

    #[error("run ordinal {ordinal} out of range for a corpus of {n_runs} runs")]
    OrdinalOutOfRange { ordinal: usize, n_runs: usize },

    #[error(transparent)]
    Flags(#[from] JudgeError),
}

/// Per-rubric injection probabilities plus the default generation seed.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultSpec {
    /// Probability, per run, that each rubric's fault is planted.
    pub rates: BTreeMap<RubricId, f64>,
    /// Default seed for corpora driven by this spec. [`generate_corpus`]
    /// takes the effective seed explicitly so overrides stay auditable.
    pub seed: u64,
}

impl FaultSpec {
    /// Uniform rate across all six rubrics.
    pub fn uniform(rate: f64, seed: u64) -> Self {
        FaultSpec { rates: RubricId::ALL.into_iter().map(|r| (r, rate)).collect(), seed }
    }

    pub fn rate(&self, rubric: RubricId) -> f64 {
        self.rates.get(&rubric).copied().unwrap_or(0.0)
    }

    fn validate(&self) -> Result<(), SynthError> {
        for (rubric, rate) in &self.rates {
            if !rate.is_finite() || !(0.0..=1.0).contains(rate) {
                return Err(SynthError::InvalidFaultSpec(format!(
                    "rate for {rubric} is {rate}, expected a probability"
                )));
            }
        }
        Ok(())
    }
}

/// Log-odds model mapping a run's fault flags to its success probability:
/// `P(success) = sigmoid(bias + sum over r of weights[r] * flag[r])`.
///
/// A violation that pushes the run toward failure therefore carries a
/// negative weight; its magnitude is the log-odds cost of that violation.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModel {
    pub bias: f64,
    pub weights: BTreeMap<RubricId, f64>,
}

impl OutcomeModel {
    /// Model with no fault influence and the given clean-run success rate.
    pub fn constant(success_rate: f64) -> Self {
        let bias = (success_rate / (1.0 - success_rate)).ln();
        OutcomeModel { bias, weights: BTreeMap::new() }
    }

    pub fn weight(&self, rubric: RubricId) -> f64 {
        self.weights.get(&rubric).copied().unwrap_or(0.0)
    }

    /// Success probability for a given flag assignment.
    pub fn success_probability(&self, flags: &FlagVector) -> f64 {
        let mut z = self.bias;
        for (rubric, flag) in flags.iter() {
            if flag == 1 {
                z += self.weight(rubric);
            }
        }
        sigmoid(z)
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !self.bias.is_finite() {
            return Err(SynthError::InvalidOutcomeModel("non-finite bias".into()));
        }
        for (rubric, w) in &self.weights {
            if !w.is_finite() {
                return Err(SynthError::InvalidOutcomeModel(format!(
                    "non-finite weight for {rubric}"
                )));
            }
        }
        Ok(())
    }
}

pub use crate::xai::logreg::sigmoid;

/// What the generator knows to be true about one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GroundTruthWire", into = "GroundTruthWire")]
pub struct GroundTruthRecord {
    pub flags: FlagVector,
    pub outcome: Outcome,
}

/// Flat wire shape: `{"run_id": ..., "flags": {...}, "outcome": {...}}`.
#[derive(Serialize, Deserialize)]
struct GroundTruthWire {
    run_id: String,
    flags: BTreeMap<RubricId, u8>,
    outcome: Outcome,
}

impl TryFrom<GroundTruthWire> for GroundTruthRecord {
    type Error = JudgeError;

    fn try_from(raw: GroundTruthWire) -> Result<Self, Self::Error> {
        Ok(GroundTruthRecord {
            flags: FlagVector::new(raw.run_id, raw.flags)?,
            outcome: raw.outcome,
        })
    }
}

impl From<GroundTruthRecord> for GroundTruthWire {
    fn from(rec: GroundTruthRecord) -> Self {
        GroundTruthWire {
            run_id: rec.flags.run_id.clone(),
            flags: rec.flags.iter().collect(),
            outcome: rec.outcome,
        }
    }
}

/// Sidecar of per-run ground truth, ordered like the corpus.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub records: Vec<GroundTruthRecord>,
}

impl GroundTruth {
    pub fn get(&self, run_id: &str) -> Option<&GroundTruthRecord> {
        self.records.iter().find(|r| r.flags.run_id == run_id)
    }

    /// Writes one JSON record per line, mirroring the corpus format.
    pub fn write_jsonl<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for rec in &self.records {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: std::io::BufRead>(reader: R) -> Result<Self, std::io::Error> {
        let mut records = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let rec: GroundTruthRecord = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            records.push(rec);
        }
        Ok(GroundTruth { records })
    }
}

/// Everything needed to regenerate one run of a previous corpus.
#[derive(Debug, Clone)]
pub struct ReplayConfig {
    pub seed: u64,
    pub faults: FaultSpec,
    pub outcome: OutcomeModel,
    pub n_runs: usize,
    pub ordinal: usize,
}

/// Generates a corpus of `n_runs` trajectories plus exact ground truth.
pub fn generate_corpus(
    n_runs: usize,
    faults: &FaultSpec,
    outcome: &OutcomeModel,
    seed: u64,
) -> Result<(Vec<Trajectory>, GroundTruth), SynthError> {
    if n_runs == 0 {
        return Err(SynthError::InvalidRunCount);
    }
    faults.validate()?;
    outcome.validate()?;
    let mut corpus = Vec::with_capacity(n_runs);
    let mut truth = GroundTruth::default();
    for ordinal in 0..n_runs {
        let (t, rec) = generate_run(ordinal, faults, outcome, seed)?;
        corpus.push(t);
        truth.records.push(rec);
    }
    Ok((corpus, truth))
}

/// Regenerates a single run; byte-identical to the run the original
/// generation produced at the same ordinal.
pub fn replay(cfg: &ReplayConfig) -> Result<(Trajectory, GroundTruthRecord), SynthError> {
    if cfg.n_runs == 0 {
        return Err(SynthError::InvalidRunCount);
    }
    if cfg.ordinal >= cfg.n_runs {
        return Err(SynthError::OrdinalOutOfRange { ordinal: cfg.ordinal, n_runs: cfg.n_runs });
    }
    cfg.faults.validate()?;
    cfg.outcome.validate()?;
    generate_run(cfg.ordinal, &cfg.faults, &cfg.outcome, cfg.seed)
}

fn run_rng(seed: u64, ordinal: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ordinal as u64);
    rng
}

/// Which step plays which role; faults mutate the materialized steps.
#[derive(Clone, Copy, PartialEq)]
enum Slot {
    PlanMessage,
    Search,
    Fetch,
    Compute,
    Chatter,
    Submit,
    Epilogue,
}

fn generate_run(
    ordinal: usize,
    faults: &FaultSpec,
    outcome_model: &OutcomeModel,
    seed: u64,
) -> Result<(Trajectory, GroundTruthRecord), SynthError> {
    let mut rng = run_rng(seed, ordinal);

    let run_id = format!("run-{ordinal:05}");
    let task_id = format!("task-{:04}", ordinal % 1000);
    let goal = format!("resolve {task_id}");
    let base_plan = "search >> fetch >> compute >> submit".to_string();

    // 1. Step budget.
    let n_steps = rng.random_range(MIN_STEPS..=MAX_STEPS);

    // 2. Fault coins, canonical rubric order.
    let mut injected = FlagVector::clean(run_id.clone());
    for rubric in RubricId::ALL {
        injected.set(rubric, rng.random_bool(faults.rate(rubric)));
    }

    // 3. Layout. A recovery fault needs message steps after the last tool
    // call, so the submit moves forward to make room.
    let trailing = if injected.is_violated(RubricId::ErrorRecovery) {
        rng.random_range(1..=2usize)
    } else {
        0
    };
    let submit_pos = n_steps - 1 - trailing;
    let mut slots = vec![Slot::Chatter; n_steps];
    slots[0] = Slot::PlanMessage;
    slots[1] = Slot::Search;
    slots[2] = Slot::Fetch;
    for slot in slots.iter_mut().take(submit_pos).skip(3) {
        *slot = if rng.random_bool(0.6) { Slot::Compute } else { Slot::Chatter };
    }
    slots[submit_pos] = Slot::Submit;
    for slot in slots.iter_mut().skip(submit_pos + 1) {
        *slot = Slot::Epilogue;
    }

    // 4. Benign decoration: one mid-run tool error that a later call
    // recovers from. Always strictly before the submit, so it never reads
    // as an unrecovered error.
    let decorated_error = rng.random_bool(0.3);
    let decoration_pos = slots.iter().position(|s| *s == Slot::Compute).filter(|_| decorated_error);

    // 5. Fault placement draws.
    let bogus_tool = BOGUS_TOOLS[rng.random_range(0..BOGUS_TOOLS.len())];
    let cursor_victim = rng.random_range(0..n_steps);
    let cursor_offset = rng.random_range(1..=5u64);
    let churn_at = rng.random_range(1..n_steps);

    // 6. Materialize steps.
    let mut steps = Vec::with_capacity(n_steps);
    for (index, slot) in slots.iter().enumerate() {
        let plan = if injected.is_violated(RubricId::PlanAdherence) && index >= churn_at {
            format!("{base_plan} (revised)")
        } else {
            base_plan.clone()
        };
        let cursor = if injected.is_violated(RubricId::StateTrackingConsistency)
            && index == cursor_victim
        {
            index as u64 + cursor_offset
        } else {
            index as u64
        };
        let mut state = BTreeMap::new();
        state.insert(STATE_GOAL.to_string(), json!(goal));
        state.insert(STATE_PLAN.to_string(), json!(plan));
        state.insert(STATE_CURSOR.to_string(), json!(cursor));

        let step = match slot {
            Slot::PlanMessage => message_step(index, state, format!("Plan: {base_plan}")),
            Slot::Chatter => message_step(index, state, "Reviewing the last result.".to_string()),
            Slot::Epilogue => {
                message_step(index, state, "Wrapping up without further calls.".to_string())
            }
            Slot::Search => {
                let hits = rng.random_range(0..50u64);
                let (tool, args) = if injected.is_violated(RubricId::ToolChoiceAccuracy) {
                    (bogus_tool, vec![("target".to_string(), json!(task_id))])
                } else {
                    ("search", vec![("query".to_string(), json!(format!("records for {task_id}")))])
                };
                tool_step(index, state, tool, args, json!({"hits": hits}), false)
            }
            Slot::Fetch => {
                let args = if injected.is_violated(RubricId::ToolCorrectness) {
                    vec![("note".to_string(), json!("fetching the main document"))]
                } else {
                    vec![("doc_id".to_string(), json!(format!("doc-{:03}", rng.random_range(0..999))))]
                };
                tool_step(index, state, "fetch", args, json!({"bytes": rng.random_range(100..4000u64)}), false)
            }
            Slot::Compute => {
                let expr = format!("{} + {}", rng.random_range(1..100u64), rng.random_range(1..100u64));
                let errored = decoration_pos == Some(index);
                let payload = if errored { None } else { Some(json!({"value": rng.random_range(0..200u64)})) };
                Step {
                    index,
                    state,
                    action: Action {
                        kind: ActionKind::ToolCall,
                        tool_name: Some("compute".into()),
                        arguments: Some(
                            [("expr".to_string(), json!(expr))].into_iter().collect(),
                        ),
                        rationale: None,
                    },
                    observation: Some(Observation {
                        kind: ObservationKind::ToolResult,
                        payload,
                        is_error: errored,
                    }),
                }
            }
            Slot::Submit => {
                let claimed_goal = if injected.is_violated(RubricId::IntentAlignment) {
                    format!("resolve side-quest-{:03}", ordinal % 1000)
                } else {
                    goal.clone()
                };
                let args = vec![
                    ("answer".to_string(), json!(format!("result-{:04}", rng.random_range(0..9999u64)))),
                    (ARG_GOAL.to_string(), json!(claimed_goal)),
                ];
                let errored = injected.is_violated(RubricId::ErrorRecovery);
                tool_step(index, state, "submit", args, json!({"accepted": true}), errored)
            }
        };
        steps.push(step);
    }

    // 7. Outcome draw.
    let p_success = outcome_model.success_probability(&injected);
    let success = rng.random::<f64>() < p_success;

    let mut meta = BTreeMap::new();
    meta.insert("model".to_string(), json!("synthetic-agent-v1"));
    meta.insert("wall_time_s".to_string(), json!(n_steps as f64 * 0.25));

    let trajectory = Trajectory {
        v: TRACE_SCHEMA_VERSION,
        run_id,
        task_id,
        benchmark: BENCHMARK_NAME.to_string(),
        steps,
        outcome: Outcome { success, score: Some(if success { 1.0 } else { 0.0 }) },
        meta,
    };
    let record = GroundTruthRecord { flags: injected, outcome: trajectory.outcome.clone() };
    Ok((trajectory, record))
}

fn message_step(index: usize, state: BTreeMap<String, serde_json::Value>, text: String) -> Step {
    Step {
        index,
        state,
        action: Action {
            kind: ActionKind::Message,
            tool_name: None,
            arguments: None,
            rationale: Some(text),
        },
        observation: None,
    }
}

fn tool_step(
    index: usize,
    state: BTreeMap<String, serde_json::Value>,
    tool: &str,
    args: Vec<(String, serde_json::Value)>,
    payload: serde_json::Value,
    is_error: bool,
) -> Step {
    Step {
        index,
        state,
        action: Action {
            kind: ActionKind::ToolCall,
            tool_name: Some(tool.to_string()),
            arguments: Some(args.into_iter().collect()),
            rationale: None,
        },
        observation: Some(Observation {
            kind: ObservationKind::ToolResult,
            payload: if is_error { None } else { Some(payload) },
            is_error,
        }),
    }
}

/// String-keyed mirror of the generator inputs for TOML/JSON config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_runs: usize,
    pub seed: u64,
    #[serde(default)]
    pub fault_rates: BTreeMap<String, f64>,
    pub outcome: OutcomeConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeConfig {
    pub bias: f64,
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
}

impl SynthConfig {
    /// Validates rubric names and value ranges, producing typed inputs.
    pub fn compile(&self) -> Result<(FaultSpec, OutcomeModel), SynthError> {
        let mut rates = BTreeMap::new();
        for (name, rate) in &self.fault_rates {
            let rubric: RubricId = name
                .parse()
                .map_err(|_| SynthError::InvalidFaultSpec(format!("unknown rubric {name:?}")))?;
            rates.insert(rubric, *rate);
        }
        let mut weights = BTreeMap::new();
        for (name, w) in &self.outcome.weights {
            let rubric: RubricId = name.parse().map_err(|_| {
                SynthError::InvalidOutcomeModel(format!("unknown rubric {name:?}"))
            })?;
            weights.insert(rubric, *w);
        }
        let faults = FaultSpec { rates, seed: self.seed };
        let outcome = OutcomeModel { bias: self.outcome.bias, weights };
        faults.validate()?;
        outcome.validate()?;
        Ok((faults, outcome))
    }
}
