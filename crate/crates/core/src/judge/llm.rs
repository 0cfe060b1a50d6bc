//! Chat-completions judge client.
//!
//! Speaks the common OpenAI-style wire shape: POST to a chat-completions
//! URL with `{model, temperature, messages}`, read
//! `choices[0].message.content`. Three properties are contractual:
//!
//! * **Outcome blindness.** The request is built from a view of the
//!   trajectory that has no outcome field at all. Meta is dropped too,
//!   since harness bookkeeping (cost, wall time) leaks result signals.
//! * **Strict replies.** The model must answer with a single JSON object
//!   mapping the six rubric ids to 0 or 1. Anything else, including a
//!   fenced or annotated version of the right answer, is a
//!   [`JudgeError::Parse`]. No repair, no re-ask.
//! * **Bounded concurrency.** Corpus judging keeps at most
//!   `max_in_flight` requests outstanding and retries transport failures
//!   with exponential backoff until the retry budget runs out.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::trace::{Step, Trajectory};

use super::{FlagVector, JudgeError, Rubric, RubricId};

#[derive(Debug, Clone)]
pub struct JudgeConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Sent as a bearer token when present.
    pub api_key: Option<String>,
    pub temperature: f64,
    /// Upper bound on concurrently outstanding requests in corpus mode.
    pub max_in_flight: usize,
    /// Number of retries after the first attempt, for retryable failures.
    pub retry_budget: u32,
    /// First backoff delay; doubles per retry.
    pub backoff_base_ms: u64,
    pub timeout_secs: u64,
    /// When set, every attempt's request and reply is appended here as one
    /// JSON line. This is the reproducibility record for remote judging.
    pub audit_log: Option<PathBuf>,
}

impl JudgeConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        JudgeConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            temperature: 0.1,
            max_in_flight: 4,
            retry_budget: 2,
            backoff_base_ms: 250,
            timeout_secs: 30,
            audit_log: None,
        }
    }

    fn validate(&self) -> Result<(), JudgeError> {
        if self.endpoint.is_empty() {
            return Err(JudgeError::InvalidConfig("empty endpoint".into()));
        }
        if self.model.is_empty() {
            return Err(JudgeError::InvalidConfig("empty model name".into()));
        }
        if !self.temperature.is_finite() || !(0.0..=2.0).contains(&self.temperature) {
            return Err(JudgeError::InvalidConfig(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_in_flight == 0 {
            return Err(JudgeError::InvalidConfig("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }
}

/// Trajectory view the judge is allowed to see: ids and steps, nothing
/// else. Field order mirrors the trace wire format.
#[derive(Serialize)]
struct TranscriptView<'a> {
    v: u32,
    run_id: &'a str,
    task_id: &'a str,
    benchmark: &'a str,
    steps: &'a [Step],
}

/// Renders the outcome-free transcript shown to the judge.
pub fn render_transcript(t: &Trajectory) -> String {
    let view = TranscriptView {
        v: t.v,
        run_id: &t.run_id,
        task_id: &t.task_id,
        benchmark: &t.benchmark,
        steps: &t.steps,
    };
    serde_json::to_string_pretty(&view).expect("transcript serialization cannot fail")
}

/// Renders the system prompt: audit header, one section per rubric, and
/// the reply contract.
pub fn render_system_prompt(rubrics: &[Rubric]) -> String {
    let mut prompt = String::from(include_str!("../../assets/prompts/v1/system_header.txt"));
    for rubric in rubrics {
        prompt.push_str(&format!("## {}\n{}\n", rubric.id, rubric.description.trim()));
        prompt.push('\n');
    }
    prompt.push_str(
        "Reply with one JSON object and nothing else. It must have exactly these\n\
         six keys: intent_alignment, plan_adherence, tool_correctness,\n\
         tool_choice_accuracy, state_tracking_consistency, error_recovery.\n\
         Every value must be the integer 0 (no violation found) or 1 (violated).\n\
         No markdown fences, no commentary, no additional keys.\n",
    );
    prompt
}

/// Builds the full request body for one trajectory. Public so callers and
/// tests can audit exactly what would go on the wire.
pub fn build_request(t: &Trajectory, rubrics: &[Rubric], cfg: &JudgeConfig) -> serde_json::Value {
    serde_json::json!({
        "model": cfg.model,
        "temperature": cfg.temperature,
        "messages": [
            {"role": "system", "content": render_system_prompt(rubrics)},
            {"role": "user", "content": render_transcript(t)},
        ],
    })
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

/// Parses the strict reply contract into a flag vector.
fn parse_reply(content: &str, run_id: &str) -> Result<FlagVector, JudgeError> {
    let map: BTreeMap<String, serde_json::Value> = serde_json::from_str(content.trim())
        .map_err(|e| JudgeError::Parse(format!("reply is not a JSON object: {e}")))?;
    if map.len() != RubricId::ALL.len() {
        return Err(JudgeError::Parse(format!(
            "expected exactly {} rubric keys, got {}",
            RubricId::ALL.len(),
            map.len()
        )));
    }
    let mut flags = BTreeMap::new();
    for rubric in RubricId::ALL {
        let value = map
            .get(rubric.as_str())
            .ok_or_else(|| JudgeError::Parse(format!("missing key {rubric}")))?;
        let bit = value
            .as_u64()
            .filter(|v| *v <= 1)
            .ok_or_else(|| JudgeError::Parse(format!("value for {rubric} is not 0 or 1: {value}")))?;
        flags.insert(rubric, bit as u8);
    }
    FlagVector::new(run_id.to_string(), flags)
}

enum Attempt {
    Done(FlagVector),
    Retry(JudgeError),
    Fatal(JudgeError),
}

struct Client<'a> {
    cfg: &'a JudgeConfig,
    agent: ureq::Agent,
    audit: Option<Mutex<std::fs::File>>,
}

impl<'a> Client<'a> {
    fn new(cfg: &'a JudgeConfig) -> Result<Self, JudgeError> {
        cfg.validate()?;
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .build();
        let audit = match &cfg.audit_log {
            Some(path) => Some(Mutex::new(
                std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(JudgeError::Audit)?,
            )),
            None => None,
        };
        Ok(Client { cfg, agent: ureq::Agent::new_with_config(config), audit })
    }

    fn audit_line(&self, run_id: &str, request: &serde_json::Value, status: Option<u16>, reply: &str) {
        let Some(file) = &self.audit else { return };
        let line = serde_json::json!({
            "run_id": run_id,
            "request": request,
            "status": status,
            "reply": reply,
        });
        // Audit failures must not change verdicts; they only lose the log line.
        if let Ok(mut f) = file.lock() {
            let _ = writeln!(f, "{line}");
        }
    }

    fn attempt(&self, t: &Trajectory, rubrics: &[Rubric]) -> Attempt {
        let request = build_request(t, rubrics, self.cfg);
        let mut builder = self.agent.post(&self.cfg.endpoint);
        if let Some(key) = &self.cfg.api_key {
            builder = builder.header("authorization", format!("Bearer {key}"));
        }
        let mut response = match builder.send_json(&request) {
            Ok(r) => r,
            Err(e) => {
                self.audit_line(&t.run_id, &request, None, &format!("transport error: {e}"));
                return Attempt::Retry(JudgeError::Transport {
                    status: None,
                    detail: e.to_string(),
                });
            }
        };
        let status = response.status().as_u16();
        let body = match response.body_mut().read_to_string() {
            Ok(b) => b,
            Err(e) => {
                self.audit_line(&t.run_id, &request, Some(status), &format!("body read error: {e}"));
                return Attempt::Retry(JudgeError::Transport {
                    status: Some(status),
                    detail: format!("failed reading body: {e}"),
                });
            }
        };
        self.audit_line(&t.run_id, &request, Some(status), &body);

        if status == 429 || status >= 500 {
            return Attempt::Retry(JudgeError::Transport {
                status: Some(status),
                detail: truncate(&body),
            });
        }
        if !(200..300).contains(&status) {
            return Attempt::Fatal(JudgeError::Transport {
                status: Some(status),
                detail: truncate(&body),
            });
        }
        let envelope: ChatResponse = match serde_json::from_str(&body) {
            Ok(e) => e,
            Err(e) => {
                return Attempt::Fatal(JudgeError::Parse(format!(
                    "malformed completion envelope: {e}"
                )));
            }
        };
        let Some(choice) = envelope.choices.first() else {
            return Attempt::Fatal(JudgeError::Parse("completion has no choices".into()));
        };
        match parse_reply(&choice.message.content, &t.run_id) {
            Ok(flags) => Attempt::Done(flags),
            Err(e) => Attempt::Fatal(e),
        }
    }

    fn judge(&self, t: &Trajectory, rubrics: &[Rubric]) -> Result<FlagVector, JudgeError> {
        let mut attempt = 0u32;
        loop {
            match self.attempt(t, rubrics) {
                Attempt::Done(flags) => return Ok(flags),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) => {
                    if attempt >= self.cfg.retry_budget {
                        return Err(e);
                    }
                    let delay = self.cfg.backoff_base_ms.saturating_mul(1 << attempt);
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
            }
        }
    }
}

fn truncate(s: &str) -> String {
    const LIMIT: usize = 300;
    if s.len() <= LIMIT {
        s.to_string()
    } else {
        let mut end = LIMIT;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &s[..end])
    }
}

/// Judges a single trajectory against the configured endpoint.
pub fn judge_llm(
    t: &Trajectory,
    rubrics: &[Rubric],
    cfg: &JudgeConfig,
) -> Result<FlagVector, JudgeError> {
    Client::new(cfg)?.judge(t, rubrics)
}

/// Judges a whole corpus with at most `cfg.max_in_flight` requests in
/// flight. Results come back in corpus order; the first failure aborts the
/// remaining work and is returned.
pub fn judge_llm_corpus(
    corpus: &[Trajectory],
    rubrics: &[Rubric],
    cfg: &JudgeConfig,
) -> Result<Vec<FlagVector>, JudgeError> {
    let client = Client::new(cfg)?;
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<Result<FlagVector, JudgeError>>>> =
        (0..corpus.len()).map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..cfg.max_in_flight.min(corpus.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= corpus.len() || failed.load(Ordering::SeqCst) {
                    break;
                }
                let result = client.judge(&corpus[i], rubrics);
                if result.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });

    let mut out = Vec::with_capacity(corpus.len());
    for slot in slots {
        match slot.into_inner().unwrap() {
            Some(Ok(flags)) => out.push(flags),
            Some(Err(e)) => return Err(e),
            // Skipped because an earlier run failed; the error above wins.
            None => break,
        }
    }
    Ok(out)
}
