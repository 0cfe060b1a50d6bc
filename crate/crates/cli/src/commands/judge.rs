//! `tracelens judge`: flag rubric violations for every run in a corpus.
//!
//! The default mode applies the deterministic rule heuristics. Mode `llm`
//! sends each outcome-free transcript to a chat-completions endpoint;
//! endpoint, model, and key resolve from flags, the TOML config file, and
//! the JUDGE_ENDPOINT / JUDGE_MODEL / JUDGE_API_KEY environment variables,
//! in that order.

use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;
use tracelens_core::judge::llm::{judge_llm_corpus, JudgeConfig};
use tracelens_core::judge::{judge_rules, rubric_registry, FlagVector, PROMPT_VERSION};

use crate::errors::{io_err, usage, CliError};
use crate::manifest::RunManifest;
use crate::resolve::{pick, pick_opt, ConfigEcho};
use crate::util::{create_out_dir, parse_corpus, read_input};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Mode {
    Rules,
    Llm,
}

#[derive(Args)]
pub struct JudgeArgs {
    /// Trace corpus to judge.
    #[arg(long)]
    traces: PathBuf,
    /// rules applies deterministic heuristics; llm calls a remote judge.
    #[arg(long, value_enum, default_value_t = Mode::Rules)]
    mode: Mode,
    /// TOML judge config: endpoint, model, temperature, retries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Chat-completions URL for llm mode.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name for llm mode.
    #[arg(long)]
    model: Option<String>,
    /// Bearer token; prefer the JUDGE_API_KEY environment variable.
    #[arg(long)]
    api_key: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Append every llm request/reply pair to this JSONL file.
    #[arg(long)]
    audit_log: Option<PathBuf>,
    /// Directory for flags.jsonl and run.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct JudgeFileConfig {
    endpoint: Option<String>,
    model: Option<String>,
    api_key: Option<String>,
    temperature: Option<f64>,
    max_in_flight: Option<usize>,
    retry_budget: Option<u32>,
    backoff_base_ms: Option<u64>,
    timeout_secs: Option<u64>,
}

pub fn run(args: JudgeArgs) -> Result<(), CliError> {
    let file_text = match &args.config {
        Some(path) => Some((
            path.clone(),
            std::fs::read_to_string(path).map_err(|e| io_err(path, e))?,
        )),
        None => None,
    };
    let file: JudgeFileConfig = match &file_text {
        Some((path, text)) => {
            toml::from_str(text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => JudgeFileConfig::default(),
    };

    let mut echo = ConfigEcho::new();
    let mode_source = if args.mode == Mode::Rules { "default" } else { "flag" };
    echo.add_value("mode", if args.mode == Mode::Rules { "rules" } else { "llm" }, mode_source);

    let (config_value, llm_config) = match args.mode {
        Mode::Rules => {
            echo.add_value("rubric_prompts", PROMPT_VERSION, "default");
            (serde_json::json!({ "mode": "rules", "rubric_prompts": PROMPT_VERSION }), None)
        }
        Mode::Llm => {
            let endpoint = pick_opt(
                args.endpoint.clone(),
                file.endpoint,
                std::env::var("JUDGE_ENDPOINT").ok(),
            )
            .ok_or_else(|| {
                usage("llm mode needs an endpoint (--endpoint, config file, or JUDGE_ENDPOINT)")
            })?;
            let model = pick_opt(
                args.model.clone(),
                file.model,
                std::env::var("JUDGE_MODEL").ok(),
            )
            .ok_or_else(|| {
                usage("llm mode needs a model name (--model, config file, or JUDGE_MODEL)")
            })?;
            let api_key = pick_opt(
                args.api_key.clone(),
                file.api_key,
                std::env::var("JUDGE_API_KEY").ok(),
            );
            let defaults = JudgeConfig::new("", "");
            let temperature =
                pick(args.temperature, file.temperature, None, defaults.temperature);
            let max_in_flight = pick(None, file.max_in_flight, None, defaults.max_in_flight);
            let retry_budget = pick(None, file.retry_budget, None, defaults.retry_budget);
            let backoff_base_ms =
                pick(None, file.backoff_base_ms, None, defaults.backoff_base_ms);
            let timeout_secs = pick(None, file.timeout_secs, None, defaults.timeout_secs);

            echo.add("endpoint", &endpoint);
            echo.add("model", &model);
            match &api_key {
                Some(k) => echo.add_value("api_key", "(set)", k.source),
                None => echo.add_value("api_key", "(unset)", "default"),
            }
            echo.add("temperature", &temperature);
            echo.add("max_in_flight", &max_in_flight);
            echo.add("retry_budget", &retry_budget);
            echo.add("backoff_base_ms", &backoff_base_ms);
            echo.add("timeout_secs", &timeout_secs);
            if let Some(path) = &args.audit_log {
                echo.add_value("audit_log", path.display(), "flag");
            }

            let value = serde_json::json!({
                "mode": "llm",
                "rubric_prompts": PROMPT_VERSION,
                "endpoint": endpoint.value,
                "model": model.value,
                // Never the key itself; the manifest is a shareable artifact.
                "api_key_set": api_key.is_some(),
                "temperature": temperature.value,
                "max_in_flight": max_in_flight.value,
                "retry_budget": retry_budget.value,
                "backoff_base_ms": backoff_base_ms.value,
                "timeout_secs": timeout_secs.value,
                "audit_log": args.audit_log.as_ref().map(|p| p.display().to_string()),
            });
            let config = JudgeConfig {
                endpoint: endpoint.value,
                model: model.value,
                api_key: api_key.map(|k| k.value),
                temperature: temperature.value,
                max_in_flight: max_in_flight.value,
                retry_budget: retry_budget.value,
                backoff_base_ms: backoff_base_ms.value,
                timeout_secs: timeout_secs.value,
                audit_log: args.audit_log.clone(),
            };
            (value, Some(config))
        }
    };
    echo.print("judge");

    let mut manifest = RunManifest::new("judge", config_value);
    if let Some((path, text)) = &file_text {
        manifest.record_input(path, text.as_bytes());
    }
    let corpus_bytes = read_input(&mut manifest, &args.traces)?;
    let corpus = parse_corpus(&args.traces, &corpus_bytes)?;
    let rubrics = rubric_registry();

    let flags: Vec<FlagVector> = match &llm_config {
        None => corpus.iter().map(|t| judge_rules(t, &rubrics)).collect(),
        Some(config) => judge_llm_corpus(&corpus, &rubrics, config)?,
    };

    create_out_dir(&args.out)?;
    let mut lines = Vec::new();
    for vector in &flags {
        serde_json::to_writer(&mut lines, vector).expect("flag serialization cannot fail");
        lines.push(b'\n');
    }
    manifest.write_output(&args.out, "flags.jsonl", &lines)?;

    let raised: u32 = flags.iter().map(|v| v.as_array().iter().map(|b| *b as u32).sum::<u32>()).sum();
    println!("judged {} runs; {raised} violation flags raised", flags.len());
    manifest.finish(&args.out)
}
