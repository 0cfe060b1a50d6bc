//! `tracelens synth`: deterministic corpus generation.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use tracelens_core::judge::RubricId;
use tracelens_core::synth::{generate_corpus, OutcomeConfig, SynthConfig};
use tracelens_core::trace::write_trace_corpus;

use crate::errors::{data, io_err, usage, CliError};
use crate::manifest::RunManifest;
use crate::resolve::{pick, ConfigEcho};
use crate::util::create_out_dir;

const DEFAULT_RUNS: usize = 100;
const DEFAULT_SEED: u64 = 0;
const DEFAULT_FAULT_RATE: f64 = 0.3;
// Clean runs succeed at sigmoid(2.0) = 88%; each violation costs two
// log-odds units, dropping a single-fault run to 50%.
const DEFAULT_BIAS: f64 = 2.0;
const DEFAULT_WEIGHT: f64 = -2.0;

#[derive(Args)]
pub struct SynthArgs {
    /// TOML generator config: n_runs, seed, [fault_rates], [outcome].
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of runs to generate.
    #[arg(long)]
    runs: Option<usize>,
    /// Generation seed; a fixed seed reproduces the corpus byte for byte.
    #[arg(long)]
    seed: Option<u64>,
    /// Uniform violation rate for all six rubrics.
    #[arg(long)]
    fault_rate: Option<f64>,
    /// Directory for corpus.jsonl, truth.jsonl, and run.json.
    #[arg(long)]
    out: PathBuf,
}

fn uniform_rates(rate: f64) -> BTreeMap<String, f64> {
    RubricId::ALL.into_iter().map(|r| (r.as_str().to_string(), rate)).collect()
}

fn default_outcome() -> OutcomeConfig {
    OutcomeConfig {
        bias: DEFAULT_BIAS,
        weights: RubricId::ALL.into_iter().map(|r| (r.as_str().to_string(), DEFAULT_WEIGHT)).collect(),
    }
}

fn rates_summary(rates: &BTreeMap<String, f64>) -> String {
    let values: Vec<f64> = rates.values().copied().collect();
    if !values.is_empty() && values.iter().all(|v| *v == values[0]) && rates.len() == 6 {
        format!("{} (uniform)", values[0])
    } else {
        serde_json::to_string(rates).expect("rate map serialization cannot fail")
    }
}

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    let file_text = match &args.config {
        Some(path) => Some((
            path.clone(),
            std::fs::read_to_string(path).map_err(|e| io_err(path, e))?,
        )),
        None => None,
    };
    let file: Option<SynthConfig> = match &file_text {
        Some((path, text)) => Some(
            toml::from_str(text).map_err(|e| usage(format!("{}: {e}", path.display())))?,
        ),
        None => None,
    };

    let runs = pick(args.runs, file.as_ref().map(|f| f.n_runs), None, DEFAULT_RUNS);
    let seed = pick(args.seed, file.as_ref().map(|f| f.seed), None, DEFAULT_SEED);
    let fault_rates = pick(
        args.fault_rate.map(uniform_rates),
        file.as_ref().and_then(|f| (!f.fault_rates.is_empty()).then(|| f.fault_rates.clone())),
        None,
        uniform_rates(DEFAULT_FAULT_RATE),
    );
    let outcome = pick(None, file.map(|f| f.outcome), None, default_outcome());

    let mut echo = ConfigEcho::new();
    echo.add("runs", &runs);
    echo.add("seed", &seed);
    echo.add_value("fault_rates", rates_summary(&fault_rates.value), fault_rates.source);
    echo.add_value(
        "outcome",
        serde_json::to_string(&outcome.value).expect("outcome serialization cannot fail"),
        outcome.source,
    );
    echo.print("synth");

    let resolved = SynthConfig {
        n_runs: runs.value,
        seed: seed.value,
        fault_rates: fault_rates.value,
        outcome: outcome.value,
    };
    let (faults, model) = resolved.compile()?;

    let mut manifest = RunManifest::new(
        "synth",
        serde_json::to_value(&resolved).expect("config serialization cannot fail"),
    );
    if let Some((path, text)) = &file_text {
        manifest.record_input(path, text.as_bytes());
    }

    create_out_dir(&args.out)?;
    let (corpus, truth) = generate_corpus(resolved.n_runs, &faults, &model, resolved.seed)?;

    let mut corpus_bytes = Vec::new();
    write_trace_corpus(&mut corpus_bytes, &corpus).map_err(|e| data(e))?;
    manifest.write_output(&args.out, "corpus.jsonl", &corpus_bytes)?;

    let mut truth_bytes = Vec::new();
    truth.write_jsonl(&mut truth_bytes).map_err(|e| data(e))?;
    manifest.write_output(&args.out, "truth.jsonl", &truth_bytes)?;

    let successes = truth.records.iter().filter(|r| r.outcome.success).count();
    println!("generated {} runs ({successes} successes) with seed {}", corpus.len(), resolved.seed);
    manifest.finish(&args.out)
}
