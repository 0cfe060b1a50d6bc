//! `tracelens mep`: build, validate, or describe explanation packets.

use std::path::PathBuf;

use clap::{Args, Subcommand};
use tracelens_core::packet::{
    build_agentic_mep, deserialize, serialize, MEP_JSON_SCHEMA,
};
use tracelens_core::synth::{replay, ReplayConfig, SynthConfig};
use tracelens_core::trace::{content_hash, validate_trajectory, Trajectory};

use crate::errors::{data, io_err, usage, CliError};
use crate::manifest::RunManifest;
use crate::resolve::ConfigEcho;
use crate::util::{create_out_dir, parse_corpus, parse_flags, read_input};

#[derive(Args)]
pub struct MepArgs {
    #[command(subcommand)]
    action: MepAction,
}

#[derive(Subcommand)]
enum MepAction {
    /// Build one agentic packet per judged run.
    Build {
        /// Trace corpus the flags were judged on.
        #[arg(long)]
        traces: PathBuf,
        /// Judged flags, one JSON object per line.
        #[arg(long)]
        flags: PathBuf,
        /// Only package this run id.
        #[arg(long)]
        run: Option<String>,
        /// Generator TOML; when given, each run is regenerated and the
        /// packet's replay_consistent signal records whether the bytes
        /// matched. Without it no check runs and the signal stays false.
        #[arg(long)]
        replay_config: Option<PathBuf>,
        /// Directory for the .mep.json files and run.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and fully re-validate packet files.
    Validate {
        /// Packet files to check.
        #[arg(long, required = true, num_args = 1..)]
        packet: Vec<PathBuf>,
        /// Directory for validation.json and run.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the packet JSON schema for third-party validators.
    Schema {
        /// Directory for mep.schema.json and run.json.
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(args: MepArgs) -> Result<(), CliError> {
    match args.action {
        MepAction::Build { traces, flags, run, replay_config, out } => {
            build(traces, flags, run, replay_config, out)
        }
        MepAction::Validate { packet, out } => validate(packet, out),
        MepAction::Schema { out } => schema(out),
    }
}

/// Regenerates run `ordinal` from the generator config and reports whether
/// it reproduced the recorded bytes.
fn replay_matches(
    config: &SynthConfig,
    ordinal: usize,
    recorded: &Trajectory,
) -> Result<bool, CliError> {
    let (faults, outcome) = config.compile()?;
    let (regenerated, _) = replay(&ReplayConfig {
        seed: config.seed,
        faults,
        outcome,
        n_runs: config.n_runs,
        ordinal,
    })?;
    Ok(content_hash(&regenerated) == content_hash(recorded))
}

fn build(
    traces: PathBuf,
    flags_path: PathBuf,
    only_run: Option<String>,
    replay_config: Option<PathBuf>,
    out: PathBuf,
) -> Result<(), CliError> {
    let replay_file = match &replay_config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let config: SynthConfig =
                toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            Some((path.clone(), text, config))
        }
        None => None,
    };

    let mut echo = ConfigEcho::new();
    echo.add_value(
        "replay_check",
        replay_file.as_ref().map_or("off".to_string(), |(p, _, _)| p.display().to_string()),
        if replay_file.is_some() { "flag" } else { "default" },
    );
    if let Some(run) = &only_run {
        echo.add_value("run", run, "flag");
    }
    echo.print("mep build");

    let mut manifest = RunManifest::new(
        "mep",
        serde_json::json!({
            "action": "build",
            "run": only_run,
            "replay_check": replay_file.is_some(),
        }),
    );
    if let Some((path, text, _)) = &replay_file {
        manifest.record_input(path, text.as_bytes());
    }
    let corpus_bytes = read_input(&mut manifest, &traces)?;
    let corpus = parse_corpus(&traces, &corpus_bytes)?;
    let flags_bytes = read_input(&mut manifest, &flags_path)?;
    let all_flags = parse_flags(&flags_path, &flags_bytes)?;

    create_out_dir(&out)?;
    let mut built = 0usize;
    for (ordinal, t) in corpus.iter().enumerate() {
        if only_run.as_ref().is_some_and(|id| *id != t.run_id) {
            continue;
        }
        let flags = all_flags
            .iter()
            .find(|v| v.run_id == t.run_id)
            .ok_or_else(|| data(format!("no flags for run {}", t.run_id)))?;
        let replay_consistent = match &replay_file {
            Some((_, _, config)) => replay_matches(config, ordinal, t)?,
            None => false,
        };
        let packet = build_agentic_mep(t, flags, replay_consistent, validate_trajectory(t))?;
        manifest.write_output(&out, &format!("{}.mep.json", t.run_id), &serialize(&packet))?;
        built += 1;
    }
    if built == 0 {
        return Err(data(match only_run {
            Some(id) => format!("run {id:?} not found in the corpus"),
            None => "corpus is empty".to_string(),
        }));
    }
    println!("packaged {built} runs");
    manifest.finish(&out)
}

fn validate(packets: Vec<PathBuf>, out: PathBuf) -> Result<(), CliError> {
    let mut echo = ConfigEcho::new();
    echo.add_value("packets", packets.len(), "flag");
    echo.print("mep validate");

    let mut manifest = RunManifest::new(
        "mep",
        serde_json::json!({ "action": "validate", "packets": packets.len() }),
    );
    let mut results = Vec::new();
    let mut failures = 0usize;
    for path in &packets {
        let bytes = read_input(&mut manifest, path)?;
        match deserialize(&bytes) {
            Ok(packet) => {
                println!("ok {} ({:?}, {:?} scope)", path.display(), packet.paradigm, packet.scope);
                results.push(serde_json::json!({
                    "path": path.display().to_string(),
                    "ok": true,
                }));
            }
            Err(e) => {
                println!("FAIL {}: {e}", path.display());
                results.push(serde_json::json!({
                    "path": path.display().to_string(),
                    "ok": false,
                    "error": e.to_string(),
                }));
                failures += 1;
            }
        }
    }

    create_out_dir(&out)?;
    let doc = serde_json::json!({ "kind": "mep_validation", "results": results });
    let mut text = serde_json::to_string_pretty(&doc).expect("validation serialization");
    text.push('\n');
    manifest.write_output(&out, "validation.json", text.as_bytes())?;
    manifest.finish(&out)?;
    if failures > 0 {
        return Err(data(format!("{failures} of {} packets failed validation", packets.len())));
    }
    Ok(())
}

fn schema(out: PathBuf) -> Result<(), CliError> {
    ConfigEcho::new().print("mep schema");
    let mut manifest =
        RunManifest::new("mep", serde_json::json!({ "action": "schema" }));
    create_out_dir(&out)?;
    manifest.write_output(&out, "mep.schema.json", MEP_JSON_SCHEMA.as_bytes())?;
    manifest.finish(&out)
}
