//! `tracelens static-xai`: the text-classifier explanation pipeline.
//!
//! Reads a `text,label` CSV, fits (or loads) the TF-IDF + logistic
//! regression pipeline, and emits plot-ready artifacts: the global
//! mean-|SHAP| table, a PDP curve for the top feature, the explanation
//! stability score, and optionally a local SHAP + LIME explanation of one
//! row packaged as an explanation packet.

use std::path::PathBuf;

use clap::Args;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use tracelens_core::packet::{build_static_mep, StaticInstance};
use tracelens_core::xai::lime::{lime_explain, LimeConfig};
use tracelens_core::xai::logreg::{train_logreg, TrainConfig};
use tracelens_core::xai::pdp::pdp;
use tracelens_core::xai::pipeline::{fit_text_model, TextModel};
use tracelens_core::xai::shap::{mean_abs_shap, shap_linear};
use tracelens_core::xai::sparse::SparseVec;
use tracelens_core::xai::stability::{
    stability_score, stability_score_bootstrap, Perturbation, StabilityConfig,
};
use tracelens_core::xai::tfidf::{StopwordList, TfIdfConfig};
use tracelens_core::xai::Scope;

use crate::errors::{data, io_err, usage, CliError};
use crate::manifest::RunManifest;
use crate::resolve::{pick, ConfigEcho};
use crate::util::create_out_dir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum PerturbationChoice {
    TokenDropout,
    BootstrapRetrain,
    Identity,
}

impl PerturbationChoice {
    fn as_str(self) -> &'static str {
        match self {
            PerturbationChoice::TokenDropout => "token_dropout",
            PerturbationChoice::BootstrapRetrain => "bootstrap_retrain",
            PerturbationChoice::Identity => "identity",
        }
    }

    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "token_dropout" => Ok(PerturbationChoice::TokenDropout),
            "bootstrap_retrain" => Ok(PerturbationChoice::BootstrapRetrain),
            "identity" => Ok(PerturbationChoice::Identity),
            other => Err(usage(format!(
                "unknown perturbation {other:?}, expected token_dropout, bootstrap_retrain, or identity"
            ))),
        }
    }
}

#[derive(Args)]
pub struct StaticXaiArgs {
    /// Corpus CSV with text,label columns (labels 0 or 1).
    #[arg(long, alias = "train")]
    data: PathBuf,
    /// Reuse a fitted model instead of training on --data.
    #[arg(long)]
    model: Option<PathBuf>,
    /// TOML config mirroring the long flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for model/attribution/stability artifacts and run.json.
    #[arg(long)]
    out: PathBuf,

    #[arg(long)]
    ngram_min: Option<usize>,
    #[arg(long)]
    ngram_max: Option<usize>,
    #[arg(long)]
    min_df: Option<usize>,
    #[arg(long)]
    max_df: Option<f64>,
    /// Keep stopwords as features.
    #[arg(long)]
    no_stopwords: bool,
    /// L2 penalty of the classifier fit.
    #[arg(long)]
    l2: Option<f64>,
    /// Rows of the global attribution table.
    #[arg(long)]
    top_k: Option<usize>,

    /// Top features compared per stability pair.
    #[arg(long)]
    stability_k: Option<usize>,
    /// Perturbation draws per instance.
    #[arg(long)]
    n_perturb: Option<usize>,
    #[arg(long, value_enum)]
    perturbation: Option<PerturbationChoice>,
    #[arg(long)]
    dropout_rate: Option<f64>,
    /// Instances entering the stability evaluation (corpus prefix).
    #[arg(long)]
    stability_sample: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,

    /// Also explain this row locally (SHAP + LIME + explanation packet).
    #[arg(long)]
    explain_row: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct StaticFileConfig {
    ngram_min: Option<usize>,
    ngram_max: Option<usize>,
    min_df: Option<usize>,
    max_df: Option<f64>,
    stopwords: Option<bool>,
    l2: Option<f64>,
    top_k: Option<usize>,
    stability_k: Option<usize>,
    n_perturb: Option<usize>,
    perturbation: Option<String>,
    dropout_rate: Option<f64>,
    stability_sample: Option<usize>,
    seed: Option<u64>,
}

/// Parses the corpus CSV, expecting exactly the `text` and `label` headers
/// (in any column order) and binary labels.
fn read_labeled_csv(path: &PathBuf, bytes: &[u8]) -> Result<(Vec<String>, Vec<bool>), CliError> {
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| data(format!("{}: {e}", path.display())))?
        .clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            data(format!("{}: missing required column {name:?}", path.display()))
        })
    };
    let text_col = find("text")?;
    let label_col = find("label")?;

    let mut texts = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| data(format!("{} row {}: {e}", path.display(), i + 1)))?;
        let text = record
            .get(text_col)
            .ok_or_else(|| data(format!("{} row {}: short record", path.display(), i + 1)))?;
        let label = match record.get(label_col).map(str::trim) {
            Some("0") => false,
            Some("1") => true,
            other => {
                return Err(data(format!(
                    "{} row {}: label {:?} is not 0 or 1",
                    path.display(),
                    i + 1,
                    other.unwrap_or("")
                )));
            }
        };
        texts.push(text.to_string());
        labels.push(label);
    }
    if texts.is_empty() {
        return Err(data(format!("{}: no data rows", path.display())));
    }
    Ok((texts, labels))
}

/// Column order of the global attribution table: |score| descending, ties
/// by column index.
fn ranked_columns(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].abs().partial_cmp(&scores[i].abs()).unwrap().then(i.cmp(&j)));
    order
}

pub fn run(args: StaticXaiArgs) -> Result<(), CliError> {
    let file_text = match &args.config {
        Some(path) => Some((
            path.clone(),
            std::fs::read_to_string(path).map_err(|e| io_err(path, e))?,
        )),
        None => None,
    };
    let file: StaticFileConfig = match &file_text {
        Some((path, text)) => {
            toml::from_str(text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => StaticFileConfig::default(),
    };

    let tfidf_defaults = TfIdfConfig::default();
    let ngram_min = pick(args.ngram_min, file.ngram_min, None, tfidf_defaults.ngram_range.0);
    let ngram_max = pick(args.ngram_max, file.ngram_max, None, tfidf_defaults.ngram_range.1);
    let min_df = pick(args.min_df, file.min_df, None, tfidf_defaults.min_df);
    let max_df = pick(args.max_df, file.max_df, None, tfidf_defaults.max_df);
    let stopwords = pick(
        args.no_stopwords.then_some(false),
        file.stopwords,
        None,
        true,
    );
    let l2 = pick(args.l2, file.l2, None, TrainConfig::default().l2);
    let top_k = pick(args.top_k, file.top_k, None, 10usize);
    let stability_k = pick(args.stability_k, file.stability_k, None, 10usize);
    let n_perturb = pick(args.n_perturb, file.n_perturb, None, 20usize);
    let file_perturbation = match &file.perturbation {
        Some(s) => Some(PerturbationChoice::parse(s)?),
        None => None,
    };
    let perturbation = pick(
        args.perturbation,
        file_perturbation,
        None,
        PerturbationChoice::TokenDropout,
    );
    let dropout_rate = pick(args.dropout_rate, file.dropout_rate, None, 0.1);
    let stability_sample = pick(args.stability_sample, file.stability_sample, None, 50usize);
    let seed = pick(args.seed, file.seed, None, 42u64);

    if top_k.value == 0 {
        return Err(usage("--top-k must be at least 1"));
    }
    if stability_sample.value == 0 {
        return Err(usage("--stability-sample must be at least 1"));
    }

    let mut echo = ConfigEcho::new();
    echo.add_value("ngram_range", format!("({}, {})", ngram_min.value, ngram_max.value), ngram_max.source);
    echo.add("min_df", &min_df);
    echo.add("max_df", &max_df);
    echo.add_value("stopwords", if stopwords.value { "english" } else { "none" }, stopwords.source);
    echo.add("l2", &l2);
    echo.add("top_k", &top_k);
    echo.add("stability_k", &stability_k);
    echo.add("n_perturb", &n_perturb);
    echo.add_value("perturbation", perturbation.value.as_str(), perturbation.source);
    if perturbation.value == PerturbationChoice::TokenDropout {
        echo.add("dropout_rate", &dropout_rate);
    }
    echo.add("stability_sample", &stability_sample);
    echo.add("seed", &seed);
    if let Some(path) = &args.model {
        echo.add_value("model", path.display(), "flag");
    }
    echo.print("static-xai");

    let tfidf_config = TfIdfConfig {
        ngram_range: (ngram_min.value, ngram_max.value),
        min_df: min_df.value,
        max_df: max_df.value,
        stopwords: if stopwords.value { StopwordList::English } else { StopwordList::None },
    };
    let train_config = TrainConfig { l2: l2.value, ..TrainConfig::default() };

    let config_value = serde_json::json!({
        "ngram_range": [ngram_min.value, ngram_max.value],
        "min_df": min_df.value,
        "max_df": max_df.value,
        "stopwords": if stopwords.value { "english" } else { "none" },
        "l2": train_config.l2,
        "max_iter": train_config.max_iter,
        "tol": train_config.tol,
        "top_k": top_k.value,
        "stability": {
            "k": stability_k.value,
            "n_perturb": n_perturb.value,
            "perturbation": perturbation.value.as_str(),
            "dropout_rate": dropout_rate.value,
            "sample": stability_sample.value,
        },
        "seed": seed.value,
        "explain_row": args.explain_row,
        "pretrained_model": args.model.as_ref().map(|p| p.display().to_string()),
    });
    let mut manifest = RunManifest::new("static-xai", config_value);
    if let Some((path, text)) = &file_text {
        manifest.record_input(path, text.as_bytes());
    }

    let data_bytes = crate::util::read_input(&mut manifest, &args.data)?;
    let (texts, labels) = read_labeled_csv(&args.data, &data_bytes)?;
    let positives = labels.iter().filter(|&&l| l).count();
    println!("{} documents ({} labeled 1)", texts.len(), positives);

    create_out_dir(&args.out)?;
    let model = match &args.model {
        Some(path) => {
            let bytes = crate::util::read_input(&mut manifest, path)?;
            let text = String::from_utf8(bytes)
                .map_err(|e| data(format!("{}: not UTF-8: {e}", path.display())))?;
            TextModel::from_json(&text).map_err(|e| data(format!("{}: {e}", path.display())))?
        }
        None => {
            let (model, diagnostics) =
                fit_text_model(&texts, &labels, tfidf_config, &train_config)
                    .map_err(|e| data(e))?;
            println!(
                "trained on {} features: {} iterations, final loss {:.6}, {}",
                model.tfidf.n_features(),
                diagnostics.iterations,
                diagnostics.final_loss,
                if diagnostics.converged { "converged" } else { "hit the iteration cap" },
            );
            manifest.write_output(&args.out, "model.json", model.to_json().as_bytes())?;
            model
        }
    };
    let model_sha = model.sha256();
    let terms = model.tfidf.terms();
    let vectors = model.tfidf.transform_corpus(&texts);

    // Global attribution table.
    let global = mean_abs_shap(&model.linear, &vectors).map_err(|e| data(e))?;
    let order = ranked_columns(&global.scores);
    let shown = top_k.value.min(order.len());
    let mut rows = Vec::with_capacity(shown);
    let mut csv_text = String::from("rank,term,feature,mean_abs_shap,weight\n");
    for (rank, &column) in order[..shown].iter().enumerate() {
        rows.push(serde_json::json!({
            "rank": rank + 1,
            "term": terms[column],
            "feature": column,
            "mean_abs_shap": global.scores[column],
            "weight": model.linear.weights[column],
        }));
        csv_text.push_str(&format!(
            "{},{},{},{:.6},{:.6}\n",
            rank + 1,
            terms[column],
            column,
            global.scores[column],
            model.linear.weights[column],
        ));
    }
    let attributions = serde_json::json!({
        "kind": "static_attributions",
        "model_sha256": model_sha,
        "n_docs": vectors.len(),
        "n_features": model.tfidf.n_features(),
        "base_value": global.base_value,
        "top": rows,
    });
    let mut attributions_text =
        serde_json::to_string_pretty(&attributions).expect("attribution serialization");
    attributions_text.push('\n');
    manifest.write_output(&args.out, "attributions.json", attributions_text.as_bytes())?;
    manifest.write_output(&args.out, "attributions.csv", csv_text.as_bytes())?;

    // PDP curve for the top-attributed feature.
    let top_feature = order[0];
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let predict = |x: &SparseVec| {
        model.linear.predict_proba(x).expect("dimensions fixed by the pipeline")
    };
    let curve = pdp(&predict, &vectors, top_feature, &grid).map_err(|e| data(e))?;
    let mut pdp_text = String::from("term,feature,grid_value,mean_probability\n");
    for (value, mean) in &curve {
        pdp_text.push_str(&format!("{},{},{value:.1},{mean:.6}\n", terms[top_feature], top_feature));
    }
    manifest.write_output(&args.out, "pdp.csv", pdp_text.as_bytes())?;

    // Stability of the SHAP explanations under the chosen perturbation.
    let sample = &vectors[..stability_sample.value.min(vectors.len())];
    let k = stability_k.value.min(model.tfidf.n_features());
    let stability_config = StabilityConfig {
        k,
        n_perturb: n_perturb.value,
        perturbation: match perturbation.value {
            PerturbationChoice::TokenDropout => {
                Perturbation::TokenDropout { rate: dropout_rate.value }
            }
            PerturbationChoice::BootstrapRetrain => Perturbation::BootstrapRetrain,
            PerturbationChoice::Identity => Perturbation::Identity,
        },
        seed: seed.value,
    };
    let explain =
        |x: &SparseVec| shap_linear(&model.linear, x).expect("dimensions fixed").scores;
    let score = match stability_config.perturbation {
        Perturbation::BootstrapRetrain => {
            let refit = |rng: &mut ChaCha8Rng| {
                let (sample_x, sample_y) = resample_both_classes(&vectors, &labels, rng);
                let (refitted, _) = train_logreg(&sample_x, &sample_y, &train_config)
                    .expect("resample kept both classes");
                move |x: &SparseVec| shap_linear(&refitted, x).expect("dimensions fixed").scores
            };
            stability_score_bootstrap(explain, refit, sample, &stability_config)
        }
        _ => stability_score(explain, sample, &stability_config),
    }
    .map_err(|e| usage(e))?;

    match score.mean_rho {
        Some(rho) => println!(
            "stability: mean rho {rho:.4} over {} pairs ({} skipped)",
            score.evaluated, score.skipped
        ),
        None => println!("stability: undefined (all {} pairs skipped)", score.skipped),
    }
    let stability_json = serde_json::json!({
        "kind": "stability",
        "model_sha256": model_sha,
        "config": stability_config,
        "sample": sample.len(),
        "mean_rho": score.mean_rho,
        "evaluated": score.evaluated,
        "skipped": score.skipped,
    });
    let mut stability_text =
        serde_json::to_string_pretty(&stability_json).expect("stability serialization");
    stability_text.push('\n');
    manifest.write_output(&args.out, "stability.json", stability_text.as_bytes())?;
    let rho_cell = score.mean_rho.map(|r| format!("{r:.6}")).unwrap_or_default();
    let stability_csv = format!(
        "perturbation,k,n_perturb,seed,sample,mean_rho,evaluated,skipped\n{},{},{},{},{},{},{},{}\n",
        perturbation.value.as_str(),
        k,
        n_perturb.value,
        seed.value,
        sample.len(),
        rho_cell,
        score.evaluated,
        score.skipped,
    );
    manifest.write_output(&args.out, "stability.csv", stability_csv.as_bytes())?;

    if let Some(row) = args.explain_row {
        explain_one_row(
            row, &texts, &vectors, &model, &terms, &model_sha, top_k.value, seed.value,
            score.mean_rho, &mut manifest, &args.out,
        )?;
    }
    manifest.finish(&args.out)
}

/// Bootstrap resample of (vectors, labels) that keeps both classes, so the
/// refit is always well-posed.
fn resample_both_classes(
    vectors: &[SparseVec],
    labels: &[bool],
    rng: &mut ChaCha8Rng,
) -> (Vec<SparseVec>, Vec<bool>) {
    let n = vectors.len();
    loop {
        let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        if picks.iter().any(|&i| labels[i]) && picks.iter().any(|&i| !labels[i]) {
            let xs = picks.iter().map(|&i| vectors[i].clone()).collect();
            let ys = picks.iter().map(|&i| labels[i]).collect();
            return (xs, ys);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn explain_one_row(
    row: usize,
    texts: &[String],
    vectors: &[SparseVec],
    model: &TextModel,
    terms: &[&str],
    model_sha: &str,
    top_k: usize,
    seed: u64,
    stability_rho: Option<f64>,
    manifest: &mut RunManifest,
    out: &std::path::Path,
) -> Result<(), CliError> {
    if row >= vectors.len() {
        return Err(usage(format!(
            "--explain-row {row} out of range for {} documents",
            vectors.len()
        )));
    }
    let x = &vectors[row];
    let local = shap_linear(&model.linear, x).map_err(|e| data(e))?;
    let proba = model.linear.predict_proba(x).map_err(|e| data(e))?;
    let predicted_label = u8::from(proba >= 0.5);
    let confidence = if predicted_label == 1 { proba } else { 1.0 - proba };

    let order = ranked_columns(&local.scores);
    let shown = top_k.min(order.len());
    let shap_top: Vec<serde_json::Value> = order[..shown]
        .iter()
        .map(|&c| {
            serde_json::json!({ "term": terms[c], "feature": c, "phi": local.scores[c] })
        })
        .collect();

    let lime_config = LimeConfig { n_features: top_k, seed, ..LimeConfig::default() };
    let predict = |v: &SparseVec| {
        model.linear.predict_proba(v).expect("dimensions fixed by the pipeline")
    };
    let lime = lime_explain(&predict, x, &lime_config).map_err(|e| data(e))?;
    let lime_top: Vec<serde_json::Value> = lime
        .features
        .iter()
        .map(|&(c, beta)| serde_json::json!({ "term": terms[c], "feature": c, "beta": beta }))
        .collect();

    let local_json = serde_json::json!({
        "kind": "local_explanation",
        "row": row,
        "model_sha256": model_sha,
        "predicted_label": predicted_label,
        "confidence": confidence,
        "shap": { "base_value": local.base_value, "top": shap_top },
        "lime": { "intercept": lime.intercept, "top": lime_top },
    });
    let mut text = serde_json::to_string_pretty(&local_json).expect("local serialization");
    text.push('\n');
    manifest.write_output(out, "local.json", text.as_bytes())?;

    // Package the local SHAP view as an explanation packet when the
    // stability check produced a usable score.
    let Some(rho) = stability_rho else {
        println!("skipping the explanation packet: stability was undefined on this corpus");
        return Ok(());
    };
    let names: Vec<String> = order[..shown].iter().map(|&c| terms[c].to_string()).collect();
    let scores: Vec<f64> = order[..shown].iter().map(|&c| local.scores[c]).collect();
    let reduced = tracelens_core::xai::Attribution {
        scores,
        base_value: local.base_value,
        scope: Scope::Local,
    };
    let instance = StaticInstance {
        text: texts[row].clone(),
        predicted_label,
        confidence,
    };
    let packet = build_static_mep(model_sha, &instance, names, &reduced, rho, None)?;
    manifest.write_output(
        out,
        &format!("row_{row}.mep.json"),
        &tracelens_core::packet::serialize(&packet),
    )?;
    Ok(())
}
