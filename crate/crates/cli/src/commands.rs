//! One function per subcommand. Each writes a self-describing run directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mtst_core::baseline::Baseline;
use mtst_core::checkpoint::{load_model, save_model};
use mtst_core::metrics::{self, MetricsReport, CSV_COLUMNS};
use mtst_core::params::ModelParams;
use mtst_core::selftrain::{self_train, IterationRecord, PseudoLabelBatch};
use mtst_core::trainer::{self, TrainOptions, TrainState, LAST_CHECKPOINT};
use serde::Serialize;
use serde_json::Value;

use crate::artifacts::{self, metrics_header, metrics_row, write_csv, write_json, write_text};
use crate::config::{self, RunConfig, RESOLVED_CONFIG};
use crate::pipeline::{self, Prepared, VOCAB_FILE};
use crate::UserError;

pub const MODEL_FILE: &str = "model.ckpt";
pub const SPLITS: [&str; 2] = ["validation", "test"];

fn start_run(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone();
    artifacts::ensure_dir(&dir)?;
    cfg.write_resolved(&dir)?;
    Ok(dir)
}

fn write_report(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut text = report.to_json()?;
    text.push('\n');
    write_text(path, &text)
}

/// Scores every non-empty held-out split into `dir/metrics/` and
/// `dir/metrics.csv`.
fn score_model(dir: &Path, prep: &Prepared, params: &ModelParams, threshold: f64) -> Result<BTreeMap<String, MetricsReport>> {
    let mut out = BTreeMap::new();
    let mut rows = Vec::new();
    for name in SPLITS {
        let examples = prep.split(name).unwrap_or_default();
        if examples.is_empty() {
            continue;
        }
        let report = metrics::evaluate(params, examples, threshold)?;
        write_report(&dir.join("metrics").join(format!("{name}.json")), &report)?;
        rows.push(metrics_row(&[name], &report));
        out.insert(name.to_string(), report);
    }
    write_csv(&dir.join("metrics.csv"), &metrics_header(&["split"]), &rows)?;
    Ok(out)
}

pub fn preprocess(cfg: &RunConfig) -> Result<()> {
    let dir = start_run(cfg)?;
    let prep = pipeline::prepare(cfg)?;
    pipeline::write_corpus(&dir, &prep.corpus, cfg)?;
    prep.featurizer.vocab.save(&dir.join(VOCAB_FILE))?;
    let sizes: BTreeMap<&str, usize> = prep.corpus.split.partitions().iter().map(|(n, p)| (*n, p.len())).collect();
    println!("{}", serde_json::to_string(&sizes)?);
    Ok(())
}

pub fn train(cfg: &RunConfig, resume: bool, stop_after_epochs: Option<usize>) -> Result<()> {
    let dir = start_run(cfg)?;
    let prep = pipeline::prepare(cfg)?;
    prep.featurizer.vocab.save(&dir.join(VOCAB_FILE))?;
    let opts = TrainOptions {
        checkpoint_dir: Some(dir.join("checkpoints")),
        halt_after_epochs: stop_after_epochs,
    };
    let state = if resume {
        let path = dir.join("checkpoints").join(LAST_CHECKPOINT);
        if !path.exists() {
            bail!(UserError(format!("nothing to resume: {} does not exist", path.display())));
        }
        let (state, stored) = TrainState::load(&path)?;
        if stored != cfg.train {
            bail!(UserError("the [train] section differs from the one the checkpoint was written with".into()));
        }
        if state.params.config != prep.model {
            bail!(UserError("the model config differs from the one the checkpoint was written with".into()));
        }
        state
    } else {
        trainer::start(ModelParams::init(&prep.model, cfg.seed)?, &cfg.train)
    };
    let (params, log) = trainer::train_with(&prep.train, &prep.validation, state, &cfg.train, &opts)?;
    write_json(&dir.join("train_log.json"), &log)?;
    if stop_after_epochs.is_some_and(|h| log.epochs.len() >= h && log.epochs.len() < cfg.train.epochs) {
        eprintln!("halted after {} epochs; continue with --resume", log.epochs.len());
        return Ok(());
    }
    save_model(&dir.join(MODEL_FILE), &params)?;
    let reports = score_model(&dir, &prep, &params, cfg.train.threshold)?;
    print_summary(&reports);
    Ok(())
}

fn print_summary(reports: &BTreeMap<String, MetricsReport>) {
    for (split, r) in reports {
        let acc = r.main.map(|m| format!("{:.4}", m.accuracy)).unwrap_or_else(|| "-".into());
        let f1 = r.multi.map(|m| format!("{:.4}", m.f1_macro)).unwrap_or_else(|| "-".into());
        println!("{split}: accuracy {acc} multi_f1 {f1}");
    }
}

#[derive(Serialize)]
struct SelfTrainSummary<'a> {
    iterations_run: usize,
    pseudo_labeled: usize,
    records: Vec<&'a IterationRecord>,
}

pub const ITERATION_COLUMNS: [&str; 6] = [
    "iteration",
    "tau",
    "accepted",
    "labeled_size",
    "unlabeled_size",
    "retrained",
];

/// Runs the self-training loop with per-iteration artifacts under
/// `dir/iterations/iter_NNN/` and returns the final test report.
pub fn run_selftrain(cfg: &RunConfig, dir: &Path) -> Result<BTreeMap<String, MetricsReport>> {
    let prep = pipeline::prepare(cfg)?;
    prep.featurizer.vocab.save(&dir.join(VOCAB_FILE))?;
    let params = ModelParams::init(&prep.model, cfg.seed)?;
    let threshold = cfg.train.threshold;
    if prep.validation.is_empty() && prep.test.is_empty() {
        bail!(UserError("self-training needs a validation or test split".into()));
    }
    let mut rows = Vec::new();
    let mut failure: Option<anyhow::Error> = None;
    let mut save_iteration = |record: &IterationRecord, batch: Option<&PseudoLabelBatch>, params: &ModelParams| -> Result<()> {
        let it_dir = dir.join("iterations").join(format!("iter_{:03}", record.iteration));
        write_json(&it_dir.join("iteration.json"), record)?;
        let mut lines = String::new();
        if let Some(b) = batch {
            for pl in &b.accepted {
                let mut row = serde_json::to_value(pl)?;
                row["tau_used"] = b.tau_used.into();
                lines.push_str(&row.to_string());
                lines.push('\n');
            }
        }
        write_text(&it_dir.join("pseudo_labels.jsonl"), &lines)?;
        save_model(&it_dir.join(MODEL_FILE), params)?;
        let reports = score_model(&it_dir, &prep, params, threshold)?;
        let report = reports.get("test").or(reports.get("validation")).expect("a held-out split");
        let head = [
            record.iteration.to_string(),
            record.tau_used.map(|t| t.to_string()).unwrap_or_default(),
            record.accepted.to_string(),
            record.labeled_size.to_string(),
            record.unlabeled_size.to_string(),
            record.retrained.to_string(),
        ];
        rows.push(head.into_iter().chain(report.csv_row()).collect::<Vec<String>>());
        Ok(())
    };
    let result = self_train(
        &prep.train,
        &prep.unlabeled,
        &prep.validation,
        params,
        &cfg.train,
        &cfg.selftrain,
        &mut |record, batch, params| {
            save_iteration(record, batch, params).map_err(|e| {
                let msg = format!("{e:#}");
                failure = Some(e);
                mtst_core::Error::Config(msg)
            })
        },
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let out = result?;
    let header: Vec<&str> = ITERATION_COLUMNS.iter().copied().chain(CSV_COLUMNS).collect();
    write_csv(&dir.join("iterations.csv"), &header, &rows)?;
    save_model(&dir.join(MODEL_FILE), &out.params)?;
    let summary = SelfTrainSummary {
        iterations_run: out.records.len() - 1,
        pseudo_labeled: out.pseudo_ids.len(),
        records: out.records.iter().collect(),
    };
    write_json(&dir.join("selftrain_summary.json"), &summary)?;
    score_model(dir, &prep, &out.params, threshold)
}

pub fn selftrain(cfg: &RunConfig) -> Result<()> {
    let dir = start_run(cfg)?;
    let reports = run_selftrain(cfg, &dir)?;
    print_summary(&reports);
    Ok(())
}

pub struct EvalArgs {
    pub run_dir: PathBuf,
    pub model: Option<PathBuf>,
    pub split: String,
    pub threshold: Option<f64>,
    pub sweep: bool,
    pub out: Option<PathBuf>,
}

pub fn evaluate(args: &EvalArgs) -> Result<()> {
    let cfg_path = args.run_dir.join(RESOLVED_CONFIG);
    if !cfg_path.exists() {
        bail!(UserError(format!("{} is not a run directory (no {RESOLVED_CONFIG})", args.run_dir.display())));
    }
    let cfg = config::resolve(Some(&cfg_path), &config::Overrides::default())?;
    let prep = pipeline::prepare_with_vocab(&cfg, &args.run_dir)?;
    let model_path = args.model.clone().unwrap_or_else(|| args.run_dir.join(MODEL_FILE));
    let params = load_model(&model_path).with_context(|| format!("loading {}", model_path.display()))?;
    if params.config != prep.model {
        bail!(UserError(format!("{} does not match the run's model config", model_path.display())));
    }
    let Some(examples) = prep.split(&args.split) else {
        bail!(UserError(format!("unknown split `{}` (expected validation or test)", args.split)));
    };
    if examples.is_empty() {
        bail!(UserError(format!("split `{}` is empty", args.split)));
    }
    let out = args.out.clone().unwrap_or_else(|| args.run_dir.join("evaluation"));
    let threshold = args.threshold.unwrap_or(cfg.train.threshold);
    let report = metrics::evaluate(&params, examples, threshold)?;
    write_report(&out.join(format!("{}.json", args.split)), &report)?;
    print_summary(&BTreeMap::from([(args.split.clone(), report)]));
    if args.sweep {
        if params.config.fusion.lambda == 0.0 {
            bail!(UserError("the model has no multi-label head (lambda = 0); nothing to sweep".into()));
        }
        let preds = metrics::predict_all(&params, examples)?;
        let mut rows = Vec::new();
        for &t in &cfg.evaluate.sweep {
            let r = metrics::report_from_predictions(&preds, examples, t, params.config.num_main, true)?;
            let m = r.multi.context("no multi-label targets in split")?;
            rows.push(vec![
                t.to_string(),
                m.precision_macro.to_string(),
                m.recall_macro.to_string(),
                m.f1_macro.to_string(),
            ]);
        }
        write_csv(
            &out.join(format!("{}_threshold_sweep.csv", args.split)),
            &["threshold", "precision_macro", "recall_macro", "f1_macro"],
            &rows,
        )?;
    }
    Ok(())
}

pub fn baseline(cfg: &RunConfig) -> Result<()> {
    let dir = start_run(cfg)?;
    let corpus = pipeline::load_corpus(cfg)?;
    let schema = &cfg.data.schema;
    let model = Baseline::fit(&corpus.split.labeled, schema.num_multi(), schema.num_main(), &cfg.baseline)?;
    write_json(&dir.join("baseline.json"), &model)?;
    let mut rows = Vec::new();
    let mut reports = BTreeMap::new();
    for (name, part) in [("validation", &corpus.split.validation), ("test", &corpus.split.test)] {
        if part.is_empty() {
            continue;
        }
        let preds = model.predict_all(part);
        let report = metrics::report_from_predictions(&preds, part, cfg.train.threshold, schema.num_main(), model.multi.is_some())?;
        write_report(&dir.join("metrics").join(format!("{name}.json")), &report)?;
        rows.push(metrics_row(&[name], &report));
        reports.insert(name.to_string(), report);
    }
    write_csv(&dir.join("metrics.csv"), &metrics_header(&["split"]), &rows)?;
    print_summary(&reports);
    Ok(())
}

/// Config transformations for the ablation table, in table order.
pub fn ablation_presets(cfg: &RunConfig) -> Vec<(&'static str, RunConfig)> {
    let mut encoder_only = cfg.clone();
    encoder_only.model.fusion.feature_dense_dim = 0;
    encoder_only.selftrain.iterations = 0;
    let mut without_self_training = cfg.clone();
    without_self_training.selftrain.iterations = 0;
    let mut without_multi_label = cfg.clone();
    without_multi_label.model.fusion.lambda = 0.0;
    vec![
        ("encoder_only", encoder_only),
        ("without_self_training", without_self_training),
        ("without_multi_label", without_multi_label),
        ("full", cfg.clone()),
    ]
}

pub const ABLATION_DIR: &str = "ablate";

pub fn ablate(cfg: &RunConfig) -> Result<()> {
    let dir = start_run(cfg)?;
    let mut rows = Vec::new();
    for (name, mut preset) in ablation_presets(cfg) {
        preset.output_dir = dir.join(ABLATION_DIR).join(name);
        preset.validate()?;
        let sub = start_run(&preset)?;
        let reports = run_selftrain(&preset, &sub)?;
        let report = reports.get("test").or(reports.get("validation")).expect("a held-out split");
        rows.push(metrics_row(&[name], report));
        println!("{name}: done");
    }
    write_csv(&dir.join("ablation.csv"), &metrics_header(&["setting"]), &rows)
}

/// Flattened key names a report JSON must carry; sections may be null.
fn check_report_schema(path: &Path, value: &Value) -> Result<()> {
    let reference = serde_json::to_value(MetricsReport {
        main: Some(metrics::MainMetrics { accuracy: 0.0, mcc: 0.0 }),
        multi: Some(metrics::MultiMetrics {
            precision_macro: 0.0,
            recall_macro: 0.0,
            f1_macro: 0.0,
            mae: 0.0,
            mse: 0.0,
            jaccard_macro: 0.0,
        }),
        counts: Some(metrics::ConfusionMatrix::new(1)),
        n_samples: 0,
    })?;
    let keys = |v: &Value| -> BTreeSet<String> { v.as_object().map(|o| o.keys().cloned().collect()).unwrap_or_default() };
    let diverge = |a: &BTreeSet<String>, b: &BTreeSet<String>| a.symmetric_difference(b).next().cloned();
    let Some(obj) = value.as_object() else {
        bail!(UserError(format!("{}: not a JSON object", path.display())));
    };
    if let Some(field) = diverge(&keys(value), &keys(&reference)) {
        bail!(UserError(format!("{}: field `{field}` does not match the report schema", path.display())));
    }
    for section in ["main", "multi"] {
        if obj[section].is_null() {
            continue;
        }
        if let Some(field) = diverge(&keys(&obj[section]), &keys(&reference[section])) {
            bail!(UserError(format!(
                "{}: field `{section}.{field}` does not match the report schema",
                path.display()
            )));
        }
    }
    Ok(())
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Serialize)]
struct ReportRow {
    run: String,
    stage: String,
    split: String,
    report: MetricsReport,
}

#[derive(Serialize)]
struct Aggregate {
    rows: Vec<ReportRow>,
    missing: Vec<String>,
}

/// One row per (run, stage, split): every iteration, then the final model.
pub fn report(dirs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut agg = Aggregate {
        rows: Vec::new(),
        missing: Vec::new(),
    };
    for dir in dirs {
        let mut sources: Vec<(String, PathBuf)> = Vec::new();
        let it_root = dir.join("iterations");
        if it_root.is_dir() {
            let mut its: Vec<PathBuf> = std::fs::read_dir(&it_root)
                .with_context(|| format!("listing {}", it_root.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            its.sort();
            for it in its {
                let stage = it.file_name().unwrap_or_default().to_string_lossy().into_owned();
                for f in json_files(&it.join("metrics"))? {
                    sources.push((stage.clone(), f));
                }
            }
        }
        for f in json_files(&dir.join("metrics"))? {
            sources.push(("final".to_string(), f));
        }
        if sources.is_empty() {
            eprintln!("no metrics reports under {}", dir.display());
            agg.missing.push(dir.display().to_string());
            continue;
        }
        for (stage, path) in sources {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let value: Value =
                serde_json::from_str(&text).map_err(|e| UserError(format!("{}: {e}", path.display())))?;
            check_report_schema(&path, &value)?;
            let report: MetricsReport =
                serde_json::from_value(value).map_err(|e| UserError(format!("{}: {e}", path.display())))?;
            agg.rows.push(ReportRow {
                run: dir.display().to_string(),
                stage,
                split: path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                report,
            });
        }
    }
    let keys = ["run", "stage", "split"];
    let header = metrics_header(&keys);
    let rows: Vec<Vec<String>> = agg
        .rows
        .iter()
        .map(|r| metrics_row(&[r.run.as_str(), r.stage.as_str(), r.split.as_str()], &r.report))
        .collect();
    match out {
        Some(out) => {
            write_csv(&out.join("report.csv"), &header, &rows)?;
            write_json(&out.join("report.json"), &agg)?;
        }
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(&header)?;
            for row in &rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
