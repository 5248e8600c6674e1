//! The ten acceptance criteria, one PASS/FAIL line each.
//!
//! The report goes straight to stderr, so it shows up without `--nocapture`.

mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use mtst_core::baseline::{Baseline, BaselineConfig};
use mtst_core::data::{generate_synthetic, SynthConfig, SyntheticCorpus};
use mtst_core::encoder::Mode;
use mtst_core::features::{SensitiveLexicon, DEFAULT_LEN_CAP};
use mtst_core::gradcheck::{check_gradients, max_rel_error};
use mtst_core::metrics::{self, jaccard_macro, mae_mse, mcc, prf_macro, ConfusionMatrix};
use mtst_core::model::{batch_loss, batch_loss_grad, loss_joint, Example, ModelConfig};
use mtst_core::params::ModelParams;
use mtst_core::prepare::Featurizer;
use mtst_core::selftrain::{self_train, tau_schedule, AcceptanceRule, SelfTrainConfig};
use mtst_core::tokenizer::TokenSequence;
use mtst_core::trainer::{self, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---- tiny-config fixtures -------------------------------------------------

fn tiny_example(id: usize, rng: &mut ChaCha8Rng, multi: Option<Vec<u8>>, main: Option<usize>) -> Example {
    let n = rng.random_range(1..=6);
    let mut ids = vec![2];
    ids.extend((0..n).map(|_| rng.random_range(5..40u32)));
    ids.push(3);
    let true_length = ids.len();
    let mut attention_mask = vec![1; true_length];
    ids.resize(8, 0);
    attention_mask.resize(8, 0);
    Example {
        id: format!("g{id}"),
        seq: TokenSequence {
            ids,
            attention_mask,
            true_length,
        },
        features: (0..4).map(|_| rng.random_range(0.0..1.0)).collect(),
        multi_label: multi,
        main_label: main,
    }
}

fn tiny_batch() -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    vec![
        tiny_example(0, &mut rng, Some(vec![1, 0, 1]), Some(0)),
        tiny_example(1, &mut rng, Some(vec![0, 0, 0]), Some(2)),
        tiny_example(2, &mut rng, Some(vec![0, 1, 1]), Some(1)),
        tiny_example(3, &mut rng, Some(vec![1, 1, 0]), Some(0)),
    ]
}

fn tiny_params(lambda: f64) -> ModelParams {
    let mut cfg = ModelConfig::tiny(40);
    cfg.fusion.lambda = lambda;
    let mut p = ModelParams::init(&cfg, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in &mut p.tensors {
        for v in &mut t.data {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    p
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut p = tiny_params(0.7);
    let data = tiny_batch();
    let refs: Vec<&Example> = data.iter().collect();
    let rng = ChaCha8Rng::seed_from_u64(0);
    batch_loss_grad(&refs, &mut p, Mode::Eval, &mut rng.clone()).map_err(|e| e.to_string())?;
    let loss = |q: &ModelParams| batch_loss(&refs, q, Mode::Eval, &mut rng.clone()).unwrap().total;
    let checks = check_gradients(&mut p, loss, 1e-5, |_| true);
    let err = max_rel_error(&checks);
    let secs = start.elapsed().as_secs_f64();
    check(
        checks.len() == p.tensors.len() && err < 1e-4 && secs < 60.0,
        format!("{} tensors, max relative error {err:.2e}, {secs:.1}s", checks.len()),
    )
}

fn criterion_2() -> Outcome {
    let data = tiny_batch();
    let refs: Vec<&Example> = data.iter().collect();
    let norms = |lambda: f64| {
        let mut p = tiny_params(lambda);
        batch_loss_grad(&refs, &mut p, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let n = |i: usize| p.grads[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        let l = &p.layout;
        [n(l.multi_w), n(l.multi_b), n(l.main_w), n(l.main_b)]
    };
    let one = norms(1.0);
    let zero = norms(0.0);
    check(
        one[2] == 0.0 && one[3] == 0.0 && zero[0] == 0.0 && zero[1] == 0.0 && one[0] > 0.0 && zero[2] > 0.0,
        format!(
            "lambda=1 main head grads ({}, {}); lambda=0 multi head grads ({}, {})",
            one[2], one[3], zero[0], zero[1]
        ),
    )
}

// ---- metric oracles ------------------------------------------------------

fn direct_binary_mcc(tp: f64, tn: f64, fp: f64, fn_: f64) -> f64 {
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / den
    }
}

fn label_set(row: &[u8]) -> BTreeSet<usize> {
    row.iter().enumerate().filter(|(_, &v)| v == 1).map(|(i, _)| i).collect()
}

fn oracle_jaccard(t: &[Vec<u8>], p: &[Vec<u8>]) -> f64 {
    let scores: Vec<f64> = t
        .iter()
        .zip(p)
        .map(|(a, b)| {
            let (a, b) = (label_set(a), label_set(b));
            let union = a.union(&b).count();
            if union == 0 {
                1.0
            } else {
                a.intersection(&b).count() as f64 / union as f64
            }
        })
        .collect();
    scores.iter().sum::<f64>() / scores.len() as f64
}

fn oracle_prf(t: &[Vec<u8>], p: &[Vec<u8>]) -> (f64, f64, f64) {
    let c = t[0].len();
    let mut out = (0.0, 0.0, 0.0);
    for k in 0..c {
        let truth: BTreeSet<usize> = (0..t.len()).filter(|&i| t[i][k] == 1).collect();
        let pred: BTreeSet<usize> = (0..p.len()).filter(|&i| p[i][k] == 1).collect();
        let hit = truth.intersection(&pred).count() as f64;
        let prec = if pred.is_empty() { 0.0 } else { hit / pred.len() as f64 };
        let rec = if truth.is_empty() { 0.0 } else { hit / truth.len() as f64 };
        let f1 = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
        out.0 += prec / c as f64;
        out.1 += rec / c as f64;
        out.2 += f1 / c as f64;
    }
    out
}

fn oracle_mae_mse(t: &[Vec<u8>], q: &[Vec<f64>]) -> (f64, f64) {
    let diffs: Vec<f64> = t
        .iter()
        .flatten()
        .zip(q.iter().flatten())
        .map(|(&a, &b)| f64::from(a) - b)
        .collect();
    let n = diffs.len() as f64;
    (
        diffs.iter().map(|d| d.abs()).sum::<f64>() / n,
        diffs.iter().map(|d| d * d).sum::<f64>() / n,
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst_mcc = 0.0f64;
    for _ in 0..1000 {
        let [tp, tn, fp, fn_] = [(); 4].map(|_| rng.random_range(0..60u64));
        if tp + tn + fp + fn_ == 0 {
            continue;
        }
        let got = mcc(&ConfusionMatrix::binary(tp, tn, fp, fn_)).map_err(|e| e.to_string())?;
        let want = direct_binary_mcc(tp as f64, tn as f64, fp as f64, fn_ as f64);
        worst_mcc = worst_mcc.max((got - want).abs());
    }
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=10);
        let c = rng.random_range(1..=5);
        let bits = |rng: &mut ChaCha8Rng| -> Vec<Vec<u8>> {
            (0..n).map(|_| (0..c).map(|_| rng.random_range(0..2u8)).collect()).collect()
        };
        let t = bits(&mut rng);
        let p = bits(&mut rng);
        let q: Vec<Vec<f64>> = (0..n).map(|_| (0..c).map(|_| rng.random_range(0.0..=1.0)).collect()).collect();
        let j = jaccard_macro(&t, &p).map_err(|e| e.to_string())?;
        let (pm, rm, fm) = prf_macro(&t, &p).map_err(|e| e.to_string())?;
        let (a, s) = mae_mse(&t, &q).map_err(|e| e.to_string())?;
        let (op, or, of) = oracle_prf(&t, &p);
        let (oa, os) = oracle_mae_mse(&t, &q);
        for d in [j - oracle_jaccard(&t, &p), pm - op, rm - or, fm - of, a - oa, s - os] {
            worst = worst.max(d.abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_mcc <= 1e-12 && worst <= 1e-12 && secs < 10.0,
        format!("mcc max diff {worst_mcc:.1e}, multi-label max diff {worst:.1e}, {secs:.2}s"),
    )
}

fn criterion_4() -> Outcome {
    let m = mcc(&ConfusionMatrix::binary(3, 4, 1, 2)).map_err(|e| e.to_string())?;
    let m_err = (m - 10.0 / 600f64.sqrt()).abs();
    // Sets {a,b} and {b,c} over the universe (a, b, c).
    let j = jaccard_macro(&[vec![1, 1, 0]], &[vec![0, 1, 1]]).map_err(|e| e.to_string())?;
    let j_err = (j - 1.0 / 3.0).abs();
    let joint = loss_joint(1.0, 2.0, 0.7);
    check(
        m_err <= 1e-12 && j_err <= 1e-12 && joint == 1.3,
        format!("mcc {m}, jaccard {j}, joint loss {joint}"),
    )
}

fn criterion_5() -> Outcome {
    let cfg = SelfTrainConfig::default();
    let got = tau_schedule(&cfg);
    let want = [0.90, 0.88, 0.86, 0.85, 0.85];
    check(
        (cfg.tau_init, cfg.tau_min, cfg.alpha, cfg.iterations) == (0.9, 0.85, 0.02, 5) && got == want,
        format!("{got:?}"),
    )
}

// ---- synthetic-corpus fixtures --------------------------------------------

struct Encoded {
    corpus: SyntheticCorpus,
    config: ModelConfig,
    train: Vec<Example>,
    unlabeled: Vec<Example>,
    validation: Vec<Example>,
    test: Vec<Example>,
}

fn encode(synth: &SynthConfig, seed: u64, vocab: usize) -> Encoded {
    let corpus = generate_synthetic(synth, seed).unwrap();
    let texts: Vec<&str> = corpus
        .split
        .labeled
        .iter()
        .chain(&corpus.split.unlabeled)
        .map(|s| s.text.as_str())
        .collect();
    let f = Featurizer::fit(&texts, vocab, SensitiveLexicon::placeholder(), 32, DEFAULT_LEN_CAP).unwrap();
    let mut config = ModelConfig::tiny(f.vocab.len());
    config.encoder.n_max = 32;
    config.feature_dim = f.feature_dim();
    Encoded {
        config,
        train: f.examples(&corpus.split.labeled),
        unlabeled: f.examples(&corpus.split.unlabeled),
        validation: f.examples(&corpus.split.validation),
        test: f.examples(&corpus.split.test),
        corpus,
    }
}

fn fit_config(seed: u64) -> TrainConfig {
    TrainConfig {
        lr: 3e-3,
        batch_size: 8,
        epochs: 3,
        seed,
        ..Default::default()
    }
}

fn multi_f1(params: &ModelParams, examples: &[Example]) -> f64 {
    metrics::evaluate(params, examples, 0.5).unwrap().multi.unwrap().f1_macro
}

fn criterion_6() -> Outcome {
    let synth = SynthConfig {
        n_train: 600,
        labeled_fraction: 0.2,
        ..Default::default()
    };
    let data = encode(&synth, 6, 1500);
    let held_out: BTreeSet<&str> = data.validation.iter().chain(&data.test).map(|e| e.id.as_str()).collect();
    let mut accepted = 0;
    let mut runs = 0;
    for rule in [AcceptanceRule::MainConfidence, AcceptanceRule::JointConfidence] {
        for remove_accepted in [true, false] {
            let cfg = SelfTrainConfig {
                tau_init: 0.6,
                tau_min: 0.4,
                alpha: 0.1,
                iterations: 4,
                acceptance_rule: rule,
                remove_accepted,
                ..Default::default()
            };
            let params = ModelParams::init(&data.config, 6).unwrap();
            let train_cfg = TrainConfig {
                epochs: 2,
                ..fit_config(6)
            };
            let out = self_train(
                &data.train,
                &data.unlabeled,
                &data.validation,
                params,
                &train_cfg,
                &cfg,
                &mut |_, _, _| Ok(()),
            )
            .map_err(|e| e.to_string())?;
            runs += 1;
            let total = data.train.len() + data.unlabeled.len();
            if out.records.windows(2).any(|w| w[1].labeled_size < w[0].labeled_size) {
                return Err(format!("{rule:?}: labeled pool shrank"));
            }
            if remove_accepted && out.records.iter().any(|r| r.labeled_size + r.unlabeled_size != total) {
                return Err(format!("{rule:?}: pool total changed"));
            }
            for b in &out.batches {
                for p in &b.accepted {
                    accepted += 1;
                    if p.confidence <= b.tau_used {
                        return Err(format!("confidence {} not above tau {}", p.confidence, b.tau_used));
                    }
                }
            }
            if out.pseudo_ids.iter().any(|id| held_out.contains(id.as_str()))
                || out.labeled.iter().any(|e| held_out.contains(e.id.as_str()))
            {
                return Err("a held-out sample entered the labeled pool".into());
            }
        }
    }
    check(accepted > 0, format!("{runs} runs, {accepted} pseudo-labels checked"))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let synth = SynthConfig {
        n_train: 5000,
        ..Default::default()
    };
    let data = encode(&synth, 0, 3000);
    let split = &data.corpus.split;
    let baseline = Baseline::fit(&split.labeled, 3, 3, &BaselineConfig::default()).map_err(|e| e.to_string())?;
    let preds = baseline.predict_all(&split.test);
    let base_f1 = metrics::report_from_predictions(&preds, &split.test, 0.5, 3, true)
        .map_err(|e| e.to_string())?
        .multi
        .unwrap()
        .f1_macro;
    let params = ModelParams::init(&data.config, 0).unwrap();
    let (params, log) =
        trainer::train(&data.train, &data.validation, params, &fit_config(0)).map_err(|e| e.to_string())?;
    let model_f1 = multi_f1(&params, &data.test);
    let secs = start.elapsed().as_secs_f64();
    check(
        base_f1 > 0.95 && model_f1 > 0.95 && log.epochs.len() <= 3 && secs < 300.0,
        format!(
            "{} labeled; baseline multi-F1 {base_f1:.4}, model multi-F1 {model_f1:.4} after {} epochs, {secs:.1}s",
            split.labeled.len(),
            log.epochs.len()
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let synth = SynthConfig {
        n_train: 3000,
        labeled_fraction: 0.1,
        ..Default::default()
    };
    let (mut plain, mut selftrained) = (Vec::new(), Vec::new());
    for seed in 0..5 {
        let data = encode(&synth, seed, 3000);
        let train_cfg = fit_config(seed);
        let init = ModelParams::init(&data.config, seed).unwrap();
        let (p0, _) =
            trainer::train(&data.train, &data.validation, init.clone(), &train_cfg).map_err(|e| e.to_string())?;
        let out = self_train(
            &data.train,
            &data.unlabeled,
            &data.validation,
            init,
            &train_cfg,
            &SelfTrainConfig::default(),
            &mut |_, _, _| Ok(()),
        )
        .map_err(|e| e.to_string())?;
        plain.push(multi_f1(&p0, &data.test));
        selftrained.push(multi_f1(&out.params, &data.test));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let gain = mean(&selftrained) - mean(&plain);
    let secs = start.elapsed().as_secs_f64();
    check(
        gain >= 0.02 && secs < 900.0,
        format!(
            "mean multi-F1 without self-training {:.4}, with {:.4}, gain {gain:.4}, {secs:.1}s",
            mean(&plain),
            mean(&selftrained)
        ),
    )
}

// ---- run-directory criteria ----------------------------------------------

fn json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn criterion_9(dir: &Path) -> Outcome {
    let cfg = common::write_small(dir);
    common::ok(&["ablate", "-c", cfg.to_str().unwrap(), "-o", "abl"], dir);
    let root = dir.join("abl/ablate");
    let no_multi = root.join("without_multi_label");
    let mut reports = vec![no_multi.join("metrics/test.json"), no_multi.join("metrics/validation.json")];
    for entry in std::fs::read_dir(no_multi.join("iterations")).map_err(|e| e.to_string())? {
        let it = entry.map_err(|e| e.to_string())?.path();
        reports.push(it.join("metrics/test.json"));
    }
    for r in &reports {
        if !json(r)?["multi"].is_null() {
            return Err(format!("{} carries multi-label metrics", r.display()));
        }
    }
    let (header, rows) = common::csv_rows(&dir.join("abl/ablation.csv"));
    let f1_col = header.iter().position(|h| h == "f1_macro").unwrap();
    let row = rows.iter().find(|r| r[0] == "without_multi_label").ok_or("no without_multi_label row")?;
    if !row[f1_col].is_empty() {
        return Err("ablation.csv has a multi-label F1 for without_multi_label".into());
    }

    let no_st = root.join("without_self_training");
    let summary = json(&no_st.join("selftrain_summary.json"))?;
    let (_, it_rows) = common::csv_rows(&no_st.join("iterations.csv"));
    let it_dirs = std::fs::read_dir(no_st.join("iterations")).map_err(|e| e.to_string())?.count();
    let full = json(&root.join("full/selftrain_summary.json"))?;
    check(
        summary["iterations_run"] == 0
            && summary["pseudo_labeled"] == 0
            && it_rows.len() == 1
            && it_dirs == 1
            && full["iterations_run"].as_u64().unwrap_or(0) > 0,
        format!(
            "{} rows; no-multi-label reports checked: {}; no-self-training ran {} iterations (full ran {})",
            rows.len(),
            reports.len(),
            summary["iterations_run"],
            full["iterations_run"]
        ),
    )
}

fn criterion_10(dir: &Path) -> Outcome {
    let cfg = common::write_small(dir);
    let cfg = cfg.to_str().unwrap();
    let mut compared = 0;
    for cmd in ["train", "selftrain", "baseline"] {
        let first = format!("{cmd}_a");
        common::ok(&[cmd, "-c", cfg, "-o", &first], dir);
        let replay = format!("{first}/config.toml");
        common::ok(&[cmd, "-c", &replay, "-o", &format!("{cmd}_b")], dir);
        common::ok(&[cmd, "-c", &replay, "-o", &format!("{cmd}_c")], dir);
        for split in ["validation", "test"] {
            let read = |run: &str| std::fs::read(dir.join(run).join("metrics").join(format!("{split}.json")));
            let a = read(&first).map_err(|e| e.to_string())?;
            for other in [format!("{cmd}_b"), format!("{cmd}_c")] {
                if read(&other).map_err(|e| e.to_string())? != a {
                    return Err(format!("{cmd} {split} report differs in {other}"));
                }
                compared += 1;
            }
        }
    }
    for out in ["eval_a", "eval_b"] {
        common::ok(&["evaluate", "--run", "selftrain_a", "-o", out], dir);
    }
    let a = std::fs::read(dir.join("eval_a/test.json")).map_err(|e| e.to_string())?;
    let b = std::fs::read(dir.join("eval_b/test.json")).map_err(|e| e.to_string())?;
    check(a == b, format!("{} report pairs bit-identical", compared + 1))
}

#[test]
fn acceptance() {
    let tmp = TempDir::new().unwrap();
    let d9 = tmp.path().join("c9");
    let d10 = tmp.path().join("c10");
    std::fs::create_dir_all(&d9).unwrap();
    std::fs::create_dir_all(&d10).unwrap();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("gradient correctness", Box::new(criterion_1)),
        ("loss-weight annihilation", Box::new(criterion_2)),
        ("metric oracles", Box::new(criterion_3)),
        ("hand values", Box::new(criterion_4)),
        ("threshold schedule", Box::new(criterion_5)),
        ("self-training bookkeeping", Box::new(criterion_6)),
        ("learnability floor", Box::new(criterion_7)),
        ("self-training efficacy", Box::new(criterion_8)),
        ("ablation harness fidelity", Box::new(move || criterion_9(&d9))),
        ("determinism", Box::new(move || criterion_10(&d10))),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        match run() {
            Ok(detail) => writeln!(err, "criterion {n:>2} PASS  {name}: {detail}").unwrap(),
            Err(detail) => {
                writeln!(err, "criterion {n:>2} FAIL  {name}: {detail}").unwrap();
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
