use std::collections::BTreeSet;

use mtst_core::data::{
    generate_synthetic, load_dataset, split_holdout, validate, write_jsonl, Format, LabelSchema, LoadOptions,
    Provenance, Sample, SynthConfig,
};
use proptest::prelude::*;

fn sample() -> impl Strategy<Value = (String, Option<Vec<u8>>, Option<usize>)> {
    (
        "[a-zA-Z\u{4e00}-\u{4e40}！，。 \t]{0,24}",
        prop::option::of(prop::collection::vec(0u8..=1, 3)),
        prop::option::of(0usize..3),
    )
}

fn schema() -> LabelSchema {
    LabelSchema::new(
        vec!["race".into(), "gender".into(), "religion".into()],
        vec!["hate".into(), "offensive".into(), "normal".into()],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loaded_samples_validate_and_reload_identically(rows in prop::collection::vec(sample(), 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        let samples: Vec<Sample> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (text, multi_label, main_label))| Sample {
                id: format!("r{i}"),
                text,
                lang: "en".into(),
                multi_label,
                main_label,
                provenance: Provenance::Gold,
            })
            .collect();
        write_jsonl(&path, &samples, &schema()).unwrap();
        let opts = LoadOptions { reject_budget: 1.0, ..LoadOptions::new(Format::Jsonl) };
        let (a, report_a) = load_dataset(&path, &opts, &schema()).unwrap();
        let (b, report_b) = load_dataset(&path, &opts, &schema()).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&report_a, &report_b);
        prop_assert_eq!(report_a.accepted + report_a.rejected, samples.len());
        for s in &a {
            prop_assert!(validate(s, &schema()).is_empty());
        }
    }

    #[test]
    fn synthetic_splits_are_disjoint(seed in 0u64..1000, fraction in 0.05..=1.0f64) {
        let cfg = SynthConfig { n_train: 60, n_validation: 20, n_test: 20, labeled_fraction: fraction, ..Default::default() };
        let c = generate_synthetic(&cfg, seed).unwrap();
        prop_assert!(c.split.check().is_ok());
        for (_, part) in c.split.partitions() {
            for s in part {
                prop_assert!(validate(s, &cfg.schema).is_empty());
            }
        }
        let hidden: BTreeSet<&str> = c.hidden.keys().map(String::as_str).collect();
        let pool: BTreeSet<&str> = c.split.unlabeled.iter().map(|s| s.id.as_str()).collect();
        prop_assert_eq!(hidden, pool);
    }

    #[test]
    fn holdout_split_partitions_everything(n in 0usize..80, val in 0.0..0.4f64, test in 0.0..0.4f64, seed in any::<u64>()) {
        let labeled: Vec<Sample> = (0..n)
            .map(|i| Sample { main_label: Some(i % 3), ..Sample::unlabeled(format!("s{i}"), "t", "en") })
            .collect();
        let split = split_holdout(labeled, Vec::new(), val, test, seed).unwrap();
        prop_assert!(split.check().is_ok());
        prop_assert_eq!(split.labeled.len() + split.validation.len() + split.test.len(), n);
        let again = split_holdout(
            (0..n).map(|i| Sample { main_label: Some(i % 3), ..Sample::unlabeled(format!("s{i}"), "t", "en") }).collect(),
            Vec::new(),
            val,
            test,
            seed,
        )
        .unwrap();
        prop_assert_eq!(split.validation, again.validation);
    }
}

#[test]
fn holdout_rejects_bad_fractions() {
    assert!(split_holdout(Vec::new(), Vec::new(), 0.6, 0.5, 0).is_err());
    assert!(split_holdout(Vec::new(), Vec::new(), -0.1, 0.1, 0).is_err());
}
