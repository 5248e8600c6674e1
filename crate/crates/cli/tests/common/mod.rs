#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

/// Small enough that a self-training run takes a second or two.
pub const SMALL: &str = r#"
[data.synthetic]
n_train = 300
n_validation = 80
n_test = 80
labeled_fraction = 0.3

[preprocess]
vocab_size = 1200

[model]
layers = 1
hidden = 16
heads = 2
ffn_mult = 2
n_max = 32
dropout_p = 0.0

[train]
epochs = 2
batch_size = 8
lr = 0.003

[selftrain]
iterations = 2
tau_init = 0.5
tau_min = 0.4
alpha = 0.05
"#;

pub fn write_small(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path
}

pub fn mtst(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtst"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn mtst")
}

/// Runs and asserts success, returning stdout.
pub fn ok(args: &[&str], cwd: &Path) -> String {
    let out = mtst(args, cwd);
    assert!(
        out.status.success(),
        "mtst {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

pub fn jsonl_line(id: &str, text: &str, labels: &[&str], main: &str) -> String {
    serde_json::json!({"id": id, "text": text, "lang": "en", "labels": labels, "main_label": main}).to_string()
}
