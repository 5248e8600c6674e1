//! Field-map driven JSONL/CSV adapters.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{clean_text, map_main_label, validate, LabelSchema, MappingRules, Provenance, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!("unknown dataset format `{other}`"))),
        }
    }
}

/// Source field/column names for each sample attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldMap {
    pub id: String,
    pub text: String,
    pub lang: String,
    /// List of category names (JSON array, or delimited string in CSV).
    pub labels: String,
    pub main_label: String,
    /// CSV only: category name -> 0/1 column, for one-column-per-label files.
    pub label_columns: BTreeMap<String, String>,
    pub label_delimiter: String,
    pub default_lang: String,
}

impl Default for FieldMap {
    fn default() -> Self {
        Self {
            id: "id".into(),
            text: "text".into(),
            lang: "lang".into(),
            labels: "labels".into(),
            main_label: "main_label".into(),
            label_columns: BTreeMap::new(),
            label_delimiter: "|".into(),
            default_lang: "und".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub format: Format,
    pub field_map: FieldMap,
    pub rules: MappingRules,
    /// Fraction of rows allowed to be unparseable before the load fails.
    pub reject_budget: f64,
}

impl LoadOptions {
    pub fn new(format: Format) -> Self {
        Self {
            format,
            field_map: FieldMap::default(),
            rules: MappingRules::default(),
            reject_budget: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub total: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub reasons: BTreeMap<String, usize>,
}

impl LoadReport {
    fn reject(&mut self, reason: &str) {
        self.rejected += 1;
        *self.reasons.entry(reason.to_string()).or_default() += 1;
    }
}

/// Raw attributes pulled out of one row before normalization.
#[derive(Default)]
struct RawRow {
    id: Option<String>,
    text: Option<String>,
    lang: Option<String>,
    labels: Option<RawLabels>,
    main: Option<Vec<String>>,
    main_index: Option<usize>,
}

enum RawLabels {
    Names(Vec<String>),
    Binary(Vec<u8>),
}

enum RowError {
    Reject(&'static str),
}

/// Loads, cleans and validates a dataset file. Rows in file order.
pub fn load_dataset(
    path: &Path,
    opts: &LoadOptions,
    schema: &LabelSchema,
) -> Result<(Vec<Sample>, LoadReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let rows: Vec<std::result::Result<RawRow, ()>> = match opts.format {
        Format::Jsonl => read_jsonl_rows(BufReader::new(file), &opts.field_map, path)?,
        Format::Csv => read_csv_rows(file, &opts.field_map)?,
    };

    let mut report = LoadReport {
        total: rows.len(),
        ..Default::default()
    };
    let mut unparseable = 0;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (n, row) in rows.into_iter().enumerate() {
        let raw = match row {
            Ok(raw) => raw,
            Err(()) => {
                unparseable += 1;
                report.reject("unparseable");
                continue;
            }
        };
        match build_sample(raw, n + 1, opts, schema) {
            Ok(sample) => {
                if !seen.insert(sample.id.clone()) {
                    report.reject("duplicate id");
                    continue;
                }
                report.accepted += 1;
                out.push(sample);
            }
            Err(RowError::Reject(reason)) => report.reject(reason),
        }
    }

    let budget = (opts.reject_budget * report.total as f64).floor() as usize;
    if unparseable > budget {
        return Err(Error::RejectBudget {
            path: path.display().to_string(),
            unparseable,
            total: report.total,
            budget,
        });
    }
    Ok((out, report))
}

fn build_sample(
    raw: RawRow,
    row_number: usize,
    opts: &LoadOptions,
    schema: &LabelSchema,
) -> std::result::Result<Sample, RowError> {
    let text = raw.text.ok_or(RowError::Reject("missing text"))?;
    let text = clean_text(&text);
    if text.is_empty() {
        return Err(RowError::Reject("empty text"));
    }
    let multi_label = match raw.labels {
        None => None,
        Some(RawLabels::Binary(v)) => Some(v),
        Some(RawLabels::Names(names)) => {
            let mut v = vec![0u8; schema.num_multi()];
            for name in names.iter().filter(|n| !n.trim().is_empty()) {
                let idx = schema
                    .multi_index(name)
                    .ok_or(RowError::Reject("unknown multi-label category"))?;
                v[idx] = 1;
            }
            Some(v)
        }
    };
    let main_label = match (raw.main_index, raw.main) {
        (Some(i), _) => Some(i),
        (None, Some(votes)) => Some(
            map_main_label(&votes, &opts.rules, schema)
                .map_err(|_| RowError::Reject("unknown main label"))?,
        ),
        (None, None) => None,
    };
    let sample = Sample {
        id: raw
            .id
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| format!("row-{row_number}")),
        text,
        lang: raw
            .lang
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| opts.field_map.default_lang.clone()),
        multi_label,
        main_label,
        provenance: Provenance::Gold,
    };
    if let Some(v) = validate(&sample, schema).first() {
        return Err(RowError::Reject(v.key()));
    }
    Ok(sample)
}

fn value_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn read_jsonl_rows(
    reader: impl BufRead,
    fm: &FieldMap,
    path: &Path,
) -> Result<Vec<std::result::Result<RawRow, ()>>> {
    let mut rows = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(parse_json_row(&line, fm));
    }
    Ok(rows)
}

fn parse_json_row(line: &str, fm: &FieldMap) -> std::result::Result<RawRow, ()> {
    let value: Value = serde_json::from_str(line).map_err(|_| ())?;
    let obj = value.as_object().ok_or(())?;
    let mut row = RawRow {
        id: obj.get(&fm.id).and_then(value_to_string),
        text: obj.get(&fm.text).and_then(value_to_string),
        lang: obj.get(&fm.lang).and_then(value_to_string),
        ..Default::default()
    };
    match obj.get(&fm.labels) {
        None | Some(Value::Null) => {}
        Some(Value::Array(items)) => {
            if items.iter().all(Value::is_string) {
                row.labels = Some(RawLabels::Names(
                    items.iter().filter_map(value_to_string).collect(),
                ));
            } else {
                let bits = items
                    .iter()
                    .map(|v| v.as_u64().and_then(|b| u8::try_from(b).ok()))
                    .collect::<Option<Vec<u8>>>()
                    .ok_or(())?;
                row.labels = Some(RawLabels::Binary(bits));
            }
        }
        Some(Value::String(s)) => {
            row.labels = Some(RawLabels::Names(
                s.split(fm.label_delimiter.as_str()).map(String::from).collect(),
            ))
        }
        Some(_) => return Err(()),
    }
    match obj.get(&fm.main_label) {
        None | Some(Value::Null) => {}
        Some(Value::String(s)) => row.main = Some(vec![s.clone()]),
        Some(Value::Number(n)) => {
            row.main_index = Some(n.as_u64().ok_or(())? as usize);
        }
        Some(Value::Array(items)) => {
            row.main = Some(items.iter().filter_map(value_to_string).collect());
        }
        Some(_) => return Err(()),
    }
    Ok(row)
}

fn read_csv_rows(file: File, fm: &FieldMap) -> Result<Vec<std::result::Result<RawRow, ()>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col(&fm.id);
    let text_col = col(&fm.text);
    let lang_col = col(&fm.lang);
    let labels_col = col(&fm.labels);
    let main_col = col(&fm.main_label);
    let binary_cols: Vec<(String, Option<usize>)> = fm
        .label_columns
        .iter()
        .map(|(cat, c)| (cat.clone(), col(c)))
        .collect();
    if binary_cols.iter().any(|(_, c)| c.is_none()) {
        return Err(Error::Config(format!(
            "csv header lacks a label column from {:?}",
            fm.label_columns
        )));
    }

    let mut rows = Vec::new();
    'rows: for record in reader.records() {
        let Ok(record) = record else {
            rows.push(Err(()));
            continue;
        };
        let get = |c: Option<usize>| c.and_then(|i| record.get(i)).map(str::to_string);
        let mut row = RawRow {
            id: get(id_col),
            text: get(text_col),
            lang: get(lang_col),
            ..Default::default()
        };
        if !binary_cols.is_empty() {
            let mut names = Vec::new();
            for (cat, c) in &binary_cols {
                match get(*c).as_deref().map(str::trim) {
                    Some("1") | Some("1.0") | Some("true") => names.push(cat.clone()),
                    Some("0") | Some("0.0") | Some("false") | Some("") | None => {}
                    Some(_) => {
                        rows.push(Err(()));
                        continue 'rows;
                    }
                }
            }
            row.labels = Some(RawLabels::Names(names));
        } else if let Some(s) = get(labels_col) {
            row.labels = Some(RawLabels::Names(
                s.split(fm.label_delimiter.as_str())
                    .map(|p| p.trim().to_string())
                    .filter(|p| !p.is_empty())
                    .collect(),
            ));
        }
        if let Some(m) = get(main_col).filter(|m| !m.trim().is_empty()) {
            row.main = Some(vec![m]);
        }
        rows.push(Ok(row));
    }
    Ok(rows)
}

/// Writes samples in the JSONL exchange format (label names, not indices).
pub fn write_jsonl(path: &Path, samples: &[Sample], schema: &LabelSchema) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), Value::String(s.id.clone()));
        obj.insert("text".into(), Value::String(s.text.clone()));
        obj.insert("lang".into(), Value::String(s.lang.clone()));
        if let Some(ml) = &s.multi_label {
            let names = ml
                .iter()
                .zip(&schema.multi_labels)
                .filter(|(&b, _)| b == 1)
                .map(|(_, n)| Value::String(n.clone()))
                .collect();
            obj.insert("labels".into(), Value::Array(names));
        }
        if let Some(m) = s.main_label {
            obj.insert("main_label".into(), Value::String(schema.main_labels[m].clone()));
        }
        serde_json::to_writer(&mut w, &Value::Object(obj))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(content: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn jsonl_main_label_by_name() {
        let f = write(r#"{"id":"1","text":"hi","main_label":"normal"}"#, ".jsonl");
        let (s, r) =
            load_dataset(f.path(), &LoadOptions::new(Format::Jsonl), &LabelSchema::default())
                .unwrap();
        assert_eq!(r.accepted, 1);
        assert_eq!(s[0].main_label, Some(2));
        assert_eq!(s[0].multi_label, None);
        assert_eq!(s[0].lang, "und");
    }

    #[test]
    fn jsonl_multi_label_names_follow_schema_order() {
        let f = write(r#"{"text":"x","labels":["gender","race"]}"#, ".jsonl");
        let (s, _) =
            load_dataset(f.path(), &LoadOptions::new(Format::Jsonl), &LabelSchema::default())
                .unwrap();
        // schema order: race, religion, gender
        assert_eq!(s[0].multi_label, Some(vec![1, 0, 1]));
        assert_eq!(s[0].id, "row-1");
    }

    #[test]
    fn jsonl_annotator_votes() {
        let f = write(
            r#"{"id":"a","text":"x","main_label":["hatespeech","normal","offensive","normal"]}"#,
            ".jsonl",
        );
        let (s, _) =
            load_dataset(f.path(), &LoadOptions::new(Format::Jsonl), &LabelSchema::default())
                .unwrap();
        assert_eq!(s[0].main_label, Some(2));
    }

    #[test]
    fn csv_empty_text_counted() {
        let f = write("id,text,main_label\n1,hello,normal\n2,   ,hate\n", ".csv");
        let (s, r) =
            load_dataset(f.path(), &LoadOptions::new(Format::Csv), &LabelSchema::default())
                .unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(r.total, 2);
        assert_eq!(r.rejected, 1);
        assert_eq!(r.reasons["empty text"], 1);
    }

    #[test]
    fn csv_binary_columns() {
        let f = write("comment_text,race,gender\nabc,1,0\ndef,0,1\n", ".csv");
        let mut opts = LoadOptions::new(Format::Csv);
        opts.field_map.text = "comment_text".into();
        opts.field_map.label_columns =
            [("race", "race"), ("gender", "gender")].map(|(a, b)| (a.into(), b.into())).into();
        let (s, _) = load_dataset(f.path(), &opts, &LabelSchema::default()).unwrap();
        assert_eq!(s[0].multi_label, Some(vec![1, 0, 0]));
        assert_eq!(s[1].multi_label, Some(vec![0, 0, 1]));
    }

    #[test]
    fn unparseable_rows_hit_budget() {
        let f = write("{\"text\":\"ok\"}\nnot json\n", ".jsonl");
        let err =
            load_dataset(f.path(), &LoadOptions::new(Format::Jsonl), &LabelSchema::default())
                .unwrap_err();
        assert!(matches!(err, Error::RejectBudget { unparseable: 1, .. }));

        let mut opts = LoadOptions::new(Format::Jsonl);
        opts.reject_budget = 0.5;
        let (_, r) = load_dataset(f.path(), &opts, &LabelSchema::default()).unwrap();
        assert_eq!(r.reasons["unparseable"], 1);
    }

    #[test]
    fn unknown_labels_and_duplicates_rejected() {
        let f = write(
            "{\"id\":\"1\",\"text\":\"a\",\"main_label\":\"spam\"}\n{\"id\":\"2\",\"text\":\"b\",\"labels\":[\"alien\"]}\n{\"id\":\"3\",\"text\":\"c\"}\n{\"id\":\"3\",\"text\":\"d\"}\n",
            ".jsonl",
        );
        let (s, r) =
            load_dataset(f.path(), &LoadOptions::new(Format::Jsonl), &LabelSchema::default())
                .unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(r.reasons["unknown main label"], 1);
        assert_eq!(r.reasons["unknown multi-label category"], 1);
        assert_eq!(r.reasons["duplicate id"], 1);
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_dataset(
            Path::new("/no/such/file.jsonl"),
            &LoadOptions::new(Format::Jsonl),
            &LabelSchema::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("/no/such/file.jsonl"));
    }

    #[test]
    fn write_then_load_preserves_samples() {
        let schema = LabelSchema::default();
        let samples = vec![Sample {
            id: "z".into(),
            text: "hello there".into(),
            lang: "en".into(),
            multi_label: Some(vec![0, 1, 1]),
            main_label: Some(1),
            provenance: Provenance::Gold,
        }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.jsonl");
        write_jsonl(&p, &samples, &schema).unwrap();
        let (back, _) = load_dataset(&p, &LoadOptions::new(Format::Jsonl), &schema).unwrap();
        assert_eq!(back, samples);
    }
}
