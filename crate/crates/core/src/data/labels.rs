use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LabelSchema;
use crate::error::{Error, Result};

/// Alias table and severity order used to collapse annotator votes into
/// one main label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingRules {
    /// Lowercased alias -> canonical main-label name.
    pub aliases: BTreeMap<String, String>,
    /// Canonical names, most severe first. Breaks vote ties.
    pub severity: Vec<String>,
}

impl Default for MappingRules {
    fn default() -> Self {
        let aliases = [
            ("hatespeech", "hate"),
            ("hate_speech", "hate"),
            ("hate speech", "hate"),
            ("hateful", "hate"),
            ("offense", "offensive"),
            ("abusive", "offensive"),
            ("neither", "normal"),
            ("none", "normal"),
        ]
        .into_iter()
        .map(|(a, c)| (a.to_string(), c.to_string()))
        .collect();
        Self {
            aliases,
            severity: ["hate", "offensive", "normal"].map(String::from).to_vec(),
        }
    }
}

impl MappingRules {
    /// Resolves one raw label string to a main-label index.
    pub fn resolve(&self, raw: &str, schema: &LabelSchema) -> Result<usize> {
        let key = raw.trim().to_lowercase();
        let canonical = self.aliases.get(&key).map(String::as_str).unwrap_or(&key);
        schema
            .main_index(canonical)
            .ok_or_else(|| Error::UnknownLabel(raw.to_string()))
    }

    fn severity_rank(&self, idx: usize, schema: &LabelSchema) -> usize {
        let name = &schema.main_labels[idx];
        self.severity
            .iter()
            .position(|s| s.eq_ignore_ascii_case(name))
            .unwrap_or(self.severity.len() + idx)
    }
}

/// Majority vote over annotator labels; ties go to the most severe label.
pub fn map_main_label(
    raw_annotations: &[impl AsRef<str>],
    rules: &MappingRules,
    schema: &LabelSchema,
) -> Result<usize> {
    if raw_annotations.is_empty() {
        return Err(Error::UnknownLabel(String::new()));
    }
    let mut votes = vec![0usize; schema.num_main()];
    for raw in raw_annotations {
        votes[rules.resolve(raw.as_ref(), schema)?] += 1;
    }
    let best = *votes.iter().max().expect("non-empty");
    let winner = (0..votes.len())
        .filter(|&i| votes[i] == best)
        .min_by_key(|&i| rules.severity_rank(i, schema))
        .expect("at least one winner");
    Ok(winner)
}
