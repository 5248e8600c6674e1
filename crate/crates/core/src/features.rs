//! Handcrafted lexical features fused with the encoder output.
//!
//! Layout: `[emoji_freq, punct_freq, norm_len, group_0, .., group_{G-1}]`.

use std::collections::BTreeMap;
use std::path::Path;

use icu_normalizer::ComposingNormalizerBorrowed;
use icu_properties::props::{Emoji, GeneralCategory, GeneralCategoryGroup};
use icu_properties::{CodePointMapData, CodePointSetData};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LEN_CAP: usize = 280;
/// Number of non-lexicon features ahead of the group indicators.
pub const BASE_FEATURES: usize = 3;

/// Named groups of sensitive terms, one binary indicator per group.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SensitiveLexicon {
    groups: BTreeMap<String, Vec<String>>,
}

impl SensitiveLexicon {
    pub fn new(groups: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let nfc = ComposingNormalizerBorrowed::new_nfc();
        let mut clean = BTreeMap::new();
        for (name, terms) in groups {
            if terms.iter().any(|t| t.trim().is_empty()) {
                return Err(Error::Config(format!("lexicon group `{name}` has an empty term")));
            }
            let terms = terms.iter().map(|t| nfc.normalize(t).to_lowercase()).collect();
            clean.insert(name, terms);
        }
        Ok(Self { groups: clean })
    }

    /// Tiny placeholder shipped for smoke runs; real deployments load their own.
    pub fn placeholder() -> Self {
        let groups = [
            ("insult", vec!["idiot", "stupid", "loser", "笨蛋", "白痴"]),
            ("threat", vec!["kill you", "hurt you", "杀了你"]),
        ]
        .into_iter()
        .map(|(g, t)| (g.to_string(), t.into_iter().map(String::from).collect()))
        .collect();
        Self::new(groups).expect("placeholder lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let groups: BTreeMap<String, Vec<String>> = serde_json::from_str(&json)?;
        Self::new(groups)
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_names(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }
}

/// Width of the feature vector for a lexicon with `groups` groups.
pub fn feature_width(groups: usize) -> usize {
    BASE_FEATURES + groups
}

fn is_emoji(ch: char) -> bool {
    // The Emoji property also covers ASCII digits, '#' and '*'.
    !ch.is_ascii() && CodePointSetData::new::<Emoji>().contains(ch)
}

pub(crate) fn is_punctuation(ch: char) -> bool {
    GeneralCategoryGroup::Punctuation.contains(CodePointMapData::<GeneralCategory>::new().get(ch))
}

/// Extracts the feature vector of already-cleaned `text`.
pub fn extract(text: &str, lexicon: &SensitiveLexicon, len_cap: usize) -> Vec<f64> {
    let mut out = vec![0.0; feature_width(lexicon.num_groups())];
    let total = text.chars().count();
    if total == 0 {
        return out;
    }
    let emoji = text.chars().filter(|&c| is_emoji(c)).count();
    let punct = text.chars().filter(|&c| is_punctuation(c)).count();
    out[0] = emoji as f64 / total as f64;
    out[1] = punct as f64 / total as f64;
    out[2] = total.min(len_cap) as f64 / len_cap.max(1) as f64;

    let folded = ComposingNormalizerBorrowed::new_nfc().normalize(text).to_lowercase();
    for (slot, terms) in out[BASE_FEATURES..].iter_mut().zip(lexicon.groups.values()) {
        if terms.iter().any(|t| folded.contains(t.as_str())) {
            *slot = 1.0;
        }
    }
    out
}
