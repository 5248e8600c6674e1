//! Byte-level BPE tokenizer.
//!
//! Id layout: the four specials first (`[PAD]` = 0), then the 256 base
//! bytes, then one id per learned merge in merge order. Text is split into
//! chunks at whitespace boundaries (the whitespace run sticks to the word
//! after it) and merges never cross chunks. Every byte has an id, so any
//! input is encodable without `[UNK]`.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VOCAB_FORMAT_VERSION: u32 = 1;
const NUM_SPECIALS: u32 = 4;
const BYTE_BASE: u32 = NUM_SPECIALS;
/// Smallest usable vocabulary: specials plus all bytes.
pub const BYTE_FLOOR: usize = NUM_SPECIALS as usize + 256;
const MIN_PAIR_FREQUENCY: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Specials {
    pub pad: u32,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
}

impl Default for Specials {
    fn default() -> Self {
        Self {
            pad: 0,
            unk: 1,
            cls: 2,
            sep: 3,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    specials: Specials,
    tokens: Vec<String>,
    merges: Vec<(u32, u32)>,
}

/// Trained subword inventory. Immutable after training.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    specials: Specials,
    tokens: Vec<String>,
    merges: Vec<(u32, u32)>,
    token_bytes: Vec<Vec<u8>>,
    merge_rank: HashMap<(u32, u32), u32>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.specials == other.specials && self.tokens == other.tokens && self.merges == other.merges
    }
}

/// Padded, masked id sequence: `[CLS] subwords [SEP] [PAD]...`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub true_length: usize,
}

impl TokenSequence {
    pub fn n_max(&self) -> usize {
        self.ids.len()
    }
}

/// GPT-2 style printable stand-in for each byte, so token strings stay
/// valid UTF-8 in the JSON file.
fn byte_to_char_table() -> [char; 256] {
    let printable: Vec<u32> = (b'!' as u32..=b'~' as u32)
        .chain(0xA1..=0xAC)
        .chain(0xAE..=0xFF)
        .collect();
    let mut table = ['\0'; 256];
    let mut extra = 0u32;
    for b in 0..256u32 {
        let cp = if printable.contains(&b) {
            b
        } else {
            extra += 1;
            256 + extra - 1
        };
        table[b as usize] = char::from_u32(cp).expect("valid codepoint");
    }
    table
}

/// Splits text so that each whitespace run starts a new chunk.
fn chunks(text: &str) -> impl Iterator<Item = &str> {
    let mut start = 0;
    let mut prev_ws = true;
    let mut bounds = Vec::new();
    for (i, ch) in text.char_indices() {
        let ws = ch.is_whitespace();
        if ws && !prev_ws && i > start {
            bounds.push((start, i));
            start = i;
        }
        prev_ws = ws;
    }
    if start < text.len() {
        bounds.push((start, text.len()));
    }
    bounds.into_iter().map(move |(a, b)| &text[a..b])
}

fn merge_pair(symbols: &[u32], pair: (u32, u32), new_id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && (symbols[i], symbols[i + 1]) == pair {
            out.push(new_id);
            i += 2;
        } else {
            out.push(symbols[i]);
            i += 1;
        }
    }
    out
}

impl Vocabulary {
    /// Learns merges until `target_size` ids exist or no pair repeats.
    /// Ties between equally frequent pairs go to the smaller id pair, so the
    /// result depends only on the corpus contents and order.
    pub fn train(corpus: &[impl AsRef<str>], target_size: usize) -> Result<Self> {
        if target_size <= BYTE_FLOOR {
            return Err(Error::VocabTooSmall {
                target: target_size,
                floor: BYTE_FLOOR + 1,
            });
        }
        if corpus.is_empty() {
            return Err(Error::EmptyDataset("tokenizer corpus".into()));
        }

        let mut word_freq: BTreeMap<&[u8], i64> = BTreeMap::new();
        for text in corpus {
            for chunk in chunks(text.as_ref()) {
                *word_freq.entry(chunk.as_bytes()).or_default() += 1;
            }
        }
        let mut words: Vec<Vec<u32>> = Vec::with_capacity(word_freq.len());
        let mut freqs: Vec<i64> = Vec::with_capacity(word_freq.len());
        for (w, f) in word_freq {
            words.push(w.iter().map(|&b| BYTE_BASE + b as u32).collect());
            freqs.push(f);
        }

        let mut pair_count: HashMap<(u32, u32), i64> = HashMap::new();
        let mut where_: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
        for (wi, w) in words.iter().enumerate() {
            for p in w.windows(2) {
                let pair = (p[0], p[1]);
                *pair_count.entry(pair).or_default() += freqs[wi];
                where_.entry(pair).or_default().insert(wi);
            }
        }
        let mut heap: BinaryHeap<(i64, Reverse<(u32, u32)>)> =
            pair_count.iter().map(|(&p, &c)| (c, Reverse(p))).collect();

        let mut vocab = Self::base();
        while vocab.len() < target_size {
            let Some((count, Reverse(pair))) = heap.pop() else {
                break;
            };
            if pair_count.get(&pair).copied().unwrap_or(0) != count {
                continue; // stale heap entry
            }
            if count < MIN_PAIR_FREQUENCY {
                break;
            }
            let new_id = vocab.push_merge(pair);
            let mut affected: Vec<usize> = where_.remove(&pair).unwrap_or_default().into_iter().collect();
            affected.sort_unstable();
            let mut touched = HashSet::new();
            for wi in affected {
                let f = freqs[wi];
                let old = &words[wi];
                for p in old.windows(2) {
                    let e = pair_count.entry((p[0], p[1])).or_default();
                    *e -= f;
                    touched.insert((p[0], p[1]));
                }
                let merged = merge_pair(old, pair, new_id);
                for p in merged.windows(2) {
                    let key = (p[0], p[1]);
                    *pair_count.entry(key).or_default() += f;
                    where_.entry(key).or_default().insert(wi);
                    touched.insert(key);
                }
                words[wi] = merged;
            }
            pair_count.remove(&pair);
            let mut touched: Vec<_> = touched.into_iter().collect();
            touched.sort_unstable();
            for key in touched {
                match pair_count.get(&key).copied() {
                    Some(c) if c > 0 => heap.push((c, Reverse(key))),
                    Some(_) => {
                        pair_count.remove(&key);
                    }
                    None => {}
                }
            }
        }
        Ok(vocab)
    }

    fn base() -> Self {
        let table = byte_to_char_table();
        let mut tokens: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"].map(String::from).to_vec();
        let mut token_bytes: Vec<Vec<u8>> = vec![Vec::new(); NUM_SPECIALS as usize];
        for b in 0..=255u8 {
            tokens.push(table[b as usize].to_string());
            token_bytes.push(vec![b]);
        }
        Self {
            specials: Specials::default(),
            tokens,
            merges: Vec::new(),
            token_bytes,
            merge_rank: HashMap::new(),
        }
    }

    fn push_merge(&mut self, pair: (u32, u32)) -> u32 {
        let new_id = self.tokens.len() as u32;
        let text = format!("{}{}", self.tokens[pair.0 as usize], self.tokens[pair.1 as usize]);
        let mut bytes = self.token_bytes[pair.0 as usize].clone();
        bytes.extend_from_slice(&self.token_bytes[pair.1 as usize]);
        self.merge_rank.insert(pair, self.merges.len() as u32);
        self.merges.push(pair);
        self.tokens.push(text);
        self.token_bytes.push(bytes);
        new_id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn specials(&self) -> Specials {
        self.specials
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.tokens.iter().position(|t| t == token).map(|i| i as u32)
    }

    fn is_special(&self, id: u32) -> bool {
        id < NUM_SPECIALS
    }

    fn encode_chunk(&self, chunk: &str, out: &mut Vec<u32>) {
        let mut symbols: Vec<u32> = chunk.bytes().map(|b| BYTE_BASE + b as u32).collect();
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .filter_map(|p| self.merge_rank.get(&(p[0], p[1])).map(|&r| (r, (p[0], p[1]))))
                .min();
            let Some((rank, pair)) = best else { break };
            symbols = merge_pair(&symbols, pair, BYTE_BASE + 256 + rank);
        }
        out.extend(symbols);
    }

    /// Subword ids of `text`, without specials or truncation.
    pub fn encode_subwords(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for chunk in chunks(text) {
            self.encode_chunk(chunk, &mut out);
        }
        out
    }

    /// `[CLS] subwords [SEP]` truncated to `n_max` (content is cut, the
    /// specials stay) and padded with `[PAD]`.
    pub fn encode(&self, text: &str, n_max: usize) -> TokenSequence {
        assert!(n_max >= 3, "n_max must leave room for content, got {n_max}");
        let sub = self.encode_subwords(text);
        let keep = sub.len().min(n_max - 2);
        let mut ids = Vec::with_capacity(n_max);
        ids.push(self.specials.cls);
        ids.extend_from_slice(&sub[..keep]);
        ids.push(self.specials.sep);
        let true_length = ids.len();
        ids.resize(n_max, self.specials.pad);
        let attention_mask = (0..n_max).map(|i| u8::from(i < true_length)).collect();
        TokenSequence {
            ids,
            attention_mask,
            true_length,
        }
    }

    /// Inverse of `encode` up to truncation; specials are dropped.
    pub fn decode(&self, seq: &TokenSequence) -> Result<String> {
        self.decode_ids(&seq.ids)
    }

    pub fn decode_ids(&self, ids: &[u32]) -> Result<String> {
        let mut bytes = Vec::new();
        for &id in ids {
            let tok = self.token_bytes.get(id as usize).ok_or(Error::CorruptSequence {
                id,
                size: self.len(),
            })?;
            if !self.is_special(id) {
                bytes.extend_from_slice(tok);
            }
        }
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&VocabFile {
            version: VOCAB_FORMAT_VERSION,
            specials: self.specials,
            tokens: self.tokens.clone(),
            merges: self.merges.clone(),
        })?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(json)?;
        if file.version != VOCAB_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported vocabulary version {}",
                file.version
            )));
        }
        if file.specials != Specials::default() {
            return Err(Error::Config("unexpected special token ids".into()));
        }
        let mut vocab = Self::base();
        for (i, &(a, b)) in file.merges.iter().enumerate() {
            let limit = BYTE_FLOOR as u32 + i as u32;
            if a >= limit || b >= limit {
                return Err(Error::Config(format!(
                    "merge {i} refers to ids not yet defined ({a}, {b})"
                )));
            }
            vocab.push_merge((a, b));
        }
        if vocab.tokens != file.tokens {
            return Err(Error::Config("token list disagrees with merges".into()));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&json)
    }
}
