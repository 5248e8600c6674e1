use icu_normalizer::ComposingNormalizerBorrowed;

/// Normalizes raw text for both streams of the model.
///
/// NFC, control characters dropped, whitespace runs collapsed to one space,
/// ends trimmed, full-width ASCII punctuation folded to half-width. Case is
/// kept. An empty return value means the sample must be dropped.
pub fn clean_text(raw: &str) -> String {
    let nfc = ComposingNormalizerBorrowed::new_nfc().normalize(raw);
    let mut out = String::with_capacity(nfc.len());
    let mut pending_space = false;
    for ch in nfc.chars() {
        if ch.is_whitespace() {
            pending_space = true;
            continue;
        }
        if ch.is_control() {
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        out.push(fold_fullwidth_punct(ch));
    }
    out
}

/// U+FF01..=U+FF5E sit at a fixed offset from ASCII 0x21..=0x7E; only the
/// punctuation part of that block is folded.
fn fold_fullwidth_punct(ch: char) -> char {
    let cp = ch as u32;
    if (0xFF01..=0xFF5E).contains(&cp) {
        let half = char::from_u32(cp - 0xFEE0).expect("ascii range");
        if half.is_ascii_punctuation() {
            return half;
        }
    }
    ch
}
