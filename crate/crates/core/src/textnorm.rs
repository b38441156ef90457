//! Arabic text normalization and hashed character n-gram featurization.
//!
//! Normalization removes tashkeel (U+064B..=U+0652) and tatweel (U+0640), folds
//! the hamza/madda alef forms (U+0622, U+0623, U+0625) to bare alef U+0627, folds
//! alef maqsura U+0649 to ya U+064A, applies canonical composition (NFC) and
//! collapses whitespace. Ta marbuta is left alone.
//!
//! Featurization wraps the normalized text in `^`/`$` boundary markers and hashes
//! every character n-gram with 64-bit FNV-1a into a power-of-two feature space.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use unicode_normalization::UnicodeNormalization;

use crate::{Error, Result};

const ALEF: char = '\u{0627}';
const YA: char = '\u{064A}';
const ALEF_MAQSURA: char = '\u{0649}';
const TATWEEL: char = '\u{0640}';

/// Default cap on the number of code points fed to the featurizer.
pub const DEFAULT_MAX_CHARS: usize = 512;

/// Text that has been through [`normalize_arabic`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct NormalizedText(String);

impl NormalizedText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Keeps at most `max_chars` code points.
    pub fn truncated(&self, max_chars: usize) -> NormalizedText {
        match self.0.char_indices().nth(max_chars) {
            // Cutting can leave trailing whitespace; re-trimming keeps the invariant.
            Some((cut, _)) => NormalizedText(String::from(self.0[..cut].trim_end())),
            None => self.clone(),
        }
    }
}

impl fmt::Display for NormalizedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for NormalizedText {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

fn is_diacritic(c: char) -> bool {
    ('\u{064B}'..='\u{0652}').contains(&c) || c == TATWEEL
}

fn fold_char(c: char) -> char {
    match c {
        '\u{0622}' | '\u{0623}' | '\u{0625}' => ALEF,
        ALEF_MAQSURA => YA,
        c => c,
    }
}

fn strip_and_fold(s: &str) -> String {
    s.chars()
        .filter(|&c| !is_diacritic(c))
        .map(fold_char)
        .collect()
}

fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

fn normalize_pass(s: &str) -> String {
    // Folding before composition stops NFC from re-creating hamza forms
    // (e.g. U+0649 U+0654 only composes once U+0649 has become U+064A).
    let folded = strip_and_fold(s);
    let composed: String = folded.nfc().collect();
    collapse_whitespace(&strip_and_fold(&composed))
}

/// Normalizes Arabic text. The result is a fixed point: normalizing it again
/// returns it unchanged.
pub fn normalize_arabic(raw: &str) -> NormalizedText {
    let mut current = normalize_pass(raw);
    // Stacked hamza marks can compose one layer per pass.
    loop {
        let next = normalize_pass(&current);
        if next == current {
            return NormalizedText(current);
        }
        current = next;
    }
}

/// Decodes UTF-8 bytes then normalizes them.
pub fn normalize_arabic_bytes(raw: &[u8]) -> Result<NormalizedText> {
    let text = core::str::from_utf8(raw).map_err(|e| Error::Decode {
        offset: e.valid_up_to(),
    })?;
    Ok(normalize_arabic(text))
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |hash, &b| (hash ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Sparse bag of hashed n-gram counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureVector {
    indices: Vec<u32>,
    counts: Vec<u32>,
    feature_space: u32,
}

impl FeatureVector {
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn feature_space(&self) -> u32 {
        self.feature_space
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Sum of all counts, i.e. the number of n-grams extracted.
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.counts.iter().copied())
    }

    /// Multiset intersection size: sum over shared indices of the smaller count.
    pub fn overlap(&self, other: &FeatureVector) -> u64 {
        let (mut i, mut j, mut total) = (0, 0, 0u64);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    total += u64::from(self.counts[i].min(other.counts[j]));
                    i += 1;
                    j += 1;
                }
            }
        }
        total
    }
}

/// Featurizer settings. The feature space size is `1 << feature_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeaturizerConfig {
    pub n_min: u8,
    pub n_max: u8,
    pub feature_bits: u8,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            n_min: 2,
            n_max: 4,
            feature_bits: 15,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_min == 0 {
            return Err(Error::config("n_min must be at least 1"));
        }
        if self.n_min > self.n_max {
            return Err(Error::config("n_min must not exceed n_max"));
        }
        if self.feature_bits == 0 || self.feature_bits > 31 {
            return Err(Error::config("feature_bits must be in 1..=31"));
        }
        Ok(())
    }

    pub fn feature_space(&self) -> usize {
        1usize << self.feature_bits
    }

    /// Normalizes, caps at `max_chars` code points and hashes `raw`.
    pub fn featurize(&self, raw: &str, max_chars: usize) -> Result<FeatureVector> {
        let text = normalize_arabic(raw).truncated(max_chars);
        hash_ngrams(
            &text,
            usize::from(self.n_min),
            usize::from(self.n_max),
            self.feature_space(),
        )
    }
}

/// Hashes every character n-gram (`n_min..=n_max`) of `^text$` into
/// `feature_space` buckets. Empty text yields an empty vector.
pub fn hash_ngrams(
    text: &NormalizedText,
    n_min: usize,
    n_max: usize,
    feature_space: usize,
) -> Result<FeatureVector> {
    if feature_space == 0 || !feature_space.is_power_of_two() || feature_space > 1 << 31 {
        return Err(Error::config(
            "feature space must be a power of two in 1..=2^31",
        ));
    }
    if n_min == 0 || n_min > n_max {
        return Err(Error::config(
            "n-gram range must satisfy 1 <= n_min <= n_max",
        ));
    }
    let mut fv = FeatureVector {
        feature_space: feature_space as u32,
        ..FeatureVector::default()
    };
    if text.is_empty() {
        return Ok(fv);
    }

    let mut marked = String::with_capacity(text.0.len() + 2);
    marked.push('^');
    marked.push_str(&text.0);
    marked.push('$');
    // Byte offsets of each code point, plus the end.
    let mut bounds: Vec<usize> = marked.char_indices().map(|(i, _)| i).collect();
    bounds.push(marked.len());
    let n_chars = bounds.len() - 1;

    let mask = (feature_space as u64) - 1;
    let mut hits: Vec<u32> = Vec::new();
    for n in n_min..=n_max.min(n_chars) {
        for start in 0..=(n_chars - n) {
            let gram = &marked.as_bytes()[bounds[start]..bounds[start + n]];
            hits.push((fnv1a64(gram) & mask) as u32);
        }
    }
    hits.sort_unstable();
    for idx in hits {
        match fv.indices.last() {
            Some(&last) if last == idx => *fv.counts.last_mut().unwrap() += 1,
            _ => {
                fv.indices.push(idx);
                fv.counts.push(1);
            }
        }
    }
    Ok(fv)
}
