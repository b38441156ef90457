//! Dataset rows, score normalization, deterministic splits, count validation and
//! synthetic desk-scale data.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};
use core::fmt;
use core::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::textnorm::normalize_arabic;
use crate::{Error, Result};

/// The five on-disk dataset shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Schema {
    Pair,
    Triplet,
    PairClass,
    PairScore,
    Sts,
}

impl Schema {
    pub const ALL: [Schema; 5] = [
        Schema::Pair,
        Schema::Triplet,
        Schema::PairClass,
        Schema::PairScore,
        Schema::Sts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Schema::Pair => "pair",
            Schema::Triplet => "triplet",
            Schema::PairClass => "pair-class",
            Schema::PairScore => "pair-score",
            Schema::Sts => "sts",
        }
    }

    /// Required header columns, in canonical order.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Schema::Pair => &["anchor", "positive"],
            Schema::Triplet => &["anchor", "positive", "negative"],
            Schema::PairClass => &["premise", "hypothesis", "label"],
            Schema::PairScore | Schema::Sts => &["sentence1", "sentence2", "score"],
        }
    }

    /// Alternative spellings accepted in headers.
    pub fn aliases(self, column: &str) -> &'static [&'static str] {
        match (self, column) {
            (Schema::Sts, "score") => &["similarity score", "similarity_score"],
            _ => &[],
        }
    }

    /// Published split sizes (train, validation, test) with the tolerance
    /// implied by their rounding to "K" units.
    pub fn published_counts(self) -> SplitExpectation {
        let e = |count: usize| {
            let tolerance = match count {
                c if c >= 100_000 => 1000,
                c if c >= 10_000 => 100,
                _ => 50,
            };
            Some(ExpectedCount { count, tolerance })
        };
        let (train, validation, test) = match self {
            Schema::Pair => (314_000, 6_810, 6_830),
            Schema::Triplet => (558_000, 6_580, 6_610),
            Schema::PairClass | Schema::PairScore => (942_000, 19_700, 19_700),
            Schema::Sts => (5_750, 1_680, 1_380),
        };
        SplitExpectation {
            train: e(train),
            validation: e(validation),
            test: e(test),
        }
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Schema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Schema::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::config(format!("unknown schema {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRow {
    pub anchor: String,
    pub positive: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletRow {
    pub anchor: String,
    pub positive: String,
    pub negative: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NliLabel {
    Entailment = 0,
    Neutral = 1,
    Contradiction = 2,
}

impl NliLabel {
    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(NliLabel::Entailment),
            1 => Ok(NliLabel::Neutral),
            2 => Ok(NliLabel::Contradiction),
            _ => Err(Error::Range {
                value: f64::from(id),
                lo: 0.0,
                hi: 2.0,
            }),
        }
    }

    pub fn id(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairClassRow {
    pub premise: String,
    pub hypothesis: String,
    pub label: NliLabel,
}

/// A sentence pair with a gold similarity in `[0, 1]` (pair-score and STS rows).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub sentence1: String,
    pub sentence2: String,
    pub gold: f64,
}

fn non_empty(field: &'static str, s: &str) -> Result<()> {
    if normalize_arabic(s).is_empty() {
        Err(Error::config(format!(
            "{field} is empty after normalization"
        )))
    } else {
        Ok(())
    }
}

impl PairRow {
    pub fn validate(&self) -> Result<()> {
        non_empty("anchor", &self.anchor)?;
        non_empty("positive", &self.positive)
    }
}

impl TripletRow {
    pub fn validate(&self) -> Result<()> {
        non_empty("anchor", &self.anchor)?;
        non_empty("positive", &self.positive)?;
        non_empty("negative", &self.negative)?;
        if normalize_arabic(&self.positive) == normalize_arabic(&self.negative) {
            return Err(Error::config(
                "negative equals positive after normalization",
            ));
        }
        Ok(())
    }
}

impl ScoredPair {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gold) {
            return Err(Error::Range {
                value: self.gold,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(())
    }
}

/// Default gold-score source range.
pub const DEFAULT_SCORE_RANGE: (f64, f64) = (0.0, 5.0);

/// Maps `raw` from `[lo, hi]` onto `[0, 1]`.
pub fn normalize_score(raw: f64, (lo, hi): (f64, f64)) -> Result<f64> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::config("score range needs finite lo < hi"));
    }
    if !(lo..=hi).contains(&raw) {
        return Err(Error::Range { value: raw, lo, hi });
    }
    Ok(((raw - lo) / (hi - lo)).clamp(0.0, 1.0))
}

/// Rows of one dataset divided into train / validation / test.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
    /// Original row indices of each split, in split order.
    pub indices: [Vec<usize>; 3],
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub source: Option<String>,
    pub total_rows: usize,
    pub checksum: Option<String>,
}

impl<T> DatasetSplit<T> {
    pub fn counts(&self) -> SplitCounts {
        SplitCounts {
            train: self.train.len(),
            validation: self.validation.len(),
            test: self.test.len(),
        }
    }
}

/// Splits `rows` with a seeded permutation. Sizes use the largest-remainder
/// method so they always sum to `rows.len()`.
pub fn deterministic_split<T: Clone>(
    rows: &[T],
    fractions: [f64; 3],
    seed: u64,
) -> Result<DatasetSplit<T>> {
    if fractions.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
        return Err(Error::config("split fractions must be positive"));
    }
    let sum: f64 = fractions.iter().sum();
    if libm::fabs(sum - 1.0) > 1e-9 {
        return Err(Error::config(format!(
            "split fractions sum to {sum}, expected 1"
        )));
    }
    let n = rows.len();
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact
        .iter()
        .map(|x| libm::floor(*x + 1e-9) as usize)
        .collect();
    let mut assigned: usize = sizes.iter().sum();
    // Largest remainders first; ties go to the earlier split.
    let mut by_remainder: Vec<usize> = (0..3).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = exact[a] - sizes[a] as f64;
        let rb = exact[b] - sizes[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in by_remainder.iter().cycle() {
        if assigned >= n {
            break;
        }
        sizes[i] += 1;
        assigned += 1;
    }
    while assigned > n {
        let i = (0..3).rev().find(|&i| sizes[i] > 0).unwrap();
        sizes[i] -= 1;
        assigned -= 1;
    }

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train_idx, rest) = perm.split_at(sizes[0]);
    let (val_idx, test_idx) = rest.split_at(sizes[1]);
    let pick = |idx: &[usize]| idx.iter().map(|&i| rows[i].clone()).collect::<Vec<T>>();
    Ok(DatasetSplit {
        train: pick(train_idx),
        validation: pick(val_idx),
        test: pick(test_idx),
        indices: [train_idx.to_vec(), val_idx.to_vec(), test_idx.to_vec()],
        provenance: Provenance {
            total_rows: n,
            ..Provenance::default()
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpectedCount {
    pub count: usize,
    /// Allowed absolute deviation; 0 demands an exact match.
    pub tolerance: usize,
}

impl ExpectedCount {
    pub fn exact(count: usize) -> Self {
        Self {
            count,
            tolerance: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SplitExpectation {
    pub train: Option<ExpectedCount>,
    pub validation: Option<ExpectedCount>,
    pub test: Option<ExpectedCount>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitCheck {
    pub split: &'static str,
    pub actual: usize,
    pub expected: Option<ExpectedCount>,
    /// `None` when nothing was expected.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountReport {
    pub checks: Vec<SplitCheck>,
}

impl CountReport {
    /// False if any expected count was missed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass != Some(false))
    }

    pub fn failures(&self) -> impl Iterator<Item = &SplitCheck> {
        self.checks.iter().filter(|c| c.pass == Some(false))
    }
}

/// Compares actual split sizes against expectations. Report-only.
pub fn validate_counts(actual: SplitCounts, expected: &SplitExpectation) -> CountReport {
    let check = |split, actual: usize, expected: Option<ExpectedCount>| SplitCheck {
        split,
        actual,
        expected,
        pass: expected.map(|e| actual.abs_diff(e.count) <= e.tolerance),
    };
    CountReport {
        checks: vec![
            check("train", actual.train, expected.train),
            check("validation", actual.validation, expected.validation),
            check("test", actual.test, expected.test),
        ],
    }
}

// --- synthetic data -------------------------------------------------------

const LETTERS: &[char] = &[
    'ب', 'ت', 'ث', 'ج', 'ح', 'خ', 'د', 'ذ', 'ر', 'ز', 'س', 'ش', 'ص', 'ض', 'ط', 'ظ', 'ع', 'غ', 'ف',
    'ق', 'ك', 'ل', 'م', 'ن', 'ه', 'و', 'ي', 'ا',
];

const FUNCTION_WORDS: &[&str] = &[
    "في", "على", "من", "الى", "هذا", "ذلك", "مع", "عن", "بعد", "قبل",
];

/// Knobs for the templated cluster vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticVocab {
    /// Words that mark a cluster's topic.
    pub topic_words: usize,
    /// Larger per-cluster pool that varies sentences within a topic.
    pub detail_words: usize,
    /// Topic / detail / function words per sentence.
    pub sentence_topic: usize,
    pub sentence_detail: usize,
    pub sentence_function: usize,
}

impl Default for SyntheticVocab {
    fn default() -> Self {
        Self {
            topic_words: 12,
            detail_words: 60,
            sentence_topic: 3,
            sentence_detail: 4,
            sentence_function: 2,
        }
    }
}

/// Deterministic per-cluster vocabularies. Words are pseudo-Arabic letter
/// strings, unique across the whole generator.
#[derive(Debug, Clone)]
pub struct SyntheticLanguage {
    vocab: SyntheticVocab,
    topics: Vec<Vec<String>>,
    details: Vec<Vec<String>>,
}

impl SyntheticLanguage {
    pub fn new(n_clusters: usize, vocab: SyntheticVocab, seed: u64) -> Result<Self> {
        if n_clusters < 2 {
            return Err(Error::config("need at least two clusters"));
        }
        if vocab.sentence_topic > vocab.topic_words
            || vocab.sentence_detail > vocab.detail_words
            || vocab.sentence_topic + vocab.sentence_detail == 0
        {
            return Err(Error::config("sentence template larger than vocabulary"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen: BTreeSet<String> = FUNCTION_WORDS.iter().map(|w| String::from(*w)).collect();
        let mut fresh_words = |rng: &mut ChaCha8Rng, count: usize| -> Vec<String> {
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let len = rng.random_range(4..=7);
                let w: String = (0..len).map(|_| *LETTERS.choose(rng).unwrap()).collect();
                if seen.insert(w.clone()) {
                    out.push(w);
                }
            }
            out
        };
        let mut topics = Vec::with_capacity(n_clusters);
        let mut details = Vec::with_capacity(n_clusters);
        for _ in 0..n_clusters {
            topics.push(fresh_words(&mut rng, vocab.topic_words));
            details.push(fresh_words(&mut rng, vocab.detail_words));
        }
        Ok(Self {
            vocab,
            topics,
            details,
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.topics.len()
    }

    /// Content words (topic then detail) of a fresh sentence in `cluster`.
    pub fn content_words<R: Rng + ?Sized>(&self, cluster: usize, rng: &mut R) -> Vec<String> {
        let mut words: Vec<String> = self.topics[cluster]
            .choose_multiple(rng, self.vocab.sentence_topic)
            .cloned()
            .collect();
        words.extend(
            self.details[cluster]
                .choose_multiple(rng, self.vocab.sentence_detail)
                .cloned(),
        );
        words
    }

    /// Shuffles `content` together with random function words into a sentence.
    pub fn render<R: Rng + ?Sized>(&self, content: &[String], rng: &mut R) -> String {
        let mut words: Vec<&str> = content.iter().map(String::as_str).collect();
        for _ in 0..self.vocab.sentence_function {
            words.push(FUNCTION_WORDS.choose(rng).unwrap());
        }
        words.shuffle(rng);
        words.join(" ")
    }

    pub fn sentence<R: Rng + ?Sized>(&self, cluster: usize, rng: &mut R) -> String {
        let content = self.content_words(cluster, rng);
        self.render(&content, rng)
    }

    /// Keeps about half of `content` and refills the rest from the same cluster.
    pub fn paraphrase<R: Rng + ?Sized>(
        &self,
        cluster: usize,
        content: &[String],
        rng: &mut R,
    ) -> Vec<String> {
        let keep = content.len().div_ceil(2);
        let mut out: Vec<String> = content.choose_multiple(rng, keep).cloned().collect();
        let pool: Vec<&String> = self.topics[cluster]
            .iter()
            .chain(&self.details[cluster])
            .filter(|w| !out.contains(w))
            .collect();
        out.extend(
            pool.choose_multiple(rng, content.len() - keep)
                .map(|w| (*w).clone()),
        );
        out
    }

    /// Replaces `replace` randomly chosen content words with words from cluster `other`.
    pub fn perturb<R: Rng + ?Sized>(
        &self,
        content: &[String],
        replace: usize,
        other: usize,
        rng: &mut R,
    ) -> Vec<String> {
        let mut out = content.to_vec();
        let mut slots: Vec<usize> = (0..out.len()).collect();
        slots.shuffle(rng);
        let pool: Vec<&String> = self.topics[other]
            .iter()
            .chain(&self.details[other])
            .collect();
        for &slot in slots.iter().take(replace) {
            out[slot] = (*pool.choose(rng).unwrap()).clone();
        }
        out
    }

    pub fn content_len(&self) -> usize {
        self.vocab.sentence_topic + self.vocab.sentence_detail
    }
}

fn other_cluster<R: Rng + ?Sized>(cluster: usize, n_clusters: usize, rng: &mut R) -> usize {
    let shift = rng.random_range(1..n_clusters);
    (cluster + shift) % n_clusters
}

/// `n_clusters × per_cluster` triplets: anchor and positive (a paraphrase of
/// the anchor) from one cluster, negative from a different cluster. Rows are
/// grouped by cluster.
pub fn make_synthetic_triplets(
    n_clusters: usize,
    per_cluster: usize,
    seed: u64,
) -> Result<Vec<TripletRow>> {
    let lang = SyntheticLanguage::new(n_clusters, SyntheticVocab::default(), seed)?;
    synthetic_triplets_from(&lang, per_cluster, seed.wrapping_add(1))
}

/// Triplets drawn from an existing vocabulary; different `seed`s give disjoint
/// sentence draws over the same language (e.g. a held-out set).
pub fn synthetic_triplets_from(
    lang: &SyntheticLanguage,
    per_cluster: usize,
    seed: u64,
) -> Result<Vec<TripletRow>> {
    if per_cluster < 2 {
        return Err(Error::config("need at least two triplets per cluster"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(lang.n_clusters() * per_cluster);
    for cluster in 0..lang.n_clusters() {
        for _ in 0..per_cluster {
            let content = lang.content_words(cluster, &mut rng);
            let anchor = lang.render(&content, &mut rng);
            let para = lang.paraphrase(cluster, &content, &mut rng);
            let positive = lang.render(&para, &mut rng);
            let neg_cluster = other_cluster(cluster, lang.n_clusters(), &mut rng);
            let negative = lang.sentence(neg_cluster, &mut rng);
            rows.push(TripletRow {
                anchor,
                positive,
                negative,
            });
        }
    }
    Ok(rows)
}

/// Graded pairs: sentence 2 keeps `k` of sentence 1's content words and
/// replaces the rest with words from another cluster; gold = `k / content_len`.
pub fn synthetic_scored_pairs(
    lang: &SyntheticLanguage,
    n_pairs: usize,
    seed: u64,
) -> Vec<ScoredPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = lang.content_len();
    (0..n_pairs)
        .map(|i| {
            let cluster = rng.random_range(0..lang.n_clusters());
            let keep = i % (len + 1);
            let content = lang.content_words(cluster, &mut rng);
            let other = other_cluster(cluster, lang.n_clusters(), &mut rng);
            let mixed = lang.perturb(&content, len - keep, other, &mut rng);
            ScoredPair {
                sentence1: lang.render(&content, &mut rng),
                sentence2: lang.render(&mixed, &mut rng),
                gold: keep as f64 / len as f64,
            }
        })
        .collect()
}

/// Synthetic retrieval corpus: `n_docs` sentences spread over the clusters, and
/// `n_queries` queries that are light rewrites (one content word swapped within
/// the cluster) of random documents.
pub fn synthetic_corpus(
    lang: &SyntheticLanguage,
    n_docs: usize,
    n_queries: usize,
    seed: u64,
) -> (Vec<(String, String)>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut contents = Vec::with_capacity(n_docs);
    let docs = (0..n_docs)
        .map(|i| {
            let cluster = i % lang.n_clusters();
            let content = lang.content_words(cluster, &mut rng);
            let text = lang.render(&content, &mut rng);
            contents.push((cluster, content));
            (format!("doc-{i:06}"), text)
        })
        .collect();
    let queries = (0..n_queries)
        .map(|_| {
            let (cluster, content) = &contents[rng.random_range(0..contents.len())];
            let rewritten = lang.perturb(content, 1, *cluster, &mut rng);
            lang.render(&rewritten, &mut rng)
        })
        .collect();
    (docs, queries)
}
