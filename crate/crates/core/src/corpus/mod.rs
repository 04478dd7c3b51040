//! Text cleaning, n-gram tokenization, sparse document-token counts and
//! frequency lift.

pub mod porter;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MnirError, Result};

const ENGLISH_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

/// Joiner between n-gram components.
pub const NGRAM_JOINER: &str = ".";

/// Tokenizer and pruning settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub stopwords: BTreeSet<String>,
    pub stem: bool,
    pub ngram_min: usize,
    pub ngram_max: usize,
    /// A token is kept only if at least this many documents use it.
    pub min_doc_count: usize,
    /// Whether n-grams may run across sentence punctuation (`.`, `!`, `?`).
    pub span_sentences: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            stopwords: english_stopwords(),
            stem: true,
            ngram_min: 1,
            ngram_max: 1,
            min_doc_count: 1,
            span_sentences: true,
        }
    }
}

impl TokenizerConfig {
    /// Unigrams, no stop words, no stemming.
    pub fn plain() -> Self {
        TokenizerConfig {
            stopwords: BTreeSet::new(),
            stem: false,
            ..Default::default()
        }
    }

    pub fn with_ngrams(mut self, min: usize, max: usize) -> Self {
        self.ngram_min = min;
        self.ngram_max = max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.ngram_min < 1 || self.ngram_min > self.ngram_max {
            return Err(MnirError::InvalidConfig(format!(
                "n-gram range [{}, {}] must satisfy 1 <= min <= max",
                self.ngram_min, self.ngram_max
            )));
        }
        if self.min_doc_count < 1 {
            return Err(MnirError::InvalidConfig(
                "min_doc_count must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// The bundled English stop-word list.
pub fn english_stopwords() -> BTreeSet<String> {
    ENGLISH_STOPWORDS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn is_sentence_end(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Lowercase and split into words, keeping apostrophes only between two
/// alphanumeric characters. Returns one word list per segment.
fn clean_segments(text: &str, span_sentences: bool) -> Vec<Vec<String>> {
    let lower: Vec<char> = text.to_lowercase().chars().collect();
    let mut segments = vec![Vec::new()];
    let mut word = String::new();
    for (i, &c) in lower.iter().enumerate() {
        if c.is_alphanumeric() {
            word.push(c);
            continue;
        }
        let intra_apostrophe = is_apostrophe(c)
            && i > 0
            && lower[i - 1].is_alphanumeric()
            && lower.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if intra_apostrophe {
            word.push('\'');
            continue;
        }
        if !word.is_empty() {
            segments.last_mut().unwrap().push(std::mem::take(&mut word));
        }
        if !span_sentences && is_sentence_end(c) && !segments.last().unwrap().is_empty() {
            segments.push(Vec::new());
        }
    }
    if !word.is_empty() {
        segments.last_mut().unwrap().push(word);
    }
    segments.retain(|s| !s.is_empty());
    segments
}

/// Clean `text` and emit its n-gram tokens in document order.
///
/// For each start position every n in `[ngram_min, ngram_max]` is emitted
/// before moving to the next position.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    let mut out = Vec::new();
    for segment in clean_segments(text, config.span_sentences) {
        let words: Vec<String> = segment
            .into_iter()
            .filter(|w| !config.stopwords.contains(w))
            .map(|w| if config.stem { porter::stem(&w) } else { w })
            .collect();
        for start in 0..words.len() {
            for n in config.ngram_min..=config.ngram_max {
                if start + n > words.len() {
                    break;
                }
                out.push(words[start..start + n].join(NGRAM_JOINER));
            }
        }
    }
    out
}

/// Ordered list of distinct tokens; position is the column id.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        Vocabulary::new(tokens).map_err(serde::de::Error::custom)
    }
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(MnirError::VocabularyMismatch(format!(
                    "duplicate token `{t}`"
                )));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Document-by-token counts in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCounts {
    n: usize,
    p: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<u32>,
    row_totals: Vec<u64>,
}

impl SparseCounts {
    /// Build from `(doc, token, count)` triplets. Duplicates are summed and
    /// zero counts dropped.
    pub fn from_triplets(
        n: usize,
        p: usize,
        triplets: impl IntoIterator<Item = (usize, usize, u32)>,
    ) -> Result<Self> {
        let mut rows: Vec<BTreeMap<usize, u32>> = vec![BTreeMap::new(); n];
        for (i, j, c) in triplets {
            if i >= n || j >= p {
                return Err(MnirError::DimensionMismatch(format!(
                    "entry ({i}, {j}) outside {n} x {p}"
                )));
            }
            if c > 0 {
                *rows[i].entry(j).or_insert(0) += c;
            }
        }
        Ok(Self::from_rows(p, rows.into_iter().map(|r| r.into_iter().collect())))
    }

    /// Build from per-row `(token, count)` lists sorted by token with positive counts.
    pub(crate) fn from_rows(p: usize, rows: impl IntoIterator<Item = Vec<(usize, u32)>>) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut values = Vec::new();
        let mut row_totals = Vec::new();
        for row in rows {
            let mut total = 0u64;
            for (j, c) in row {
                debug_assert!(c > 0 && j < p);
                cols.push(j);
                values.push(c);
                total += c as u64;
            }
            row_totals.push(total);
            row_ptr.push(cols.len());
        }
        SparseCounts {
            n: row_totals.len(),
            p,
            row_ptr,
            cols,
            values,
            row_totals,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.n
    }

    pub fn n_tokens(&self) -> usize {
        self.p
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// `(token, count)` pairs of document `i`, sorted by token.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// x_ij
    pub fn get(&self, i: usize, j: usize) -> u32 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0,
        }
    }

    /// m_i, the total token count of document `i`.
    pub fn row_total(&self, i: usize) -> u64 {
        self.row_totals[i]
    }

    pub fn row_totals(&self) -> &[u64] {
        &self.row_totals
    }

    /// All `(doc, token, count)` entries in row order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, c)| (i, j, c)))
    }

    /// Keep the listed documents, in the given order.
    pub fn select_rows(&self, docs: &[usize]) -> SparseCounts {
        Self::from_rows(self.p, docs.iter().map(|&i| self.row(i).collect()))
    }

    /// Number of documents using each token.
    pub fn doc_frequency(&self) -> Vec<usize> {
        let mut df = vec![0; self.p];
        for &j in &self.cols {
            df[j] += 1;
        }
        df
    }

    /// Dense n x p frequencies f_ij = x_ij / m_i, row-major.
    pub fn frequencies_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| {
                let mut row = vec![0.0; self.p];
                let m = self.row_totals[i] as f64;
                if m > 0.0 {
                    for (j, c) in self.row(i) {
                        row[j] = c as f64 / m;
                    }
                }
                row
            })
            .collect()
    }
}

/// Counts together with their vocabulary and document identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub counts: SparseCounts,
    pub vocab: Vocabulary,
    pub doc_ids: Vec<String>,
}

impl Corpus {
    /// Re-express the counts over `target`, dropping tokens it does not
    /// contain. Row totals are recomputed over the surviving tokens.
    pub fn project_onto(&self, target: &Vocabulary) -> Corpus {
        let rows = (0..self.counts.n_docs()).map(|i| {
            let mut row: Vec<(usize, u32)> = self
                .counts
                .row(i)
                .filter_map(|(j, c)| target.id(self.vocab.token(j)).map(|t| (t, c)))
                .collect();
            row.sort_unstable_by_key(|e| e.0);
            row
        });
        Corpus {
            counts: SparseCounts::from_rows(target.len(), rows),
            vocab: target.clone(),
            doc_ids: self.doc_ids.clone(),
        }
    }
}

/// Output of [`count`].
#[derive(Debug, Clone)]
pub struct CountOutput {
    pub counts: SparseCounts,
    pub vocab: Vocabulary,
    /// For each surviving row, the index of the input document it came from.
    pub doc_map: Vec<usize>,
}

/// Tally token lists into a pruned sparse count matrix.
///
/// Tokens used by fewer than `min_doc_count` documents are dropped, then
/// documents left with no tokens. The vocabulary is sorted.
pub fn count(docs: &[Vec<String>], config: &TokenizerConfig) -> Result<CountOutput> {
    config.validate()?;
    if docs.is_empty() {
        return Err(MnirError::NoDocuments);
    }
    let per_doc: Vec<BTreeMap<&str, u32>> = docs
        .par_iter()
        .map(|doc| {
            let mut m = BTreeMap::new();
            for t in doc {
                *m.entry(t.as_str()).or_insert(0) += 1;
            }
            m
        })
        .collect();

    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for m in &per_doc {
        for t in m.keys() {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let kept: Vec<String> = df
        .into_iter()
        .filter(|&(_, d)| d >= config.min_doc_count)
        .map(|(t, _)| t.to_string())
        .collect();
    if kept.is_empty() {
        return Err(MnirError::EmptyVocabulary);
    }
    let vocab = Vocabulary::new(kept)?;

    let mut doc_map = Vec::new();
    let mut rows = Vec::new();
    for (d, m) in per_doc.iter().enumerate() {
        let row: Vec<(usize, u32)> = m
            .iter()
            .filter_map(|(t, &c)| vocab.id(t).map(|j| (j, c)))
            .collect();
        if !row.is_empty() {
            doc_map.push(d);
            rows.push(row);
        }
    }
    Ok(CountOutput {
        counts: SparseCounts::from_rows(vocab.len(), rows),
        vocab,
        doc_map,
    })
}

/// Per-token, per-group frequency lift `mean_G(f_j) / mean(f_j)`.
#[derive(Debug, Clone)]
pub struct LiftTable {
    pub group_names: Vec<String>,
    /// Token ids with nonzero corpus mean frequency.
    pub tokens: Vec<usize>,
    /// `lift[t][g]` for token `tokens[t]` in group `g`.
    pub lift: Vec<Vec<f64>>,
    /// `users[t][g]`: documents in group `g` that use token `tokens[t]`.
    pub users: Vec<Vec<usize>>,
}

impl LiftTable {
    /// Highest-lift tokens for `group` among tokens used at least once in each
    /// of `used_by`. Ties are broken by token id.
    pub fn top(&self, group: usize, n: usize, used_by: &[usize]) -> Vec<(usize, f64)> {
        let mut rows: Vec<(usize, f64)> = (0..self.tokens.len())
            .filter(|&t| used_by.iter().all(|&g| self.users[t][g] > 0))
            .map(|t| (self.tokens[t], self.lift[t][group]))
            .collect();
        rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        rows.truncate(n);
        rows
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.group_names.iter().position(|g| g == name)
    }
}

/// Frequency lift of every token in every group.
///
/// `doc_groups[i]` indexes into `group_names`. The corpus mean is the
/// unweighted mean of per-document frequencies over all documents.
pub fn frequency_lift(
    counts: &SparseCounts,
    doc_groups: &[usize],
    group_names: &[String],
) -> Result<LiftTable> {
    let n = counts.n_docs();
    if doc_groups.len() != n {
        return Err(MnirError::DimensionMismatch(format!(
            "{} group labels for {n} documents",
            doc_groups.len()
        )));
    }
    let g_count = group_names.len();
    let mut sizes = vec![0usize; g_count];
    for &g in doc_groups {
        if g >= g_count {
            return Err(MnirError::DimensionMismatch(format!(
                "group index {g} but only {g_count} groups"
            )));
        }
        sizes[g] += 1;
    }
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(MnirError::EmptyGroup(group_names[g].clone()));
    }

    let p = counts.n_tokens();
    let mut total = vec![0.0; p];
    let mut by_group = vec![vec![0.0; g_count]; p];
    let mut users = vec![vec![0usize; g_count]; p];
    for (i, &g) in doc_groups.iter().enumerate() {
        let m = counts.row_total(i) as f64;
        if m == 0.0 {
            continue;
        }
        for (j, c) in counts.row(i) {
            let f = c as f64 / m;
            total[j] += f;
            by_group[j][g] += f;
            users[j][g] += 1;
        }
    }

    let mut table = LiftTable {
        group_names: group_names.to_vec(),
        tokens: Vec::new(),
        lift: Vec::new(),
        users: Vec::new(),
    };
    for j in 0..p {
        if total[j] == 0.0 {
            continue;
        }
        let mean = total[j] / n as f64;
        table.tokens.push(j);
        table.lift.push(
            (0..g_count)
                .map(|g| by_group[j][g] / sizes[g] as f64 / mean)
                .collect(),
        );
        table.users.push(std::mem::take(&mut users[j]));
    }
    Ok(table)
}
