//! Lexical-diversity measurements over user utterances.
//!
//! All metrics run on a [`TokenStream`]: the normalized tokens of a list of
//! utterances plus the positions where each utterance starts. N-gram counts
//! and conditional bigram entropy never cross utterance boundaries; MSTTR,
//! MTLD and HD-D treat the stream as one pooled text.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::LexError;
use crate::model::normalize_text;

pub const DEFAULT_SEGMENT: usize = 50;
pub const DEFAULT_MTLD_THRESHOLD: f64 = 0.72;
pub const DEFAULT_HDD_SAMPLE: usize = 42;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenStream {
    tokens: Vec<String>,
    /// Start offsets of every utterance after the first.
    boundaries: Vec<usize>,
}

impl TokenStream {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn utterance_count(&self) -> usize {
        if self.tokens.is_empty() {
            0
        } else {
            self.boundaries.len() + 1
        }
    }

    pub fn utterances(&self) -> impl Iterator<Item = &[String]> {
        let starts = std::iter::once(0).chain(self.boundaries.iter().copied());
        let ends = self
            .boundaries
            .iter()
            .copied()
            .chain(std::iter::once(self.tokens.len()));
        starts
            .zip(ends)
            .filter(|(s, e)| s < e)
            .map(move |(s, e)| &self.tokens[s..e])
    }

    fn reversed_tokens(&self) -> Vec<&str> {
        self.tokens.iter().rev().map(String::as_str).collect()
    }
}

/// Normalizes and whitespace-splits each utterance; empty ones are dropped.
pub fn tokenize<S: AsRef<str>>(utterances: &[S]) -> TokenStream {
    let mut stream = TokenStream::default();
    for utt in utterances {
        let norm = normalize_text(utt.as_ref());
        if norm.is_empty() {
            continue;
        }
        if !stream.tokens.is_empty() {
            stream.boundaries.push(stream.tokens.len());
        }
        stream.tokens.extend(norm.split(' ').map(str::to_string));
    }
    stream
}

/// (number of utterances, mean tokens per utterance)
pub fn utterance_stats(stream: &TokenStream) -> Result<(usize, f64), LexError> {
    let n = stream.utterance_count();
    if n == 0 {
        return Err(LexError::EmptyStream);
    }
    Ok((n, stream.len() as f64 / n as f64))
}

pub fn unique_ngrams(stream: &TokenStream, n: usize) -> Result<usize, LexError> {
    if n == 0 {
        return Err(LexError::InvalidOrder);
    }
    if stream.is_empty() {
        return Err(LexError::EmptyStream);
    }
    let mut seen: HashSet<&[String]> = HashSet::new();
    for utt in stream.utterances() {
        if utt.len() >= n {
            seen.extend(utt.windows(n));
        }
    }
    Ok(seen.len())
}

fn entropy_of_counts<'a>(counts: impl Iterator<Item = &'a usize>, total: usize) -> f64 {
    let total = total as f64;
    let h: f64 = counts
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    // -0.0 shows up for single-type streams
    h.max(0.0)
}

/// Unigram Shannon entropy in bits.
pub fn shannon_entropy(stream: &TokenStream) -> Result<f64, LexError> {
    if stream.is_empty() {
        return Err(LexError::EmptyStream);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &stream.tokens {
        *counts.entry(t).or_default() += 1;
    }
    Ok(entropy_of_counts(counts.values(), stream.len()))
}

/// H(w2 | w1) over within-utterance bigrams, in bits.
pub fn conditional_bigram_entropy(stream: &TokenStream) -> Result<f64, LexError> {
    let mut joint: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut first: BTreeMap<&str, usize> = BTreeMap::new();
    let mut total = 0usize;
    for utt in stream.utterances() {
        for pair in utt.windows(2) {
            *joint.entry((&pair[0], &pair[1])).or_default() += 1;
            *first.entry(&pair[0]).or_default() += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(LexError::NoBigrams);
    }
    let total = total as f64;
    let h: f64 = joint
        .iter()
        .map(|((w1, _), &c)| {
            let p_joint = c as f64 / total;
            let p_cond = c as f64 / first[w1] as f64;
            -p_joint * p_cond.log2()
        })
        .sum();
    Ok(h.max(0.0))
}

fn ttr(tokens: &[String]) -> f64 {
    let types: HashSet<&String> = tokens.iter().collect();
    types.len() as f64 / tokens.len() as f64
}

/// Mean type-token ratio over consecutive non-overlapping windows of
/// `segment` tokens; a trailing partial window is discarded.
pub fn msttr(stream: &TokenStream, segment: usize) -> Result<f64, LexError> {
    if segment == 0 || stream.len() < segment {
        return Err(LexError::TooShort {
            tokens: stream.len(),
            required: segment.max(1),
        });
    }
    let windows: Vec<f64> = stream.tokens.chunks_exact(segment).map(ttr).collect();
    Ok(windows.iter().sum::<f64>() / windows.len() as f64)
}

fn mtld_pass<'a>(tokens: impl Iterator<Item = &'a str>, threshold: f64) -> Result<f64, LexError> {
    let mut factors = 0.0;
    let mut count = 0usize;
    let mut total = 0usize;
    let mut types: HashSet<&str> = HashSet::new();
    let mut current_ttr = 1.0;
    for tok in tokens {
        total += 1;
        count += 1;
        types.insert(tok);
        current_ttr = types.len() as f64 / count as f64;
        if current_ttr <= threshold {
            factors += 1.0;
            count = 0;
            types.clear();
            current_ttr = 1.0;
        }
    }
    if count > 0 {
        factors += (1.0 - current_ttr) / (1.0 - threshold);
    }
    if factors <= 0.0 {
        return Err(LexError::ZeroFactors);
    }
    Ok(total as f64 / factors)
}

/// MTLD: mean of a forward and a reversed factor-counting pass.
pub fn mtld(stream: &TokenStream, threshold: f64) -> Result<f64, LexError> {
    if stream.is_empty() {
        return Err(LexError::EmptyStream);
    }
    let forward = mtld_pass(stream.tokens.iter().map(String::as_str), threshold)?;
    let backward = mtld_pass(stream.reversed_tokens().into_iter(), threshold)?;
    Ok((forward + backward) / 2.0)
}

/// P(no occurrence of a type with `count` tokens in a draw of `sample`
/// tokens from `total`), i.e. C(total - count, sample) / C(total, sample).
fn hypergeometric_miss(total: usize, count: usize, sample: usize) -> f64 {
    if total - count < sample {
        return 0.0;
    }
    (0..sample)
        .map(|i| (total - count - i) as f64 / (total - i) as f64)
        .product()
}

/// HD-D: expected type-token ratio of a random `sample`-token draw.
pub fn hdd(stream: &TokenStream, sample: usize) -> Result<f64, LexError> {
    let n = stream.len();
    if sample == 0 || n < sample {
        return Err(LexError::TooShort {
            tokens: n,
            required: sample.max(1),
        });
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &stream.tokens {
        *counts.entry(t).or_default() += 1;
    }
    Ok(counts
        .values()
        .map(|&c| (1.0 - hypergeometric_miss(n, c, sample)) / sample as f64)
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LexParams {
    pub segment: usize,
    pub mtld_threshold: f64,
    pub hdd_sample: usize,
}

impl Default for LexParams {
    fn default() -> Self {
        LexParams {
            segment: DEFAULT_SEGMENT,
            mtld_threshold: DEFAULT_MTLD_THRESHOLD,
            hdd_sample: DEFAULT_HDD_SAMPLE,
        }
    }
}

/// One row of the lexical-diversity table. Metrics that cannot be computed
/// for the stream (too short, no bigrams) are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LexReport {
    pub n_utterances: f64,
    pub utterance_length: Option<f64>,
    pub unigrams: f64,
    pub bigrams: f64,
    pub trigrams: f64,
    pub shannon_entropy: Option<f64>,
    pub conditional_entropy: Option<f64>,
    pub msttr: Option<f64>,
    pub hdd: Option<f64>,
    pub mtld: Option<f64>,
}

impl LexReport {
    pub fn compute(stream: &TokenStream, params: &LexParams) -> LexReport {
        if stream.is_empty() {
            return LexReport::default();
        }
        let ngrams = |n| unique_ngrams(stream, n).unwrap_or(0) as f64;
        LexReport {
            n_utterances: stream.utterance_count() as f64,
            utterance_length: utterance_stats(stream).ok().map(|(_, m)| m),
            unigrams: ngrams(1),
            bigrams: ngrams(2),
            trigrams: ngrams(3),
            shannon_entropy: shannon_entropy(stream).ok(),
            conditional_entropy: conditional_bigram_entropy(stream).ok(),
            msttr: msttr(stream, params.segment).ok(),
            hdd: hdd(stream, params.hdd_sample).ok(),
            mtld: mtld(stream, params.mtld_threshold).ok(),
        }
    }

    pub fn from_utterances<S: AsRef<str>>(utterances: &[S], params: &LexParams) -> LexReport {
        LexReport::compute(&tokenize(utterances), params)
    }

    /// Metric-wise mean; optional metrics average over the rows that define
    /// them.
    pub fn mean(rows: &[LexReport]) -> Option<LexReport> {
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let mean_count = |f: fn(&LexReport) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let mean_opt = |f: fn(&LexReport) -> Option<f64>| {
            let vals: Vec<f64> = rows.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        Some(LexReport {
            n_utterances: mean_count(|r| r.n_utterances),
            utterance_length: mean_opt(|r| r.utterance_length),
            unigrams: mean_count(|r| r.unigrams),
            bigrams: mean_count(|r| r.bigrams),
            trigrams: mean_count(|r| r.trigrams),
            shannon_entropy: mean_opt(|r| r.shannon_entropy),
            conditional_entropy: mean_opt(|r| r.conditional_entropy),
            msttr: mean_opt(|r| r.msttr),
            hdd: mean_opt(|r| r.hdd),
            mtld: mean_opt(|r| r.mtld),
        })
    }
}
