//! Surface-form diversity baselines over tokenized corpora.
//!
//! Two cheap token-level statistics serve as comparison points for the
//! spectral tracks:
//!
//! * distinct-n: unique n-grams over total n-grams, corpus-wide, with
//!   n-grams taken inside documents only;
//! * n-gram Herfindahl–Hirschman concentration `HHI = Σ_j p_j²`, either
//!   exact over n-gram types or over hashed buckets for bounded memory.
//!
//! The hashed variant serializes an n-gram as its tokens joined by the unit
//! separator byte 0x1F, hashes with 64-bit FNV-1a, and keeps the low
//! `hash_bits` bits, so counts are deterministic across runs and platforms.
//! Collisions merge buckets and can only concentrate mass, so the hashed
//! HHI is never below the exact one.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;

#[derive(Debug, Clone, PartialEq)]
pub enum ProxyError {
    EmptyCorpus,
    /// A document with zero tokens cannot be counted.
    EmptyDocument { index: usize },
    BadOrder(usize),
    BadHashBits(u32),
    LengthMismatch { a: usize, b: usize },
    ZeroVariance,
    NonFinite,
    BadLine { line: usize, message: String },
}

impl fmt::Display for ProxyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProxyError::EmptyCorpus => write!(f, "corpus contributes no n-grams"),
            ProxyError::EmptyDocument { index } => write!(f, "document {index} has no tokens"),
            ProxyError::BadOrder(n) => write!(f, "n-gram order {n} must be at least 1"),
            ProxyError::BadHashBits(b) => write!(f, "hash bits {b} outside [8, 32]"),
            ProxyError::LengthMismatch { a, b } => {
                write!(f, "series lengths differ: {a} vs {b}")
            }
            ProxyError::ZeroVariance => write!(f, "correlation undefined for a constant series"),
            ProxyError::NonFinite => write!(f, "series contains a non-finite value"),
            ProxyError::BadLine { line, message } => write!(f, "line {line}: {message}"),
        }
    }
}

impl std::error::Error for ProxyError {}

/// A corpus of tokenized documents with optional per-document bucket tags.
/// Tokens are opaque strings; pick any tokenizer upstream (a whitespace
/// splitter ships with the line parser).
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedCorpus {
    documents: Vec<Vec<String>>,
    labels: Vec<Option<String>>,
}

impl TokenizedCorpus {
    /// Build from token sequences; every document must have at least one
    /// token (an empty corpus is fine).
    pub fn from_documents(documents: Vec<Vec<String>>) -> Result<Self, ProxyError> {
        for (index, doc) in documents.iter().enumerate() {
            if doc.is_empty() {
                return Err(ProxyError::EmptyDocument { index });
            }
        }
        let labels = vec![None; documents.len()];
        Ok(Self { documents, labels })
    }

    pub fn with_labels(mut self, labels: Vec<Option<String>>) -> Result<Self, ProxyError> {
        if labels.len() != self.documents.len() {
            return Err(ProxyError::LengthMismatch { a: self.documents.len(), b: labels.len() });
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Vec<String>] {
        &self.documents
    }

    pub fn labels(&self) -> &[Option<String>] {
        &self.labels
    }

    /// Keep only documents tagged with `bucket`, preserving order.
    pub fn filter_by_label(&self, bucket: &str) -> TokenizedCorpus {
        let mut documents = Vec::new();
        let mut labels = Vec::new();
        for (doc, label) in self.documents.iter().zip(&self.labels) {
            if label.as_deref() == Some(bucket) {
                documents.push(doc.clone());
                labels.push(label.clone());
            }
        }
        TokenizedCorpus { documents, labels }
    }
}

/// One document per line, tokens space-separated, with an optional leading
/// `[bucket]` tag. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<TokenizedCorpus, ProxyError> {
    let mut documents = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ProxyError::BadLine { line: idx + 1, message: e.to_string() })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (label, rest) = if let Some(tagged) = trimmed.strip_prefix('[') {
            match tagged.split_once(']') {
                Some((bucket, rest)) => (Some(bucket.to_string()), rest),
                None => {
                    return Err(ProxyError::BadLine {
                        line: idx + 1,
                        message: "unclosed [bucket] tag".into(),
                    })
                }
            }
        } else {
            (None, trimmed)
        };
        let tokens: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err(ProxyError::BadLine {
                line: idx + 1,
                message: "document has a tag but no tokens".into(),
            });
        }
        documents.push(tokens);
        labels.push(label);
    }
    Ok(TokenizedCorpus { documents, labels })
}

/// Diversity/concentration of one n-gram order over a corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyStats {
    pub n: usize,
    /// `unique_ngrams / total_ngrams`.
    pub distinct_n: f64,
    /// `Σ_j p_j²` over n-gram types (exact) or hash buckets (hashed).
    pub hhi: f64,
    pub total_ngrams: u64,
    pub unique_ngrams: u64,
}

const NGRAM_SEPARATOR: u8 = 0x1F;

fn ngram_key(tokens: &[String]) -> Vec<u8> {
    let mut key = Vec::with_capacity(tokens.iter().map(|t| t.len() + 1).sum());
    for (i, token) in tokens.iter().enumerate() {
        if i > 0 {
            key.push(NGRAM_SEPARATOR);
        }
        key.extend_from_slice(token.as_bytes());
    }
    key
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn count_ngrams<K, F>(corpus: &TokenizedCorpus, n: usize, mut key_of: F) -> HashMap<K, u64>
where
    K: std::hash::Hash + Eq,
    F: FnMut(&[String]) -> K,
{
    let mut counts = HashMap::new();
    for doc in &corpus.documents {
        if doc.len() < n {
            continue;
        }
        for window in doc.windows(n) {
            *counts.entry(key_of(window)).or_insert(0) += 1;
        }
    }
    counts
}

fn stats_from_counts<K>(n: usize, counts: HashMap<K, u64>) -> Result<ProxyStats, ProxyError> {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(ProxyError::EmptyCorpus);
    }
    let unique = counts.len() as u64;
    let t = total as f64;
    let hhi: f64 = counts.values().map(|&c| (c as f64 / t) * (c as f64 / t)).sum();
    Ok(ProxyStats {
        n,
        distinct_n: unique as f64 / t,
        hhi,
        total_ngrams: total,
        unique_ngrams: unique,
    })
}

/// Corpus-level distinct-n with the exact (unhashed) HHI alongside.
/// N-grams never cross document boundaries; documents shorter than `n`
/// contribute nothing.
pub fn distinct_n(corpus: &TokenizedCorpus, n: usize) -> Result<ProxyStats, ProxyError> {
    if n < 1 {
        return Err(ProxyError::BadOrder(n));
    }
    stats_from_counts(n, count_ngrams(corpus, n, ngram_key))
}

/// HHI over hashed n-gram buckets: FNV-1a 64-bit of the serialized n-gram,
/// truncated to the low `hash_bits` bits. `unique_ngrams` counts occupied
/// buckets, so collisions can make it undercount types.
pub fn hashed_hhi(
    corpus: &TokenizedCorpus,
    n: usize,
    hash_bits: u32,
) -> Result<ProxyStats, ProxyError> {
    if n < 1 {
        return Err(ProxyError::BadOrder(n));
    }
    if !(8..=32).contains(&hash_bits) {
        return Err(ProxyError::BadHashBits(hash_bits));
    }
    let mask = (1u64 << hash_bits) - 1;
    stats_from_counts(n, count_ngrams(corpus, n, |w| fnv1a64(&ngram_key(w)) & mask))
}

/// Pearson and Spearman (average-rank ties) correlation of two equal-length
/// series with at least 3 points each.
pub fn proxy_correlations(series_a: &[f64], series_b: &[f64]) -> Result<(f64, f64), ProxyError> {
    if series_a.len() != series_b.len() {
        return Err(ProxyError::LengthMismatch { a: series_a.len(), b: series_b.len() });
    }
    if series_a.len() < 3 {
        return Err(ProxyError::LengthMismatch { a: series_a.len(), b: series_b.len() });
    }
    if series_a.iter().chain(series_b).any(|x| !x.is_finite()) {
        return Err(ProxyError::NonFinite);
    }
    let pearson = pearson(series_a, series_b)?;
    let spearman = pearson_of(&average_ranks(series_a), &average_ranks(series_b))?;
    Ok((pearson, spearman))
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64, ProxyError> {
    pearson_of(a, b)
}

fn pearson_of(a: &[f64], b: &[f64]) -> Result<f64, ProxyError> {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(ProxyError::ZeroVariance);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// 1-based ranks with ties assigned the average of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(docs: &[&str]) -> TokenizedCorpus {
        TokenizedCorpus::from_documents(
            docs.iter()
                .map(|d| d.split_whitespace().map(str::to_string).collect())
                .collect(),
        )
        .unwrap()
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn distinct_bigrams_all_unique() {
        let stats = distinct_n(&corpus(&["a b c d"]), 2).unwrap();
        assert_eq!(stats.unique_ngrams, 3);
        assert_eq!(stats.total_ngrams, 3);
        assert_eq!(stats.distinct_n, 1.0);
    }

    #[test]
    fn distinct_bigrams_hand_count() {
        // "a b a b a b": bigrams ab, ba, ab, ba, ab → 2 unique of 5.
        let stats = distinct_n(&corpus(&["a b a b a b"]), 2).unwrap();
        assert_eq!(stats.unique_ngrams, 2);
        assert_eq!(stats.total_ngrams, 5);
        assert_close(stats.distinct_n, 0.4, 1e-15);
    }

    #[test]
    fn distinct_duplication_halves_ratio() {
        let base = corpus(&["x y z", "p q"]);
        let doubled = corpus(&["x y z", "p q", "x y z", "p q"]);
        let a = distinct_n(&base, 2).unwrap();
        let b = distinct_n(&doubled, 2).unwrap();
        assert_eq!(a.unique_ngrams, b.unique_ngrams);
        assert_eq!(2 * a.total_ngrams, b.total_ngrams);
        assert_close(b.distinct_n, a.distinct_n / 2.0, 1e-15);
    }

    #[test]
    fn ngrams_do_not_cross_documents() {
        // Two one-token documents yield no bigrams at all.
        let c = corpus(&["a", "b"]);
        assert!(matches!(distinct_n(&c, 2), Err(ProxyError::EmptyCorpus)));
        // But a two-token document does.
        let stats = distinct_n(&corpus(&["a", "b", "a b"]), 2).unwrap();
        assert_eq!(stats.total_ngrams, 1);
    }

    #[test]
    fn hhi_uniform_distribution() {
        // 16 distinct unigrams, one occurrence each: HHI = 1/16.
        let doc: Vec<String> = (0..16).map(|i| format!("tok{i}")).collect();
        let c = TokenizedCorpus::from_documents(vec![doc]).unwrap();
        let exact = distinct_n(&c, 1).unwrap();
        assert_close(exact.hhi, 1.0 / 16.0, 1e-15);
        let hashed = hashed_hhi(&c, 1, 20).unwrap();
        assert_close(hashed.hhi, 1.0 / 16.0, 1e-15);
        assert_eq!(hashed.unique_ngrams, 16);
    }

    #[test]
    fn hhi_single_repeated_ngram() {
        let stats = hashed_hhi(&corpus(&["go go go go"]), 1, 12).unwrap();
        assert_eq!(stats.hhi, 1.0);
        let stats = distinct_n(&corpus(&["go go go go"]), 1).unwrap();
        assert_eq!(stats.hhi, 1.0);
    }

    #[test]
    fn hashed_tracks_exact_within_two_percent() {
        // ~3000 trigram types in 2^20 buckets: collisions are rare, so the
        // bucketed HHI sits within 2% of the exact value.
        let docs: Vec<String> = (0..300)
            .map(|d| (0..12).map(|t| format!("w{}", (d * 31 + t * 7) % 97)).collect::<Vec<_>>().join(" "))
            .collect();
        let c = corpus(&docs.iter().map(String::as_str).collect::<Vec<_>>());
        let exact = distinct_n(&c, 3).unwrap();
        let hashed = hashed_hhi(&c, 3, 20).unwrap();
        let rel = (hashed.hhi - exact.hhi).abs() / exact.hhi;
        assert!(rel <= 0.02, "relative gap {rel}");
    }

    #[test]
    fn hashed_never_below_exact() {
        // Collisions merge buckets, which can only raise Σ p².
        for bits in [8u32, 10, 16] {
            for docs in [
                vec!["a b c a b", "c d e"],
                vec!["u v w x y z"],
                vec!["m m n n o o p p", "q r q r"],
            ] {
                let c = corpus(&docs);
                let exact = distinct_n(&c, 2).unwrap();
                let hashed = hashed_hhi(&c, 2, bits).unwrap();
                assert!(
                    hashed.hhi >= exact.hhi - 1e-15,
                    "bits {bits}: hashed {} < exact {}",
                    hashed.hhi,
                    exact.hhi
                );
            }
        }
    }

    #[test]
    fn hhi_bounds_hold() {
        let c = corpus(&["a b c a b c", "d e f g", "a a a"]);
        for n in 1..=3 {
            let stats = distinct_n(&c, n).unwrap();
            assert!(stats.hhi <= 1.0 + 1e-15);
            assert!(stats.hhi >= 1.0 / stats.total_ngrams as f64 - 1e-15);
            let p_sum_check = stats.hhi * stats.total_ngrams as f64;
            assert!(p_sum_check >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn stats_invariant_under_document_reordering() {
        let a = corpus(&["a b c", "d e", "a b"]);
        let b = corpus(&["d e", "a b", "a b c"]);
        assert_eq!(distinct_n(&a, 2).unwrap(), distinct_n(&b, 2).unwrap());
        assert_eq!(hashed_hhi(&a, 2, 16).unwrap(), hashed_hhi(&b, 2, 16).unwrap());
    }

    #[test]
    fn correlation_trivial_cases() {
        let s = [1.0, 2.0, 5.0, 3.0];
        let (p, r) = proxy_correlations(&s, &s).unwrap();
        assert_close(p, 1.0, 1e-12);
        assert_close(r, 1.0, 1e-12);

        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        let (p, r) = proxy_correlations(&s, &neg).unwrap();
        assert_close(p, -1.0, 1e-12);
        assert_close(r, -1.0, 1e-12);
    }

    #[test]
    fn correlation_monotone_nonlinear_pair() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.0, 4.0, 9.0, 16.0];
        let (p, r) = proxy_correlations(&a, &b).unwrap();
        assert_close(p, 0.9843740386976972, 1e-12);
        assert_close(r, 1.0, 1e-12);
    }

    #[test]
    fn correlation_handles_ties_with_average_ranks() {
        let a = [1.0, 1.0, 2.0, 3.0];
        assert_eq!(average_ranks(&a), vec![1.5, 1.5, 3.0, 4.0]);
        let b = [2.0, 2.0, 2.0, 5.0];
        assert_eq!(average_ranks(&b), vec![2.0, 2.0, 2.0, 4.0]);
        let (_, r) = proxy_correlations(&a, &b).unwrap();
        assert!(r > 0.0 && r < 1.0);
    }

    #[test]
    fn correlation_rejects_bad_input() {
        assert!(matches!(
            proxy_correlations(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(ProxyError::LengthMismatch { .. })
        ));
        assert!(matches!(
            proxy_correlations(&[1.0, 2.0], &[1.0, 2.0]),
            Err(ProxyError::LengthMismatch { .. })
        ));
        assert!(matches!(
            proxy_correlations(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(ProxyError::ZeroVariance)
        ));
        assert!(matches!(
            proxy_correlations(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]),
            Err(ProxyError::NonFinite)
        ));
    }

    #[test]
    fn corpus_parser_reads_tags_and_tokens() {
        let text = "[news] stocks rally today\nplain document here\n\n[chat] hi there\n";
        let c = read_corpus(text.as_bytes()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.labels()[0].as_deref(), Some("news"));
        assert_eq!(c.labels()[1], None);
        assert_eq!(c.documents()[0], vec!["stocks", "rally", "today"]);

        let news = c.filter_by_label("news");
        assert_eq!(news.len(), 1);

        assert!(matches!(
            read_corpus("[broken doc\n".as_bytes()),
            Err(ProxyError::BadLine { line: 1, .. })
        ));
        assert!(matches!(
            read_corpus("[tag]\n".as_bytes()),
            Err(ProxyError::BadLine { line: 1, .. })
        ));
    }

    #[test]
    fn empty_documents_are_rejected() {
        let err = TokenizedCorpus::from_documents(vec![vec!["a".into()], vec![]]);
        assert!(matches!(err, Err(ProxyError::EmptyDocument { index: 1 })));
    }

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64-bit test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }
}
