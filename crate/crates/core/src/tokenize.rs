//! Rule-based preprocessing of short posts and vocabulary construction.
//!
//! Text is split on whitespace, boundary punctuation is stripped from each
//! piece, and the result is dropped if it is a URL, a user mention, a stopword,
//! or falls outside the configured length bounds. Lengths are counted in
//! Unicode scalar values.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::corpus::Corpus;
use crate::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("stopwords_en.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerConfig {
    pub stopwords: HashSet<String>,
    pub min_len: usize,
    pub max_len: usize,
    pub strip_urls: bool,
    pub strip_mentions: bool,
    pub lowercase: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            stopwords: parse_stopwords(DEFAULT_STOPWORDS),
            min_len: 3,
            max_len: 15,
            strip_urls: true,
            strip_mentions: true,
            lowercase: true,
        }
    }
}

impl TokenizerConfig {
    /// Default configuration without any stopwords.
    pub fn without_stopwords() -> Self {
        TokenizerConfig {
            stopwords: HashSet::new(),
            ..Default::default()
        }
    }

    pub fn with_stopword_file(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.stopwords = parse_stopwords(&text);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_len < 1 {
            return Err(Error::Parameter("min_len must be at least 1".into()));
        }
        if self.max_len < self.min_len {
            return Err(Error::Parameter(format!(
                "max_len {} is below min_len {}",
                self.max_len, self.min_len
            )));
        }
        Ok(())
    }
}

/// One lowercase word per line; `#` starts a comment.
pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(|line| line.split('#').next().unwrap_or("").trim())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn is_url(token: &str) -> bool {
    let lower = token.to_lowercase();
    lower.contains("://") || lower.starts_with("www.") || lower.starts_with("t.co/")
}

/// Strips non-alphanumeric characters from both ends, keeping a leading `@`
/// so that mentions stay recognizable. `#` is stripped like any other mark.
fn strip_boundary(piece: &str) -> &str {
    piece
        .trim_start_matches(|c: char| !c.is_alphanumeric() && c != '@')
        .trim_end_matches(|c: char| !c.is_alphanumeric())
}

pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    let mut out = Vec::new();
    for piece in text.split_whitespace() {
        let cased = if config.lowercase {
            piece.to_lowercase()
        } else {
            piece.to_string()
        };
        let token = strip_boundary(&cased);
        if token.is_empty() {
            continue;
        }
        if token.starts_with('@') {
            // A lone '@' run is punctuation, not a mention, but carries no word either.
            if config.strip_mentions || !token.chars().any(char::is_alphanumeric) {
                continue;
            }
        }
        if config.strip_urls && is_url(token) {
            continue;
        }
        let len = token.chars().count();
        if len < config.min_len || len > config.max_len {
            continue;
        }
        if config.stopwords.contains(&token.to_lowercase()) {
            continue;
        }
        out.push(token.to_string());
    }
    out
}

/// Tokenizes every document in place.
pub fn tokenize_corpus(corpus: &mut Corpus, config: &TokenizerConfig) {
    for doc in corpus.documents_mut() {
        doc.tokens = Some(tokenize(&doc.text, config));
    }
}

/// Words ordered by descending corpus frequency, ties lexicographic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from (word, count) pairs, keeping counts ≥ `min_count`.
    pub fn from_counts<I, S>(counts: I, min_count: u64) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut entries: Vec<(String, u64)> = counts
            .into_iter()
            .map(|(w, c)| (w.into(), c))
            .filter(|(_, c)| *c >= min_count.max(1))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i))
            .collect();
        let (words, counts) = entries.into_iter().unzip();
        Vocabulary {
            words,
            counts,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts[index]
    }
}

/// Counts tokens over a tokenized corpus and keeps those seen `min_count` times.
pub fn build_vocabulary(corpus: &Corpus, min_count: u64) -> Result<Vocabulary> {
    if !corpus.is_tokenized() {
        return Err(Error::NotTokenized);
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for doc in corpus.documents() {
        for tok in doc.token_slice() {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    Ok(Vocabulary::from_counts(counts, min_count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusKind, Document};
    use proptest::prelude::*;

    fn cfg_with(stop: &[&str]) -> TokenizerConfig {
        TokenizerConfig {
            stopwords: stop.iter().map(|s| s.to_string()).collect(),
            ..TokenizerConfig::without_stopwords()
        }
    }

    #[test]
    fn mention_url_and_stopword_removed() {
        let toks = tokenize(
            "@user check http://t.co/x Flooding in Calgary",
            &cfg_with(&["in"]),
        );
        assert_eq!(toks, vec!["check", "flooding", "calgary"]);
    }

    #[test]
    fn short_tokens_and_empty_input() {
        assert!(tokenize("ok go hi", &cfg_with(&[])).is_empty());
        assert!(tokenize("", &cfg_with(&[])).is_empty());
    }

    #[test]
    fn flags_disable_filters() {
        let cfg = TokenizerConfig {
            strip_urls: false,
            strip_mentions: false,
            lowercase: false,
            max_len: 40,
            ..TokenizerConfig::without_stopwords()
        };
        assert_eq!(
            tokenize("@Fema www.fema.gov Help", &cfg),
            vec!["@Fema", "www.fema.gov", "Help"]
        );
    }

    #[test]
    fn stopword_file_parsing() {
        let set = parse_stopwords("# header\nThe\n  and  \n\nof # trailing\n");
        let expected: HashSet<String> =
            ["the", "and", "of"].iter().map(|s| s.to_string()).collect();
        assert_eq!(set, expected);
        assert!(TokenizerConfig::default().stopwords.contains("the"));
    }

    #[test]
    fn config_validation() {
        let mut cfg = TokenizerConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.min_len = 0;
        assert!(cfg.validate().is_err());
        cfg.min_len = 5;
        cfg.max_len = 4;
        assert!(cfg.validate().is_err());
    }

    fn corpus_of(docs: &[&[&str]]) -> Corpus {
        let docs = docs
            .iter()
            .enumerate()
            .map(|(i, toks)| {
                Document::unlabeled(i.to_string(), "").with_tokens(toks.iter().copied())
            })
            .collect();
        Corpus::new(docs, CorpusKind::Unlabeled).unwrap()
    }

    #[test]
    fn vocabulary_threshold_and_order() {
        let c = corpus_of(&[&["a", "b", "a", "c"], &["a", "a", "b", "a"]]);
        let v = build_vocabulary(&c, 2).unwrap();
        assert_eq!(v.words(), ["a", "b"]);
        assert_eq!(v.index_of("a"), Some(0));
        assert_eq!(v.index_of("b"), Some(1));
        assert_eq!(v.index_of("c"), None);
        assert_eq!(build_vocabulary(&c, 1).unwrap().len(), 3);

        let tie = corpus_of(&[&["x", "m", "x", "m", "x", "m"]]);
        assert_eq!(build_vocabulary(&tie, 1).unwrap().words(), ["m", "x"]);
    }

    #[test]
    fn vocabulary_requires_tokens() {
        let docs = vec![Document::unlabeled("1", "text")];
        let c = Corpus::new(docs, CorpusKind::Unlabeled).unwrap();
        assert!(matches!(build_vocabulary(&c, 1), Err(Error::NotTokenized)));
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent_and_respects_rules(
            text in "[a-zA-Z0-9@#:/._!?,' \\-]{0,80}"
        ) {
            let cfg = cfg_with(&["the", "and", "flood"]);
            let once = tokenize(&text, &cfg);
            let twice = tokenize(&once.join(" "), &cfg);
            prop_assert_eq!(&once, &twice);
            for t in &once {
                let n = t.chars().count();
                prop_assert!((3..=15).contains(&n));
                prop_assert!(!t.starts_with('@'));
                prop_assert!(!is_url(t));
                prop_assert!(!cfg.stopwords.contains(t));
            }
        }

        #[test]
        fn vocabulary_indices_are_a_bijection(
            docs in proptest::collection::vec(
                proptest::collection::vec("[a-e]{1,2}", 0..8), 1..6)
        ) {
            let docs: Vec<Document> = docs
                .into_iter()
                .enumerate()
                .map(|(i, t)| Document::unlabeled(i.to_string(), "").with_tokens(t))
                .collect();
            let c = Corpus::new(docs, CorpusKind::Unlabeled).unwrap();
            let v = build_vocabulary(&c, 1).unwrap();
            for (i, w) in v.words().iter().enumerate() {
                prop_assert_eq!(v.index_of(w), Some(i));
            }
            for w in v.counts().windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }
    }
}
