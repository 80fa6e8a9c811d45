//! Labeled and unlabeled document collections.
//!
//! Corpora are read from line-delimited JSON: one object per line with `id`,
//! `text` and, for labeled corpora, a `label` of 0 or 1. A `tokens` array is
//! accepted as well so that preprocessed corpora can be written and re-read.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{seeded_rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    Labeled,
    Unlabeled,
}

/// One post.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: Option<bool>,
    /// `None` until the document has been tokenized.
    pub tokens: Option<Vec<String>>,
}

impl Document {
    pub fn labeled(id: impl Into<String>, text: impl Into<String>, label: bool) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            label: Some(label),
            tokens: None,
        }
    }

    pub fn unlabeled(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            label: None,
            tokens: None,
        }
    }

    pub fn with_tokens<S: Into<String>>(mut self, tokens: impl IntoIterator<Item = S>) -> Self {
        self.tokens = Some(tokens.into_iter().map(Into::into).collect());
        self
    }

    /// Tokens of a tokenized document; empty if not tokenized.
    pub fn token_slice(&self) -> &[String] {
        self.tokens.as_deref().unwrap_or(&[])
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    text: String,
    #[serde(default)]
    label: Option<u8>,
    #[serde(default)]
    tokens: Option<Vec<String>>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tokens: Option<&'a [String]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    kind: CorpusKind,
}

impl Corpus {
    /// Builds a corpus, checking id uniqueness and label/kind consistency.
    pub fn new(documents: Vec<Document>, kind: CorpusKind) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if doc.id.is_empty() {
                return Err(Error::Kind("document with empty id".into()));
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::Kind(format!("duplicate document id {:?}", doc.id)));
            }
            match (kind, doc.label) {
                (CorpusKind::Labeled, None) => {
                    return Err(Error::Kind(format!("document {:?} has no label", doc.id)))
                }
                (CorpusKind::Unlabeled, Some(_)) => {
                    return Err(Error::Kind(format!(
                        "document {:?} is labeled in an unlabeled corpus",
                        doc.id
                    )))
                }
                _ => {}
            }
        }
        Ok(Corpus { documents, kind })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn documents_mut(&mut self) -> &mut [Document] {
        &mut self.documents
    }

    pub fn kind(&self) -> CorpusKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn is_tokenized(&self) -> bool {
        self.documents.iter().all(|d| d.tokens.is_some())
    }

    /// Labels of a labeled corpus, in document order.
    pub fn labels(&self) -> Result<Vec<bool>> {
        self.documents
            .iter()
            .map(|d| {
                d.label
                    .ok_or_else(|| Error::Kind("corpus is not labeled".into()))
            })
            .collect()
    }

    pub fn n_positive(&self) -> usize {
        self.documents
            .iter()
            .filter(|d| d.label == Some(true))
            .count()
    }

    /// True when a labeled corpus contains both classes.
    pub fn has_both_classes(&self) -> bool {
        let pos = self.n_positive();
        self.kind == CorpusKind::Labeled && pos > 0 && pos < self.len()
    }

    fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            documents: indices.iter().map(|&i| self.documents[i].clone()).collect(),
            kind: self.kind,
        }
    }

    /// Serializes to the line-delimited JSON format read by [`load_corpus`].
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for doc in &self.documents {
            let rec = RecordOut {
                id: &doc.id,
                text: &doc.text,
                label: doc.label.map(u8::from),
                tokens: doc.tokens.as_deref(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

/// Reads a line-delimited JSON corpus. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>, kind: CorpusKind) -> Result<Corpus> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file), path, kind)
}

pub fn parse_corpus(reader: impl BufRead, path: &Path, kind: CorpusKind) -> Result<Corpus> {
    let mut documents = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        let schema = |message: String| Error::Schema {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        if rec.id.is_empty() {
            return Err(schema("empty id".into()));
        }
        let label = match (kind, rec.label) {
            (CorpusKind::Labeled, None) => {
                return Err(schema("missing \"label\" in a labeled corpus".into()))
            }
            (CorpusKind::Unlabeled, Some(_)) => {
                return Err(schema("unexpected \"label\" in an unlabeled corpus".into()))
            }
            (_, Some(l)) if l > 1 => return Err(schema(format!("label must be 0 or 1, got {l}"))),
            (_, l) => l.map(|l| l == 1),
        };
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                line: lineno,
                id: rec.id,
            });
        }
        documents.push(Document {
            id: rec.id,
            text: rec.text,
            label,
            tokens: rec.tokens,
        });
    }
    Ok(Corpus { documents, kind })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_total: usize,
    pub n_positive: usize,
    pub vocab_size: usize,
    pub mean_tokens_per_doc: f64,
    pub labeled: bool,
}

/// Dataset statistics. Token-based fields are zero for an untokenized corpus.
pub fn stats(corpus: &Corpus) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("corpus has no documents".into()));
    }
    let (vocab_size, mean_tokens_per_doc) = if corpus.is_tokenized() {
        let distinct: BTreeSet<&str> = corpus
            .documents
            .iter()
            .flat_map(|d| d.token_slice().iter().map(String::as_str))
            .collect();
        let total: usize = corpus.documents.iter().map(|d| d.token_slice().len()).sum();
        (distinct.len(), total as f64 / corpus.len() as f64)
    } else {
        (0, 0.0)
    };
    Ok(CorpusStats {
        n_total: corpus.len(),
        n_positive: corpus.n_positive(),
        vocab_size,
        mean_tokens_per_doc,
        labeled: corpus.kind == CorpusKind::Labeled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

/// Seeded shuffle, then cut into `floor(n * train_fraction)` training documents
/// and the remainder for testing.
pub fn split(corpus: &Corpus, spec: SplitSpec) -> Result<(Corpus, Corpus)> {
    if corpus.kind != CorpusKind::Labeled {
        return Err(Error::Kind("only labeled corpora can be split".into()));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let n = corpus.len();
    if n < 2 {
        return Err(Error::Bounds(format!("cannot split {n} documents")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(spec.seed));
    let cut = (n as f64 * spec.train_fraction).floor() as usize;
    Ok((corpus.subset(&order[..cut]), corpus.subset(&order[cut..])))
}

/// Uniform sample of `n` documents without replacement.
pub fn subsample(corpus: &Corpus, n: usize, seed: u64) -> Result<Corpus> {
    if n > corpus.len() {
        return Err(Error::Bounds(format!(
            "cannot sample {n} documents from {}",
            corpus.len()
        )));
    }
    let picked = rand::seq::index::sample(&mut seeded_rng(seed), corpus.len(), n).into_vec();
    Ok(corpus.subset(&picked))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str, kind: CorpusKind) -> Result<Corpus> {
        parse_corpus(Cursor::new(text), Path::new("mem.jsonl"), kind)
    }

    fn labeled(n: usize, positives: usize) -> Corpus {
        let docs = (0..n)
            .map(|i| Document::labeled(format!("d{i}"), "", i < positives))
            .collect();
        Corpus::new(docs, CorpusKind::Labeled).unwrap()
    }

    #[test]
    fn parses_labeled_lines() {
        let text = r#"{"id":"1","text":"flood","label":1}
{"id":"2","text":"sun","label":0}

{"id":"3","text":"help","label":1}
"#;
        let c = parse(text, CorpusKind::Labeled).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.kind(), CorpusKind::Labeled);
        assert_eq!(c.documents()[1].id, "2");
        assert_eq!(c.labels().unwrap(), vec![true, false, true]);
    }

    #[test]
    fn missing_label_names_line() {
        let text = "{\"id\":\"1\",\"text\":\"a\",\"label\":0}\n{\"id\":\"2\",\"text\":\"b\"}\n";
        match parse(text, CorpusKind::Labeled) {
            Err(Error::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn label_in_unlabeled_is_schema_error() {
        let text = "{\"id\":\"1\",\"text\":\"a\",\"label\":0}\n";
        assert!(matches!(
            parse(text, CorpusKind::Unlabeled),
            Err(Error::Schema { line: 1, .. })
        ));
    }

    #[test]
    fn malformed_and_duplicate_lines() {
        let bad = "{\"id\":\"1\",\"text\":\"a\"}\n{not json\n";
        assert!(matches!(
            parse(bad, CorpusKind::Unlabeled),
            Err(Error::Parse { line: 2, .. })
        ));
        let dup = "{\"id\":\"1\",\"text\":\"a\"}\n{\"id\":\"1\",\"text\":\"b\"}\n";
        assert!(matches!(
            parse(dup, CorpusKind::Unlabeled),
            Err(Error::DuplicateId { line: 2, .. })
        ));
        let two = "{\"id\":\"1\",\"text\":\"a\",\"label\":2}\n";
        assert!(matches!(
            parse(two, CorpusKind::Labeled),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn stats_counts() {
        let docs = [true, false, true, true]
            .iter()
            .enumerate()
            .map(|(i, &l)| Document::labeled(i.to_string(), "", l))
            .collect();
        let c = Corpus::new(docs, CorpusKind::Labeled).unwrap();
        let s = stats(&c).unwrap();
        assert_eq!((s.n_total, s.n_positive, s.vocab_size), (4, 3, 0));
        assert!(s.labeled);

        let docs = (0..10)
            .map(|i| Document::unlabeled(i.to_string(), "x").with_tokens(["aa", "bb"]))
            .collect();
        let u = Corpus::new(docs, CorpusKind::Unlabeled).unwrap();
        let s = stats(&u).unwrap();
        assert_eq!((s.n_total, s.n_positive, s.vocab_size), (10, 0, 2));
        assert!(!s.labeled);
        assert_eq!(s.mean_tokens_per_doc, 2.0);

        let empty = Corpus::new(vec![], CorpusKind::Unlabeled).unwrap();
        assert!(matches!(stats(&empty), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let c = labeled(10, 4);
        let spec = SplitSpec {
            train_fraction: 0.7,
            seed: 1,
        };
        let (train, test) = split(&c, spec).unwrap();
        assert_eq!((train.len(), test.len()), (7, 3));
        let ids: HashSet<_> = train.documents().iter().map(|d| &d.id).collect();
        assert!(test.documents().iter().all(|d| !ids.contains(&d.id)));
        assert_eq!(split(&c, spec).unwrap(), (train, test));
    }

    #[test]
    fn split_partitions_vary_with_seed() {
        // 120 possible 7/3 partitions; 100 seeds should hit well over half of
        // the ~68 expected distinct ones.
        let c = labeled(10, 4);
        let partition = |seed| {
            let (_, test) = split(
                &c,
                SplitSpec {
                    train_fraction: 0.7,
                    seed,
                },
            )
            .unwrap();
            test.documents()
                .iter()
                .map(|d| d.id.clone())
                .collect::<BTreeSet<_>>()
        };
        assert_ne!(partition(1), partition(2));
        let distinct: HashSet<_> = (0..100).map(partition).collect();
        assert!(distinct.len() >= 50, "only {} partitions", distinct.len());
    }

    #[test]
    fn split_rejects_unlabeled() {
        let docs = (0..4)
            .map(|i| Document::unlabeled(i.to_string(), ""))
            .collect();
        let u = Corpus::new(docs, CorpusKind::Unlabeled).unwrap();
        assert!(matches!(
            split(&u, SplitSpec::default()),
            Err(Error::Kind(_))
        ));
    }

    #[test]
    fn subsample_contracts() {
        let c = labeled(100, 30);
        let full = subsample(&c, 100, 3).unwrap();
        let mut ids: Vec<_> = full.documents().iter().map(|d| d.id.clone()).collect();
        ids.sort();
        let mut expected: Vec<_> = c.documents().iter().map(|d| d.id.clone()).collect();
        expected.sort();
        assert_eq!(ids, expected);

        assert_eq!(subsample(&c, 1, 9).unwrap(), subsample(&c, 1, 9).unwrap());
        assert!(matches!(subsample(&c, 101, 0), Err(Error::Bounds(_))));
    }

    #[test]
    fn subsample_matches_hypergeometric_mean() {
        // 20 of 100 with 30 positives: E = 6, sd of the 1000-seed mean ≈ 0.06.
        let c = labeled(100, 30);
        let total: usize = (0..1000)
            .map(|s| subsample(&c, 20, s).unwrap().n_positive())
            .sum();
        let mean = total as f64 / 1000.0;
        assert!((mean - 6.0).abs() <= 0.3, "mean positives {mean}");
    }

    #[test]
    fn jsonl_round_trip_preserves_stats() {
        let docs = vec![
            Document::labeled("a", "x y", true).with_tokens(["xx", "yy"]),
            Document::labeled("b", "z", false).with_tokens(Vec::<String>::new()),
        ];
        let c = Corpus::new(docs, CorpusKind::Labeled).unwrap();
        let back = parse(&c.to_jsonl(), CorpusKind::Labeled).unwrap();
        assert_eq!(back, c);
        assert_eq!(stats(&back).unwrap(), stats(&c).unwrap());
    }
}
