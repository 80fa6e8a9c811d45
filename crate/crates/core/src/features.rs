//! Binary document features: PMI-selected bag-of-words and bag-of-clusters.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::WordClustering;
use crate::corpus::{Corpus, Document};
use crate::hashing::sha256_hex;
use crate::model::BinaryMatrix;
use crate::{Error, Result};

/// Per-word document frequencies by class and the smoothed log-ratio score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmiTable {
    pub n_pos: u64,
    pub n_neg: u64,
    /// Words in lexicographic order.
    pub words: Vec<String>,
    pub df_pos: Vec<u64>,
    pub df_neg: Vec<u64>,
    pub scores: Vec<f64>,
}

/// `log2(p(t|pos) / p(t|neg))` with `p(t|c) = (df_c + 1) / (n_c + 2)`.
///
/// The ratio is formed from exact integer products and the smaller side is
/// always the denominator, so swapping the classes negates the score exactly.
pub fn smoothed_pmi(df_pos: u64, n_pos: u64, df_neg: u64, n_neg: u64) -> f64 {
    let a = ((df_pos + 1) * (n_neg + 2)) as f64;
    let b = ((df_neg + 1) * (n_pos + 2)) as f64;
    if a >= b {
        (a / b).log2()
    } else {
        -(b / a).log2()
    }
}

pub fn pmi_scores(train: &Corpus) -> Result<PmiTable> {
    let labels = train.labels()?;
    if !train.is_tokenized() {
        return Err(Error::NotTokenized);
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Class(
            "PMI needs positive and negative documents".into(),
        ));
    }
    let mut df: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for (doc, &label) in train.documents().iter().zip(&labels) {
        let distinct: BTreeSet<&str> = doc.token_slice().iter().map(String::as_str).collect();
        for t in distinct {
            let e = df.entry(t).or_default();
            if label {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    let mut table = PmiTable {
        n_pos,
        n_neg,
        words: Vec::with_capacity(df.len()),
        df_pos: Vec::with_capacity(df.len()),
        df_neg: Vec::with_capacity(df.len()),
        scores: Vec::with_capacity(df.len()),
    };
    for (w, (p, n)) in df {
        table.words.push(w.to_string());
        table.df_pos.push(p);
        table.df_neg.push(n);
        table.scores.push(smoothed_pmi(p, n_pos, n, n_neg));
    }
    Ok(table)
}

/// Result of [`select_top_k`]; `short` is set when fewer than `k` words existed.
#[derive(Debug, Clone)]
pub struct Selection {
    pub spec: FeatureSpec,
    pub short: bool,
}

/// The `k` highest-scoring words; ties go to higher `df_pos`, then to the
/// lexicographically smaller word.
pub fn select_top_k(table: &PmiTable, k: usize) -> Result<Selection> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..table.words.len()).collect();
    order.sort_by(|&a, &b| {
        table.scores[b]
            .total_cmp(&table.scores[a])
            .then(table.df_pos[b].cmp(&table.df_pos[a]))
            .then_with(|| table.words[a].cmp(&table.words[b]))
    });
    let short = order.len() < k;
    if short {
        log::warn!("only {} words available for top-{k} selection", order.len());
    }
    order.truncate(k);
    let words = order.into_iter().map(|i| table.words[i].clone()).collect();
    Ok(Selection {
        spec: FeatureSpec::bow(words)?,
        short,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    BowTopk,
    Clusters,
}

#[derive(Debug, Clone, PartialEq)]
enum Payload {
    Words(Vec<String>),
    Clusters(WordClustering),
}

/// How documents map to feature bits.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    payload: Payload,
    index: HashMap<String, u32>,
    dim: usize,
}

/// On-disk form of a [`FeatureSpec`]. Cluster specs point at a cluster file
/// and pin its content hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureSpecRecord {
    BowTopk {
        words: Vec<String>,
    },
    Clusters {
        cluster_file: String,
        content_hash: String,
        k: usize,
    },
}

impl FeatureSpec {
    pub fn bow(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(Error::Parameter(format!("word {w:?} listed twice")));
            }
        }
        Ok(FeatureSpec {
            dim: words.len(),
            payload: Payload::Words(words),
            index,
        })
    }

    pub fn clusters(clustering: WordClustering) -> Self {
        let index = clustering
            .words()
            .iter()
            .zip(clustering.assignments())
            .map(|(w, &c)| (w.clone(), c))
            .collect();
        FeatureSpec {
            dim: clustering.k(),
            payload: Payload::Clusters(clustering),
            index,
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self.payload {
            Payload::Words(_) => Scheme::BowTopk,
            Payload::Clusters(_) => Scheme::Clusters,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bow_words(&self) -> Option<&[String]> {
        match &self.payload {
            Payload::Words(w) => Some(w),
            Payload::Clusters(_) => None,
        }
    }

    pub fn clustering(&self) -> Option<&WordClustering> {
        match &self.payload {
            Payload::Clusters(c) => Some(c),
            Payload::Words(_) => None,
        }
    }

    /// Identifies the feature mapping; stored in trained models.
    pub fn spec_hash(&self) -> String {
        let canonical = match &self.payload {
            Payload::Words(w) => format!("bow_topk\n{}", w.join("\n")),
            Payload::Clusters(c) => format!("clusters\n{}", c.content_hash()),
        };
        sha256_hex(canonical.as_bytes())
    }

    /// `cluster_file` is required for cluster specs and recorded verbatim.
    pub fn to_record(&self, cluster_file: Option<&str>) -> Result<FeatureSpecRecord> {
        Ok(match &self.payload {
            Payload::Words(w) => FeatureSpecRecord::BowTopk { words: w.clone() },
            Payload::Clusters(c) => FeatureSpecRecord::Clusters {
                cluster_file: cluster_file
                    .ok_or_else(|| {
                        Error::Parameter("cluster spec needs a cluster file path".into())
                    })?
                    .to_string(),
                content_hash: c.content_hash(),
                k: c.k(),
            },
        })
    }

    /// Rebuilds a spec; relative cluster paths resolve against `base_dir`.
    pub fn from_record(record: &FeatureSpecRecord, base_dir: &Path) -> Result<Self> {
        match record {
            FeatureSpecRecord::BowTopk { words } => Self::bow(words.clone()),
            FeatureSpecRecord::Clusters {
                cluster_file,
                content_hash,
                k,
            } => {
                let path = base_dir.join(cluster_file);
                let clustering = WordClustering::load(&path)?;
                if clustering.content_hash() != *content_hash {
                    return Err(Error::Format(format!(
                        "{} does not match the recorded content hash",
                        path.display()
                    )));
                }
                if clustering.k() != *k {
                    return Err(Error::Shape {
                        expected: *k,
                        actual: clustering.k(),
                    });
                }
                Ok(Self::clusters(clustering))
            }
        }
    }
}

/// Sparse binary vector: indices of the set bits, increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    dim: usize,
    active: Vec<u32>,
}

impl FeatureVector {
    pub fn new(dim: usize, mut active: Vec<u32>) -> Result<Self> {
        active.sort_unstable();
        active.dedup();
        if active.last().is_some_and(|&j| j as usize >= dim) {
            return Err(Error::Shape {
                expected: dim,
                actual: *active.last().unwrap() as usize + 1,
            });
        }
        Ok(FeatureVector { dim, active })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn active(&self) -> &[u32] {
        &self.active
    }

    pub fn to_dense(&self) -> Vec<bool> {
        let mut out = vec![false; self.dim];
        self.active.iter().for_each(|&j| out[j as usize] = true);
        out
    }
}

/// Tokens unknown to the feature spec set no bit.
pub fn featurize_tokens<S: AsRef<str>>(tokens: &[S], spec: &FeatureSpec) -> FeatureVector {
    let mut active: Vec<u32> = tokens
        .iter()
        .filter_map(|t| spec.index.get(t.as_ref()).copied())
        .collect();
    active.sort_unstable();
    active.dedup();
    FeatureVector {
        dim: spec.dim,
        active,
    }
}

pub fn featurize(doc: &Document, spec: &FeatureSpec) -> Result<FeatureVector> {
    let tokens = doc.tokens.as_deref().ok_or(Error::NotTokenized)?;
    Ok(featurize_tokens(tokens, spec))
}

pub fn featurize_corpus(corpus: &Corpus, spec: &FeatureSpec) -> Result<BinaryMatrix> {
    if !corpus.is_tokenized() {
        return Err(Error::NotTokenized);
    }
    let rows: Vec<FeatureVector> = corpus
        .documents()
        .iter()
        .map(|d| featurize_tokens(d.token_slice(), spec))
        .collect();
    BinaryMatrix::from_vectors(&rows, spec.dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{ClusterAlgorithm, Provenance};
    use crate::corpus::CorpusKind;
    use proptest::prelude::*;

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn smoothed_examples() {
        assert_eq!(smoothed_pmi(3, 10, 1, 10), 1.0);
        assert_eq!(smoothed_pmi(4, 10, 4, 10), 0.0);
        assert!((smoothed_pmi(5, 10, 0, 10) - 6f64.log2()).abs() < 1e-15);
        assert_eq!(smoothed_pmi(1, 10, 3, 10), -1.0);
    }

    fn labeled(docs: &[(&[&str], bool)]) -> Corpus {
        let docs = docs
            .iter()
            .enumerate()
            .map(|(i, (t, l))| {
                Document::labeled(i.to_string(), "", *l).with_tokens(t.iter().copied())
            })
            .collect();
        Corpus::new(docs, CorpusKind::Labeled).unwrap()
    }

    #[test]
    fn pmi_counts_documents_not_tokens() {
        let c = labeled(&[
            (&["flood", "flood", "help"], true),
            (&["help"], false),
            (&["game"], false),
        ]);
        let t = pmi_scores(&c).unwrap();
        assert_eq!(t.words, words(&["flood", "game", "help"]));
        assert_eq!(t.df_pos, vec![1, 0, 1]);
        assert_eq!(t.df_neg, vec![0, 1, 1]);
        assert_eq!((t.n_pos, t.n_neg), (1, 2));
        let one = labeled(&[(&["a"], true), (&["b"], true)]);
        assert!(matches!(pmi_scores(&one), Err(Error::Class(_))));
    }

    #[test]
    fn top_k_order_and_short_flag() {
        let t = PmiTable {
            n_pos: 10,
            n_neg: 10,
            words: words(&["a", "b", "c", "d"]),
            df_pos: vec![1, 3, 2, 3],
            df_neg: vec![0, 2, 0, 2],
            scores: vec![2.0, 0.5, 2.0, 0.5],
        };
        let sel = select_top_k(&t, 3).unwrap();
        assert_eq!(sel.spec.bow_words().unwrap(), ["c", "a", "b"]);
        assert!(!sel.short);
        let all = select_top_k(&t, 9).unwrap();
        assert!(all.short);
        assert_eq!(all.spec.dim(), 4);
    }

    #[test]
    fn featurize_examples() {
        let bow = FeatureSpec::bow(words(&["help", "fire", "flood"])).unwrap();
        let v = featurize_tokens(&["flood", "help"], &bow);
        assert_eq!(v.to_dense(), vec![true, false, true]);

        let clustering = WordClustering::new(
            words(&["flood", "water", "help"]),
            vec![0, 0, 1],
            Provenance {
                algorithm: ClusterAlgorithm::External,
                corpus_tag: String::new(),
            },
        )
        .unwrap();
        let spec = FeatureSpec::clusters(clustering);
        assert_eq!(
            featurize_tokens(&["water"], &spec).to_dense(),
            vec![true, false]
        );
        assert_eq!(
            featurize_tokens(&["zzz", "qqq"], &spec).to_dense(),
            vec![false, false]
        );
        assert_ne!(spec.spec_hash(), bow.spec_hash());
    }

    #[test]
    fn record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let clustering = WordClustering::new(
            words(&["a", "b"]),
            vec![1, 0],
            Provenance {
                algorithm: ClusterAlgorithm::Brown,
                corpus_tag: String::new(),
            },
        )
        .unwrap();
        std::fs::write(dir.path().join("c.tsv"), clustering.to_tsv()).unwrap();
        let spec = FeatureSpec::clusters(clustering);
        let record = spec.to_record(Some("c.tsv")).unwrap();
        let json = serde_json::to_string(&record).unwrap();
        let back: FeatureSpecRecord = serde_json::from_str(&json).unwrap();
        let rebuilt = FeatureSpec::from_record(&back, dir.path()).unwrap();
        assert_eq!(rebuilt.spec_hash(), spec.spec_hash());

        std::fs::write(dir.path().join("c.tsv"), "0\ta\n0\tb\n").unwrap();
        assert!(FeatureSpec::from_record(&back, dir.path()).is_err());
    }

    proptest! {
        #[test]
        fn swapping_labels_negates_scores(
            docs in proptest::collection::vec(proptest::collection::vec("[a-f]", 0..5), 4..20)
        ) {
            let n = docs.len() / 2 * 2;
            let build = |flip: bool| {
                let ds = docs[..n]
                    .iter()
                    .enumerate()
                    .map(|(i, t)| Document::labeled(i.to_string(), "", (i % 2 == 0) != flip).with_tokens(t.clone()))
                    .collect();
                Corpus::new(ds, CorpusKind::Labeled).unwrap()
            };
            let a = pmi_scores(&build(false)).unwrap();
            let b = pmi_scores(&build(true)).unwrap();
            for (x, y) in a.scores.iter().zip(&b.scores) {
                prop_assert_eq!(*x, -*y);
            }
        }

        #[test]
        fn duplicate_tokens_do_not_change_vectors(
            toks in proptest::collection::vec("[a-e]", 0..6), dup in 0usize..6
        ) {
            let spec = FeatureSpec::bow(words(&["a", "c", "e"])).unwrap();
            let mut more = toks.clone();
            if let Some(t) = toks.get(dup % toks.len().max(1)) {
                more.push(t.clone());
            }
            let v = featurize_tokens(&toks, &spec);
            prop_assert_eq!(v.dim(), 3);
            prop_assert_eq!(v, featurize_tokens(&more, &spec));
        }
    }
}
