//! Synthetic benchmark with a planted word clustering.
//!
//! The vocabulary is split into clusters of interchangeable words. Every
//! document has one topic cluster; most of its tokens come from that cluster
//! (Zipf-distributed within it) and the rest from uniformly chosen clusters.
//! Positive documents take their topic from the first `disaster_clusters`
//! clusters, negative documents from the others.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterAlgorithm, Provenance, WordClustering};
use crate::corpus::{split, Corpus, CorpusKind, Document, SplitSpec};
use crate::{seeded_rng, Error, Result, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_clusters: usize,
    pub words_per_cluster: usize,
    pub disaster_clusters: usize,
    pub zipf_exponent: f64,
    pub doc_len_min: usize,
    pub doc_len_max: usize,
    /// Probability that a token comes from the document's topic cluster.
    pub topic_purity: f64,
    pub positive_prior: f64,
    pub label_noise: f64,
    /// Probability that a document carries a URL and a user mention.
    pub noise_rate: f64,
    pub n_labeled: usize,
    pub train_fraction: f64,
    pub n_unlabeled: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_clusters: 10,
            words_per_cluster: 100,
            disaster_clusters: 3,
            zipf_exponent: 0.5,
            doc_len_min: 6,
            doc_len_max: 14,
            topic_purity: 0.8,
            positive_prior: 0.3,
            label_noise: 0.03,
            noise_rate: 0.3,
            n_labeled: 2000,
            train_fraction: 0.7,
            n_unlabeled: 50_000,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        if self.n_clusters < 2 {
            return bad("need at least 2 clusters");
        }
        if self.words_per_cluster < 2 {
            return bad("vocabulary must hold at least 2 words per cluster");
        }
        if self.disaster_clusters < 1 || self.disaster_clusters >= self.n_clusters {
            return bad("disaster_clusters must lie in 1..n_clusters");
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return bad("zipf_exponent must be non-negative");
        }
        if self.doc_len_min < 1 || self.doc_len_max < self.doc_len_min {
            return bad("need 1 <= doc_len_min <= doc_len_max");
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.topic_purity) || !unit(self.positive_prior) || !unit(self.noise_rate) {
            return bad("probabilities must lie in [0, 1]");
        }
        if !(0.0..=0.5).contains(&self.label_noise) {
            return bad("label_noise must lie in [0, 0.5]");
        }
        if self.n_labeled < 2 {
            return bad("need at least 2 labeled documents");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: Corpus,
    pub test: Corpus,
    pub unlabeled: Corpus,
    /// The planted clustering over every vocabulary word.
    pub oracle: WordClustering,
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).to_string().len()
}

struct Sampler<'a> {
    config: &'a GeneratorConfig,
    words: Vec<Vec<String>>,
    within: WeightedIndex<f64>,
}

impl Sampler<'_> {
    fn text(&self, topic: usize, rng: &mut Rng) -> String {
        let c = self.config;
        let len = rng.gen_range(c.doc_len_min..=c.doc_len_max);
        let mut parts = Vec::with_capacity(len + 2);
        let noisy = rng.gen_bool(c.noise_rate);
        if noisy {
            parts.push(format!("@user{}", rng.gen_range(0..1000)));
        }
        for _ in 0..len {
            let cluster = if rng.gen_bool(c.topic_purity) {
                topic
            } else {
                rng.gen_range(0..c.n_clusters)
            };
            parts.push(self.words[cluster][self.within.sample(rng)].clone());
        }
        if noisy {
            parts.push(format!("http://t.co/{:x}", rng.gen::<u32>()));
        }
        parts.join(" ")
    }

    /// Returns (text, label) with the label possibly flipped.
    fn labeled(&self, rng: &mut Rng) -> (String, bool) {
        let c = self.config;
        let positive = rng.gen_bool(c.positive_prior);
        let topic = if positive {
            rng.gen_range(0..c.disaster_clusters)
        } else {
            rng.gen_range(c.disaster_clusters..c.n_clusters)
        };
        let text = self.text(topic, rng);
        let flip = rng.gen_bool(c.label_noise);
        (text, positive != flip)
    }
}

/// Deterministic per seed.
pub fn generate(config: &GeneratorConfig, seed: u64) -> Result<SyntheticData> {
    config.validate()?;
    let (cd, wd) = (
        digits(config.n_clusters).max(2),
        digits(config.words_per_cluster).max(3),
    );
    let words: Vec<Vec<String>> = (0..config.n_clusters)
        .map(|c| {
            (0..config.words_per_cluster)
                .map(|w| format!("c{c:0cd$}w{w:0wd$}"))
                .collect()
        })
        .collect();
    let within = WeightedIndex::new(
        (0..config.words_per_cluster).map(|r| (r as f64 + 1.0).powf(-config.zipf_exponent)),
    )
    .map_err(|e| Error::Parameter(e.to_string()))?;
    let sampler = Sampler {
        config,
        words,
        within,
    };
    let mut rng = seeded_rng(seed);

    let id_width = digits(config.n_labeled.max(config.n_unlabeled)).max(6);
    let labeled_docs = (0..config.n_labeled)
        .map(|i| {
            let (text, label) = sampler.labeled(&mut rng);
            Document::labeled(format!("l{i:0id_width$}"), text, label)
        })
        .collect();
    let labeled = Corpus::new(labeled_docs, CorpusKind::Labeled)?;

    let unlabeled_docs = (0..config.n_unlabeled)
        .map(|i| {
            let (text, _) = sampler.labeled(&mut rng);
            Document::unlabeled(format!("u{i:0id_width$}"), text)
        })
        .collect();
    let unlabeled = Corpus::new(unlabeled_docs, CorpusKind::Unlabeled)?;

    let (train, test) = split(
        &labeled,
        SplitSpec {
            train_fraction: config.train_fraction,
            seed: rng.gen(),
        },
    )?;

    let oracle = WordClustering::new(
        sampler.words.iter().flatten().cloned().collect(),
        (0..config.n_clusters as u32)
            .flat_map(|c| std::iter::repeat_n(c, config.words_per_cluster))
            .collect(),
        Provenance {
            algorithm: ClusterAlgorithm::External,
            corpus_tag: format!("synthetic-{seed}"),
        },
    )?;
    Ok(SyntheticData {
        train,
        test,
        unlabeled,
        oracle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::{tokenize, TokenizerConfig};

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            n_labeled: 50,
            n_unlabeled: 40,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small(), 1).unwrap();
        let b = generate(&small(), 1).unwrap();
        assert_eq!(a.train.to_jsonl(), b.train.to_jsonl());
        assert_eq!(a.unlabeled.to_jsonl(), b.unlabeled.to_jsonl());
        assert_eq!(a.oracle.to_tsv(), b.oracle.to_tsv());
        let c = generate(&small(), 2).unwrap();
        assert_ne!(a.train.to_jsonl(), c.train.to_jsonl());
        assert_eq!((a.train.len(), a.test.len()), (35, 15));
    }

    #[test]
    fn degenerate_prior_gives_one_class() {
        let cfg = GeneratorConfig {
            positive_prior: 1.0,
            label_noise: 0.0,
            ..small()
        };
        let d = generate(&cfg, 3).unwrap();
        assert_eq!(d.train.n_positive(), d.train.len());
        assert_eq!(d.test.n_positive(), d.test.len());
    }

    #[test]
    fn tokens_are_planted_words() {
        let d = generate(&small(), 4).unwrap();
        let cfg = TokenizerConfig::default();
        for doc in d.train.documents() {
            for t in tokenize(&doc.text, &cfg) {
                assert!(d.oracle.cluster_of(&t).is_some(), "{t}");
            }
        }
        assert_eq!(d.oracle.k(), 10);
        assert_eq!(d.oracle.len(), 1000);
    }

    #[test]
    fn invalid_parameters() {
        let bad = GeneratorConfig {
            disaster_clusters: 10,
            ..small()
        };
        assert!(matches!(generate(&bad, 0), Err(Error::Parameter(_))));
        let bad = GeneratorConfig {
            words_per_cluster: 1,
            ..small()
        };
        assert!(generate(&bad, 0).is_err());
    }
}
