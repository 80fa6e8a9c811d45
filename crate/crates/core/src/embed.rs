//! Skip-gram word embeddings trained with negative sampling, plus the plain
//! text embedding format (`|V| p` header, then `word v1 .. vp` per line).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::tokenize::Vocabulary;
use crate::{seeded_rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgnsConfig {
    pub dim: usize,
    /// Context radius in tokens, truncated at post boundaries.
    pub window: usize,
    pub negatives: usize,
    /// Frequent-word subsampling threshold on relative frequency.
    pub subsample_threshold: f64,
    pub epochs: usize,
    pub initial_learning_rate: f64,
    pub seed: u64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 20,
            window: 100,
            negatives: 5,
            subsample_threshold: 1e-3,
            epochs: 5,
            initial_learning_rate: 0.025,
            seed: 0,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        if self.dim < 1 {
            return bad("dim must be at least 1");
        }
        if self.window < 1 {
            return bad("window must be at least 1");
        }
        if self.negatives < 1 {
            return bad("negatives must be at least 1");
        }
        if !(self.subsample_threshold > 0.0) {
            return bad("subsample threshold must be positive");
        }
        if !(self.initial_learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

/// Which of the two vector tables to read or write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Table {
    Input,
    Output,
}

/// Input vectors `v_w` and, when trained locally, output vectors `v'_w`,
/// stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    words: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    input: Vec<f64>,
    output: Option<Vec<f64>>,
}

impl EmbeddingMatrix {
    pub fn new(
        words: Vec<String>,
        dim: usize,
        input: Vec<f64>,
        output: Option<Vec<f64>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("embedding dimension must be positive".into()));
        }
        let expected = words.len() * dim;
        if input.len() != expected || output.as_ref().is_some_and(|o| o.len() != expected) {
            return Err(Error::Format(format!(
                "tables must hold {} x {dim} values",
                words.len()
            )));
        }
        let finite = |t: &[f64]| t.iter().all(|x| x.is_finite());
        if !finite(&input) || !output.as_deref().is_none_or(finite) {
            return Err(Error::Format("non-finite embedding value".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate word {w:?}")));
            }
        }
        Ok(EmbeddingMatrix {
            words,
            index,
            dim,
            input,
            output,
        })
    }

    /// The seeded initialization used by [`sgns_train`]: input vectors uniform
    /// in ±0.5/dim, output vectors zero.
    pub fn random_init(words: Vec<String>, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = seeded_rng(seed);
        let half = 0.5 / dim as f64;
        let input = (0..words.len() * dim)
            .map(|_| rng.gen_range(-half..half))
            .collect();
        let output = Some(vec![0.0; words.len() * dim]);
        Self::new(words, dim, input, output)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn input_vector(&self, i: usize) -> &[f64] {
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    pub fn output_vector(&self, i: usize) -> Option<&[f64]> {
        self.output
            .as_ref()
            .map(|o| &o[i * self.dim..(i + 1) * self.dim])
    }

    pub fn has_output(&self) -> bool {
        self.output.is_some()
    }

    pub fn table(&self, table: Table) -> Option<&[f64]> {
        match table {
            Table::Input => Some(&self.input),
            Table::Output => self.output.as_deref(),
        }
    }

    /// Output vectors when present, otherwise the input table.
    pub fn clustering_table(&self) -> &[f64] {
        self.output.as_deref().unwrap_or(&self.input)
    }

    /// Serializes one table in the text format. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_text(&self, table: Table) -> Result<String> {
        let data = self
            .table(table)
            .ok_or_else(|| Error::Parameter("matrix has no output table".into()))?;
        let mut out = format!("{} {}\n", self.words.len(), self.dim);
        for (i, w) in self.words.iter().enumerate() {
            out.push_str(w);
            for v in &data[i * self.dim..(i + 1) * self.dim] {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses the text format into a matrix holding only the input table.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Format("empty embedding file".into()))?;
        let mut parts = header.split_whitespace();
        let (n, dim) = match (parts.next(), parts.next(), parts.next()) {
            (Some(n), Some(d), None) => (
                n.parse::<usize>()
                    .map_err(|_| Error::Format(format!("bad word count {n:?}")))?,
                d.parse::<usize>()
                    .map_err(|_| Error::Format(format!("bad dimension {d:?}")))?,
            ),
            _ => return Err(Error::Format("header must be `<words> <dim>`".into())),
        };
        let mut words = Vec::with_capacity(n);
        let mut input = Vec::with_capacity(n * dim);
        for (lineno, line) in lines {
            let row = lineno + 1;
            if words.len() == n {
                return Err(Error::Format(format!(
                    "line {row}: more rows than the {n} declared"
                )));
            }
            let mut parts = line.split_whitespace();
            let word = parts.next().expect("line is not blank");
            let before = input.len();
            for p in parts {
                let v: f64 = p
                    .parse()
                    .map_err(|_| Error::Format(format!("line {row}: bad value {p:?}")))?;
                if !v.is_finite() {
                    return Err(Error::Format(format!("line {row}: non-finite value")));
                }
                input.push(v);
            }
            if input.len() - before != dim {
                return Err(Error::Format(format!(
                    "line {row}: expected {dim} values, found {}",
                    input.len() - before
                )));
            }
            words.push(word.to_string());
        }
        if words.len() != n {
            return Err(Error::Format(format!(
                "header declares {n} rows, found {}",
                words.len()
            )));
        }
        Self::new(words, dim, input, None)
    }
}

/// Loads an externally trained matrix; only the input table is available.
pub fn load_pretrained(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::parse_text(&text)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(x)`, computed without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Full-softmax probability of `neighbor` given `target`.
pub fn softmax_probability(emb: &EmbeddingMatrix, target: &str, neighbor: &str) -> Result<f64> {
    let t = emb
        .index_of(target)
        .ok_or_else(|| Error::Vocabulary(target.to_string()))?;
    let nb = emb
        .index_of(neighbor)
        .ok_or_else(|| Error::Vocabulary(neighbor.to_string()))?;
    let output = emb
        .output
        .as_ref()
        .ok_or_else(|| Error::Parameter("matrix has no output table".into()))?;
    let v = emb.input_vector(t);
    let scores: Vec<f64> = output.chunks_exact(emb.dim).map(|u| dot(u, v)).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    Ok((scores[nb] - max).exp() / denom)
}

/// Negative-sampling loss for one (target, neighbor) pair:
/// `-ln σ(u_pos·v) - Σ ln σ(-u_neg·v)`.
pub fn pair_loss(target: &[f64], positive: &[f64], negatives: &[&[f64]]) -> f64 {
    neg_log_sigmoid(dot(positive, target))
        + negatives
            .iter()
            .map(|u| neg_log_sigmoid(-dot(u, target)))
            .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGradients {
    pub target: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Gradients of [`pair_loss`] with every vector treated as a free parameter.
pub fn pair_gradients(target: &[f64], positive: &[f64], negatives: &[&[f64]]) -> PairGradients {
    let g_pos = sigmoid(dot(positive, target)) - 1.0;
    let mut grad_target: Vec<f64> = positive.iter().map(|u| g_pos * u).collect();
    let grad_positive = target.iter().map(|v| g_pos * v).collect();
    let mut grad_negatives = Vec::with_capacity(negatives.len());
    for u in negatives {
        let g = sigmoid(dot(u, target));
        for (gt, ui) in grad_target.iter_mut().zip(u.iter()) {
            *gt += g * ui;
        }
        grad_negatives.push(target.iter().map(|v| g * v).collect());
    }
    PairGradients {
        target: grad_target,
        positive: grad_positive,
        negatives: grad_negatives,
    }
}

/// One SGD step on a pair, in place. Output vectors are updated as they are
/// visited; the target's step uses their values from before the update.
fn sgd_pair(
    input: &mut [f64],
    output: &mut [f64],
    dim: usize,
    target: usize,
    samples: &[(usize, f64)],
    lr: f64,
    scratch: &mut [f64],
) {
    scratch.fill(0.0);
    let v = &mut input[target * dim..(target + 1) * dim];
    for &(word, label) in samples {
        let u = &mut output[word * dim..(word + 1) * dim];
        let g = (label - sigmoid(dot(u, v))) * lr;
        for ((s, ui), vi) in scratch.iter_mut().zip(u.iter_mut()).zip(v.iter()) {
            *s += g * *ui;
            *ui += g * vi;
        }
    }
    for (vi, s) in v.iter_mut().zip(scratch.iter()) {
        *vi += s;
    }
}

/// Trains skip-gram vectors over the in-vocabulary tokens of `corpus`.
///
/// Frequent words are dropped with probability `1 - sqrt(t / f)` where `f` is
/// the word's share of tokens; negatives come from the unigram distribution
/// raised to 0.75; the learning rate decays linearly to 1e-4 of its start.
pub fn sgns_train(
    corpus: &Corpus,
    vocab: &Vocabulary,
    config: &SgnsConfig,
) -> Result<EmbeddingMatrix> {
    config.validate()?;
    if !corpus.is_tokenized() {
        return Err(Error::NotTokenized);
    }
    let docs: Vec<Vec<usize>> = corpus
        .documents()
        .iter()
        .map(|d| {
            d.token_slice()
                .iter()
                .filter_map(|t| vocab.index_of(t))
                .collect()
        })
        .collect();
    let mut counts = vec![0u64; vocab.len()];
    for &w in docs.iter().flatten() {
        counts[w] += 1;
    }
    let total: u64 = counts.iter().sum();
    if total == 0 || docs.iter().all(|d| d.len() < 2) {
        return Err(Error::EmptyInput(
            "no in-vocabulary context pairs to train on".into(),
        ));
    }

    let dim = config.dim;
    let mut emb = EmbeddingMatrix::random_init(vocab.words().to_vec(), dim, config.seed)?;
    if config.epochs == 0 {
        return Ok(emb);
    }
    let keep: Vec<f64> = counts
        .iter()
        .map(|&c| {
            let f = c as f64 / total as f64;
            if f > config.subsample_threshold {
                (config.subsample_threshold / f).sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let noise = WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(0.75)))
        .map_err(|e| Error::Numeric(format!("noise distribution: {e}")))?;

    // Separate stream from the initialization so epochs=0 is exactly the init.
    let mut rng = seeded_rng(config.seed ^ 0x5eed_5a3b_1e00_0001);
    let mut output = emb.output.take().expect("random_init sets output");
    let input = &mut emb.input;
    let work = (config.epochs as u64 * total) as f64;
    let min_lr = config.initial_learning_rate * 1e-4;
    let mut processed = 0u64;
    let mut sentence = Vec::new();
    let mut samples = Vec::with_capacity(config.negatives + 1);
    let mut scratch = vec![0.0; dim];

    for epoch in 0..config.epochs {
        for doc in &docs {
            sentence.clear();
            for &w in doc {
                if keep[w] >= 1.0 || rng.gen::<f64>() < keep[w] {
                    sentence.push(w);
                }
            }
            processed += doc.len() as u64;
            let lr = (config.initial_learning_rate * (1.0 - processed as f64 / work)).max(min_lr);
            for (i, &target) in sentence.iter().enumerate() {
                let lo = i.saturating_sub(config.window);
                let hi = (i + config.window + 1).min(sentence.len());
                for (j, &neighbor) in sentence[lo..hi].iter().enumerate() {
                    if lo + j == i {
                        continue;
                    }
                    samples.clear();
                    samples.push((neighbor, 1.0));
                    for _ in 0..config.negatives {
                        let neg = noise.sample(&mut rng);
                        if neg != neighbor {
                            samples.push((neg, 0.0));
                        }
                    }
                    sgd_pair(input, &mut output, dim, target, &samples, lr, &mut scratch);
                }
            }
        }
        if !input.iter().chain(output.iter()).all(|x| x.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite embedding value after epoch {}",
                epoch + 1
            )));
        }
        log::debug!("sgns epoch {} of {} done", epoch + 1, config.epochs);
    }
    emb.output = Some(output);
    Ok(emb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusKind, Document};
    use crate::tokenize::build_vocabulary;
    use rand::SeedableRng;

    fn hand_set() -> EmbeddingMatrix {
        let words = vec!["w1".to_string(), "w2".into(), "w3".into()];
        EmbeddingMatrix::new(words, 1, vec![1.0, 0.0, 0.0], Some(vec![1.0, 2.0, 0.0])).unwrap()
    }

    #[test]
    fn softmax_of_hand_set_vectors() {
        // p(w2 | w1) = e² / (e¹ + e² + e⁰)
        let e = std::f64::consts::E;
        let expected = e * e / (e + e * e + 1.0);
        let p = softmax_probability(&hand_set(), "w1", "w2").unwrap();
        assert!((p - expected).abs() < 1e-15);
        assert!((p - 0.665_240_955_774_821_9).abs() < 1e-15);
        assert!(matches!(
            softmax_probability(&hand_set(), "w1", "zz"),
            Err(Error::Vocabulary(_))
        ));
    }

    #[test]
    fn zero_vectors_give_uniform_softmax() {
        let words: Vec<String> = (0..7).map(|i| format!("w{i}")).collect();
        let emb = EmbeddingMatrix::new(words, 3, vec![0.0; 21], Some(vec![0.0; 21])).unwrap();
        for t in emb.words() {
            for n in emb.words() {
                let p = softmax_probability(&emb, t, n).unwrap();
                assert!((p - 1.0 / 7.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_survives_large_scores() {
        let words = vec!["a".to_string(), "b".into()];
        let emb = EmbeddingMatrix::new(words, 1, vec![1000.0, 0.0], Some(vec![1.0, 0.5])).unwrap();
        let p = softmax_probability(&emb, "a", "a").unwrap();
        assert!(p.is_finite() && p > 0.999);
    }

    #[test]
    fn text_format_parse_and_errors() {
        let emb = EmbeddingMatrix::parse_text("2 3\na 1 0 0\nb 0 1 0\n").unwrap();
        assert_eq!(emb.words(), ["a", "b"]);
        assert_eq!(emb.input_vector(1), &[0.0, 1.0, 0.0]);
        assert!(!emb.has_output());

        let short = EmbeddingMatrix::parse_text("2 3\na 1 0 0\nb 0 1\n").unwrap_err();
        assert!(short.to_string().contains("line 3"), "{short}");
        assert!(EmbeddingMatrix::parse_text("3 1\na 1\nb 2\n").is_err());
        assert!(EmbeddingMatrix::parse_text("1 1\na 1\nb 2\n").is_err());
        assert!(EmbeddingMatrix::parse_text("1 1\na NaN\n").is_err());
        assert!(EmbeddingMatrix::parse_text("1 1\na inf\n").is_err());
    }

    #[test]
    fn sgd_step_follows_pair_gradients() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dim = 4;
        let mut input: Vec<f64> = (0..3 * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut output: Vec<f64> = (0..3 * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (t, p, n) = (0, 1, 2);
        let v = input[..dim].to_vec();
        let up = output[dim..2 * dim].to_vec();
        let un = output[2 * dim..].to_vec();
        let grads = pair_gradients(&v, &up, &[&un]);
        let lr = 0.1;
        let mut scratch = vec![0.0; dim];
        sgd_pair(
            &mut input,
            &mut output,
            dim,
            t,
            &[(p, 1.0), (n, 0.0)],
            lr,
            &mut scratch,
        );
        for i in 0..dim {
            assert!((input[i] - (v[i] - lr * grads.target[i])).abs() < 1e-14);
            assert!((output[dim + i] - (up[i] - lr * grads.positive[i])).abs() < 1e-14);
            assert!((output[2 * dim + i] - (un[i] - lr * grads.negatives[0][i])).abs() < 1e-14);
        }
    }

    fn topic_corpus(docs_per_topic: usize) -> Corpus {
        let mut docs = Vec::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for i in 0..docs_per_topic * 2 {
            let topic = if i % 2 == 0 { "a" } else { "b" };
            let toks: Vec<String> = (0..6)
                .map(|_| format!("{topic}{}", rng.gen_range(1..=5)))
                .collect();
            docs.push(Document::unlabeled(i.to_string(), "").with_tokens(toks));
        }
        Corpus::new(docs, CorpusKind::Unlabeled).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let corpus = topic_corpus(5);
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        let cfg = SgnsConfig {
            epochs: 0,
            seed: 9,
            ..Default::default()
        };
        let emb = sgns_train(&corpus, &vocab, &cfg).unwrap();
        let init = EmbeddingMatrix::random_init(vocab.words().to_vec(), cfg.dim, 9).unwrap();
        assert_eq!(emb, init);
    }

    #[test]
    fn training_is_deterministic_and_finite() {
        let corpus = topic_corpus(50);
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        let cfg = SgnsConfig {
            dim: 8,
            epochs: 2,
            seed: 4,
            ..Default::default()
        };
        let a = sgns_train(&corpus, &vocab, &cfg).unwrap();
        let b = sgns_train(&corpus, &vocab, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.clustering_table().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let corpus = topic_corpus(20);
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        let cfg = SgnsConfig {
            dim: 5,
            epochs: 1,
            ..Default::default()
        };
        let emb = sgns_train(&corpus, &vocab, &cfg).unwrap();
        for table in [Table::Input, Table::Output] {
            let back = EmbeddingMatrix::parse_text(&emb.to_text(table).unwrap()).unwrap();
            assert_eq!(back.table(Table::Input).unwrap(), emb.table(table).unwrap());
        }
    }

    #[test]
    fn empty_corpus_rejected() {
        let docs = vec![Document::unlabeled("1", "").with_tokens(["solo"])];
        let corpus = Corpus::new(docs, CorpusKind::Unlabeled).unwrap();
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        assert!(matches!(
            sgns_train(&corpus, &vocab, &SgnsConfig::default()),
            Err(Error::EmptyInput(_))
        ));
        let bad = SgnsConfig {
            negatives: 0,
            ..Default::default()
        };
        assert!(matches!(
            sgns_train(&corpus, &vocab, &bad),
            Err(Error::Parameter(_))
        ));
    }
}
