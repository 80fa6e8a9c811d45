//! Brown clustering: greedy agglomerative merging of words that loses the
//! least average mutual information (AMI) between adjacent cluster
//! occurrences.
//!
//! The windowed variant keeps at most `window` active clusters. Words enter in
//! order of decreasing frequency; each insertion beyond the window is followed
//! by the cheapest merge among active clusters. Words not yet inserted still
//! count as singleton clusters when AMI is evaluated, so every recorded loss is
//! the exact change of AMI for the clustering of the whole vocabulary and the
//! AMI sequence never increases.
//!
//! Merge costs for active pairs are kept in a table and patched after each
//! merge: only terms involving the two merged clusters change, so each update
//! is O(1) per pair and a merge costs O(window²). Setting
//! [`BrownConfig::exact`] recomputes every candidate cost from scratch instead.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterAlgorithm, Provenance, WordClustering};
use crate::corpus::Corpus;
use crate::tokenize::Vocabulary;
use crate::{Error, Result};

/// Losses closer than this are ties, resolved by the smaller cluster-id pair.
pub const TIE_EPSILON: f64 = 1e-12;

/// Unigram and adjacent-pair counts over in-vocabulary tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramCounts {
    words: Vec<String>,
    unigram: Vec<u64>,
    bigram: BTreeMap<(u32, u32), u64>,
    total_tokens: u64,
}

impl BigramCounts {
    /// Words sorted by descending count, ties lexicographic. Word ids used by
    /// [`BigramCounts::bigrams`] index this slice.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn unigram(&self) -> &[u64] {
        &self.unigram
    }

    pub fn bigrams(&self) -> &BTreeMap<(u32, u32), u64> {
        &self.bigram
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn word_id(&self, word: &str) -> Option<u32> {
        self.words.iter().position(|w| w == word).map(|i| i as u32)
    }

    pub fn bigram_count(&self, left: &str, right: &str) -> u64 {
        match (self.word_id(left), self.word_id(right)) {
            (Some(l), Some(r)) => self.bigram.get(&(l, r)).copied().unwrap_or(0),
            _ => 0,
        }
    }

    /// Counts over token sequences, with the vocabulary taken from the
    /// sequences themselves.
    pub fn from_sequences<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<Self> {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for doc in docs {
            for t in doc {
                *counts.entry(t.as_ref()).or_default() += 1;
            }
        }
        let vocab = Vocabulary::from_counts(counts, 1);
        count_sequences(docs.iter().map(|d| d.iter().map(|s| s.as_ref())), &vocab)
    }
}

fn count_sequences<'a, D, T>(docs: D, vocab: &Vocabulary) -> Result<BigramCounts>
where
    D: Iterator<Item = T>,
    T: Iterator<Item = &'a str>,
{
    let mut unigram = vec![0u64; vocab.len()];
    let mut raw: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut ids = Vec::new();
    for doc in docs {
        ids.clear();
        ids.extend(doc.filter_map(|t| vocab.index_of(t)));
        for &i in &ids {
            unigram[i] += 1;
        }
        for pair in ids.windows(2) {
            *raw.entry((pair[0], pair[1])).or_default() += 1;
        }
    }
    let total_tokens: u64 = unigram.iter().sum();
    if total_tokens == 0 {
        return Err(Error::EmptyInput("no in-vocabulary tokens to count".into()));
    }
    let mut order: Vec<usize> = (0..vocab.len()).collect();
    order.sort_by(|&a, &b| {
        unigram[b]
            .cmp(&unigram[a])
            .then_with(|| vocab.word(a).cmp(vocab.word(b)))
    });
    let mut new_id = vec![0u32; vocab.len()];
    for (new, &old) in order.iter().enumerate() {
        new_id[old] = new as u32;
    }
    Ok(BigramCounts {
        words: order.iter().map(|&i| vocab.word(i).to_string()).collect(),
        unigram: order.iter().map(|&i| unigram[i]).collect(),
        bigram: raw
            .into_iter()
            .map(|((a, b), c)| ((new_id[a], new_id[b]), c))
            .collect(),
        total_tokens,
    })
}

/// Counts adjacent in-vocabulary pairs within each document. Out-of-vocabulary
/// tokens are removed before pairing; pairs never cross documents.
pub fn count_bigrams(corpus: &Corpus, vocab: &Vocabulary) -> Result<BigramCounts> {
    if !corpus.is_tokenized() {
        return Err(Error::NotTokenized);
    }
    count_sequences(
        corpus
            .documents()
            .iter()
            .map(|d| d.token_slice().iter().map(String::as_str)),
        vocab,
    )
}

/// AMI in bits of the cluster bigram distribution induced by `clustering`.
/// Bigrams with an endpoint outside the clustering are ignored.
pub fn average_mutual_information(counts: &BigramCounts, clustering: &WordClustering) -> f64 {
    let cluster: Vec<Option<u32>> = counts
        .words
        .iter()
        .map(|w| clustering.cluster_of(w))
        .collect();
    let mut joint: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for (&(a, b), &c) in &counts.bigram {
        if let (Some(ca), Some(cb)) = (cluster[a as usize], cluster[b as usize]) {
            *joint.entry((ca, cb)).or_default() += c as f64;
        }
    }
    ami_of_table(&joint, clustering.k())
}

fn ami_of_table(joint: &BTreeMap<(u32, u32), f64>, k: usize) -> f64 {
    let total: f64 = joint.values().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut left = vec![0.0; k];
    let mut right = vec![0.0; k];
    for (&(a, b), &c) in joint {
        left[a as usize] += c;
        right[b as usize] += c;
    }
    joint
        .iter()
        .filter(|(_, &c)| c > 0.0)
        .map(|(&(a, b), &c)| {
            c / total * (c * total / (left[a as usize] * right[b as usize])).log2()
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BrownConfig {
    /// Maximum number of active clusters.
    pub window: usize,
    /// Keep merging after the last insertion until one cluster remains.
    pub full_tree: bool,
    /// Recompute every merge cost from scratch (slow; for verification).
    pub exact: bool,
}

impl Default for BrownConfig {
    fn default() -> Self {
        BrownConfig {
            window: 1000,
            full_tree: true,
            exact: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: u32,
    pub b: u32,
    pub ami_loss: f64,
}

/// Merge history over the leaves. Leaves have ids `0..n`; merge `t` creates
/// cluster `n + t` from `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: Vec<String>,
    pub frequencies: Vec<u64>,
    pub merges: Vec<Merge>,
    #[serde(default)]
    pub corpus_tag: String,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Number of top-level clusters (1 for a full tree).
    pub fn n_roots(&self) -> usize {
        self.leaves.len() - self.merges.len()
    }

    /// Flat clustering obtained by applying only the first `n - k` merges.
    /// Clusters are numbered by first appearance in leaf order.
    pub fn cut(&self, k: usize) -> Result<WordClustering> {
        let n = self.n_leaves();
        if k < self.n_roots().max(1) || k > n {
            return Err(Error::Bounds(format!(
                "cannot cut {n} leaves with {} roots into {k} clusters",
                self.n_roots()
            )));
        }
        let mut parent: Vec<usize> = (0..n + self.merges.len()).collect();
        for (t, m) in self.merges.iter().take(n - k).enumerate() {
            parent[m.a as usize] = n + t;
            parent[m.b as usize] = n + t;
        }
        let groups: Vec<usize> = (0..n)
            .map(|mut x| {
                while parent[x] != x {
                    x = parent[x];
                }
                x
            })
            .collect();
        WordClustering::from_groups(
            self.leaves.clone(),
            &groups,
            Provenance {
                algorithm: ClusterAlgorithm::Brown,
                corpus_tag: self.corpus_tag.clone(),
            },
        )
    }

    /// Bit-string path of every leaf from the top of the tree, `a` side `0`.
    /// For a forest, paths start with the root's ordinal in fixed-width binary.
    pub fn paths(&self) -> Vec<String> {
        let n = self.n_leaves();
        let total = n + self.merges.len();
        let mut children: Vec<Option<(usize, usize)>> = vec![None; total];
        let mut has_parent = vec![false; total];
        for (t, m) in self.merges.iter().enumerate() {
            children[n + t] = Some((m.a as usize, m.b as usize));
            has_parent[m.a as usize] = true;
            has_parent[m.b as usize] = true;
        }
        let roots: Vec<usize> = (0..total).filter(|&c| !has_parent[c]).collect();
        let width = if roots.len() <= 1 {
            0
        } else {
            (usize::BITS - (roots.len() - 1).leading_zeros()) as usize
        };
        let mut paths = vec![String::new(); n];
        for (ordinal, &root) in roots.iter().enumerate() {
            let prefix = if width == 0 {
                String::new()
            } else {
                format!("{ordinal:0width$b}")
            };
            let mut stack = vec![(root, prefix)];
            while let Some((node, path)) = stack.pop() {
                match children[node] {
                    Some((a, b)) => {
                        stack.push((b, format!("{path}1")));
                        stack.push((a, format!("{path}0")));
                    }
                    None => paths[node] = path,
                }
            }
        }
        paths
    }

    /// `binary-path<TAB>word<TAB>frequency` lines in leaf order.
    pub fn paths_tsv(&self) -> String {
        let mut out = String::new();
        for ((path, word), freq) in self.paths().iter().zip(&self.leaves).zip(&self.frequencies) {
            let _ = writeln!(out, "{path}\t{word}\t{freq}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dendrogram serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: Dendrogram = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let n = d.leaves.len();
        if d.frequencies.len() != n || d.merges.len() >= n.max(1) {
            return Err(Error::Format("inconsistent dendrogram sizes".into()));
        }
        let mut used = vec![false; n + d.merges.len()];
        for (t, m) in d.merges.iter().enumerate() {
            let (a, b) = (m.a as usize, m.b as usize);
            if a >= b || b >= n + t || used[a] || used[b] {
                return Err(Error::Format(format!("invalid merge {t}: ({a}, {b})")));
            }
            used[a] = true;
            used[b] = true;
        }
        Ok(d)
    }
}

/// Cluster-level bigram counts under the current clustering.
#[derive(Clone)]
struct ClusterTable {
    total: f64,
    right: Vec<BTreeMap<u32, f64>>,
    left: Vec<BTreeMap<u32, f64>>,
    left_marginal: Vec<f64>,
    right_marginal: Vec<f64>,
    alive: Vec<bool>,
}

impl ClusterTable {
    fn new(counts: &BigramCounts) -> Self {
        let n = counts.words.len();
        let cap = 2 * n;
        let mut right = vec![BTreeMap::new(); cap];
        let mut left = vec![BTreeMap::new(); cap];
        let mut left_marginal = vec![0.0; cap];
        let mut right_marginal = vec![0.0; cap];
        let mut total = 0.0;
        for (&(a, b), &c) in &counts.bigram {
            let c = c as f64;
            right[a as usize].insert(b, c);
            left[b as usize].insert(a, c);
            left_marginal[a as usize] += c;
            right_marginal[b as usize] += c;
            total += c;
        }
        let mut alive = vec![false; cap];
        alive[..n].fill(true);
        ClusterTable {
            total,
            right,
            left,
            left_marginal,
            right_marginal,
            alive,
        }
    }

    fn count(&self, a: u32, b: u32) -> f64 {
        self.right[a as usize].get(&b).copied().unwrap_or(0.0)
    }

    /// AMI term for a joint count with the given left/right marginal counts.
    fn term(&self, joint: f64, left: f64, right: f64) -> f64 {
        if joint <= 0.0 {
            0.0
        } else {
            joint / self.total * (joint * self.total / (left * right)).log2()
        }
    }

    fn q(&self, a: u32, b: u32) -> f64 {
        self.term(
            self.count(a, b),
            self.left_marginal[a as usize],
            self.right_marginal[b as usize],
        )
    }

    /// Sum of every AMI term that involves cluster `x`.
    fn contribution(&self, x: u32) -> f64 {
        let out: f64 = self.right[x as usize].keys().map(|&d| self.q(x, d)).sum();
        let inc: f64 = self.left[x as usize].keys().map(|&d| self.q(d, x)).sum();
        out + inc - self.q(x, x)
    }

    /// AMI terms between the hypothetical union of `a` and `b` and cluster `c`
    /// (both directions), for `c` outside the union.
    fn union_terms_with(&self, a: u32, b: u32, c: u32) -> f64 {
        let lm = self.left_marginal[a as usize] + self.left_marginal[b as usize];
        let rm = self.right_marginal[a as usize] + self.right_marginal[b as usize];
        self.term(
            self.count(a, c) + self.count(b, c),
            lm,
            self.right_marginal[c as usize],
        ) + self.term(
            self.count(c, a) + self.count(c, b),
            self.left_marginal[c as usize],
            rm,
        )
    }

    /// Exact AMI loss of merging `a` and `b`, from the current counts.
    fn merge_loss(&self, a: u32, b: u32) -> f64 {
        let before = self.contribution(a) + self.contribution(b) - self.q(a, b) - self.q(b, a);
        let lm = self.left_marginal[a as usize] + self.left_marginal[b as usize];
        let rm = self.right_marginal[a as usize] + self.right_marginal[b as usize];
        let self_count = self.count(a, a) + self.count(a, b) + self.count(b, a) + self.count(b, b);
        let mut after = self.term(self_count, lm, rm);

        let out = union_keys(&self.right[a as usize], &self.right[b as usize]);
        for c in out.into_iter().filter(|&c| c != a && c != b) {
            after += self.term(
                self.count(a, c) + self.count(b, c),
                lm,
                self.right_marginal[c as usize],
            );
        }
        let inc = union_keys(&self.left[a as usize], &self.left[b as usize]);
        for c in inc.into_iter().filter(|&c| c != a && c != b) {
            after += self.term(
                self.count(c, a) + self.count(c, b),
                self.left_marginal[c as usize],
                rm,
            );
        }
        before - after
    }

    fn ami(&self) -> f64 {
        let mut sum = 0.0;
        for (a, row) in self.right.iter().enumerate() {
            if !self.alive[a] {
                continue;
            }
            for &b in row.keys() {
                sum += self.q(a as u32, b);
            }
        }
        sum
    }

    /// Merges `i` and `j` into the new cluster `k`.
    fn merge(&mut self, i: u32, j: u32, k: u32) {
        let (iu, ju, ku) = (i as usize, j as usize, k as usize);
        let remap = |c: u32| if c == i || c == j { k } else { c };

        let mut right = BTreeMap::new();
        for (&c, &n) in self.right[iu].iter().chain(self.right[ju].iter()) {
            *right.entry(remap(c)).or_insert(0.0) += n;
        }
        let mut left = BTreeMap::new();
        for (&c, &n) in self.left[iu].iter().chain(self.left[ju].iter()) {
            *left.entry(remap(c)).or_insert(0.0) += n;
        }
        for (&d, &n) in &right {
            if d != k {
                let row = &mut self.left[d as usize];
                row.remove(&i);
                row.remove(&j);
                row.insert(k, n);
            }
        }
        for (&d, &n) in &left {
            if d != k {
                let row = &mut self.right[d as usize];
                row.remove(&i);
                row.remove(&j);
                row.insert(k, n);
            }
        }
        self.right[ku] = right;
        self.left[ku] = left;
        self.left_marginal[ku] = self.left_marginal[iu] + self.left_marginal[ju];
        self.right_marginal[ku] = self.right_marginal[iu] + self.right_marginal[ju];
        for x in [iu, ju] {
            self.right[x].clear();
            self.left[x].clear();
            self.left_marginal[x] = 0.0;
            self.right_marginal[x] = 0.0;
            self.alive[x] = false;
        }
        self.alive[ku] = true;
    }
}

fn union_keys(a: &BTreeMap<u32, f64>, b: &BTreeMap<u32, f64>) -> Vec<u32> {
    let mut keys: Vec<u32> = a.keys().chain(b.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    keys
}

/// Active clusters and their pairwise merge costs, indexed by slot.
struct Window {
    slots: Vec<Option<u32>>,
    cost: Vec<f64>,
    cap: usize,
}

impl Window {
    fn new(cap: usize) -> Self {
        Window {
            slots: vec![None; cap],
            cost: vec![0.0; cap * cap],
            cap,
        }
    }

    fn occupied(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(s, c)| c.map(|c| (s, c)))
    }

    fn len(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    fn set_cost(&mut self, s: usize, t: usize, v: f64) {
        self.cost[s * self.cap + t] = v;
        self.cost[t * self.cap + s] = v;
    }

    fn get_cost(&self, s: usize, t: usize) -> f64 {
        self.cost[s * self.cap + t]
    }

    fn insert(&mut self, table: &ClusterTable, cluster: u32, exact: bool) {
        let slot = self
            .slots
            .iter()
            .position(Option::is_none)
            .expect("window has a free slot");
        self.slots[slot] = Some(cluster);
        let others: Vec<(usize, u32)> = self.occupied().filter(|&(s, _)| s != slot).collect();
        for (s, c) in others {
            let v = pair_cost(table, cluster, c, exact);
            self.set_cost(slot, s, v);
        }
    }

    /// Slots of the cheapest pair; near-ties go to the smallest cluster-id pair.
    fn best_pair(&self) -> (usize, usize) {
        let active: Vec<(usize, u32)> = self.occupied().collect();
        let mut min = f64::INFINITY;
        for (x, &(s, _)) in active.iter().enumerate() {
            for &(t, _) in &active[x + 1..] {
                min = min.min(self.get_cost(s, t));
            }
        }
        let mut best: Option<((u32, u32), (usize, usize))> = None;
        for (x, &(s, cs)) in active.iter().enumerate() {
            for &(t, ct) in &active[x + 1..] {
                if self.get_cost(s, t) <= min + TIE_EPSILON {
                    let key = (cs.min(ct), cs.max(ct));
                    if best.is_none_or(|(k, _)| key < k) {
                        best = Some((key, (s, t)));
                    }
                }
            }
        }
        best.expect("window holds at least two clusters").1
    }
}

fn pair_cost(table: &ClusterTable, a: u32, b: u32, exact: bool) -> f64 {
    if exact {
        let mut merged = table.clone();
        let before = table.ami();
        merged.merge(a, b, table.alive.len() as u32 - 1);
        before - merged.ami()
    } else {
        table.merge_loss(a, b)
    }
}

/// Terms of the cached cost of merging `a` and `b` that involve cluster `c`.
fn cost_terms_with(table: &ClusterTable, a: u32, b: u32, c: u32) -> f64 {
    table.q(a, c) + table.q(c, a) + table.q(b, c) + table.q(c, b) - table.union_terms_with(a, b, c)
}

pub fn brown_cluster(counts: &BigramCounts, config: &BrownConfig) -> Result<Dendrogram> {
    let n = counts.words.len();
    if config.window < 2 {
        return Err(Error::Parameter(format!(
            "window must be at least 2, got {}",
            config.window
        )));
    }
    if n < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 words to cluster, got {n}"
        )));
    }
    let mut table = ClusterTable::new(counts);
    // Exact mode needs one spare id as a scratch target for trial merges.
    if config.exact {
        table.right.push(BTreeMap::new());
        table.left.push(BTreeMap::new());
        table.left_marginal.push(0.0);
        table.right_marginal.push(0.0);
        table.alive.push(false);
    }
    let mut window = Window::new(config.window + 1);
    let initial = config.window.min(n);
    for w in 0..initial {
        window.insert(&table, w as u32, config.exact);
    }
    let mut merges = Vec::with_capacity(n - 1);
    let mut next_word = initial;
    loop {
        if next_word < n {
            window.insert(&table, next_word as u32, config.exact);
            next_word += 1;
            if window.len() <= config.window {
                continue;
            }
        } else if !config.full_tree || window.len() < 2 {
            break;
        }
        let new_id = (n + merges.len()) as u32;
        merges.push(merge_best(&mut table, &mut window, new_id, config.exact));
        log::trace!("brown merge {} of {}", merges.len(), n - 1);
    }
    Ok(Dendrogram {
        leaves: counts.words.clone(),
        frequencies: counts.unigram.clone(),
        merges,
        corpus_tag: String::new(),
    })
}

fn merge_best(table: &mut ClusterTable, window: &mut Window, k: u32, exact: bool) -> Merge {
    let (si, sj) = window.best_pair();
    let (i, j) = (window.slots[si].unwrap(), window.slots[sj].unwrap());
    let loss = if exact {
        window.get_cost(si, sj)
    } else {
        table.merge_loss(i, j)
    };
    let others: Vec<(usize, u32)> = window
        .occupied()
        .filter(|&(s, _)| s != si && s != sj)
        .collect();

    if exact {
        table.merge(i, j, k);
        window.slots[si] = None;
        window.slots[sj] = None;
        for (x, &(s, a)) in others.iter().enumerate() {
            for &(t, b) in &others[x + 1..] {
                let v = pair_cost(table, a, b, true);
                window.set_cost(s, t, v);
            }
        }
    } else {
        let mut old = Vec::with_capacity(others.len() * others.len() / 2);
        for (x, &(_, a)) in others.iter().enumerate() {
            for &(_, b) in &others[x + 1..] {
                old.push(cost_terms_with(table, a, b, i) + cost_terms_with(table, a, b, j));
            }
        }
        table.merge(i, j, k);
        window.slots[si] = None;
        window.slots[sj] = None;
        let mut idx = 0;
        for (x, &(s, a)) in others.iter().enumerate() {
            for &(t, b) in &others[x + 1..] {
                let delta = cost_terms_with(table, a, b, k) - old[idx];
                idx += 1;
                let v = window.get_cost(s, t) + delta;
                window.set_cost(s, t, v);
            }
        }
    }
    window.insert(table, k, exact);
    let (a, b) = (i.min(j), i.max(j));
    Merge {
        a,
        b,
        ami_loss: loss.max(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusKind, Document};
    use proptest::prelude::*;

    fn seqs(docs: &[&str]) -> Vec<Vec<String>> {
        docs.iter()
            .map(|d| d.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    fn singletons(counts: &BigramCounts) -> WordClustering {
        let groups: Vec<usize> = (0..counts.words().len()).collect();
        WordClustering::from_groups(
            counts.words().to_vec(),
            &groups,
            Provenance {
                algorithm: ClusterAlgorithm::External,
                corpus_tag: String::new(),
            },
        )
        .unwrap()
    }

    #[test]
    fn counts_within_documents_only() {
        let c = BigramCounts::from_sequences(&seqs(&["a b a"])).unwrap();
        assert_eq!(c.words(), ["a", "b"]);
        assert_eq!(c.unigram(), &[2, 1]);
        assert_eq!(c.bigram_count("a", "b"), 1);
        assert_eq!(c.bigram_count("b", "a"), 1);
        assert_eq!(c.total_tokens(), 3);

        let c = BigramCounts::from_sequences(&seqs(&["a", "b"])).unwrap();
        assert!(c.bigrams().is_empty());
    }

    #[test]
    fn oov_tokens_dropped_before_pairing() {
        let docs = vec![Document::unlabeled("1", "").with_tokens(["a", "x", "b"])];
        let corpus = Corpus::new(docs, CorpusKind::Unlabeled).unwrap();
        let vocab = Vocabulary::from_counts([("a", 1), ("b", 1)], 1);
        let c = count_bigrams(&corpus, &vocab).unwrap();
        assert_eq!(c.bigrams().len(), 1);
        assert_eq!(c.bigram_count("a", "b"), 1);
        assert_eq!(c.total_tokens(), 2);

        let empty = Corpus::new(
            vec![Document::unlabeled("1", "").with_tokens(["zz"])],
            CorpusKind::Unlabeled,
        )
        .unwrap();
        assert!(matches!(
            count_bigrams(&empty, &vocab),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn ami_of_alternating_corpus() {
        // "a b a b a b": bigrams a→b ×3, b→a ×2; T = 5.
        // p(a,b) = 3/5 with marginals pl(a)=3/5, pr(b)=3/5 → 3/5·log2(5/3)
        // p(b,a) = 2/5 with marginals pl(b)=2/5, pr(a)=2/5 → 2/5·log2(5/2)
        let c = BigramCounts::from_sequences(&seqs(&["a b a b a b"])).unwrap();
        let expected = 0.6 * (5.0f64 / 3.0).log2() + 0.4 * (2.5f64).log2();
        let got = average_mutual_information(&c, &singletons(&c));
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");

        let one =
            WordClustering::new(c.words().to_vec(), vec![0, 0], singletons(&c).provenance).unwrap();
        assert_eq!(average_mutual_information(&c, &one), 0.0);
    }

    #[test]
    fn ami_zero_under_independence() {
        // Every left word followed equally often by every right word.
        let c = BigramCounts::from_sequences(&seqs(&["x u", "x v", "y u", "y v"])).unwrap();
        assert!(average_mutual_information(&c, &singletons(&c)).abs() < 1e-15);
    }

    #[test]
    fn two_words_single_forced_merge() {
        let c = BigramCounts::from_sequences(&seqs(&["a b a b a b"])).unwrap();
        let d = brown_cluster(&c, &BrownConfig::default()).unwrap();
        assert_eq!(d.merges.len(), 1);
        let ami = average_mutual_information(&c, &singletons(&c));
        assert!((d.merges[0].ami_loss - ami).abs() < 1e-12);
        assert_eq!(d.paths(), vec!["0", "1"]);
    }

    fn class_corpus() -> BigramCounts {
        let (a, b) = (["a1", "a2"], ["b1", "b2"]);
        let mut docs = Vec::new();
        for x in a {
            for y in b {
                docs.push(format!("{x} {y}"));
                docs.push(format!("{y} {x}"));
            }
        }
        let docs: Vec<&str> = docs.iter().map(String::as_str).collect();
        BigramCounts::from_sequences(&seqs(&docs)).unwrap()
    }

    #[test]
    fn interchangeable_words_merge_first() {
        let c = class_corpus();
        let d = brown_cluster(&c, &BrownConfig::default()).unwrap();
        let name = |id: u32| c.words()[id as usize].as_str();
        let first: Vec<[&str; 2]> = d.merges[..2]
            .iter()
            .map(|m| {
                let mut p = [name(m.a), name(m.b)];
                p.sort();
                p
            })
            .collect();
        assert!(first.contains(&["a1", "a2"]));
        assert!(first.contains(&["b1", "b2"]));

        let two = d.cut(2).unwrap();
        assert_eq!(two.cluster_of("a1"), two.cluster_of("a2"));
        assert_eq!(two.cluster_of("b1"), two.cluster_of("b2"));
        assert_ne!(two.cluster_of("a1"), two.cluster_of("b1"));
    }

    #[test]
    fn cut_bounds_and_extremes() {
        let c = class_corpus();
        let d = brown_cluster(&c, &BrownConfig::default()).unwrap();
        let all = d.cut(4).unwrap();
        assert_eq!(all.assignments(), &[0, 1, 2, 3]);
        assert_eq!(d.cut(1).unwrap().assignments(), &[0, 0, 0, 0]);
        assert!(matches!(d.cut(0), Err(Error::Bounds(_))));
        assert!(matches!(d.cut(5), Err(Error::Bounds(_))));
    }

    #[test]
    fn window_parameter_checked() {
        let c = class_corpus();
        let cfg = BrownConfig {
            window: 1,
            ..Default::default()
        };
        assert!(matches!(brown_cluster(&c, &cfg), Err(Error::Parameter(_))));
    }

    #[test]
    fn partial_tree_keeps_window_roots() {
        let c =
            BigramCounts::from_sequences(&seqs(&["a b c d e a b c", "d e f a b", "c d e f f a"]))
                .unwrap();
        let cfg = BrownConfig {
            window: 3,
            full_tree: false,
            exact: false,
        };
        let d = brown_cluster(&c, &cfg).unwrap();
        assert_eq!(d.n_roots(), 3);
        assert_eq!(d.cut(3).unwrap().k(), 3);
        assert!(d.cut(2).is_err());
        let paths = d.paths();
        assert!(paths.iter().all(|p| p.len() >= 2));
        let mut unique = paths.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), paths.len());
    }

    #[test]
    fn dendrogram_json_round_trip() {
        let d = brown_cluster(&class_corpus(), &BrownConfig::default()).unwrap();
        let back = Dendrogram::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d);
        let mut bad = d.clone();
        bad.merges[1].a = bad.merges[0].a;
        assert!(Dendrogram::from_json(&bad.to_json()).is_err());
    }

    fn random_docs() -> impl Strategy<Value = Vec<Vec<String>>> {
        proptest::collection::vec(
            proptest::collection::vec(
                proptest::sample::select(vec!["a", "b", "c", "d", "e", "f", "g", "h"]),
                1..10,
            ),
            1..12,
        )
        .prop_map(|docs| {
            docs.into_iter()
                .map(|d| d.into_iter().map(str::to_string).collect())
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn incremental_matches_exact(docs in random_docs(), window in 2usize..6) {
            let c = BigramCounts::from_sequences(&docs).unwrap();
            prop_assume!(c.words().len() >= 2);
            let fast = brown_cluster(&c, &BrownConfig { window, full_tree: true, exact: false }).unwrap();
            let slow = brown_cluster(&c, &BrownConfig { window, full_tree: true, exact: true }).unwrap();
            prop_assert_eq!(fast.merges.len(), c.words().len() - 1);
            for (f, s) in fast.merges.iter().zip(&slow.merges) {
                prop_assert_eq!((f.a, f.b), (s.a, s.b));
                prop_assert!((f.ami_loss - s.ami_loss).abs() < 1e-9);
            }
        }

        #[test]
        fn cut_yields_exactly_k_clusters(docs in random_docs(), k in 1usize..9) {
            let c = BigramCounts::from_sequences(&docs).unwrap();
            prop_assume!(c.words().len() >= 2 && k <= c.words().len());
            let d = brown_cluster(&c, &BrownConfig::default()).unwrap();
            let cut = d.cut(k).unwrap();
            prop_assert_eq!(cut.k(), k);
            prop_assert!(cut.members().iter().all(|m| !m.is_empty()));
        }
    }
}
