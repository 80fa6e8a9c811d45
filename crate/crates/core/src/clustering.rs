//! Flat word clusterings and the `cluster_id<TAB>word` file format.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::hashing::sha256_hex;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterAlgorithm {
    Brown,
    Kmeans,
    /// Read from a cluster file of unknown origin.
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub algorithm: ClusterAlgorithm,
    pub corpus_tag: String,
}

/// Assignment of words to dense cluster ids `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WordClustering {
    words: Vec<String>,
    cluster_of: Vec<u32>,
    k: usize,
    index: HashMap<String, usize>,
    pub provenance: Provenance,
}

impl WordClustering {
    /// Every id in `0..k` must be used; words must be distinct.
    pub fn new(words: Vec<String>, cluster_of: Vec<u32>, provenance: Provenance) -> Result<Self> {
        if words.len() != cluster_of.len() {
            return Err(Error::Format(format!(
                "{} words but {} assignments",
                words.len(),
                cluster_of.len()
            )));
        }
        let k = cluster_of
            .iter()
            .map(|&c| c as usize + 1)
            .max()
            .unwrap_or(0);
        let mut used = vec![false; k];
        for &c in &cluster_of {
            used[c as usize] = true;
        }
        if let Some(missing) = used.iter().position(|u| !u) {
            return Err(Error::Format(format!(
                "cluster ids are not dense: id {missing} is unused"
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Format(format!("word {w:?} assigned twice")));
            }
        }
        Ok(WordClustering {
            words,
            cluster_of,
            k,
            index,
            provenance,
        })
    }

    /// Relabels arbitrary group labels to `0..k` by order of first appearance.
    pub fn from_groups(
        words: Vec<String>,
        groups: &[usize],
        provenance: Provenance,
    ) -> Result<Self> {
        let mut relabel: HashMap<usize, u32> = HashMap::new();
        let cluster_of = groups
            .iter()
            .map(|g| {
                let next = relabel.len() as u32;
                *relabel.entry(*g).or_insert(next)
            })
            .collect();
        Self::new(words, cluster_of, provenance)
    }

    pub fn k(&self) -> usize {
        self.k
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

    pub fn assignments(&self) -> &[u32] {
        &self.cluster_of
    }

    pub fn cluster_of(&self, word: &str) -> Option<u32> {
        self.index.get(word).map(|&i| self.cluster_of[i])
    }

    /// Members of each cluster, in word order.
    pub fn members(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.k];
        for (w, &c) in self.words.iter().zip(&self.cluster_of) {
            out[c as usize].push(w.as_str());
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (w, c) in self.words.iter().zip(&self.cluster_of) {
            let _ = writeln!(out, "{c}\t{w}");
        }
        out
    }

    /// Hash of the canonical TSV rendering; independent of file paths.
    pub fn content_hash(&self) -> String {
        sha256_hex(self.to_tsv().as_bytes())
    }

    pub fn parse_tsv(text: &str, provenance: Provenance) -> Result<Self> {
        let mut words = Vec::new();
        let mut ids = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (id, word) = line.split_once('\t').ok_or_else(|| {
                Error::Format(format!("line {}: expected cluster_id<TAB>word", lineno + 1))
            })?;
            let id: u32 = id.trim().parse().map_err(|_| {
                Error::Format(format!("line {}: bad cluster id {id:?}", lineno + 1))
            })?;
            words.push(word.to_string());
            ids.push(id);
        }
        Self::new(words, ids, provenance)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(
            &text,
            Provenance {
                algorithm: ClusterAlgorithm::External,
                corpus_tag: path.display().to_string(),
            },
        )
    }
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let pairs = |c: u64| (c * c.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let row_sum: f64 = rows.values().map(|&c| pairs(c)).sum();
    let col_sum: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n as u64);
    let expected = row_sum * col_sum / total;
    let max = 0.5 * (row_sum + col_sum);
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
