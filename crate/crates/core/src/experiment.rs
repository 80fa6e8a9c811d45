//! AUC and the training-size × cluster-count sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brown::Dendrogram;
use crate::clustering::WordClustering;
use crate::corpus::{subsample, Corpus};
use crate::embed::{load_pretrained, EmbeddingMatrix};
use crate::features::{featurize_corpus, pmi_scores, select_top_k, FeatureSpec};
use crate::kmeans::{kmeans_cluster, KmeansConfig};
use crate::model::{cv_select_lambda, BinaryMatrix, CvOptions, DEFAULT_LAMBDA_GRID};
use crate::{Error, Result};

/// Rank (Mann–Whitney) AUC with midranks for ties.
///
/// Twice the U statistic is accumulated as an integer, so the result is the
/// correctly rounded value of `(concordant + ties / 2) / (n_pos · n_neg)`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Class(
            "AUC needs positive and negative examples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum over positives of twice their 1-based midrank.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let twice_mid = (start + 1 + end) as u128;
        let pos = order[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        twice_rank_sum += pos * twice_mid;
        start = end;
    }
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Where a scheme's features come from, as written in a grid file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    /// PMI-selected top-k words, refit on every resample.
    Bow,
    /// Cuts of a saved Brown dendrogram (JSON).
    Dendrogram { path: PathBuf },
    /// k-means over a text-format embedding file.
    Embeddings {
        path: PathBuf,
        #[serde(default)]
        kmeans: KmeansConfig,
    },
    /// One precomputed cluster file per k.
    ClusterFiles { files: BTreeMap<usize, PathBuf> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub name: String,
    pub source: SourceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentGrid {
    pub train_sizes: Vec<usize>,
    pub k_values: Vec<usize>,
    pub schemes: Vec<SchemeConfig>,
    pub resamples: usize,
    pub base_seed: u64,
    pub lambda_grid: Vec<f64>,
    /// k-fold cross-validation for λ; leave-one-out when absent.
    pub cv_folds: Option<usize>,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            train_sizes: vec![20, 50, 100, 200, 500, 1000],
            k_values: vec![50, 100, 200, 500, 1000, 2000],
            schemes: vec![SchemeConfig {
                name: "bow".into(),
                source: SourceConfig::Bow,
            }],
            resamples: 10,
            base_seed: 0,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            cv_folds: None,
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        self.validate_protocol()?;
        if self.schemes.is_empty() {
            return Err(Error::Parameter("schemes must be non-empty".into()));
        }
        let mut names: Vec<&str> = self.schemes.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Parameter("scheme names must be unique".into()));
        }
        Ok(())
    }

    fn validate_protocol(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        if self.train_sizes.is_empty() || self.k_values.is_empty() {
            return bad("train_sizes and k_values must be non-empty");
        }
        if self.resamples < 1 {
            return bad("resamples must be at least 1");
        }
        if self.train_sizes.contains(&0) || self.k_values.contains(&0) {
            return bad("sizes and k values must be positive");
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|&l| !(l > 0.0)) {
            return bad("lambda grid must be non-empty and positive");
        }
        Ok(())
    }
}

/// A scheme with its artifacts loaded.
#[derive(Debug, Clone)]
pub enum Source {
    Bow,
    Dendrogram(Dendrogram),
    Embeddings {
        matrix: EmbeddingMatrix,
        kmeans: KmeansConfig,
    },
    Fixed(BTreeMap<usize, WordClustering>),
}

#[derive(Debug, Clone)]
pub struct Scheme {
    pub name: String,
    pub source: Source,
}

impl Scheme {
    pub fn bow(name: impl Into<String>) -> Self {
        Scheme {
            name: name.into(),
            source: Source::Bow,
        }
    }

    /// Checks that every k can be produced without doing any clustering work.
    fn check_k(&self, k: usize) -> Result<()> {
        let fail = |why: String| Err(Error::Resolution(format!("scheme {}: {why}", self.name)));
        match &self.source {
            Source::Bow => Ok(()),
            Source::Dendrogram(d) => {
                if k < d.n_roots().max(1) || k > d.n_leaves() {
                    return fail(format!("dendrogram cannot be cut into {k} clusters"));
                }
                Ok(())
            }
            Source::Embeddings { matrix, .. } => {
                if k > matrix.len() {
                    return fail(format!("{k} clusters exceed the {} vectors", matrix.len()));
                }
                Ok(())
            }
            Source::Fixed(files) => {
                if !files.contains_key(&k) {
                    return fail(format!("no cluster file for k = {k}"));
                }
                Ok(())
            }
        }
    }

    fn clustering(&self, k: usize) -> Result<Option<WordClustering>> {
        Ok(match &self.source {
            Source::Bow => None,
            Source::Dendrogram(d) => Some(d.cut(k)?),
            Source::Embeddings { matrix, kmeans } => {
                Some(kmeans_cluster(matrix, &KmeansConfig { k, ..*kmeans })?)
            }
            Source::Fixed(files) => Some(files[&k].clone()),
        })
    }
}

fn resolution(path: &Path, e: Error) -> Error {
    Error::Resolution(format!("{}: {e}", path.display()))
}

/// Loads every artifact named by the grid; relative paths resolve against
/// `base_dir`.
pub fn resolve_schemes(grid: &ExperimentGrid, base_dir: &Path) -> Result<Vec<Scheme>> {
    grid.schemes
        .iter()
        .map(|cfg| {
            let source = match &cfg.source {
                SourceConfig::Bow => Source::Bow,
                SourceConfig::Dendrogram { path } => {
                    let path = base_dir.join(path);
                    let text = fs::read_to_string(&path)
                        .map_err(|e| resolution(&path, Error::io(&path, e)))?;
                    Source::Dendrogram(
                        Dendrogram::from_json(&text).map_err(|e| resolution(&path, e))?,
                    )
                }
                SourceConfig::Embeddings { path, kmeans } => {
                    let path = base_dir.join(path);
                    Source::Embeddings {
                        matrix: load_pretrained(&path).map_err(|e| resolution(&path, e))?,
                        kmeans: *kmeans,
                    }
                }
                SourceConfig::ClusterFiles { files } => Source::Fixed(
                    files
                        .iter()
                        .map(|(&k, p)| {
                            let path = base_dir.join(p);
                            WordClustering::load(&path)
                                .map(|c| (k, c))
                                .map_err(|e| resolution(&path, e))
                        })
                        .collect::<Result<_>>()?,
                ),
            };
            Ok(Scheme {
                name: cfg.name.clone(),
                source,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultCell {
    pub scheme: String,
    pub train_size: usize,
    pub k: usize,
    pub mean_auc: f64,
    /// Sample standard deviation; 0 for a single resample.
    pub std_auc: f64,
    pub per_seed_auc: Vec<f64>,
    /// Seed used for each resample, after redraws.
    pub seeds: Vec<u64>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Protocol settings shared by every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub resamples: usize,
    pub base_seed: u64,
    pub lambda_grid: Vec<f64>,
    pub cv_folds: Option<usize>,
}

impl From<&ExperimentGrid> for Protocol {
    fn from(g: &ExperimentGrid) -> Self {
        Protocol {
            resamples: g.resamples,
            base_seed: g.base_seed,
            lambda_grid: g.lambda_grid.clone(),
            cv_folds: g.cv_folds,
        }
    }
}

/// Fixed features for a cluster scheme at one k.
struct Prepared {
    spec: FeatureSpec,
    test: BinaryMatrix,
}

fn prepare(clustering: WordClustering, test: &Corpus) -> Result<Prepared> {
    let spec = FeatureSpec::clusters(clustering);
    let test = featurize_corpus(test, &spec)?;
    Ok(Prepared { spec, test })
}

fn evaluate_cell(
    train: &Corpus,
    test: &Corpus,
    test_labels: &[bool],
    prepared: Option<&Prepared>,
    scheme: &str,
    size: usize,
    k: usize,
    protocol: &Protocol,
) -> Result<ResultCell> {
    let max_draws = protocol.resamples * 1000;
    let mut per_seed = Vec::with_capacity(protocol.resamples);
    let mut seeds = Vec::with_capacity(protocol.resamples);
    let mut seed = protocol.base_seed;
    let mut draws = 0;
    while per_seed.len() < protocol.resamples {
        if draws == max_draws {
            return Err(Error::Class(format!(
                "no two-class subsample of size {size} after {max_draws} draws"
            )));
        }
        draws += 1;
        let sub = subsample(train, size, seed)?;
        if !sub.has_both_classes() {
            log::info!("{scheme} size {size} k {k}: seed {seed} drew one class, redrawing");
            seed += 1;
            continue;
        }
        let labels = sub.labels()?;
        let bow;
        let (spec, test_x) = match prepared {
            Some(p) => (&p.spec, &p.test),
            None => {
                let spec = select_top_k(&pmi_scores(&sub)?, k)?.spec;
                let x = featurize_corpus(test, &spec)?;
                bow = (spec, x);
                (&bow.0, &bow.1)
            }
        };
        let x = featurize_corpus(&sub, spec)?;
        let (_, model) = cv_select_lambda(
            &x,
            &labels,
            &protocol.lambda_grid,
            CvOptions {
                folds: protocol.cv_folds,
                seed,
            },
        )?;
        let model = model.expect("subsample has both classes");
        per_seed.push(auc(&model.margins(test_x)?, test_labels)?);
        seeds.push(seed);
        seed += 1;
    }
    let (mean_auc, std_auc) = mean_std(&per_seed);
    Ok(ResultCell {
        scheme: scheme.to_string(),
        train_size: size,
        k,
        mean_auc,
        std_auc,
        per_seed_auc: per_seed,
        seeds,
    })
}

fn check_inputs(train: &Corpus, test: &Corpus, sizes: &[usize]) -> Result<Vec<bool>> {
    if !train.is_tokenized() || !test.is_tokenized() {
        return Err(Error::NotTokenized);
    }
    train.labels()?;
    if let Some(&s) = sizes.iter().find(|&&s| s > train.len()) {
        return Err(Error::Bounds(format!(
            "train size {s} exceeds the {} training documents",
            train.len()
        )));
    }
    let labels = test.labels()?;
    if !test.has_both_classes() {
        return Err(Error::Class("test set must contain both classes".into()));
    }
    Ok(labels)
}

/// One cell: `resamples` subsamples of `size` training documents, λ chosen by
/// cross-validation on each, AUC on the full test set.
pub fn run_cell(
    train: &Corpus,
    test: &Corpus,
    scheme: &Scheme,
    size: usize,
    k: usize,
    protocol: &Protocol,
) -> Result<ResultCell> {
    let wrap = |e: Error| Error::Cell {
        scheme: scheme.name.clone(),
        size,
        k,
        source: Box::new(e),
    };
    let test_labels = check_inputs(train, test, &[size]).map_err(wrap)?;
    scheme.check_k(k)?;
    let prepared = scheme
        .clustering(k)
        .and_then(|c| c.map(|c| prepare(c, test)).transpose())
        .map_err(wrap)?;
    evaluate_cell(
        train,
        test,
        &test_labels,
        prepared.as_ref(),
        &scheme.name,
        size,
        k,
        protocol,
    )
    .map_err(wrap)
}

/// All cells of a sweep, ordered by scheme (grid order), size, then k.
#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub schemes: Vec<String>,
    pub cells: Vec<ResultCell>,
}

pub fn run_grid(
    train: &Corpus,
    test: &Corpus,
    grid: &ExperimentGrid,
    schemes: &[Scheme],
) -> Result<GridReport> {
    grid.validate_protocol()?;
    if schemes.is_empty() {
        return Err(Error::Parameter("no schemes to evaluate".into()));
    }
    let mut names: Vec<&str> = schemes.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Parameter("scheme names must be unique".into()));
    }
    let test_labels = check_inputs(train, test, &grid.train_sizes)?;
    for scheme in schemes {
        for &k in &grid.k_values {
            scheme.check_k(k)?;
        }
    }
    let protocol = Protocol::from(grid);

    // Clusterings depend only on (scheme, k); build them before any training.
    let jobs: Vec<(usize, usize)> = (0..schemes.len())
        .flat_map(|s| grid.k_values.iter().map(move |&k| (s, k)))
        .collect();
    let prepared: Vec<Option<Prepared>> = jobs
        .par_iter()
        .map(|&(s, k)| {
            schemes[s]
                .clustering(k)
                .and_then(|c| c.map(|c| prepare(c, test)).transpose())
                .map_err(|e| Error::Cell {
                    scheme: schemes[s].name.clone(),
                    size: 0,
                    k,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;

    let mut cells_todo = Vec::new();
    for (s, scheme) in schemes.iter().enumerate() {
        for &size in &grid.train_sizes {
            for (ki, &k) in grid.k_values.iter().enumerate() {
                cells_todo.push((s, scheme, size, k, s * grid.k_values.len() + ki));
            }
        }
    }
    let cells = cells_todo
        .par_iter()
        .map(|&(_, scheme, size, k, job)| {
            evaluate_cell(
                train,
                test,
                &test_labels,
                prepared[job].as_ref(),
                &scheme.name,
                size,
                k,
                &protocol,
            )
            .map_err(|e| Error::Cell {
                scheme: scheme.name.clone(),
                size,
                k,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridReport {
        schemes: schemes.iter().map(|s| s.name.clone()).collect(),
        cells,
    })
}

/// Best mean AUC over k for one scheme and size; ties go to the smaller k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Best {
    pub k: usize,
    pub mean_auc: f64,
}

impl GridReport {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.cells.iter().map(|c| c.train_size).collect();
        sizes.sort_unstable();
        sizes.dedup();
        sizes
    }

    pub fn best(&self, scheme: &str, size: usize) -> Option<Best> {
        let mut best: Option<Best> = None;
        for c in self
            .cells
            .iter()
            .filter(|c| c.scheme == scheme && c.train_size == size)
        {
            let better = best
                .is_none_or(|b| c.mean_auc > b.mean_auc || (c.mean_auc == b.mean_auc && c.k < b.k));
            if better {
                best = Some(Best {
                    k: c.k,
                    mean_auc: c.mean_auc,
                });
            }
        }
        best
    }

    /// Long form: `scheme,train_size,k,seed,auc`.
    pub fn cells_csv(&self) -> String {
        let mut out = String::from("scheme,train_size,k,seed,auc\n");
        for c in &self.cells {
            for (seed, a) in c.seeds.iter().zip(&c.per_seed_auc) {
                let _ = writeln!(out, "{},{},{},{seed},{a}", c.scheme, c.train_size, c.k);
            }
        }
        out
    }

    /// `scheme,train_size,k,mean_auc,std_auc`.
    pub fn aggregated_csv(&self) -> String {
        let mut out = String::from("scheme,train_size,k,mean_auc,std_auc\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                c.scheme, c.train_size, c.k, c.mean_auc, c.std_auc
            );
        }
        out
    }

    fn wide(&self, value: impl Fn(Best) -> String) -> Vec<Vec<String>> {
        let mut rows = vec![std::iter::once("train_size".to_string())
            .chain(self.schemes.iter().cloned())
            .collect::<Vec<_>>()];
        for size in self.sizes() {
            let mut row = vec![size.to_string()];
            for s in &self.schemes {
                row.push(self.best(s, size).map(&value).unwrap_or_default());
            }
            rows.push(row);
        }
        rows
    }

    fn best_auc_rows(&self) -> Vec<Vec<String>> {
        self.wide(|b| b.mean_auc.to_string())
    }

    fn best_k_rows(&self) -> Vec<Vec<String>> {
        self.wide(|b| b.k.to_string())
    }

    /// Best-over-k mean AUC per size (rows) and scheme (columns).
    pub fn best_auc_csv(&self) -> String {
        to_csv(&self.best_auc_rows())
    }

    /// The k attaining each best-over-k entry.
    pub fn best_k_csv(&self) -> String {
        to_csv(&self.best_k_rows())
    }

    /// Both summary tables as aligned text, AUC to four decimals.
    pub fn summary_text(&self) -> String {
        let auc_rows = self.wide(|b| format!("{:.4}", b.mean_auc));
        format!(
            "Best mean AUC over k\n{}\nk attaining the best mean AUC\n{}",
            aligned(&auc_rows),
            aligned(&self.best_k_rows())
        )
    }
}

fn to_csv(rows: &[Vec<String>]) -> String {
    rows.iter().map(|r| r.join(",") + "\n").collect()
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.first().map_or(0, Vec::len);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(v, &w)| format!("{v:>w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
