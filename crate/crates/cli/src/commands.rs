use std::path::{Path, PathBuf};

use lexcluster::brown::{brown_cluster, count_bigrams};
use lexcluster::corpus::{load_corpus, split, stats};
use lexcluster::embed::{load_pretrained, sgns_train, Table};
use lexcluster::experiment::{auc, resolve_schemes, run_grid};
use lexcluster::features::{
    featurize, featurize_corpus, pmi_scores, select_top_k, FeatureSpecRecord,
};
use lexcluster::kmeans::kmeans_cluster;
use lexcluster::model::{
    classify, cv_select_lambda, lr_train, score, CvOptions, DEFAULT_LAMBDA_GRID,
};
use lexcluster::synthetic::{generate, GeneratorConfig};
use lexcluster::tokenize::{build_vocabulary, tokenize_corpus};
use lexcluster::{
    Corpus, CorpusKind, FeatureSpec, KmeansConfig, SgnsConfig, SplitSpec, Threshold,
    TokenizerConfig, TrainedModel, WordClustering,
};
use serde::Serialize;

use crate::config::{offset, RunConfig};
use crate::output::Summary;
use crate::{Cli, CliError, Command, Kind, TableArg, TokenizerArgs};

pub fn run(cli: &Cli, cfg: &RunConfig) -> Result<String, CliError> {
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    match &cli.command {
        Command::Preprocess {
            input,
            out,
            kind,
            tokenizer,
        } => {
            let mut s = Summary::new("preprocess", seed);
            s.input(input)?;
            let corpus = load(input, *kind, &tokenizer_config(tokenizer, cfg)?)?;
            s.detail("documents", corpus.len());
            s.output(out, corpus.to_jsonl());
            s.commit()
        }
        Command::Stats {
            input,
            kind,
            tokenizer,
        } => {
            let mut s = Summary::new("stats", seed);
            s.input(input)?;
            let corpus = load(input, *kind, &tokenizer_config(tokenizer, cfg)?)?;
            s.detail("stats", stats(&corpus)?);
            s.commit()
        }
        Command::Split {
            input,
            train_out,
            test_out,
            train_fraction,
        } => {
            let mut s = Summary::new("split", seed);
            s.input(input)?;
            let corpus = load_corpus(input, CorpusKind::Labeled)?;
            let spec = SplitSpec {
                train_fraction: train_fraction.or(cfg.train_fraction).unwrap_or(0.7),
                seed: seed + offset::SPLIT,
            };
            let (train, test) = split(&corpus, spec)?;
            s.detail("split_seed", spec.seed);
            s.detail("sizes", (train.len(), test.len()));
            s.output(train_out, train.to_jsonl());
            s.output(test_out, test.to_jsonl());
            s.commit()
        }
        Command::Brown {
            input,
            out,
            k,
            window,
            min_count,
            paths,
            dendrogram,
            exact,
            tokenizer,
        } => {
            let mut s = Summary::new("brown", seed);
            s.input(input)?;
            let corpus = load(input, Kind::Unlabeled, &tokenizer_config(tokenizer, cfg)?)?;
            let vocab = build_vocabulary(&corpus, min_count.or(cfg.min_count).unwrap_or(1))?;
            let counts = count_bigrams(&corpus, &vocab)?;
            let mut config = cfg.brown.unwrap_or_default();
            if let Some(w) = window {
                config.window = *w;
            }
            config.exact |= exact;
            log::info!(
                "brown: {} word types, window {}",
                vocab.len(),
                config.window
            );
            let mut tree = brown_cluster(&counts, &config)?;
            tree.corpus_tag = s.inputs.values().next().cloned().unwrap_or_default();
            let clustering = tree.cut(*k)?;
            s.detail("vocabulary", vocab.len());
            s.detail("k", clustering.k());
            s.output(out, clustering.to_tsv());
            if let Some(p) = paths {
                s.output(p, tree.paths_tsv());
            }
            if let Some(p) = dendrogram {
                s.output(p, tree.to_json());
            }
            s.commit()
        }
        Command::Embed {
            input,
            out,
            dim,
            window,
            negatives,
            subsample,
            epochs,
            learning_rate,
            min_count,
            table,
            tokenizer,
        } => {
            let mut s = Summary::new("embed", seed);
            s.input(input)?;
            let corpus = load(input, Kind::Unlabeled, &tokenizer_config(tokenizer, cfg)?)?;
            let vocab = build_vocabulary(&corpus, min_count.or(cfg.min_count).unwrap_or(1))?;
            let base = cfg.sgns.unwrap_or_default();
            let config = SgnsConfig {
                dim: dim.unwrap_or(base.dim),
                window: window.unwrap_or(base.window),
                negatives: negatives.unwrap_or(base.negatives),
                subsample_threshold: subsample.unwrap_or(base.subsample_threshold),
                epochs: epochs.unwrap_or(base.epochs),
                initial_learning_rate: learning_rate.unwrap_or(base.initial_learning_rate),
                seed: seed + offset::EMBED,
            };
            config.validate()?;
            log::info!("embed: {} word types, {config:?}", vocab.len());
            let matrix = sgns_train(&corpus, &vocab, &config)?;
            let table = match table {
                TableArg::Input => Table::Input,
                TableArg::Output if matrix.has_output() => Table::Output,
                TableArg::Output => Table::Input,
            };
            s.detail("stage_seed", config.seed);
            s.detail("vocabulary", vocab.len());
            s.output(out, matrix.to_text(table)?);
            s.commit()
        }
        Command::Kmeans {
            vectors,
            out,
            k,
            restarts,
            max_iters,
            normalize,
        } => {
            let mut s = Summary::new("kmeans", seed);
            s.input(vectors)?;
            let matrix = load_pretrained(vectors)?;
            let base = cfg.kmeans.unwrap_or_default();
            let config = KmeansConfig {
                k: k.unwrap_or(base.k),
                restarts: restarts.unwrap_or(base.restarts),
                max_iters: max_iters.unwrap_or(base.max_iters),
                normalize: *normalize || base.normalize,
                seed: seed + offset::KMEANS,
                ..base
            };
            let clustering = kmeans_cluster(&matrix, &config)?;
            s.detail("stage_seed", config.seed);
            s.detail("k", clustering.k());
            s.output(out, clustering.to_tsv());
            s.commit()
        }
        Command::Featurize {
            input,
            spec,
            bow_k,
            clusters,
            spec_out,
            out,
            tokenizer,
        } => {
            let mut s = Summary::new("featurize", seed);
            s.input(input)?;
            let corpus = load(input, Kind::Labeled, &tokenizer_config(tokenizer, cfg)?)?;
            let feature_spec = match (spec, bow_k, clusters) {
                (Some(path), _, _) => {
                    s.input(path)?;
                    load_spec(path)?
                }
                (None, Some(k), _) => select_top_k(&pmi_scores(&corpus)?, *k)?.spec,
                (None, None, Some(path)) => {
                    s.input(path)?;
                    FeatureSpec::clusters(WordClustering::load(path)?)
                }
                (None, None, None) => {
                    return Err(CliError::Usage(
                        "one of --spec, --bow-k or --clusters is required".into(),
                    ))
                }
            };
            s.detail("dim", feature_spec.dim());
            s.detail("spec_hash", feature_spec.spec_hash());
            if let Some(path) = spec_out {
                let cluster_file = clusters.as_deref().map(|c| relative_to(c, path));
                let record = feature_spec.to_record(cluster_file.as_deref())?;
                s.output(path, to_json_line(&record));
            }
            if let Some(path) = out {
                let mut rows = String::new();
                for doc in corpus.documents() {
                    let v = featurize(doc, &feature_spec)?;
                    rows.push_str(&to_json_line(&FeatureRow {
                        id: &doc.id,
                        label: doc.label.map(u8::from),
                        active: v.active(),
                    }));
                }
                s.output(path, rows);
            }
            s.commit()
        }
        Command::Train {
            train,
            spec,
            out,
            lambda,
            lambda_grid,
            cv,
            tokenizer,
        } => {
            let mut s = Summary::new("train", seed);
            s.input(train)?;
            s.input(spec)?;
            let corpus = load(train, Kind::Labeled, &tokenizer_config(tokenizer, cfg)?)?;
            let feature_spec = load_spec(spec)?;
            let x = featurize_corpus(&corpus, &feature_spec)?;
            let y = corpus.labels()?;
            let mut model = match lambda {
                Some(l) => lr_train(&x, &y, *l)?,
                None => {
                    let grid = lambda_grid
                        .clone()
                        .or_else(|| cfg.lambda_grid.clone())
                        .unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec());
                    let options = CvOptions {
                        folds: cv.or(cfg.cv_folds),
                        seed: seed + offset::TRAIN,
                    };
                    let (selection, model) = cv_select_lambda(&x, &y, &grid, options)?;
                    s.detail("cv_losses", &selection.losses);
                    match model {
                        Some(m) => m,
                        None => lr_train(&x, &y, selection.lambda)?,
                    }
                }
            };
            model.feature_spec_hash = feature_spec.spec_hash();
            s.detail("lambda", model.lambda);
            s.output(out, model.to_json());
            s.commit()
        }
        Command::Score {
            model,
            spec,
            input,
            out,
            threshold,
            kind,
            tokenizer,
        } => {
            let mut s = Summary::new("score", seed);
            s.input(model)?;
            s.input(spec)?;
            s.input(input)?;
            let trained = TrainedModel::from_json(&read(model)?)?;
            let feature_spec = load_spec(spec)?;
            if trained.feature_spec_hash != feature_spec.spec_hash() {
                return Err(CliError::Data(format!(
                    "model {} was trained on a different feature spec than {}",
                    model.display(),
                    spec.display()
                )));
            }
            let corpus = load(input, *kind, &tokenizer_config(tokenizer, cfg)?)?;
            let threshold = Threshold { theta: *threshold };
            let mut csv = String::from(if *kind == Kind::Labeled {
                "id,score,predicted,label\n"
            } else {
                "id,score,predicted\n"
            });
            let mut scores = Vec::with_capacity(corpus.len());
            for doc in corpus.documents() {
                let v = featurize(doc, &feature_spec)?;
                let p = score(&trained, &v)?;
                let predicted = u8::from(classify(&trained, &v, threshold)?);
                scores.push(trained.margin(&v)?);
                csv.push_str(&format!("{},{p},{predicted}", csv_field(&doc.id)));
                if let Some(label) = doc.label {
                    csv.push_str(&format!(",{}", u8::from(label)));
                }
                csv.push('\n');
            }
            if corpus.kind() == CorpusKind::Labeled && corpus.has_both_classes() {
                s.detail("auc", auc(&scores, &corpus.labels()?)?);
            }
            s.output(out, csv);
            s.commit()
        }
        Command::Experiment {
            train,
            test,
            out,
            resamples,
            cv,
            tokenizer,
        } => {
            let mut s = Summary::new("experiment", seed);
            s.input(train)?;
            s.input(test)?;
            let tok = tokenizer_config(tokenizer, cfg)?;
            let train = load(train, Kind::Labeled, &tok)?;
            let test = load(test, Kind::Labeled, &tok)?;
            let mut grid = cfg.experiment.clone().unwrap_or_default();
            if cli.seed.is_some() || cfg.seed.is_some() {
                grid.base_seed = seed + offset::EXPERIMENT;
            }
            if let Some(r) = resamples {
                grid.resamples = *r;
            }
            if cv.is_some() {
                grid.cv_folds = *cv;
            }
            if let Some(l) = &cfg.lambda_grid {
                grid.lambda_grid = l.clone();
            }
            grid.validate()?;
            let schemes = resolve_schemes(&grid, &cfg.base_dir)?;
            log::info!(
                "experiment: {} schemes, sizes {:?}, k {:?}",
                schemes.len(),
                grid.train_sizes,
                grid.k_values
            );
            let report = run_grid(&train, &test, &grid, &schemes)?;
            s.detail("base_seed", grid.base_seed);
            s.detail("cells", report.cells.len());
            s.output(&out.join("cells.csv"), report.cells_csv());
            s.output(&out.join("aggregated.csv"), report.aggregated_csv());
            s.output(&out.join("best_auc.csv"), report.best_auc_csv());
            s.output(&out.join("best_k.csv"), report.best_k_csv());
            s.output(&out.join("summary.txt"), report.summary_text());
            s.commit()
        }
        Command::GenSynthetic {
            out,
            n_labeled,
            n_unlabeled,
            n_clusters,
            words_per_cluster,
            positive_prior,
        } => {
            let base = cfg.generator.clone().unwrap_or_default();
            let config = GeneratorConfig {
                n_labeled: n_labeled.unwrap_or(base.n_labeled),
                n_unlabeled: n_unlabeled.unwrap_or(base.n_unlabeled),
                n_clusters: n_clusters.unwrap_or(base.n_clusters),
                words_per_cluster: words_per_cluster.unwrap_or(base.words_per_cluster),
                positive_prior: positive_prior.unwrap_or(base.positive_prior),
                ..base
            };
            let stage_seed = seed + offset::SYNTHETIC;
            let data = generate(&config, stage_seed)?;
            let mut s = Summary::new("gen-synthetic", seed);
            s.detail("stage_seed", stage_seed);
            s.output(&out.join("train.jsonl"), data.train.to_jsonl());
            s.output(&out.join("test.jsonl"), data.test.to_jsonl());
            s.output(&out.join("unlabeled.jsonl"), data.unlabeled.to_jsonl());
            s.output(&out.join("oracle.tsv"), data.oracle.to_tsv());
            s.commit()
        }
    }
}

#[derive(Serialize)]
struct FeatureRow<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
    active: &'a [u32],
}

fn to_json_line(value: &impl Serialize) -> String {
    let mut line = serde_json::to_string(value).expect("value serializes");
    line.push('\n');
    line
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn load_spec(path: &Path) -> Result<FeatureSpec, CliError> {
    let record: FeatureSpecRecord = serde_json::from_str(&read(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(FeatureSpec::from_record(&record, base)?)
}

/// Path of `target` as seen from the directory holding `from`, when both are
/// relative or share a prefix; otherwise `target` unchanged.
fn relative_to(target: &Path, from: &Path) -> String {
    let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let target_abs = abs(target);
    let dir = abs(from)
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let t: Vec<_> = target_abs.components().collect();
    let d: Vec<_> = dir.components().collect();
    let common = t.iter().zip(&d).take_while(|(a, b)| a == b).count();
    if common == 0 {
        return target.display().to_string();
    }
    let mut rel = PathBuf::new();
    for _ in common..d.len() {
        rel.push("..");
    }
    for c in &t[common..] {
        rel.push(c);
    }
    rel.display().to_string()
}

/// Loads a corpus, tokenizing it unless it already carries tokens.
fn load(path: &Path, kind: Kind, tok: &TokenizerConfig) -> Result<Corpus, CliError> {
    let kind = match kind {
        Kind::Labeled => CorpusKind::Labeled,
        Kind::Unlabeled => CorpusKind::Unlabeled,
    };
    let mut corpus = load_corpus(path, kind)?;
    if !corpus.is_tokenized() {
        tokenize_corpus(&mut corpus, tok);
    }
    Ok(corpus)
}

fn tokenizer_config(args: &TokenizerArgs, cfg: &RunConfig) -> Result<TokenizerConfig, CliError> {
    let section = &cfg.tokenizer;
    let mut config = if args.no_stopwords || section.no_stopwords == Some(true) {
        TokenizerConfig::without_stopwords()
    } else if let Some(path) = &args.stopwords {
        TokenizerConfig::default().with_stopword_file(path)?
    } else if let Some(path) = &section.stopwords_file {
        TokenizerConfig::default().with_stopword_file(cfg.base_dir.join(path))?
    } else {
        TokenizerConfig::default()
    };
    if let Some(v) = args.min_len.or(section.min_len) {
        config.min_len = v;
    }
    if let Some(v) = args.max_len.or(section.max_len) {
        config.max_len = v;
    }
    config.strip_urls = !section.keep_urls.unwrap_or(false);
    config.strip_mentions = !section.keep_mentions.unwrap_or(false);
    config.lowercase = !section.keep_case.unwrap_or(false);
    config.validate()?;
    Ok(config)
}
