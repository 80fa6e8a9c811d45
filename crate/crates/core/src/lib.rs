//! Word-cluster features for classifying short posts from very small labeled
//! sets.
//!
//! Words are grouped into clusters using a large unlabeled corpus, either by
//! Brown clustering or by k-means over skip-gram embeddings, and documents are
//! represented by which clusters they touch. The [`experiment`] module runs
//! the training-size × cluster-count sweep that compares bag-of-clusters
//! against PMI-selected bag-of-words under L2 logistic regression.

pub mod brown;
pub mod clustering;
pub mod corpus;
pub mod embed;
mod error;
pub mod experiment;
pub mod features;
pub mod hashing;
pub mod kmeans;
pub mod model;
pub mod synthetic;
pub mod tokenize;

pub use brown::{BigramCounts, BrownConfig, Dendrogram};
pub use clustering::{ClusterAlgorithm, Provenance, WordClustering};
pub use corpus::{Corpus, CorpusKind, CorpusStats, Document, SplitSpec};
pub use embed::{EmbeddingMatrix, SgnsConfig};
pub use error::{Error, Result};
pub use experiment::{ExperimentGrid, ResultCell};
pub use features::{FeatureSpec, FeatureVector, PmiTable};
pub use kmeans::KmeansConfig;
pub use model::{BinaryMatrix, Threshold, TrainedModel};
pub use tokenize::{TokenizerConfig, Vocabulary};

/// Seeded generator used by every randomized step.
pub type Rng = rand_chacha::ChaCha8Rng;

pub(crate) fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
