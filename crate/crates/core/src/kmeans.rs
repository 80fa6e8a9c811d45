//! Lloyd's k-means with k-means++ seeding over word vectors.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterAlgorithm, Provenance, WordClustering};
use crate::embed::EmbeddingMatrix;
use crate::{seeded_rng, Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once the relative objective improvement falls to this level.
    pub tolerance: f64,
    pub seed: u64,
    pub restarts: usize,
    /// Scale every vector to unit length before clustering.
    pub normalize: bool,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        KmeansConfig {
            k: 8,
            max_iters: 100,
            tolerance: 1e-6,
            seed: 0,
            restarts: 3,
            normalize: false,
        }
    }
}

impl KmeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::Parameter("max_iters must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Parameter("tolerance must be non-negative".into()));
        }
        if self.restarts < 1 {
            return Err(Error::Parameter("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansFit {
    pub assignments: Vec<usize>,
    /// Row-major `k × dim`.
    pub centroids: Vec<f64>,
    pub objective: f64,
    /// Objective after every iteration, one trace per restart.
    pub traces: Vec<Vec<f64>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn normalized(points: &[f64], dim: usize) -> Vec<f64> {
    let mut out = points.to_vec();
    for row in out.chunks_exact_mut(dim) {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    out
}

fn plus_plus(points: &[f64], dim: usize, k: usize, rng: &mut Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(row(rng.gen_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centroids[..dim])).collect();
    for c in 1..k {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // Every point coincides with a centroid; repair handles the rest.
            Err(_) => rng.gen_range(0..n),
        };
        centroids.extend_from_slice(row(next));
        let new = &centroids[c * dim..(c + 1) * dim];
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), new));
        }
    }
    centroids
}

/// Hartigan sweeps: move single points to another cluster whenever that
/// lowers the objective, updating both means at once. Stops after a sweep
/// with no move.
fn hartigan(points: &[f64], dim: usize, k: usize, assignments: &mut [usize], trace: &mut Vec<f64>) {
    let (mut centroids, mut sizes) = means(points, dim, k, assignments);
    for _ in 0..100 {
        let mut moved = false;
        for (i, p) in points.chunks_exact(dim).enumerate() {
            let from = assignments[i];
            if sizes[from] < 2 {
                continue;
            }
            let s = sizes[from] as f64;
            let removal = s / (s - 1.0) * sq_dist(p, &centroids[from * dim..(from + 1) * dim]);
            let mut best = (removal, from);
            for to in (0..k).filter(|&c| c != from) {
                let t = sizes[to] as f64;
                let cost = t / (t + 1.0) * sq_dist(p, &centroids[to * dim..(to + 1) * dim]);
                if cost < best.0 * (1.0 - 1e-12) {
                    best = (cost, to);
                }
            }
            let to = best.1;
            if to == from {
                continue;
            }
            for (j, x) in p.iter().enumerate() {
                let (cf, ct) = (&mut centroids[from * dim + j], s);
                *cf = (*cf * ct - x) / (ct - 1.0);
                let t = sizes[to] as f64;
                let c = &mut centroids[to * dim + j];
                *c = (*c * t + x) / (t + 1.0);
            }
            sizes[from] -= 1;
            sizes[to] += 1;
            assignments[i] = to;
            moved = true;
        }
        if !moved {
            break;
        }
        trace.push(partition_objective(points, dim, k, assignments));
    }
}

/// Nearest centroid per point; the lowest id wins ties.
fn assign(points: &[f64], dim: usize, centroids: &[f64], out: &mut [usize]) {
    for (p, slot) in points.chunks_exact(dim).zip(out.iter_mut()) {
        let mut best = (f64::INFINITY, 0);
        for (c, cen) in centroids.chunks_exact(dim).enumerate() {
            let d = sq_dist(p, cen);
            if d < best.0 {
                best = (d, c);
            }
        }
        *slot = best.1;
    }
}

fn means(points: &[f64], dim: usize, k: usize, assignments: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let mut sums = vec![0.0; k * dim];
    let mut sizes = vec![0usize; k];
    for (p, &c) in points.chunks_exact(dim).zip(assignments) {
        sizes[c] += 1;
        for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (c, &size) in sizes.iter().enumerate() {
        if size > 0 {
            sums[c * dim..(c + 1) * dim]
                .iter_mut()
                .for_each(|s| *s /= size as f64);
        }
    }
    (sums, sizes)
}

/// Moves the point farthest from its centroid into each empty cluster,
/// drawing only from clusters that keep at least one member.
fn repair_empty(points: &[f64], dim: usize, k: usize, assignments: &mut [usize]) {
    loop {
        let (centroids, sizes) = means(points, dim, k, assignments);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far = (f64::NEG_INFINITY, usize::MAX);
        for (i, p) in points.chunks_exact(dim).enumerate() {
            let c = assignments[i];
            if sizes[c] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[c * dim..(c + 1) * dim]);
            if d > far.0 {
                far = (d, i);
            }
        }
        assignments[far.1] = empty;
    }
}

/// Sum of squared distances from each point to the mean of its cluster.
pub fn partition_objective(points: &[f64], dim: usize, k: usize, assignments: &[usize]) -> f64 {
    let (centroids, _) = means(points, dim, k, assignments);
    points
        .chunks_exact(dim)
        .zip(assignments)
        .map(|(p, &c)| sq_dist(p, &centroids[c * dim..(c + 1) * dim]))
        .sum()
}

fn lloyd(points: &[f64], dim: usize, config: &KmeansConfig, rng: &mut Rng) -> KmeansFit {
    let n = points.len() / dim;
    let k = config.k;
    let mut centroids = plus_plus(points, dim, k, rng);
    let mut assignments = vec![0; n];
    assign(points, dim, &centroids, &mut assignments);
    repair_empty(points, dim, k, &mut assignments);
    centroids = means(points, dim, k, &assignments).0;
    let mut objective = partition_objective(points, dim, k, &assignments);
    let mut trace = vec![objective];
    let mut next = vec![0; n];
    for _ in 1..config.max_iters {
        assign(points, dim, &centroids, &mut next);
        repair_empty(points, dim, k, &mut next);
        if next == assignments {
            break;
        }
        std::mem::swap(&mut assignments, &mut next);
        centroids = means(points, dim, k, &assignments).0;
        let updated = partition_objective(points, dim, k, &assignments);
        trace.push(updated);
        let improvement = objective - updated;
        objective = updated;
        if improvement <= config.tolerance * objective.abs() {
            break;
        }
    }
    hartigan(points, dim, k, &mut assignments, &mut trace);
    let objective = *trace.last().expect("non-empty trace");
    let centroids = means(points, dim, k, &assignments).0;
    KmeansFit {
        assignments,
        centroids,
        objective,
        traces: vec![trace],
    }
}

/// Clusters `n × dim` row-major points; best of `restarts` by objective,
/// earliest restart on ties.
pub fn kmeans_fit(points: &[f64], dim: usize, config: &KmeansConfig) -> Result<KmeansFit> {
    config.validate()?;
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::Shape {
            expected: dim,
            actual: points.len(),
        });
    }
    let n = points.len() / dim;
    if config.k > n {
        return Err(Error::Parameter(format!(
            "k = {} exceeds the {n} points",
            config.k
        )));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite input vector".into()));
    }
    let owned;
    let points = if config.normalize {
        owned = normalized(points, dim);
        &owned[..]
    } else {
        points
    };
    let mut rng = seeded_rng(config.seed);
    let mut best: Option<KmeansFit> = None;
    let mut traces = Vec::with_capacity(config.restarts);
    for _ in 0..config.restarts {
        let mut fit = lloyd(points, dim, config, &mut rng);
        traces.append(&mut fit.traces);
        if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
            best = Some(fit);
        }
    }
    let mut best = best.expect("at least one restart");
    best.traces = traces;
    Ok(best)
}

/// Clusters the output table when present, otherwise the input table.
pub fn kmeans_cluster(emb: &EmbeddingMatrix, config: &KmeansConfig) -> Result<WordClustering> {
    let fit = kmeans_fit(emb.clustering_table(), emb.dim(), config)?;
    WordClustering::from_groups(
        emb.words().to_vec(),
        &fit.assignments,
        Provenance {
            algorithm: ClusterAlgorithm::Kmeans,
            corpus_tag: String::new(),
        },
    )
}

/// Within-cluster sum of squares of the clustering table under `clustering`.
pub fn kmeans_objective(emb: &EmbeddingMatrix, clustering: &WordClustering) -> Result<f64> {
    let groups = emb
        .words()
        .iter()
        .map(|w| {
            clustering
                .cluster_of(w)
                .map(|c| c as usize)
                .ok_or_else(|| Error::Vocabulary(w.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(partition_objective(
        emb.clustering_table(),
        emb.dim(),
        clustering.k(),
        &groups,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(points: &[[f64; 2]]) -> EmbeddingMatrix {
        let words = (0..points.len()).map(|i| format!("w{i}")).collect();
        EmbeddingMatrix::new(words, 2, points.concat(), None).unwrap()
    }

    fn cfg(k: usize, seed: u64) -> KmeansConfig {
        KmeansConfig {
            k,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn four_point_example() {
        let emb = matrix(&[[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]]);
        let c = kmeans_cluster(&emb, &cfg(2, 1)).unwrap();
        assert_eq!(c.assignments(), &[0, 0, 1, 1]);
        assert_eq!(kmeans_objective(&emb, &c).unwrap(), 1.0);
    }

    #[test]
    fn singleton_and_single_cluster() {
        let emb = matrix(&[[0.0, 0.0], [2.0, 0.0], [5.0, 1.0]]);
        let all = kmeans_cluster(&emb, &cfg(3, 4)).unwrap();
        assert_eq!(all.k(), 3);
        assert_eq!(kmeans_objective(&emb, &all).unwrap(), 0.0);

        let fit = kmeans_fit(&[0.0, 0.0, 2.0, 0.0, 4.0, 3.0], 2, &cfg(1, 0)).unwrap();
        assert_eq!(fit.centroids, vec![2.0, 1.0]);

        let two = matrix(&[[0.0, 0.0], [2.0, 0.0]]);
        let one = kmeans_cluster(&two, &cfg(1, 0)).unwrap();
        assert_eq!(kmeans_objective(&two, &one).unwrap(), 2.0);
    }

    #[test]
    fn duplicates_still_fill_every_cluster() {
        let emb = matrix(&[[1.0, 1.0]; 5]);
        let c = kmeans_cluster(&emb, &cfg(4, 2)).unwrap();
        assert_eq!(c.k(), 4);
    }

    #[test]
    fn errors() {
        let emb = matrix(&[[0.0, 0.0], [1.0, 0.0]]);
        assert!(matches!(
            kmeans_cluster(&emb, &cfg(3, 0)),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            kmeans_cluster(&emb, &cfg(0, 0)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn normalize_uses_directions() {
        let emb = matrix(&[[1.0, 0.0], [100.0, 1.0], [0.0, 1.0], [1.0, 100.0]]);
        let c = kmeans_cluster(
            &emb,
            &KmeansConfig {
                normalize: true,
                ..cfg(2, 3)
            },
        )
        .unwrap();
        assert_eq!(c.assignments(), &[0, 0, 1, 1]);
    }

    proptest! {
        #[test]
        fn objective_never_increases(
            pts in proptest::collection::vec(-5.0f64..5.0, 6..60),
            k in 1usize..4,
            seed in 0u64..1000,
        ) {
            let n = pts.len() / 2;
            let pts = &pts[..n * 2];
            prop_assume!(k <= n);
            let fit = kmeans_fit(pts, 2, &cfg(k, seed)).unwrap();
            for trace in &fit.traces {
                for w in trace.windows(2) {
                    prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", trace);
                }
            }
            let mut used = vec![false; k];
            fit.assignments.iter().for_each(|&c| used[c] = true);
            prop_assert!(used.iter().all(|&u| u));
        }
    }
}
