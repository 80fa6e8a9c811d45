//! L2-regularized logistic regression on binary features.
//!
//! The objective is `(1/n) Σ ln(1 + exp(-ỹ (w·x + b))) + λ‖w‖²` with labels
//! `ỹ ∈ {-1, +1}` and an unpenalized bias. It is minimized by Newton's method
//! with backtracking. Identical rows are merged into weighted rows and
//! columns that are never set are dropped before solving; when there are
//! more columns than distinct rows the Newton system is solved through the
//! row Gram matrix instead of the column Hessian.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;
use crate::{seeded_rng, Error, Result};

pub const GRAD_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 500;
const POLISH_STEPS: usize = 3;
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

/// Sparse binary matrix: each row lists its set columns in increasing order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BinaryMatrix {
    n_cols: usize,
    rows: Vec<Vec<u32>>,
}

impl BinaryMatrix {
    pub fn from_rows(rows: Vec<Vec<u32>>, n_cols: usize) -> Result<Self> {
        let mut rows = rows;
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            if let Some(&c) = row.last() {
                if c as usize >= n_cols {
                    return Err(Error::Shape {
                        expected: n_cols,
                        actual: c as usize + 1,
                    });
                }
            }
        }
        Ok(BinaryMatrix { n_cols, rows })
    }

    pub fn from_dense(rows: &[Vec<bool>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let sparse = rows
            .iter()
            .map(|r| {
                if r.len() != n_cols {
                    return Err(Error::Shape {
                        expected: n_cols,
                        actual: r.len(),
                    });
                }
                Ok((0..n_cols as u32).filter(|&j| r[j as usize]).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BinaryMatrix {
            n_cols,
            rows: sparse,
        })
    }

    pub fn from_vectors(vectors: &[FeatureVector], n_cols: usize) -> Result<Self> {
        for v in vectors {
            if v.dim() != n_cols {
                return Err(Error::Shape {
                    expected: n_cols,
                    actual: v.dim(),
                });
            }
        }
        Ok(BinaryMatrix {
            n_cols,
            rows: vectors.iter().map(|v| v.active().to_vec()).collect(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    /// Rows selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> BinaryMatrix {
        BinaryMatrix {
            n_cols: self.n_cols,
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sign(label: bool) -> f64 {
    if label {
        1.0
    } else {
        -1.0
    }
}

fn check_shapes(x: &BinaryMatrix, y: &[bool], w: &[f64]) -> Result<()> {
    if y.len() != x.n_rows() {
        return Err(Error::Shape {
            expected: x.n_rows(),
            actual: y.len(),
        });
    }
    if w.len() != x.n_cols() {
        return Err(Error::Shape {
            expected: x.n_cols(),
            actual: w.len(),
        });
    }
    Ok(())
}

/// The training objective at `(w, b)`.
pub fn lr_objective(x: &BinaryMatrix, y: &[bool], lambda: f64, w: &[f64], b: f64) -> Result<f64> {
    check_shapes(x, y, w)?;
    let n = x.n_rows() as f64;
    let loss: f64 = x
        .rows()
        .iter()
        .zip(y)
        .map(|(row, &label)| {
            let z = b + row.iter().map(|&j| w[j as usize]).sum::<f64>();
            softplus(-sign(label) * z)
        })
        .sum();
    Ok(loss / n + lambda * w.iter().map(|v| v * v).sum::<f64>())
}

/// Gradient of [`lr_objective`] with respect to `w` and `b`.
pub fn lr_gradient(
    x: &BinaryMatrix,
    y: &[bool],
    lambda: f64,
    w: &[f64],
    b: f64,
) -> Result<(Vec<f64>, f64)> {
    check_shapes(x, y, w)?;
    let n = x.n_rows() as f64;
    let mut gw: Vec<f64> = w.iter().map(|v| 2.0 * lambda * v).collect();
    let mut gb = 0.0;
    for (row, &label) in x.rows().iter().zip(y) {
        let s = sign(label);
        let z = b + row.iter().map(|&j| w[j as usize]).sum::<f64>();
        let coef = -s * sigmoid(-s * z) / n;
        for &j in row {
            gw[j as usize] += coef;
        }
        gb += coef;
    }
    Ok((gw, gb))
}

/// Training data reduced to distinct (pattern, label) rows over the columns
/// that occur at least once.
struct Problem {
    rows: Vec<Vec<u32>>,
    y: Vec<f64>,
    counts: Vec<f64>,
    /// Distinct row of every original row.
    member: Vec<usize>,
    /// Original column of every compact column.
    columns: Vec<u32>,
    n_cols: usize,
    /// Row Gram matrix, present when the Gram path is used.
    gram: Option<DMatrix<f64>>,
}

impl Problem {
    fn new(x: &BinaryMatrix, y: &[bool]) -> Result<Self> {
        if y.len() != x.n_rows() {
            return Err(Error::Shape {
                expected: x.n_rows(),
                actual: y.len(),
            });
        }
        let mut used = vec![false; x.n_cols()];
        x.rows()
            .iter()
            .flatten()
            .for_each(|&j| used[j as usize] = true);
        let columns: Vec<u32> = (0..x.n_cols() as u32)
            .filter(|&j| used[j as usize])
            .collect();
        let mut compact = vec![u32::MAX; x.n_cols()];
        for (new, &old) in columns.iter().enumerate() {
            compact[old as usize] = new as u32;
        }

        let mut seen: HashMap<(&[u32], bool), usize> = HashMap::new();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        let mut member = Vec::with_capacity(y.len());
        for (row, &label) in x.rows().iter().zip(y) {
            let id = *seen.entry((row.as_slice(), label)).or_insert_with(|| {
                rows.push(
                    row.iter()
                        .map(|&j| compact[j as usize])
                        .collect::<Vec<u32>>(),
                );
                labels.push(sign(label));
                counts.push(0.0);
                rows.len() - 1
            });
            counts[id] += 1.0;
            member.push(id);
        }
        let mut problem = Problem {
            rows,
            y: labels,
            counts,
            member,
            columns,
            n_cols: x.n_cols(),
            gram: None,
        };
        if !problem.use_primal() {
            problem.gram = Some(problem.row_gram());
        }
        Ok(problem)
    }

    fn m(&self) -> usize {
        self.columns.len()
    }

    fn use_primal(&self) -> bool {
        self.m() < 64 || self.m() < self.rows.len()
    }

    fn row_gram(&self) -> DMatrix<f64> {
        let n = self.rows.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = intersection(&self.rows[i], &self.rows[j]) as f64;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    fn margin(&self, i: usize, w: &[f64], b: f64) -> f64 {
        b + self.rows[i].iter().map(|&j| w[j as usize]).sum::<f64>()
    }

    fn objective(&self, counts: &[f64], lambda: f64, w: &[f64], b: f64) -> f64 {
        let total: f64 = counts.iter().sum();
        let mut loss = 0.0;
        for (i, &c) in counts.iter().enumerate() {
            if c > 0.0 {
                loss += c * softplus(-self.y[i] * self.margin(i, w, b));
            }
        }
        loss / total + lambda * w.iter().map(|v| v * v).sum::<f64>()
    }

    /// Objective, gradient and per-row Hessian weights.
    fn evaluate(&self, counts: &[f64], lambda: f64, w: &[f64], b: f64) -> Eval {
        let total: f64 = counts.iter().sum();
        let mut loss = 0.0;
        let mut gw: Vec<f64> = w.iter().map(|v| 2.0 * lambda * v).collect();
        let mut gb = 0.0;
        let mut d = vec![0.0; counts.len()];
        for (i, &c) in counts.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let t = -self.y[i] * self.margin(i, w, b);
            loss += c * softplus(t);
            let s = sigmoid(t);
            let coef = -self.y[i] * c * s / total;
            for &j in &self.rows[i] {
                gw[j as usize] += coef;
            }
            gb += coef;
            d[i] = c * s * (1.0 - s) / total;
        }
        let objective = loss / total + lambda * w.iter().map(|v| v * v).sum::<f64>();
        Eval {
            objective,
            gw,
            gb,
            d,
        }
    }

    /// Solves `H [dw; db] = -[gw; gb]`.
    fn newton_direction(&self, eval: &Eval, lambda: f64) -> Option<(Vec<f64>, f64)> {
        match &self.gram {
            None => self.primal_direction(eval, lambda),
            Some(g) => self.gram_direction(g, eval, lambda),
        }
    }

    fn primal_direction(&self, eval: &Eval, lambda: f64) -> Option<(Vec<f64>, f64)> {
        let m = self.m();
        let mut h = DMatrix::<f64>::zeros(m + 1, m + 1);
        for (row, &di) in self.rows.iter().zip(&eval.d) {
            if di == 0.0 {
                continue;
            }
            for &a in row {
                for &c in row {
                    h[(a as usize, c as usize)] += di;
                }
                h[(a as usize, m)] += di;
                h[(m, a as usize)] += di;
            }
            h[(m, m)] += di;
        }
        for j in 0..m {
            h[(j, j)] += 2.0 * lambda;
        }
        let rhs = DVector::from_iterator(
            m + 1,
            eval.gw.iter().map(|g| -g).chain(std::iter::once(-eval.gb)),
        );
        let step = h.cholesky()?.solve(&rhs);
        Some((step.rows(0, m).iter().copied().collect(), step[m]))
    }

    /// Block elimination of the bias with `A = XᵀDX + 2λI` inverted through
    /// `A⁻¹v = (v - XᵀR K⁻¹ R X v) / 2λ`, `K = 2λI + R X Xᵀ R`, `R = D^½`.
    fn gram_direction(
        &self,
        gram: &DMatrix<f64>,
        eval: &Eval,
        lambda: f64,
    ) -> Option<(Vec<f64>, f64)> {
        let n = self.rows.len();
        let m = self.m();
        let alpha = 2.0 * lambda;
        let r: Vec<f64> = eval.d.iter().map(|d| d.sqrt()).collect();
        let mut k = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = r[i] * gram[(i, j)] * r[j];
            }
            k[(i, i)] += alpha;
        }
        let chol = k.cholesky()?;
        let a_inv = |v: &[f64]| -> Vec<f64> {
            let u = DVector::from_iterator(
                n,
                (0..n).map(|i| r[i] * self.rows[i].iter().map(|&j| v[j as usize]).sum::<f64>()),
            );
            let t = chol.solve(&u);
            let mut out = v.to_vec();
            for i in 0..n {
                let coef = r[i] * t[i];
                for &j in &self.rows[i] {
                    out[j as usize] -= coef;
                }
            }
            out.iter_mut().for_each(|o| *o /= alpha);
            out
        };
        let mut c = vec![0.0; m];
        for (row, &di) in self.rows.iter().zip(&eval.d) {
            for &j in row {
                c[j as usize] += di;
            }
        }
        let s: f64 = eval.d.iter().sum();
        let h: Vec<f64> = eval.gw.iter().map(|g| -g).collect();
        let p = a_inv(&h);
        let q = a_inv(&c);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let schur = s - dot(&c, &q);
        if !(schur > 0.0) {
            return None;
        }
        let db = (-eval.gb - dot(&c, &p)) / schur;
        let dw = p.iter().zip(&q).map(|(pi, qi)| pi - qi * db).collect();
        Some((dw, db))
    }

    fn solve(&self, counts: &[f64], lambda: f64, init: (Vec<f64>, f64)) -> Result<Solution> {
        let (mut w, mut b) = init;
        let mut eval = self.evaluate(counts, lambda, &w, b);
        let mut trace = vec![eval.objective];
        let mut iterations = 0;
        let mut polish_steps = 0;
        loop {
            let norm = eval.grad_norm();
            if !norm.is_finite() {
                return Err(Error::Numeric("non-finite gradient".into()));
            }
            if norm <= GRAD_TOLERANCE && polish_steps == POLISH_STEPS {
                break;
            }
            if iterations == MAX_ITERATIONS {
                break;
            }
            let Some((dw, db)) = self.newton_direction(&eval, lambda) else {
                return Err(Error::Numeric(
                    "Newton system is not positive definite".into(),
                ));
            };
            let slope: f64 =
                eval.gw.iter().zip(&dw).map(|(g, d)| g * d).sum::<f64>() + eval.gb * db;
            iterations += 1;
            if norm <= GRAD_TOLERANCE {
                // Full steps past the tolerance, kept while the gradient shrinks.
                // The objective is flat to rounding here.
                let nw: Vec<f64> = w.iter().zip(&dw).map(|(a, d)| a + d).collect();
                let next = self.evaluate(counts, lambda, &nw, b + db);
                let slack = 4.0 * f64::EPSILON * eval.objective.abs();
                if next.objective <= eval.objective + slack && next.grad_norm() < norm {
                    w = nw;
                    b += db;
                    if trace.last().is_none_or(|&f| next.objective <= f) {
                        trace.push(next.objective);
                    }
                    eval = next;
                    polish_steps += 1;
                } else {
                    polish_steps = POLISH_STEPS;
                }
                continue;
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let nw: Vec<f64> = w.iter().zip(&dw).map(|(a, d)| a + t * d).collect();
                let nb = b + t * db;
                let f = self.objective(counts, lambda, &nw, nb);
                if f <= eval.objective + 1e-4 * t * slope {
                    accepted = Some((nw, nb));
                    break;
                }
                t *= 0.5;
            }
            let Some((nw, nb)) = accepted else {
                // No representable decrease remains.
                break;
            };
            w = nw;
            b = nb;
            eval = self.evaluate(counts, lambda, &w, b);
            trace.push(eval.objective);
        }
        let grad_norm = eval.grad_norm();
        Ok(Solution {
            w,
            b,
            report: TrainReport {
                iterations,
                grad_norm,
                converged: grad_norm <= GRAD_TOLERANCE,
                objective_trace: trace,
            },
        })
    }

    fn expand(&self, w: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_cols];
        for (&col, &v) in self.columns.iter().zip(w) {
            full[col as usize] = v;
        }
        full
    }

    fn compact(&self, w: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|&c| w[c as usize]).collect()
    }

    fn class_weights(&self, counts: &[f64]) -> (f64, f64) {
        let mut pos = 0.0;
        let mut neg = 0.0;
        for (&c, &y) in counts.iter().zip(&self.y) {
            if y > 0.0 {
                pos += c;
            } else {
                neg += c;
            }
        }
        (pos, neg)
    }
}

fn intersection(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

struct Eval {
    objective: f64,
    gw: Vec<f64>,
    gb: f64,
    d: Vec<f64>,
}

impl Eval {
    fn grad_norm(&self) -> f64 {
        (self.gw.iter().map(|g| g * g).sum::<f64>() + self.gb * self.gb).sqrt()
    }
}

struct Solution {
    w: Vec<f64>,
    b: f64,
    report: TrainReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Objective after every accepted step, starting at the initial point.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub feature_spec_hash: String,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub theta: f64,
}

impl TrainedModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("model file: {e}")))?;
        if model.weights.len() != model.dim {
            return Err(Error::Shape {
                expected: model.dim,
                actual: model.weights.len(),
            });
        }
        if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Format("model holds non-finite weights".into()));
        }
        Ok(model)
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                actual: dim,
            });
        }
        Ok(())
    }

    /// `w·x + b`.
    pub fn margin(&self, x: &FeatureVector) -> Result<f64> {
        self.check_dim(x.dim())?;
        Ok(self.bias
            + x.active()
                .iter()
                .map(|&j| self.weights[j as usize])
                .sum::<f64>())
    }

    /// Margins for every row of `x`.
    pub fn margins(&self, x: &BinaryMatrix) -> Result<Vec<f64>> {
        self.check_dim(x.n_cols())?;
        Ok(x.rows()
            .iter()
            .map(|r| self.bias + r.iter().map(|&j| self.weights[j as usize]).sum::<f64>())
            .collect())
    }
}

/// `σ(w·x + b)`, kept strictly inside (0, 1).
pub fn score(model: &TrainedModel, x: &FeatureVector) -> Result<f64> {
    let p = sigmoid(model.margin(x)?);
    Ok(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

pub fn classify(model: &TrainedModel, x: &FeatureVector, threshold: Threshold) -> Result<bool> {
    Ok(score(model, x)? > threshold.theta)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    Ok(())
}

fn check_classes(y: &[bool]) -> Result<()> {
    if !y.contains(&true) || !y.contains(&false) {
        return Err(Error::Class("training labels are all identical".into()));
    }
    Ok(())
}

pub fn lr_train(x: &BinaryMatrix, y: &[bool], lambda: f64) -> Result<TrainedModel> {
    lr_train_from(x, y, lambda, None).map(|(m, _)| m)
}

/// Trains from `init = (w, b)`, or from zero.
pub fn lr_train_from(
    x: &BinaryMatrix,
    y: &[bool],
    lambda: f64,
    init: Option<(&[f64], f64)>,
) -> Result<(TrainedModel, TrainReport)> {
    check_lambda(lambda)?;
    check_classes(y)?;
    let problem = Problem::new(x, y)?;
    let start = match init {
        Some((w, b)) => {
            if w.len() != x.n_cols() {
                return Err(Error::Shape {
                    expected: x.n_cols(),
                    actual: w.len(),
                });
            }
            (problem.compact(w), b)
        }
        None => (vec![0.0; problem.m()], 0.0),
    };
    let sol = problem.solve(&problem.counts, lambda, start)?;
    if !sol.report.converged {
        log::warn!(
            "logistic regression stopped after {} iterations with gradient norm {:.3e}",
            sol.report.iterations,
            sol.report.grad_norm
        );
    }
    let model = TrainedModel {
        weights: problem.expand(&sol.w),
        bias: sol.b,
        lambda,
        feature_spec_hash: String::new(),
        dim: x.n_cols(),
    };
    Ok((model, sol.report))
}

/// Cross-validation settings. `folds: None` means leave-one-out.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    /// Mean held-out log-loss for every grid entry, in grid order.
    pub losses: Vec<(f64, f64)>,
}

pub fn loocv_select_lambda(x: &BinaryMatrix, y: &[bool], grid: &[f64]) -> Result<LambdaSelection> {
    cv_select_lambda(x, y, grid, CvOptions::default()).map(|(s, _)| s)
}

/// Held-out log-loss of a point scored at the smoothed positive rate of the
/// remaining training weight.
fn base_rate_loss(pos: f64, neg: f64, label: f64) -> f64 {
    let p = (pos + 1.0) / (pos + neg + 2.0);
    if label > 0.0 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Selects λ by cross-validated log-loss (ties go to the larger λ) and
/// returns the model trained on all rows at that λ.
pub fn cv_select_lambda(
    x: &BinaryMatrix,
    y: &[bool],
    grid: &[f64],
    options: CvOptions,
) -> Result<(LambdaSelection, Option<TrainedModel>)> {
    let n = x.n_rows();
    if n < 2 {
        return Err(Error::Bounds(format!(
            "cross-validation needs at least 2 rows, got {n}"
        )));
    }
    if grid.is_empty() {
        return Err(Error::Parameter("lambda grid is empty".into()));
    }
    grid.iter().try_for_each(|&l| check_lambda(l))?;
    let problem = Problem::new(x, y)?;
    let both = y.contains(&true) && y.contains(&false);

    // Held-out groups: (distinct row, multiplicity) lists.
    let folds: Vec<Vec<(usize, f64)>> = match options.folds {
        None => (0..problem.rows.len()).map(|u| vec![(u, 1.0)]).collect(),
        Some(k) => {
            if k < 2 || k > n {
                return Err(Error::Parameter(format!(
                    "fold count {k} must lie in 2..={n}"
                )));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut seeded_rng(options.seed));
            let mut groups = vec![HashMap::<usize, f64>::new(); k];
            for (pos, &i) in order.iter().enumerate() {
                *groups[pos % k].entry(problem.member[i]).or_default() += 1.0;
            }
            groups
                .into_iter()
                .map(|g| {
                    let mut v: Vec<(usize, f64)> = g.into_iter().collect();
                    v.sort_by_key(|e| e.0);
                    v
                })
                .collect()
        }
    };
    let loo = options.folds.is_none();

    let mut cache: Vec<(f64, f64, Option<Solution>)> = Vec::new();
    let mut losses = Vec::with_capacity(grid.len());
    for &lambda in grid {
        if let Some((_, loss, _)) = cache.iter().find(|(l, _, _)| *l == lambda) {
            losses.push((lambda, *loss));
            continue;
        }
        let full = if both {
            Some(problem.solve(&problem.counts, lambda, (vec![0.0; problem.m()], 0.0))?)
        } else {
            None
        };
        let per_fold = folds
            .par_iter()
            .map(|held| -> Result<f64> {
                let mut counts = problem.counts.clone();
                for &(u, c) in held {
                    counts[u] -= c;
                }
                let (pos, neg) = problem.class_weights(&counts);
                let weight = |u: usize, c: f64| if loo { problem.counts[u] * c } else { c };
                if pos == 0.0 || neg == 0.0 {
                    return Ok(held
                        .iter()
                        .map(|&(u, c)| weight(u, c) * base_rate_loss(pos, neg, problem.y[u]))
                        .sum());
                }
                let start = full.as_ref().expect("both classes present");
                let sol = problem.solve(&counts, lambda, (start.w.clone(), start.b))?;
                Ok(held
                    .iter()
                    .map(|&(u, c)| {
                        let z = problem.margin(u, &sol.w, sol.b);
                        weight(u, c) * softplus(-problem.y[u] * z)
                    })
                    .sum())
            })
            .collect::<Result<Vec<f64>>>()?;
        let loss = per_fold.iter().sum::<f64>() / n as f64;
        losses.push((lambda, loss));
        cache.push((lambda, loss, full));
    }

    let mut best = losses[0];
    for &(lambda, loss) in &losses[1..] {
        if loss < best.1 || (loss == best.1 && lambda > best.0) {
            best = (lambda, loss);
        }
    }
    let model = cache
        .into_iter()
        .find(|(l, _, _)| *l == best.0)
        .and_then(|(_, _, sol)| sol)
        .map(|sol| TrainedModel {
            weights: problem.expand(&sol.w),
            bias: sol.b,
            lambda: best.0,
            feature_spec_hash: String::new(),
            dim: x.n_cols(),
        });
    Ok((
        LambdaSelection {
            lambda: best.0,
            losses,
        },
        model,
    ))
}
