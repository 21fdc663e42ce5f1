//! ElasticNet-regularised multinomial logistic and linear regression,
//! repeated learning-testing, metrics, baselines and coefficient summaries.
//!
//! Models are fitted on z-scored features; the standardisation is part of
//! the model and is estimated on training rows only.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DesignMatrix, FeatureSet, FeatureTable, Target};
use crate::error::{Error, Result};
use crate::matrix::{self, Sidecar};
use crate::mps;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelHyper {
    /// Inverse regularisation strength.
    pub c: f64,
    pub l1_ratio: f64,
    pub max_iter: usize,
    /// Stopping tolerance on the optimality residual.
    pub tolerance: f64,
    /// Penalty weight of the linear model; `None` uses 1 / C.
    pub regression_alpha: Option<f64>,
}

impl Default for ModelHyper {
    fn default() -> Self {
        Self {
            c: 1.0,
            l1_ratio: 0.5,
            max_iter: 10_000,
            tolerance: 1e-6,
            regression_alpha: None,
        }
    }
}

impl ModelHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid("C must be positive"));
        }
        if !(0.0..=1.0).contains(&self.l1_ratio) {
            return Err(Error::invalid("l1_ratio must lie in [0, 1]"));
        }
        if self.max_iter == 0 || !(self.tolerance > 0.0) {
            return Err(Error::invalid("max_iter and tolerance must be positive"));
        }
        if let Some(a) = self.regression_alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::invalid("regression_alpha must be non-negative"));
            }
        }
        Ok(())
    }

    /// Total penalty weight λ for the chosen model family.
    pub fn penalty(&self, family: Family) -> f64 {
        match family {
            Family::Logistic => 1.0 / self.c,
            Family::Linear => self.regression_alpha.unwrap_or(1.0 / self.c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logistic,
    Linear,
}

/// Per-column z-scoring. Constant columns keep unit scale so they map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let p = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let mut mean = vec![0.0; p];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut sd = vec![0.0; p];
        for row in x {
            for ((s, v), m) in sd.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        for s in &mut sd {
            *s = (*s / n).sqrt();
            if !(*s > 1e-12) {
                *s = 1.0;
            }
        }
        Self { mean, sd }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.sd)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|r| self.transform_row(r)).collect()
    }
}

/// Fitted ElasticNet model. Weights act on standardised features; one row
/// per class for the logistic family, a single row for the linear family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub family: Family,
    /// Class labels in weight-row order (empty for regression).
    pub classes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub standardizer: Standardizer,
    pub iterations: usize,
    pub converged: bool,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.standardizer.mean.len()
    }

    /// Fraction of exactly-zero weights.
    pub fn sparsity(&self) -> f64 {
        let total: usize = self.weights.iter().map(Vec::len).sum();
        if total == 0 {
            return 1.0;
        }
        let zeros = self.weights.iter().flatten().filter(|&&w| w == 0.0).count();
        zeros as f64 / total as f64
    }

    fn check_dim(&self, x: &[Vec<f64>]) -> Result<()> {
        match x.iter().find(|r| r.len() != self.n_features()) {
            Some(r) => Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: r.len(),
            }),
            None => Ok(()),
        }
    }

    /// Linear scores b_k + w_k · z per row.
    pub fn decision_function(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_dim(x)?;
        Ok(x.iter()
            .map(|row| {
                let z = self.standardizer.transform_row(row);
                self.weights
                    .iter()
                    .zip(&self.intercepts)
                    .map(|(w, b)| b + dot(w, &z))
                    .collect()
            })
            .collect())
    }

    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if self.family != Family::Logistic {
            return Err(Error::invalid("probabilities need a logistic model"));
        }
        Ok(self.decision_function(x)?.into_iter().map(|s| softmax(&s)).collect())
    }

    /// Class labels (as f64) for logistic models, predicted values for
    /// linear ones.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        let scores = self.decision_function(x)?;
        Ok(match self.family {
            Family::Linear => scores.into_iter().map(|s| s[0]).collect(),
            Family::Logistic => scores
                .iter()
                .map(|s| self.classes[argmax(s)] as f64)
                .collect(),
        })
    }

    pub fn predict_labels(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        Ok(self.predict(x)?.into_iter().map(|v| v as usize).collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(s: &[f64]) -> usize {
    s.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

fn softmax(s: &[f64]) -> Vec<f64> {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn check_finite(x: &[Vec<f64>]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::invalid("no training rows"));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("ragged feature matrix"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features must be finite"));
    }
    Ok(())
}

/// Smooth part of the multinomial objective (summed cross-entropy plus the
/// ridge term) and its gradient.
struct Multinomial<'a> {
    z: &'a [Vec<f64>],
    y: &'a [usize],
    k: usize,
    ridge: f64,
    lasso: f64,
}

impl Multinomial<'_> {
    fn smooth(&self, w: &[Vec<f64>], b: &[f64], grad: Option<(&mut [Vec<f64>], &mut [f64])>) -> f64 {
        let mut loss = 0.0;
        let mut residuals = vec![vec![0.0; self.k]; self.z.len()];
        for (i, row) in self.z.iter().enumerate() {
            let s: Vec<f64> = (0..self.k).map(|c| b[c] + dot(&w[c], row)).collect();
            let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - s[self.y[i]];
            for c in 0..self.k {
                residuals[i][c] = (s[c] - lse).exp() - if c == self.y[i] { 1.0 } else { 0.0 };
            }
        }
        loss += 0.5 * self.ridge * w.iter().flatten().map(|v| v * v).sum::<f64>();
        if let Some((gw, gb)) = grad {
            for c in 0..self.k {
                gb[c] = residuals.iter().map(|r| r[c]).sum();
                for (j, g) in gw[c].iter_mut().enumerate() {
                    *g = self.ridge * w[c][j];
                }
                for (i, row) in self.z.iter().enumerate() {
                    let r = residuals[i][c];
                    if r != 0.0 {
                        for (g, v) in gw[c].iter_mut().zip(row) {
                            *g += r * v;
                        }
                    }
                }
            }
        }
        loss
    }

    fn objective(&self, w: &[Vec<f64>], b: &[f64]) -> f64 {
        self.smooth(w, b, None) + self.lasso * w.iter().flatten().map(|v| v.abs()).sum::<f64>()
    }
}

/// Multinomial logistic regression minimising
/// Σ cross-entropy + (1/C)·[ρ‖W‖₁ + (1−ρ)/2 ‖W‖²] with unpenalised
/// intercepts, by accelerated proximal gradient with backtracking and
/// adaptive restart.
pub fn fit_logistic_elasticnet(x: &[Vec<f64>], y: &[usize], h: &ModelHyper) -> Result<LinearModel> {
    h.validate()?;
    check_finite(x)?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let mut classes: Vec<usize> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid("logistic regression needs at least two classes"));
    }
    let yi: Vec<usize> = y
        .iter()
        .map(|v| classes.binary_search(v).expect("label in class list"))
        .collect();
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform(x);
    let (k, p) = (classes.len(), z[0].len());
    let lambda = h.penalty(Family::Logistic);
    let prob = Multinomial {
        z: &z,
        y: &yi,
        k,
        ridge: lambda * (1.0 - h.l1_ratio),
        lasso: lambda * h.l1_ratio,
    };

    let mut w = vec![vec![0.0; p]; k];
    let mut b = vec![0.0; k];
    let mut yw = w.clone();
    let mut yb = b.clone();
    let mut gw = vec![vec![0.0; p]; k];
    let mut gb = vec![0.0; k];
    let mut momentum = 1.0f64;
    let mut lipschitz = 1.0f64;
    let mut f_prev = prob.objective(&w, &b);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < h.max_iter {
        iterations += 1;
        let fy = prob.smooth(&yw, &yb, Some((&mut gw, &mut gb)));
        let (nw, nb) = loop {
            let step = 1.0 / lipschitz;
            let nw: Vec<Vec<f64>> = (0..k)
                .map(|c| {
                    (0..p)
                        .map(|j| soft_threshold(yw[c][j] - step * gw[c][j], step * prob.lasso))
                        .collect()
                })
                .collect();
            let nb: Vec<f64> = (0..k).map(|c| yb[c] - step * gb[c]).collect();
            let mut lin = 0.0;
            let mut sq = 0.0;
            for c in 0..k {
                for j in 0..p {
                    let d = nw[c][j] - yw[c][j];
                    lin += gw[c][j] * d;
                    sq += d * d;
                }
                let d = nb[c] - yb[c];
                lin += gb[c] * d;
                sq += d * d;
            }
            let fn_ = prob.smooth(&nw, &nb, None);
            if fn_ <= fy + lin + 0.5 * lipschitz * sq + 1e-12 * fy.abs().max(1.0) || lipschitz > 1e15 {
                break (nw, nb);
            }
            lipschitz *= 2.0;
        };
        // Gradient mapping: zero exactly at a minimiser.
        let residual = (0..k)
            .flat_map(|c| (0..p).map(move |j| (c, j)))
            .map(|(c, j)| (yw[c][j] - nw[c][j]).abs())
            .chain((0..k).map(|c| (yb[c] - nb[c]).abs()))
            .fold(0.0, f64::max)
            * lipschitz;
        let f_new = prob.objective(&nw, &nb);
        let restart = f_new > f_prev;
        let next_momentum = if restart {
            1.0
        } else {
            (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0
        };
        let beta = if restart { 0.0 } else { (momentum - 1.0) / next_momentum };
        for c in 0..k {
            for j in 0..p {
                yw[c][j] = nw[c][j] + beta * (nw[c][j] - w[c][j]);
            }
            yb[c] = nb[c] + beta * (nb[c] - b[c]);
        }
        momentum = next_momentum;
        w = nw;
        b = nb;
        f_prev = f_new;
        lipschitz *= 0.95;
        if residual <= h.tolerance && !restart {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("logistic ElasticNet stopped at max_iter = {} without converging", h.max_iter);
    }
    Ok(LinearModel {
        family: Family::Logistic,
        classes,
        weights: w,
        intercepts: b,
        standardizer,
        iterations,
        converged,
    })
}

/// Linear regression minimising (1/2n)‖y − b − Zw‖² + λ·[ρ‖w‖₁ +
/// (1−ρ)/2 ‖w‖²] by cyclic coordinate descent on standardised features.
/// Sweeps stop once no coordinate moves by more than the tolerance times
/// the target standard deviation (floored at 1).
pub fn fit_linear_elasticnet(x: &[Vec<f64>], y: &[f64], h: &ModelHyper) -> Result<LinearModel> {
    h.validate()?;
    check_finite(x)?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::invalid("linear regression needs at least two rows"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("targets must be finite"));
    }
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform(x);
    let n = z.len() as f64;
    let p = z[0].len();
    let lambda = h.penalty(Family::Linear);
    let (l1, l2) = (lambda * h.l1_ratio, lambda * (1.0 - h.l1_ratio));
    // Column-major copy for the coordinate sweeps.
    let cols: Vec<Vec<f64>> = (0..p).map(|j| z.iter().map(|r| r[j]).collect()).collect();
    let col_sq: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / n).collect();
    let y_mean = y.iter().sum::<f64>() / n;
    let y_sd = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt();
    let tolerance = h.tolerance * y_sd.max(1.0);
    let mut b = y_mean;
    let mut w = vec![0.0; p];
    let mut r: Vec<f64> = y.iter().map(|v| v - b).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < h.max_iter {
        iterations += 1;
        let mut max_delta = 0.0f64;
        for j in 0..p {
            let denom = col_sq[j] + l2;
            if denom <= 0.0 {
                continue;
            }
            let rho = dot(&cols[j], &r) / n + col_sq[j] * w[j];
            let new = soft_threshold(rho, l1) / denom;
            let d = new - w[j];
            if d != 0.0 {
                for (ri, v) in r.iter_mut().zip(&cols[j]) {
                    *ri -= d * v;
                }
                w[j] = new;
                max_delta = max_delta.max(d.abs() * denom.sqrt());
            }
        }
        let shift = r.iter().sum::<f64>() / n;
        if shift != 0.0 {
            b += shift;
            r.iter_mut().for_each(|v| *v -= shift);
        }
        if max_delta.max(shift.abs()) <= tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("linear ElasticNet stopped at max_iter = {} without converging", h.max_iter);
    }
    Ok(LinearModel {
        family: Family::Linear,
        classes: Vec::new(),
        weights: vec![w],
        intercepts: vec![b],
        standardizer,
        iterations,
        converged,
    })
}

/// Largest violation of the ElasticNet optimality conditions over every
/// weight and intercept, on the scale of the fitted objective.
pub fn subgradient_violation(model: &LinearModel, x: &[Vec<f64>], y: &[f64], h: &ModelHyper) -> Result<f64> {
    let z = model.standardizer.transform(x);
    let lambda = h.penalty(model.family);
    let (l1, l2) = (lambda * h.l1_ratio, lambda * (1.0 - h.l1_ratio));
    let (gw, gb): (Vec<Vec<f64>>, Vec<f64>) = match model.family {
        Family::Linear => {
            let n = z.len() as f64;
            let r: Vec<f64> = z
                .iter()
                .zip(y)
                .map(|(row, yi)| model.intercepts[0] + dot(&model.weights[0], row) - yi)
                .collect();
            let gw = (0..model.n_features())
                .map(|j| z.iter().zip(&r).map(|(row, ri)| row[j] * ri).sum::<f64>() / n + l2 * model.weights[0][j])
                .collect();
            (vec![gw], vec![r.iter().sum::<f64>() / n])
        }
        Family::Logistic => {
            let labels: Vec<usize> = y
                .iter()
                .map(|v| {
                    model
                        .classes
                        .iter()
                        .position(|&c| c as f64 == *v)
                        .ok_or_else(|| Error::invalid("label not seen in training"))
                })
                .collect::<Result<_>>()?;
            let prob = Multinomial {
                z: &z,
                y: &labels,
                k: model.classes.len(),
                ridge: l2,
                lasso: l1,
            };
            let mut gw = vec![vec![0.0; model.n_features()]; prob.k];
            let mut gb = vec![0.0; prob.k];
            prob.smooth(&model.weights, &model.intercepts, Some((&mut gw, &mut gb)));
            (gw, gb)
        }
    };
    let mut worst = gb.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    for (wc, gc) in model.weights.iter().zip(&gw) {
        for (&wj, &gj) in wc.iter().zip(gc) {
            let v = if wj != 0.0 {
                (gj + l1 * wj.signum()).abs()
            } else {
                (gj.abs() - l1).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    check_pair(y_true.len(), y_pred.len())?;
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// Unweighted mean of per-class F1 over the labels occurring in either
/// input; a class with no true positives scores 0.
pub fn f1_macro(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    check_pair(y_true.len(), y_pred.len())?;
    let mut labels: Vec<usize> = y_true.iter().chain(y_pred).copied().collect();
    labels.sort_unstable();
    labels.dedup();
    let total: f64 = labels
        .iter()
        .map(|&c| {
            let tp = y_true.iter().zip(y_pred).filter(|&(&t, &p)| t == c && p == c).count() as f64;
            let fp = y_true.iter().zip(y_pred).filter(|&(&t, &p)| t != c && p == c).count() as f64;
            let fn_ = y_true.iter().zip(y_pred).filter(|&(&t, &p)| t == c && p != c).count() as f64;
            if tp == 0.0 {
                0.0
            } else {
                2.0 * tp / (2.0 * tp + fp + fn_)
            }
        })
        .sum();
    Ok(total / labels.len() as f64)
}

pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_pair(y_true.len(), y_pred.len())?;
    Ok(y_true.iter().zip(y_pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / y_true.len() as f64)
}

/// 1 − SS_res / SS_tot; a constant target scores 1 when matched exactly and
/// 0 otherwise.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_pair(y_true.len(), y_pred.len())?;
    let m = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|v| (v - m).powi(2)).sum();
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(if ss_res == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(1.0 - ss_res / ss_tot)
}

fn check_pair(a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(Error::invalid("empty inputs"));
    }
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, found: b });
    }
    Ok(())
}

/// Row-normalised `k × k` confusion matrix (rows: true, columns: predicted).
/// Rows of absent classes stay zero.
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<Vec<Vec<f64>>> {
    check_pair(y_true.len(), y_pred.len())?;
    let mut m = vec![vec![0.0; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(Error::invalid(format!("label outside 0..{k}")));
        }
        m[t][p] += 1.0;
    }
    for row in &mut m {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    Ok(m)
}

/// Samples each prediction from the empirical class distribution of the
/// training labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomPrior {
    pub classes: Vec<usize>,
    pub priors: Vec<f64>,
}

impl RandomPrior {
    pub fn fit(train: &[usize]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::invalid("empty training labels"));
        }
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &c in train {
            *counts.entry(c).or_default() += 1;
        }
        Ok(Self {
            classes: counts.keys().copied().collect(),
            priors: counts.values().map(|&n| n as f64 / train.len() as f64).collect(),
        })
    }

    pub fn predict(&self, n: usize, rng: &mut impl Rng) -> Vec<usize> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (c, p) in self.classes.iter().zip(&self.priors) {
                    acc += p;
                    if u < acc {
                        return *c;
                    }
                }
                *self.classes.last().expect("non-empty")
            })
            .collect()
    }

    /// Expected accuracy on a test set with class shares `test_shares`
    /// (indexed like `classes`).
    pub fn expected_accuracy(&self, test_shares: &[f64]) -> f64 {
        dot(&self.priors, test_shares)
    }
}

pub fn mean_predictor(train: &[f64]) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::invalid("empty training targets"));
    }
    Ok(train.iter().sum::<f64>() / train.len() as f64)
}

/// Random split keeping `test_frac` of every stratum (at least one row of
/// each stratum with two or more rows, never all of them) for testing.
/// Both index lists are ascending.
pub fn stratified_split(strata: &[usize], test_frac: f64, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let mut by_stratum: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in strata.iter().enumerate() {
        by_stratum.entry(s).or_default().push(i);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut idx) in by_stratum {
        idx.shuffle(rng);
        let n = idx.len();
        let lo = usize::from(n >= 2);
        let n_test = ((test_frac * n as f64).round() as usize).clamp(lo, n.saturating_sub(1));
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "target")]
pub enum Task {
    Classify,
    Regress(Target),
}

impl Task {
    pub fn family(self) -> Family {
        match self {
            Task::Classify => Family::Logistic,
            Task::Regress(_) => Family::Linear,
        }
    }

    pub fn metric_names(self) -> [&'static str; 2] {
        match self {
            Task::Classify => ["accuracy", "f1_macro"],
            Task::Regress(_) => ["mae", "r2"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub repeats: usize,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            repeats: 100,
            test_frac: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub test_ids: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
    pub baseline: BTreeMap<String, f64>,
    pub sparsity: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub feature_set: FeatureSet,
    pub config: EvalConfig,
    pub hyper: ModelHyper,
    pub columns: Vec<String>,
    pub n_subjects: usize,
    /// Subjects left out for missing features or targets.
    pub dropped: Vec<String>,
    pub repeats: Vec<RepeatResult>,
    pub summary: BTreeMap<String, MeanSd>,
    pub baseline_summary: BTreeMap<String, MeanSd>,
    pub mean_sparsity: f64,
    /// Mean row-normalised confusion matrix (classification only).
    pub confusion: Option<Vec<Vec<f64>>>,
    /// Fitted weights per repeat, `[repeat][class][feature]`.
    #[serde(skip)]
    pub coefficients: Vec<Vec<Vec<f64>>>,
}

struct Prepared {
    design: DesignMatrix,
    targets: Vec<f64>,
    strata: Vec<usize>,
}

fn prepare(table: &FeatureTable, task: Task, set: FeatureSet) -> Prepared {
    let source = match task {
        Task::Classify => table.clone(),
        Task::Regress(_) => table.carriers(),
    };
    let mut design = source.design_matrix(set);
    let targets: Vec<Option<f64>> = design
        .rows
        .iter()
        .map(|&i| match task {
            Task::Classify => Some(source.rows[i].group.index() as f64),
            Task::Regress(t) => source.rows[i].score(t).filter(|v| v.is_finite()),
        })
        .collect();
    let keep: Vec<bool> = targets.iter().map(Option::is_some).collect();
    if keep.iter().any(|k| !k) {
        let mut filtered = DesignMatrix {
            x: Vec::new(),
            columns: design.columns.clone(),
            subject_ids: Vec::new(),
            groups: Vec::new(),
            rows: Vec::new(),
            dropped: design.dropped.clone(),
        };
        for (i, k) in keep.iter().enumerate() {
            if *k {
                filtered.x.push(design.x[i].clone());
                filtered.subject_ids.push(design.subject_ids[i].clone());
                filtered.groups.push(design.groups[i]);
                filtered.rows.push(design.rows[i]);
            } else {
                filtered.dropped.push(design.subject_ids[i].clone());
            }
        }
        design = filtered;
    }
    let strata = design.labels();
    Prepared {
        targets: targets.into_iter().flatten().collect(),
        strata,
        design,
    }
}

fn repeat_rng(seed: u64, repeat: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repeat as u64);
    rng
}

/// Train and test row indices of one repeat, as drawn by
/// [`repeated_learning_testing`].
pub fn repeat_split(strata: &[usize], cfg: &EvalConfig, repeat: usize) -> (Vec<usize>, Vec<usize>) {
    stratified_split(strata, cfg.test_frac, &mut repeat_rng(cfg.seed, repeat))
}

fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

fn run_repeat(
    data: &Prepared,
    task: Task,
    h: &ModelHyper,
    cfg: &EvalConfig,
    repeat: usize,
) -> Result<(RepeatResult, Vec<Vec<f64>>, Option<Vec<Vec<f64>>>)> {
    let mut rng = repeat_rng(cfg.seed, repeat);
    let (train, test) = stratified_split(&data.strata, cfg.test_frac, &mut rng);
    let (xtr, xte) = (pick(&data.design.x, &train), pick(&data.design.x, &test));
    let (ytr, yte) = (pick(&data.targets, &train), pick(&data.targets, &test));
    let mut metrics = BTreeMap::new();
    let mut baseline = BTreeMap::new();
    let (model, confusion) = match task {
        Task::Classify => {
            let ltr: Vec<usize> = ytr.iter().map(|&v| v as usize).collect();
            let lte: Vec<usize> = yte.iter().map(|&v| v as usize).collect();
            let model = fit_logistic_elasticnet(&xtr, &ltr, h)?;
            let pred = model.predict_labels(&xte)?;
            metrics.insert("accuracy".into(), accuracy(&lte, &pred)?);
            metrics.insert("f1_macro".into(), f1_macro(&lte, &pred)?);
            let prior = RandomPrior::fit(&ltr)?.predict(lte.len(), &mut rng);
            baseline.insert("accuracy".into(), accuracy(&lte, &prior)?);
            baseline.insert("f1_macro".into(), f1_macro(&lte, &prior)?);
            let k = crate::dataset::Group::ALL.len();
            (model, Some(confusion_matrix(&lte, &pred, k)?))
        }
        Task::Regress(_) => {
            let model = fit_linear_elasticnet(&xtr, &ytr, h)?;
            let pred = model.predict(&xte)?;
            metrics.insert("mae".into(), mae(&yte, &pred)?);
            metrics.insert("r2".into(), r2(&yte, &pred)?);
            let m = mean_predictor(&ytr)?;
            let constant = vec![m; yte.len()];
            baseline.insert("mae".into(), mae(&yte, &constant)?);
            baseline.insert("r2".into(), r2(&yte, &constant)?);
            (model, None)
        }
    };
    Ok((
        RepeatResult {
            repeat,
            test_ids: pick(&data.design.subject_ids, &test),
            metrics,
            baseline,
            sparsity: model.sparsity(),
            iterations: model.iterations,
            converged: model.converged,
        },
        model.weights,
        confusion,
    ))
}

fn summarize(results: &[RepeatResult], pick: impl Fn(&RepeatResult) -> &BTreeMap<String, f64>) -> BTreeMap<String, MeanSd> {
    let names: Vec<String> = results.first().map(|r| pick(r).keys().cloned().collect()).unwrap_or_default();
    names
        .into_iter()
        .map(|name| {
            let values: Vec<f64> = results.iter().map(|r| pick(r)[&name]).collect();
            let s = MeanSd::of(&values);
            (name, s)
        })
        .collect()
}

/// Repeated stratified learning-testing. Regression excludes controls and
/// subjects without the target score. Repeats run in parallel on
/// independent random streams derived from the seed; the report does not
/// depend on scheduling.
pub fn repeated_learning_testing(
    table: &FeatureTable,
    task: Task,
    set: FeatureSet,
    h: &ModelHyper,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    h.validate()?;
    if cfg.repeats == 0 {
        return Err(Error::invalid("repeats must be positive"));
    }
    if !(cfg.test_frac > 0.0 && cfg.test_frac < 1.0) {
        return Err(Error::invalid("test_frac must lie in (0, 1)"));
    }
    let data = prepare(table, task, set);
    if data.design.x.len() < 4 {
        return Err(Error::invalid(format!(
            "only {} usable subjects for {}",
            data.design.x.len(),
            set
        )));
    }
    let outcomes = par::map_range(cfg.repeats, |r| run_repeat(&data, task, h, cfg, r));
    let mut repeats = Vec::with_capacity(cfg.repeats);
    let mut coefficients = Vec::with_capacity(cfg.repeats);
    let mut confusions = Vec::new();
    for o in outcomes {
        let (res, weights, confusion) = o?;
        repeats.push(res);
        coefficients.push(weights);
        confusions.extend(confusion);
    }
    let confusion = (!confusions.is_empty()).then(|| {
        let k = confusions[0].len();
        let mut mean = vec![vec![0.0; k]; k];
        for m in &confusions {
            for (a, b) in mean.iter_mut().flatten().zip(m.iter().flatten()) {
                *a += b;
            }
        }
        mean.iter_mut().flatten().for_each(|v| *v /= confusions.len() as f64);
        mean
    });
    Ok(EvalReport {
        task,
        feature_set: set,
        config: *cfg,
        hyper: *h,
        columns: data.design.columns.clone(),
        n_subjects: data.design.x.len(),
        dropped: data.design.dropped.clone(),
        summary: summarize(&repeats, |r| &r.metrics),
        baseline_summary: summarize(&repeats, |r| &r.baseline),
        mean_sparsity: repeats.iter().map(|r| r.sparsity).sum::<f64>() / repeats.len() as f64,
        repeats,
        confusion,
        coefficients,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    /// Fraction of repeats with a non-zero weight.
    pub nonzero: f64,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl CoefficientStats {
    pub fn of(values: &[f64]) -> Self {
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            min: s[0],
            q1: quantile(&s, 0.25),
            median: quantile(&s, 0.5),
            q3: quantile(&s, 0.75),
            max: s[s.len() - 1],
            mean: s.iter().sum::<f64>() / s.len() as f64,
            nonzero: values.iter().filter(|&&v| v != 0.0).count() as f64 / values.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub columns: Vec<String>,
    /// Class label per weight row (a single row for regression).
    pub rows: Vec<String>,
    /// `[row][feature]`.
    pub stats: Vec<Vec<CoefficientStats>>,
    pub mean_sparsity: f64,
}

impl CoefficientReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["row", "feature", "min", "q1", "median", "q3", "max", "mean", "nonzero"])?;
        for (row, stats) in self.rows.iter().zip(&self.stats) {
            for (col, s) in self.columns.iter().zip(stats) {
                let vals = [s.min, s.q1, s.median, s.q3, s.max, s.mean, s.nonzero].map(|v| format!("{v:.6}"));
                let mut rec = vec![row.clone(), col.clone()];
                rec.extend(vals);
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Distribution of each weight across repeats. `coefficients` is
/// `[repeat][row][feature]`.
pub fn coefficient_report(coefficients: &[Vec<Vec<f64>>], columns: &[String], rows: &[String]) -> Result<CoefficientReport> {
    let first = coefficients
        .first()
        .ok_or_else(|| Error::invalid("no fitted models"))?;
    let (k, p) = (first.len(), first.first().map_or(0, Vec::len));
    if coefficients.iter().any(|m| m.len() != k || m.iter().any(|w| w.len() != p)) {
        return Err(Error::invalid("models disagree in shape"));
    }
    if columns.len() != p || rows.len() != k {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: columns.len(),
        });
    }
    let stats = (0..k)
        .map(|c| {
            (0..p)
                .map(|j| {
                    let v: Vec<f64> = coefficients.iter().map(|m| m[c][j]).collect();
                    CoefficientStats::of(&v)
                })
                .collect()
        })
        .collect();
    let total = (coefficients.len() * k * p).max(1) as f64;
    let zeros = coefficients.iter().flatten().flatten().filter(|&&w| w == 0.0).count() as f64;
    Ok(CoefficientReport {
        columns: columns.to_vec(),
        rows: rows.to_vec(),
        stats,
        mean_sparsity: if k * p == 0 { 1.0 } else { zeros / total },
    })
}

/// Mean weight of each row over repeats, restricted to the MPS columns and
/// reshaped to the 41 × 77 modulation grid.
pub fn mps_weight_maps(report: &EvalReport) -> Option<Vec<mps::MpsMatrix>> {
    let start = match report.feature_set {
        FeatureSet::Phonatory => return None,
        FeatureSet::Mps => 0,
        FeatureSet::Combined => report.columns.len() - mps::FEATURE_LEN,
    };
    let first = report.coefficients.first()?;
    let n = report.coefficients.len() as f64;
    (0..first.len())
        .map(|c| {
            let mean: Vec<f64> = (start..start + mps::FEATURE_LEN)
                .map(|j| report.coefficients.iter().map(|m| m[c][j]).sum::<f64>() / n)
                .collect();
            mps::from_feature_vector(&mean).ok()
        })
        .collect()
}

impl EvalReport {
    /// Labels of the weight rows: group labels for classification, the
    /// target key for regression.
    pub fn row_labels(&self) -> Vec<String> {
        match self.task {
            Task::Classify => {
                let k = self.coefficients.first().map_or(0, Vec::len);
                crate::dataset::Group::ALL.iter().take(k).map(|g| g.label().to_string()).collect()
            }
            Task::Regress(t) => vec![t.key().to_string()],
        }
    }

    pub fn coefficient_report(&self) -> Result<CoefficientReport> {
        coefficient_report(&self.coefficients, &self.columns, &self.row_labels())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Raw weights as a `(repeats · rows) × features` matrix.
    pub fn write_coefficients(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows = self.coefficients.iter().map(Vec::len).sum();
        let data: Vec<f64> = self.coefficients.iter().flatten().flatten().copied().collect();
        let meta = serde_json::json!({
            "layout": "repeat-major, then weight row",
            "row_labels": self.row_labels(),
            "repeats": self.coefficients.len(),
            "columns": self.columns,
            "seed": self.config.seed,
        });
        matrix::write_matrix(path, &data, &Sidecar::new(rows, self.columns.len(), meta))
    }

    pub fn write_confusion(&self, path: impl AsRef<Path>) -> Result<()> {
        let Some(m) = &self.confusion else {
            return Err(Error::invalid("no confusion matrix for regression"));
        };
        let data: Vec<f64> = m.iter().flatten().copied().collect();
        let labels: Vec<&str> = crate::dataset::Group::ALL.iter().map(|g| g.label()).collect();
        let meta = serde_json::json!({ "rows": "true group", "cols": "predicted group", "labels": labels, "seed": self.config.seed });
        matrix::write_matrix(path, &data, &Sidecar::new(m.len(), m.len(), meta))
    }
}

fn fmt_mean_sd(m: &MeanSd) -> String {
    format!("{:.2} ({:.2})", m.mean, m.sd)
}

/// Summary table: one row per report plus one baseline row per
/// task, metrics as "mean (sd)".
pub fn write_summary_csv(reports: &[EvalReport], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["task", "target", "model", "feature_set", "metric_1", "value_1", "metric_2", "value_2", "n_subjects", "repeats", "seed"])?;
    let mut baselines_done: Vec<Task> = Vec::new();
    let emit = |w: &mut csv::Writer<std::fs::File>, r: &EvalReport, model: &str, set: &str, summary: &BTreeMap<String, MeanSd>| -> Result<()> {
        let [m1, m2] = r.task.metric_names();
        let (task, target) = match r.task {
            Task::Classify => ("classify", String::new()),
            Task::Regress(t) => ("regress", t.key().to_string()),
        };
        w.write_record([
            task.to_string(),
            target,
            model.to_string(),
            set.to_string(),
            m1.to_string(),
            summary.get(m1).map(fmt_mean_sd).unwrap_or_default(),
            m2.to_string(),
            summary.get(m2).map(fmt_mean_sd).unwrap_or_default(),
            r.n_subjects.to_string(),
            r.config.repeats.to_string(),
            r.config.seed.to_string(),
        ])?;
        Ok(())
    };
    for r in reports {
        if !baselines_done.contains(&r.task) {
            let name = match r.task {
                Task::Classify => "random_prior",
                Task::Regress(_) => "mean_predictor",
            };
            emit(&mut w, r, name, "", &r.baseline_summary)?;
            baselines_done.push(r.task);
        }
        let model = match r.task {
            Task::Classify => "logistic_elasticnet",
            Task::Regress(_) => "linear_elasticnet",
        };
        emit(&mut w, r, model, r.feature_set.key(), &r.summary)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    /// Two classes whose means differ by `gap` in each of `informative`
    /// coordinates, followed by pure-noise coordinates.
    fn blobs(seed: u64, n: usize, gap: f64, informative: usize, noise_features: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let mut row: Vec<f64> = (0..informative).map(|_| gap * c as f64 + gauss(&mut rng)).collect();
            row.extend((0..noise_features).map(|_| gauss(&mut rng)));
            x.push(row);
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn logistic_separates_blobs() {
        let (x, y) = blobs(1, 100, 3.0, 2, 1);
        let m = fit_logistic_elasticnet(&x, &y, &ModelHyper::default()).unwrap();
        assert!(m.converged);
        let acc = accuracy(&y, &m.predict_labels(&x).unwrap()).unwrap();
        assert!(acc >= 0.95, "{acc}");
        let v = subgradient_violation(&m, &x, &y.iter().map(|&c| c as f64).collect::<Vec<_>>(), &ModelHyper::default()).unwrap();
        assert!(v <= 1e-4, "{v}");
    }

    #[test]
    fn logistic_rejects_single_class_and_nan() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(fit_logistic_elasticnet(&x, &[1, 1], &ModelHyper::default()).is_err());
        let bad = vec![vec![f64::NAN], vec![2.0]];
        assert!(fit_logistic_elasticnet(&bad, &[0, 1], &ModelHyper::default()).is_err());
    }

    #[test]
    fn probabilities_and_symmetry() {
        let (mut x, mut y) = blobs(2, 200, 3.0, 1, 0);
        // mirror every point so the fit is symmetric about 1.5
        let mirrored: Vec<Vec<f64>> = x.iter().map(|r| vec![3.0 - r[0]]).collect();
        y.extend(y.clone().iter().map(|c| 1 - c));
        x.extend(mirrored);
        let m = fit_logistic_elasticnet(&x, &y, &ModelHyper::default()).unwrap();
        let p = m.predict_proba(&[vec![1.5], vec![-2.0], vec![5.0]]).unwrap();
        for row in &p {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!((p[0][0] - 0.5).abs() < 0.05, "{:?}", p[0]);
        assert!(p[1][0] > 0.9 && p[2][1] > 0.9);
    }

    #[test]
    fn scores_follow_stored_standardisation() {
        let (x, y) = blobs(3, 60, 2.0, 1, 2);
        let m = fit_logistic_elasticnet(&x, &y, &ModelHyper::default()).unwrap();
        let s = m.decision_function(&x[..3]).unwrap();
        for (row, si) in x[..3].iter().zip(&s) {
            for c in 0..2 {
                let manual: f64 = m.intercepts[c]
                    + (0..3)
                        .map(|j| m.weights[c][j] * ((row[j] - m.standardizer.mean[j]) / m.standardizer.sd[j]))
                        .sum::<f64>();
                assert_eq!(manual, si[c]);
            }
        }
        assert!(m.decision_function(&[vec![1.0]]).is_err());
    }

    #[test]
    fn linear_limits() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 10.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0]).collect();
        let h = ModelHyper {
            regression_alpha: Some(0.0),
            tolerance: 1e-12,
            ..ModelHyper::default()
        };
        let m = fit_linear_elasticnet(&x, &y, &h).unwrap();
        let w_raw = m.weights[0][0] / m.standardizer.sd[0];
        assert!((w_raw - 2.0).abs() < 1e-3, "{w_raw}");
        let strong = ModelHyper {
            regression_alpha: Some(1e6),
            ..ModelHyper::default()
        };
        let m = fit_linear_elasticnet(&x, &y, &strong).unwrap();
        assert_eq!(m.weights[0][0], 0.0);
        let mean = y.iter().sum::<f64>() / 50.0;
        assert!((m.intercepts[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn linear_satisfies_optimality() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<Vec<f64>> = (0..80).map(|_| (0..10).map(|_| gauss(&mut rng)).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0] - r[1] + 0.5 * gauss(&mut rng)).collect();
        let h = ModelHyper::default();
        let m = fit_linear_elasticnet(&x, &y, &h).unwrap();
        assert!(m.converged);
        assert!(subgradient_violation(&m, &x, &y, &h).unwrap() <= 1e-4);
        assert!(m.weights[0][0] > 0.0 && m.weights[0][1] < 0.0);
    }

    #[test]
    fn metric_examples() {
        assert_eq!(accuracy(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert_eq!(f1_macro(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert_eq!(f1_macro(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(r2(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap(), 1.0);
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 10.0], &[5.0, 5.0]).unwrap(), 5.0);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn confusion_rows_normalised() {
        let m = confusion_matrix(&[0, 0, 1, 2, 2, 2], &[0, 1, 1, 2, 0, 2], 3).unwrap();
        for row in &m {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(m[0], vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn random_prior_expected_accuracy() {
        let train: Vec<usize> = [(0, 24), (1, 16), (2, 45)]
            .iter()
            .flat_map(|&(c, n)| std::iter::repeat_n(c, n))
            .collect();
        let rp = RandomPrior::fit(&train).unwrap();
        let shares = rp.priors.clone();
        assert!((rp.expected_accuracy(&shares) - 2857.0 / 7225.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pred = rp.predict(20_000, &mut rng);
        let acc = accuracy(&train.iter().cycle().take(20_000).copied().collect::<Vec<_>>(), &pred).unwrap();
        assert!((acc - 0.395).abs() < 0.02, "{acc}");
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let strata: Vec<usize> = (0..85).map(|i| if i < 24 { 0 } else if i < 40 { 1 } else { 2 }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (train, test) = stratified_split(&strata, 0.2, &mut rng);
        assert_eq!(train.len() + test.len(), 85);
        let count = |idx: &[usize], s| idx.iter().filter(|&&i| strata[i] == s).count();
        assert_eq!([count(&test, 0), count(&test, 1), count(&test, 2)], [5, 3, 9]);
        assert!(train.iter().all(|i| !test.contains(i)));
    }

    #[test]
    fn coefficient_report_basics() {
        let zeros = vec![vec![vec![0.0; 4]; 2]; 3];
        let cols: Vec<String> = (0..4).map(|i| format!("f{i}")).collect();
        let rows = vec!["a".to_string(), "b".to_string()];
        let r = coefficient_report(&zeros, &cols, &rows).unwrap();
        assert_eq!(r.mean_sparsity, 1.0);
        let models: Vec<Vec<Vec<f64>>> = (0..5).map(|i| vec![vec![i as f64, 0.0]]).collect();
        let r = coefficient_report(&models, &cols[..2], &rows[..1]).unwrap();
        let s = r.stats[0][0];
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (0.0, 1.0, 2.0, 3.0, 4.0));
        assert_eq!(s.nonzero, 0.8);
        assert_eq!(r.mean_sparsity, 0.6);
    }

    #[test]
    fn noise_weights_are_mostly_zero() {
        for seed in 0..3 {
            let (x, y) = blobs(seed, 68, 3.0, 1, 100);
            let m = fit_logistic_elasticnet(&x, &y, &ModelHyper::default()).unwrap();
            let zeros = m.weights.iter().flat_map(|w| &w[1..]).filter(|&&v| v == 0.0).count();
            assert!(zeros as f64 >= 0.5 * 200.0, "{zeros}");
            assert!(m.weights.iter().all(|w| w[0] != 0.0));
        }
    }
}
