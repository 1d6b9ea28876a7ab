use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::oracle::{OraclePair, Smooth};
use crate::rng::RandomToken;
use crate::vector::Vector;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Weighted binary logistic loss over dense rows:
/// `sum_i w_i log(1 + exp(-y_i a_i^T x)) + l2_reg/2 |x|^2` with weights summing to one.
#[derive(Debug, Clone)]
pub struct LogisticTask {
    n_features: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    pub l2_reg: f64,
}

impl LogisticTask {
    /// Uniformly weighted task. Labels must be `-1` or `+1`.
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<f64>, l2_reg: f64) -> Result<Self> {
        let n = rows.len();
        let weights = vec![1.0 / n.max(1) as f64; n];
        Self::weighted(rows, labels, weights, l2_reg)
    }

    pub fn weighted(
        rows: Vec<Vec<f64>>,
        labels: Vec<f64>,
        weights: Vec<f64>,
        l2_reg: f64,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("logistic task needs at least one sample"));
        }
        let n_features = rows[0].len();
        if n_features == 0 {
            return Err(Error::invalid("logistic task needs at least one feature"));
        }
        if labels.len() != rows.len() || weights.len() != rows.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: labels.len().min(weights.len()),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid(format!("labels must be -1 or +1, found {bad}")));
        }
        if !weights.iter().all(|&w| w.is_finite() && w > 0.0) {
            return Err(Error::invalid("sample weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("sample weights must sum to 1, got {total}")));
        }
        if !(l2_reg.is_finite() && l2_reg >= 0.0) {
            return Err(Error::invalid("l2_reg must be >= 0"));
        }
        let mut features = Vec::with_capacity(rows.len() * n_features);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_features {
                return Err(Error::invalid(format!(
                    "row {i} has {} features, expected {n_features}",
                    r.len()
                )));
            }
            if !r.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("LogisticTask features"));
            }
            features.extend_from_slice(r);
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(LogisticTask {
            n_features,
            features,
            labels,
            weights,
            cumulative,
            l2_reg,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_samples()).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same features and weights, different labels.
    pub fn relabeled(&self, labels: Vec<f64>) -> Result<Self> {
        Self::weighted(self.rows(), labels, self.weights.clone(), self.l2_reg)
    }

    /// Unweighted sub-task over the given row indices.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let rows = indices.iter().map(|&i| self.row(i).to_vec()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(rows, labels, self.l2_reg)
    }

    fn margin(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    fn check(&self, x: &Vector) -> Result<()> {
        if x.dim() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.dim(),
            });
        }
        Ok(())
    }

    /// Accumulates `coef * grad l_i(x)` into `out`.
    fn add_sample_grad(&self, i: usize, x: &[f64], coef: f64, out: &mut [f64]) {
        let y = self.labels[i];
        let s = -y * sigmoid(-y * self.margin(i, x));
        for (o, a) in out.iter_mut().zip(self.row(i)) {
            *o += coef * s * a;
        }
    }

    fn add_regularizer(&self, x: &[f64], out: &mut [f64]) {
        if self.l2_reg != 0.0 {
            for (o, v) in out.iter_mut().zip(x) {
                *o += self.l2_reg * v;
            }
        }
    }

    /// Minibatch gradient with `batch` samples drawn with replacement,
    /// proportionally to the sample weights.
    pub fn stochastic_grad(&self, x: &Vector, batch: usize, token: RandomToken) -> Result<Vector> {
        self.check(x)?;
        if batch == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        let mut rng = token.rng();
        let mut out = vec![0.0; self.n_features];
        let coef = 1.0 / batch as f64;
        for _ in 0..batch {
            let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
            let i = self
                .cumulative
                .partition_point(|&c| c <= u)
                .min(self.n_samples() - 1);
            self.add_sample_grad(i, x.as_slice(), coef, &mut out);
        }
        self.add_regularizer(x.as_slice(), &mut out);
        Vector::new(out)
    }

    /// Misclassification rate of `sign(a^T x)`.
    pub fn error_rate(&self, x: &Vector) -> Result<f64> {
        self.check(x)?;
        let wrong = (0..self.n_samples())
            .filter(|&i| self.margin(i, x.as_slice()) * self.labels[i] <= 0.0)
            .count();
        Ok(wrong as f64 / self.n_samples() as f64)
    }
}

impl Smooth for LogisticTask {
    fn dim(&self) -> usize {
        self.n_features
    }

    fn value(&self, x: &Vector) -> Result<f64> {
        self.check(x)?;
        let loss: f64 = (0..self.n_samples())
            .map(|i| self.weights[i] * softplus(-self.labels[i] * self.margin(i, x.as_slice())))
            .sum();
        let v = loss + 0.5 * self.l2_reg * x.norm_sq();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("LogisticTask::value"))
        }
    }

    fn grad(&self, x: &Vector) -> Result<Vector> {
        self.check(x)?;
        let mut out = vec![0.0; self.n_features];
        for i in 0..self.n_samples() {
            self.add_sample_grad(i, x.as_slice(), self.weights[i], &mut out);
        }
        self.add_regularizer(x.as_slice(), &mut out);
        Vector::new(out)
    }
}

/// `sum_i w_i s_i (1 - s_i) a_i a_i^T + l2_reg I` with `s_i = sigmoid(a_i^T x)`.
pub fn exact_hessian_logistic(task: &LogisticTask, x: &Vector) -> Result<DMatrix<f64>> {
    task.check(x)?;
    let d = task.n_features;
    let mut hess = DMatrix::<f64>::zeros(d, d);
    for i in 0..task.n_samples() {
        let s = sigmoid(task.margin(i, x.as_slice()));
        let c = task.weights[i] * s * (1.0 - s);
        let a = task.row(i);
        for r in 0..d {
            if a[r] == 0.0 {
                continue;
            }
            for col in 0..d {
                hess[(r, col)] += c * a[r] * a[col];
            }
        }
    }
    for r in 0..d {
        hess[(r, r)] += task.l2_reg;
    }
    Ok(hess)
}

/// Target and helper logistic tasks with minibatch stochastic gradients.
///
/// A batch size of `None` makes the corresponding gradient exact. The two
/// minibatches of one token are drawn from independent child streams since
/// the tasks are built on different samples.
#[derive(Clone)]
pub struct LogisticPair {
    pub f: Arc<LogisticTask>,
    pub h: Arc<LogisticTask>,
    pub batch_size: Option<usize>,
    pub helper_batch_size: Option<usize>,
}

impl LogisticPair {
    pub fn new(f: LogisticTask, h: LogisticTask, batch_size: Option<usize>) -> Result<Self> {
        if f.n_features() != h.n_features() {
            return Err(Error::DimensionMismatch {
                expected: f.n_features(),
                got: h.n_features(),
            });
        }
        if batch_size == Some(0) {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(LogisticPair {
            f: Arc::new(f),
            h: Arc::new(h),
            batch_size,
            helper_batch_size: batch_size,
        })
    }

    /// Uses a different minibatch size for the helper.
    pub fn with_helper_batch(mut self, helper_batch_size: Option<usize>) -> Result<Self> {
        if helper_batch_size == Some(0) {
            return Err(Error::invalid("helper batch size must be at least 1"));
        }
        self.helper_batch_size = helper_batch_size;
        Ok(self)
    }
}

impl OraclePair for LogisticPair {
    fn dim(&self) -> usize {
        self.f.n_features()
    }

    fn grad_f(&self, x: &Vector, token: RandomToken) -> Result<Vector> {
        match self.batch_size {
            Some(b) => self.f.stochastic_grad(x, b, token.fork(1)),
            None => self.f.grad(x),
        }
    }

    fn grad_h(&self, x: &Vector, token: RandomToken) -> Result<Vector> {
        match self.helper_batch_size {
            Some(b) => self.h.stochastic_grad(x, b, token.fork(2)),
            None => self.h.grad(x),
        }
    }

    fn exact_grad_f(&self, x: &Vector) -> Result<Vector> {
        self.f.grad(x)
    }

    fn exact_grad_h(&self, x: &Vector) -> Result<Vector> {
        self.h.grad(x)
    }

    fn f_value(&self, x: &Vector) -> Result<f64> {
        self.f.value(x)
    }

    fn has_exact(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hessian_single_sample_at_origin() {
        let task = LogisticTask::new(vec![vec![1.0, 0.0]], vec![1.0], 0.0).unwrap();
        let h = exact_hessian_logistic(&task, &Vector::zeros(2)).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn hessian_ignores_labels() {
        let rows = vec![vec![1.0, 2.0], vec![-0.5, 0.3], vec![0.7, -1.1]];
        let task = LogisticTask::new(rows, vec![1.0, -1.0, 1.0], 0.1).unwrap();
        let flipped = task.relabeled(vec![-1.0, 1.0, -1.0]).unwrap();
        let x = Vector::new(vec![0.4, -0.9]).unwrap();
        let a = exact_hessian_logistic(&task, &x).unwrap();
        let b = exact_hessian_logistic(&flipped, &x).unwrap();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn hessian_with_zero_features_is_regularizer() {
        let task = LogisticTask::new(vec![vec![0.0; 3]; 4], vec![1.0, -1.0, 1.0, 1.0], 1.0).unwrap();
        let h = exact_hessian_logistic(&task, &Vector::filled(3, 0.7)).unwrap();
        assert_eq!(h, DMatrix::identity(3, 3));
    }

    #[test]
    fn loss_at_origin_is_log_two() {
        let task = LogisticTask::new(vec![vec![1.0], vec![2.0]], vec![1.0, -1.0], 0.0).unwrap();
        assert!((task.value(&Vector::zeros(1)).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(LogisticTask::new(vec![], vec![], 0.0).is_err());
        assert!(LogisticTask::new(vec![vec![1.0]], vec![2.0], 0.0).is_err());
        assert!(LogisticTask::weighted(vec![vec![1.0], vec![1.0]], vec![1.0, 1.0], vec![0.5, 0.6], 0.0).is_err());
        assert!(LogisticTask::weighted(vec![vec![1.0], vec![1.0]], vec![1.0, 1.0], vec![1.0, 0.0], 0.0).is_err());
    }
}
