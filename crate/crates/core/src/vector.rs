//! Dimension-checked dense vectors.
//!
//! Every arithmetic operation checks operand lengths and rejects results
//! containing NaN or infinities, so a misconfigured step size surfaces as an
//! error at the first offending operation.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("vector dimension must be at least 1"));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Vector::new"));
        }
        Ok(Vector(data))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "vector dimension must be at least 1");
        Vector(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        assert!(dim >= 1 && value.is_finite());
        Vector(vec![value; dim])
    }

    pub fn scalar(value: f64) -> Self {
        Self::filled(1, value)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    fn check_dim(&self, other: &Vector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }

    fn finish(data: Vec<f64>, op: &'static str) -> Result<Vector> {
        if data.iter().all(|v| v.is_finite()) {
            Ok(Vector(data))
        } else {
            Err(Error::NonFinite(op))
        }
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        self.check_dim(other)?;
        let data = self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect();
        Self::finish(data, "add")
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        self.check_dim(other)?;
        let data = self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect();
        Self::finish(data, "sub")
    }

    pub fn scale(&self, alpha: f64) -> Result<Vector> {
        let data = self.0.iter().map(|a| alpha * a).collect();
        Self::finish(data, "scale")
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &Vector) -> Result<Vector> {
        self.check_dim(other)?;
        let data = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Self::finish(data, "axpy")
    }

    /// `alpha * self + beta * other`
    pub fn lincomb(&self, alpha: f64, beta: f64, other: &Vector) -> Result<Vector> {
        self.check_dim(other)?;
        let data = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Self::finish(data, "lincomb")
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(&self, other: &Vector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// Arithmetic mean of a non-empty set of equal-length vectors.
    pub fn mean(vectors: &[Vector]) -> Result<Vector> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::invalid("mean of an empty set of vectors"))?;
        let mut acc = vec![0.0; first.dim()];
        for v in vectors {
            first.check_dim(v)?;
            for (a, b) in acc.iter_mut().zip(&v.0) {
                *a += b;
            }
        }
        let n = vectors.len() as f64;
        Self::finish(acc.into_iter().map(|a| a / n).collect(), "mean")
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(data: Vec<f64>) -> Result<Self> {
        Vector::new(data)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mismatched_lengths_are_rejected() {
        let a = Vector::zeros(2);
        let b = Vector::zeros(3);
        assert!(matches!(
            a.add(&b),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
        assert!(a.sub(&b).is_err());
        assert!(a.axpy(1.0, &b).is_err());
        assert!(a.dot(&b).is_err());
        assert!(Vector::mean(&[a, b]).is_err());
    }

    #[test]
    fn non_finite_results_are_rejected() {
        let a = Vector::filled(2, 1e308);
        assert!(matches!(a.scale(10.0), Err(Error::NonFinite(_))));
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![]).is_err());
    }

    #[test]
    fn basic_arithmetic() {
        let a = Vector::new(vec![1.0, 2.0]).unwrap();
        let b = Vector::new(vec![3.0, -1.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().as_slice(), &[4.0, 1.0]);
        assert_eq!(a.axpy(2.0, &b).unwrap().as_slice(), &[7.0, 0.0]);
        assert_eq!(a.dot(&b).unwrap(), 1.0);
        assert_eq!(b.norm_sq(), 10.0);
        assert_eq!(Vector::mean(&[a, b]).unwrap().as_slice(), &[2.0, 0.5]);
    }
}
