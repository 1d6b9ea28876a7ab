use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::oracle::{NoiseSpec, NoisyPair, OraclePair, Smooth};
use crate::rng::RandomToken;
use crate::vector::Vector;

/// `q(x) = 1/2 x^T A x - b^T x + c`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
}

impl Quadratic {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::invalid(format!(
                "curvature matrix must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.nrows() == 0 {
            return Err(Error::invalid("quadratic dimension must be at least 1"));
        }
        if b.len() != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        check_symmetric(&a)?;
        Ok(Quadratic { a, b, c })
    }

    pub fn from_rows(rows: &[Vec<f64>], b: &[f64]) -> Result<Self> {
        let a = matrix_from_rows(rows)?;
        Self::new(a, DVector::from_column_slice(b), 0.0)
    }

    /// One-dimensional `1/2 curvature x^2 - shift x + c`.
    pub fn scalar(curvature: f64, shift: f64, c: f64) -> Self {
        Quadratic {
            a: DMatrix::from_element(1, 1, curvature),
            b: DVector::from_element(1, shift),
            c,
        }
    }

    pub fn curvature(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn shift(&self) -> &DVector<f64> {
        &self.b
    }

    fn to_dvector(&self, x: &Vector) -> Result<DVector<f64>> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Ok(DVector::from_column_slice(x.as_slice()))
    }
}

impl Smooth for Quadratic {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn value(&self, x: &Vector) -> Result<f64> {
        let x = self.to_dvector(x)?;
        let v = 0.5 * x.dot(&(&self.a * &x)) - self.b.dot(&x) + self.c;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("Quadratic::value"))
        }
    }

    fn grad(&self, x: &Vector) -> Result<Vector> {
        let x = self.to_dvector(x)?;
        let g = &self.a * x - &self.b;
        Vector::new(g.as_slice().to_vec())
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::invalid("matrix must have at least one row"));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(Error::invalid(format!(
                "matrix row {i} has {} entries, expected {n}",
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    let scale = a.amax().max(1.0);
    for i in 0..a.nrows() {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_norm_sym(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

fn min_eigenvalue_sym(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
}

/// Quadratic target and helper with analytic smoothness and similarity.
///
/// `f(x) = 1/2 x^T A_f x` and `h(x) = 1/2 x^T A_h x - b_h^T x + c_h`, so the
/// Hessian dissimilarity is exactly `|A_f - A_h|_2` at every point.
#[derive(Clone)]
pub struct QuadraticPair {
    inner: NoisyPair<Quadratic, Quadratic>,
    smoothness: f64,
    delta: f64,
}

impl QuadraticPair {
    pub fn target(&self) -> &Quadratic {
        &self.inner.f
    }

    pub fn helper(&self) -> &Quadratic {
        &self.inner.h
    }

    /// `L = max(|A_f|_2, |A_h|_2)`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// `|A_f - A_h|_2`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Minimum of `f`; zero because `A_f` is PSD.
    pub fn f_star(&self) -> f64 {
        0.0
    }
}

pub fn make_quadratic_nd(
    a_f: DMatrix<f64>,
    a_h: DMatrix<f64>,
    b_h: DVector<f64>,
    noise: NoiseSpec,
) -> Result<QuadraticPair> {
    if a_f.shape() != a_h.shape() {
        return Err(Error::DimensionMismatch {
            expected: a_f.nrows(),
            got: a_h.nrows(),
        });
    }
    let dim = a_f.nrows();
    let f = Quadratic::new(a_f, DVector::zeros(dim), 0.0)?;
    let h = Quadratic::new(a_h, b_h, 0.0)?;
    for (name, q) in [("A_f", &f), ("A_h", &h)] {
        let scale = q.a.amax().max(1.0);
        if min_eigenvalue_sym(&q.a) < -1e-12 * scale {
            return Err(Error::invalid(format!("{name} is not positive semidefinite")));
        }
    }
    let delta = spectral_norm_sym(&(&f.a - &h.a));
    let smoothness = spectral_norm_sym(&f.a).max(spectral_norm_sym(&h.a));
    Ok(QuadraticPair {
        inner: NoisyPair::new(f, h, noise)?,
        smoothness,
        delta,
    })
}

/// The one-dimensional pair `f(x) = x^2/2`, `h(x) = (1+delta)/2 (x - zeta/(1+delta))^2`.
#[derive(Clone)]
pub struct ToyPair {
    pub delta: f64,
    pub zeta: f64,
    pair: QuadraticPair,
}

impl ToyPair {
    pub fn smoothness(&self) -> f64 {
        self.pair.smoothness
    }

    pub fn similarity(&self) -> f64 {
        self.pair.delta
    }

    /// `(m, zeta^2)` with `|f' - h'|^2 <= m |f'|^2 + zeta^2` everywhere.
    ///
    /// `f' - h' = zeta - delta x`; for `delta > 0` the bound
    /// `(zeta - delta x)^2 <= 2 delta^2 x^2 + 2 zeta^2` is used.
    pub fn bias_constants(&self) -> (f64, f64) {
        if self.delta == 0.0 {
            (0.0, self.zeta * self.zeta)
        } else {
            (2.0 * self.delta * self.delta, 2.0 * self.zeta * self.zeta)
        }
    }

    pub fn as_quadratic(&self) -> &QuadraticPair {
        &self.pair
    }
}

pub fn make_toy_pair(delta: f64, zeta: f64, noise: NoiseSpec) -> Result<ToyPair> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::invalid(format!("delta must be >= 0, got {delta}")));
    }
    if !zeta.is_finite() {
        return Err(Error::invalid("zeta must be finite"));
    }
    let curv = 1.0 + delta;
    let f = Quadratic::scalar(1.0, 0.0, 0.0);
    let h = Quadratic::scalar(curv, zeta, zeta * zeta / (2.0 * curv));
    let pair = QuadraticPair {
        inner: NoisyPair::new(f, h, noise)?,
        smoothness: curv.max(1.0),
        delta,
    };
    Ok(ToyPair { delta, zeta, pair })
}

macro_rules! delegate_oracle {
    ($ty:ty, $($field:ident).+) => {
        impl OraclePair for $ty {
            fn dim(&self) -> usize {
                self.$($field).+.dim()
            }
            fn grad_f(&self, x: &Vector, token: RandomToken) -> Result<Vector> {
                self.$($field).+.grad_f(x, token)
            }
            fn grad_h(&self, x: &Vector, token: RandomToken) -> Result<Vector> {
                self.$($field).+.grad_h(x, token)
            }
            fn exact_grad_f(&self, x: &Vector) -> Result<Vector> {
                self.$($field).+.exact_grad_f(x)
            }
            fn exact_grad_h(&self, x: &Vector) -> Result<Vector> {
                self.$($field).+.exact_grad_h(x)
            }
            fn f_value(&self, x: &Vector) -> Result<f64> {
                self.$($field).+.f_value(x)
            }
            fn has_exact(&self) -> bool {
                true
            }
            fn noise_spec(&self) -> Option<NoiseSpec> {
                self.$($field).+.noise_spec()
            }
        }
    };
}

delegate_oracle!(QuadraticPair, inner);
delegate_oracle!(ToyPair, pair.inner);

#[cfg(test)]
mod tests {
    use super::*;

    fn x(v: f64) -> Vector {
        Vector::scalar(v)
    }

    #[test]
    fn toy_gradients_match_closed_form() {
        let p = make_toy_pair(1.0, 0.0, NoiseSpec::zero()).unwrap();
        assert_eq!(p.exact_grad_h(&x(2.0)).unwrap()[0], 4.0);
        assert_eq!(p.exact_grad_f(&x(2.0)).unwrap()[0], 2.0);
    }

    #[test]
    fn toy_bias_is_constant_without_curvature_gap() {
        let p = make_toy_pair(0.0, 1.0, NoiseSpec::zero()).unwrap();
        for v in [-3.0, -0.5, 0.0, 1.25, 10.0] {
            let d = p.exact_grad_f(&x(v)).unwrap().sub(&p.exact_grad_h(&x(v)).unwrap()).unwrap();
            assert!((d[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn toy_reports_delta_and_smoothness() {
        let p = make_toy_pair(0.3, 0.0, NoiseSpec::zero()).unwrap();
        assert_eq!(p.similarity(), 0.3);
        assert_eq!(p.smoothness(), 1.3);
        assert!(make_toy_pair(-0.1, 0.0, NoiseSpec::zero()).is_err());
    }

    #[test]
    fn toy_helper_value_matches_definition() {
        let (delta, zeta) = (0.7, 2.5);
        let p = make_toy_pair(delta, zeta, NoiseSpec::zero()).unwrap();
        let v = 1.3;
        let expected = 0.5 * (1.0 + delta) * (v - zeta / (1.0 + delta)).powi(2);
        assert!((p.pair.helper().value(&x(v)).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn quadratic_delta_is_spectral_norm_of_difference() {
        let eye = DMatrix::<f64>::identity(3, 3);
        let p = make_quadratic_nd(eye.clone(), eye.clone(), DVector::zeros(3), NoiseSpec::zero()).unwrap();
        assert_eq!(p.delta(), 0.0);
        let p = make_quadratic_nd(eye.clone(), &eye * 2.0, DVector::zeros(3), NoiseSpec::zero()).unwrap();
        assert!((p.delta() - 1.0).abs() < 1e-12);
        assert!((p.smoothness() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_constant_bias() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let p = make_quadratic_nd(a.clone(), a, DVector::from_vec(vec![0.0, 5.0]), NoiseSpec::zero()).unwrap();
        assert_eq!(p.delta(), 0.0);
        for pt in [[0.0, 0.0], [1.0, -2.0], [7.5, 3.0]] {
            let v = Vector::new(pt.to_vec()).unwrap();
            let d = p.exact_grad_f(&v).unwrap().sub(&p.exact_grad_h(&v).unwrap()).unwrap();
            assert!((d.norm() - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_rejects_bad_matrices() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let eye = DMatrix::<f64>::identity(2, 2);
        assert!(make_quadratic_nd(asym, eye.clone(), DVector::zeros(2), NoiseSpec::zero()).is_err());
        let eye3 = DMatrix::<f64>::identity(3, 3);
        assert!(make_quadratic_nd(eye.clone(), eye3, DVector::zeros(2), NoiseSpec::zero()).is_err());
        assert!(make_quadratic_nd(eye.clone(), eye, DVector::zeros(3), NoiseSpec::zero()).is_err());
        let neg = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(make_quadratic_nd(neg, DMatrix::identity(2, 2), DVector::zeros(2), NoiseSpec::zero()).is_err());
    }
}
