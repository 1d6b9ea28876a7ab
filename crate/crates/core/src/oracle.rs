//! The stochastic oracle contract shared by every problem and optimizer.
//!
//! An [`OraclePair`] hands out unbiased stochastic gradients of the target `f`,
//! the helper `h`, and their difference. Randomness is addressed by a
//! [`RandomToken`]: passing the same token to `grad_f` and `grad_h` yields
//! noise realizations correlated according to the pair's [`NoiseSpec`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomToken;
use crate::vector::Vector;

/// Additive Gaussian noise model. Each coordinate of the f-noise has variance
/// `sigma_f^2 / dim` (likewise for h) so that `E|noise|^2 = sigma^2`, and the
/// two noises have per-coordinate correlation `rho` under a shared token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub sigma_f: f64,
    #[serde(default)]
    pub sigma_h: f64,
    #[serde(default)]
    pub rho: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::zero()
    }
}

impl NoiseSpec {
    pub const fn zero() -> Self {
        NoiseSpec {
            sigma_f: 0.0,
            sigma_h: 0.0,
            rho: 0.0,
        }
    }

    pub fn new(sigma_f: f64, sigma_h: f64, rho: f64) -> Result<Self> {
        let spec = NoiseSpec {
            sigma_f,
            sigma_h,
            rho,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_f.is_finite() && self.sigma_f >= 0.0) {
            return Err(Error::invalid(format!("sigma_f must be >= 0, got {}", self.sigma_f)));
        }
        if !(self.sigma_h.is_finite() && self.sigma_h >= 0.0) {
            return Err(Error::invalid(format!("sigma_h must be >= 0, got {}", self.sigma_h)));
        }
        if !(self.rho.is_finite() && self.rho.abs() <= 1.0) {
            return Err(Error::invalid(format!("rho must lie in [-1, 1], got {}", self.rho)));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_f == 0.0 && self.sigma_h == 0.0
    }

    /// Variance of the difference estimator: `sigma_f^2 + sigma_h^2 - 2 rho sigma_f sigma_h`.
    pub fn sigma_fmh_sq(&self) -> f64 {
        let v = self.sigma_f.powi(2) + self.sigma_h.powi(2)
            - 2.0 * self.rho * self.sigma_f * self.sigma_h;
        v.max(0.0)
    }

    pub fn sigma_fmh(&self) -> f64 {
        self.sigma_fmh_sq().sqrt()
    }
}

/// Correlated zero-mean Gaussian noise for one token.
pub fn draw_gaussian_noise(
    spec: &NoiseSpec,
    token: RandomToken,
    dim: usize,
) -> Result<(Vector, Vector)> {
    spec.validate()?;
    if dim == 0 {
        return Err(Error::invalid("noise dimension must be at least 1"));
    }
    if spec.is_zero() {
        return Ok((Vector::zeros(dim), Vector::zeros(dim)));
    }
    let z = token.gaussians(2 * dim);
    let (z1, z2) = z.split_at(dim);
    let scale = (dim as f64).sqrt();
    let sf = spec.sigma_f / scale;
    let sh = spec.sigma_h / scale;
    let ortho = (1.0 - spec.rho * spec.rho).max(0.0).sqrt();
    let nf = z1.iter().map(|a| sf * a).collect();
    let nh = z1
        .iter()
        .zip(z2)
        .map(|(a, b)| sh * (spec.rho * a + ortho * b))
        .collect();
    Ok((Vector::new(nf)?, Vector::new(nh)?))
}

/// A deterministic smooth function with an exact gradient.
pub trait Smooth: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> Result<f64>;
    fn grad(&self, x: &Vector) -> Result<Vector>;
}

impl<T: Smooth + ?Sized> Smooth for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &Vector) -> Result<f64> {
        (**self).value(x)
    }
    fn grad(&self, x: &Vector) -> Result<Vector> {
        (**self).grad(x)
    }
}

pub trait OraclePair: Send + Sync {
    fn dim(&self) -> usize;

    fn grad_f(&self, x: &Vector, token: RandomToken) -> Result<Vector>;

    fn grad_h(&self, x: &Vector, token: RandomToken) -> Result<Vector>;

    /// Unbiased estimate of `grad f - grad h` from one shared sample.
    fn grad_f_minus_h(&self, x: &Vector, token: RandomToken) -> Result<Vector> {
        self.grad_f(x, token)?.sub(&self.grad_h(x, token)?)
    }

    fn exact_grad_f(&self, _x: &Vector) -> Result<Vector> {
        Err(Error::MissingExactGradient)
    }

    fn exact_grad_h(&self, _x: &Vector) -> Result<Vector> {
        Err(Error::MissingExactGradient)
    }

    fn f_value(&self, _x: &Vector) -> Result<f64> {
        Err(Error::MissingExactGradient)
    }

    fn has_exact(&self) -> bool {
        false
    }

    /// Analytic noise model, when the pair has one.
    fn noise_spec(&self) -> Option<NoiseSpec> {
        None
    }
}

impl<T: OraclePair + ?Sized> OraclePair for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn grad_f(&self, x: &Vector, token: RandomToken) -> Result<Vector> {
        (**self).grad_f(x, token)
    }
    fn grad_h(&self, x: &Vector, token: RandomToken) -> Result<Vector> {
        (**self).grad_h(x, token)
    }
    fn grad_f_minus_h(&self, x: &Vector, token: RandomToken) -> Result<Vector> {
        (**self).grad_f_minus_h(x, token)
    }
    fn exact_grad_f(&self, x: &Vector) -> Result<Vector> {
        (**self).exact_grad_f(x)
    }
    fn exact_grad_h(&self, x: &Vector) -> Result<Vector> {
        (**self).exact_grad_h(x)
    }
    fn f_value(&self, x: &Vector) -> Result<f64> {
        (**self).f_value(x)
    }
    fn has_exact(&self) -> bool {
        (**self).has_exact()
    }
    fn noise_spec(&self) -> Option<NoiseSpec> {
        (**self).noise_spec()
    }
}

/// Exact gradients of two smooth functions plus correlated Gaussian noise.
#[derive(Clone)]
pub struct NoisyPair<F, H> {
    pub f: F,
    pub h: H,
    pub noise: NoiseSpec,
}

impl<F: Smooth, H: Smooth> NoisyPair<F, H> {
    pub fn new(f: F, h: H, noise: NoiseSpec) -> Result<Self> {
        noise.validate()?;
        if f.dim() != h.dim() {
            return Err(Error::DimensionMismatch {
                expected: f.dim(),
                got: h.dim(),
            });
        }
        Ok(NoisyPair { f, h, noise })
    }
}

impl<F: Smooth, H: Smooth> OraclePair for NoisyPair<F, H> {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn grad_f(&self, x: &Vector, token: RandomToken) -> Result<Vector> {
        let g = self.f.grad(x)?;
        if self.noise.sigma_f == 0.0 {
            return Ok(g);
        }
        let (nf, _) = draw_gaussian_noise(&self.noise, token, self.dim())?;
        g.add(&nf)
    }

    fn grad_h(&self, x: &Vector, token: RandomToken) -> Result<Vector> {
        let g = self.h.grad(x)?;
        if self.noise.sigma_h == 0.0 {
            return Ok(g);
        }
        let (_, nh) = draw_gaussian_noise(&self.noise, token, self.dim())?;
        g.add(&nh)
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

    fn noise_spec(&self) -> Option<NoiseSpec> {
        Some(self.noise)
    }
}
