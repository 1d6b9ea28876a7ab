//! Step-size and momentum schedules prescribed by the convergence analysis,
//! estimators for the similarity and bias constants, and the per-cycle
//! quantities the analysis tracks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{cycle_with_trace, Algorithm, OptimizerConfig, OptimizerState};
use crate::oracle::OraclePair;
use crate::rng::RandomToken;
use crate::vector::Vector;

/// Problem constants consumed by the schedules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    #[serde(rename = "L")]
    pub l: f64,
    pub delta: f64,
    pub sigma_f: f64,
    pub sigma_h: f64,
    pub sigma_fmh: f64,
    #[serde(rename = "F0")]
    pub f0: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T")]
    pub t: usize,
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l.is_finite() && self.l > 0.0) {
            return Err(Error::invalid(format!("L must be > 0, got {}", self.l)));
        }
        if self.k == 0 || self.t == 0 {
            return Err(Error::invalid("K and T must be at least 1"));
        }
        for (name, v) in [
            ("delta", self.delta),
            ("sigma_f", self.sigma_f),
            ("sigma_h", self.sigma_h),
            ("sigma_fmh", self.sigma_fmh),
            ("F0", self.f0),
            ("E0", self.e0),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.delta > 2.0 * self.l {
            return Err(Error::invalid(format!(
                "delta = {} exceeds 2L = {}",
                self.delta,
                2.0 * self.l
            )));
        }
        Ok(())
    }
}

/// Numeric constants of the schedules. The analysis states two slightly
/// different sets; [`MAIN_CONSTANTS`] is the default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConstants {
    /// `eta <= 1 / (c delta K)`.
    pub eta_delta_k: f64,
    /// Factor under the square root of the variance branch.
    pub root_factor: f64,
    /// Add `E0 / (8 delta)` to `F0` in the variance branch.
    pub include_e0: bool,
    /// `a >= c delta K eta` for the classical momentum.
    pub mom_a_factor: f64,
    /// `a >= c delta^2 K^2 eta^2` for the variance-reduced momentum.
    pub mvr_a_factor: f64,
    /// Cube-root branch of the variance-reduced step size.
    pub mvr_cube_factor: f64,
}

pub const MAIN_CONSTANTS: ScheduleConstants = ScheduleConstants {
    eta_delta_k: 192.0,
    root_factor: 144.0,
    include_e0: false,
    mom_a_factor: 36.0,
    mvr_a_factor: 1156.0,
    mvr_cube_factor: 18432.0,
};

pub const APPENDIX_CONSTANTS: ScheduleConstants = ScheduleConstants {
    eta_delta_k: 144.0,
    root_factor: 128.0,
    include_e0: true,
    mom_a_factor: 36.0,
    mvr_a_factor: 1152.0,
    mvr_cube_factor: 18432.0,
};

/// `num / den`, or `+inf` when the denominator vanishes.
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Variance weight of the classical-momentum schedule; zero when `sigma_f = 0`.
pub fn beta(p: &TheoryParams) -> f64 {
    if p.sigma_f == 0.0 {
        return 0.0;
    }
    let sf2 = p.sigma_f * p.sigma_f;
    let sh2 = p.sigma_h * p.sigma_h;
    let k = p.k as f64;
    (p.delta / p.l) * (p.sigma_fmh * p.sigma_fmh / sf2 + sh2 / (18.0 * k * sf2))
        + sh2 / (288.0 * k * sf2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomParams {
    pub eta: f64,
    pub a: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvrParams {
    pub eta: f64,
    pub a: f64,
}

pub fn auxmom_params(p: &TheoryParams) -> Result<MomParams> {
    auxmom_params_with(p, &MAIN_CONSTANTS)
}

pub fn auxmom_params_with(p: &TheoryParams, c: &ScheduleConstants) -> Result<MomParams> {
    p.validate()?;
    let (k, t) = (p.k as f64, p.t as f64);
    let b = beta(p);
    let f = if c.include_e0 {
        p.f0 + ratio(p.e0, 8.0 * p.delta)
    } else {
        p.f0
    };
    let variance = ratio(f, c.root_factor * p.l * b * k * k * t * p.sigma_f * p.sigma_f).sqrt();
    let eta = (1.0 / p.l)
        .min(ratio(1.0, c.eta_delta_k * p.delta * k))
        .min(variance);
    let a = (1.0 / t).max(c.mom_a_factor * p.delta * k * eta);
    Ok(MomParams { eta, a, beta: b })
}

pub fn auxmvr_params(p: &TheoryParams) -> Result<MvrParams> {
    auxmvr_params_with(p, &MAIN_CONSTANTS)
}

pub fn auxmvr_params_with(p: &TheoryParams, c: &ScheduleConstants) -> Result<MvrParams> {
    p.validate()?;
    let (k, t) = (p.k as f64, p.t as f64);
    let cube = ratio(
        p.f0,
        c.mvr_cube_factor * p.delta * p.delta * t * p.sigma_fmh * p.sigma_fmh,
    )
    .cbrt()
        / k;
    let smooth = ratio(p.f0, k * t * (p.l / 2.0 + 8.0 * p.delta * k)).sqrt();
    let eta = (1.0 / p.l)
        .min(ratio(1.0, c.eta_delta_k * p.delta * k))
        .min(cube)
        .min(smooth);
    let a = (1.0 / t).max(c.mvr_a_factor * (p.delta * k * eta).powi(2));
    Ok(MvrParams { eta, a })
}

/// Settings of the power-iteration similarity estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub probes: usize,
    pub restarts: usize,
    pub iterations: usize,
    pub tolerance: f64,
    /// Scale of the Gaussian cloud the probe points are drawn from.
    pub radius: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            probes: 20,
            restarts: 5,
            iterations: 50,
            tolerance: 1e-8,
            radius: 1.0,
        }
    }
}

/// `count` points from `N(center, radius^2 I)`.
pub fn probe_points(
    center: &Vector,
    count: usize,
    radius: f64,
    token: RandomToken,
) -> Result<Vec<Vector>> {
    (0..count)
        .map(|i| {
            let z = token.with_draw(i as u64).gaussians(center.dim());
            center.axpy(radius, &Vector::new(z)?)
        })
        .collect()
}

fn unit(v: Vector) -> Option<Vector> {
    let n = v.norm();
    if n > 0.0 && n.is_finite() {
        v.scale(1.0 / n).ok()
    } else {
        None
    }
}

/// Largest absolute eigenvalue of the Hessian of `f - h`, maximized over the
/// probe points. Hessian-vector products are central differences of the
/// gradient difference with step `1e-4 (1 + |x|)`; each probe runs power
/// iteration on the squared operator from several random starts, stopping
/// once an iteration changes the estimate by less than `tolerance * max(1, estimate)`.
pub fn estimate_delta<G>(
    grad_diff: G,
    probes: &[Vector],
    cfg: &EstimatorConfig,
    token: RandomToken,
) -> Result<f64>
where
    G: Fn(&Vector) -> Result<Vector> + Sync,
{
    if probes.is_empty() {
        return Err(Error::invalid("estimate_delta needs at least one probe point"));
    }
    let per_probe = probes
        .par_iter()
        .enumerate()
        .map(|(p, x)| {
            let eps = 1e-4 * (1.0 + x.norm());
            let hv = |v: &Vector| -> Result<Vector> {
                let plus = grad_diff(&x.axpy(eps, v)?)?;
                let minus = grad_diff(&x.axpy(-eps, v)?)?;
                plus.sub(&minus)?.scale(0.5 / eps)
            };
            let mut best = 0.0f64;
            for r in 0..cfg.restarts.max(1) {
                let start = token.fork(p as u64).with_draw(r as u64).gaussians(x.dim());
                let Some(mut v) = unit(Vector::new(start)?) else {
                    continue;
                };
                let mut estimate = hv(&v)?.norm();
                for _ in 0..cfg.iterations {
                    let w = hv(&v)?;
                    let Some(next) = unit(hv(&w)?) else {
                        estimate = 0.0;
                        break;
                    };
                    v = next;
                    let updated = hv(&v)?.norm();
                    let change = (updated - estimate).abs();
                    estimate = updated;
                    if change <= cfg.tolerance * estimate.max(1.0) {
                        break;
                    }
                }
                best = best.max(estimate);
            }
            Ok(best)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_probe.into_iter().fold(0.0, f64::max))
}

/// [`estimate_delta`] on the exact gradients of an oracle pair, probing
/// around `center`.
pub fn estimate_delta_pair(
    oracle: &dyn OraclePair,
    center: &Vector,
    cfg: &EstimatorConfig,
    token: RandomToken,
) -> Result<f64> {
    if !oracle.has_exact() {
        return Err(Error::MissingExactGradient);
    }
    let probes = probe_points(center, cfg.probes, cfg.radius, token.fork(0))?;
    estimate_delta(
        |x: &Vector| oracle.exact_grad_f(x)?.sub(&oracle.exact_grad_h(x)?),
        &probes,
        cfg,
        token.fork(1),
    )
}

/// Constants of an affine bound `|grad f - grad h|^2 <= m |grad f|^2 + zeta_sq`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasEstimate {
    pub m: f64,
    pub zeta_sq: f64,
}

/// Smallest affine bound over the probes, in the sense of minimizing
/// `zeta_sq + m * mean |grad f|^2` among all valid `(m, zeta_sq)`.
///
/// The optimum of this two-variable linear program sits at `m = 0` or at a
/// slope between two probes, so those candidates are enumerated.
pub fn estimate_bias(grad_norms_sq: &[f64], bias_norms_sq: &[f64]) -> Result<BiasEstimate> {
    if grad_norms_sq.is_empty() {
        return Err(Error::invalid("estimate_bias needs at least one probe point"));
    }
    if grad_norms_sq.len() != bias_norms_sq.len() {
        return Err(Error::DimensionMismatch {
            expected: grad_norms_sq.len(),
            got: bias_norms_sq.len(),
        });
    }
    if grad_norms_sq
        .iter()
        .chain(bias_norms_sq)
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("estimate_bias"));
    }
    let g = grad_norms_sq;
    let b = bias_norms_sq;
    let mean_g = g.iter().sum::<f64>() / g.len() as f64;
    let intercept = |m: f64| {
        g.iter()
            .zip(b)
            .map(|(gi, bi)| bi - m * gi)
            .fold(0.0f64, f64::max)
    };
    let mut candidates = vec![0.0];
    for i in 0..g.len() {
        for j in i + 1..g.len() {
            if g[i] != g[j] {
                let slope = (b[j] - b[i]) / (g[j] - g[i]);
                if slope > 0.0 && slope.is_finite() {
                    candidates.push(slope);
                }
            }
        }
    }
    let (mut m, mut zeta_sq) = (0.0, intercept(0.0));
    let mut best = zeta_sq;
    for &c in &candidates[1..] {
        let z = intercept(c);
        let obj = z + c * mean_g;
        if obj < best {
            (m, zeta_sq, best) = (c, z, obj);
        }
    }
    while g.iter().zip(b).any(|(gi, bi)| *bi > m * gi + zeta_sq) {
        zeta_sq = zeta_sq.next_up();
    }
    Ok(BiasEstimate { m, zeta_sq })
}

/// [`estimate_bias`] on exact gradients at `points`.
pub fn estimate_bias_pair(oracle: &dyn OraclePair, points: &[Vector]) -> Result<BiasEstimate> {
    let mut g = Vec::with_capacity(points.len());
    let mut b = Vec::with_capacity(points.len());
    for x in points {
        let gf = oracle.exact_grad_f(x)?;
        let gh = oracle.exact_grad_h(x)?;
        b.push(gf.dist_sq(&gh)?);
        g.push(gf.norm_sq());
    }
    estimate_bias(&g, &b)
}

/// Per-cycle quantities of the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleDiagnostics {
    /// `|m^t - (grad f - grad h)(x^{t-1})|^2`.
    pub e_t: f64,
    /// `|x^t - x^{t-1}|^2`.
    pub delta_t: f64,
    /// Mean of `|grad f(y_k)|^2` over the inner points `y_0 .. y_{K-1}`.
    pub g_t: f64,
}

/// `E`, `Delta` and `G` for a cycle that started at `snapshot`, refreshed the
/// momentum to `m`, visited `inner` (`y_0 .. y_{K-1}`) and ended at `next`.
pub fn diagnostics(
    oracle: &dyn OraclePair,
    snapshot: &Vector,
    m: &Vector,
    inner: &[Vector],
    next: &Vector,
) -> Result<CycleDiagnostics> {
    if !oracle.has_exact() {
        return Err(Error::MissingExactGradient);
    }
    if inner.is_empty() {
        return Err(Error::invalid("diagnostics need at least one inner point"));
    }
    let target = oracle
        .exact_grad_f(snapshot)?
        .sub(&oracle.exact_grad_h(snapshot)?)?;
    let mut g_sum = 0.0;
    for y in inner {
        g_sum += oracle.exact_grad_f(y)?.norm_sq();
    }
    Ok(CycleDiagnostics {
        e_t: m.dist_sq(&target)?,
        delta_t: next.dist_sq(snapshot)?,
        g_t: g_sum / inner.len() as f64,
    })
}

/// Runs one bias-corrected cycle and reports its diagnostics.
pub fn diagnose_cycle(
    state: &OptimizerState,
    oracle: &dyn OraclePair,
    cfg: &OptimizerConfig,
    token: RandomToken,
) -> Result<(OptimizerState, CycleDiagnostics)> {
    if !matches!(cfg.algorithm, Algorithm::AuxMom | Algorithm::AuxMvr) {
        return Err(Error::invalid(format!(
            "diagnostics track grad f - grad h, which {} does not estimate",
            cfg.algorithm.name()
        )));
    }
    let (next, trace) = cycle_with_trace(state, oracle, cfg, token, false)?;
    let mut inner = Vec::with_capacity(trace.points.len());
    inner.push(trace.start.clone());
    inner.extend(trace.points[..trace.points.len() - 1].iter().cloned());
    let d = diagnostics(oracle, &state.x, &next.m, &inner, &next.x)?;
    Ok((next, d))
}
