//! Multi-helper orchestration: each cycle samples `S` of `N` helpers, every
//! sampled helper refreshes its own momentum and runs `K` inner steps from
//! the shared snapshot, and the new snapshot is the average of their last
//! iterates.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{
    aux_inner_loop, cycle_token, momentum_token, sampling_token, OptimizerConfig,
};
use crate::oracle::{OraclePair, Smooth};
use crate::rng::{sample_without_replacement, RandomToken};
use crate::vector::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecentralizedVariant {
    #[serde(rename = "AuxMOM")]
    AuxMom,
    #[serde(rename = "AuxMVR")]
    AuxMvr,
}

/// `N` oracle pairs sharing the same target `f`, of which `S` are sampled per cycle.
#[derive(Clone)]
pub struct HelperSet {
    helpers: Vec<Arc<dyn OraclePair>>,
    sample_size: usize,
}

impl HelperSet {
    pub fn new(helpers: Vec<Arc<dyn OraclePair>>, sample_size: usize) -> Result<Self> {
        let n = helpers.len();
        if n == 0 {
            return Err(Error::invalid("helper set must not be empty"));
        }
        if sample_size == 0 || sample_size > n {
            return Err(Error::invalid(format!(
                "sample size S = {sample_size} must lie in [1, {n}]"
            )));
        }
        let dim = helpers[0].dim();
        if let Some(h) = helpers.iter().find(|h| h.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: h.dim(),
            });
        }
        Ok(HelperSet {
            helpers,
            sample_size,
        })
    }

    pub fn len(&self) -> usize {
        self.helpers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.helpers.is_empty()
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn dim(&self) -> usize {
        self.helpers[0].dim()
    }

    pub fn helper(&self, i: usize) -> &dyn OraclePair {
        self.helpers[i].as_ref()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecentralizedState {
    pub x_prev: Vector,
    pub x: Vector,
    /// One momentum per helper; unsampled helpers keep theirs.
    pub momenta: Vec<Vector>,
    pub t: usize,
    pub calls_f: u64,
    pub calls_h: u64,
    /// Helpers sampled in the last cycle, ascending.
    pub last_sampled: Vec<usize>,
}

impl DecentralizedState {
    /// Zero momenta for `n_helpers` helpers.
    pub fn new(x0: Vector, n_helpers: usize) -> Self {
        let dim = x0.dim();
        DecentralizedState {
            x_prev: x0.clone(),
            x: x0,
            momenta: vec![Vector::zeros(dim); n_helpers],
            t: 0,
            calls_f: 0,
            calls_h: 0,
            last_sampled: Vec::new(),
        }
    }
}

/// Uniform sample of `S` helpers without replacement, ascending.
pub fn sample_helpers(cycle: RandomToken, n: usize, s: usize) -> Vec<usize> {
    sample_without_replacement(sampling_token(cycle), n, s)
}

pub fn decentralized_cycle(
    state: &DecentralizedState,
    helpers: &HelperSet,
    cfg: &OptimizerConfig,
    token: RandomToken,
    variant: DecentralizedVariant,
) -> Result<DecentralizedState> {
    cfg.validate()?;
    if state.momenta.len() != helpers.len() {
        return Err(Error::invalid(format!(
            "state holds {} momenta for {} helpers",
            state.momenta.len(),
            helpers.len()
        )));
    }
    let sampled = sample_helpers(token, helpers.len(), helpers.sample_size());
    let x = &state.x;
    let tok = momentum_token(token);

    // one target gradient per cycle, broadcast to every sampled helper
    let lead = helpers.helper(sampled[0]);
    let g_f = lead.grad_f(x, tok)?;
    let g_f_prev = match variant {
        DecentralizedVariant::AuxMom => None,
        DecentralizedVariant::AuxMvr => Some(lead.grad_f(&state.x_prev, tok)?),
    };

    let outcomes = sampled
        .par_iter()
        .map(|&i| -> Result<(Vector, Vector)> {
            let h = helpers.helper(i);
            let g = g_f.sub(&h.grad_h(x, tok)?)?;
            let m_old = &state.momenta[i];
            let m = match &g_f_prev {
                None => m_old.lincomb(1.0 - cfg.a, cfg.a, &g)?,
                Some(gp) => {
                    let g_prev = gp.sub(&h.grad_h(&state.x_prev, tok)?)?;
                    m_old
                        .lincomb(1.0 - cfg.a, cfg.a, &g)?
                        .axpy(1.0 - cfg.a, &g.sub(&g_prev)?)?
                }
            };
            let points = aux_inner_loop(x, &m, h, cfg.eta, cfg.k, token, i)?;
            let last = points.last().cloned().unwrap_or_else(|| x.clone());
            Ok((m, last))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut momenta = state.momenta.clone();
    let mut finals = Vec::with_capacity(outcomes.len());
    for (&i, (m, y)) in sampled.iter().zip(outcomes) {
        momenta[i] = m;
        finals.push(y);
    }
    let x_next = if finals.len() == 1 {
        finals.pop().expect("one sampled helper")
    } else {
        Vector::mean(&finals)?
    };

    let s = sampled.len() as u64;
    let (f_calls, h_per_helper) = match variant {
        DecentralizedVariant::AuxMom => (1, 1),
        DecentralizedVariant::AuxMvr => (2, 2),
    };
    Ok(DecentralizedState {
        x_prev: state.x.clone(),
        x: x_next,
        momenta,
        t: state.t + 1,
        calls_f: state.calls_f + f_calls,
        calls_h: state.calls_h + s * (h_per_helper + cfg.k as u64),
        last_sampled: sampled,
    })
}

/// Runs `cfg.t` decentralized cycles and returns the snapshots `x^0 .. x^T`
/// along with the final state.
pub fn run_decentralized(
    helpers: &HelperSet,
    initial: DecentralizedState,
    cfg: &OptimizerConfig,
    root: RandomToken,
    variant: DecentralizedVariant,
) -> Result<(DecentralizedState, Vec<Vector>)> {
    let mut state = initial;
    let mut snapshots = vec![state.x.clone()];
    for t in 1..=cfg.t {
        state = decentralized_cycle(&state, helpers, cfg, cycle_token(root, t), variant)?;
        snapshots.push(state.x.clone());
    }
    Ok((state, snapshots))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakConvexityReport {
    pub holds: bool,
    /// Pair violating the midpoint inequality, with the size of the violation.
    pub witness: Option<(Vector, Vector, f64)>,
}

/// Tests convexity of `x -> f(x) + delta |x|^2` through the midpoint
/// inequality on `points` random pairs drawn from a Gaussian of scale `radius`.
pub fn check_weak_convexity(
    f: &dyn Smooth,
    delta: f64,
    points: usize,
    radius: f64,
    token: RandomToken,
) -> Result<WeakConvexityReport> {
    let dim = f.dim();
    let phi = |x: &Vector| -> Result<f64> { Ok(f.value(x)? + delta * x.norm_sq()) };
    for i in 0..points {
        let draws = token.with_draw(i as u64).gaussians(2 * dim);
        let x = Vector::new(draws[..dim].iter().map(|v| radius * v).collect())?;
        let y = Vector::new(draws[dim..].iter().map(|v| radius * v).collect())?;
        let mid = x.lincomb(0.5, 0.5, &y)?;
        let (px, py, pm) = (phi(&x)?, phi(&y)?, phi(&mid)?);
        let violation = pm - 0.5 * (px + py);
        let tol = 1e-10 * (1.0 + px.abs() + py.abs() + pm.abs());
        if violation > tol {
            return Ok(WeakConvexityReport {
                holds: false,
                witness: Some((x, y, violation)),
            });
        }
    }
    Ok(WeakConvexityReport {
        holds: true,
        witness: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_toy_pair, Quadratic};
    use crate::optimizers::{auxmom_cycle, Algorithm, OptimizerState};
    use crate::oracle::NoiseSpec;

    #[test]
    fn single_helper_matches_auxmom_cycle_bitwise() {
        let pair = make_toy_pair(0.4, 2.0, NoiseSpec::new(0.5, 0.7, 0.3).unwrap()).unwrap();
        let arc: Arc<dyn OraclePair> = Arc::new(pair.clone());
        let set = HelperSet::new(vec![arc], 1).unwrap();
        let cfg = OptimizerConfig::new(Algorithm::AuxMom, 0.1, 0.3, 5, 10);
        let root = RandomToken::root(3);
        let x0 = Vector::scalar(1.5);
        let mut dec = DecentralizedState::new(x0.clone(), 1);
        let mut single = OptimizerState::new(x0, Vector::zeros(1));
        for t in 1..=cfg.t {
            let tok = cycle_token(root, t);
            dec = decentralized_cycle(&dec, &set, &cfg, tok, DecentralizedVariant::AuxMom).unwrap();
            single = auxmom_cycle(&single, &pair, &cfg, tok).unwrap();
            assert_eq!(dec.x.as_slice(), single.x.as_slice());
            assert_eq!(dec.momenta[0].as_slice(), single.m.as_slice());
        }
    }

    #[test]
    fn unsampled_momenta_are_untouched() {
        let helpers: Vec<Arc<dyn OraclePair>> = (0..5)
            .map(|i| Arc::new(make_toy_pair(0.1 * i as f64, i as f64, NoiseSpec::zero()).unwrap()) as Arc<dyn OraclePair>)
            .collect();
        let set = HelperSet::new(helpers, 2).unwrap();
        let cfg = OptimizerConfig::new(Algorithm::AuxMom, 0.1, 0.5, 3, 1);
        let mut state = DecentralizedState::new(Vector::scalar(1.0), 5);
        for (i, m) in state.momenta.iter_mut().enumerate() {
            *m = Vector::scalar(i as f64 + 0.25);
        }
        for t in 1..20 {
            let next = decentralized_cycle(&state, &set, &cfg, cycle_token(RandomToken::root(8), t), DecentralizedVariant::AuxMvr).unwrap();
            assert_eq!(next.last_sampled.len(), 2);
            for i in 0..5 {
                if !next.last_sampled.contains(&i) {
                    assert_eq!(next.momenta[i], state.momenta[i]);
                }
            }
            state = next;
        }
    }

    #[test]
    fn sample_size_is_checked() {
        let h: Arc<dyn OraclePair> = Arc::new(make_toy_pair(0.0, 0.0, NoiseSpec::zero()).unwrap());
        assert!(HelperSet::new(vec![h.clone()], 2).is_err());
        assert!(HelperSet::new(vec![h], 0).is_err());
        assert!(HelperSet::new(vec![], 1).is_err());
    }

    #[test]
    fn weak_convexity_examples() {
        let convex = Quadratic::scalar(2.0, 1.0, 0.0);
        let r = check_weak_convexity(&convex, 0.0, 200, 3.0, RandomToken::root(1)).unwrap();
        assert!(r.holds);
        // f(x) = -x^2
        let concave = Quadratic::scalar(-2.0, 0.0, 0.0);
        let r = check_weak_convexity(&concave, 0.5, 200, 3.0, RandomToken::root(1)).unwrap();
        assert!(!r.holds);
        let (_, _, v) = r.witness.unwrap();
        assert!(v > 0.0);
        let r = check_weak_convexity(&concave, 1.0, 200, 3.0, RandomToken::root(1)).unwrap();
        assert!(r.holds);
    }
}
