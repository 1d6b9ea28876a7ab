use crate::error::{Error, Result};
use crate::optimizers::{
    inner_token, momentum_token, Algorithm, OptimizerConfig, OptimizerState,
};
use crate::oracle::OraclePair;
use crate::rng::RandomToken;
use crate::vector::Vector;

/// What happened inside one cycle, for trajectory recording.
#[derive(Debug, Clone)]
pub struct CycleTrace {
    /// `y_0 = x^{t-1}`.
    pub start: Vector,
    /// `y_1 .. y_K`.
    pub points: Vec<Vector>,
    /// `|m^t - target|^2` right after the momentum refresh (needs exact gradients).
    pub momentum_error: Option<f64>,
}

/// One deterministic bias-corrected local step:
/// `y - eta (grad h(y) - grad h(x) + grad f(x))`.
pub fn local_update_step(
    y: &Vector,
    x_snapshot: &Vector,
    oracle: &dyn OraclePair,
    eta: f64,
) -> Result<Vector> {
    let d = oracle
        .exact_grad_h(y)?
        .sub(&oracle.exact_grad_h(x_snapshot)?)?
        .add(&oracle.exact_grad_f(x_snapshot)?)?;
    y.axpy(-eta, &d)
}

/// `K` steps of `y <- y - eta (g_h(y) + m)` from `start`, helper stream `helper`.
pub(crate) fn aux_inner_loop(
    start: &Vector,
    m: &Vector,
    oracle: &dyn OraclePair,
    eta: f64,
    k_steps: usize,
    cycle: RandomToken,
    helper: usize,
) -> Result<Vec<Vector>> {
    let mut points = Vec::with_capacity(k_steps);
    let mut y = start.clone();
    for k in 0..k_steps {
        let d = oracle.grad_h(&y, inner_token(cycle, helper, k))?.add(m)?;
        y = y.axpy(-eta, &d)?;
        points.push(y.clone());
    }
    Ok(points)
}

fn difference_error(oracle: &dyn OraclePair, m: &Vector, x: &Vector) -> Result<f64> {
    let target = oracle.exact_grad_f(x)?.sub(&oracle.exact_grad_h(x)?)?;
    m.dist_sq(&target)
}

fn f_error(oracle: &dyn OraclePair, m: &Vector, x: &Vector) -> Result<f64> {
    m.dist_sq(&oracle.exact_grad_f(x)?)
}

fn require(cfg: &OptimizerConfig, ok: bool, op: &str) -> Result<()> {
    cfg.validate()?;
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{op} called with algorithm {}",
            cfg.algorithm.name()
        )))
    }
}

fn finish(
    state: &OptimizerState,
    m: Vector,
    points: Vec<Vector>,
    calls: (u64, u64, u64),
) -> OptimizerState {
    let last = points.last().cloned().unwrap_or_else(|| state.x.clone());
    OptimizerState {
        x_prev: state.x.clone(),
        x: last.clone(),
        y: last,
        m,
        t: state.t + 1,
        k: points.len(),
        calls_f: state.calls_f + calls.0,
        calls_h: state.calls_h + calls.1,
        calls_fmh: state.calls_fmh + calls.2,
    }
}

fn naive(
    state: &OptimizerState,
    oracle: &dyn OraclePair,
    cfg: &OptimizerConfig,
    token: RandomToken,
    diag: bool,
) -> Result<(OptimizerState, CycleTrace)> {
    let x = &state.x;
    let g = oracle.grad_f(x, momentum_token(token))?;
    let mut points = Vec::with_capacity(cfg.k);
    let mut y = x.axpy(-cfg.eta, &g)?;
    points.push(y.clone());
    for k in 1..cfg.k {
        y = y.axpy(-cfg.eta, &oracle.grad_h(&y, inner_token(token, 0, k))?)?;
        points.push(y.clone());
    }
    let err = if diag { Some(f_error(oracle, &g, x)?) } else { None };
    let next = finish(state, g, points.clone(), (1, cfg.k as u64 - 1, 0));
    Ok((next, trace(x, points, err)))
}

fn auxmom(
    state: &OptimizerState,
    oracle: &dyn OraclePair,
    cfg: &OptimizerConfig,
    token: RandomToken,
    diag: bool,
) -> Result<(OptimizerState, CycleTrace)> {
    let x = &state.x;
    let g = oracle.grad_f_minus_h(x, momentum_token(token))?;
    let m = state.m.lincomb(1.0 - cfg.a, cfg.a, &g)?;
    let points = aux_inner_loop(x, &m, oracle, cfg.eta, cfg.k, token, 0)?;
    let err = if diag { Some(difference_error(oracle, &m, x)?) } else { None };
    let next = finish(state, m, points.clone(), (0, cfg.k as u64, 1));
    Ok((next, trace(x, points, err)))
}

fn auxmvr(
    state: &OptimizerState,
    oracle: &dyn OraclePair,
    cfg: &OptimizerConfig,
    token: RandomToken,
    diag: bool,
) -> Result<(OptimizerState, CycleTrace)> {
    let x = &state.x;
    let tok = momentum_token(token);
    let g = oracle.grad_f_minus_h(x, tok)?;
    let g_prev = oracle.grad_f_minus_h(&state.x_prev, tok)?;
    let m = state
        .m
        .lincomb(1.0 - cfg.a, cfg.a, &g)?
        .axpy(1.0 - cfg.a, &g.sub(&g_prev)?)?;
    let points = aux_inner_loop(x, &m, oracle, cfg.eta, cfg.k, token, 0)?;
    let err = if diag { Some(difference_error(oracle, &m, x)?) } else { None };
    let next = finish(state, m, points.clone(), (0, cfg.k as u64, 2));
    Ok((next, trace(x, points, err)))
}

fn auxmom_v0(
    state: &OptimizerState,
    oracle: &dyn OraclePair,
    cfg: &OptimizerConfig,
    token: RandomToken,
    diag: bool,
) -> Result<(OptimizerState, CycleTrace)> {
    let x = &state.x;
    let g = oracle.grad_f(x, momentum_token(token))?;
    let m = state.m.lincomb(1.0 - cfg.a, cfg.a, &g)?;
    let mut points = Vec::with_capacity(cfg.k);
    let mut y = x.clone();
    for k in 0..cfg.k {
        let tok = inner_token(token, 0, k);
        let d = oracle
            .grad_h(&y, tok)?
            .sub(&oracle.grad_h(x, tok)?)?
            .add(&m)?;
        y = y.axpy(-cfg.eta, &d)?;
        points.push(y.clone());
    }
    let err = if diag { Some(f_error(oracle, &m, x)?) } else { None };
    let next = finish(state, m, points.clone(), (1, 2 * cfg.k as u64, 0));
    Ok((next, trace(x, points, err)))
}

fn baseline(
    state: &OptimizerState,
    oracle: &dyn OraclePair,
    cfg: &OptimizerConfig,
    token: RandomToken,
    diag: bool,
) -> Result<(OptimizerState, CycleTrace)> {
    let on_helper = cfg.finetune_helper_steps();
    let mut y = state.x.clone();
    let mut y_prev = state.x_prev.clone();
    let mut m = state.m.clone();
    let (mut cf, mut ch) = (0u64, 0u64);
    let mut err = None;
    let mut points = Vec::with_capacity(cfg.k);
    for k in 0..cfg.k {
        let tok = inner_token(token, 0, k);
        let step = state.t * cfg.k + k;
        let mut uses_helper = false;
        match cfg.algorithm {
            Algorithm::Gd => {
                m = oracle.exact_grad_f(&y)?;
                cf += 1;
            }
            Algorithm::SgdM => {
                m = m.lincomb(1.0 - cfg.a, cfg.a, &oracle.grad_f(&y, tok)?)?;
                cf += 1;
            }
            Algorithm::Mvr => {
                let g = oracle.grad_f(&y, tok)?;
                let g_prev = oracle.grad_f(&y_prev, tok)?;
                m = m
                    .lincomb(1.0 - cfg.a, cfg.a, &g)?
                    .axpy(1.0 - cfg.a, &g.sub(&g_prev)?)?;
                cf += 2;
            }
            Algorithm::FineTune { .. } => {
                uses_helper = step < on_helper;
                let g = if uses_helper {
                    ch += 1;
                    oracle.grad_h(&y, tok)?
                } else {
                    cf += 1;
                    oracle.grad_f(&y, tok)?
                };
                m = m.lincomb(1.0 - cfg.a, cfg.a, &g)?;
            }
            other => {
                return Err(Error::invalid(format!(
                    "{} is not a baseline algorithm",
                    other.name()
                )))
            }
        }
        if diag && k == 0 {
            let target = if uses_helper {
                oracle.exact_grad_h(&y)?
            } else {
                oracle.exact_grad_f(&y)?
            };
            err = Some(m.dist_sq(&target)?);
        }
        y_prev = y.clone();
        y = y.axpy(-cfg.eta, &m)?;
        points.push(y.clone());
    }
    let next = OptimizerState {
        x_prev: y_prev,
        x: y.clone(),
        y,
        m,
        t: state.t + 1,
        k: cfg.k,
        calls_f: state.calls_f + cf,
        calls_h: state.calls_h + ch,
        calls_fmh: state.calls_fmh,
    };
    Ok((next, trace(&state.x, points, err)))
}

fn trace(start: &Vector, points: Vec<Vector>, momentum_error: Option<f64>) -> CycleTrace {
    CycleTrace {
        start: start.clone(),
        points,
        momentum_error,
    }
}

/// Runs one cycle of `cfg.algorithm`. `diag` additionally measures the
/// momentum error, which needs exact gradients.
pub(crate) fn cycle_with_trace(
    state: &OptimizerState,
    oracle: &dyn OraclePair,
    cfg: &OptimizerConfig,
    token: RandomToken,
    diag: bool,
) -> Result<(OptimizerState, CycleTrace)> {
    cfg.validate()?;
    match cfg.algorithm {
        Algorithm::Naive => naive(state, oracle, cfg, token, diag),
        Algorithm::AuxMom => auxmom(state, oracle, cfg, token, diag),
        Algorithm::AuxMomV0 => auxmom_v0(state, oracle, cfg, token, diag),
        Algorithm::AuxMvr => auxmvr(state, oracle, cfg, token, diag),
        _ => baseline(state, oracle, cfg, token, diag),
    }
}

/// One cycle of whichever algorithm `cfg` selects.
pub fn cycle(
    state: &OptimizerState,
    oracle: &dyn OraclePair,
    cfg: &OptimizerConfig,
    token: RandomToken,
) -> Result<OptimizerState> {
    cycle_with_trace(state, oracle, cfg, token, false).map(|(s, _)| s)
}

/// One `f` step followed by `K - 1` uncorrected helper steps.
pub fn naive_cycle(
    state: &OptimizerState,
    oracle: &dyn OraclePair,
    cfg: &OptimizerConfig,
    token: RandomToken,
) -> Result<OptimizerState> {
    require(cfg, cfg.algorithm == Algorithm::Naive, "naive_cycle")?;
    naive(state, oracle, cfg, token, false).map(|(s, _)| s)
}

/// Classical momentum on `g_{f-h}` followed by `K` corrected helper steps.
pub fn auxmom_cycle(
    state: &OptimizerState,
    oracle: &dyn OraclePair,
    cfg: &OptimizerConfig,
    token: RandomToken,
) -> Result<OptimizerState> {
    require(cfg, cfg.algorithm == Algorithm::AuxMom, "auxmom_cycle")?;
    auxmom(state, oracle, cfg, token, false).map(|(s, _)| s)
}

/// Momentum on `g_f` with a same-sample helper difference inside the inner loop.
pub fn auxmom_v0_cycle(
    state: &OptimizerState,
    oracle: &dyn OraclePair,
    cfg: &OptimizerConfig,
    token: RandomToken,
) -> Result<OptimizerState> {
    require(cfg, cfg.algorithm == Algorithm::AuxMomV0, "auxmom_v0_cycle")?;
    auxmom_v0(state, oracle, cfg, token, false).map(|(s, _)| s)
}

/// STORM-style momentum on `g_{f-h}`: both snapshots are evaluated on one
/// shared sample.
pub fn auxmvr_cycle(
    state: &OptimizerState,
    oracle: &dyn OraclePair,
    cfg: &OptimizerConfig,
    token: RandomToken,
) -> Result<OptimizerState> {
    require(cfg, cfg.algorithm == Algorithm::AuxMvr, "auxmvr_cycle")?;
    auxmvr(state, oracle, cfg, token, false).map(|(s, _)| s)
}

/// `K` steps of GD, SGD with momentum, MVR, or fine-tuning.
pub fn baseline_cycle(
    state: &OptimizerState,
    oracle: &dyn OraclePair,
    cfg: &OptimizerConfig,
    token: RandomToken,
) -> Result<OptimizerState> {
    require(cfg, cfg.algorithm.is_baseline(), "baseline_cycle")?;
    baseline(state, oracle, cfg, token, false).map(|(s, _)| s)
}
