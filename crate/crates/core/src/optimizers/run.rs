use serde_json::json;

use crate::error::{Divergence, Error, Result};
use crate::optimizers::{
    cycle_token, cycle_with_trace, Algorithm, M0Mode, OptimizerConfig, OptimizerState,
};
use crate::oracle::OraclePair;
use crate::rng::RandomToken;
use crate::trajectory::{CycleSummary, Row, Trajectory};
use crate::vector::Vector;

/// Runs abort once `f` exceeds this value.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

const INIT_CYCLE: usize = 0;

/// `x^0` together with `m^0` formed according to `cfg.m0_mode`.
pub fn initial_state(
    oracle: &dyn OraclePair,
    x0: &Vector,
    cfg: &OptimizerConfig,
    root: RandomToken,
) -> Result<OptimizerState> {
    cfg.validate()?;
    if x0.dim() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dim(),
            got: x0.dim(),
        });
    }
    let samples = match cfg.m0_mode {
        M0Mode::Zero => 0,
        M0Mode::SingleSample => 1,
        M0Mode::BigBatch => cfg.t,
    };
    let init = cycle_token(root, INIT_CYCLE);
    let draw = |i: usize| -> Result<Vector> {
        let tok = init.with_draw(i as u64);
        match cfg.algorithm {
            Algorithm::AuxMom | Algorithm::AuxMvr => oracle.grad_f_minus_h(x0, tok),
            Algorithm::FineTune { .. } if cfg.finetune_helper_steps() > 0 => oracle.grad_h(x0, tok),
            _ => oracle.grad_f(x0, tok),
        }
    };
    let m0 = match cfg.algorithm {
        Algorithm::Naive | Algorithm::Gd => Vector::zeros(x0.dim()),
        _ if samples == 0 => Vector::zeros(x0.dim()),
        _ => {
            let draws = (0..samples).map(draw).collect::<Result<Vec<_>>>()?;
            Vector::mean(&draws)?
        }
    };
    let mut state = OptimizerState::new(x0.clone(), m0);
    (state.calls_f, state.calls_h, state.calls_fmh) = cfg.init_calls();
    Ok(state)
}

fn point_metrics(oracle: &dyn OraclePair, y: &Vector) -> (f64, f64) {
    if !oracle.has_exact() {
        return (f64::NAN, f64::NAN);
    }
    let f = oracle.f_value(y).unwrap_or(f64::NAN);
    let g = oracle
        .exact_grad_f(y)
        .map(|g| g.norm_sq())
        .unwrap_or(f64::NAN);
    (f, g)
}

fn initial_momentum_error(
    oracle: &dyn OraclePair,
    state: &OptimizerState,
    cfg: &OptimizerConfig,
) -> Result<f64> {
    let x = &state.x;
    let target = if cfg.algorithm.tracks_difference() {
        oracle.exact_grad_f(x)?.sub(&oracle.exact_grad_h(x)?)?
    } else if cfg.finetune_helper_steps() > 0 {
        oracle.exact_grad_h(x)?
    } else {
        oracle.exact_grad_f(x)?
    };
    state.m.dist_sq(&target)
}

fn diverged(t: usize, k: usize, reason: impl Into<String>, partial: Trajectory) -> Error {
    Error::Diverged(Box::new(Divergence {
        t,
        k,
        reason: reason.into(),
        partial,
    }))
}

/// Runs `cfg.t` cycles from `x0` with `m^0` per `cfg.m0_mode`.
pub fn run(
    oracle: &dyn OraclePair,
    x0: &Vector,
    cfg: &OptimizerConfig,
    token: RandomToken,
    diagnostics_on: bool,
) -> Result<Trajectory> {
    let state = initial_state(oracle, x0, cfg, token)?;
    run_with_state(oracle, state, cfg, token, diagnostics_on)
}

/// Runs `cfg.t` cycles starting from an explicit state.
///
/// Records one row for the starting point and one per inner iterate. With
/// `diagnostics_on` (and exact gradients) rows also carry the momentum error
/// of their cycle and `|y_k - x^{t-1}|^2`.
pub fn run_with_state(
    oracle: &dyn OraclePair,
    mut state: OptimizerState,
    cfg: &OptimizerConfig,
    token: RandomToken,
    diagnostics_on: bool,
) -> Result<Trajectory> {
    cfg.validate()?;
    let diag = diagnostics_on && oracle.has_exact();
    let mut traj = Trajectory::default();
    traj.metadata.insert("algorithm".into(), json!(cfg.algorithm.name()));
    traj.metadata.insert("eta".into(), json!(cfg.eta));
    traj.metadata.insert("a".into(), json!(cfg.a));
    traj.metadata.insert("K".into(), json!(cfg.k));
    traj.metadata.insert("T".into(), json!(cfg.t));
    traj.metadata.insert("m0_mode".into(), serde_json::to_value(cfg.m0_mode).unwrap_or_default());
    if let Algorithm::FineTune { split_fraction } = cfg.algorithm {
        traj.metadata.insert("split_fraction".into(), json!(split_fraction));
    }

    let (f0, g0) = point_metrics(oracle, &state.x);
    let e0 = if diag {
        initial_momentum_error(oracle, &state, cfg)?
    } else {
        f64::NAN
    };
    traj.rows.push(Row {
        t: 0,
        k: 0,
        f_value: f0,
        grad_norm_sq: g0,
        e_t: e0,
        delta_t: if diag { 0.0 } else { f64::NAN },
        calls_f: state.calls_f,
        calls_h: state.calls_h,
        calls_fmh: state.calls_fmh,
    });
    if !f0.is_nan() && (!f0.is_finite() || f0 > DIVERGENCE_LIMIT) {
        return Err(diverged(0, 0, format!("f(x0) = {f0}"), traj));
    }

    let mut prev_g = g0;
    for t in 1..=cfg.t {
        let (next, trace) =
            match cycle_with_trace(&state, oracle, cfg, cycle_token(token, t), diag) {
                Ok(v) => v,
                Err(Error::NonFinite(op)) => {
                    traj.final_x = Some(state.x.clone());
                    return Err(diverged(t, 0, format!("non-finite value in {op}"), traj));
                }
                Err(e) => return Err(e),
            };
        let e_t = trace.momentum_error.unwrap_or(f64::NAN);
        let mut g_sum = prev_g;
        for (i, y) in trace.points.iter().enumerate() {
            let k = i + 1;
            let (f, g) = point_metrics(oracle, y);
            let delta = if diag { y.dist_sq(&trace.start)? } else { f64::NAN };
            traj.rows.push(Row {
                t,
                k,
                f_value: f,
                grad_norm_sq: g,
                e_t,
                delta_t: delta,
                calls_f: next.calls_f,
                calls_h: next.calls_h,
                calls_fmh: next.calls_fmh,
            });
            if !f.is_nan() && (!f.is_finite() || f > DIVERGENCE_LIMIT) {
                traj.final_x = Some(y.clone());
                return Err(diverged(t, k, format!("f(y) = {f:e} exceeds {DIVERGENCE_LIMIT:e}"), traj));
            }
            if k < trace.points.len() {
                g_sum += g;
            }
            prev_g = g;
        }
        traj.cycles.push(CycleSummary {
            t,
            e_t,
            delta_t: if diag { next.x.dist_sq(&trace.start)? } else { f64::NAN },
            g_t: g_sum / trace.points.len() as f64,
        });
        state = next;
    }
    traj.final_x = Some(state.x.clone());
    Ok(traj)
}
