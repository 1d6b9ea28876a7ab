use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::decentralized::{check_weak_convexity, WeakConvexityReport};
use crate::error::{Error, Result};
use crate::harness::config::{load_config, ExperimentConfig, ParamsMode, ProblemSpec};
use crate::optimizers::{run, Algorithm, M0Mode, OptimizerConfig};
use crate::oracle::{OraclePair, Smooth};
use crate::problems::synthetic::mushrooms_like;
use crate::problems::{
    build_semisupervised, exact_hessian_logistic, load_logistic_task, make_quadratic_nd,
    make_toy_pair, parse_libsvm_str, binary_labels, spectral_norm_sym,
    LogisticPair, LogisticTask, QuadraticPair,
};
use crate::problems::quadratic::matrix_from_rows;
use crate::rng::RandomToken;
use crate::theory::{
    auxmom_params, auxmom_params_with, auxmvr_params, auxmvr_params_with, estimate_bias_pair,
    estimate_delta_pair, probe_points, BiasEstimate, EstimatorConfig, TheoryParams,
    APPENDIX_CONSTANTS,
};
use crate::trajectory::{Row, Trajectory};
use crate::vector::Vector;

// Child streams of the seed.
const DATA_STREAM: u64 = 0;
const ESTIMATE_STREAM: u64 = 1;
const REPEAT_BASE: u64 = 100;

/// Samples used for Monte-Carlo noise estimates on logistic problems.
const NOISE_SAMPLES: usize = 200;

enum Kind {
    Quadratic(QuadraticPair),
    Logistic { pair: LogisticPair, test: LogisticTask },
}

/// A problem instance ready to be optimized.
pub struct Problem {
    pub oracle: Arc<dyn OraclePair>,
    pub x0: Vector,
    kind: Kind,
    noise_mode: M0Mode,
}

impl Problem {
    pub fn target(&self) -> &dyn Smooth {
        match &self.kind {
            Kind::Quadratic(q) => q.target(),
            Kind::Logistic { pair, .. } => pair.f.as_ref(),
        }
    }

    pub fn test_task(&self) -> Option<&LogisticTask> {
        match &self.kind {
            Kind::Logistic { test, .. } => Some(test),
            Kind::Quadratic(_) => None,
        }
    }

    /// Analytic similarity, when the problem has one.
    pub fn analytic_delta(&self) -> Option<f64> {
        match &self.kind {
            Kind::Quadratic(q) => Some(q.delta()),
            Kind::Logistic { .. } => None,
        }
    }
}

fn logistic_dataset(spec: &crate::harness::config::LogisticSpec) -> Result<LogisticTask> {
    match &spec.path {
        Some(p) => load_logistic_task(p, spec.l2_reg),
        None => {
            let data = parse_libsvm_str(&mushrooms_like(spec.synthetic_seed.unwrap_or(0)))?;
            LogisticTask::new(data.to_dense(), binary_labels(&data.labels)?, spec.l2_reg)
        }
    }
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    let root = RandomToken::root(cfg.seed);
    let (oracle, kind, default_x0): (Arc<dyn OraclePair>, Kind, Vector) = match &cfg.problem {
        ProblemSpec::Toy { delta, zeta } => {
            let toy = make_toy_pair(*delta, *zeta, cfg.noise)?;
            let q = toy.as_quadratic().clone();
            (Arc::new(toy), Kind::Quadratic(q), Vector::scalar(1.0))
        }
        ProblemSpec::QuadraticNd { a_f, a_h, b_h } => {
            let q = make_quadratic_nd(
                matrix_from_rows(a_f)?,
                matrix_from_rows(a_h)?,
                nalgebra::DVector::from_column_slice(b_h),
                cfg.noise,
            )?;
            let dim = b_h.len();
            (Arc::new(q.clone()), Kind::Quadratic(q), Vector::filled(dim, 1.0))
        }
        ProblemSpec::Logistic(spec) => {
            let task = logistic_dataset(spec)?;
            let [tr, te, un] = spec.split;
            let parts = build_semisupervised(&task, (tr, te, un), &spec.helper, root.fork(DATA_STREAM))?;
            let pair = LogisticPair::new(parts.train, parts.helper, spec.batch_size)?
                .with_helper_batch(spec.helper_batch())?;
            let dim = pair.dim();
            (
                Arc::new(pair.clone()),
                Kind::Logistic { pair, test: parts.test },
                Vector::zeros(dim),
            )
        }
    };
    let x0 = match &cfg.x0 {
        Some(v) => Vector::new(v.clone())?,
        None => default_x0,
    };
    if x0.dim() != oracle.dim() {
        return Err(Error::config(
            "x0",
            format!("must hold {} entries, got {}", oracle.dim(), x0.dim()),
        ));
    }
    Ok(Problem {
        oracle,
        x0,
        kind,
        noise_mode: cfg.algorithm.m0_mode,
    })
}

fn mean_sq_deviation(samples: &[Vector], center: &Vector) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += s.dist_sq(center)?;
    }
    Ok(total / samples.len() as f64)
}

/// Constants of the analysis for `problem`: analytic for quadratics,
/// estimated for logistic regression.
pub fn theory_params(problem: &Problem, k: usize, t: usize, seed: u64) -> Result<TheoryParams> {
    let oracle = problem.oracle.as_ref();
    let x0 = &problem.x0;
    let token = RandomToken::root(seed).fork(ESTIMATE_STREAM);
    let (l, delta, sigma_f, sigma_h, sigma_fmh, f_star) = match &problem.kind {
        Kind::Quadratic(q) => {
            let n = oracle.noise_spec().unwrap_or_default();
            (q.smoothness(), q.delta(), n.sigma_f, n.sigma_h, n.sigma_fmh(), q.f_star())
        }
        Kind::Logistic { pair, .. } => {
            // sigmoid curvature peaks at the origin, so the Hessian there bounds all others
            let origin = Vector::zeros(pair.dim());
            let l = spectral_norm_sym(&exact_hessian_logistic(&pair.f, &origin)?)
                .max(spectral_norm_sym(&exact_hessian_logistic(&pair.h, &origin)?));
            let delta = estimate_delta_pair(oracle, x0, &EstimatorConfig::default(), token.fork(0))?
                .min(2.0 * l);
            let gf = oracle.exact_grad_f(x0)?;
            let gh = oracle.exact_grad_h(x0)?;
            let gd = gf.sub(&gh)?;
            let draws = |which: u8| -> Result<Vec<Vector>> {
                (0..NOISE_SAMPLES)
                    .map(|i| {
                        let tok = token.fork(1).with_draw(i as u64);
                        match which {
                            0 => oracle.grad_f(x0, tok),
                            1 => oracle.grad_h(x0, tok),
                            _ => oracle.grad_f_minus_h(x0, tok),
                        }
                    })
                    .collect()
            };
            let sf = mean_sq_deviation(&draws(0)?, &gf)?.sqrt();
            let sh = mean_sq_deviation(&draws(1)?, &gh)?.sqrt();
            let sd = mean_sq_deviation(&draws(2)?, &gd)?.sqrt();
            (l, delta, sf, sh, sd, 0.0)
        }
    };
    let f0 = (oracle.f_value(x0)? - f_star).max(0.0);
    let e0 = match problem.noise_mode {
        M0Mode::Zero => oracle.exact_grad_f(x0)?.dist_sq(&oracle.exact_grad_h(x0)?)?,
        M0Mode::SingleSample => sigma_fmh * sigma_fmh,
        M0Mode::BigBatch => sigma_fmh * sigma_fmh / t as f64,
    };
    Ok(TheoryParams {
        l,
        delta,
        sigma_f,
        sigma_h,
        sigma_fmh,
        f0,
        e0,
        k,
        t,
    })
}

/// Step size and momentum actually used by a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resolved {
    pub optimizer: OptimizerConfig,
    pub theory: Option<TheoryParams>,
    pub beta: Option<f64>,
}

pub fn resolve(cfg: &ExperimentConfig, problem: &Problem) -> Result<Resolved> {
    match cfg.params_mode {
        ParamsMode::Manual => Ok(Resolved {
            optimizer: cfg.algorithm.manual()?,
            theory: None,
            beta: None,
        }),
        ParamsMode::Theorem => {
            let p = theory_params(problem, cfg.algorithm.k, cfg.algorithm.t, cfg.seed)?;
            let (eta, a, beta) = if cfg.algorithm.algorithm() == Algorithm::AuxMvr {
                let r = auxmvr_params(&p)?;
                (r.eta, r.a, None)
            } else {
                let r = auxmom_params(&p)?;
                (r.eta, r.a, Some(r.beta))
            };
            Ok(Resolved {
                optimizer: cfg.algorithm.resolve(eta, a),
                theory: Some(p),
                beta,
            })
        }
    }
}

/// Per-row means of trajectories with identical row grids.
pub fn aggregate(runs: &[Trajectory]) -> Result<Trajectory> {
    let first = runs.first().ok_or_else(|| Error::invalid("nothing to aggregate"))?;
    if runs.iter().any(|r| r.rows.len() != first.rows.len()) {
        return Err(Error::invalid("trajectories have different lengths"));
    }
    let n = runs.len() as f64;
    let mean = |f: &dyn Fn(&Row) -> f64, i: usize| runs.iter().map(|r| f(&r.rows[i])).sum::<f64>() / n;
    let rows = (0..first.rows.len())
        .map(|i| {
            let r0 = first.rows[i];
            Row {
                f_value: mean(&|r| r.f_value, i),
                grad_norm_sq: mean(&|r| r.grad_norm_sq, i),
                e_t: mean(&|r| r.e_t, i),
                delta_t: mean(&|r| r.delta_t, i),
                ..r0
            }
        })
        .collect();
    Ok(Trajectory {
        rows,
        metadata: first.metadata.clone(),
        ..Default::default()
    })
}

fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    traj.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Everything a finished experiment produced.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub runs: Vec<Trajectory>,
    pub aggregate: Trajectory,
    pub resolved: Resolved,
    pub metadata: Value,
    pub out_dir: PathBuf,
}

fn run_summary(index: usize, traj: &Trajectory, problem: &Problem, threshold: f64) -> Value {
    let mut s = json!({
        "index": index,
        "status": "ok",
        "final_f_value": traj.final_f_value(),
        "final_grad_norm_sq": traj.final_grad_norm_sq(),
        "cycles_to_threshold": traj.cycles_to_threshold(threshold),
    });
    if let (Some(test), Some(x)) = (problem.test_task(), &traj.final_x) {
        s["test_loss"] = json!(test.value(x).ok());
        s["test_error"] = json!(test.error_rate(x).ok());
    }
    s
}

/// Runs `cfg.repeats` independent repeats and writes `run_<r>.csv`,
/// `aggregate.csv` and `metadata.json` under `out_dir` (default: the
/// config's `output_path`).
///
/// A diverging repeat still has its partial trajectory and the metadata
/// written before the divergence error is returned.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let out_dir = out_dir.map_or_else(|| cfg.output_path.clone(), Path::to_path_buf);
    let problem = build_problem(cfg)?;
    let resolved = resolve(cfg, &problem)?;
    let opt = resolved.optimizer;
    let root = RandomToken::root(cfg.seed);

    let results: Vec<Result<Trajectory>> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| {
            run(
                problem.oracle.as_ref(),
                &problem.x0,
                &opt,
                root.fork(REPEAT_BASE + r as u64),
                cfg.diagnostics,
            )
        })
        .collect();

    fs::create_dir_all(&out_dir)?;
    let mut runs = Vec::with_capacity(results.len());
    let mut summaries = Vec::with_capacity(results.len());
    let mut failure = None;
    for (r, res) in results.into_iter().enumerate() {
        let path = out_dir.join(format!("run_{r}.csv"));
        match res {
            Ok(mut traj) => {
                write_trajectory(&path, &traj)?;
                summaries.push(run_summary(r, &traj, &problem, cfg.threshold));
                traj.metadata.insert("repeat".into(), json!(r));
                runs.push(traj);
            }
            Err(Error::Diverged(d)) => {
                write_trajectory(&path, &d.partial)?;
                summaries.push(json!({
                    "index": r,
                    "status": "diverged",
                    "cycle": d.t,
                    "step": d.k,
                    "reason": d.reason,
                }));
                failure.get_or_insert(Error::Diverged(d));
            }
            Err(e) => return Err(e),
        }
    }

    let (calls_f, calls_h, calls_fmh) = opt.total_calls();
    let mut metadata = json!({
        "config": cfg.to_json(),
        "resolved": {
            "algorithm": opt.algorithm.name(),
            "eta": opt.eta,
            "a": opt.a,
            "K": opt.k,
            "T": opt.t,
            "m0_mode": opt.m0_mode,
        },
        "budget": {"calls_f": calls_f, "calls_h": calls_h, "calls_fmh": calls_fmh},
        "runs": summaries,
    });
    if let Some(p) = &resolved.theory {
        metadata["theory_params"] = json!(p);
    }
    if let Some(b) = resolved.beta {
        metadata["resolved"]["beta"] = json!(b);
    }

    if let Some(err) = failure {
        write_json(&out_dir.join("metadata.json"), &metadata)?;
        return Err(err);
    }
    let aggregate = aggregate(&runs)?;
    write_trajectory(&out_dir.join("aggregate.csv"), &aggregate)?;
    write_json(&out_dir.join("metadata.json"), &metadata)?;
    Ok(ExperimentOutcome {
        runs,
        aggregate,
        resolved,
        metadata,
        out_dir,
    })
}

/// Overwrites the numeric field at dotted `path` in a JSON config.
pub fn set_json_path(config: &mut Value, path: &str, value: f64) -> Result<()> {
    let invalid = |msg: &str| Error::config(path, msg.to_string());
    let mut cur = config;
    for part in path.split('.') {
        cur = cur
            .get_mut(part)
            .ok_or_else(|| invalid("axis does not name an existing field"))?;
    }
    let replacement = if cur.is_u64() || cur.is_i64() {
        if value.fract() != 0.0 || !value.is_finite() {
            return Err(invalid("integer field needs integral values"));
        }
        json!(value as i64)
    } else if cur.is_f64() {
        json!(value)
    } else {
        return Err(invalid("axis must name a numeric field"));
    };
    *cur = replacement;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub status: String,
    pub final_grad_norm_sq: f64,
    /// Mean over the last cycle's inner points, averaged over repeats.
    pub final_g: f64,
    pub cycles_to_threshold: Option<usize>,
    pub calls_f: u64,
    pub calls_h: u64,
    pub calls_fmh: u64,
}

pub const SWEEP_HEADER: &str =
    "value,status,final_grad_norm_sq,final_G,cycles_to_threshold,calls_f,calls_h,calls_fmh";

fn final_g(runs: &[Trajectory]) -> f64 {
    let vals: Vec<f64> = runs.iter().filter_map(|r| r.cycles.last().map(|c| c.g_t)).collect();
    if vals.is_empty() {
        f64::NAN
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// One experiment per value of `axis`, each in `<out_dir>/<axis>=<value>`,
/// summarized in `<out_dir>/summary.csv`.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: &str,
    values: &[f64],
    out_dir: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    let out_dir = out_dir.map_or_else(|| base.output_path.clone(), Path::to_path_buf);
    let configs = values
        .iter()
        .map(|&v| {
            let mut json = base.to_json();
            set_json_path(&mut json, axis, v)?;
            load_config(&json.to_string())
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = configs
        .par_iter()
        .zip(values)
        .map(|(cfg, &v)| -> Result<SweepRow> {
            let dir = out_dir.join(format!("{axis}={v}"));
            let budget = cfg.algorithm.manual().ok();
            match run_experiment(cfg, Some(&dir)) {
                Ok(outcome) => {
                    let last = outcome.aggregate.last().copied();
                    Ok(SweepRow {
                        value: v,
                        status: "ok".into(),
                        final_grad_norm_sq: outcome.aggregate.final_grad_norm_sq(),
                        final_g: final_g(&outcome.runs),
                        cycles_to_threshold: outcome.aggregate.cycles_to_threshold(cfg.threshold),
                        calls_f: last.map_or(0, |r| r.calls_f),
                        calls_h: last.map_or(0, |r| r.calls_h),
                        calls_fmh: last.map_or(0, |r| r.calls_fmh),
                    })
                }
                Err(Error::Diverged(_)) => {
                    let (calls_f, calls_h, calls_fmh) =
                        budget.map_or((0, 0, 0), |b| b.total_calls());
                    Ok(SweepRow {
                        value: v,
                        status: "diverged".into(),
                        final_grad_norm_sq: f64::NAN,
                        final_g: f64::NAN,
                        cycles_to_threshold: None,
                        calls_f,
                        calls_h,
                        calls_fmh,
                    })
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    fs::create_dir_all(&out_dir)?;
    let mut out = BufWriter::new(File::create(out_dir.join("summary.csv"))?);
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in &rows {
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{},{},{},{}",
            r.value,
            r.status,
            r.final_grad_norm_sq,
            r.final_g,
            r.cycles_to_threshold.map_or(String::new(), |c| c.to_string()),
            r.calls_f,
            r.calls_h,
            r.calls_fmh
        )?;
    }
    out.flush()?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub analytic_delta: Option<f64>,
    pub estimated_delta: f64,
    pub bias: BiasEstimate,
    /// Whether `f + delta |x|^2` passed the midpoint test, with `delta` the estimate.
    pub weakly_convex: bool,
    pub convexity_witness: Option<(Vec<f64>, Vec<f64>, f64)>,
}

/// Estimates the similarity and bias constants of the configured problem and
/// probes weak convexity of the target.
pub fn check(cfg: &ExperimentConfig) -> Result<CheckReport> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    let oracle = problem.oracle.as_ref();
    let token = RandomToken::root(cfg.seed).fork(ESTIMATE_STREAM);
    let est = EstimatorConfig::default();
    let delta = estimate_delta_pair(oracle, &problem.x0, &est, token.fork(0))?;
    let probes = probe_points(&problem.x0, est.probes, est.radius, token.fork(2))?;
    let bias = estimate_bias_pair(oracle, &probes)?;
    let WeakConvexityReport { holds, witness } = check_weak_convexity(
        problem.target(),
        delta,
        est.probes * 10,
        est.radius,
        token.fork(3),
    )?;
    Ok(CheckReport {
        analytic_delta: problem.analytic_delta(),
        estimated_delta: delta,
        bias,
        weakly_convex: holds,
        convexity_witness: witness.map(|(x, y, v)| (x.into_inner(), y.into_inner(), v)),
    })
}

/// Theory constants of the configured problem and the schedules they imply.
pub fn params_report(cfg: &ExperimentConfig) -> Result<Value> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    let p = theory_params(&problem, cfg.algorithm.k, cfg.algorithm.t, cfg.seed)?;
    Ok(json!({
        "theory_params": p,
        "auxmom": auxmom_params(&p)?,
        "auxmvr": auxmvr_params(&p)?,
        "appendix_constants": {
            "auxmom": auxmom_params_with(&p, &APPENDIX_CONSTANTS)?,
            "auxmvr": auxmvr_params_with(&p, &APPENDIX_CONSTANTS)?,
        },
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_path_updates() {
        let mut v = json!({"algorithm": {"K": 10, "eta": 0.5, "name": "GD"}});
        set_json_path(&mut v, "algorithm.K", 5.0).unwrap();
        set_json_path(&mut v, "algorithm.eta", 0.25).unwrap();
        assert_eq!(v, json!({"algorithm": {"K": 5, "eta": 0.25, "name": "GD"}}));
        assert!(set_json_path(&mut v, "algorithm.K", 2.5).is_err());
        assert!(set_json_path(&mut v, "algorithm.name", 1.0).is_err());
        assert!(set_json_path(&mut v, "algorithm.L", 1.0).is_err());
    }

    #[test]
    fn aggregate_is_the_row_mean() {
        let row = |f: f64| Row {
            t: 0,
            k: 0,
            f_value: f,
            grad_norm_sq: 2.0 * f,
            e_t: f64::NAN,
            delta_t: 0.0,
            calls_f: 1,
            calls_h: 2,
            calls_fmh: 3,
        };
        let a = Trajectory { rows: vec![row(1.0)], ..Default::default() };
        let b = Trajectory { rows: vec![row(2.0)], ..Default::default() };
        let m = aggregate(&[a, b]).unwrap();
        assert_eq!(m.rows[0].f_value, 1.5);
        assert_eq!(m.rows[0].grad_norm_sq, 3.0);
        assert!(m.rows[0].e_t.is_nan());
        assert_eq!(m.rows[0].calls_h, 2);
    }
}
