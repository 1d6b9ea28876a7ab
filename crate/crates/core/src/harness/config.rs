use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{Algorithm, M0Mode, OptimizerConfig};
use crate::oracle::NoiseSpec;
use crate::problems::HelperBuild;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub problem: ProblemSpec,
    pub algorithm: AlgorithmSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub seed: u64,
    #[serde(default)]
    pub params_mode: ParamsMode,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default = "default_output")]
    pub output_path: PathBuf,
    /// Record the momentum error and inner-loop drift in every row.
    #[serde(default)]
    pub diagnostics: bool,
    /// Starting point; defaults to `1` for the scalar pair, all ones for
    /// quadratics and zeros for logistic regression.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Gradient-norm level used for the iterations-to-threshold summary.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn default_threshold() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Toy {
        delta: f64,
        zeta: f64,
    },
    QuadraticNd {
        a_f: Vec<Vec<f64>>,
        a_h: Vec<Vec<f64>>,
        b_h: Vec<f64>,
    },
    Logistic(LogisticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticSpec {
    /// LIBSVM file. Without it a synthetic dataset with the layout of the
    /// mushrooms data is generated from `synthetic_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_seed: Option<u64>,
    /// Train, test and unlabeled fractions.
    #[serde(default = "thirds")]
    pub split: [f64; 3],
    #[serde(default = "random_labels")]
    pub helper: HelperBuild,
    /// Minibatch size of the target oracle; `null` means full-batch gradients.
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Minibatch size of the helper oracle; defaults to `batch_size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub helper_batch_size: Option<HelperBatch>,
    #[serde(default)]
    pub l2_reg: f64,
}

/// Helper minibatch size, or `"full"` for exact helper gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HelperBatch {
    Size(usize),
    Full(FullBatch),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FullBatch {
    Full,
}

impl LogisticSpec {
    pub fn helper_batch(&self) -> Option<usize> {
        match self.helper_batch_size {
            None => self.batch_size,
            Some(HelperBatch::Size(b)) => Some(b),
            Some(HelperBatch::Full(_)) => None,
        }
    }
}

fn thirds() -> [f64; 3] {
    [1.0 / 3.0; 3]
}

fn random_labels() -> HelperBuild {
    HelperBuild::RandomLabels
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlgorithmName {
    Naive,
    #[serde(rename = "AuxMOM")]
    AuxMom,
    #[serde(rename = "AuxMOM_V0")]
    AuxMomV0,
    #[serde(rename = "AuxMVR")]
    AuxMvr,
    #[serde(rename = "SGDm")]
    SgdM,
    #[serde(rename = "MVR")]
    Mvr,
    #[serde(rename = "GD")]
    Gd,
    FineTune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: AlgorithmName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(default)]
    pub m0_mode: M0Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_fraction: Option<f64>,
}

impl AlgorithmSpec {
    pub fn algorithm(&self) -> Algorithm {
        match self.name {
            AlgorithmName::Naive => Algorithm::Naive,
            AlgorithmName::AuxMom => Algorithm::AuxMom,
            AlgorithmName::AuxMomV0 => Algorithm::AuxMomV0,
            AlgorithmName::AuxMvr => Algorithm::AuxMvr,
            AlgorithmName::SgdM => Algorithm::SgdM,
            AlgorithmName::Mvr => Algorithm::Mvr,
            AlgorithmName::Gd => Algorithm::Gd,
            AlgorithmName::FineTune => Algorithm::FineTune {
                split_fraction: self.split_fraction.unwrap_or(0.0),
            },
        }
    }

    /// Whether the algorithm reads the momentum parameter `a`.
    fn uses_momentum(&self) -> bool {
        !matches!(self.name, AlgorithmName::Naive | AlgorithmName::Gd)
    }

    /// Optimizer settings with explicit `eta` and `a`.
    pub fn resolve(&self, eta: f64, a: f64) -> OptimizerConfig {
        OptimizerConfig::new(self.algorithm(), eta, a, self.k, self.t).with_m0(self.m0_mode)
    }

    /// Optimizer settings from the configured `eta` and `a`.
    pub fn manual(&self) -> Result<OptimizerConfig> {
        let eta = self
            .eta
            .ok_or_else(|| Error::config("algorithm.eta", "required in manual mode"))?;
        let a = match self.a {
            Some(a) => a,
            None if !self.uses_momentum() => 1.0,
            None => return Err(Error::config("algorithm.a", "required in manual mode")),
        };
        Ok(self.resolve(eta, a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamsMode {
    #[default]
    Manual,
    Theorem,
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be a finite positive number, got {v}")))
    }
}

fn square(path: &str, m: &[Vec<f64>], dim: usize) -> Result<()> {
    if m.len() != dim || m.iter().any(|r| r.len() != dim) {
        return Err(Error::config(path, format!("must be a {dim}x{dim} matrix")));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::config(path, "entries must be finite"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        let alg = &self.algorithm;
        if alg.k == 0 {
            return Err(Error::config("algorithm.K", "must be at least 1"));
        }
        if alg.t == 0 {
            return Err(Error::config("algorithm.T", "must be at least 1"));
        }
        match self.params_mode {
            ParamsMode::Manual => {
                let cfg = alg.manual()?;
                positive("algorithm.eta", cfg.eta)?;
                if !(cfg.a > 0.0 && cfg.a <= 1.0) {
                    return Err(Error::config("algorithm.a", format!("must lie in (0, 1], got {}", cfg.a)));
                }
            }
            ParamsMode::Theorem => {
                if alg.eta.is_some() {
                    return Err(Error::config("algorithm.eta", "must be omitted in theorem mode"));
                }
                if alg.a.is_some() {
                    return Err(Error::config("algorithm.a", "must be omitted in theorem mode"));
                }
            }
        }
        match (alg.name, alg.split_fraction) {
            (AlgorithmName::FineTune, None) => {
                return Err(Error::config("algorithm.split_fraction", "required for FineTune"));
            }
            (AlgorithmName::FineTune, Some(s)) if !(0.0..=1.0).contains(&s) => {
                return Err(Error::config("algorithm.split_fraction", format!("must lie in [0, 1], got {s}")));
            }
            (AlgorithmName::FineTune, _) => {}
            (_, Some(_)) => {
                return Err(Error::config("algorithm.split_fraction", "only applies to FineTune"));
            }
            _ => {}
        }
        self.noise
            .validate()
            .map_err(|e| Error::config("noise", e.to_string()))?;
        if self.repeats == 0 {
            return Err(Error::config("repeats", "must be at least 1"));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::config("threshold", "must be a finite positive number"));
        }
        let dim = match &self.problem {
            ProblemSpec::Toy { delta, zeta } => {
                if !(delta.is_finite() && *delta >= 0.0) {
                    return Err(Error::config("problem.toy.delta", "must be finite and >= 0"));
                }
                if !zeta.is_finite() {
                    return Err(Error::config("problem.toy.zeta", "must be finite"));
                }
                Some(1)
            }
            ProblemSpec::QuadraticNd { a_f, a_h, b_h } => {
                let dim = a_f.len();
                if dim == 0 {
                    return Err(Error::config("problem.quadratic_nd.a_f", "must not be empty"));
                }
                square("problem.quadratic_nd.a_f", a_f, dim)?;
                square("problem.quadratic_nd.a_h", a_h, dim)?;
                if b_h.len() != dim || b_h.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config(
                        "problem.quadratic_nd.b_h",
                        format!("must hold {dim} finite entries"),
                    ));
                }
                Some(dim)
            }
            ProblemSpec::Logistic(spec) => {
                if !self.noise.is_zero() {
                    return Err(Error::config(
                        "noise",
                        "logistic problems draw their noise from minibatches",
                    ));
                }
                match (&spec.path, spec.synthetic_seed) {
                    (Some(_), Some(_)) => {
                        return Err(Error::config(
                            "problem.logistic",
                            "give either `path` or `synthetic_seed`, not both",
                        ))
                    }
                    (Some(p), None) if !p.exists() => return Err(Error::FileNotFound(p.clone())),
                    _ => {}
                }
                if spec.split.iter().any(|v| !(v.is_finite() && *v > 0.0))
                    || (spec.split.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(Error::config(
                        "problem.logistic.split",
                        "fractions must be positive and sum to 1",
                    ));
                }
                if spec.batch_size == Some(0) {
                    return Err(Error::config("problem.logistic.batch_size", "must be at least 1"));
                }
                if spec.helper_batch_size == Some(HelperBatch::Size(0)) {
                    return Err(Error::config("problem.logistic.helper_batch_size", "must be at least 1"));
                }
                if !(spec.l2_reg.is_finite() && spec.l2_reg >= 0.0) {
                    return Err(Error::config("problem.logistic.l2_reg", "must be finite and >= 0"));
                }
                if let HelperBuild::Coreset { fraction } = spec.helper {
                    if !(fraction > 0.0 && fraction <= 1.0) {
                        return Err(Error::config(
                            "problem.logistic.helper.coreset.fraction",
                            "must lie in (0, 1]",
                        ));
                    }
                }
                None
            }
        };
        if let (Some(x0), Some(dim)) = (&self.x0, dim) {
            if x0.len() != dim {
                return Err(Error::config("x0", format!("must hold {dim} entries, got {}", x0.len())));
            }
        }
        if let Some(x0) = &self.x0 {
            if x0.is_empty() || x0.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("x0", "entries must be finite"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes to JSON")
    }
}

/// Parses and validates a config. Schema errors name the offending field.
pub fn load_config(text: &str) -> Result<ExperimentConfig> {
    let cfg = parse_config(text)?;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { String::new() } else { path }, e.into_inner().to_string())
    })
}

pub fn load_config_file(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut cfg = parse_config(&text)?;
    // relative dataset paths are taken relative to the config file
    if let ProblemSpec::Logistic(spec) = &mut cfg.problem {
        if let (Some(p), Some(dir)) = (&spec.path, path.parent()) {
            if p.is_relative() {
                spec.path = Some(dir.join(p));
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
