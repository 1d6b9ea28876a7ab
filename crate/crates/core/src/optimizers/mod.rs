//! Cycle-based optimizers that minimize `f` using gradients of a helper `h`.
//!
//! A cycle refreshes a momentum at the snapshot `x^{t-1}` and then takes `K`
//! inner steps driven by helper gradients; the last inner iterate becomes
//! `x^t`. Baselines run `K` plain steps per cycle so trajectories line up on
//! the same `(t, k)` grid.

mod cycles;
mod run;

pub use cycles::{
    auxmom_cycle, auxmom_v0_cycle, auxmvr_cycle, baseline_cycle, cycle, local_update_step,
    naive_cycle, CycleTrace,
};
pub use run::{initial_state, run, run_with_state, DIVERGENCE_LIMIT};

pub(crate) use cycles::{aux_inner_loop, cycle_with_trace};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomToken;
use crate::vector::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Algorithm {
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
    FineTune { split_fraction: f64 },
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Naive => "Naive",
            Algorithm::AuxMom => "AuxMOM",
            Algorithm::AuxMomV0 => "AuxMOM_V0",
            Algorithm::AuxMvr => "AuxMVR",
            Algorithm::SgdM => "SGDm",
            Algorithm::Mvr => "MVR",
            Algorithm::Gd => "GD",
            Algorithm::FineTune { .. } => "FineTune",
        }
    }

    /// Whether the momentum tracks `grad f - grad h` (as opposed to `grad f`).
    pub fn tracks_difference(&self) -> bool {
        matches!(self, Algorithm::AuxMom | Algorithm::AuxMvr)
    }

    pub fn is_baseline(&self) -> bool {
        matches!(
            self,
            Algorithm::SgdM | Algorithm::Mvr | Algorithm::Gd | Algorithm::FineTune { .. }
        )
    }
}

/// How the initial momentum `m^0` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum M0Mode {
    Zero,
    #[default]
    SingleSample,
    /// Mean of `T` independent samples.
    BigBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub a: f64,
    pub k: usize,
    pub t: usize,
    pub m0_mode: M0Mode,
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm, eta: f64, a: f64, k: usize, t: usize) -> Self {
        OptimizerConfig {
            algorithm,
            eta,
            a,
            k,
            t,
            m0_mode: M0Mode::default(),
        }
    }

    pub fn with_m0(mut self, m0_mode: M0Mode) -> Self {
        self.m0_mode = m0_mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::invalid(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(self.a > 0.0 && self.a <= 1.0) {
            return Err(Error::invalid(format!("a must lie in (0, 1], got {}", self.a)));
        }
        if self.k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        if self.t == 0 {
            return Err(Error::invalid("T must be at least 1"));
        }
        if let Algorithm::FineTune { split_fraction } = self.algorithm {
            if !(0.0..=1.0).contains(&split_fraction) {
                return Err(Error::invalid(format!(
                    "split_fraction must lie in [0, 1], got {split_fraction}"
                )));
            }
        }
        Ok(())
    }

    /// Number of leading steps a FineTune run spends on `h`.
    pub fn finetune_helper_steps(&self) -> usize {
        match self.algorithm {
            Algorithm::FineTune { split_fraction } => {
                (split_fraction * (self.t * self.k) as f64 + 1e-9).floor() as usize
            }
            _ => 0,
        }
    }

    /// `(calls_f, calls_h, calls_fmh)` consumed by one cycle.
    ///
    /// FineTune depends on the cycle index; see [`OptimizerConfig::finetune_cycle_calls`].
    pub fn calls_per_cycle(&self) -> (u64, u64, u64) {
        let k = self.k as u64;
        match self.algorithm {
            Algorithm::Naive => (1, k - 1, 0),
            Algorithm::AuxMom => (0, k, 1),
            Algorithm::AuxMvr => (0, k, 2),
            Algorithm::AuxMomV0 => (1, 2 * k, 0),
            Algorithm::SgdM | Algorithm::Gd => (k, 0, 0),
            Algorithm::Mvr => (2 * k, 0, 0),
            Algorithm::FineTune { .. } => (k, 0, 0),
        }
    }

    /// `(calls_f, calls_h, calls_fmh)` consumed while forming `m^0`.
    pub fn init_calls(&self) -> (u64, u64, u64) {
        let n = match self.m0_mode {
            M0Mode::Zero => 0,
            M0Mode::SingleSample => 1,
            M0Mode::BigBatch => self.t as u64,
        };
        match self.algorithm {
            Algorithm::Naive | Algorithm::Gd => (0, 0, 0),
            Algorithm::AuxMom | Algorithm::AuxMvr => (0, 0, n),
            Algorithm::FineTune { .. } if self.finetune_helper_steps() > 0 => (0, n, 0),
            _ => (n, 0, 0),
        }
    }

    /// Total `(calls_f, calls_h, calls_fmh)` of a full run.
    pub fn total_calls(&self) -> (u64, u64, u64) {
        let (i_f, i_h, i_fmh) = self.init_calls();
        if let Algorithm::FineTune { .. } = self.algorithm {
            let on_h = self.finetune_helper_steps() as u64;
            let total = (self.t * self.k) as u64;
            return (i_f + total - on_h, i_h + on_h, i_fmh);
        }
        let (c_f, c_h, c_fmh) = self.calls_per_cycle();
        let t = self.t as u64;
        (i_f + t * c_f, i_h + t * c_h, i_fmh + t * c_fmh)
    }
}

/// Everything an optimizer carries between cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    /// Snapshot of the previous cycle (previous step for step-wise baselines).
    pub x_prev: Vector,
    pub x: Vector,
    /// Last inner iterate.
    pub y: Vector,
    pub m: Vector,
    /// Completed cycles.
    pub t: usize,
    /// Inner steps taken in the current cycle.
    pub k: usize,
    pub calls_f: u64,
    pub calls_h: u64,
    pub calls_fmh: u64,
}

impl OptimizerState {
    pub fn new(x0: Vector, m0: Vector) -> Self {
        OptimizerState {
            x_prev: x0.clone(),
            y: x0.clone(),
            x: x0,
            m: m0,
            t: 0,
            k: 0,
            calls_f: 0,
            calls_h: 0,
            calls_fmh: 0,
        }
    }

    pub fn calls(&self) -> (u64, u64, u64) {
        (self.calls_f, self.calls_h, self.calls_fmh)
    }
}

// Token layout inside a cycle: draw 0 of the cycle stream feeds the momentum
// refresh, helper `i` owns child stream `HELPER_BASE + i` with draw `k` for
// inner step `k`, and child stream `SAMPLING` drives helper selection.
const HELPER_BASE: u64 = 16;
const SAMPLING: u64 = 1;

pub(crate) fn cycle_token(root: RandomToken, t: usize) -> RandomToken {
    root.fork(t as u64)
}

pub(crate) fn momentum_token(cycle: RandomToken) -> RandomToken {
    cycle.with_draw(0)
}

pub(crate) fn inner_token(cycle: RandomToken, helper: usize, k: usize) -> RandomToken {
    cycle.fork(HELPER_BASE + helper as u64).with_draw(k as u64)
}

pub(crate) fn sampling_token(cycle: RandomToken) -> RandomToken {
    cycle.fork(SAMPLING)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_bounds() {
        let ok = OptimizerConfig::new(Algorithm::AuxMom, 0.1, 0.5, 10, 5);
        assert!(ok.validate().is_ok());
        for bad in [
            OptimizerConfig { eta: 0.0, ..ok },
            OptimizerConfig { a: 0.0, ..ok },
            OptimizerConfig { a: 1.5, ..ok },
            OptimizerConfig { k: 0, ..ok },
            OptimizerConfig { t: 0, ..ok },
            OptimizerConfig {
                algorithm: Algorithm::FineTune { split_fraction: 1.2 },
                ..ok
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn budget_formulas() {
        let cfg = OptimizerConfig::new(Algorithm::AuxMom, 0.1, 0.5, 10, 5).with_m0(M0Mode::Zero);
        assert_eq!(cfg.total_calls(), (0, 50, 5));
        let cfg = OptimizerConfig::new(Algorithm::Naive, 0.1, 0.5, 10, 5);
        assert_eq!(cfg.total_calls(), (5, 45, 0));
        let cfg = OptimizerConfig::new(Algorithm::AuxMvr, 0.1, 0.5, 4, 3).with_m0(M0Mode::BigBatch);
        assert_eq!(cfg.total_calls(), (0, 12, 3 + 6));
        let cfg = OptimizerConfig::new(Algorithm::FineTune { split_fraction: 0.5 }, 0.1, 1.0, 2, 2)
            .with_m0(M0Mode::Zero);
        assert_eq!(cfg.total_calls(), (2, 2, 0));
    }
}
