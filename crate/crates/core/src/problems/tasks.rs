use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::logistic::LogisticTask;
use crate::rng::{permutation, sample_without_replacement, RandomToken};

const SPLIT_STREAM: u64 = 1;
const LABEL_STREAM: u64 = 2;
const CORESET_STREAM: u64 = 3;

/// How the helper task is built from the available data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HelperBuild {
    /// Unlabeled split with uniform random `+-1` labels.
    RandomLabels,
    /// Uniformly weighted random subset of the labeled train split.
    Coreset { fraction: f64 },
    /// A fixed batch of the labeled train split, reused for every helper step.
    SubsetBatch { indices: Vec<usize> },
}

#[derive(Debug, Clone)]
pub struct SemiSupervised {
    pub train: LogisticTask,
    pub helper: LogisticTask,
    pub test: LogisticTask,
}

/// Split sizes for `n` rows: floor of each fraction for the test and
/// unlabeled parts, remainder to train.
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (tr, te, un) = fractions;
    for (name, v) in [("train", tr), ("test", te), ("unlabeled", un)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("{name} fraction must be positive, got {v}")));
        }
    }
    if (tr + te + un - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions must sum to 1, got {}",
            tr + te + un
        )));
    }
    let test = (te * n as f64 + 1e-9).floor() as usize;
    let unlabeled = (un * n as f64 + 1e-9).floor() as usize;
    let train = n.saturating_sub(test + unlabeled);
    if train == 0 || test == 0 || unlabeled == 0 {
        return Err(Error::invalid(format!(
            "split of {n} rows leaves an empty part ({train}/{test}/{unlabeled})"
        )));
    }
    Ok((train, test, unlabeled))
}

pub fn rademacher_labels(n: usize, token: RandomToken) -> Vec<f64> {
    use rand::Rng;
    let mut rng = token.rng();
    (0..n)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

/// Shuffles the rows with `seed` and cuts contiguous train/test/unlabeled parts.
pub fn build_semisupervised(
    task: &LogisticTask,
    fractions: (f64, f64, f64),
    helper: &HelperBuild,
    seed: RandomToken,
) -> Result<SemiSupervised> {
    let n = task.n_samples();
    let (n_train, n_test, _) = split_sizes(n, fractions)?;
    let order = permutation(seed.fork(SPLIT_STREAM), n);
    let train = task.subset(&order[..n_train])?;
    let test = task.subset(&order[n_train..n_train + n_test])?;
    let unlabeled = &order[n_train + n_test..];

    let helper = match helper {
        HelperBuild::RandomLabels => {
            let base = task.subset(unlabeled)?;
            let labels = rademacher_labels(base.n_samples(), seed.fork(LABEL_STREAM));
            base.relabeled(labels)?
        }
        HelperBuild::Coreset { fraction } => {
            build_coreset_helper(&train, *fraction, seed.fork(CORESET_STREAM))?
        }
        HelperBuild::SubsetBatch { indices } => {
            if indices.is_empty() {
                return Err(Error::invalid("subset batch must not be empty"));
            }
            if let Some(&bad) = indices.iter().find(|&&i| i >= train.n_samples()) {
                return Err(Error::invalid(format!(
                    "batch index {bad} out of range for {} train rows",
                    train.n_samples()
                )));
            }
            train.subset(indices)?
        }
    };
    Ok(SemiSupervised {
        train,
        helper,
        test,
    })
}

/// Uniform subset without replacement holding `floor(fraction * n)` rows,
/// each weighted `1/M`.
pub fn build_coreset_helper(
    task: &LogisticTask,
    fraction: f64,
    seed: RandomToken,
) -> Result<LogisticTask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "coreset fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let n = task.n_samples();
    let m = (fraction * n as f64 + 1e-9).floor() as usize;
    if m == 0 {
        return Err(Error::invalid(format!(
            "coreset fraction {fraction} of {n} rows selects no samples"
        )));
    }
    let indices = sample_without_replacement(seed, n, m);
    task.subset(&indices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(n: usize) -> LogisticTask {
        let rows = (0..n).map(|i| vec![(i % 7) as f64 / 7.0, ((i * 3) % 5) as f64 / 5.0, 1.0]).collect();
        let labels = (0..n).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        LogisticTask::new(rows, labels, 0.0).unwrap()
    }

    #[test]
    fn equal_thirds() {
        assert_eq!(split_sizes(8124, (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)).unwrap(), (2708, 2708, 2708));
        assert_eq!(split_sizes(10, (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)).unwrap(), (4, 3, 3));
    }

    #[test]
    fn split_errors() {
        assert!(split_sizes(100, (0.5, 0.5, 0.0)).is_err());
        assert!(split_sizes(100, (0.5, 0.3, 0.3)).is_err());
        assert!(split_sizes(2, (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)).is_err());
    }

    #[test]
    fn random_label_helper_is_deterministic() {
        let t = task(90);
        let thirds = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0);
        let a = build_semisupervised(&t, thirds, &HelperBuild::RandomLabels, RandomToken::root(4)).unwrap();
        let b = build_semisupervised(&t, thirds, &HelperBuild::RandomLabels, RandomToken::root(4)).unwrap();
        assert_eq!(a.helper.labels(), b.helper.labels());
        assert_eq!(a.helper.rows(), b.helper.rows());
        assert_eq!(a.train.n_samples(), 30);
        assert_eq!(a.test.n_samples(), 30);
        assert_eq!(a.helper.n_samples(), 30);
    }

    #[test]
    fn coreset_sizes_and_weights() {
        let t = task(1000);
        let c = build_coreset_helper(&t, 0.2, RandomToken::root(1)).unwrap();
        assert_eq!(c.n_samples(), 200);
        assert!((c.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(c.weights().iter().all(|&w| w > 0.0));
        let d = build_coreset_helper(&t, 0.2, RandomToken::root(2)).unwrap();
        assert_eq!(d.n_samples(), 200);
        assert_ne!(c.rows(), d.rows());
        assert!(build_coreset_helper(&t, 0.0, RandomToken::root(1)).is_err());
        assert!(build_coreset_helper(&t, 0.0001, RandomToken::root(1)).is_err());
        assert!(build_coreset_helper(&t, 1.5, RandomToken::root(1)).is_err());
    }

    #[test]
    fn full_coreset_is_the_task() {
        let t = task(40);
        let c = build_coreset_helper(&t, 1.0, RandomToken::root(9)).unwrap();
        assert_eq!(c.rows(), t.rows());
        assert_eq!(c.labels(), t.labels());
    }
}
