//! Problem families with analytically known smoothness and similarity, and
//! the dataset plumbing for the logistic experiments.

pub mod libsvm;
pub mod logistic;
pub mod quadratic;
pub mod synthetic;
pub mod tasks;

pub use libsvm::{binary_labels, parse_libsvm, parse_libsvm_str, SparseDataset};
pub use logistic::{exact_hessian_logistic, LogisticPair, LogisticTask};
pub use quadratic::{make_quadratic_nd, make_toy_pair, spectral_norm_sym, Quadratic, QuadraticPair, ToyPair};
pub use tasks::{build_coreset_helper, build_semisupervised, split_sizes, HelperBuild, SemiSupervised};

use std::path::Path;

use crate::error::{Error, Result};

/// Reads a LIBSVM file into a logistic task with `{-1, +1}` labels.
pub fn load_logistic_task(path: &Path, l2_reg: f64) -> Result<LogisticTask> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let data = parse_libsvm(std::io::BufReader::new(file))?;
    if data.n_rows() == 0 {
        return Err(Error::invalid(format!("{} contains no samples", path.display())));
    }
    let labels = binary_labels(&data.labels)?;
    LogisticTask::new(data.to_dense(), labels, l2_reg)
}
