//! Generator for a categorical binary-classification dataset with the layout
//! of the LIBSVM `mushrooms` file: 8124 rows, 22 one-hot encoded attributes
//! spanning 112 binary features, labels in `{1, 2}`.
//!
//! Labels come from a planted logistic model over the one-hot features, so
//! the task is learnable but not separable.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::RandomToken;

pub const MUSHROOMS_ROWS: usize = 8124;
pub const MUSHROOMS_FEATURES: usize = 112;

/// Number of levels per categorical attribute (sums to 112).
pub const ATTRIBUTE_LEVELS: [usize; 22] = [
    6, 4, 10, 2, 9, 2, 2, 2, 12, 2, 5, 4, 4, 9, 9, 1, 4, 3, 5, 9, 6, 2,
];

pub fn mushrooms_like(seed: u64) -> String {
    categorical_libsvm(MUSHROOMS_ROWS, &ATTRIBUTE_LEVELS, seed)
}

/// One-hot categorical dataset in LIBSVM text form.
pub fn categorical_libsvm(n_rows: usize, levels: &[usize], seed: u64) -> String {
    let root = RandomToken::root(seed);
    let mut wrng = root.fork(1).rng();
    let mut rrng = root.fork(2).rng();

    // skewed level frequencies and planted weights per attribute
    let mut popularity = Vec::with_capacity(levels.len());
    let mut weights = Vec::with_capacity(levels.len());
    for &l in levels {
        let p: Vec<f64> = (0..l).map(|_| wrng.random::<f64>() + 0.2).collect();
        let total: f64 = p.iter().sum();
        popularity.push(p.into_iter().map(|v| v / total).collect::<Vec<_>>());
        weights.push((0..l).map(|_| wrng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>());
    }

    let max_levels = levels.iter().copied().max().unwrap_or(1);
    let mut picks = Vec::with_capacity(n_rows);
    let mut scores = Vec::with_capacity(n_rows);
    for r in 0..n_rows {
        let mut row = Vec::with_capacity(levels.len());
        let mut score = 0.0;
        for (j, &l) in levels.iter().enumerate() {
            // the first rows cycle through every level so each column occurs
            let v = if r < max_levels {
                r % l
            } else {
                let u: f64 = rrng.random();
                let mut acc = 0.0;
                popularity[j]
                    .iter()
                    .position(|p| {
                        acc += p;
                        u < acc
                    })
                    .unwrap_or(l - 1)
            };
            score += weights[j][v];
            row.push(v);
        }
        picks.push(row);
        scores.push(score);
    }

    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];

    let mut out = String::with_capacity(n_rows * levels.len() * 7);
    for (row, score) in picks.iter().zip(&scores) {
        let p = 1.0 / (1.0 + (-1.5 * (score - median)).exp());
        let label = if rrng.random::<f64>() < p { 1 } else { 2 };
        out.push_str(&label.to_string());
        let mut offset = 0;
        for (&v, &l) in row.iter().zip(levels) {
            out.push_str(&format!(" {}:1", offset + v + 1));
            offset += l;
        }
        out.push('\n');
    }
    out
}
