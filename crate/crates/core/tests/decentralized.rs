use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use auxopt::decentralized::{
    check_weak_convexity, decentralized_cycle, run_decentralized, sample_helpers, DecentralizedState,
    DecentralizedVariant, HelperSet,
};
use auxopt::optimizers::{auxmom_cycle, auxmvr_cycle, Algorithm, OptimizerConfig, OptimizerState};
use auxopt::oracle::{NoisyPair, Smooth};
use auxopt::problems::Quadratic;
use auxopt::{NoiseSpec, OraclePair, RandomToken, Vector};

fn scalar_helpers(curvatures: &[f64], noise: NoiseSpec) -> Vec<Arc<dyn OraclePair>> {
    curvatures
        .iter()
        .map(|&c| {
            Arc::new(NoisyPair::new(Quadratic::scalar(1.0, 0.0, 0.0), Quadratic::scalar(c, 0.0, 0.0), noise).unwrap())
                as Arc<dyn OraclePair>
        })
        .collect()
}

#[test]
fn two_helpers_are_averaged() {
    // with x = 1, eta = 1, K = 2 and a = 1 helper i ends at curvature_i - 1
    let set = HelperSet::new(scalar_helpers(&[1.0, 3.0], NoiseSpec::zero()), 2).unwrap();
    let cfg = OptimizerConfig::new(Algorithm::AuxMom, 1.0, 1.0, 2, 1);
    let state = DecentralizedState::new(Vector::scalar(1.0), 2);
    let next = decentralized_cycle(&state, &set, &cfg, RandomToken::root(0), DecentralizedVariant::AuxMom).unwrap();
    assert_eq!(next.x[0], 1.0);
    assert_eq!(next.last_sampled, vec![0, 1]);
    assert_eq!(next.momenta[0][0], 0.0);
    assert_eq!(next.momenta[1][0], -2.0);
    assert_eq!((next.calls_f, next.calls_h), (1, 2 * 3));
}

#[test]
fn identical_helpers_merge_into_one() {
    // h-noise would differ per helper stream, f-noise is shared
    let noise = NoiseSpec::new(0.7, 0.0, 0.0).unwrap();
    let helpers = scalar_helpers(&[1.6, 1.6, 1.6], noise);
    let single = helpers[0].clone();
    let set = HelperSet::new(helpers, 3).unwrap();
    let root = RandomToken::root(21);
    for (variant, alg) in [
        (DecentralizedVariant::AuxMom, Algorithm::AuxMom),
        (DecentralizedVariant::AuxMvr, Algorithm::AuxMvr),
    ] {
        let cfg = OptimizerConfig::new(alg, 0.1, 0.3, 4, 1);
        let mut merged = DecentralizedState::new(Vector::scalar(2.0), 3);
        let mut reference = OptimizerState::new(Vector::scalar(2.0), Vector::zeros(1));
        for t in 1..=30u64 {
            let tok = root.fork(t);
            merged = decentralized_cycle(&merged, &set, &cfg, tok, variant).unwrap();
            reference = match alg {
                Algorithm::AuxMom => auxmom_cycle(&reference, &single, &cfg, tok),
                _ => auxmvr_cycle(&reference, &single, &cfg, tok),
            }
            .unwrap();
            assert!((merged.x[0] - reference.x[0]).abs() < 1e-12, "{variant:?} cycle {t}");
            assert!(merged.momenta.iter().all(|m| (m[0] - reference.m[0]).abs() < 1e-12));
        }
    }
}

#[test]
fn sampling_is_uniform_without_replacement() {
    let (n, s, draws) = (6, 2, 30_000u64);
    let mut counts = vec![0u64; n];
    for t in 0..draws {
        let picked = sample_helpers(RandomToken::root(5).fork(t), n, s);
        assert_eq!(picked.len(), s);
        assert!(picked.windows(2).all(|w| w[0] < w[1]));
        for i in picked {
            counts[i] += 1;
        }
    }
    let expected = (draws * s as u64) as f64 / n as f64;
    for c in counts {
        assert!((c as f64 - expected).abs() < 5.0 * expected.sqrt(), "{c} vs {expected}");
    }
    assert_eq!(
        sample_helpers(RandomToken::root(9), n, s),
        sample_helpers(RandomToken::root(9), n, s)
    );
}

#[test]
fn run_records_every_snapshot() {
    let set = HelperSet::new(scalar_helpers(&[0.5, 1.0, 2.0, 4.0], NoiseSpec::zero()), 2).unwrap();
    let cfg = OptimizerConfig::new(Algorithm::AuxMom, 0.1, 0.5, 3, 12);
    let init = DecentralizedState::new(Vector::scalar(3.0), 4);
    let (state, snaps) = run_decentralized(&set, init, &cfg, RandomToken::root(1), DecentralizedVariant::AuxMom).unwrap();
    assert_eq!(snaps.len(), 13);
    assert_eq!(state.t, 12);
    assert_eq!(snaps.last().unwrap(), &state.x);
    assert_eq!((state.calls_f, state.calls_h), (12, 12 * 2 * 4));
    assert!(state.x[0].abs() < 3.0);
}

#[test]
fn weak_convexity_of_sums() {
    // f + delta |x|^2 is convex exactly when delta >= 1/2
    let f = Quadratic::new(DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 2.0])), DVector::zeros(2), 0.0)
        .unwrap();
    let report = check_weak_convexity(&f, 0.4, 500, 1.0, RandomToken::root(2)).unwrap();
    assert!(!report.holds);
    assert!(report.witness.unwrap().2 > 0.0);
    assert!(check_weak_convexity(&f, 0.5, 500, 1.0, RandomToken::root(2)).unwrap().holds);
}

fn random_psd(dim: usize, token: RandomToken) -> DMatrix<f64> {
    let b = DMatrix::from_vec(dim, dim, token.gaussians(dim * dim));
    (&b * b.transpose()) / dim as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn averaging_does_not_increase_the_potential(
        seed in any::<u64>(),
        dim in 1usize..5,
        n in 2usize..6,
        delta in 0.0..2.0f64,
        extra in 0.0..1.0f64,
    ) {
        let tok = RandomToken::root(seed);
        // lowest curvature -2 delta, so f + delta |x|^2 is convex
        let a = random_psd(dim, tok.fork(0)) - DMatrix::identity(dim, dim) * (2.0 * delta);
        let f = Quadratic::new(a, DVector::from_vec(tok.fork(1).gaussians(dim)), 0.0).unwrap();
        let alpha = delta + extra;
        let x = Vector::new(tok.fork(2).gaussians(dim)).unwrap();
        let ys: Vec<Vector> = (0..n).map(|i| Vector::new(tok.fork(10 + i as u64).gaussians(dim)).unwrap()).collect();
        let potential = |y: &Vector| f.value(y).unwrap() + alpha * y.dist_sq(&x).unwrap();
        let mean = Vector::mean(&ys).unwrap();
        let avg: f64 = ys.iter().map(potential).sum::<f64>() / n as f64;
        prop_assert!(potential(&mean) <= avg + 1e-12 * (1.0 + avg.abs()));
    }
}
