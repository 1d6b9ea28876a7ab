use proptest::prelude::*;

use auxopt::optimizers::{run, Algorithm, M0Mode, OptimizerConfig, OptimizerState};
use auxopt::problems::make_toy_pair;
use auxopt::theory::{
    auxmom_params, auxmom_params_with, auxmvr_params, auxmvr_params_with, beta, diagnose_cycle,
    estimate_bias_pair, probe_points, TheoryParams, APPENDIX_CONSTANTS,
};
use auxopt::{NoiseSpec, RandomToken, Vector};

fn params() -> impl Strategy<Value = TheoryParams> {
    (
        0.1..10.0f64,
        0.0..2.0f64,
        1usize..50,
        1usize..5000,
        (0.0..3.0f64, 0.0..3.0f64, 0.0..3.0f64),
        0.01..100.0f64,
        0.0..10.0f64,
    )
        .prop_map(|(l, frac, k, t, (sf, sh, sfmh), f0, e0)| TheoryParams {
            l,
            delta: frac * l,
            sigma_f: sf,
            sigma_h: sh,
            sigma_fmh: sfmh,
            f0,
            e0,
            k,
            t,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn schedules_are_safe(p in params()) {
        for mom in [auxmom_params(&p).unwrap(), auxmom_params_with(&p, &APPENDIX_CONSTANTS).unwrap()] {
            prop_assert!(mom.eta > 0.0 && mom.eta <= 1.0 / p.l);
            prop_assert!(36.0 * p.delta * p.k as f64 * mom.eta <= 1.0);
            prop_assert!(mom.a >= 1.0 / p.t as f64 && mom.a <= 1.0);
            prop_assert!(mom.beta >= 0.0);
        }
        for mvr in [auxmvr_params(&p).unwrap(), auxmvr_params_with(&p, &APPENDIX_CONSTANTS).unwrap()] {
            prop_assert!(mvr.eta > 0.0 && mvr.eta <= 1.0 / p.l);
            prop_assert!(mvr.a >= 1.0 / p.t as f64 && mvr.a <= 1.0);
        }
        prop_assert_eq!(auxmom_params(&p).unwrap().beta, beta(&p));
    }
}

#[test]
fn exact_momentum_error_vanishes_for_any_start() {
    let p = make_toy_pair(0.4, 3.0, NoiseSpec::zero()).unwrap();
    let cfg = OptimizerConfig::new(Algorithm::AuxMom, 0.05, 1.0, 5, 1);
    for m0 in [-4.0, 0.0, 9.0] {
        let mut state = OptimizerState::new(Vector::scalar(2.0), Vector::scalar(m0));
        for t in 1..=10u64 {
            let (next, d) = diagnose_cycle(&state, &p, &cfg, RandomToken::root(t)).unwrap();
            assert_eq!(d.e_t, 0.0);
            state = next;
        }
    }
}

#[test]
fn step_length_follows_contraction() {
    let (delta, eta, k, x0) = (0.5f64, 0.1f64, 4usize, 2.0f64);
    let p = make_toy_pair(delta, 1.0, NoiseSpec::zero()).unwrap();
    let cfg = OptimizerConfig::new(Algorithm::AuxMom, eta, 1.0, k, 1);
    let rho = 1.0 - (1.0 - (1.0 - (1.0 + delta) * eta).powi(k as i32)) / (1.0 + delta);
    let mut state = OptimizerState::new(Vector::scalar(x0), Vector::zeros(1));
    for t in 1..=8 {
        let (next, d) = diagnose_cycle(&state, &p, &cfg, RandomToken::root(0)).unwrap();
        let expected = ((rho - 1.0) * rho.powi(t - 1) * x0).powi(2);
        assert!((d.delta_t - expected).abs() <= 1e-12 * expected.max(1e-300), "cycle {t}");
        state = next;
    }
}

#[test]
fn theorem_steps_decrease_the_cycle_gradient() {
    let delta = 0.1;
    let p = make_toy_pair(delta, 1.0, NoiseSpec::zero()).unwrap();
    let (k, t) = (10, 200);
    let x0 = 1.0f64;
    let tp = TheoryParams {
        l: 1.0 + delta,
        delta,
        sigma_f: 0.0,
        sigma_h: 0.0,
        sigma_fmh: 0.0,
        f0: 0.5 * x0 * x0,
        e0: 0.0,
        k,
        t,
    };
    let s = auxmom_params(&tp).unwrap();
    let cfg = OptimizerConfig::new(Algorithm::AuxMom, s.eta, s.a, k, t).with_m0(M0Mode::SingleSample);
    let traj = run(&p, &Vector::scalar(x0), &cfg, RandomToken::root(0), true).unwrap();
    let g: Vec<f64> = traj.cycles.iter().map(|c| c.g_t).collect();
    assert_eq!(g.len(), t);
    for (i, w) in g.windows(2).enumerate().skip(1) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "G rose at cycle {}: {} -> {}", i + 2, w[0], w[1]);
    }
    assert!(g[t - 1] < g[0]);
}

#[test]
fn bias_constants_on_probes() {
    let p = make_toy_pair(0.0, 1.0, NoiseSpec::zero()).unwrap();
    let pts = probe_points(&Vector::scalar(0.0), 20, 3.0, RandomToken::root(1)).unwrap();
    let b = estimate_bias_pair(&p, &pts).unwrap();
    assert_eq!(b.m, 0.0);
    assert!((b.zeta_sq - 1.0).abs() < 1e-12);

    let p = make_toy_pair(0.5, 2.0, NoiseSpec::zero()).unwrap();
    let b = estimate_bias_pair(&p, &pts).unwrap();
    for x in &pts {
        let gf = auxopt::OraclePair::exact_grad_f(&p, x).unwrap();
        let gh = auxopt::OraclePair::exact_grad_h(&p, x).unwrap();
        assert!(gf.sub(&gh).unwrap().norm_sq() <= b.m * gf.norm_sq() + b.zeta_sq);
    }
}
