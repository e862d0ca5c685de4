use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;

use pricefront::diagnostics::{cumulative_flux, flux_integral, mass_report};
use pricefront::duhamel::{eval_f, eval_fx, eval_fxx, QuadratureConfig};
use pricefront::kernel::{KernelConfig, NeumannKernel};
use pricefront::model::{skewed_profile, validate_initial, InitialData, ModelParams, Node, SolutionState};
use pricefront::particles::{init_ensemble, step_ensemble};
use pricefront::picard::{global_solve, Thresholds};

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

fn kernel() -> NeumannKernel {
    NeumannKernel::new(KernelConfig::default()).unwrap()
}

/// Skewed data solved to t = 0.01, shared by the state tests.
fn skewed_state() -> &'static SolutionState {
    static ST: OnceLock<SolutionState> = OnceLock::new();
    ST.get_or_init(|| {
        let prm = ModelParams::default();
        let init = InitialData::builtin("skewed", &prm).unwrap();
        global_solve(init, prm, QuadratureConfig::default(), Thresholds::default(), 0.01).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_unit_mass(log_t in (1e-4f64).ln()..(10.0f64).ln(), src in 0usize..21) {
        let (t, y) = (log_t.exp(), -1.0 + 0.1 * src as f64);
        let k = kernel();
        let m = simpson(|x| k.green(x, y, t).unwrap(), -1.0, 1.0, 40_000);
        prop_assert!((m - 1.0).abs() <= 1e-10, "t {} y {}: {}", t, y, m);
    }

    #[test]
    fn kernel_semigroup(x in -1.0f64..1.0, y in -1.0f64..1.0, s in 0.01f64..1.0, t in 0.01f64..1.0) {
        let k = kernel();
        let conv = simpson(|z| k.green(x, z, s).unwrap() * k.green(z, y, t).unwrap(), -1.0, 1.0, 20_000);
        prop_assert!((conv - k.green(x, y, s + t).unwrap()).abs() <= 1e-8);
    }

    #[test]
    fn kernel_representations_agree(x in -1.0f64..1.0, y in -1.0f64..1.0, f in 0.25f64..4.0) {
        let k = kernel();
        let t = f * KernelConfig::default().representation_crossover_time;
        let (a, b) = (k.image_jet(x, y, t), k.spectral_jet(x, y, t));
        prop_assert!((a.f - b.f).abs() <= 1e-9 && (a.fx - b.fx).abs() <= 1e-9);
    }

    #[test]
    fn kernel_neumann_walls(y in -1.0f64..1.0, log_t in (1e-4f64).ln()..(10.0f64).ln()) {
        let k = kernel();
        let t = log_t.exp();
        prop_assert!(k.green_dx(-1.0, y, t).unwrap().abs() <= 1e-10);
        prop_assert!(k.green_dx(1.0, y, t).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn validation_is_idempotent(c0 in -0.2f64..0.2, c2 in -0.25f64..0.25) {
        let prm = ModelParams::default();
        let xs = prm.grid();
        let fs: Vec<f64> = xs.iter().map(|&x| c0 - (PI * x / 2.0).sin() - c2 * (PI * x).cos()).collect();
        if let Ok(first) = validate_initial(&xs, &fs, None, &prm) {
            let again = validate_initial(&first.grid(), first.samples(), Some(first.p_i), &prm).unwrap();
            prop_assert_eq!(first, again);
        }
    }

    #[test]
    fn flux_integral_non_decreasing(ls in proptest::collection::vec(0.0f64..3.0, 2..40)) {
        let prm = ModelParams::default();
        let init = InitialData::builtin("symmetric", &prm).unwrap();
        let hist: Vec<Node> = ls.iter().enumerate().map(|(i, &l)| Node { t: 1e-3 * i as f64, p: 0.0, lambda: l }).collect();
        let st = SolutionState::with_history(init, prm, QuadratureConfig::default(), &hist).unwrap();
        let cum = cumulative_flux(&st);
        prop_assert!(cum.windows(2).all(|w| w[1] >= w[0] && w[1].is_finite()));
        let mut prev = 0.0;
        for k in 0..=50 {
            let t = (st.t_current() * k as f64 / 50.0).min(st.t_current());
            let v = flux_integral(&st, t).unwrap();
            prop_assert!(v >= prev);
            prev = v;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn kernel_symmetric(x in -1.0f64..1.0, y in -1.0f64..1.0, log_t in (1e-4f64).ln()..(10.0f64).ln()) {
        let k = kernel();
        let t = log_t.exp();
        let (a, b) = (k.green(x, y, t).unwrap(), k.green(y, x, t).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn particle_bookkeeping(seed in any::<u64>(), p0 in -0.3f64..0.3, v in -3.0f64..3.0, parts in 1usize..8) {
        let prm = ModelParams::default();
        let xs: Vec<f64> = (0..=100).map(|i| p0 + (1.0 - p0) * i as f64 / 100.0).collect();
        let rho: Vec<f64> = xs.iter().map(|&x| 1.0 - x * x + 0.1).collect();
        let mut ens = init_ensemble(&xs, &rho, 500, seed, parts).unwrap();
        let total = ens.total_mass();
        let mut log = vec![];
        let mut prev = ens.levels.clone();
        for _ in 0..100 {
            step_ensemble(&mut ens, |t| p0 + v * t, 1e-4, &prm, true, &mut log);
            prop_assert!(ens.levels.iter().zip(&prev).all(|(a, b)| a >= b));
            prev = ens.levels.clone();
            let masses = ens.level_masses();
            prop_assert!(masses.iter().all(|&m| m >= 0.0));
            prop_assert!((masses.iter().sum::<f64>() - total).abs() <= 1e-12 * total);
            prop_assert!(ens.positions.iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }
}

#[test]
fn one_sided_masses_along_solver_state() {
    let st = skewed_state();
    let init = st.initial();
    for k in 0..=10 {
        let m = mass_report(st, (st.t_current() * k as f64 / 10.0).min(st.t_current())).unwrap();
        assert!(m.deviation_b.abs() <= 1e-6 && m.deviation_p.abs() <= 1e-6, "{m:?}");
        assert!((m.mass_b - init.mass_b).abs() <= 1e-6);
    }
}

#[test]
fn sign_structure_preserved() {
    let st = skewed_state();
    let delta = 0.01;
    for n in st.nodes().iter().step_by(st.nodes().len() / 8) {
        for i in 0..=400 {
            let x = -1.0 + 2.0 * i as f64 / 400.0;
            let f = eval_f(st, x, n.t).unwrap();
            if x > -1.0 + delta && x < n.p - delta {
                assert!(f > 0.0, "f({x}, {}) = {f}", n.t);
            } else if x > n.p + delta && x < 1.0 - delta {
                assert!(f < 0.0, "f({x}, {}) = {f}", n.t);
            }
        }
    }
}

#[test]
fn velocity_formulas_agree_off_sources() {
    // f_t by a centred time difference against f_xx, at the front and away from it
    let st = skewed_state();
    let t = 0.008;
    let dt = 1e-5;
    let (p, _) = st.interpolate(t).unwrap();
    for x in [p, p - 0.02, p + 0.03, -0.9, 0.8] {
        let ft = (eval_f(st, x, t + dt).unwrap() - eval_f(st, x, t - dt).unwrap()) / (2.0 * dt);
        let fxx = eval_fxx(st, x, t).unwrap();
        let fx = eval_fx(st, x, t).unwrap();
        assert!((ft - fxx).abs() <= 1e-5 * (1.0 + fxx.abs()), "x {x}: {ft} vs {fxx}");
        if x == p {
            assert!((-ft / fx - (-fxx / fx)).abs() <= 1e-5);
        }
    }
}

#[test]
fn solves_are_bit_identical() {
    let prm = ModelParams::default();
    let run = || {
        let init = InitialData::from_fn(skewed_profile, &prm).unwrap();
        global_solve(init, prm, QuadratureConfig::default(), Thresholds::default(), 0.001).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.nodes(), b.nodes());
    assert_eq!(a.window_log(), b.window_log());
}
