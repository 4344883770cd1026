use concentra_core::deform::{
    balance_loop, f_support_check, f_transform_eval, f_transform_exhaustive, harvest, mc_seminorm_build, spike_drop,
    spike_stats, EventSet, SeminormParams, UpsilonParams,
};
use concentra_core::deform::ftransform::unc_eval;
use concentra_core::deform::upsilon::profile_of;
use concentra_core::mc;
use concentra_core::norms::FunctionalSet;
use concentra_core::{Functional, McConfig, NormSpec};
use proptest::prelude::*;

fn fs_strategy(n: usize, m: usize) -> impl Strategy<Value = FunctionalSet> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n), m)
        .prop_filter("nonzero", |v| v.iter().all(|r| r.iter().any(|x| x.abs() > 1e-3)))
        .prop_map(|v| FunctionalSet::new(v, true).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn f_transform_sandwich_and_symmetry(
        fs in fs_strategy(6, 4),
        y in prop::collection::vec(-3.0f64..3.0, 6),
        tau in 1.0f64..8.0,
        lambda in 0.1f64..10.0,
    ) {
        let norm = unc_eval(&fs, &y);
        let v = f_transform_eval(&fs, tau, &y).unwrap();
        prop_assert!(v.exact);
        prop_assert!(norm <= v.value * (1.0 + 1e-12) + 1e-12);
        prop_assert!(v.value <= (1.0 + 1.0 / tau) * norm * (1.0 + 1e-12) + 1e-12);
        let neg: Vec<f64> = y.iter().map(|a| -a).collect();
        prop_assert!((f_transform_eval(&fs, tau, &neg).unwrap().value - v.value).abs() <= 1e-12 * (1.0 + v.value));
        let scaled: Vec<f64> = y.iter().map(|a| lambda * a).collect();
        let vs = f_transform_eval(&fs, tau, &scaled).unwrap().value;
        prop_assert!((vs - lambda * v.value).abs() <= 1e-10 * (1.0 + lambda * v.value));
    }

    #[test]
    fn f_transform_matches_exhaustive(fs in fs_strategy(7, 3), y in prop::collection::vec(-2.0f64..2.0, 7), tau in 1.0f64..4.0) {
        let a = f_transform_eval(&fs, tau, &y).unwrap().value;
        let b = f_transform_exhaustive(&fs, tau, &y).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b));
    }

    #[test]
    fn f_transform_support_rule(fs in fs_strategy(6, 3), y in prop::collection::vec(-2.0f64..2.0, 6), tau in 1.0f64..50.0) {
        prop_assume!(unc_eval(&fs, &y) > 1e-6);
        prop_assert!(f_support_check(&fs, tau, &y).unwrap().holds);
    }
}

#[test]
fn large_tau_recovers_the_norm() {
    let fs = NormSpec::spiked_sup(5, 3.0).unwrap().functionals().unwrap();
    let y = [0.4, -1.2, 0.3, 2.0, -0.7];
    let norm = unc_eval(&fs, &y);
    let mut prev = f64::INFINITY;
    for tau in [1.0, 4.0, 32.0, 1e4] {
        let v = f_transform_eval(&fs, tau, &y).unwrap().value;
        assert!(v <= prev * (1.0 + 1e-12));
        prev = v;
    }
    assert!((prev - norm).abs() <= 1e-3 * norm);
}

#[test]
fn spike_drop_grows_as_alpha_shrinks() {
    let fs = NormSpec::spiked_sup(16, 5.0).unwrap().functionals().unwrap();
    let cfg = McConfig::new(4_000, 12);
    let st = spike_stats(&fs, 0, &cfg).unwrap();
    let mut prev = -1.0;
    for alpha in [0.9, 0.6, 0.3, 0.1] {
        let d = spike_drop(&fs, 0, alpha, st.grad_l2_sq, &cfg).unwrap();
        assert!(d.drop.value >= prev - 1e-12, "α = {alpha}");
        assert!(d.drop.value >= -1e-12);
        prev = d.drop.value;
    }
}

#[test]
fn upsilon_keeps_half_the_mean_for_sup() {
    let n = 64;
    let spec = NormSpec::sup(n).unwrap();
    let cfg = McConfig::new(1_000, 3);
    let profile = profile_of(&spec, &cfg).unwrap();
    let mut params = UpsilonParams::new(1.0 / (n as f64).ln(), 1.0, 1.0, 0.5);
    params.sample_budget = 128;
    params.inner = 128;
    let hv = harvest(&spec, &profile, &params, &cfg).unwrap();
    let u = hv.build(1.0, &EventSet::empty(hv.t_grid.len())).unwrap();
    let stats = mc::gaussian_stats(&cfg, 0x90, n, 1, None, true, |x, o| o[0] = u.value(x)).unwrap();
    let m = stats.estimate(0);
    assert!(m.value - 3.0 * m.half_width >= 0.5 * profile.mean.value, "{m:?} vs {}", profile.mean.value);
}

#[test]
fn upsilon_never_exceeds_unconditional_norm() {
    let cfg = McConfig::new(1_000, 5);
    for spec in [NormSpec::sup(12).unwrap(), NormSpec::lp(12, 3.0).unwrap()] {
        let profile = profile_of(&spec, &cfg).unwrap();
        let mut params = UpsilonParams::new(0.45, 1.0, 1.0, 0.5);
        params.sample_budget = 64;
        params.inner = 64;
        let hv = harvest(&spec, &profile, &params, &cfg).unwrap();
        let u = hv.build(1.0, &EventSet::empty(hv.t_grid.len())).unwrap();
        let mut rng = mc::substream(9, 0, 0);
        for _ in 0..300 {
            let x = mc::gaussian_vec(&mut rng, 12);
            assert!(u.value(&x) <= spec.value(&x) * (1.0 + 1e-12), "{}", spec.family());
        }
    }
}

#[test]
fn balancing_removes_the_spike_first() {
    let spec = NormSpec::spiked_sup(16, 5.0).unwrap();
    let mut params = UpsilonParams::new(1.0 / 16f64.ln(), 0.2, 1.0, 1.0);
    params.sample_budget = 128;
    params.inner = 128;
    let s = balance_loop(&spec, &params, &McConfig::new(1_000, 2)).unwrap();
    let t = &s.trace;
    assert_eq!(t.rows[0].argmax_partial, 0);
    assert!(t.m >= 1);
    assert_eq!(t.rows[1].chosen, Some(0));
    assert!(t.monotone(3.0));
    assert!(!t.cap_reached);
    let last = t.rows.last().unwrap();
    assert!(last.max_partial < t.theta * t.mean0 || last.mean.value <= 0.0);
    for g in &s.store {
        assert!(g[0].abs() < t.theta / 4.0 * t.mean0);
    }
}

#[test]
fn seminorm_sandwich_on_mixed_sum() {
    let spec = NormSpec::direct_sum(NormSpec::sup(4).unwrap(), NormSpec::lp(4, 2.0).unwrap()).unwrap();
    let p = SeminormParams { delta: 1.0 / 2048.0, harvest: 64, ..Default::default() };
    let r = mc_seminorm_build(&spec, &p, &McConfig::new(600, 6)).unwrap();
    assert!(r.sandwich_holds);
    assert!(r.t_le_2f);
    assert!(r.u_functionals <= r.source_functionals);
    assert!(r.d.iter().all(|&d| d == 0.0 || (0.4..=1.0).contains(&d)));
}
