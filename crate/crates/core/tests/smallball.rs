use concentra_core::gstats::exact_concentration_profile;
use concentra_core::smallball::{
    bound_report, d_param, exact_smallball, ln_exact_cdf, lower_smalldev_exact_linf, mc_smallball, scaling_study,
    splitting_smallball, Anchor, Engine, Family, SmallBallQuery, SplittingConfig,
};
use concentra_core::{McConfig, NormSpec};

#[test]
fn closed_form_values() {
    let s1 = NormSpec::sup(1).unwrap();
    let s2 = NormSpec::sup(2).unwrap();
    assert!((exact_smallball(&s1, 1.0).unwrap() - 0.682_689_492_1).abs() < 1e-10);
    assert!((exact_smallball(&s2, 1.0).unwrap() - 0.466_064_942_7).abs() < 1e-9);
    // P{|g| < E|g|} = 2Φ(√(2/π)) − 1.
    assert!((lower_smalldev_exact_linf(1, 0.0) - 0.575_062_516_3).abs() < 1e-9);
    assert!((lower_smalldev_exact_linf(2, 0.0) - 0.575_062_516_3f64.powi(2)).abs() > 1e-3);
    let mut prev = 1.0;
    for eps in [0.0, 0.1, 0.3, 0.6] {
        let p = lower_smalldev_exact_linf(64, eps);
        assert!(p < prev && p > 0.0);
        prev = p;
    }
}

#[test]
fn naive_estimates_cover_exact_values() {
    let cfg = McConfig::new(100_000, 21);
    for (spec, delta) in [(NormSpec::lp(4, 2.0).unwrap(), 0.9), (NormSpec::sup(16).unwrap(), 0.6)] {
        let q = SmallBallQuery::new(spec.clone(), delta, Anchor::Mean, &cfg).unwrap();
        let r = mc_smallball(&q, &cfg).unwrap();
        let exact = ln_exact_cdf(&spec, q.threshold()).unwrap();
        assert!((r.log_p - exact).abs() <= 3.0 * r.log_p_hw, "{}: {} ± {} vs {exact}", spec.family(), r.log_p, r.log_p_hw);
    }
}

#[test]
fn splitting_agrees_with_naive_when_not_rare() {
    let spec = NormSpec::sup(8).unwrap();
    let cfg = McConfig::new(100_000, 4);
    let q = SmallBallQuery::new(spec, 0.7, Anchor::Mean, &cfg).unwrap();
    let naive = mc_smallball(&q, &cfg).unwrap();
    let split = splitting_smallball(&q, &SplittingConfig { seed: 4, ..Default::default() }).unwrap();
    let tol = 3.0 * (naive.log_p_hw + split.log_p_hw) + 0.02;
    assert!((naive.log_p - split.log_p).abs() <= tol, "{} vs {}", naive.log_p, split.log_p);
}

#[test]
fn splitting_tracks_rare_sup_event() {
    let spec = NormSpec::sup(32).unwrap();
    let q = SmallBallQuery::new(spec.clone(), 0.3, Anchor::Mean, &McConfig::new(1, 0)).unwrap();
    let exact = ln_exact_cdf(&spec, q.threshold()).unwrap();
    let r = splitting_smallball(&q, &SplittingConfig { seed: 8, ..Default::default() }).unwrap();
    assert!(exact < -20.0);
    assert!(((r.log_p - exact) / exact).abs() <= 0.15, "{} vs {exact}", r.log_p);
    assert!(!r.levels.is_empty());
    assert!(r.accept_rates.iter().all(|&a| a > 0.0 && a <= 1.0));
}

/// No bound may fall below the exact probability anywhere on the grid.
#[test]
fn bounds_dominate_exact_values() {
    let specs = [
        NormSpec::sup(8).unwrap(),
        NormSpec::sup(128).unwrap(),
        NormSpec::lp(8, 2.0).unwrap(),
        NormSpec::lp(64, 2.0).unwrap(),
        NormSpec::lp(16, 1.0).unwrap(),
        NormSpec::weighted_sup(vec![1.0, 2.0, 3.0, 0.5]).unwrap(),
    ];
    for spec in specs {
        let p = exact_concentration_profile(&spec).unwrap();
        let d = d_param(&spec, 0.5);
        for delta in [0.05, 0.1, 0.2, 0.3, 0.45, 0.7, 0.9] {
            for anchor in [Anchor::Mean, Anchor::Median] {
                let anchor_value = match anchor {
                    Anchor::Mean => p.mean.value,
                    Anchor::Median => p.median.value,
                };
                let q = SmallBallQuery::with_anchor(spec.clone(), delta, anchor, anchor_value).unwrap();
                let r = bound_report(&p, &q, d).unwrap();
                assert!(r.log_exact.is_some());
                assert!(r.violations(1e-9).is_empty(), "{} δ={delta} {anchor:?}: {:?}", spec.family(), r);
            }
        }
    }
}

#[test]
fn exact_scaling_exponents() {
    let sup = scaling_study(Family::Sup, 0.5, &[16, 32, 64, 128, 256], Engine::Exact, &SplittingConfig::default()).unwrap();
    assert!(sup.strictly_increasing());
    assert!(sup.gamma_hat < 1.0, "{}", sup.gamma_hat);
    let l2 = scaling_study(Family::Lp { p: 2.0 }, 0.5, &[64, 128, 256, 512, 1024], Engine::Exact, &SplittingConfig::default()).unwrap();
    assert!((l2.gamma_hat - 1.0).abs() < 0.05 && l2.gamma_hat > sup.gamma_hat, "{}", l2.gamma_hat);
    assert!(scaling_study(Family::Sup, 0.5, &[16, 24, 64, 128], Engine::Exact, &SplittingConfig::default()).is_err());
}
