use concentra_core::norms::{dot, lift_map, unc_constant_lower, FunctionalSet, NormSpec};
use concentra_core::{Error, Functional, McConfig};
use proptest::prelude::*;

fn families(n: usize) -> Vec<NormSpec> {
    let w: Vec<f64> = (0..n).map(|i| 0.5 + i as f64 / n as f64).collect();
    let a: Vec<f64> = (0..n * n).map(|k| if k % (n + 1) == 0 { 2.0 } else { ((k * 7) % 5) as f64 / 10.0 - 0.2 }).collect();
    let half = n / 2;
    vec![
        NormSpec::lp(n, 1.0).unwrap(),
        NormSpec::lp(n, 2.0).unwrap(),
        NormSpec::lp(n, 3.5).unwrap(),
        NormSpec::sup(n).unwrap(),
        NormSpec::weighted_sup(w).unwrap(),
        NormSpec::spiked_sup(n, 5.0).unwrap(),
        NormSpec::direct_sum(NormSpec::lp(half, 2.0).unwrap(), NormSpec::sup(n - half).unwrap()).unwrap(),
        NormSpec::linear_image(a, NormSpec::lp(n, 1.5).unwrap(), false).unwrap(),
    ]
}

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn homogeneous_and_symmetric(x in vec_strategy(6), lambda in 0.01f64..50.0) {
        for f in families(6) {
            let v = f.value(&x);
            let scaled: Vec<f64> = x.iter().map(|xi| lambda * xi).collect();
            let neg: Vec<f64> = x.iter().map(|xi| -xi).collect();
            prop_assert!((f.value(&scaled) - lambda * v).abs() <= 1e-12 * (1.0 + lambda * v));
            prop_assert!((f.value(&neg) - v).abs() <= 1e-12 * (1.0 + v));
        }
    }

    #[test]
    fn triangle_inequality(x in vec_strategy(6), y in vec_strategy(6)) {
        for f in families(6) {
            let s: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            prop_assert!(f.value(&s) <= (f.value(&x) + f.value(&y)) * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn subgradient_duality(x in vec_strategy(6), y in vec_strategy(6)) {
        prop_assume!(x.iter().any(|v| v.abs() > 1e-6));
        for f in families(6) {
            let g = f.subgradient(&x).unwrap();
            let fx = f.eval(&x).unwrap();
            prop_assert!((dot(&g, &x) - fx).abs() <= 1e-12 * fx.max(1.0));
            prop_assert!(dot(&g, &y) <= f.eval(&y).unwrap() * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn linear_image_composes(x in vec_strategy(3), a in prop::collection::vec(-3.0f64..3.0, 9)) {
        let inner = NormSpec::lp(3, 2.5).unwrap();
        let spec = NormSpec::linear_image(a.clone(), inner.clone(), true).unwrap();
        let ax: Vec<f64> = (0..3).map(|i| (0..3).map(|j| a[i * 3 + j] * x[j]).sum()).collect();
        prop_assert_eq!(spec.eval(&x).unwrap(), inner.eval(&ax).unwrap());
    }
}

#[test]
fn worked_values() {
    let sup = NormSpec::sup(3).unwrap();
    assert_eq!(sup.eval(&[1.0, -2.0, 0.5]).unwrap(), 2.0);
    assert_eq!(sup.subgradient(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, -1.0, 0.0]);
    let fs = FunctionalSet::new(vec![vec![1.0, 1.0], vec![1.0, -1.0]], true).unwrap();
    let poly = NormSpec::polytope(fs).unwrap();
    assert_eq!(poly.eval(&[3.0, 4.0]).unwrap(), 7.0);
    assert_eq!(poly.subgradient(&[3.0, 4.0]).unwrap(), vec![1.0, 1.0]);
    let img = NormSpec::linear_image(vec![2.0, 0.0, 0.0, 2.0], NormSpec::sup(2).unwrap(), false).unwrap();
    assert_eq!(img.eval(&[1.0, -2.0]).unwrap(), 4.0);
    let l2 = NormSpec::lp(2, 2.0).unwrap();
    let g = l2.subgradient(&[3.0, 4.0]).unwrap();
    assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
}

#[test]
fn input_errors() {
    let sup = NormSpec::sup(3).unwrap();
    assert!(matches!(sup.eval(&[1.0]), Err(Error::DimensionMismatch { expected: 3, got: 1 })));
    assert!(matches!(sup.subgradient(&[0.0; 3]), Err(Error::UndefinedGradient)));
    assert!(NormSpec::lp(3, 0.5).is_err());
    assert!(NormSpec::weighted_sup(vec![1.0, 0.0]).is_err());
    assert!(NormSpec::linear_image(vec![1.0, 1.0, 1.0, 1.0], NormSpec::sup(2).unwrap(), false).is_err());
    assert!(FunctionalSet::new(vec![vec![0.0, 0.0]], true).is_err());
}

#[test]
fn unconditional_families_give_one() {
    let cfg = McConfig::new(2000, 3);
    assert_eq!(unc_constant_lower(&NormSpec::lp(5, 3.0).unwrap(), &cfg).unwrap(), 1.0);
    assert_eq!(unc_constant_lower(&NormSpec::weighted_sup(vec![1.0, 3.0, 0.2]).unwrap(), &cfg).unwrap(), 1.0);
}

/// Rotated ℓ1 ball: compare against a dense grid over the direction of α.
#[test]
fn rotated_l1_matches_grid_search() {
    let th = std::f64::consts::PI / 8.0;
    let (c, s) = (th.cos(), th.sin());
    // Vertices of the rotated cross-polytope's dual: rotated (±1, ±1).
    let fs = FunctionalSet::new(vec![vec![c - s, s + c], vec![c + s, s - c]], true).unwrap();
    let spec = NormSpec::polytope(fs.clone()).unwrap();
    let est = unc_constant_lower(&spec, &McConfig::new(200_000, 11)).unwrap();
    let grid = (0..200_000)
        .map(|k| {
            let phi = k as f64 / 200_000.0 * std::f64::consts::TAU;
            let a = [phi.cos(), phi.sin()];
            let top = fs.iter().map(|v| (v[0] * a[0]).abs() + (v[1] * a[1]).abs()).fold(0.0, f64::max);
            top / spec.value(&a)
        })
        .fold(0.0, f64::max);
    assert!(est > 1.0);
    assert!((est / grid - 1.0).abs() < 0.02, "{est} vs {grid}");
}

#[test]
fn lift_map_blocks() {
    let id = lift_map(3, &[0, 1], &[1.0, 0.0, 0.0, 1.0], 1.0).unwrap();
    let inner = NormSpec::lp(3, 2.0).unwrap();
    let t = id.apply(inner.clone()).unwrap();
    let x = [0.3, -1.2, 2.0];
    assert_eq!(t.eval(&x).unwrap(), inner.eval(&x).unwrap());

    let m = lift_map(4, &[0, 1], &[2.0, 0.0, 0.0, 3.0], 0.1).unwrap();
    let t = m.apply(NormSpec::lp(4, 2.0).unwrap()).unwrap();
    assert!((t.eval(&[0.0, 0.0, 1.0, 0.0]).unwrap() - 0.1).abs() < 1e-15);
    assert!((t.eval(&[1.0, 1.0, 0.0, 0.0]).unwrap() - 13f64.sqrt()).abs() < 1e-12);

    // a → 0: only the projected component survives.
    let g = [0.7, -0.4, 1.3, 2.1];
    let proj = NormSpec::lp(4, 2.0).unwrap().eval(&[1.4, -1.2, 0.0, 0.0]).unwrap();
    let small = lift_map(4, &[0, 1], &[2.0, 0.0, 0.0, 3.0], 1e-9).unwrap().apply(NormSpec::lp(4, 2.0).unwrap()).unwrap();
    assert!((small.eval(&g).unwrap() - proj).abs() < 1e-8);
    assert!(lift_map(4, &[0, 1], &[2.0, 0.0, 0.0, 3.0], 0.0).is_err());
}

#[test]
fn json_round_trip() {
    for f in families(4) {
        let s = serde_json::to_string(&f).unwrap();
        let back: NormSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }
    let bad = r#"{"family":"sup","dim":3,"bogus":1}"#;
    assert!(serde_json::from_str::<NormSpec>(bad).is_err());
}
