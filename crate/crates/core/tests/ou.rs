use concentra_core::gstats::exact_concentration_profile;
use concentra_core::mc;
use concentra_core::norms::{Linear, Shifted};
use concentra_core::ou::{beta_decay_bounds, grad_decay_bound, hyper_check, pt_eval, pt_grad, variance_curve, Nested};
use concentra_core::{McConfig, NormSpec};

const GRID: [f64; 7] = [0.0, 0.15, 0.2, 0.25, 0.45, 0.5, 0.55];

#[test]
fn variance_curve_identities() {
    let f = NormSpec::sup(16).unwrap();
    let exact = exact_concentration_profile(&f).unwrap();
    let cfg = McConfig::new(1, 17);
    let vc = variance_curve(&f, &GRID, &cfg, Some(Nested { outer: 40_000, inner: 32 })).unwrap();
    let v0 = vc.v[0];
    assert!(v0.contains(exact.variance.value) || (v0.value - exact.variance.value).abs() <= 1.5 * v0.half_width);
    for (j, &t) in GRID.iter().enumerate() {
        let decay = (-2.0 * t).exp() * v0.value;
        assert!(vc.v[j].value <= decay + 3.0 * (vc.v[j].half_width + v0.half_width), "t = {t}");
        assert!(vc.mean[j].contains(exact.mean.value) || (vc.mean[j].value - exact.mean.value).abs() < 3.0 * vc.mean[j].half_width);
    }
    // Central differences at t = 0.2 and t = 0.5.
    for j in [2usize, 5] {
        assert!(vc.dv_rel_residual[j].abs() <= 0.10, "t = {}: {}", GRID[j], vc.dv_rel_residual[j]);
    }
    // log v convex along the grid.
    for j in 1..GRID.len() - 1 {
        let (a, b, c) = (GRID[j - 1], GRID[j], GRID[j + 1]);
        let lam = (c - b) / (c - a);
        let lv = |k: usize| vc.v[k].value.ln();
        let rel = |k: usize| vc.v[k].half_width / vc.v[k].value;
        let slack = 3.0 * (rel(j - 1) + rel(j) + rel(j + 1));
        assert!(lv(j) <= lam * lv(j - 1) + (1.0 - lam) * lv(j + 1) + slack, "j = {j}");
    }
    // s(t) and ψ(t) non-decreasing within noise.
    for j in 1..GRID.len() {
        assert!(vc.psi[j] + 0.05 >= vc.psi[j - 1]);
        assert!(vc.s_curve[j] + 0.05 >= vc.s_curve[j - 1]);
    }
}

#[test]
fn linear_curve_is_exact_exponential() {
    let a = vec![0.3, -1.2, 0.5];
    let f = Linear(a.clone());
    let vc = variance_curve(&f, &[0.0, 0.3, 1.0], &McConfig::new(1, 3), Some(Nested { outer: 20_000, inner: 16 })).unwrap();
    let a2: f64 = a.iter().map(|x| x * x).sum();
    for (j, &t) in [0.0f64, 0.3, 1.0].iter().enumerate() {
        let want = (-2.0 * t).exp() * a2;
        assert!((vc.v[j].value - want).abs() <= 3.0 * vc.v[j].half_width + 1e-9, "t = {t}");
    }
}

#[test]
fn hypercontractivity_for_centered_sup() {
    let f = NormSpec::sup(64).unwrap();
    let mean = exact_concentration_profile(&f).unwrap().mean.value;
    let h = Shifted { inner: &f, shift: mean };
    for t in [0.1, 0.5, 1.0] {
        let r = hyper_check(&h, t, &McConfig::new(40_000, 2), Some(Nested { outer: 8_000, inner: 32 })).unwrap();
        assert!(r.pass, "t = {t}: {:?}", r);
        assert!(r.pass_interpolated, "t = {t}: {:?}", r);
    }
    let lin = Linear(vec![0.6, 0.8]);
    let r = hyper_check(&lin, 0.4, &McConfig::new(40_000, 2), Some(Nested { outer: 8_000, inner: 32 })).unwrap();
    assert!((r.lhs.value - (-0.4f64).exp()).abs() <= 3.0 * r.lhs.half_width + 1e-3);
    assert!(r.pass_interpolated);
}

#[test]
fn semigroup_pointwise_properties() {
    let f = NormSpec::lp(4, 3.0).unwrap();
    let cfg = McConfig::new(40_000, 6);
    let far = pt_eval(&f, 10.0, &[3.0, -1.0, 0.5, 2.0], &cfg).unwrap();
    let mean = concentra_core::gstats::estimate_profile(&f, &McConfig::new(200_000, 1)).unwrap().mean;
    assert!((far.value - mean.value).abs() <= 3.0 * (far.half_width + mean.half_width));

    let mut rng = mc::substream(4, 0, 0);
    for _ in 0..20 {
        let x = mc::gaussian_vec(&mut rng, 4);
        let y = mc::gaussian_vec(&mut rng, 4);
        let lam = 0.3;
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        let (pz, px, py) = (pt_eval(&f, 0.3, &z, &cfg).unwrap(), pt_eval(&f, 0.3, &x, &cfg).unwrap(), pt_eval(&f, 0.3, &y, &cfg).unwrap());
        let hw = pz.half_width + px.half_width + py.half_width;
        assert!(pz.value <= lam * px.value + (1.0 - lam) * py.value + 3.0 * hw);
        assert!(px.value >= 0.0);
    }
}

#[test]
fn smoothed_sup_gradient_concentrates() {
    let f = NormSpec::sup(8).unwrap();
    let mut x = vec![0.0; 8];
    x[0] = 5.0;
    let t = 0.05;
    let g = pt_grad(&f, t, &x, &McConfig::new(20_000, 1)).unwrap();
    assert!((g[0].value - (-t).exp()).abs() <= 3.0 * g[0].half_width + 1e-9);
    for gi in &g[1..] {
        assert!(gi.value.abs() <= 3.0 * gi.half_width + 1e-9);
    }
    let norm: f64 = g.iter().map(|e| e.value * e.value).sum::<f64>().sqrt();
    assert!(norm <= (-t).exp() + 1e-9);
}

#[test]
fn gradient_and_beta_decay_floors() {
    let f = NormSpec::sup(64).unwrap();
    let p = exact_concentration_profile(&f).unwrap();
    let t = 0.5;
    let vc = variance_curve(&f, &[0.0, t], &McConfig::new(1, 9), Some(Nested { outer: 8_000, inner: 64 })).unwrap();
    let g = vc.grad_sq[1];
    assert!(g.value <= grad_decay_bound(p.grad_l2_sq.value, p.r.value, t) + 3.0 * g.half_width);
    // 1/β̃(P_t f) from the nested estimates.
    let m = vc.mean[1].value;
    let inv_bt = m * m / g.value;
    let floor = beta_decay_bounds(&p, t).unwrap().beta_tilde_floor;
    let rel = g.half_width / g.value + 2.0 * vc.mean[1].half_width / m;
    assert!(inv_bt * (1.0 + 3.0 * rel) >= floor, "{inv_bt} vs {floor}");
    // With β̃ = L the interpolation collapses to e^{2t}/β̃.
    let eq = concentra_core::ou::beta_floors(0.5, 0.1, 0.5, 0.7).unwrap();
    assert!((eq.beta_tilde_floor - 2.0 * 1.4f64.exp()).abs() < 1e-9);
}
