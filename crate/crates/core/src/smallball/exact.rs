//! Closed-form and near-exact small-ball probabilities, all on log scale.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::gstats::{exact_profile, ln_weighted_sup_cdf};
use crate::norms::{Kind, NormSpec};
use crate::special::{self, bisect, ln_erfc, ln_norm_sf, mills_inv};

/// ln P{f(G) ≤ t}, or `None` for families without an exact oracle.
pub fn ln_exact_cdf(spec: &NormSpec, t: f64) -> Option<f64> {
    if t <= 0.0 {
        return Some(f64::NEG_INFINITY);
    }
    let n = spec.dim();
    match spec.kind() {
        Kind::Sup => Some(n as f64 * special::ln_folded_cdf(t)),
        Kind::WeightedSup { w } => Some(ln_weighted_sup_cdf(w, t)),
        Kind::Lp { p } if *p == 2.0 => Some(special::ln_gamma_p(n as f64 / 2.0, t * t / 2.0)),
        Kind::Lp { p } if *p == 1.0 => Some(ln_l1_cdf(n, t)),
        _ => None,
    }
}

/// P{f(G) ≤ t}.
pub fn exact_smallball(spec: &NormSpec, t: f64) -> Option<f64> {
    ln_exact_cdf(spec, t).map(f64::exp)
}

/// ln P{f(G) ≤ δ·E f(G)} using the exact mean.
pub fn ln_exact_smallball_delta(spec: &NormSpec, delta: f64) -> Option<f64> {
    let mean = exact_profile(spec)?.mean?;
    ln_exact_cdf(spec, delta * mean)
}

/// P{‖G‖_∞ < (1 − ε) E‖G‖_∞} in R^n.
pub fn lower_smalldev_exact_linf(n: usize, eps: f64) -> f64 {
    ln_lower_smalldev_exact_linf(n, eps).exp()
}

pub fn ln_lower_smalldev_exact_linf(n: usize, eps: f64) -> f64 {
    let spec = NormSpec::sup(n).expect("positive dimension");
    let mean = exact_profile(&spec).and_then(|p| p.mean).expect("sup mean");
    n as f64 * special::ln_folded_cdf((1.0 - eps) * mean)
}

/// Quantile of ‖G‖₁ in R^n.
pub fn l1_quantile(n: usize, p: f64) -> Option<f64> {
    if !(0.0 < p && p < 1.0) {
        return None;
    }
    let nf = n as f64;
    let hi = nf + 12.0 * nf.sqrt() + 12.0;
    let target = p.ln();
    Some(bisect(|t| ln_l1_cdf(n, t) - target, 0.0, hi, 1e-11 * hi))
}

/// ln P{|g_1| + … + |g_n| ≤ t}.
///
/// Exponential tilting with e^{−θx} turns |g| into a N(−θ, 1) law truncated
/// to [0, ∞), chosen so the tilted sum has mean t. The tilted sum is then
/// computed on a lattice by FFT powering, with cell masses from exact normal
/// tail differences. Two lattice widths are combined by Richardson
/// extrapolation, which removes the O(h²) midpoint error.
pub fn ln_l1_cdf(n: usize, t: f64) -> f64 {
    if t <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if n == 1 {
        return special::ln_folded_cdf(t);
    }
    let nf = n as f64;
    let target = t / nf;
    let theta = if target >= (2.0 / std::f64::consts::PI).sqrt() {
        0.0
    } else {
        bisect(|th| truncated_mean(th) - target, 0.0, 1e4, 1e-14)
    };
    // ln E e^{−θ|g|} = θ²/2 + ln erfc(θ/√2)
    let ln_m = theta * theta / 2.0 + ln_erfc(theta * std::f64::consts::FRAC_1_SQRT_2);
    let sd = truncated_sd(theta);
    let (h1, s1) = tilted_sum(n, t, theta, sd / 48.0);
    let (h2, s2) = tilted_sum(n, t, theta, sd / 96.0);
    let r2 = (h1 / h2).powi(2);
    let s = (r2 * s2 - s1) / (r2 - 1.0);
    let s = if s > 0.0 { s } else { s2 };
    nf * ln_m + theta * t + s.ln()
}

fn truncated_mean(theta: f64) -> f64 {
    -theta + mills_inv(theta)
}

fn truncated_sd(theta: f64) -> f64 {
    if theta > 8.0 {
        // exponential-like regime, var ≈ 1/θ² − 5/θ⁴
        (1.0 / (theta * theta) - 5.0 / theta.powi(4)).sqrt()
    } else {
        let l = mills_inv(theta);
        (1.0 + theta * l - l * l).max(1e-300).sqrt()
    }
}

/// Returns (h, Σ_{s ≤ t} e^{−θ(t−s)} dQ(s)) on a lattice whose cell
/// boundary falls exactly at t.
fn tilted_sum(n: usize, t: f64, theta: f64, h_target: f64) -> (f64, f64) {
    let half = (n as f64 + 1.0) / 2.0;
    // Sum of n cell midpoints sits at (K + n/2)h; its cell ends at (K + (n+1)/2)h.
    let kstar = ((t / h_target - half).round()).max(0.0) as usize;
    let h = t / (kstar as f64 + half);
    let len = kstar + 1;
    let ln_tail0 = ln_norm_sf(theta);
    let mut cell = Vec::with_capacity(len);
    let mut prev: f64 = 0.0; // P(X ≥ kh) relative to P(X ≥ 0), on log scale
    for k in 0..len {
        let next = ln_norm_sf(theta + (k + 1) as f64 * h) - ln_tail0;
        // P(kh ≤ X < (k+1)h) = e^{prev} (1 − e^{next − prev})
        cell.push(prev.exp() * (-(next - prev).exp_m1()));
        prev = next;
    }
    let dist = power(&cell, n, len);
    let x = theta * h / 2.0;
    let smear = if x > 1e-8 { x.sinh() / x } else { 1.0 };
    let mut acc = 0.0;
    for (k, p) in dist.iter().enumerate() {
        let mid = (k as f64 + n as f64 / 2.0) * h;
        acc += p.max(0.0) * (-theta * (t - mid)).exp();
    }
    (h, acc * smear)
}

fn power(base: &[f64], mut e: usize, len: usize) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let mut result: Option<Vec<f64>> = None;
    let mut b = base.to_vec();
    loop {
        if e & 1 == 1 {
            result = Some(match result {
                None => b.clone(),
                Some(r) => convolve(&mut planner, &r, &b, len),
            });
        }
        e >>= 1;
        if e == 0 {
            break;
        }
        b = convolve(&mut planner, &b, &b, len);
    }
    result.unwrap_or_else(|| {
        let mut d = vec![0.0; len];
        d[0] = 1.0;
        d
    })
}

fn convolve(planner: &mut FftPlanner<f64>, a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let size = (a.len() + b.len()).next_power_of_two();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let load = |v: &[f64]| {
        let mut buf: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
        buf.resize(size, Complex::new(0.0, 0.0));
        buf
    };
    let mut fa = load(a);
    let mut fb = load(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa.iter().take(len).map(|c| c.re * scale).collect()
}
