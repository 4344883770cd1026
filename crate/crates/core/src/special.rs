//! Scalar special functions and quadrature used by the closed-form oracles.
//!
//! Error functions come from `libm` (fdlibm ports, about 1 ulp); gamma
//! functions from `statrs`; quadrature from `quadrature`. The log-scale
//! regularized lower incomplete gamma stays accurate deep in the left tail
//! where the plain value underflows.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use statrs::function::gamma;

/// Standard normal CDF Φ.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function 1 − Φ.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal density φ.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of Φ.
pub fn norm_ppf(p: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "probability out of range: {p}");
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let mut x = -SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    // Newton polish on the accurate CDF, working on the smaller tail.
    for _ in 0..2 {
        let err = if x < 0.0 { norm_cdf(x) - p } else { (1.0 - p) - norm_sf(x) };
        let dens = norm_pdf(x);
        if dens > 0.0 {
            x -= err / dens;
        }
    }
    x
}

/// P(|g| ≤ t) = 2Φ(t) − 1 for a standard Gaussian g.
pub fn folded_cdf(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        libm::erf(t * FRAC_1_SQRT_2)
    }
}

/// ln P(|g| ≤ t), accurate both for tiny t and in the upper tail.
pub fn ln_folded_cdf(t: f64) -> f64 {
    if t <= 0.0 {
        f64::NEG_INFINITY
    } else if t < 1.0 {
        libm::erf(t * FRAC_1_SQRT_2).ln()
    } else {
        (-libm::erfc(t * FRAC_1_SQRT_2)).ln_1p()
    }
}

/// ln erfc(z), finite far into the right tail where erfc underflows.
pub fn ln_erfc(z: f64) -> f64 {
    if z < 20.0 {
        return libm::erfc(z).ln();
    }
    // Continued fraction erfc(z) = e^{-z²}/√π · 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + …))))
    let mut cf = z;
    for k in (1..60).rev() {
        cf = z + 0.5 * k as f64 / cf;
    }
    -z * z - 0.5 * PI.ln() - cf.ln()
}

/// ln(1 − Φ(x)).
pub fn ln_norm_sf(x: f64) -> f64 {
    if x < -5.0 {
        (-norm_cdf(x)).ln_1p()
    } else {
        ln_erfc(x * FRAC_1_SQRT_2) - std::f64::consts::LN_2
    }
}

/// Inverse Mills ratio φ(x)/(1 − Φ(x)).
pub fn mills_inv(x: f64) -> f64 {
    (-0.5 * x * x - 0.5 * (2.0 * PI).ln() - ln_norm_sf(x)).exp()
}

pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma::gamma_lr(a, x)
    }
}

/// ln P(a, x). Uses the power series in the region x < a + 1 where P can be
/// astronomically small, and the library value elsewhere.
pub fn ln_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x >= a + 1.0 {
        return gamma::gamma_lr(a, x).ln();
    }
    // P(a,x) = x^a e^{-x} / Γ(a+1) · Σ_k x^k / ((a+1)…(a+k))
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= x / (a + k);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
        k += 1.0;
        if k > 1e6 {
            break;
        }
    }
    a * x.ln() - x - gamma::ln_gamma(a + 1.0) + sum.ln()
}

/// Mean of the chi distribution with `k` degrees of freedom, E‖G‖₂ in R^k.
pub fn chi_mean(k: f64) -> f64 {
    SQRT_2 * (gamma::ln_gamma(0.5 * (k + 1.0)) - gamma::ln_gamma(0.5 * k)).exp()
}

/// Integral of an analytic integrand over [a, b], split into `panels`
/// equal pieces so sharp transitions stay resolved.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, tol: f64) -> f64 {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let lo = a + h * k as f64;
            quadrature::double_exponential::integrate(&f, lo, lo + h, tol / panels as f64).integral
        })
        .sum()
}

/// Bisection root of a monotone function on [lo, hi].
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < tol {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folded_cdf_at_one() {
        // erf(1/√2)
        assert!((folded_cdf(1.0) - 0.682_689_492_137_085_9).abs() < 1e-14);
        assert!((ln_folded_cdf(1.0) - 0.682_689_492_137_085_9_f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn ppf_inverts_cdf() {
        for &p in &[1e-10, 0.01, 0.25, 0.5, 0.75, 0.999] {
            assert!((norm_cdf(norm_ppf(p)) - p).abs() < 1e-12 * p.max(1e-3));
        }
        assert!((norm_ppf(0.75) - 0.674_489_750_196_081_7).abs() < 1e-12);
    }

    #[test]
    fn ln_gamma_p_matches_library_and_extends_tail() {
        for &(a, x) in &[(2.0, 0.5), (8.0, 3.0), (0.5, 0.2), (20.0, 19.0)] {
            let lib = gamma::gamma_lr(a, x).ln();
            assert!((ln_gamma_p(a, x) - lib).abs() < 1e-10, "{a} {x}");
        }
        // Deep tail: P(a, x) ≈ x^a e^{-x}/Γ(a+1) for x ≪ a.
        let (a, x): (f64, f64) = (2048.0, 10.0);
        let lead = a * x.ln() - x - ln_gamma(a + 1.0);
        assert!((ln_gamma_p(a, x) - lead).abs() < 1e-2);
        assert!(ln_gamma_p(a, x) < -1000.0);
    }

    #[test]
    fn chi_means() {
        assert!((chi_mean(1.0) - (2.0 / PI).sqrt()).abs() < 1e-13);
        assert!((chi_mean(2.0) - (PI / 2.0).sqrt()).abs() < 1e-13);
        assert!((chi_mean(3.0) - 2.0 * (2.0 / PI).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn ln_erfc_continues_past_underflow() {
        for &z in &[0.5, 3.0, 19.0, 20.0, 25.0] {
            assert!((ln_erfc(z) - libm::erfc(z).ln()).abs() < 1e-9 * ln_erfc(z).abs(), "{z}");
        }
        assert!(ln_erfc(40.0).is_finite());
        assert!((mills_inv(0.0) - (2.0 / PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn quadrature_of_gaussian_tail() {
        let v = integrate(norm_pdf, 0.0, 12.0, 12, 1e-13);
        assert!((v - 0.5).abs() < 1e-12);
    }
}
