//! Ornstein–Uhlenbeck semigroup through the Mehler formula
//! P_t f(x) = E f(e^{−t}x + √(1−e^{−2t}) Z).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gstats::ConcentrationProfile;
use crate::mc::{self, EstimateCI, McConfig};
use crate::norms::Functional;

/// e^{−t} and √(1 − e^{−2t}).
pub fn mehler_coeffs(t: f64) -> (f64, f64) {
    let a = (-t).exp();
    (a, (-(-2.0 * t).exp_m1()).sqrt())
}

/// y = e^{−t}x + √(1−e^{−2t}) z.
pub fn mehler_point(x: &[f64], z: &[f64], t: f64, y: &mut [f64]) {
    let (a, b) = mehler_coeffs(t);
    for ((yi, xi), zi) in y.iter_mut().zip(x).zip(z) {
        *yi = a * xi + b * zi;
    }
}

pub fn pt_eval<F: Functional + ?Sized>(f: &F, t: f64, x: &[f64], cfg: &McConfig) -> Result<EstimateCI> {
    check_t(t)?;
    check_dim(f, x)?;
    if t == 0.0 {
        return Ok(EstimateCI::exact(f.value(x)));
    }
    let n = f.dim();
    let stats = mc::gaussian_stats(cfg, 0x10, n, 1, None, false, |z, out| {
        let mut y = vec![0.0; n];
        mehler_point(x, z, t, &mut y);
        out[0] = f.value(&y);
    })?;
    Ok(stats.estimate(0))
}

/// ∇P_t f(x) = e^{−t} P_t(∇f)(x), coordinatewise CIs.
pub fn pt_grad<F: Functional + ?Sized>(f: &F, t: f64, x: &[f64], cfg: &McConfig) -> Result<Vec<EstimateCI>> {
    if !(t > 0.0) {
        return Err(invalid("pt_grad needs t > 0"));
    }
    check_dim(f, x)?;
    let n = f.dim();
    let a = (-t).exp();
    let stats = mc::gaussian_stats(cfg, 0x11, n, n, None, false, |z, out| {
        let mut y = vec![0.0; n];
        mehler_point(x, z, t, &mut y);
        f.gradient(&y, out);
        out.iter_mut().for_each(|g| *g *= a);
    })?;
    Ok((0..n).map(|i| stats.estimate(i)).collect())
}

fn check_t(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("time must be finite and nonnegative, got {t}")))
    }
}

fn check_dim<F: Functional + ?Sized>(f: &F, x: &[f64]) -> Result<()> {
    if x.len() != f.dim() {
        Err(Error::DimensionMismatch { expected: f.dim(), got: x.len() })
    } else {
        Ok(())
    }
}

/// Outer/inner budgets for nested estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nested {
    pub outer: usize,
    pub inner: usize,
}

impl Nested {
    /// N_out = N^{2/3}, N_in = N^{1/3}.
    pub fn from_cfg(cfg: &McConfig) -> Self {
        let n = cfg.samples as f64;
        Nested { outer: n.powf(2.0 / 3.0).round() as usize, inner: n.cbrt().round() as usize }
    }

    fn check(&self) -> Result<()> {
        if self.inner < 16 {
            return Err(Error::Config(format!(
                "inner budget {} is below 16; nested estimates would be dominated by bias",
                self.inner
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceCurve {
    pub t_grid: Vec<f64>,
    pub v: Vec<EstimateCI>,
    pub grad_sq: Vec<EstimateCI>,
    pub mean: Vec<EstimateCI>,
    pub s_curve: Vec<f64>,
    pub psi: Vec<f64>,
    /// Finite-difference v'(t) on the grid.
    pub dv: Vec<f64>,
    /// (v'(t) + 2 E‖∇P_t f‖²) / (2 E‖∇P_t f‖²).
    pub dv_rel_residual: Vec<f64>,
}

/// Per outer point and grid time: ū, ū², inner sample variance of f, and the
/// bias-corrected ‖∇P_t f‖² estimate.
const SLOTS: usize = 4;

/// Nested estimates of Var P_t f(G) and E‖∇P_t f(G)‖² along a time grid.
///
/// Each outer point x draws its own inner normals, shared across the grid.
/// The inner sample variance corrects the bias of the plug-in estimates.
pub fn variance_curve<F: Functional + ?Sized>(
    f: &F,
    t_grid: &[f64],
    cfg: &McConfig,
    nested: Option<Nested>,
) -> Result<VarianceCurve> {
    if t_grid.is_empty() || t_grid[0] != 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("time grid must start at 0 and increase strictly"));
    }
    let nest = nested.unwrap_or_else(|| Nested::from_cfg(cfg));
    nest.check()?;
    let outer_cfg = McConfig { samples: nest.outer, ..*cfg };
    let stats = nested_stats(f, t_grid, &outer_cfg, nest.inner)?;
    let nt = t_grid.len();
    let m = nest.inner as f64;
    let n_out = nest.outer as f64;
    let bessel = n_out / (n_out - 1.0);
    let mut v = Vec::with_capacity(nt);
    let mut grad_sq = Vec::with_capacity(nt);
    let mut mean = Vec::with_capacity(nt);
    for j in 0..nt {
        let o = SLOTS * j;
        v.push(stats.derived(|mm| (mm[o + 1] - mm[o] * mm[o]) * bessel - mm[o + 2] / m));
        grad_sq.push(stats.estimate(o + 3));
        mean.push(stats.estimate(o));
    }
    let s_curve = v.iter().zip(&grad_sq).map(|(v, g)| v.value / g.value).collect();
    let psi = v.iter().map(|vt| (v[0].value / vt.value).ln()).collect();
    let dv: Vec<f64> = (0..nt)
        .map(|j| {
            if nt == 1 {
                return f64::NAN;
            }
            let (a, b) = if j == 0 {
                (0, 1)
            } else if j == nt - 1 {
                (nt - 2, nt - 1)
            } else {
                (j - 1, j + 1)
            };
            (v[b].value - v[a].value) / (t_grid[b] - t_grid[a])
        })
        .collect();
    let dv_rel_residual =
        dv.iter().zip(&grad_sq).map(|(d, g)| (d + 2.0 * g.value) / (2.0 * g.value)).collect();
    Ok(VarianceCurve { t_grid: t_grid.to_vec(), v, grad_sq, mean, s_curve, psi, dv, dv_rel_residual })
}

fn nested_stats<F: Functional + ?Sized>(
    f: &F,
    t_grid: &[f64],
    outer_cfg: &McConfig,
    inner: usize,
) -> Result<mc::BatchStats> {
    let n = f.dim();
    let nt = t_grid.len();
    let m = inner as f64;
    mc::run_batches(outer_cfg, 0x12, SLOTS * nt, |rng, len, sum, _| {
        let mut x = vec![0.0; n];
        let mut zs = vec![0.0; n * inner];
        let mut y = vec![0.0; n];
        let mut g = vec![0.0; n];
        let mut gsum = vec![0.0; n];
        let mut g2sum;
        for _ in 0..len {
            mc::fill_gaussian(rng, &mut x);
            mc::fill_gaussian(rng, &mut zs);
            for (j, &t) in t_grid.iter().enumerate() {
                let o = SLOTS * j;
                if t == 0.0 {
                    let v = f.value_grad(&x, &mut g);
                    sum[o] += v;
                    sum[o + 1] += v * v;
                    sum[o + 3] += g.iter().map(|a| a * a).sum::<f64>();
                    continue;
                }
                let a = (-t).exp();
                let (mut s1, mut s2) = (0.0, 0.0);
                gsum.fill(0.0);
                g2sum = 0.0;
                for z in zs.chunks_exact(n) {
                    mehler_point(&x, z, t, &mut y);
                    let v = f.value_grad(&y, &mut g);
                    s1 += v;
                    s2 += v * v;
                    for (acc, gi) in gsum.iter_mut().zip(&g) {
                        *acc += gi;
                    }
                    g2sum += g.iter().map(|a| a * a).sum::<f64>();
                }
                let u = s1 / m;
                let var_in = (s2 - m * u * u) / (m - 1.0);
                let gbar2: f64 = gsum.iter().map(|s| (s / m).powi(2)).sum();
                let tr_cov = (g2sum - m * gbar2) / (m - 1.0);
                sum[o] += u;
                sum[o + 1] += u * u;
                sum[o + 2] += var_in;
                sum[o + 3] += a * a * (gbar2 - tr_cov / m);
            }
        }
        len
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperReport {
    pub t: f64,
    pub p: f64,
    /// ‖P_t h‖₂.
    pub lhs: EstimateCI,
    /// ‖h‖_p.
    pub rhs: EstimateCI,
    /// ‖h‖₂ (‖h‖₁/‖h‖₂)^{2/p − 1}, an interpolated upper bound for ‖h‖_p.
    pub rhs2: EstimateCI,
    pub pass: bool,
    pub pass_interpolated: bool,
}

/// ‖P_t h‖₂ ≤ ‖h‖_p with p = 1 + e^{−2t}.
pub fn hyper_check<F: Functional + ?Sized>(
    h: &F,
    t: f64,
    cfg: &McConfig,
    nested: Option<Nested>,
) -> Result<HyperReport> {
    check_t(t)?;
    let p = 1.0 + (-2.0 * t).exp();
    let nest = nested.unwrap_or_else(|| Nested::from_cfg(cfg));
    nest.check()?;
    let lhs = if t == 0.0 {
        let s = mc::gaussian_stats(cfg, 0x13, h.dim(), 1, None, false, |x, o| o[0] = h.value(x).powi(2))?;
        s.derived(|m| m[0].max(0.0).sqrt())
    } else {
        let outer_cfg = McConfig { samples: nest.outer, ..*cfg };
        let grid = [0.0, t];
        let st = nested_stats(h, &grid, &outer_cfg, nest.inner)?;
        let m = nest.inner as f64;
        // E (P_t h)² = E ū² − E s²/m
        st.derived(|mm| (mm[SLOTS + 1] - mm[SLOTS + 2] / m).max(0.0).sqrt())
    };
    let norms = mc::gaussian_stats(cfg, 0x14, h.dim(), 3, None, false, |x, o| {
        let v = h.value(x).abs();
        o[0] = v.powf(p);
        o[1] = v;
        o[2] = v * v;
    })?;
    let rhs = norms.derived(|m| m[0].powf(1.0 / p));
    let theta = 2.0 / p - 1.0;
    let rhs2 = norms.derived(|m| {
        let l2 = m[2].sqrt();
        l2 * (m[1] / l2).powf(theta)
    });
    let pass = lhs.le(&rhs, 3.0);
    let pass_interpolated = lhs.le(&rhs2, 3.0);
    Ok(HyperReport { t, p, lhs, rhs, rhs2, pass, pass_interpolated })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaFloors {
    /// Lower bound on 1/β̃(P_t f).
    pub beta_tilde_floor: f64,
    /// Lower bound on 1/β(P_t f).
    pub beta_floor: f64,
}

/// Proven lower bounds on 1/β̃ and 1/β of P_t f in terms of the profile at t = 0.
pub fn beta_decay_bounds(profile: &ConcentrationProfile, t: f64) -> Result<BetaFloors> {
    beta_floors(profile.beta_tilde.value, profile.beta.value, profile.l_ratio.value, t)
}

pub fn beta_floors(beta_tilde: f64, beta: f64, l: f64, t: f64) -> Result<BetaFloors> {
    check_t(t)?;
    if !(l > 0.0) || !(beta > 0.0) || !(beta_tilde > 0.0) {
        return Err(Error::Degenerate("L, β and β̃ must be positive".into()));
    }
    let e2 = (-2.0 * t).exp();
    let e1 = (-t).exp();
    let ln_bt = (2.0 * t) + (2.0 * e2 / (1.0 + e2)) * (1.0 / beta_tilde).ln()
        + ((1.0 - e2) / (1.0 + e2)) * (1.0 / l).ln();
    let ln_b = (2.0 * t - 2.0) + e1 * (1.0 / beta).ln() + (1.0 - e1) * (1.0 / l).ln();
    Ok(BetaFloors { beta_tilde_floor: ln_bt.exp(), beta_floor: ln_b.exp() })
}

/// E‖∇P_t f‖² ≤ e^{−2t} E‖∇f‖² R^{−tanh t}.
pub fn grad_decay_bound(grad_l2_sq: f64, r: f64, t: f64) -> f64 {
    (-2.0 * t).exp() * grad_l2_sq * r.powf(-t.tanh())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::{Linear, NormSpec};

    #[test]
    fn time_zero_is_exact() {
        let f = NormSpec::sup(3).unwrap();
        let x = [1.0, -2.0, 0.5];
        let e = pt_eval(&f, 0.0, &x, &McConfig::new(1000, 1)).unwrap();
        assert_eq!(e.value, 2.0);
        assert_eq!(e.half_width, 0.0);
    }

    #[test]
    fn linear_is_an_eigenfunction() {
        let f = Linear(vec![1.0, 2.0, -1.0]);
        let x = [0.3, 0.1, 2.0];
        let t = 0.7;
        // Antithetic pairs cancel the noise exactly for a linear form.
        let e = pt_eval(&f, t, &x, &McConfig::new(2000, 2)).unwrap();
        let expect = (-t).exp() * (0.3 + 0.2 - 2.0);
        assert!((e.value - expect).abs() < 1e-12);
        let g = pt_grad(&f, t, &x, &McConfig::new(2000, 2)).unwrap();
        assert!((g[1].value - 2.0 * (-t).exp()).abs() < 1e-12);
    }

    #[test]
    fn origin_scales_the_mean() {
        let f = NormSpec::lp(4, 2.0).unwrap();
        let t = 0.3;
        let e = pt_eval(&f, t, &[0.0; 4], &McConfig::new(100_000, 3)).unwrap();
        let expect = mehler_coeffs(t).1 * crate::special::chi_mean(4.0);
        assert!((e.value - expect).abs() < 2.0 * e.half_width);
    }

    #[test]
    fn floors_at_time_zero() {
        let b = beta_floors(0.1, 0.05, 0.3, 0.0).unwrap();
        assert!((b.beta_tilde_floor - 10.0).abs() < 1e-12);
        assert!((b.beta_floor - (-2.0f64).exp() / 0.05).abs() < 1e-12);
        // L = β̃ (R = 1): the exponents sum to one and the floor grows as e^{2t}/β̃
        let b = beta_floors(0.1, 0.05, 0.1, 0.4).unwrap();
        assert!((b.beta_tilde_floor - 0.8f64.exp() * 10.0).abs() < 1e-9);
        assert!(beta_floors(0.1, 0.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn small_inner_budget_is_rejected() {
        let f = NormSpec::sup(2).unwrap();
        let r = variance_curve(&f, &[0.0, 0.5], &McConfig::new(1000, 1), Some(Nested { outer: 256, inner: 8 }));
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
