//! Global parameters of a norm under the standard Gaussian measure, by Monte
//! Carlo and, for the product families, by closed forms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{self, EstimateCI, McConfig};
use crate::norms::{Functional, Kind, NormSpec};
use crate::special::{self, bisect, chi_mean, integrate, norm_pdf, norm_ppf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Exact,
    MonteCarlo,
    /// Largest value seen on the sample; a lower bound.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub value: f64,
    pub half_width: f64,
    pub source: Source,
}

impl Stat {
    fn mc(e: EstimateCI) -> Self {
        Stat { value: e.value, half_width: e.half_width, source: Source::MonteCarlo }
    }

    pub fn exact(value: f64) -> Self {
        Stat { value, half_width: 0.0, source: Source::Exact }
    }

    pub fn ci(&self) -> EstimateCI {
        EstimateCI { value: self.value, half_width: self.half_width, n_eff: 0 }
    }

    /// CI of the reciprocal by first-order error propagation.
    pub fn recip(&self) -> EstimateCI {
        let v = 1.0 / self.value;
        EstimateCI { value: v, half_width: v * self.half_width / self.value.abs(), n_eff: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationProfile {
    pub dim: usize,
    pub samples: usize,
    pub mean: Stat,
    pub variance: Stat,
    pub median: Stat,
    pub lip: Stat,
    pub grad_l2_sq: Stat,
    pub a_vec: Vec<Stat>,
    pub k: Stat,
    pub beta: Stat,
    pub beta_tilde: Stat,
    pub s: Stat,
    pub r: Stat,
    pub l_ratio: Stat,
    /// 2/s − log R; nonnegative by the Talagrand-type variance bound.
    pub s_log_r_gap: Stat,
}

impl ConcentrationProfile {
    pub fn sum_a_sq(&self) -> f64 {
        self.a_vec.iter().map(|a| a.value * a.value).sum()
    }

    /// Variance ≤ E‖∇f‖² within `k` combined half-widths.
    pub fn poincare_holds(&self, k: f64) -> bool {
        self.variance.ci().le(&self.grad_l2_sq.ci(), k)
    }

    /// k ≤ 1/β̃ ≤ 1/β within `k` combined half-widths.
    pub fn chain_holds(&self, kk: f64) -> bool {
        let ibt = self.beta_tilde.recip();
        let ib = self.beta.recip();
        self.k.ci().le(&ibt, kk) && ibt.le(&ib, kk)
    }

    /// Flat (name, value) pairs, half-widths as `<name>_hw`.
    pub fn flat(&self) -> Vec<(String, f64)> {
        let mut out = vec![("dim".to_string(), self.dim as f64), ("samples".into(), self.samples as f64)];
        let named = [
            ("mean", &self.mean),
            ("variance", &self.variance),
            ("median", &self.median),
            ("lip", &self.lip),
            ("grad_l2_sq", &self.grad_l2_sq),
            ("k", &self.k),
            ("beta", &self.beta),
            ("beta_tilde", &self.beta_tilde),
            ("s", &self.s),
            ("R", &self.r),
            ("L", &self.l_ratio),
            ("s_log_r_gap", &self.s_log_r_gap),
        ];
        for (name, s) in named {
            out.push((name.to_string(), s.value));
            out.push((format!("{name}_hw"), s.half_width));
        }
        out
    }
}

pub fn estimate_profile(spec: &NormSpec, cfg: &McConfig) -> Result<ConcentrationProfile> {
    estimate_profile_of(spec, cfg)
}

/// Profile of any even functional, all fields from one common sample.
pub fn estimate_profile_of<F: Functional + ?Sized>(f: &F, cfg: &McConfig) -> Result<ConcentrationProfile> {
    let n = f.dim();
    let k = 4 + n;
    let mut stats = mc::gaussian_stats(cfg, 0x01, n, k, Some(0), true, |x, out| {
        let (head, a) = out.split_at_mut(4);
        let v = f.value_grad(x, a);
        let g2: f64 = a.iter().map(|g| g * g).sum();
        a.iter_mut().for_each(|g| *g = g.abs());
        head[0] = v;
        head[1] = v * v;
        head[2] = g2;
        head[3] = g2.sqrt();
    })?;
    let m = stats.means();
    if m[0] <= 0.0 || !m[0].is_finite() {
        return Err(Error::Degenerate("functional vanishes on every sample".into()));
    }
    let n_tot = stats.total as f64;
    let bessel = n_tot / (n_tot - 1.0);
    let var = move |m: &[f64]| (m[1] - m[0] * m[0]) * bessel;
    let sa2 = move |m: &[f64]| m[4..].iter().map(|a| a * a).sum::<f64>();

    let lip = match f.lipschitz() {
        Some(l) => Stat::exact(l),
        None => Stat { value: sampled_lip(f, cfg)?, half_width: 0.0, source: Source::Sampled },
    };
    let lip2 = lip.value * lip.value;

    let mean = Stat::mc(stats.estimate(0));
    let variance = Stat::mc(stats.derived(var));
    let grad_l2_sq = Stat::mc(stats.estimate(2));
    let a_vec: Vec<Stat> = (0..n).map(|i| Stat::mc(stats.estimate(4 + i))).collect();
    let kk = Stat::mc(stats.derived(|m| m[0] * m[0] / lip2));
    let beta = Stat::mc(stats.derived(|m| var(m) / (m[0] * m[0])));
    let beta_tilde = Stat::mc(stats.derived(|m| m[2] / (m[0] * m[0])));
    let s = Stat::mc(stats.derived(|m| var(m) / m[2]));
    let r = Stat::mc(stats.derived(|m| m[2] / sa2(m)));
    let l_ratio = Stat::mc(stats.derived(|m| sa2(m) / (m[0] * m[0])));
    let gap = Stat::mc(stats.derived(|m| 2.0 * m[2] / var(m) - (m[2] / sa2(m)).ln()));
    let n_eff = stats.n_indep;
    let median = Stat::mc(mc::median_ci(&mut stats.kept, n_eff));

    // Identities among the stored point values hold to rounding.
    let mut p = ConcentrationProfile {
        dim: n,
        samples: cfg.samples,
        mean,
        variance,
        median,
        lip,
        grad_l2_sq,
        a_vec,
        k: kk,
        beta,
        beta_tilde,
        s,
        r,
        l_ratio,
        s_log_r_gap: gap,
    };
    let (mu, v, g, sa) = (p.mean.value, p.variance.value, p.grad_l2_sq.value, p.sum_a_sq());
    p.k.value = mu * mu / lip2;
    p.beta.value = v / (mu * mu);
    p.beta_tilde.value = g / (mu * mu);
    p.s.value = v / g;
    p.r.value = g / sa;
    p.l_ratio.value = sa / (mu * mu);
    p.s_log_r_gap.value = 2.0 / p.s.value - p.r.value.ln();
    Ok(p)
}

fn sampled_lip<F: Functional + ?Sized>(f: &F, cfg: &McConfig) -> Result<f64> {
    cfg.validate()?;
    let n = f.dim();
    let maxes = mc::par_map(cfg.streams, cfg.seed, 0x02, cfg.n_batches(), |b, rng| {
        let len = (cfg.samples - b * cfg.batch).min(cfg.batch);
        let mut x = vec![0.0; n];
        let mut g = vec![0.0; n];
        let mut best: f64 = 0.0;
        for _ in 0..len {
            mc::fill_gaussian(rng, &mut x);
            f.gradient(&x, &mut g);
            best = best.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        best
    });
    Ok(maxes.into_iter().fold(0.0, f64::max))
}

/// Closed-form quantities; `None` where no closed form is implemented.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExactProfile {
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub median: Option<f64>,
    pub lip: Option<f64>,
    pub grad_l2_sq: Option<f64>,
    pub a_vec: Option<Vec<f64>>,
}

/// Closed forms for ℓ1, ℓ2, ℓ∞ and weighted ℓ∞; `None` for other families.
pub fn exact_profile(spec: &NormSpec) -> Option<ExactProfile> {
    let n = spec.dim();
    let nf = n as f64;
    match spec.kind() {
        Kind::Lp { p } if *p == 2.0 => {
            let mean = chi_mean(nf);
            Some(ExactProfile {
                mean: Some(mean),
                variance: Some(nf - mean * mean),
                median: Some(chi_median(nf)),
                lip: Some(1.0),
                grad_l2_sq: Some(1.0),
                a_vec: Some(vec![(2.0 / std::f64::consts::PI).sqrt() / mean; n]),
            })
        }
        Kind::Lp { p } if *p == 1.0 => {
            let c = (2.0 / std::f64::consts::PI).sqrt();
            Some(ExactProfile {
                mean: Some(nf * c),
                variance: Some(nf * (1.0 - c * c)),
                median: crate::smallball::exact::l1_quantile(n, 0.5),
                lip: Some(nf.sqrt()),
                grad_l2_sq: Some(nf),
                a_vec: Some(vec![1.0; n]),
            })
        }
        Kind::Sup => Some(weighted_sup_profile(&vec![1.0; n])),
        Kind::WeightedSup { w } => Some(weighted_sup_profile(w)),
        _ => None,
    }
}

/// A fully exact profile, when every closed form is available.
pub fn exact_concentration_profile(spec: &NormSpec) -> Option<ConcentrationProfile> {
    let e = exact_profile(spec)?;
    let (mu, v, med, lip, g) = (e.mean?, e.variance?, e.median?, e.lip?, e.grad_l2_sq?);
    let a = e.a_vec?;
    let sa: f64 = a.iter().map(|x| x * x).sum();
    let s = v / g;
    let r = g / sa;
    Some(ConcentrationProfile {
        dim: spec.dim(),
        samples: 0,
        mean: Stat::exact(mu),
        variance: Stat::exact(v),
        median: Stat::exact(med),
        lip: Stat::exact(lip),
        grad_l2_sq: Stat::exact(g),
        a_vec: a.into_iter().map(Stat::exact).collect(),
        k: Stat::exact(mu * mu / (lip * lip)),
        beta: Stat::exact(v / (mu * mu)),
        beta_tilde: Stat::exact(g / (mu * mu)),
        s: Stat::exact(s),
        r: Stat::exact(r),
        l_ratio: Stat::exact(sa / (mu * mu)),
        s_log_r_gap: Stat::exact(2.0 / s - r.ln()),
    })
}

fn chi_median(k: f64) -> f64 {
    // P(k/2, r²/2) = 1/2
    let hi = k + 10.0 * k.sqrt() + 10.0;
    let r2 = bisect(|x| special::gamma_p(k / 2.0, x / 2.0) - 0.5, 0.0, hi, 1e-13 * hi);
    r2.sqrt()
}

/// ln P(max_i w_i|g_i| ≤ t).
pub fn ln_weighted_sup_cdf(w: &[f64], t: f64) -> f64 {
    w.iter().map(|wi| special::ln_folded_cdf(t / wi)).sum()
}

fn weighted_sup_profile(w: &[f64]) -> ExactProfile {
    let wmax = w.iter().copied().fold(0.0, f64::max);
    let nf = w.len() as f64;
    let top = wmax * ((2.0 * nf.ln()).max(1.0).sqrt() + 9.0);
    let panels = 48;
    let uniform = w.iter().all(|&v| v == w[0]);
    // Equal weights collapse the product to a power.
    let ln_cdf = |t: f64| if uniform { nf * special::ln_folded_cdf(t / w[0]) } else { ln_weighted_sup_cdf(w, t) };
    let tail = |t: f64| -(ln_cdf(t).exp_m1());
    let mean = integrate(tail, 0.0, top, panels, 1e-13);
    let second = integrate(|t| 2.0 * t * tail(t), 0.0, top, panels, 1e-12);
    let median = if uniform {
        // (2Φ(t/w) − 1)^n = 1/2
        w[0] * norm_ppf(0.5 * (1.0 + 0.5f64.powf(1.0 / nf)))
    } else {
        bisect(|t| ln_weighted_sup_cdf(w, t) - 0.5f64.ln(), 0.0, top, 1e-14 * top)
    };
    // P(argmax = i) = ∫ (2/w_i) φ(t/w_i) Π_{j≠i} P(w_j|g_j| ≤ t) dt
    let p_arg: Vec<f64> = if uniform {
        vec![1.0 / nf; w.len()]
    } else {
        (0..w.len())
            .map(|i| {
                integrate(
                    |t| {
                        if t <= 0.0 {
                            return 0.0;
                        }
                        let others: f64 = w
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != i)
                            .map(|(_, wj)| special::ln_folded_cdf(t / wj))
                            .sum();
                        2.0 / w[i] * norm_pdf(t / w[i]) * others.exp()
                    },
                    0.0,
                    top,
                    panels,
                    1e-13,
                )
            })
            .collect()
    };
    ExactProfile {
        mean: Some(mean),
        variance: Some(second - mean * mean),
        median: Some(median),
        lip: Some(wmax),
        grad_l2_sq: Some(w.iter().zip(&p_arg).map(|(w, p)| w * w * p).sum()),
        a_vec: Some(w.iter().zip(&p_arg).map(|(w, p)| w * p).collect()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KwapienReport {
    /// mean − median.
    pub gap: EstimateCI,
    pub pass: bool,
}

/// Checks that the mean is not below the median, up to 3 combined half-widths.
pub fn kwapien_check(spec: &NormSpec, cfg: &McConfig) -> Result<KwapienReport> {
    kwapien_from(&estimate_profile(spec, cfg)?)
}

pub fn kwapien_from(p: &ConcentrationProfile) -> Result<KwapienReport> {
    let hw = p.mean.half_width + p.median.half_width;
    let gap = EstimateCI { value: p.mean.value - p.median.value, half_width: hw, n_eff: 0 };
    Ok(KwapienReport { gap, pass: gap.value >= -3.0 * hw })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
    Both,
}

/// Gaussian concentration for Lipschitz functions at deviation ε·E f:
/// exp(−ε²k/2) per side.
pub fn classic_bound(profile: &ConcentrationProfile, eps: f64, side: Side) -> f64 {
    classic_bound_k(profile.k.value, eps, side)
}

pub fn classic_bound_k(k: f64, eps: f64, side: Side) -> f64 {
    let one = (-eps * eps * k / 2.0).exp();
    match side {
        Side::Lower | Side::Upper => one,
        Side::Both => (2.0 * one).min(1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, seed: u64) -> McConfig {
        McConfig::new(n, seed)
    }

    #[test]
    fn l2_means_match_chi() {
        let p = estimate_profile(&NormSpec::lp(1, 2.0).unwrap(), &cfg(200_000, 1)).unwrap();
        assert!((p.mean.value - 0.797_884_560_802_865_4).abs() < 1.5 * p.mean.half_width.max(1e-3));
        let p = estimate_profile(&NormSpec::lp(2, 2.0).unwrap(), &cfg(200_000, 2)).unwrap();
        assert!((p.mean.value - 1.253_314_137_315_500_3).abs() < 1.5 * p.mean.half_width.max(1e-3));
    }

    #[test]
    fn l1_mean_and_variance() {
        let p = estimate_profile(&NormSpec::lp(4, 1.0).unwrap(), &cfg(400_000, 3)).unwrap();
        assert!(p.mean.ci().contains(3.191_538_243_211_461) || (p.mean.value - 3.19154).abs() < 2.0 * p.mean.half_width);
        assert!((p.variance.value - 1.453_520_740_620_643).abs() < 2.0 * p.variance.half_width);
        assert_eq!(p.lip.source, Source::Exact);
        assert_eq!(p.lip.value, 2.0);
    }

    #[test]
    fn identities_are_algebraic() {
        let p = estimate_profile(&NormSpec::sup(16).unwrap(), &cfg(20_000, 4)).unwrap();
        let rl = p.r.value * p.l_ratio.value;
        assert!((rl - p.beta_tilde.value).abs() <= 1e-12 * p.beta_tilde.value);
        assert!((p.k.value - p.mean.value.powi(2) / p.lip.value.powi(2)).abs() < 1e-12 * p.k.value);
        assert!(p.poincare_holds(3.0));
        assert!(p.chain_holds(3.0));
    }

    #[test]
    fn exact_oracles() {
        let e = exact_profile(&NormSpec::sup(1).unwrap()).unwrap();
        assert!((e.mean.unwrap() - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!((e.variance.unwrap() - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-11);
        let e = exact_profile(&NormSpec::lp(3, 2.0).unwrap()).unwrap();
        assert!((e.mean.unwrap() - 1.595_769_121_605_731).abs() < 1e-12);
        let e = exact_profile(&NormSpec::lp(1, 2.0).unwrap()).unwrap();
        assert!((e.median.unwrap() - 0.674_489_750_196_081_7).abs() < 1e-10);
        assert!(exact_profile(&NormSpec::lp(3, 3.0).unwrap()).is_none());
    }

    #[test]
    fn sup_variance_times_log_n_bounded() {
        for j in 6..=12 {
            let n = 1usize << j;
            let e = exact_profile(&NormSpec::sup(n).unwrap()).unwrap();
            let v = e.variance.unwrap() * (n as f64).ln();
            assert!((0.1..=10.0).contains(&v), "n={n}: {v}");
        }
    }

    #[test]
    fn weighted_sup_argmax_weights() {
        let e = exact_profile(&NormSpec::weighted_sup(vec![1.0, 2.0]).unwrap()).unwrap();
        let a = e.a_vec.unwrap();
        assert!(a[1] > a[0]);
        // P(argmax = 2) + P(argmax = 1) = 1
        assert!((a[0] / 1.0 + a[1] / 2.0 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn classic_bound_values() {
        assert_eq!(classic_bound_k(5.0, 0.0, Side::Lower), 1.0);
        let v = classic_bound_k(2.0 / std::f64::consts::PI, 1.0, Side::Lower);
        assert!((v - (-1.0 / std::f64::consts::PI).exp()).abs() < 1e-15);
        assert!((v - 0.7274).abs() < 1e-4);
    }
}
