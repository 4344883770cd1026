//! Adaptive multilevel splitting for rare small-ball events.
//!
//! Levels sit at the ρ-quantile of the current population. Survivors are
//! cloned and moved by preconditioned Crank–Nicolson steps, which are exactly
//! the Mehler kernel x ↦ √(1−β²)x + βξ, restricted to the current sublevel set.
//! Moves are proposed on coordinate blocks: each block move still leaves γ_n
//! invariant, and shrinking the block keeps acceptance usable in high dimension
//! where a full-vector move almost never stays inside a thin box.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Error, Result};
use crate::mc::{self, derive_key, fill_gaussian, substream};
use crate::norms::Functional;
use crate::ou::mehler_coeffs;
use crate::special::norm_ppf;

use super::{SmallBallQuery, SmallBallResult};

/// 97.5% Student quantile with 2 degrees of freedom.
const T2_975: f64 = 4.302_652_729_911_275;
const REPLICATIONS: usize = 3;
/// Below this acceptance the block size is halved for the next level.
const TARGET_ACCEPT: f64 = 0.2;
const MIN_ACCEPT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplittingConfig {
    pub rho: f64,
    pub per_level_samples: usize,
    pub pcn_beta: f64,
    pub mcmc_steps_per_sample: usize,
    pub seed: u64,
    pub threads: usize,
    pub max_levels: usize,
}

impl Default for SplittingConfig {
    fn default() -> Self {
        SplittingConfig {
            rho: 0.1,
            per_level_samples: 1000,
            pcn_beta: 0.5,
            mcmc_steps_per_sample: 10,
            seed: 0,
            threads: 1,
            max_levels: 1000,
        }
    }
}

impl SplittingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.05 && self.rho <= 0.5) {
            return Err(Error::Config("rho must lie in (0.05, 0.5]".into()));
        }
        if self.per_level_samples < 1000 {
            return Err(Error::Config("per_level_samples must be at least 1000".into()));
        }
        if !(self.pcn_beta > 0.0 && self.pcn_beta < 1.0) {
            return Err(Error::Config("pcn_beta must lie in (0, 1)".into()));
        }
        if self.mcmc_steps_per_sample == 0 {
            return Err(Error::Config("mcmc_steps_per_sample must be positive".into()));
        }
        Ok(())
    }
}

pub fn splitting_smallball(query: &SmallBallQuery, scfg: &SplittingConfig) -> Result<SmallBallResult> {
    query.validate()?;
    splitting_of(&query.spec, query.threshold(), scfg)
}

/// Splitting estimate of P{f(G) ≤ threshold} for any functional.
pub fn splitting_of<F: Functional + ?Sized>(f: &F, threshold: f64, scfg: &SplittingConfig) -> Result<SmallBallResult> {
    scfg.validate()?;
    if !(threshold > 0.0) {
        return Err(invalid("threshold must be positive"));
    }
    let reps: Vec<Result<Replication>> = mc::install(scfg.threads, || {
        (0..REPLICATIONS).into_par_iter().map(|r| replicate(f, threshold, scfg, r)).collect()
    });
    let reps: Vec<Replication> = reps.into_iter().collect::<Result<_>>()?;
    let logs: Vec<f64> = reps.iter().map(|r| r.log_p).collect();
    let k = logs.len() as f64;
    // log of the average probability
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_p = top + (logs.iter().map(|l| (l - top).exp()).sum::<f64>() / k).ln();
    let mean_log = logs.iter().sum::<f64>() / k;
    let sd = (logs.iter().map(|l| (l - mean_log).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    let first = reps.into_iter().next().expect("at least one replication");
    Ok(SmallBallResult {
        log_p: log_p.min(0.0),
        log_p_hw: T2_975 * sd / k.sqrt(),
        levels: first.levels,
        accept_rates: first.accept_rates,
        samples: REPLICATIONS * scfg.per_level_samples * (first.n_levels + 1),
    })
}

struct Replication {
    log_p: f64,
    levels: Vec<f64>,
    accept_rates: Vec<f64>,
    n_levels: usize,
}

fn replicate<F: Functional + ?Sized>(f: &F, threshold: f64, scfg: &SplittingConfig, r: usize) -> Result<Replication> {
    let n = f.dim();
    let np = scfg.per_level_samples;
    let seed = derive_key(scfg.seed, 0x31 + r as u64);
    let mut pop: Vec<(Vec<f64>, f64)> = (0..np)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, 0, i as u64);
            let mut x = vec![0.0; n];
            fill_gaussian(&mut rng, &mut x);
            let v = f.value(&x);
            (x, v)
        })
        .collect();
    let mut log_p = 0.0;
    let mut levels: Vec<f64> = Vec::new();
    let mut accept_rates = Vec::new();
    let mut block = n;
    let mut beta = scfg.pcn_beta;
    let mut beta_adapted = false;
    loop {
        let hits = pop.iter().filter(|(_, v)| *v <= threshold).count();
        if hits as f64 >= scfg.rho * np as f64 {
            log_p += (hits as f64 / np as f64).ln();
            let n_levels = levels.len();
            return Ok(Replication { log_p, levels, accept_rates, n_levels });
        }
        if levels.len() >= scfg.max_levels {
            return Err(Error::Estimator(format!("no convergence within {} levels", scfg.max_levels)));
        }
        let mut vals: Vec<f64> = pop.iter().map(|(_, v)| *v).collect();
        vals.sort_by(|a, b| a.total_cmp(b));
        let m = ((scfg.rho * np as f64).ceil() as usize).max(1);
        let level = vals[m - 1];
        if levels.last().is_some_and(|&prev| level >= prev) || level <= 0.0 {
            return Err(Error::Estimator(format!("level stalled at {level:.6e}")));
        }
        let survivors: Vec<usize> = (0..np).filter(|&i| pop[i].1 <= level).collect();
        log_p += (survivors.len() as f64 / np as f64).ln();
        let lvl_idx = levels.len() as u64 + 1;
        levels.push(level);

        let mut attempt = 0u64;
        let (next, acc) = loop {
            let (next, acc) = mutate(f, &pop, &survivors, level, block, beta, scfg, seed, lvl_idx * 16 + attempt);
            if acc >= MIN_ACCEPT {
                break (next, acc);
            }
            attempt += 1;
            if block > 1 {
                block /= 2;
            } else if !beta_adapted {
                beta /= 2.0;
                beta_adapted = true;
            } else {
                return Err(Error::Estimator(format!(
                    "acceptance {acc:.4} below {MIN_ACCEPT} at level {} (threshold {level:.4e}, block 1, beta {beta})",
                    levels.len()
                )));
            }
        };
        if acc < TARGET_ACCEPT && block > 1 {
            block /= 2;
        }
        accept_rates.push(acc);
        pop = next;
    }
}

/// Clones survivors round-robin into a full population and runs pCN sweeps on
/// each clone, restricted to {f ≤ level}. Returns the new population and the
/// overall acceptance rate.
#[allow(clippy::too_many_arguments)]
fn mutate<F: Functional + ?Sized>(
    f: &F,
    pop: &[(Vec<f64>, f64)],
    survivors: &[usize],
    level: f64,
    block: usize,
    beta: f64,
    scfg: &SplittingConfig,
    seed: u64,
    domain: u64,
) -> (Vec<(Vec<f64>, f64)>, f64) {
    let np = pop.len();
    let t = -0.5 * (1.0 - beta * beta).ln();
    let (a, b) = mehler_coeffs(t);
    let out: Vec<((Vec<f64>, f64), (usize, usize))> = (0..np)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, domain, i as u64);
            let (x0, v0) = &pop[survivors[i % survivors.len()]];
            let mut x = x0.clone();
            let mut v = *v0;
            let counts = sweeps(f, &mut x, &mut v, level, block, a, b, scfg.mcmc_steps_per_sample, &mut rng);
            ((x, v), counts)
        })
        .collect();
    let (mut acc, mut tot) = (0usize, 0usize);
    let pop = out
        .into_iter()
        .map(|(p, (ac, to))| {
            acc += ac;
            tot += to;
            p
        })
        .collect();
    (pop, acc as f64 / tot.max(1) as f64)
}

#[allow(clippy::too_many_arguments)]
fn sweeps<F: Functional + ?Sized>(
    f: &F,
    x: &mut [f64],
    v: &mut f64,
    level: f64,
    block: usize,
    a: f64,
    b: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> (usize, usize) {
    let n = x.len();
    let mut prop = x.to_vec();
    let mut xi = vec![0.0; block];
    let (mut acc, mut tot) = (0, 0);
    for _ in 0..steps {
        let mut start = 0;
        while start < n {
            let end = (start + block).min(n);
            let len = end - start;
            fill_gaussian(rng, &mut xi[..len]);
            for j in 0..len {
                prop[start + j] = a * x[start + j] + b * xi[j];
            }
            let pv = f.value(&prop);
            tot += 1;
            if pv <= level {
                x[start..end].copy_from_slice(&prop[start..end]);
                *v = pv;
                acc += 1;
            } else {
                prop[start..end].copy_from_slice(&x[start..end]);
            }
            start = end;
        }
    }
    (acc, tot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub samples: usize,
}

/// Chi-square goodness of fit of the coordinates of an unconstrained pCN
/// chain, started at the origin, against N(0, 1) on 10 equiprobable bins.
pub fn pcn_gof(n: usize, beta: f64, draws: usize, seed: u64) -> Result<GofReport> {
    if n == 0 || draws < 10 || !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("pcn_gof needs n ≥ 1, draws ≥ 10 and beta in (0, 1)"));
    }
    const BINS: usize = 10;
    let rho = (1.0 - beta * beta).sqrt();
    // Burn-in until the initial variance deficit is negligible; thin until the
    // lag correlation is.
    let burn = (10.0 / -rho.ln()).ceil() as usize;
    let thin = (5.0 / -rho.ln()).ceil() as usize;
    let edges: Vec<f64> = (1..BINS).map(|k| norm_ppf(k as f64 / BINS as f64)).collect();
    let mut rng = substream(seed, 0x32, 0);
    let mut x = vec![0.0; n];
    let mut counts = [0usize; BINS];
    let step = |x: &mut [f64], rng: &mut ChaCha8Rng| {
        for xi in x.iter_mut() {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            *xi = rho * *xi + beta * z;
        }
    };
    for _ in 0..burn {
        step(&mut x, &mut rng);
    }
    let mut total = 0;
    for _ in 0..draws {
        for _ in 0..thin {
            step(&mut x, &mut rng);
        }
        for &xi in &x {
            counts[edges.partition_point(|&e| e < xi)] += 1;
            total += 1;
        }
    }
    let expect = total as f64 / BINS as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    let dof = BINS - 1;
    let p_value = ChiSquared::new(dof as f64).map(|d| d.sf(chi2)).map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok(GofReport { chi2, dof, p_value, samples: total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::NormSpec;
    use crate::smallball::exact::ln_exact_cdf;

    #[test]
    fn non_rare_event_has_no_levels() {
        let spec = NormSpec::lp(4, 2.0).unwrap();
        let t = 2.5;
        let r = splitting_of(&spec, t, &SplittingConfig::default()).unwrap();
        assert!(r.levels.is_empty());
        let exact = ln_exact_cdf(&spec, t).unwrap();
        assert!((r.log_p - exact).abs() < r.log_p_hw.max(0.05), "{} vs {exact}", r.log_p);
    }

    #[test]
    fn l2_rare_event() {
        let spec = NormSpec::lp(16, 2.0).unwrap();
        let mean = crate::special::chi_mean(16.0);
        let t = 0.2 * mean;
        let r = splitting_of(&spec, t, &SplittingConfig { threads: 4, ..Default::default() }).unwrap();
        let exact = ln_exact_cdf(&spec, t).unwrap();
        assert!(((r.log_p - exact) / exact).abs() <= 0.15, "{} vs {exact}", r.log_p);
        assert!(r.levels.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn pcn_preserves_gaussian() {
        let g = pcn_gof(8, 0.5, 2000, 3).unwrap();
        assert!(g.p_value > 0.01, "{g:?}");
    }

    #[test]
    fn bad_config() {
        let c = SplittingConfig { rho: 0.7, ..Default::default() };
        assert!(c.validate().is_err());
        let c = SplittingConfig { per_level_samples: 10, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
