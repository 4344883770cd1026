//! The acceptance suite: criteria 1 to 11, each a list of named checks.
//!
//! A check marked `known_unattainable` is reported as a failure like any
//! other; it only tells the test harness that the failure is understood and
//! documented rather than a regression.

use std::time::Instant;

use concentra_core::deform::upsilon::profile_of;
use concentra_core::deform::{
    balance_harvest, f_transform_eval, f_transform_exhaustive, harvest, smalldev_pipeline, SmalldevConfig,
    UpsilonParams,
};
use concentra_core::deform::ftransform::unc_eval;
use concentra_core::gstats::{estimate_profile, exact_concentration_profile, kwapien_check};
use concentra_core::mc;
use concentra_core::norms::{FunctionalSet, Shifted};
use concentra_core::ou::{hyper_check, variance_curve, Nested};
use concentra_core::positions::{balance_report, w11_solve, DiagonalMap};
use concentra_core::smallball::splitting::pcn_gof;
use concentra_core::smallball::{
    bound_report, d_param, ln_exact_cdf, scaling_study, splitting_smallball, Anchor, Engine, Family, SmallBallQuery,
    SplittingConfig,
};
use concentra_core::{McConfig, NormSpec};
use serde::Serialize;

use crate::config::{self, Command, Overrides};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub known_unattainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: u32,
    pub title: String,
    pub checks: Vec<Check>,
    /// Wall-clock time; kept out of the written report so that reruns agree.
    #[serde(skip)]
    pub seconds: f64,
}

impl Criterion {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Failures not marked as known.
    pub fn unexpected_failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass && !c.known_unattainable).collect()
    }

    pub fn line(&self) -> String {
        let status = if self.pass() { "PASS" } else { "FAIL" };
        let failed: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| {
                let tag = if c.known_unattainable { "known" } else { "unexpected" };
                format!("{} ({tag}: {})", c.name, c.detail)
            })
            .collect();
        let mut s = format!("{status} criterion {:>2}: {}", self.id, self.title);
        if !failed.is_empty() {
            s.push_str(&format!(" [failed: {}]", failed.join("; ")));
        }
        s
    }
}

struct Builder {
    checks: Vec<Check>,
}

impl Builder {
    fn new() -> Self {
        Builder { checks: Vec::new() }
    }

    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), pass, detail: detail.into(), known_unattainable: false });
    }

    fn known(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), pass, detail: detail.into(), known_unattainable: !pass });
    }

    fn error(&mut self, name: &str, e: impl std::fmt::Display) {
        self.check(name, false, format!("error: {e}"));
    }
}

pub fn title(id: u32) -> &'static str {
    match id {
        1 => "exact sup-norm scaling",
        2 => "rare-event splitting estimator",
        3 => "bound validity",
        4 => "parameter chain",
        5 => "superconcentration relation",
        6 => "semigroup identities",
        7 => "positions",
        8 => "F-transform exactness",
        9 => "deformation",
        10 => "distributional hygiene",
        11 => "determinism",
        _ => "unknown",
    }
}

pub fn run_all(ids: &[u32], seed: u64, threads: usize) -> Vec<Criterion> {
    ids.iter().map(|&id| run_criterion(id, seed, threads)).collect()
}

pub fn run_criterion(id: u32, seed: u64, threads: usize) -> Criterion {
    let start = Instant::now();
    let mut b = Builder::new();
    match id {
        1 => c1(&mut b),
        2 => c2(&mut b, seed, threads),
        3 => c3(&mut b),
        4 => c4(&mut b, seed, threads),
        5 => c5(&mut b, seed, threads),
        6 => c6(&mut b, seed, threads),
        7 => c7(&mut b, seed, threads),
        8 => c8(&mut b, seed),
        9 => c9(&mut b, seed, threads),
        10 => c10(&mut b, seed, threads),
        11 => c11(&mut b, seed),
        _ => b.check("criterion id", false, format!("no criterion {id}")),
    }
    Criterion { id, title: title(id).into(), checks: b.checks, seconds: start.elapsed().as_secs_f64() }
}

/// Norms used wherever a criterion says "every test norm".
pub fn test_norms() -> Vec<NormSpec> {
    vec![
        NormSpec::lp(16, 1.0).unwrap(),
        NormSpec::lp(16, 2.0).unwrap(),
        NormSpec::lp(16, 4.0).unwrap(),
        NormSpec::sup(64).unwrap(),
        NormSpec::weighted_sup(vec![1.0, 2.0, 0.5, 3.0]).unwrap(),
        NormSpec::spiked_sup(32, 5.0).unwrap(),
        NormSpec::direct_sum(NormSpec::lp(4, 2.0).unwrap(), NormSpec::sup(4).unwrap()).unwrap(),
    ]
}

fn label(f: &NormSpec) -> String {
    format!("{} n={}", f.family(), f.dim())
}

fn c1(b: &mut Builder) {
    let t0 = Instant::now();
    let ns: Vec<usize> = (6..=12).map(|k| 1usize << k).collect();
    match scaling_study(Family::Sup, 0.3, &ns, Engine::Exact, &SplittingConfig::default()) {
        Ok(st) => {
            let secs = t0.elapsed().as_secs_f64();
            b.check("gamma_hat in (0.55, 1.0)", st.gamma_hat > 0.55 && st.gamma_hat < 1.0, format!("gamma_hat = {:.4}", st.gamma_hat));
            b.check("-log P strictly increasing", st.strictly_increasing(), "n = 64..4096");
            b.check("runtime under 5 s", secs < 5.0, "exact engine");
        }
        Err(e) => b.error("scaling study", e),
    }
}

fn c2(b: &mut Builder, seed: u64, threads: usize) {
    let spec = NormSpec::sup(256).unwrap();
    let q = match SmallBallQuery::new(spec.clone(), 0.3, Anchor::Mean, &McConfig::default()) {
        Ok(q) => q,
        Err(e) => return b.error("query", e),
    };
    let exact = ln_exact_cdf(&spec, q.threshold()).expect("sup has an exact oracle");
    let mut estimates = Vec::new();
    let mut max_secs: f64 = 0.0;
    let mut max_samples = 0;
    for s in seed..seed + 3 {
        let t0 = Instant::now();
        match splitting_smallball(&q, &SplittingConfig { seed: s, threads, ..Default::default() }) {
            Ok(r) => {
                max_secs = max_secs.max(t0.elapsed().as_secs_f64());
                max_samples = max_samples.max(r.samples);
                let rel = (r.log_p - exact) / exact;
                b.check(
                    format!("seed {s} within 15%"),
                    rel.abs() <= 0.15,
                    format!("log p = {:.3} ± {:.3}, exact {exact:.3}, relative error {rel:.4}", r.log_p, r.log_p_hw),
                );
                estimates.push(r.log_p);
            }
            Err(e) => b.error(&format!("seed {s}"), e),
        }
    }
    if estimates.len() == 3 {
        let lo = estimates.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = estimates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        b.check("consistent across seeds", hi - lo <= 0.15 * exact.abs(), format!("range {:.3}", hi - lo));
    }
    b.check("runtime under 2 min per run", max_secs < 120.0, "three replications per run");
    b.known(
        "|log p| in 80..95",
        (80.0..=95.0).contains(&exact.abs()),
        format!("closed-form log p = {exact:.3}"),
    );
    b.known(
        "at most 1e5 samples per run",
        max_samples <= 100_000,
        format!("{max_samples} samples: 3 replications x 1000 particles x one level per factor 10"),
    );
}

fn c3(b: &mut Builder) {
    let mut violations = Vec::new();
    let mut cases = 0;
    for n in [16usize, 64, 256] {
        for spec in [NormSpec::lp(n, 1.0).unwrap(), NormSpec::lp(n, 2.0).unwrap(), NormSpec::sup(n).unwrap()] {
            let p = match exact_concentration_profile(&spec) {
                Some(p) => p,
                None => return b.check(label(&spec), false, "no exact profile"),
            };
            let d = d_param(&spec, 0.5);
            for delta in [0.1, 0.2, 0.3, 0.4] {
                cases += 1;
                let r = SmallBallQuery::with_anchor(spec.clone(), delta, Anchor::Mean, p.mean.value)
                    .and_then(|q| bound_report(&p, &q, d));
                match r {
                    Ok(r) if r.log_exact.is_some() => {
                        for name in r.violations(1e-9) {
                            violations.push(format!("{} delta={delta} {name}", label(&spec)));
                        }
                    }
                    Ok(_) => violations.push(format!("{} delta={delta}: no exact value", label(&spec))),
                    Err(e) => violations.push(format!("{} delta={delta}: {e}", label(&spec))),
                }
            }
        }
    }
    b.check(
        "no bound below the exact probability",
        violations.is_empty(),
        if violations.is_empty() { format!("{cases} cases") } else { violations.join(", ") },
    );
}

fn c4(b: &mut Builder, seed: u64, threads: usize) {
    let cfg = McConfig::new(40_000, seed).with_streams(threads);
    for f in test_norms() {
        match estimate_profile(&f, &cfg) {
            Ok(p) => {
                let rl = p.r.value * p.l_ratio.value;
                let ok = p.poincare_holds(3.0)
                    && p.chain_holds(3.0)
                    && (rl - p.beta_tilde.value).abs() <= 1e-12 * p.beta_tilde.value;
                b.check(
                    label(&f),
                    ok,
                    format!(
                        "var {:.4} <= grad {:.4}; k {:.3} <= 1/beta_tilde {:.3} <= 1/beta {:.3}",
                        p.variance.value,
                        p.grad_l2_sq.value,
                        p.k.value,
                        1.0 / p.beta_tilde.value,
                        1.0 / p.beta.value
                    ),
                );
            }
            Err(e) => b.error(&label(&f), e),
        }
    }
}

fn c5(b: &mut Builder, seed: u64, threads: usize) {
    let cfg = McConfig::new(20_000, seed).with_streams(threads);
    for n in [64usize, 1024] {
        match estimate_profile(&NormSpec::sup(n).unwrap(), &cfg) {
            Ok(p) => {
                let g = p.s_log_r_gap;
                b.check(
                    format!("2/s >= log R at n={n}"),
                    g.value + g.half_width >= 0.0,
                    format!("2/s - log R = {:.4} ± {:.4}", g.value, g.half_width),
                );
            }
            Err(e) => b.error(&format!("n={n}"), e),
        }
    }
    for k in 6..=12 {
        let n = 1usize << k;
        let p = exact_concentration_profile(&NormSpec::sup(n).unwrap()).expect("sup has a closed form");
        let x = p.variance.value * (n as f64).ln();
        b.check(format!("Var log n at n={n}"), (0.1..=10.0).contains(&x), format!("{x:.4}"));
    }
}

fn c6(b: &mut Builder, seed: u64, threads: usize) {
    let grid = [0.0, 0.15, 0.2, 0.25, 0.45, 0.5, 0.55];
    let f = NormSpec::sup(16).unwrap();
    let exact = exact_concentration_profile(&f).expect("sup has a closed form");
    let cfg = McConfig::new(1, seed).with_streams(threads);
    match variance_curve(&f, &grid, &cfg, Some(Nested { outer: 40_000, inner: 32 })) {
        Ok(vc) => {
            let v0 = vc.v[0];
            b.check(
                "v(0) matches Var f",
                v0.contains(exact.variance.value),
                format!("v(0) = {:.5} ± {:.5}, exact {:.5}", v0.value, v0.half_width, exact.variance.value),
            );
            for j in [2usize, 5] {
                let r = vc.dv_rel_residual[j];
                b.check(format!("v'(t) = -2E|grad P_t f|^2 at t={}", grid[j]), r.abs() <= 0.10, format!("relative residual {r:.4}"));
            }
            let decay_ok = (0..grid.len()).all(|j| {
                vc.v[j].value <= (-2.0 * grid[j]).exp() * v0.value + vc.v[j].half_width + v0.half_width
            });
            b.check("v(t) <= exp(-2t) v(0)", decay_ok, "all grid points");
            let convex_ok = (1..grid.len() - 1).all(|j| {
                let (a, m, c) = (grid[j - 1], grid[j], grid[j + 1]);
                let lam = (c - m) / (c - a);
                let lv = |k: usize| vc.v[k].value.ln();
                let rel = |k: usize| vc.v[k].half_width / vc.v[k].value;
                lv(j) <= lam * lv(j - 1) + (1.0 - lam) * lv(j + 1) + rel(j - 1) + rel(j) + rel(j + 1)
            });
            b.check("log v convex", convex_ok, "within CI slack");
        }
        Err(e) => b.error("variance curve", e),
    }
    let sup = NormSpec::sup(64).unwrap();
    let mean = exact_concentration_profile(&sup).and_then(|p| Some(p.mean.value)).unwrap_or(0.0);
    let h = Shifted { inner: &sup, shift: mean };
    let hc = McConfig::new(40_000, seed).with_streams(threads);
    for t in [0.1, 0.5, 1.0] {
        match hyper_check(&h, t, &hc, Some(Nested { outer: 8_000, inner: 32 })) {
            Ok(r) => b.check(
                format!("hypercontractivity t={t}"),
                r.pass,
                format!("|P_t h|_2 = {:.5} <= |h|_p = {:.5}", r.lhs.value, r.rhs.value),
            ),
            Err(e) => b.error(&format!("hypercontractivity t={t}"), e),
        }
    }
}

fn c7(b: &mut Builder, seed: u64, threads: usize) {
    let cfg = McConfig::new(40_000, seed).with_streams(threads);
    let w = vec![1.0, 2.0, 4.0];
    let ws = NormSpec::weighted_sup(w.clone()).unwrap();
    match w11_solve(&ws, &cfg, 0.02, 200) {
        Ok(sol) => {
            let target = DiagonalMap::normalized(w.iter().map(|x| 1.0 / x).collect()).unwrap();
            let err = sol.map.lambda.iter().zip(&target.lambda).map(|(a, t)| (a / t - 1.0).abs()).fold(0.0, f64::max);
            b.check("weighted sup recovers diag(1/w)", err <= 0.02, format!("max relative error {err:.4}"));
        }
        Err(e) => b.error("weighted sup", e),
    }
    let mixed = NormSpec::direct_sum(NormSpec::lp(4, 2.0).unwrap(), NormSpec::sup(4).unwrap()).unwrap();
    match w11_solve(&mixed, &cfg, 0.02, 200) {
        Ok(sol) => b.check(
            "l2+sup spread <= 2% within 200 iterations",
            sol.spread <= 0.02 && sol.iterations <= 200,
            format!("spread {:.4} after {} iterations", sol.spread, sol.iterations),
        ),
        Err(e) => b.error("l2+sup", e),
    }
    for f in [ws, mixed] {
        match balance_report(&f, &cfg) {
            Ok(r) => b.check(
                format!("integration by parts, {}", label(&f)),
                // Euler's identity makes the gap vanish pointwise; allow rounding.
                r.ibp_gap.value.abs() <= r.ibp_gap.half_width + 1e-12 * r.mean.value,
                format!("gap {:.5} ± {:.5}", r.ibp_gap.value, r.ibp_gap.half_width),
            ),
            Err(e) => b.error(&label(&f), e),
        }
    }
}

fn c8(b: &mut Builder, seed: u64) {
    let mut mismatches = 0;
    let mut inexact = 0;
    let mut sandwich = 0;
    let mut evaluated = 0;
    for n in [4usize, 6, 8] {
        for (ti, tau) in [1.0, 3.0].into_iter().enumerate() {
            let mut rng = mc::substream(seed, 0xA8, (n * 10 + ti) as u64);
            for _ in 0..100 {
                let m = 2 + (mc::gaussian_vec(&mut rng, 1)[0].abs() * 3.0) as usize % 6;
                let vecs: Vec<Vec<f64>> = (0..m).map(|_| mc::gaussian_vec(&mut rng, n)).collect();
                let fs = FunctionalSet::new(vecs, true).expect("Gaussian rows are nonzero");
                for k in 0..1000 {
                    let y = mc::gaussian_vec(&mut rng, n);
                    let v = f_transform_eval(&fs, tau, &y).expect("valid input");
                    evaluated += 1;
                    inexact += usize::from(!v.exact);
                    let norm = unc_eval(&fs, &y);
                    if !(norm <= v.value && v.value <= (1.0 + 1.0 / tau) * norm * (1.0 + 1e-12)) {
                        sandwich += 1;
                    }
                    if k < 10 && f_transform_exhaustive(&fs, tau, &y).expect("small n") != v.value {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    b.check("sweep equals exhaustive search", mismatches == 0 && inexact == 0, format!("{mismatches} mismatches, {inexact} thinned frontiers"));
    b.check("sandwich |y| <= F(y) <= (1+1/tau)|y|", sandwich == 0, format!("{sandwich} violations in {evaluated} evaluations"));
}

fn c9(b: &mut Builder, seed: u64, threads: usize) {
    let n = 32;
    let spec = NormSpec::spiked_sup(n, 5.0).unwrap();
    let cfg = McConfig::new(20_000, seed).with_streams(threads);
    let run = |b: &mut Builder| -> concentra_core::Result<()> {
        let prof = profile_of(&spec, &cfg)?;
        let delta = (prof.r.value.ln() / (n as f64).ln()).min(1.0);
        // θ = 1 satisfies θ⁵ ≥ n^{−δ/4}; see the decisions ledger.
        let mut p = UpsilonParams::new(1.0 / (n as f64).ln(), delta, 1.0, 1.0);
        p.sample_budget = 512;
        let hv = harvest(&spec, &prof, &p, &cfg)?;
        let out = balance_harvest(&hv, &p, &cfg)?;
        let t = &out.trace;
        let first = t.rows.get(1).and_then(|r| r.chosen);
        b.check("first exclusion is the spiked coordinate", first == Some(0), format!("chosen {first:?}"));
        b.check("terminates within the cap", !t.cap_reached && t.m <= t.cap, format!("m = {}, cap = {}", t.m, t.cap));
        let last = t.rows.last().expect("at least one pass");
        let ratio = last.mean.value / prof.mean.value;
        b.known(
            "E Upsilon_m >= 0.5 E f",
            ratio >= 0.5,
            format!("E Upsilon_m = {:.4}, E f = {:.4}, ratio {ratio:.3}", last.mean.value, prof.mean.value),
        );
        b.check(
            "Var Upsilon_m <= Var f",
            last.variance <= prof.variance.value,
            format!("{:.4} vs {:.4}", last.variance, prof.variance.value),
        );
        Ok(())
    };
    if let Err(e) = run(b) {
        b.error("balance loop", e);
    }
    let sup = NormSpec::sup(256).unwrap();
    let sd = SmalldevConfig { splitting: SplittingConfig { seed, threads, ..Default::default() }, ..Default::default() };
    match smalldev_pipeline(&sup, 0.25, &sd, &cfg) {
        Ok(r) => b.check(
            "small-deviation bound dominates splitting estimate",
            r.bound_holds(),
            format!("log bound {:.4}, splitting {:.4} ± {:.4}", r.log_bound, r.log_empirical, r.log_empirical_hw),
        ),
        Err(e) => b.error("small-deviation pipeline", e),
    }
}

fn c10(b: &mut Builder, seed: u64, threads: usize) {
    match pcn_gof(8, 0.5, 2000, seed) {
        Ok(g) => b.check("pCN chi-square p > 0.01", g.p_value > 0.01, format!("p = {:.4}", g.p_value)),
        Err(e) => b.error("pcn gof", e),
    }
    let cfg = McConfig::new(40_000, seed).with_streams(threads);
    for f in test_norms() {
        match kwapien_check(&f, &cfg) {
            Ok(k) => b.check(
                format!("mean >= median - 3hw, {}", label(&f)),
                k.pass,
                format!("gap {:.5} ± {:.5}", k.gap.value, k.gap.half_width),
            ),
            Err(e) => b.error(&label(&f), e),
        }
    }
}

/// Small configurations for every command, used by the determinism check.
pub fn determinism_configs() -> Vec<(Command, &'static str)> {
    vec![
        (Command::Profile, r#"{"norm":{"family":"lp","dim":16,"p":2.0},"mc":{"samples":4000,"seed":1}}"#),
        (
            Command::Semigroup,
            r#"{"norm":{"family":"sup","dim":8},"mc":{"samples":1000,"seed":2},
               "params":{"t_grid":[0.0,0.2,0.5],"nested":{"outer":500,"inner":16},"hyper_t":[0.5]}}"#,
        ),
        (
            Command::Position,
            r#"{"norm":{"family":"weighted_sup","dim":3,"w":[1.0,2.0,4.0]},"mc":{"samples":4000,"seed":3},
               "params":{"contraction":{"l":0.3}}}"#,
        ),
        (
            Command::Smallball,
            r#"{"norm":{"family":"sup","dim":16},"mc":{"samples":4000,"seed":4},
               "params":{"delta":[0.3,0.6],"engine":"splitting"}}"#,
        ),
        (
            Command::Scaling,
            r#"{"mc":{"seed":5},"params":{"family":{"family":"sup"},"delta":0.3,"n_list":[16,32,64,128]}}"#,
        ),
        (
            Command::Deform,
            r#"{"norm":{"family":"weighted_sup","dim":8,"w":[5.0,1.0,1.0,1.0,1.0,1.0,1.0,1.0]},"mc":{"samples":500,"seed":6},
               "params":{"mode":"balance","upsilon":{"tau":0.49,"delta":0.2,"h":1.0,"theta":1.0,"sample_budget":32,"inner":32}}}"#,
        ),
        (Command::Accept, r#"{"mc":{"seed":7},"params":{"only":[3]}}"#),
    ]
}

fn c11(b: &mut Builder, seed: u64) {
    for (cmd, text) in determinism_configs() {
        let run = |threads: usize| -> Result<Vec<crate::output::Artifact>, CliError> {
            let file = config::parse(text)?;
            let ov = Overrides { threads: Some(threads), seed: Some(seed + file.mc.seed), ..Default::default() };
            let run = config::resolve(cmd, file, &ov)?;
            Ok(crate::commands::execute(&run)?.artifacts)
        };
        let results: Vec<_> = [1usize, 1, 4].iter().map(|&t| run(t)).collect();
        match (&results[0], &results[1], &results[2]) {
            (Ok(a), Ok(b2), Ok(c)) => {
                let bytes: usize = a.iter().map(|x| x.contents.len()).sum();
                b.check(
                    format!("{} byte-identical", cmd.name()),
                    a == b2 && a == c,
                    format!("{} artifacts, {bytes} bytes; reruns and 1 vs 4 threads", a.len()),
                );
            }
            _ => {
                let e = results.iter().find_map(|r| r.as_ref().err()).expect("one failed");
                b.error(cmd.name(), e);
            }
        }
    }
}
