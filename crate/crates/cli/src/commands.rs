use concentra_core::deform::{balance_loop, mc_seminorm_build, smalldev_pipeline};
use concentra_core::gstats::{estimate_profile, exact_concentration_profile, kwapien_from, ConcentrationProfile, Stat};
use concentra_core::norms::{Diagonal, Shifted};
use concentra_core::ou::{hyper_check, variance_curve};
use concentra_core::positions::{balance_report, diagonal_contraction, w11_solve};
use concentra_core::smallball::{
    bound_report, d_param, ln_exact_cdf, mc_smallball, scaling_study, splitting_smallball, Anchor, SmallBallQuery,
};
use concentra_core::{McConfig, NormSpec};
use serde_json::{json, Map, Value};

use crate::accept;
use crate::config::{
    AcceptParams, DeformParams, Params, PositionParams, ProfileParams, Run, ScalingParams, SemigroupParams,
    SmallballEngine, SmallballParams,
};
use crate::error::{CliError, EXIT_ACCEPTANCE, EXIT_OK};
use crate::output::{num, opt, Artifact, Outcome, Table};

/// Runs a validated configuration. Nothing touches the file system here.
pub fn execute(run: &Run) -> Result<Outcome, CliError> {
    concentra_core::mc::install(run.threads, || dispatch(run))
}

fn dispatch(run: &Run) -> Result<Outcome, CliError> {
    let norm = run.norm.as_ref();
    let (artifacts, summary, exit_code) = match &run.params {
        Params::Profile(p) => profile(norm.expect("validated"), p, &run.mc)?,
        Params::Semigroup(p) => semigroup(norm.expect("validated"), p, &run.mc)?,
        Params::Position(p) => position(norm.expect("validated"), p, &run.mc)?,
        Params::Smallball(p) => smallball(norm.expect("validated"), p, &run.mc)?,
        Params::Scaling(p) => scaling(p)?,
        Params::Deform(p) => deform(norm.expect("validated"), p, &run.mc)?,
        Params::Accept(p) => acceptance(p, &run.mc)?,
    };
    Ok(Outcome { command: run.command, artifacts, summary, exit_code })
}

type Produced = (Vec<Artifact>, String, i32);

const STATS: [&str; 11] =
    ["mean", "variance", "median", "lip", "grad_l2_sq", "k", "beta", "beta_tilde", "s", "r", "l_ratio"];

fn stat<'a>(p: &'a ConcentrationProfile, name: &str) -> &'a Stat {
    match name {
        "mean" => &p.mean,
        "variance" => &p.variance,
        "median" => &p.median,
        "lip" => &p.lip,
        "grad_l2_sq" => &p.grad_l2_sq,
        "k" => &p.k,
        "beta" => &p.beta,
        "beta_tilde" => &p.beta_tilde,
        "s" => &p.s,
        "r" => &p.r,
        "l_ratio" => &p.l_ratio,
        _ => &p.s_log_r_gap,
    }
}

fn source_name(s: &Stat) -> String {
    serde_json::to_value(s.source).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn profile(spec: &NormSpec, p: &ProfileParams, mc: &McConfig) -> Result<Produced, CliError> {
    let prof = if p.exact {
        exact_concentration_profile(spec)
            .ok_or_else(|| CliError::Config(format!("no closed-form profile for `{}`", spec.family())))?
    } else {
        estimate_profile(spec, mc)?
    };
    let kw = kwapien_from(&prof)?;
    let names: Vec<&str> = STATS.iter().copied().chain(["s_log_r_gap"]).collect();

    let mut header = vec!["dim".to_string(), "samples".to_string()];
    let mut row = vec![prof.dim.to_string(), prof.samples.to_string()];
    let mut flat = Map::new();
    flat.insert("family".into(), json!(spec.family()));
    flat.insert("dim".into(), json!(prof.dim));
    flat.insert("samples".into(), json!(prof.samples));
    for name in &names {
        let s = stat(&prof, name);
        header.push(name.to_string());
        header.push(format!("{name}_hw"));
        row.push(num(s.value));
        row.push(num(s.half_width));
        flat.insert(name.to_string(), json!(s.value));
        flat.insert(format!("{name}_hw"), json!(s.half_width));
        flat.insert(format!("{name}_source"), json!(source_name(s)));
    }
    header.extend(["kwapien_gap".into(), "kwapien_pass".into()]);
    row.extend([num(kw.gap.value), kw.pass.to_string()]);
    flat.insert("kwapien_gap".into(), json!(kw.gap.value));
    flat.insert("kwapien_pass".into(), json!(kw.pass));
    flat.insert("a_vec".into(), json!(prof.a_vec.iter().map(|a| a.value).collect::<Vec<_>>()));
    flat.insert("a_vec_hw".into(), json!(prof.a_vec.iter().map(|a| a.half_width).collect::<Vec<_>>()));

    let mut t = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>())?;
    t.row(&row)?;
    let summary = format!(
        "profile {} n={}: mean={:.6} var={:.6} k={:.4} beta={:.4e} beta_tilde={:.4e}",
        spec.family(),
        prof.dim,
        prof.mean.value,
        prof.variance.value,
        prof.k.value,
        prof.beta.value,
        prof.beta_tilde.value
    );
    Ok((vec![t.finish("profile.csv")?, Artifact::json("profile.json", &Value::Object(flat))?], summary, EXIT_OK))
}

fn semigroup(spec: &NormSpec, p: &SemigroupParams, mc: &McConfig) -> Result<Produced, CliError> {
    let vc = variance_curve(spec, &p.t_grid, mc, p.nested)?;
    let mut t = Table::new(&["t", "v", "v_hw", "grad_sq", "s", "psi"])?;
    for j in 0..vc.t_grid.len() {
        t.row([
            num(vc.t_grid[j]),
            num(vc.v[j].value),
            num(vc.v[j].half_width),
            num(vc.grad_sq[j].value),
            num(vc.s_curve[j]),
            num(vc.psi[j]),
        ])?;
    }
    let centered = Shifted { inner: spec, shift: vc.mean[0].value };
    let hyper = p
        .hyper_t
        .iter()
        .map(|&s| hyper_check(&centered, s, mc, p.nested))
        .collect::<concentra_core::Result<Vec<_>>>()?;
    let failed = hyper.iter().filter(|h| !h.pass).count();
    let summary = format!(
        "semigroup {} n={}: v(0)={:.6} v({})={:.6}; hypercontractivity {}/{} pass",
        spec.family(),
        spec.dim(),
        vc.v[0].value,
        vc.t_grid[vc.t_grid.len() - 1],
        vc.v[vc.v.len() - 1].value,
        hyper.len() - failed,
        hyper.len()
    );
    let doc = json!({ "curve": vc, "hyper": hyper });
    Ok((vec![t.finish("semigroup.csv")?, Artifact::json("semigroup.json", &doc)?], summary, EXIT_OK))
}

fn position(spec: &NormSpec, p: &PositionParams, mc: &McConfig) -> Result<Produced, CliError> {
    let sol = w11_solve(spec, mc, p.tol, p.max_iter)?;
    let g = Diagonal { inner: spec, lambda: &sol.map.lambda };
    let br = balance_report(&g, mc)?;
    let contraction = match p.contraction {
        Some(cp) => Some(diagonal_contraction(&g, &cp, mc)?),
        None => None,
    };
    let mut t = Table::new(&[
        "i",
        "lambda",
        "a",
        "a_hw",
        "m_residual",
        "m_residual_hw",
        "ell_residual",
        "ell_residual_hw",
    ])?;
    for i in 0..spec.dim() {
        t.row([
            i.to_string(),
            num(sol.map.lambda[i]),
            num(br.a_vec[i].value),
            num(br.a_vec[i].half_width),
            num(br.m_residuals[i].value),
            num(br.m_residuals[i].half_width),
            num(br.ell_residuals[i].value),
            num(br.ell_residuals[i].half_width),
        ])?;
    }
    let doc = json!({
        "lambda": sol.map.lambda,
        "iterations": sol.iterations,
        "spread": sol.spread,
        "balanced_spread": br.spread,
        "mean": br.mean,
        "ibp_gap": br.ibp_gap,
        "contraction": contraction,
    });
    let summary = format!(
        "position {} n={}: spread {:.4} after {} iterations",
        spec.family(),
        spec.dim(),
        sol.spread,
        sol.iterations
    );
    Ok((vec![Artifact::json("position.json", &doc)?, t.finish("balance.csv")?], summary, EXIT_OK))
}

fn smallball(spec: &NormSpec, p: &SmallballParams, mc: &McConfig) -> Result<Produced, CliError> {
    if p.engine == SmallballEngine::Exact && ln_exact_cdf(spec, 1.0).is_none() {
        return Err(CliError::Config(format!("no exact small-ball oracle for `{}`", spec.family())));
    }
    let prof = match exact_concentration_profile(spec) {
        Some(e) => e,
        None => estimate_profile(spec, mc)?,
    };
    let d = d_param(spec, 0.5);
    let mut t = Table::new(&[
        "n", "delta", "anchor", "threshold", "engine", "log_p", "hw", "log_exact", "classic", "kv", "hyper_sb",
        "super_sb",
    ])?;
    let mut reports = Vec::new();
    for &delta in &p.delta {
        let anchor_value = match p.anchor {
            Anchor::Mean => prof.mean.value,
            Anchor::Median => prof.median.value,
        };
        let q = SmallBallQuery::with_anchor(spec.clone(), delta, p.anchor, anchor_value)?;
        let b = bound_report(&prof, &q, d)?;
        let (log_p, hw) = match p.engine {
            SmallballEngine::Exact => (b.log_exact.expect("checked above"), 0.0),
            SmallballEngine::Naive => {
                let r = mc_smallball(&q, mc)?;
                (r.log_p, r.log_p_hw)
            }
            SmallballEngine::Splitting => {
                let r = splitting_smallball(&q, &p.splitting)?;
                (r.log_p, r.log_p_hw)
            }
        };
        t.row([
            spec.dim().to_string(),
            num(delta),
            match p.anchor {
                Anchor::Mean => "mean".into(),
                Anchor::Median => "median".into(),
            },
            num(q.threshold()),
            p.engine.name().to_string(),
            num(log_p),
            num(hw),
            opt(b.log_exact),
            num(b.log_classic),
            opt(b.log_kv),
            opt(b.log_hyper_sb),
            opt(b.log_super_sb),
        ])?;
        reports.push(json!({ "log_p": log_p, "hw": hw, "bounds": b }));
    }
    let summary = format!(
        "smallball {} n={} engine={}: {} rows",
        spec.family(),
        spec.dim(),
        p.engine.name(),
        p.delta.len()
    );
    Ok((vec![t.finish("smallball.csv")?, Artifact::json("smallball.json", &reports)?], summary, EXIT_OK))
}

fn scaling(p: &ScalingParams) -> Result<Produced, CliError> {
    let st = scaling_study(p.family, p.delta, &p.n_list, p.engine, &p.splitting)?;
    let engine = serde_json::to_value(p.engine).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let mut t = Table::new(&["n", "delta", "engine", "mean", "log_p", "hw", "log_exact"])?;
    for r in &st.rows {
        let exact = p.family.spec(r.n).ok().and_then(|s| ln_exact_cdf(&s, p.delta * r.mean));
        t.row([
            r.n.to_string(),
            num(p.delta),
            engine.clone(),
            num(r.mean),
            num(r.log_p),
            num(r.log_p_hw),
            opt(exact),
        ])?;
    }
    let doc = json!({
        "family": p.family.name(),
        "gamma_hat": st.gamma_hat,
        "strictly_increasing": st.strictly_increasing(),
        "study": st,
    });
    let summary = format!("scaling {} delta={}: gamma_hat={:.4}", p.family.name(), p.delta, st.gamma_hat);
    Ok((vec![t.finish("scaling.csv")?, Artifact::json("scaling.json", &doc)?], summary, EXIT_OK))
}

fn deform(spec: &NormSpec, p: &DeformParams, mc: &McConfig) -> Result<Produced, CliError> {
    match p {
        DeformParams::Balance { upsilon } => {
            let s = balance_loop(spec, upsilon, mc)?;
            let last = s.trace.rows.last().expect("at least one pass");
            let summary = format!(
                "deform balance {} n={}: m={} E Upsilon={:.6} cap_reached={}",
                spec.family(),
                spec.dim(),
                s.trace.m,
                last.mean.value,
                s.trace.cap_reached
            );
            let meta = json!({
                "acceptance": s.acceptance,
                "events": s.events,
                "trace": s.trace,
            });
            Ok((
                vec![
                    Artifact::text("trace.csv", s.trace.csv()),
                    Artifact::json("store.json", &s.store)?,
                    Artifact::json("deform.json", &meta)?,
                ],
                summary,
                EXIT_OK,
            ))
        }
        DeformParams::Smalldev { epsilon, config } => {
            let r = smalldev_pipeline(spec, *epsilon, config, mc)?;
            let summary = format!(
                "deform smalldev {} n={} eps={}: log bound {:.4}, splitting {:.4} ± {:.4}, hypotheses {}",
                spec.family(),
                spec.dim(),
                epsilon,
                r.log_bound,
                r.log_empirical,
                r.log_empirical_hw,
                if r.verified() { "verified" } else { "not verified" }
            );
            Ok((
                vec![Artifact::text("trace.csv", r.trace.csv()), Artifact::json("smalldev.json", &r)?],
                summary,
                EXIT_OK,
            ))
        }
        DeformParams::Seminorm { seminorm } => {
            let r = mc_seminorm_build(spec, seminorm, mc)?;
            let summary = format!(
                "deform seminorm {} n={}: |I|={} E T/E f={:.4} sandwich={} T<=2f={}",
                spec.family(),
                spec.dim(),
                r.large.len(),
                r.mean_ratio.value,
                r.sandwich_holds,
                r.t_le_2f
            );
            Ok((vec![Artifact::json("seminorm.json", &r)?], summary, EXIT_OK))
        }
    }
}

fn acceptance(p: &AcceptParams, mc: &McConfig) -> Result<Produced, CliError> {
    let ids: Vec<u32> = if p.only.is_empty() { (1..=11).collect() } else { p.only.clone() };
    let results = accept::run_all(&ids, mc.seed, mc.streams);
    let text: String = results.iter().map(|c| c.line() + "\n").collect();
    let failed = results.iter().filter(|c| !c.pass()).count();
    let summary = format!("accept: {}/{} criteria pass", results.len() - failed, results.len());
    let code = if failed == 0 { EXIT_OK } else { EXIT_ACCEPTANCE };
    Ok((vec![Artifact::text("accept.txt", text), Artifact::json("accept.json", &results)?], summary, code))
}
