//! The truncate-and-rescale transform of a 1-unconditional seminorm.
//!
//! For a functional x and a subset I of coordinates,
//! v(x, I) = (1 + ‖x1_I‖₁/(τ‖x‖₁))·x1_{[n]∖I}, and F(y) = sup_{x, I} ⟨v(x, I), y⟩.
//! By unconditionality each functional reduces to weights a_i = |x_i| and
//! gains b_i = |x_i y_i|; the inner problem is
//!
//!   max_I (τT + S_I)(B − B_I)/(τT),  T = Σa, B = Σb, S_I = Σ_I a, B_I = Σ_I b.
//!
//! The optimum lies on the Pareto frontier of (S_I ↑, B_I ↓), which is built
//! exactly by merging item by item.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::norms::{Functional, FunctionalSet};

/// Frontier size beyond which the merge is thinned and the result flagged.
pub const FRONTIER_CAP: usize = 1 << 16;
/// Largest dimension accepted by the exhaustive search.
pub const N_EXHAUSTIVE: usize = 20;
pub const N_EXACT_DEFAULT: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FValue {
    pub value: f64,
    /// Index of the achieving functional in the set.
    pub functional: usize,
    /// Removed coordinates I, ascending.
    pub subset: Vec<usize>,
    /// False if a frontier had to be thinned.
    pub exact: bool,
}

/// F_{fs,τ} as a functional on R^n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FTransform {
    pub fs: FunctionalSet,
    pub tau: f64,
}

impl FTransform {
    pub fn new(fs: FunctionalSet, tau: f64) -> Result<Self> {
        if !(tau >= 1.0 && tau.is_finite()) {
            return Err(invalid("tau must be at least 1"));
        }
        if fs.is_empty() {
            return Err(Error::Degenerate("empty functional set".into()));
        }
        Ok(FTransform { fs, tau })
    }

    pub fn eval_full(&self, y: &[f64]) -> FValue {
        f_transform_eval(&self.fs, self.tau, y).expect("validated on construction")
    }

    /// The achieving functional ṽ = (1 + S_I/(τT))·|x| 1_{I^c} · sign(y).
    pub fn achiever(&self, y: &[f64], fv: &FValue) -> Vec<f64> {
        achiever(&self.fs, self.tau, y, fv)
    }
}

impl Functional for FTransform {
    fn dim(&self) -> usize {
        self.fs.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval_full(x).value
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let fv = self.eval_full(x);
        out.copy_from_slice(&self.achiever(x, &fv));
    }

    fn value_grad(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let fv = self.eval_full(x);
        out.copy_from_slice(&self.achiever(x, &fv));
        fv.value
    }

    fn lipschitz(&self) -> Option<f64> {
        // sup ‖|v|‖₂ over sign patterns equals ‖v‖₂, scaled by at most 1 + 1/τ
        Some((1.0 + 1.0 / self.tau) * self.fs.max_l2())
    }
}

/// ‖y‖ for the unconditional seminorm generated by `fs`: max_x Σ|x_i y_i|.
pub fn unc_eval(fs: &FunctionalSet, y: &[f64]) -> f64 {
    fs.iter().map(|x| x.iter().zip(y).map(|(a, b)| (a * b).abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn f_transform_eval(fs: &FunctionalSet, tau: f64, y: &[f64]) -> Result<FValue> {
    check(fs, tau, y)?;
    // Visit functionals by decreasing B so the bound (1 + 1/τ)B prunes the rest.
    let mut order: Vec<(usize, f64)> = fs
        .iter()
        .enumerate()
        .map(|(j, x)| (j, x.iter().zip(y).map(|(a, b)| (a * b).abs()).sum::<f64>()))
        .collect();
    order.sort_by(|p, q| q.1.total_cmp(&p.1).then(p.0.cmp(&q.0)));
    let mut best = FValue { value: 0.0, functional: order[0].0, subset: Vec::new(), exact: true };
    for &(j, b) in &order {
        if (1.0 + 1.0 / tau) * b < best.value {
            break;
        }
        let (value, subset, exact) = best_subset(fs.get(j), tau, y);
        best.exact &= exact;
        if value > best.value {
            best.value = value;
            best.functional = j;
            best.subset = subset;
        }
    }
    Ok(best)
}

/// Brute force over all 2^n subsets; n ≤ N_EXHAUSTIVE.
pub fn f_transform_exhaustive(fs: &FunctionalSet, tau: f64, y: &[f64]) -> Result<f64> {
    check(fs, tau, y)?;
    let n = fs.dim();
    if n > N_EXHAUSTIVE {
        return Err(invalid(format!("exhaustive search limited to n ≤ {N_EXHAUSTIVE}")));
    }
    let mut best: f64 = 0.0;
    for x in fs.iter() {
        for mask in 0u32..(1u32 << n) {
            let subset: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            best = best.max(objective(x, tau, y, &subset));
        }
    }
    Ok(best)
}

/// ⟨v(x, I), y⟩ after reduction to absolute values, sums taken in index order.
pub fn objective(x: &[f64], tau: f64, y: &[f64], subset: &[usize]) -> f64 {
    let t: f64 = x.iter().map(|a| a.abs()).sum();
    if t == 0.0 {
        return 0.0;
    }
    let mut inside = vec![false; x.len()];
    subset.iter().for_each(|&i| inside[i] = true);
    let (mut s, mut rest) = (0.0, 0.0);
    for i in 0..x.len() {
        if inside[i] {
            s += x[i].abs();
        } else {
            rest += (x[i] * y[i]).abs();
        }
    }
    (1.0 + s / (tau * t)) * rest
}

pub fn achiever(fs: &FunctionalSet, tau: f64, y: &[f64], fv: &FValue) -> Vec<f64> {
    let x = fs.get(fv.functional);
    let t: f64 = x.iter().map(|a| a.abs()).sum();
    let mut out = vec![0.0; x.len()];
    if t == 0.0 {
        return out;
    }
    let s: f64 = fv.subset.iter().map(|&i| x[i].abs()).sum();
    let scale = 1.0 + s / (tau * t);
    for i in 0..x.len() {
        if fv.subset.binary_search(&i).is_err() {
            out[i] = scale * x[i].abs() * if y[i] < 0.0 { -1.0 } else { 1.0 };
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportCheck {
    pub holds: bool,
    /// τ‖y‖/((τ+1)²K).
    pub threshold: f64,
    pub support: Vec<usize>,
    pub k: f64,
}

/// Checks supp ṽ ⊂ {i : |y_i| ≥ τ‖y‖/((τ+1)²K)} for the achieving functional,
/// with K the largest ℓ1 norm in the set.
pub fn f_support_check(fs: &FunctionalSet, tau: f64, y: &[f64]) -> Result<SupportCheck> {
    let norm = unc_eval(fs, y);
    if norm == 0.0 {
        return Err(Error::Degenerate("‖y‖ = 0".into()));
    }
    let fv = f_transform_eval(fs, tau, y)?;
    let v = achiever(fs, tau, y, &fv);
    let k = fs.max_l1();
    let threshold = tau * norm / ((tau + 1.0).powi(2) * k);
    let support: Vec<usize> = (0..v.len()).filter(|&i| v[i] != 0.0).collect();
    let holds = support.iter().all(|&i| y[i].abs() >= threshold * (1.0 - 1e-12));
    Ok(SupportCheck { holds, threshold, support, k })
}

fn check(fs: &FunctionalSet, tau: f64, y: &[f64]) -> Result<()> {
    if !(tau >= 1.0 && tau.is_finite()) {
        return Err(invalid("tau must be at least 1"));
    }
    if fs.is_empty() {
        return Err(Error::Degenerate("empty functional set".into()));
    }
    if y.len() != fs.dim() {
        return Err(Error::DimensionMismatch { expected: fs.dim(), got: y.len() });
    }
    Ok(())
}

/// Best removal set for one functional via the exact (S ↑, B_I ↓) frontier.
fn best_subset(x: &[f64], tau: f64, y: &[f64]) -> (f64, Vec<usize>, bool) {
    let t: f64 = x.iter().map(|a| a.abs()).sum();
    if t == 0.0 {
        return (0.0, Vec::new(), true);
    }
    // Items with a zero gain are always worth removing when a_i > 0; items
    // with a_i = 0 never matter. Both are handled by the frontier anyway.
    let items: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
    // Persistent parent links so each state can recover its subset.
    let mut nodes: Vec<(usize, usize)> = Vec::new();
    const ROOT: usize = usize::MAX;
    // (cost B_I, weight S_I, node), sorted by cost with weight strictly increasing.
    let mut front: Vec<(f64, f64, usize)> = vec![(0.0, 0.0, ROOT)];
    let mut exact = true;
    for &i in &items {
        let (a, b) = (x[i].abs(), (x[i] * y[i]).abs());
        let shifted: Vec<(f64, f64, usize)> = front
            .iter()
            .map(|&(c, s, node)| {
                nodes.push((i, node));
                (c + b, s + a, nodes.len() - 1)
            })
            .collect();
        front = merge(&front, &shifted);
        if front.len() > FRONTIER_CAP {
            exact = false;
            let step = front.len().div_ceil(FRONTIER_CAP);
            front = front.iter().copied().step_by(step).collect();
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for &(_, _, node) in &front {
        let mut subset = Vec::new();
        let mut cur = node;
        while cur != ROOT {
            subset.push(nodes[cur].0);
            cur = nodes[cur].1;
        }
        subset.sort_unstable();
        let v = objective(x, tau, y, &subset);
        if v > best.0 {
            best = (v, subset);
        }
    }
    (best.0, best.1, exact)
}

/// Merges two frontiers, keeping states not dominated in (low cost, high weight).
fn merge(p: &[(f64, f64, usize)], q: &[(f64, f64, usize)]) -> Vec<(f64, f64, usize)> {
    let mut all: Vec<(f64, f64, usize)> = Vec::with_capacity(p.len() + q.len());
    all.extend_from_slice(p);
    all.extend_from_slice(q);
    all.sort_by(|u, v| u.0.total_cmp(&v.0).then(v.1.total_cmp(&u.1)));
    let mut out: Vec<(f64, f64, usize)> = Vec::with_capacity(all.len());
    for s in all {
        if out.last().is_none_or(|l| s.1 > l.1) {
            out.push(s);
        }
    }
    out
}
