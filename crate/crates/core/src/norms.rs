//! Norms and seminorms on R^n: evaluation, norming functionals, linear images
//! and ⊕∞ direct sums, Lipschitz constants and the unconditional constant.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mc::{self, McConfig};

/// Anything that can be sampled along with an almost-everywhere gradient.
pub trait Functional: Sync + Send {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes a gradient (a subgradient at kinks) into `g`.
    fn gradient(&self, x: &[f64], g: &mut [f64]);

    fn value_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
        self.gradient(x, g);
        self.value(x)
    }

    /// Exact global Lipschitz constant with respect to ℓ2, when known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

/// Finite set of norming functionals. Each stored vector stands for the pair
/// ±v when `symmetric` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSet {
    dim: usize,
    data: Vec<f64>,
    pub symmetric: bool,
}

impl FunctionalSet {
    pub fn new(vectors: Vec<Vec<f64>>, symmetric: bool) -> Result<Self> {
        let first = vectors.first().ok_or_else(|| invalid("empty functional set"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(invalid("functionals must have positive dimension"));
        }
        let mut data = Vec::with_capacity(dim * vectors.len());
        for v in &vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(invalid("non-finite functional entry"));
            }
            if v.iter().all(|&c| c == 0.0) {
                return Err(invalid("zero functional"));
            }
            data.extend_from_slice(v);
        }
        Ok(FunctionalSet { dim, data, symmetric })
    }

    pub(crate) fn from_flat(dim: usize, data: Vec<f64>, symmetric: bool) -> Self {
        debug_assert!(dim > 0 && data.len() % dim == 0 && !data.is_empty());
        FunctionalSet { dim, data, symmetric }
    }

    /// The ℓ∞ unit-vector functionals {±e_j}.
    pub fn coordinate(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for j in 0..n {
            data[j * n + j] = 1.0;
        }
        FunctionalSet::from_flat(n, data, true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.iter().map(|v| v.to_vec()).collect()
    }

    /// Keeps functionals satisfying `keep`; `None` when nothing survives.
    pub fn filter<P: Fn(&[f64]) -> bool>(&self, keep: P) -> Option<Self> {
        let data: Vec<f64> = self.iter().filter(|v| keep(v)).flatten().copied().collect();
        (!data.is_empty()).then(|| FunctionalSet::from_flat(self.dim, data, self.symmetric))
    }

    /// Index and signed value of the maximizing functional; lowest index wins ties.
    pub fn argmax(&self, x: &[f64]) -> (usize, f64) {
        let key = |d: f64| if self.symmetric { d.abs() } else { d };
        let mut best = (0, dot(self.get(0), x));
        for (j, v) in self.iter().enumerate().skip(1) {
            let d = dot(v, x);
            if key(d) > key(best.1) {
                best = (j, d);
            }
        }
        best
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.argmax(x).1;
        if self.symmetric {
            d.abs()
        } else {
            d
        }
    }

    pub fn max_l2(&self) -> f64 {
        self.iter().map(l2).fold(0.0, f64::max)
    }

    pub fn max_l1(&self) -> f64 {
        self.iter().map(|v| v.iter().map(|c| c.abs()).sum::<f64>()).fold(0.0, f64::max)
    }
}

impl Serialize for FunctionalSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_vecs().serialize(s)
    }
}

impl<'de> Deserialize<'de> for FunctionalSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<Vec<f64>>::deserialize(d)?;
        FunctionalSet::new(v, true).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    Lp { p: f64 },
    Sup,
    WeightedSup { w: Vec<f64> },
    Polytope { fs: FunctionalSet },
    /// `left` acts on the first `left.dim()` coordinates, `right` on the rest.
    DirectSumSup { left: Box<NormSpec>, right: Box<NormSpec> },
    /// x ↦ inner(Ax), `a` row-major.
    LinearImage { a: Vec<f64>, inner: Box<NormSpec>, seminorm: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Repr", into = "Repr")]
pub struct NormSpec {
    dim: usize,
    kind: Kind,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
enum Repr {
    Lp { dim: usize, p: f64 },
    Sup { dim: usize },
    WeightedSup { dim: usize, w: Vec<f64> },
    Polytope {
        dim: usize,
        functionals: Vec<Vec<f64>>,
        #[serde(default = "yes")]
        symmetric: bool,
    },
    DirectSumSup { dim: usize, left: Box<NormSpec>, right: Box<NormSpec> },
    LinearImage {
        dim: usize,
        matrix: Vec<Vec<f64>>,
        inner: Box<NormSpec>,
        #[serde(default)]
        seminorm: bool,
    },
}

fn yes() -> bool {
    true
}

impl TryFrom<Repr> for NormSpec {
    type Error = Error;

    fn try_from(r: Repr) -> Result<Self> {
        let check = |spec: NormSpec, dim: usize| {
            if spec.dim != dim {
                Err(Error::DimensionMismatch { expected: dim, got: spec.dim })
            } else {
                Ok(spec)
            }
        };
        match r {
            Repr::Lp { dim, p } => NormSpec::lp(dim, p),
            Repr::Sup { dim } => NormSpec::sup(dim),
            Repr::WeightedSup { dim, w } => check(NormSpec::weighted_sup(w)?, dim),
            Repr::Polytope { dim, functionals, symmetric } => {
                let fs = FunctionalSet::new(functionals, symmetric)?;
                check(NormSpec::polytope(fs)?, dim)
            }
            Repr::DirectSumSup { dim, left, right } => {
                check(NormSpec::direct_sum(*left, *right)?, dim)
            }
            Repr::LinearImage { dim, matrix, inner, seminorm } => {
                if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                    return Err(invalid(format!("matrix must be {dim}×{dim}")));
                }
                let a = matrix.into_iter().flatten().collect();
                NormSpec::linear_image(a, *inner, seminorm)
            }
        }
    }
}

impl From<NormSpec> for Repr {
    fn from(s: NormSpec) -> Repr {
        let dim = s.dim;
        match s.kind {
            Kind::Lp { p } => Repr::Lp { dim, p },
            Kind::Sup => Repr::Sup { dim },
            Kind::WeightedSup { w } => Repr::WeightedSup { dim, w },
            Kind::Polytope { fs } => {
                Repr::Polytope { dim, symmetric: fs.symmetric, functionals: fs.to_vecs() }
            }
            Kind::DirectSumSup { left, right } => Repr::DirectSumSup { dim, left, right },
            Kind::LinearImage { a, inner, seminorm } => Repr::LinearImage {
                dim,
                matrix: a.chunks(dim).map(|r| r.to_vec()).collect(),
                inner,
                seminorm,
            },
        }
    }
}

impl NormSpec {
    pub fn lp(dim: usize, p: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if !(p >= 1.0 && p.is_finite()) {
            return Err(invalid(format!("p must be a finite real ≥ 1, got {p}")));
        }
        Ok(NormSpec { dim, kind: Kind::Lp { p } })
    }

    pub fn sup(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        Ok(NormSpec { dim, kind: Kind::Sup })
    }

    pub fn weighted_sup(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(invalid("empty weight vector"));
        }
        if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(invalid("weights must be strictly positive and finite"));
        }
        Ok(NormSpec { dim: w.len(), kind: Kind::WeightedSup { w } })
    }

    pub fn polytope(fs: FunctionalSet) -> Result<Self> {
        if !fs.symmetric {
            return Err(invalid("a polytope norm needs a sign-symmetric functional set"));
        }
        Ok(NormSpec { dim: fs.dim(), kind: Kind::Polytope { fs } })
    }

    pub fn direct_sum(left: NormSpec, right: NormSpec) -> Result<Self> {
        Ok(NormSpec {
            dim: left.dim + right.dim,
            kind: Kind::DirectSumSup { left: Box::new(left), right: Box::new(right) },
        })
    }

    /// `a` is row-major `n × n`. A singular `a` is accepted only as a seminorm.
    pub fn linear_image(a: Vec<f64>, inner: NormSpec, seminorm: bool) -> Result<Self> {
        let n = inner.dim;
        if a.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: a.len() });
        }
        if a.iter().any(|c| !c.is_finite()) {
            return Err(invalid("non-finite matrix entry"));
        }
        if !seminorm {
            let m = DMatrix::from_row_slice(n, n, &a);
            let sv = m.singular_values();
            let (mx, mn) = (sv.max(), sv.min());
            if !(mn > 1e-12 * mx.max(1e-300)) {
                return Err(invalid("matrix is singular; mark the spec as a seminorm"));
            }
        }
        Ok(NormSpec { dim: n, kind: Kind::LinearImage { a, inner: Box::new(inner), seminorm } })
    }

    /// x ↦ max(‖x‖_∞, c|x_1|) in R^n.
    pub fn spiked_sup(n: usize, c: f64) -> Result<Self> {
        let mut w = vec![1.0; n];
        w[0] = c.max(1.0);
        NormSpec::weighted_sup(w)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn is_seminorm(&self) -> bool {
        match &self.kind {
            Kind::LinearImage { seminorm, inner, .. } => *seminorm || inner.is_seminorm(),
            Kind::DirectSumSup { left, right } => left.is_seminorm() || right.is_seminorm(),
            _ => false,
        }
    }

    pub fn family(&self) -> &'static str {
        match self.kind {
            Kind::Lp { .. } => "lp",
            Kind::Sup => "sup",
            Kind::WeightedSup { .. } => "weighted_sup",
            Kind::Polytope { .. } => "polytope",
            Kind::DirectSumSup { .. } => "direct_sum_sup",
            Kind::LinearImage { .. } => "linear_image",
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.value(x))
    }

    pub fn subgradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if x.iter().all(|&c| c == 0.0) {
            return Err(Error::UndefinedGradient);
        }
        let mut g = vec![0.0; self.dim];
        self.gradient(x, &mut g);
        Ok(g)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            Err(Error::DimensionMismatch { expected: self.dim, got: x.len() })
        } else {
            Ok(())
        }
    }

    /// Norming functionals when the spec is a polytope norm in disguise.
    pub fn functionals(&self) -> Option<FunctionalSet> {
        let n = self.dim;
        match &self.kind {
            Kind::Sup => Some(FunctionalSet::coordinate(n)),
            Kind::WeightedSup { w } => {
                let mut data = vec![0.0; n * n];
                for j in 0..n {
                    data[j * n + j] = w[j];
                }
                Some(FunctionalSet::from_flat(n, data, true))
            }
            Kind::Lp { p } if *p == 1.0 && n <= 12 => {
                let m = 1usize << (n - 1);
                let mut data = Vec::with_capacity(m * n);
                for s in 0..m {
                    for j in 0..n {
                        data.push(if j > 0 && (s >> (j - 1)) & 1 == 1 { -1.0 } else { 1.0 });
                    }
                }
                Some(FunctionalSet::from_flat(n, data, true))
            }
            Kind::Polytope { fs } => Some(fs.clone()),
            Kind::DirectSumSup { left, right } => {
                let (l, r) = (left.functionals()?, right.functionals()?);
                let mut data = Vec::new();
                for v in l.iter() {
                    data.extend_from_slice(v);
                    data.extend(std::iter::repeat(0.0).take(right.dim));
                }
                for v in r.iter() {
                    data.extend(std::iter::repeat(0.0).take(left.dim));
                    data.extend_from_slice(v);
                }
                Some(FunctionalSet::from_flat(n, data, true))
            }
            Kind::LinearImage { a, inner, .. } => {
                let fs = inner.functionals()?;
                let mut data = Vec::with_capacity(fs.len() * n);
                for v in fs.iter() {
                    let atv = mat_t_vec(a, n, v);
                    if atv.iter().all(|&c| c == 0.0) {
                        continue;
                    }
                    data.extend(atv);
                }
                (!data.is_empty()).then(|| FunctionalSet::from_flat(n, data, true))
            }
            _ => None,
        }
    }

    /// True for families that are 1-unconditional in the coordinate basis.
    pub fn is_unconditional(&self) -> bool {
        match &self.kind {
            Kind::Lp { .. } | Kind::Sup | Kind::WeightedSup { .. } => true,
            Kind::DirectSumSup { left, right } => left.is_unconditional() && right.is_unconditional(),
            _ => false,
        }
    }
}

impl Functional for NormSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Lp { p } => lp_norm(x, *p),
            Kind::Sup => x.iter().fold(0.0, |m, v| m.max(v.abs())),
            Kind::WeightedSup { w } => x.iter().zip(w).fold(0.0, |m, (v, w)| m.max(w * v.abs())),
            Kind::Polytope { fs } => fs.eval(x),
            Kind::DirectSumSup { left, right } => {
                let (xl, xr) = x.split_at(left.dim);
                left.value(xl).max(right.value(xr))
            }
            Kind::LinearImage { a, inner, .. } => inner.value(&mat_vec(a, self.dim, x)),
        }
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        self.value_grad(x, g);
    }

    fn value_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
        match &self.kind {
            Kind::Lp { p } => {
                let nrm = lp_norm(x, *p);
                if nrm == 0.0 {
                    g.fill(0.0);
                } else if *p == 2.0 {
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi = xi / nrm;
                    }
                } else if *p == 1.0 {
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi = sign(*xi);
                    }
                } else {
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi = sign(*xi) * (xi.abs() / nrm).powf(p - 1.0);
                    }
                }
                nrm
            }
            Kind::Sup => {
                let (i, v) = argmax_abs(x.iter().copied());
                g.fill(0.0);
                g[i] = sign(x[i]);
                v
            }
            Kind::WeightedSup { w } => {
                let (i, v) = argmax_abs(x.iter().zip(w).map(|(x, w)| x * w));
                g.fill(0.0);
                g[i] = w[i] * sign(x[i]);
                v
            }
            Kind::Polytope { fs } => {
                let (j, d) = fs.argmax(x);
                let s = sign(d);
                for (gi, vi) in g.iter_mut().zip(fs.get(j)) {
                    *gi = s * vi;
                }
                d.abs()
            }
            Kind::DirectSumSup { left, right } => {
                let k = left.dim;
                let (xl, xr) = x.split_at(k);
                let (gl, gr) = g.split_at_mut(k);
                let vl = left.value(xl);
                let vr = right.value(xr);
                if vl >= vr {
                    left.value_grad(xl, gl);
                    gr.fill(0.0);
                    vl
                } else {
                    right.value_grad(xr, gr);
                    gl.fill(0.0);
                    vr
                }
            }
            Kind::LinearImage { a, inner, .. } => {
                let n = self.dim;
                let ax = mat_vec(a, n, x);
                let mut gi = vec![0.0; n];
                let v = inner.value_grad(&ax, &mut gi);
                g.copy_from_slice(&mat_t_vec(a, n, &gi));
                v
            }
        }
    }

    fn lipschitz(&self) -> Option<f64> {
        let n = self.dim as f64;
        match &self.kind {
            Kind::Lp { p } if *p >= 2.0 => Some(1.0),
            Kind::Lp { p } => Some(n.powf(1.0 / p - 0.5)),
            Kind::Sup => Some(1.0),
            Kind::WeightedSup { w } => Some(w.iter().copied().fold(0.0, f64::max)),
            Kind::Polytope { fs } => Some(fs.max_l2()),
            Kind::DirectSumSup { left, right } => Some(left.lipschitz()?.max(right.lipschitz()?)),
            Kind::LinearImage { a, inner, .. } => match inner.kind {
                Kind::Lp { p } if p == 2.0 => {
                    Some(DMatrix::from_row_slice(self.dim, self.dim, a).singular_values().max())
                }
                Kind::Sup | Kind::WeightedSup { .. } | Kind::Polytope { .. } => {
                    self.functionals().map(|fs| fs.max_l2())
                }
                _ => None,
            },
        }
    }
}

/// x ↦ f(λ ⊙ x) for a positive diagonal λ.
pub struct Diagonal<'a, F: Functional + ?Sized> {
    pub inner: &'a F,
    pub lambda: &'a [f64],
}

impl<F: Functional + ?Sized> Functional for Diagonal<'_, F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().zip(self.lambda).map(|(a, b)| a * b).collect();
        self.inner.value(&y)
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        self.value_grad(x, g);
    }

    fn value_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let y: Vec<f64> = x.iter().zip(self.lambda).map(|(a, b)| a * b).collect();
        let v = self.inner.value_grad(&y, g);
        g.iter_mut().zip(self.lambda).for_each(|(gi, l)| *gi *= l);
        v
    }

    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

/// Signed linear form x ↦ ⟨a, x⟩.
#[derive(Debug, Clone)]
pub struct Linear(pub Vec<f64>);

impl Functional for Linear {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.0, x)
    }

    fn gradient(&self, _x: &[f64], g: &mut [f64]) {
        g.copy_from_slice(&self.0);
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(l2(&self.0))
    }
}

/// x ↦ f(x) − c.
pub struct Shifted<'a, F: Functional + ?Sized> {
    pub inner: &'a F,
    pub shift: f64,
}

impl<F: Functional + ?Sized> Functional for Shifted<'_, F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x) - self.shift
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        self.inner.gradient(x, g)
    }

    fn value_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
        self.inner.value_grad(x, g) - self.shift
    }

    fn lipschitz(&self) -> Option<f64> {
        self.inner.lipschitz()
    }
}

impl Functional for FunctionalSet {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        self.value_grad(x, g);
    }

    fn value_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let (j, d) = self.argmax(x);
        let s = if self.symmetric { sign(d) } else { 1.0 };
        for (gi, vi) in g.iter_mut().zip(self.get(j)) {
            *gi = s * vi;
        }
        if self.symmetric {
            d.abs()
        } else {
            d
        }
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.max_l2())
    }
}

/// Lower bound for the unconditional constant with respect to the coordinate
/// basis: the largest observed ratio max_ε f(Σ ε_i α_i e_i) / f(α) over
/// Gaussian coefficient vectors α.
pub fn unc_constant_lower(spec: &NormSpec, cfg: &McConfig) -> Result<f64> {
    if spec.is_seminorm() {
        return Err(invalid("the unconditional constant is defined for norms"));
    }
    if spec.is_unconditional() {
        return Ok(1.0);
    }
    unc_lower_of(spec, spec.functionals().as_ref(), cfg)
}

/// Same estimate for an arbitrary functional. With norming functionals at
/// hand the inner max over signs is exact: Σ_i |v_i α_i| per functional.
pub fn unc_lower_of<F: Functional + ?Sized>(
    f: &F,
    fs: Option<&FunctionalSet>,
    cfg: &McConfig,
) -> Result<f64> {
    cfg.validate()?;
    let n = f.dim();
    let best = mc::par_map(cfg.streams, cfg.seed, 0x0C, cfg.n_batches(), |b, rng| {
        let len = (cfg.samples - b * cfg.batch).min(cfg.batch);
        let mut best: f64 = 1.0;
        let mut alpha = vec![0.0; n];
        for _ in 0..len {
            mc::fill_gaussian(rng, &mut alpha);
            let base = f.value(&alpha);
            if base <= 0.0 {
                continue;
            }
            let top = match fs {
                Some(fs) => fs
                    .iter()
                    .map(|v| v.iter().zip(&alpha).map(|(v, a)| (v * a).abs()).sum::<f64>())
                    .fold(0.0, f64::max),
                None => max_over_signs(f, &alpha),
            };
            best = best.max(top / base);
        }
        best
    });
    Ok(best.into_iter().fold(1.0, f64::max))
}

fn max_over_signs<F: Functional + ?Sized>(f: &F, alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut x = alpha.to_vec();
    if n <= 16 {
        // ε and −ε give the same value, so fix ε_0 = +1.
        let mut best: f64 = 0.0;
        for s in 0..(1u32 << (n - 1)) {
            for j in 1..n {
                x[j] = if (s >> (j - 1)) & 1 == 1 { -alpha[j] } else { alpha[j] };
            }
            best = best.max(f.value(&x));
        }
        best
    } else {
        // Greedy single-flip ascent from the identity pattern.
        let mut cur = f.value(&x);
        loop {
            let mut improved = false;
            for j in 0..n {
                x[j] = -x[j];
                let v = f.value(&x);
                if v > cur * (1.0 + 1e-12) {
                    cur = v;
                    improved = true;
                } else {
                    x[j] = -x[j];
                }
            }
            if !improved {
                return cur;
            }
        }
    }
}

/// T = S ⊕ a·I: acts as `s` (row-major k×k) on the coordinates listed in
/// `subspace` and as multiplication by `a` on the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftMap {
    pub dim: usize,
    pub matrix: Vec<f64>,
}

pub fn lift_map(dim: usize, subspace: &[usize], s: &[f64], a: f64) -> Result<LiftMap> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid("lift parameter a must be positive"));
    }
    let k = subspace.len();
    if s.len() != k * k {
        return Err(Error::DimensionMismatch { expected: k * k, got: s.len() });
    }
    let mut seen = vec![false; dim];
    for &i in subspace {
        if i >= dim || seen[i] {
            return Err(invalid("subspace indices must be distinct and in range"));
        }
        seen[i] = true;
    }
    let sm = DMatrix::from_row_slice(k, k, s);
    if k > 0 && sm.singular_values().min() <= 1e-12 * sm.singular_values().max() {
        return Err(invalid("S must be invertible"));
    }
    let mut m = vec![0.0; dim * dim];
    for (r, &i) in subspace.iter().enumerate() {
        for (c, &j) in subspace.iter().enumerate() {
            m[i * dim + j] = s[r * k + c];
        }
    }
    for i in (0..dim).filter(|&i| !seen[i]) {
        m[i * dim + i] = a;
    }
    Ok(LiftMap { dim, matrix: m })
}

impl LiftMap {
    pub fn apply(&self, inner: NormSpec) -> Result<NormSpec> {
        NormSpec::linear_image(self.matrix.clone(), inner, false)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn argmax_abs(it: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, -1.0);
    for (i, v) in it.enumerate() {
        if v.abs() > best.1 {
            best = (i, v.abs());
        }
    }
    best
}

fn lp_norm(x: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        return l2(x);
    }
    if p == 1.0 {
        return x.iter().map(|v| v.abs()).sum();
    }
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

fn mat_vec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    a.chunks_exact(n).map(|row| dot(row, x)).collect()
}

fn mat_t_vec(a: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (row, vi) in a.chunks_exact(n).zip(v) {
        if *vi != 0.0 {
            for (o, r) in out.iter_mut().zip(row) {
                *o += vi * r;
            }
        }
    }
    out
}
