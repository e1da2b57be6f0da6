//! Dimension-distribution message algebra and uncoupled density evolution.
//!
//! Messages are distributions over subspace dimension (`Pmf`). The DE state
//! is carried in complementary-CDF form (`Ccdf`), where both node updates are
//! componentwise increasing.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{arg, Error, Result};
use crate::subspace::{CoeffKind, CoeffTensors, Term, MAX_M};

/// Slack allowed when validating sums and orderings of computed vectors.
const VALIDATION_SLACK: f64 = 1e-12;

/// Distribution of message dimension; index `i` is `P(dim = i)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(arg("a pmf needs at least two entries (m >= 1)"));
        }
        if probs
            .iter()
            .any(|&p| !p.is_finite() || !(-VALIDATION_SLACK..=1.0 + VALIDATION_SLACK).contains(&p))
        {
            return Err(Error::Contract(format!("pmf entries outside [0,1]: {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > VALIDATION_SLACK {
            return Err(Error::Contract(format!("pmf sums to {total}")));
        }
        Ok(Self { probs })
    }

    /// All mass on dimension `dim`.
    pub fn point(m: usize, dim: usize) -> Self {
        let mut probs = vec![0.0; m + 1];
        probs[dim] = 1.0;
        Self { probs }
    }

    pub fn m(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn to_ccdf(&self) -> Ccdf {
        Ccdf {
            tail: pmf_to_tail(&self.probs),
        }
    }
}

/// Tail probabilities `x_i = P(dim >= i)` for `i = 1..=m`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ccdf {
    tail: Vec<f64>,
}

impl Ccdf {
    pub fn new(tail: Vec<f64>) -> Result<Self> {
        if tail.is_empty() {
            return Err(arg("a CCDF needs m >= 1 entries"));
        }
        let mut prev = 1.0;
        for &x in &tail {
            if !x.is_finite() || x < -VALIDATION_SLACK || x > prev + VALIDATION_SLACK {
                return Err(Error::Contract(format!(
                    "CCDF must satisfy 1 >= x_1 >= ... >= x_m >= 0, got {tail:?}"
                )));
            }
            prev = x;
        }
        Ok(Self { tail })
    }

    pub fn zeros(m: usize) -> Self {
        Self { tail: vec![0.0; m] }
    }

    pub fn m(&self) -> usize {
        self.tail.len()
    }

    pub fn tail(&self) -> &[f64] {
        &self.tail
    }

    pub fn into_tail(self) -> Vec<f64> {
        self.tail
    }

    /// `x_1`, which is the largest entry.
    pub fn max_entry(&self) -> f64 {
        self.tail.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_pmf(&self) -> Pmf {
        Pmf {
            probs: tail_to_pmf(&self.tail),
        }
    }

    pub(crate) fn from_raw(tail: Vec<f64>) -> Self {
        Self { tail }
    }
}

/// `x_{∘i} = x_i - x_{i+1}` with `x_0 = 1` and `x_{m+1} = 0`.
pub(crate) fn tail_to_pmf(tail: &[f64]) -> Vec<f64> {
    let m = tail.len();
    (0..=m)
        .map(|i| {
            let hi = if i == 0 { 1.0 } else { tail[i - 1] };
            let lo = if i == m { 0.0 } else { tail[i] };
            hi - lo
        })
        .collect()
}

pub(crate) fn pmf_to_tail(probs: &[f64]) -> Vec<f64> {
    let m = probs.len() - 1;
    let mut tail = vec![0.0; m];
    let mut acc = 0.0;
    for i in (1..=m).rev() {
        acc += probs[i];
        tail[i - 1] = acc;
    }
    tail
}

/// A regular `(dv, dc)` ensemble over GF(2^m).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct EnsembleParams {
    pub dv: usize,
    pub dc: usize,
    pub m: usize,
}

impl EnsembleParams {
    pub fn new(dv: usize, dc: usize, m: usize) -> Result<Self> {
        if dv < 2 {
            return Err(arg(format!("dv must be >= 2, got {dv}")));
        }
        if dc <= dv {
            return Err(arg(format!("dc must exceed dv (got dv={dv}, dc={dc})")));
        }
        if m == 0 || m > MAX_M {
            return Err(arg(format!("m must lie in 1..={MAX_M}, got {m}")));
        }
        Ok(Self { dv, dc, m })
    }

    pub fn design_rate(&self) -> f64 {
        1.0 - self.dv as f64 / self.dc as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeConfig {
    pub max_iters: usize,
    /// Stop once the sup-norm change between iterates drops below this.
    pub fp_tol: f64,
    /// A state with every entry below this counts as decoded.
    pub zero_tol: f64,
    pub bisect_tol: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            max_iters: 50_000,
            fp_tol: 1e-12,
            zero_tol: 1e-9,
            bisect_tol: 1e-5,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fp_tol", self.fp_tol),
            ("zero_tol", self.zero_tol),
            ("bisect_tol", self.bisect_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(arg(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(arg("max_iters must be positive"));
        }
        Ok(())
    }
}

/// Channel message dimension distribution: `Binomial(m, eps)`.
pub fn channel_pmf(eps: f64, m: usize) -> Result<Pmf> {
    check_eps(eps)?;
    if m == 0 || m > MAX_M {
        return Err(arg(format!("m must lie in 1..={MAX_M}, got {m}")));
    }
    Ok(Pmf {
        probs: channel_probs(eps, m),
    })
}

fn channel_probs(eps: f64, m: usize) -> Vec<f64> {
    let mut binom = 1.0;
    (0..=m)
        .map(|i| {
            if i > 0 {
                binom = binom * (m + 1 - i) as f64 / i as f64;
            }
            binom * eps.powi(i as i32) * (1.0 - eps).powi((m - i) as i32)
        })
        .collect()
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(arg(format!("erasure probability must lie in [0,1], got {eps}")));
    }
    Ok(())
}

pub(crate) fn bilinear(terms: &[Term], a: &[f64], b: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for t in terms {
        out[t.k] += t.value * a[t.i] * b[t.j];
    }
}

fn apply(tensors: &CoeffTensors, kind: CoeffKind, a: &Pmf, b: &Pmf) -> Result<Pmf> {
    if a.m() != b.m() || a.m() != tensors.m() {
        return Err(arg(format!(
            "dimension mismatch: {} vs {} (tensors built for m={})",
            a.m(),
            b.m(),
            tensors.m()
        )));
    }
    let mut out = vec![0.0; a.probs.len()];
    bilinear(tensors.terms(kind), &a.probs, &b.probs, &mut out);
    Ok(Pmf { probs: out })
}

/// Variable-node combination: dimension of the intersection.
pub fn boxdot(tensors: &CoeffTensors, a: &Pmf, b: &Pmf) -> Result<Pmf> {
    apply(tensors, CoeffKind::Intersection, a, b)
}

/// Check-node combination: dimension of the sum.
pub fn boxtimes(tensors: &CoeffTensors, a: &Pmf, b: &Pmf) -> Result<Pmf> {
    apply(tensors, CoeffKind::Sum, a, b)
}

/// Outcome of an uncoupled DE run.
#[derive(Clone, Debug, Serialize)]
pub struct DeOutcome {
    pub state: Ccdf,
    pub iterations: usize,
    pub decoded: bool,
    /// False when `max_iters` ran out before the iterates settled.
    pub converged: bool,
}

/// An ensemble together with its coefficient tensors; evaluates `f`, `g`
/// and their Jacobians in CCDF coordinates.
#[derive(Clone, Debug)]
pub struct Ensemble {
    params: EnsembleParams,
    tensors: Arc<CoeffTensors>,
}

impl Ensemble {
    pub fn new(params: EnsembleParams) -> Result<Self> {
        let tensors = Arc::new(CoeffTensors::new(params.m)?);
        Ok(Self { params, tensors })
    }

    pub fn with_tensors(params: EnsembleParams, tensors: Arc<CoeffTensors>) -> Result<Self> {
        if tensors.m() != params.m {
            return Err(arg("tensor dimension does not match the ensemble"));
        }
        Ok(Self { params, tensors })
    }

    pub fn params(&self) -> EnsembleParams {
        self.params
    }

    pub fn m(&self) -> usize {
        self.params.m
    }

    pub fn tensors(&self) -> &CoeffTensors {
        &self.tensors
    }

    pub fn channel_ccdf(&self, eps: f64) -> Vec<f64> {
        pmf_to_tail(&channel_probs(eps, self.params.m))
    }

    /// Check-node map `g` on an arbitrary vector (no invariant checks).
    pub fn g_raw(&self, x: &[f64]) -> Vec<f64> {
        let p = tail_to_pmf(x);
        let r = self.fold(CoeffKind::Sum, &p, self.params.dc - 1);
        pmf_to_tail(&r)
    }

    /// Variable-node map `f` on an arbitrary vector (no invariant checks).
    pub fn f_raw(&self, y: &[f64], eps: f64) -> Vec<f64> {
        let q = tail_to_pmf(y);
        let r = self.fold(CoeffKind::Intersection, &q, self.params.dv - 1);
        let ch = channel_probs(eps, self.params.m);
        let mut out = vec![0.0; q.len()];
        bilinear(self.tensors.terms(CoeffKind::Intersection), &ch, &r, &mut out);
        pmf_to_tail(&out)
    }

    pub fn f_ccdf(&self, y: &Ccdf, eps: f64) -> Result<Ccdf> {
        check_eps(eps)?;
        self.check_dim(y)?;
        Ccdf::new(self.f_raw(y.tail(), eps))
    }

    pub fn g_ccdf(&self, x: &Ccdf) -> Result<Ccdf> {
        self.check_dim(x)?;
        Ccdf::new(self.g_raw(x.tail()))
    }

    /// One DE step `x -> f(g(x); eps)`.
    pub fn step_raw(&self, x: &[f64], eps: f64) -> Vec<f64> {
        self.f_raw(&self.g_raw(x), eps)
    }

    /// `J[j][n] = ∂g_j/∂x_n`, by forward-mode differentiation of the fold.
    pub fn jacobian_g(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let p = tail_to_pmf(x);
        self.fold_jacobian(CoeffKind::Sum, &p, self.params.dc - 1, None)
    }

    /// `J[j][n] = ∂f_j/∂y_n`.
    pub fn jacobian_f(&self, y: &[f64], eps: f64) -> Vec<Vec<f64>> {
        let q = tail_to_pmf(y);
        let ch = channel_probs(eps, self.params.m);
        self.fold_jacobian(CoeffKind::Intersection, &q, self.params.dv - 1, Some(&ch))
    }

    fn check_dim(&self, x: &Ccdf) -> Result<()> {
        if x.m() != self.params.m {
            return Err(arg(format!("state has m={}, ensemble has m={}", x.m(), self.params.m)));
        }
        Ok(())
    }

    /// `p ∘ p ∘ ... ∘ p` with `count` operands, folded from the left.
    fn fold(&self, kind: CoeffKind, p: &[f64], count: usize) -> Vec<f64> {
        let terms = self.tensors.terms(kind);
        let mut r = p.to_vec();
        let mut next = vec![0.0; p.len()];
        for _ in 1..count {
            bilinear(terms, &r, p, &mut next);
            std::mem::swap(&mut r, &mut next);
        }
        r
    }

    fn fold_jacobian(
        &self,
        kind: CoeffKind,
        p: &[f64],
        count: usize,
        prefix: Option<&[f64]>,
    ) -> Vec<Vec<f64>> {
        let m = self.params.m;
        let terms = self.tensors.terms(kind);
        let mut jac = vec![vec![0.0; m]; m];
        let mut tmp = vec![0.0; m + 1];
        for n in 1..=m {
            // tail coordinate n feeds pmf entries n (+1) and n-1 (-1)
            let mut dp = vec![0.0; m + 1];
            dp[n] = 1.0;
            dp[n - 1] = -1.0;
            let mut r = p.to_vec();
            let mut dr = dp.clone();
            let mut next = vec![0.0; m + 1];
            for _ in 1..count {
                bilinear(terms, &dr, p, &mut next);
                bilinear(terms, &r, &dp, &mut tmp);
                next.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
                std::mem::swap(&mut dr, &mut next);
                bilinear(terms, &r, p, &mut next);
                std::mem::swap(&mut r, &mut next);
            }
            if let Some(pre) = prefix {
                bilinear(terms, pre, &dr, &mut next);
                std::mem::swap(&mut dr, &mut next);
            }
            let col = pmf_to_tail(&dr);
            for j in 0..m {
                jac[j][n - 1] = col[j];
            }
        }
        jac
    }

    /// Iterates `x <- f(g(x); eps)` from the channel CCDF.
    pub fn de_fixed_point(&self, eps: f64, cfg: &DeConfig) -> Result<DeOutcome> {
        check_eps(eps)?;
        let start = self.channel_ccdf(eps);
        self.de_fixed_point_from(start, eps, cfg)
    }

    /// Iterates from an arbitrary starting tail vector.
    pub fn de_fixed_point_from(&self, start: Vec<f64>, eps: f64, cfg: &DeConfig) -> Result<DeOutcome> {
        check_eps(eps)?;
        cfg.validate()?;
        if start.len() != self.params.m {
            return Err(arg("starting point has the wrong length"));
        }
        let mut x = start;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < cfg.max_iters {
            let next = self.step_raw(&x, eps);
            iterations += 1;
            let delta = sup_diff(&next, &x);
            x = next;
            if delta < cfg.fp_tol {
                converged = true;
                break;
            }
        }
        let state = Ccdf::from_raw(x);
        let decoded = state.max_entry() < cfg.zero_tol;
        Ok(DeOutcome {
            state,
            iterations,
            decoded,
            converged,
        })
    }

    /// Largest `eps` for which uncoupled DE reaches zero, by bisection.
    pub fn bp_threshold(&self, cfg: &DeConfig) -> Result<f64> {
        cfg.validate()?;
        bisect(0.0, 1.0, cfg.bisect_tol, |eps| {
            Ok(self.de_fixed_point(eps, cfg)?.decoded)
        })
    }
}

pub(crate) fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Bisection for the boundary of a predicate that is true at `lo` and false
/// at `hi`. Returns the midpoint of the final bracket.
pub(crate) fn bisect<F>(mut lo: f64, mut hi: f64, tol: f64, mut below: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<bool>,
{
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if below(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
