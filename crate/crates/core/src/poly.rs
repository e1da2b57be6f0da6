//! Exact sparse multivariate polynomials and the symbolic expansion of the
//! CCDF-domain maps `f` and `g`.
//!
//! Coefficients of `g` are rationals. Coefficients of `f` are univariate
//! polynomials in the erasure probability.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::de::EnsembleParams;
use crate::error::{Error, Result};
use crate::subspace::{to_f64, CoeffKind, CoeffTensors};

pub type Rational = BigRational;
pub type Exponents = Vec<u32>;

/// Largest `m` accepted by the expansions.
pub const EXPAND_MAX_M: usize = 4;
pub const EXPAND_MAX_DC: usize = 16;
pub const EXPAND_MAX_DV: usize = 8;

/// Ring operations needed of a polynomial coefficient.
pub trait Coeff: Clone + PartialEq + std::fmt::Debug {
    fn zero() -> Self;
    fn is_zero(&self) -> bool;
    fn add_assign(&mut self, other: &Self);
    fn mul(&self, other: &Self) -> Self;
    fn scale(&self, r: &Rational) -> Self;
}

impl Coeff for Rational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn scale(&self, r: &Rational) -> Self {
        self * r
    }
}

/// Dense univariate polynomial in `eps`, lowest degree first, no trailing zeros.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UniPoly(Vec<Rational>);

impl UniPoly {
    pub fn new(mut coeffs: Vec<Rational>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Self(coeffs)
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.0
    }

    pub fn degree(&self) -> Option<usize> {
        self.0.len().checked_sub(1)
    }

    /// Lowest power with a nonzero coefficient.
    pub fn low_degree(&self) -> Option<usize> {
        self.0.iter().position(|c| !Zero::is_zero(c))
    }

    pub fn eval(&self, eps: &Rational) -> Rational {
        self.0
            .iter()
            .rev()
            .fold(<Rational as Zero>::zero(), |acc, c| acc * eps + c)
    }

    pub fn eval_f64(&self, eps: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * eps + to_f64(c))
    }

    /// `binom(m, i) eps^i (1 - eps)^(m - i)`.
    pub fn channel_term(m: usize, i: usize) -> Self {
        let one_minus = UniPoly(vec![Rational::one(), -Rational::one()]);
        let mut p = UniPoly(vec![Rational::from_integer(binomial(m, i))]);
        for _ in 0..i {
            p = p.mul(&UniPoly(vec![<Rational as Zero>::zero(), Rational::one()]));
        }
        for _ in 0..(m - i) {
            p = p.mul(&one_minus);
        }
        p
    }
}

fn binomial(n: usize, k: usize) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

impl Coeff for UniPoly {
    fn zero() -> Self {
        UniPoly(Vec::new())
    }
    fn is_zero(&self) -> bool {
        self.0.is_empty()
    }
    fn add_assign(&mut self, other: &Self) {
        if other.0.len() > self.0.len() {
            self.0.resize(other.0.len(), <Rational as Zero>::zero());
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
        *self = UniPoly::new(std::mem::take(&mut self.0));
    }
    fn mul(&self, other: &Self) -> Self {
        if self.0.is_empty() || other.0.is_empty() {
            return UniPoly(Vec::new());
        }
        let mut out = vec![<Rational as Zero>::zero(); self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        UniPoly::new(out)
    }
    fn scale(&self, r: &Rational) -> Self {
        UniPoly::new(self.0.iter().map(|c| c * r).collect())
    }
}

/// Sparse polynomial: exponent vector -> nonzero coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiPoly<C: Coeff> {
    num_vars: usize,
    terms: BTreeMap<Exponents, C>,
}

/// Polynomial in `y_1..y_m` whose coefficients are polynomials in `eps`.
pub type PolyInEps = MultiPoly<UniPoly>;

impl<C: Coeff> MultiPoly<C> {
    pub fn zero(num_vars: usize) -> Self {
        Self {
            num_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(num_vars: usize, c: C) -> Self {
        let mut p = Self::zero(num_vars);
        p.add_term(vec![0; num_vars], c);
        p
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &C)> {
        self.terms.iter()
    }

    pub fn coeff(&self, exps: &[u32]) -> Option<&C> {
        self.terms.get(exps)
    }

    pub fn support(&self) -> BTreeSet<Exponents> {
        self.terms.keys().cloned().collect()
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn add_term(&mut self, exps: Exponents, c: C) {
        debug_assert_eq!(exps.len(), self.num_vars);
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&exps) {
            Some(slot) => {
                slot.add_assign(&c);
                if slot.is_zero() {
                    self.terms.remove(&exps);
                }
            }
            None => {
                self.terms.insert(exps, c);
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Self, r: &Rational) {
        for (e, c) in &other.terms {
            self.add_term(e.clone(), c.scale(r));
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.num_vars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Exponents = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca.mul(cb));
            }
        }
        out
    }

    /// Multiplies every coefficient by `c`, which lives in the coefficient ring.
    pub fn mul_coeff(&self, c: &C) -> Self {
        let mut out = Self::zero(self.num_vars);
        for (e, v) in &self.terms {
            out.add_term(e.clone(), v.mul(c));
        }
        out
    }
}

impl MultiPoly<Rational> {
    /// The linear polynomial `x_var` (0-based).
    pub fn var(num_vars: usize, var: usize) -> Self {
        let mut e = vec![0; num_vars];
        e[var] = 1;
        let mut p = Self::zero(num_vars);
        p.add_term(e, Rational::one());
        p
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| to_f64(c) * monomial(x, e))
            .sum()
    }

    pub fn eval(&self, x: &[Rational]) -> Rational {
        let mut acc = <Rational as Zero>::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &k) in x.iter().zip(e) {
                for _ in 0..k {
                    t *= xi;
                }
            }
            acc += t;
        }
        acc
    }

    pub fn partial(&self, var: usize) -> Self {
        let mut out = Self::zero(self.num_vars);
        for (e, c) in &self.terms {
            if e[var] == 0 {
                continue;
            }
            let mut d = e.clone();
            d[var] -= 1;
            out.add_term(d, c * Rational::from_integer(BigInt::from(e[var])));
        }
        out
    }

    /// Golden-file form: one `{"exponents", "coeff"}` record per term.
    pub fn to_records(&self) -> Vec<TermRecord> {
        self.terms
            .iter()
            .map(|(e, c)| TermRecord {
                exponents: e.clone(),
                eps_power: None,
                coeff: c.to_string(),
            })
            .collect()
    }
}

impl MultiPoly<UniPoly> {
    pub fn eval_f64(&self, y: &[f64], eps: f64) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c.eval_f64(eps) * monomial(y, e))
            .sum()
    }

    /// Fixes `eps` to an exact value.
    pub fn at_eps(&self, eps: &Rational) -> MultiPoly<Rational> {
        let mut out = MultiPoly::zero(self.num_vars);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), c.eval(eps));
        }
        out
    }

    pub fn to_records(&self) -> Vec<TermRecord> {
        let mut out = Vec::new();
        for (e, c) in &self.terms {
            for (power, v) in c.coeffs().iter().enumerate() {
                if !Zero::is_zero(v) {
                    out.push(TermRecord {
                        exponents: e.clone(),
                        eps_power: Some(power as u32),
                        coeff: v.to_string(),
                    });
                }
            }
        }
        out
    }
}

fn monomial(x: &[f64], e: &[u32]) -> f64 {
    x.iter()
        .zip(e)
        .map(|(&xi, &k)| xi.powi(k as i32))
        .product()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermRecord {
    pub exponents: Exponents,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps_power: Option<u32>,
    pub coeff: String,
}

fn check_scale(params: &EnsembleParams, degree: usize, max_degree: usize, what: &'static str) -> Result<()> {
    if params.m > EXPAND_MAX_M {
        return Err(Error::UnsupportedScale {
            what: "expansion dimension m",
            limit: EXPAND_MAX_M,
            got: params.m,
        });
    }
    if degree > max_degree {
        return Err(Error::UnsupportedScale {
            what,
            limit: max_degree,
            got: degree,
        });
    }
    Ok(())
}

/// Pmf entries `x_i - x_{i+1}` as linear polynomials (`x_0 = 1`, `x_{m+1} = 0`).
fn symbolic_pmf(m: usize) -> Vec<MultiPoly<Rational>> {
    let tail = |i: usize| -> MultiPoly<Rational> {
        if i == 0 {
            MultiPoly::constant(m, Rational::one())
        } else if i > m {
            MultiPoly::zero(m)
        } else {
            MultiPoly::var(m, i - 1)
        }
    };
    (0..=m)
        .map(|i| {
            let mut p = tail(i);
            p.add_scaled(&tail(i + 1), &-Rational::one());
            p
        })
        .collect()
}

#[allow(clippy::needless_range_loop)]
fn symbolic_fold(tensors: &CoeffTensors, kind: CoeffKind, p: &[MultiPoly<Rational>], count: usize) -> Vec<MultiPoly<Rational>> {
    let m = tensors.m();
    let mut r = p.to_vec();
    for _ in 1..count {
        let mut next = vec![MultiPoly::zero(m); m + 1];
        for i in 0..=m {
            for j in 0..=m {
                let mut product: Option<MultiPoly<Rational>> = None;
                for (k, slot) in next.iter_mut().enumerate() {
                    let c = tensors.exact(kind, i, j, k);
                    if Zero::is_zero(&c) {
                        continue;
                    }
                    let prod = product.get_or_insert_with(|| r[i].mul(&p[j]));
                    slot.add_scaled(prod, &c);
                }
            }
        }
        r = next;
    }
    r
}

fn pmf_to_tail_poly<C: Coeff>(pmf: Vec<MultiPoly<C>>) -> Vec<MultiPoly<C>> {
    let m = pmf.len() - 1;
    let mut tail = Vec::with_capacity(m);
    let mut acc = MultiPoly::zero(m);
    for p in pmf.into_iter().skip(1).rev() {
        for (e, c) in p.terms {
            acc.add_term(e, c);
        }
        tail.push(acc.clone());
    }
    tail.reverse();
    tail
}

/// `g_1..g_m` as exact polynomials in `x_1..x_m`.
pub fn expand_g(params: &EnsembleParams, tensors: &CoeffTensors) -> Result<Vec<MultiPoly<Rational>>> {
    check_scale(params, params.dc, EXPAND_MAX_DC, "check degree dc")?;
    let p = symbolic_pmf(params.m);
    let folded = symbolic_fold(tensors, CoeffKind::Sum, &p, params.dc - 1);
    Ok(pmf_to_tail_poly(folded))
}

/// `f_1..f_m` as exact polynomials in `y_1..y_m` with coefficients in `eps`.
pub fn expand_f(params: &EnsembleParams, tensors: &CoeffTensors) -> Result<Vec<PolyInEps>> {
    check_scale(params, params.dv, EXPAND_MAX_DV, "variable degree dv")?;
    let m = params.m;
    let q = symbolic_pmf(m);
    let folded = symbolic_fold(tensors, CoeffKind::Intersection, &q, params.dv - 1);
    let channel: Vec<UniPoly> = (0..=m).map(|i| UniPoly::channel_term(m, i)).collect();
    let mut out = vec![PolyInEps::zero(m); m + 1];
    for (i, ch) in channel.iter().enumerate() {
        for (j, r) in folded.iter().enumerate() {
            for (k, slot) in out.iter_mut().enumerate() {
                let c = tensors.exact(CoeffKind::Intersection, i, j, k);
                if Zero::is_zero(&c) {
                    continue;
                }
                let weight = ch.scale(&c);
                for (e, v) in r.terms() {
                    slot.add_term(e.clone(), weight.scale(v));
                }
            }
        }
    }
    Ok(pmf_to_tail_poly(out))
}

/// Exponent vectors with nonzero coefficient, per component of `f` and `g`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoefficientSets {
    pub f: Vec<BTreeSet<Exponents>>,
    pub g: Vec<BTreeSet<Exponents>>,
}

pub fn coefficient_sets(f: &[PolyInEps], g: &[MultiPoly<Rational>]) -> CoefficientSets {
    CoefficientSets {
        f: f.iter().map(MultiPoly::support).collect(),
        g: g.iter().map(MultiPoly::support).collect(),
    }
}

/// Which map a coefficient set belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Family {
    F,
    G,
}

/// A monomial whose shifted partner is missing. Components are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DiagonalWitness {
    pub family: Family,
    pub component: usize,
    pub exponents: Exponents,
    pub partner_component: usize,
    pub shifted: Exponents,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DiagonalCheck {
    pub holds: bool,
    pub witness: Option<DiagonalWitness>,
}

/// Support condition for a diagonal `D`: with `D = diag(d)`, integrability
/// needs `d_j ∂P_j/∂x_n = d_n ∂P_n/∂x_j`, so every `a ∈ S_j` with `a_n >= 1`
/// requires `a + e_j - e_n ∈ S_n`.
pub fn check_diagonal_condition(sets: &CoefficientSets) -> DiagonalCheck {
    for (family, comps) in [(Family::F, &sets.f), (Family::G, &sets.g)] {
        let m = comps.len();
        for j in 0..m {
            for a in &comps[j] {
                for n in (0..m).filter(|&n| n != j && a[n] >= 1) {
                    let mut shifted = a.clone();
                    shifted[j] += 1;
                    shifted[n] -= 1;
                    if !comps[n].contains(&shifted) {
                        return DiagonalCheck {
                            holds: false,
                            witness: Some(DiagonalWitness {
                                family,
                                component: j + 1,
                                exponents: a.clone(),
                                partner_component: n + 1,
                                shifted,
                            }),
                        };
                    }
                }
            }
        }
    }
    DiagonalCheck {
        holds: true,
        witness: None,
    }
}

/// Parses `"p/q"` or `"p"` as written by [`MultiPoly::to_records`].
pub fn parse_rational(s: &str) -> Option<Rational> {
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim().parse::<BigInt>().ok()?, d.trim().parse::<BigInt>().ok()?),
        None => (s.trim().parse::<BigInt>().ok()?, BigInt::one()),
    };
    if d.is_zero() {
        return None;
    }
    Some(Rational::new(n, d))
}

/// Largest absolute coefficient, used to sanity-check expansions.
pub fn max_abs_coeff(p: &MultiPoly<Rational>) -> f64 {
    p.terms()
        .map(|(_, c)| c.abs().to_f64().unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max)
}
