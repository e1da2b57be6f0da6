//! Subspace combinatorics over GF(2)^m.
//!
//! A message in nonbinary BP on the erasure channel is a subspace of
//! GF(2)^m, and density evolution only tracks its dimension. Combining two
//! messages intersects (variable node) or sums (check node) the subspaces.
//! The tensors built here give, for a fixed subspace of dimension `i` and a
//! uniformly random subspace of dimension `j`, the distribution of the
//! dimension `k` of their intersection (`V`) or sum (`C`).
//!
//! Everything is computed exactly with big rationals and converted to `f64`
//! once. [`SubspaceSet`] and [`oracle_coeff`] enumerate subspaces explicitly
//! and serve as the ground truth the closed form is checked against.

use std::collections::{BTreeSet, HashMap};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{arg, Error, Result};

/// Largest field extension degree supported.
pub const MAX_M: usize = 16;

/// Largest `m` for which explicit enumeration is allowed.
pub const ORACLE_MAX_M: usize = 4;

/// Number of `k`-dimensional subspaces of GF(2)^n, via the product formula.
pub fn gaussian_binomial(n: usize, k: usize) -> Result<BigUint> {
    if n > MAX_M || k > n {
        return Err(arg(format!(
            "gaussian_binomial requires 0 <= k <= n <= {MAX_M}, got n={n} k={k}"
        )));
    }
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..k {
        num *= (BigUint::one() << (n - i)) - 1u32;
        den *= (BigUint::one() << (i + 1)) - 1u32;
    }
    Ok(num / den)
}

/// Gaussian binomials `[n, k]_2` for all `0 <= k <= n <= m`, filled by the
/// base-2 Pascal recurrence.
#[derive(Clone, Debug)]
pub struct GaussianBinomialTable {
    m: usize,
    values: Vec<Vec<BigUint>>,
}

impl GaussianBinomialTable {
    pub fn new(m: usize) -> Result<Self> {
        if m > MAX_M {
            return Err(arg(format!("m must be <= {MAX_M}, got {m}")));
        }
        let mut values: Vec<Vec<BigUint>> = Vec::with_capacity(m + 1);
        for n in 0..=m {
            let mut row = vec![BigUint::one(); n + 1];
            for k in 1..n {
                let prev = &values[n - 1];
                row[k] = &prev[k - 1] + (&prev[k] << k);
            }
            values.push(row);
        }
        Ok(Self { m, values })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `[n, k]_2`, or zero when `k > n`.
    pub fn value(&self, n: usize, k: usize) -> BigUint {
        assert!(n <= self.m, "n={n} outside table of size {}", self.m);
        self.values[n].get(k).cloned().unwrap_or_default()
    }
}

/// Intersection (`V`) and sum (`C`) dimension tensors for GF(2)^m.
///
/// Entry `(i, j, k)` is the probability that a uniformly random
/// `j`-dimensional subspace meets (resp. spans together with) a fixed
/// `i`-dimensional subspace in dimension `k`.
#[derive(Clone, Debug)]
pub struct CoeffTensors {
    m: usize,
    v_exact: Vec<BigRational>,
    v: Vec<f64>,
    c: Vec<f64>,
    v_terms: Vec<Term>,
    c_terms: Vec<Term>,
}

/// A nonzero tensor entry, used by the bilinear operators.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Term {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

/// Which subspace operation a coefficient refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CoeffKind {
    Intersection,
    Sum,
}

impl CoeffTensors {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 || m > MAX_M {
            return Err(arg(format!("m must lie in 1..={MAX_M}, got {m}")));
        }
        let table = GaussianBinomialTable::new(m)?;
        let n = m + 1;
        let mut v_exact = vec![BigRational::zero(); n * n * n];
        for i in 0..=m {
            for j in 0..=m {
                let total = BigInt::from(table.value(m, j));
                let lo = (i + j).saturating_sub(m);
                for k in lo..=i.min(j) {
                    let count = table.value(i, k)
                        * table.value(m - i, j - k)
                        * (BigUint::one() << ((i - k) * (j - k)));
                    v_exact[idx(n, i, j, k)] =
                        BigRational::new(BigInt::from(count), total.clone());
                }
            }
        }
        let v: Vec<f64> = v_exact.iter().map(to_f64).collect();
        let mut c = vec![0.0; n * n * n];
        for i in 0..=m {
            for j in 0..=m {
                for k in 0..=m {
                    if let Some(kk) = (i + j).checked_sub(k).filter(|&kk| kk <= m) {
                        c[idx(n, i, j, k)] = v[idx(n, i, j, kk)];
                    }
                }
            }
        }
        let v_terms = nonzero_terms(n, &v);
        let c_terms = nonzero_terms(n, &c);
        Ok(Self {
            m,
            v_exact,
            v,
            c,
            v_terms,
            c_terms,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn v(&self, i: usize, j: usize, k: usize) -> f64 {
        self.v[idx(self.m + 1, i, j, k)]
    }

    pub fn c(&self, i: usize, j: usize, k: usize) -> f64 {
        self.c[idx(self.m + 1, i, j, k)]
    }

    pub fn v_exact(&self, i: usize, j: usize, k: usize) -> &BigRational {
        &self.v_exact[idx(self.m + 1, i, j, k)]
    }

    /// Exact `C(i, j, k) = V(i, j, i + j - k)`.
    pub fn c_exact(&self, i: usize, j: usize, k: usize) -> BigRational {
        match (i + j).checked_sub(k).filter(|&kk| kk <= self.m) {
            Some(kk) => self.v_exact(i, j, kk).clone(),
            None => BigRational::zero(),
        }
    }

    pub fn exact(&self, kind: CoeffKind, i: usize, j: usize, k: usize) -> BigRational {
        match kind {
            CoeffKind::Intersection => self.v_exact(i, j, k).clone(),
            CoeffKind::Sum => self.c_exact(i, j, k),
        }
    }

    pub(crate) fn terms(&self, kind: CoeffKind) -> &[Term] {
        match kind {
            CoeffKind::Intersection => &self.v_terms,
            CoeffKind::Sum => &self.c_terms,
        }
    }

    /// Nested `[i][j][k]` view, the layout used by the JSON dump.
    pub fn dump(&self) -> CoeffDump {
        let n = self.m + 1;
        let nest = |flat: &[f64]| -> Vec<Vec<Vec<f64>>> {
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| (0..n).map(|k| flat[idx(n, i, j, k)]).collect())
                        .collect()
                })
                .collect()
        };
        CoeffDump {
            m: self.m,
            v: nest(&self.v),
            c: nest(&self.c),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CoeffDump {
    pub m: usize,
    #[serde(rename = "V")]
    pub v: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<Vec<f64>>>,
}

fn idx(n: usize, i: usize, j: usize, k: usize) -> usize {
    (i * n + j) * n + k
}

fn nonzero_terms(n: usize, flat: &[f64]) -> Vec<Term> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let value = flat[idx(n, i, j, k)];
                if value != 0.0 {
                    out.push(Term { i, j, k, value });
                }
            }
        }
    }
    out
}

pub(crate) fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("rational within f64 range")
}

/// Bit-matrix helpers over GF(2). A row is a `u32` bitmask, so `m <= 32`.
pub mod gf2 {
    /// Reduced row-echelon form. The pivot of a row is its highest set bit;
    /// rows come out sorted by decreasing pivot and zero rows are dropped.
    pub fn rref(rows: &[u32]) -> Vec<u32> {
        let mut basis: Vec<u32> = Vec::new();
        for &r in rows {
            let mut v = r;
            for &b in &basis {
                if v & pivot_bit(b) != 0 {
                    v ^= b;
                }
            }
            if v != 0 {
                let p = pivot_bit(v);
                for b in basis.iter_mut() {
                    if *b & p != 0 {
                        *b ^= v;
                    }
                }
                basis.push(v);
            }
        }
        basis.sort_unstable_by(|a, b| b.cmp(a));
        basis
    }

    pub fn rank(rows: &[u32]) -> usize {
        rref(rows).len()
    }

    /// True if `v` lies in the span of an rref basis.
    pub fn in_span(basis: &[u32], v: u32) -> bool {
        let mut v = v;
        for &b in basis {
            if v & pivot_bit(b) != 0 {
                v ^= b;
            }
        }
        v == 0
    }

    pub fn is_rref(rows: &[u32]) -> bool {
        rref(rows) == rows
    }

    fn pivot_bit(v: u32) -> u32 {
        1 << (31 - v.leading_zeros())
    }
}

/// Every subspace of GF(2)^m, each stored once by its rref basis.
#[derive(Clone, Debug)]
pub struct SubspaceSet {
    m: usize,
    bases: Vec<Vec<u32>>,
}

impl SubspaceSet {
    pub fn enumerate(m: usize) -> Result<Self> {
        if m > ORACLE_MAX_M {
            return Err(Error::UnsupportedScale {
                what: "subspace enumeration dimension",
                limit: ORACLE_MAX_M,
                got: m,
            });
        }
        let mut seen: BTreeSet<Vec<u32>> = BTreeSet::new();
        seen.insert(Vec::new());
        let mut frontier = vec![Vec::new()];
        while let Some(basis) = frontier.pop() {
            for v in 1u32..(1 << m) {
                if gf2::in_span(&basis, v) {
                    continue;
                }
                let mut rows = basis.clone();
                rows.push(v);
                let next = gf2::rref(&rows);
                if seen.insert(next.clone()) {
                    frontier.push(next);
                }
            }
        }
        let mut bases: Vec<Vec<u32>> = seen.into_iter().collect();
        bases.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        Ok(Self { m, bases })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn bases(&self) -> &[Vec<u32>] {
        &self.bases
    }

    pub fn of_dim(&self, k: usize) -> impl Iterator<Item = &Vec<u32>> {
        self.bases.iter().filter(move |b| b.len() == k)
    }
}

/// Enumerated intersection/sum distributions for every `(i, j, k)`.
#[derive(Clone, Debug)]
pub struct OracleTables {
    m: usize,
    intersection: HashMap<(usize, usize, usize), BigRational>,
    sum: HashMap<(usize, usize, usize), BigRational>,
}

impl OracleTables {
    /// Tallies `dim(U ∩ W)` and `dim(U + W)` over all pairs. The fraction is
    /// computed separately for every fixed `U` and all of them must agree.
    pub fn build(m: usize) -> Result<Self> {
        let set = SubspaceSet::enumerate(m)?;
        let n = m + 1;
        let count_by_dim: Vec<usize> = (0..n).map(|d| set.of_dim(d).count()).collect();
        let mut intersection = HashMap::new();
        let mut sum = HashMap::new();
        for i in 0..n {
            let mut reference: Option<Vec<usize>> = None;
            for u in set.of_dim(i) {
                let mut tally = vec![0usize; n * n];
                for w in set.bases() {
                    let mut rows = u.clone();
                    rows.extend_from_slice(w);
                    let sum_dim = gf2::rank(&rows);
                    let cap_dim = u.len() + w.len() - sum_dim;
                    tally[w.len() * n + cap_dim] += 1;
                }
                match &reference {
                    None => reference = Some(tally),
                    Some(r) if *r != tally => {
                        return Err(Error::Contract(format!(
                            "intersection counts depend on the choice of U (m={m}, i={i})"
                        )))
                    }
                    Some(_) => {}
                }
            }
            let tally = reference.expect("every dimension has a subspace");
            for j in 0..n {
                for k in 0..n {
                    let frac = BigRational::new(
                        BigInt::from(tally[j * n + k]),
                        BigInt::from(count_by_dim[j]),
                    );
                    if let Some(s) = (i + j).checked_sub(k) {
                        if s <= m {
                            sum.insert((i, j, s), frac.clone());
                        }
                    }
                    intersection.insert((i, j, k), frac);
                }
            }
        }
        Ok(Self {
            m,
            intersection,
            sum,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, kind: CoeffKind, i: usize, j: usize, k: usize) -> BigRational {
        let map = match kind {
            CoeffKind::Intersection => &self.intersection,
            CoeffKind::Sum => &self.sum,
        };
        map.get(&(i, j, k)).cloned().unwrap_or_else(BigRational::zero)
    }
}

/// Brute-force coefficient for a single index triple.
pub fn oracle_coeff(m: usize, i: usize, j: usize, k: usize, kind: CoeffKind) -> Result<BigRational> {
    if i > m || j > m || k > m {
        return Err(arg(format!("indices must be <= m={m}")));
    }
    Ok(OracleTables::build(m)?.get(kind, i, j, k))
}

/// Result of comparing the closed-form tensors with enumeration.
#[derive(Clone, Debug, Serialize)]
pub struct OracleCheck {
    pub m: usize,
    pub entries_checked: usize,
    pub exact_mismatches: usize,
    pub max_abs_error: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.exact_mismatches == 0
    }
}

pub fn check_against_oracle(tensors: &CoeffTensors) -> Result<OracleCheck> {
    let m = tensors.m();
    let oracle = OracleTables::build(m)?;
    let mut entries_checked = 0;
    let mut exact_mismatches = 0;
    let mut max_abs_error: f64 = 0.0;
    for kind in [CoeffKind::Intersection, CoeffKind::Sum] {
        for i in 0..=m {
            for j in 0..=m {
                for k in 0..=m {
                    let want = oracle.get(kind, i, j, k);
                    let got = tensors.exact(kind, i, j, k);
                    entries_checked += 1;
                    if want != got {
                        exact_mismatches += 1;
                    }
                    let got_f = match kind {
                        CoeffKind::Intersection => tensors.v(i, j, k),
                        CoeffKind::Sum => tensors.c(i, j, k),
                    };
                    max_abs_error = max_abs_error.max((got_f - to_f64(&want)).abs());
                }
            }
        }
    }
    Ok(OracleCheck {
        m,
        entries_checked,
        exact_mismatches,
        max_abs_error,
    })
}
