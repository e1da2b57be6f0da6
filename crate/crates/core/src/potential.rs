//! Potential functions for the vector DE recursion.
//!
//! For a symmetric matrix `D` such that `f(y; eps)·D` and `g(x)·D` are
//! gradient fields, the scalar antiderivatives `F` and `G` exist and
//!
//! ```text
//! U(x; eps) = g(x) D xᵀ - G(x) - F(g(x); eps)
//! ```
//!
//! has gradient `(x - f(g(x); eps)) D G_d(x)`, so its stationary points are
//! exactly the DE fixed points. `D` is found as the common nullspace of the
//! Jacobian-symmetry constraints; a diagonal `D` does not exist for `m > 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::coupled::{g_rows, CoupledState, CouplingMatrix};
use crate::de::{bisect, check_eps, sup_diff, DeConfig, Ensemble};
use crate::error::{arg, Error, Result};
use crate::linalg::{determinant, float_nullspace, RationalEchelon};
use crate::poly::{expand_f, expand_g, MultiPoly, Rational, EXPAND_MAX_M};
use crate::quadrature::GaussLegendre;
use crate::subspace::to_f64;

/// Quadrature order for the line integrals defining `F` and `G`.
pub const QUADRATURE_NODES: usize = 64;

/// Path-independence tolerance used when accepting a constructed `D`.
pub const PATH_TOL: f64 = 1e-8;

/// Erasure probabilities at which the `f`-side constraints are stacked.
pub fn eps_grid() -> Vec<Rational> {
    (1..=9)
        .map(|k| Rational::new(k.into(), 10.into()))
        .collect()
}

/// Symmetric `m × m` matrix with positive entries and nonzero determinant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DMatrix {
    m: usize,
    entries: Vec<Vec<f64>>,
    #[serde(skip)]
    exact: Option<Vec<Vec<Rational>>>,
}

impl DMatrix {
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self> {
        let d = Self::unvalidated(entries)?;
        d.validate()?;
        Ok(d)
    }

    /// Builds a matrix without the positivity/determinant checks. Only the
    /// shape is checked; used for negative controls.
    pub fn unvalidated(entries: Vec<Vec<f64>>) -> Result<Self> {
        let m = entries.len();
        if m == 0 || entries.iter().any(|r| r.len() != m) {
            return Err(arg("D must be a nonempty square matrix"));
        }
        Ok(Self {
            m,
            entries,
            exact: None,
        })
    }

    fn validate(&self) -> Result<()> {
        for a in 0..self.m {
            for b in 0..self.m {
                let v = self.entries[a][b];
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Contract(format!("D[{a}][{b}] = {v} is not positive")));
                }
                if (v - self.entries[b][a]).abs() > 1e-14 * v.abs().max(1.0) {
                    return Err(Error::Contract("D is not symmetric".into()));
                }
            }
        }
        let det = self.determinant();
        if det.abs() <= 1e-10 {
            return Err(Error::Contract(format!("D is singular (det = {det})")));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    /// Exact entries when `D` came from the symbolic construction.
    pub fn exact(&self) -> Option<&[Vec<Rational>]> {
        self.exact.as_deref()
    }

    pub fn determinant(&self) -> f64 {
        determinant(&self.entries)
    }

    /// `v · D`.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|s| (0..self.m).map(|j| v[j] * self.entries[j][s]).sum())
            .collect()
    }

    /// `a · D · bᵀ`.
    pub fn form(&self, a: &[f64], b: &[f64]) -> f64 {
        self.left_mul(a).iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

/// Index map for the upper-triangular unknowns `d_ab`, `a <= b`.
struct Unknowns {
    m: usize,
}

impl Unknowns {
    fn count(&self) -> usize {
        self.m * (self.m + 1) / 2
    }

    fn index(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        a * self.m - a * (a + 1) / 2 + b
    }

    fn to_matrix<T: Clone>(&self, v: &[T]) -> Vec<Vec<T>> {
        (0..self.m)
            .map(|a| (0..self.m).map(|b| v[self.index(a, b)].clone()).collect())
            .collect()
    }
}

/// Symmetry rows of `Jᵀ D` for a vector polynomial, one per (pair, monomial).
fn symbolic_rows(polys: &[MultiPoly<Rational>], unknowns: &Unknowns) -> Vec<Vec<Rational>> {
    use std::collections::BTreeMap;
    let m = unknowns.m;
    let partials: Vec<Vec<MultiPoly<Rational>>> = polys
        .iter()
        .map(|p| (0..m).map(|n| p.partial(n)).collect())
        .collect();
    let mut out = Vec::new();
    for n in 0..m {
        for s in (n + 1)..m {
            let mut rows: BTreeMap<Vec<u32>, Vec<Rational>> = BTreeMap::new();
            let blank = || vec![Rational::from_integer(0.into()); unknowns.count()];
            for (j, parts) in partials.iter().enumerate() {
                for (mono, c) in parts[n].terms() {
                    rows.entry(mono.clone()).or_insert_with(blank)[unknowns.index(j, s)] += c;
                }
                for (mono, c) in parts[s].terms() {
                    rows.entry(mono.clone()).or_insert_with(blank)[unknowns.index(j, n)] -= c;
                }
            }
            out.extend(rows.into_values());
        }
    }
    out
}

fn numeric_rows(jac: &[Vec<f64>], unknowns: &Unknowns) -> Vec<Vec<f64>> {
    let m = unknowns.m;
    let jac_scale = jac.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut out = Vec::new();
    for n in 0..m {
        for s in (n + 1)..m {
            let mut row = vec![0.0; unknowns.count()];
            for j in 0..m {
                row[unknowns.index(j, s)] += jac[j][n];
                row[unknowns.index(j, n)] -= jac[j][s];
            }
            let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if scale > 1e-9 * jac_scale {
                row.iter_mut().for_each(|v| *v /= scale);
                out.push(row);
            }
        }
    }
    out
}

/// How `D` was (or should be) obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DMethod {
    /// Exact rational nullspace of the coefficient-matching system.
    Symbolic,
    /// SVD nullspace of symmetry constraints from exact Jacobians at sample points.
    Numeric,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct DOptions {
    /// `None` picks symbolic when the expansion limits allow it.
    pub method: Option<DMethod>,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DConstruction {
    pub d: DMatrix,
    pub method: DMethod,
    pub nullspace_dim: usize,
    /// Every positive symmetric normalized candidate found in the nullspace.
    pub candidates: Vec<DMatrix>,
    /// Largest relative asymmetry of `Jᵀ D` over the random re-validation points.
    pub max_asymmetry: f64,
    pub path_check: PathCheck,
}

/// Finds `D` such that `f·D` and `g·D` are gradient fields.
pub fn construct_d(ens: &Ensemble, opts: &DOptions) -> Result<DConstruction> {
    let params = ens.params();
    let symbolic_ok = params.m <= EXPAND_MAX_M
        && params.dc <= crate::poly::EXPAND_MAX_DC
        && params.dv <= crate::poly::EXPAND_MAX_DV;
    let method = opts
        .method
        .unwrap_or(if symbolic_ok { DMethod::Symbolic } else { DMethod::Numeric });
    let unknowns = Unknowns { m: params.m };
    let (basis, exact_basis): (Vec<Vec<f64>>, Option<Vec<Vec<Rational>>>) = match method {
        DMethod::Symbolic => {
            let ns = symbolic_nullspace(ens, &unknowns, false)?;
            (
                ns.iter().map(|v| v.iter().map(to_f64).collect()).collect(),
                Some(ns),
            )
        }
        DMethod::Numeric => (numeric_nullspace(ens, &unknowns, opts.seed), None),
    };
    let nullspace_dim = basis.len();
    let mut candidates = Vec::new();
    for (idx, v) in basis.iter().enumerate() {
        let sign = if v.iter().all(|&x| x > 0.0) {
            1.0
        } else if v.iter().all(|&x| x < 0.0) {
            -1.0
        } else {
            continue;
        };
        let max = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let scaled: Vec<f64> = v.iter().map(|x| sign * x / max).collect();
        let mut d = match DMatrix::new(unknowns.to_matrix(&scaled)) {
            Ok(d) => d,
            Err(_) => continue,
        };
        if let Some(eb) = &exact_basis {
            let ev = &eb[idx];
            let emax = ev
                .iter()
                .map(|x| if sign < 0.0 { -x.clone() } else { x.clone() })
                .max()
                .expect("nonempty");
            let exact: Vec<Rational> = ev
                .iter()
                .map(|x| if sign < 0.0 { -x / &emax } else { x / &emax })
                .collect();
            d.entries = unknowns.to_matrix(&exact.iter().map(to_f64).collect::<Vec<_>>());
            d.exact = Some(unknowns.to_matrix(&exact));
        }
        candidates.push(d);
    }
    let Some(d) = candidates.first().cloned() else {
        return Err(Error::Construction {
            reason: format!(
                "no positive symmetric solution in a nullspace of dimension {nullspace_dim}"
            ),
            nullspace: basis,
        });
    };
    let max_asymmetry = revalidate(ens, &d, opts.seed ^ 0x5eed);
    let pot = Potential::new(ens.clone(), d.clone())?;
    let path_check = pot.path_independence(0.5, 10, opts.seed);
    if max_asymmetry > 1e-9 || path_check.max_diff > PATH_TOL {
        return Err(Error::Construction {
            reason: format!(
                "candidate failed validation (asymmetry {max_asymmetry:e}, path difference {:e})",
                path_check.max_diff
            ),
            nullspace: basis,
        });
    }
    Ok(DConstruction {
        d,
        method,
        nullspace_dim,
        candidates,
        max_asymmetry,
        path_check,
    })
}

fn symbolic_nullspace(ens: &Ensemble, unknowns: &Unknowns, diagonal_only: bool) -> Result<Vec<Vec<Rational>>> {
    let params = ens.params();
    let g = expand_g(&params, ens.tensors())?;
    let f = expand_f(&params, ens.tensors())?;
    let keep: Vec<usize> = if diagonal_only {
        (0..unknowns.m).map(|a| unknowns.index(a, a)).collect()
    } else {
        (0..unknowns.count()).collect()
    };
    let mut echelon = RationalEchelon::new(keep.len());
    let mut absorb = |rows: Vec<Vec<Rational>>| {
        for row in rows {
            echelon.push(keep.iter().map(|&c| row[c].clone()).collect());
        }
    };
    absorb(symbolic_rows(&g, unknowns));
    for eps in eps_grid() {
        let fe: Vec<MultiPoly<Rational>> = f.iter().map(|p| p.at_eps(&eps)).collect();
        absorb(symbolic_rows(&fe, unknowns));
    }
    Ok(echelon.nullspace())
}

fn random_tail<R: Rng>(rng: &mut R, m: usize, cap: &[f64]) -> Vec<f64> {
    let mut prev = 1.0f64;
    (0..m)
        .map(|i| {
            let v = rng.random::<f64>() * cap[i];
            prev = prev.min(v);
            prev
        })
        .collect()
}

fn numeric_nullspace(ens: &Ensemble, unknowns: &Unknowns, seed: u64) -> Vec<Vec<f64>> {
    let m = unknowns.m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ones = vec![1.0; m];
    let mut rows = Vec::new();
    for _ in 0..(2 * m + 4) {
        let x = random_tail(&mut rng, m, &ones);
        rows.extend(numeric_rows(&ens.jacobian_g(&x), unknowns));
        for k in 1..=9 {
            let y = random_tail(&mut rng, m, &ones);
            rows.extend(numeric_rows(&ens.jacobian_f(&y, k as f64 / 10.0), unknowns));
        }
    }
    float_nullspace(&rows, unknowns.count(), 1e-10).0
}

/// Largest relative asymmetry of `Jᵀ D` for `f` and `g` at random points and
/// random erasure probabilities.
pub fn revalidate(ens: &Ensemble, d: &DMatrix, seed: u64) -> f64 {
    let m = ens.m();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ones = vec![1.0; m];
    let asym = |jac: &[Vec<f64>]| -> f64 {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for n in 0..m {
            for s in 0..m {
                let ns: f64 = (0..m).map(|j| jac[j][n] * d.entries[j][s]).sum();
                let sn: f64 = (0..m).map(|j| jac[j][s] * d.entries[j][n]).sum();
                worst = worst.max((ns - sn).abs());
                scale = scale.max(ns.abs());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    };
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let eps = rng.random::<f64>();
        let x = random_tail(&mut rng, m, &ones);
        worst = worst.max(asym(&ens.jacobian_g(&x)));
        worst = worst.max(asym(&ens.jacobian_f(&x, eps)));
    }
    worst
}

/// Outcome of restricting `D` to be diagonal.
#[derive(Clone, Debug, Serialize)]
pub struct DiagonalSolve {
    pub feasible: bool,
    pub nullspace_dim: usize,
}

/// Solves the same exact system with the off-diagonal entries forced to zero.
pub fn diagonal_d_solve(ens: &Ensemble) -> Result<DiagonalSolve> {
    let unknowns = Unknowns { m: ens.m() };
    let ns = symbolic_nullspace(ens, &unknowns, true)?;
    Ok(DiagonalSolve {
        feasible: !ns.is_empty(),
        nullspace_dim: ns.len(),
    })
}

/// Agreement between straight-line and staircase line integrals.
#[derive(Clone, Debug, Serialize)]
pub struct PathCheck {
    pub points: usize,
    pub max_diff_f: f64,
    pub max_diff_g: f64,
    pub max_diff: f64,
}

fn finite_or_str<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&crate::report::fmt_sig(*v))
    }
}

/// Nonzero fixed points found at one erasure probability and the energy gap.
#[derive(Clone, Debug, Serialize)]
pub struct PotentialReport {
    pub eps: f64,
    pub fixed_points: Vec<Vec<f64>>,
    #[serde(rename = "U_values")]
    pub u_values: Vec<f64>,
    /// Minimum of `U` over the nonzero fixed points, `+inf` if there are none.
    #[serde(serialize_with = "finite_or_str")]
    pub delta_e: f64,
    /// `U` at the fixed point reached from the channel initialization.
    #[serde(rename = "U_at_fp")]
    pub u_at_channel_fp: Option<f64>,
    /// Minimum of `U` over scanned boundary points outside the zero basin.
    pub boundary_min: Option<f64>,
    pub unconverged_starts: usize,
    pub eps_star: Option<f64>,
    pub eps_bp: Option<f64>,
}

impl PotentialReport {
    pub fn is_infinite(&self) -> bool {
        self.delta_e.is_infinite()
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PotentialThreshold {
    pub eps_star: f64,
    pub eps_bp: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct KBoundReport {
    pub eps: f64,
    pub m: usize,
    /// Largest entrywise |U''| found.
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(serialize_with = "finite_or_str")]
    pub delta_e: f64,
    pub w_min: f64,
    pub norm: &'static str,
    pub argmax: Vec<f64>,
    pub samples: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct KBoundOptions {
    /// Grid resolution per coordinate; `None` picks one from `m`.
    pub grid_per_dim: Option<usize>,
    pub random_points: usize,
    pub seed: u64,
    /// Central-difference step for the Hessian.
    pub step: f64,
}

impl Default for KBoundOptions {
    fn default() -> Self {
        Self {
            grid_per_dim: None,
            random_points: 200,
            seed: 0,
            step: 1e-5,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DeltaEOptions {
    /// Also scan the faces of the feasible box (only applied for `m <= 2`).
    pub scan_boundary: bool,
    pub boundary_grid: usize,
}

impl Default for DeltaEOptions {
    fn default() -> Self {
        Self {
            scan_boundary: true,
            boundary_grid: 11,
        }
    }
}

/// Minimum fixed-point separation for two fixed points to count as distinct.
const DISTINCT_TOL: f64 = 1e-6;

/// `m K / (2 ΔE)`, the coupling width above which zero is the only fixed point.
pub fn coupling_width_bound(m: usize, k: f64, delta_e: f64) -> Result<f64> {
    if delta_e.is_nan() || delta_e <= 0.0 {
        return Err(Error::UndefinedBound { delta_e });
    }
    Ok(m as f64 * k / (2.0 * delta_e))
}

/// The potential of one ensemble for a fixed `D`.
#[derive(Clone, Debug)]
pub struct Potential {
    ens: Ensemble,
    d: DMatrix,
    quad: GaussLegendre,
}

impl Potential {
    pub fn new(ens: Ensemble, d: DMatrix) -> Result<Self> {
        if d.m() != ens.m() {
            return Err(arg("D does not match the ensemble dimension"));
        }
        Ok(Self {
            ens,
            d,
            quad: GaussLegendre::new(QUADRATURE_NODES),
        })
    }

    /// Constructs `D` and wraps it.
    pub fn build(ens: Ensemble, opts: &DOptions) -> Result<(Self, DConstruction)> {
        let c = construct_d(&ens, opts)?;
        Ok((Self::new(ens, c.d.clone())?, c))
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ens
    }

    pub fn d(&self) -> &DMatrix {
        &self.d
    }

    fn m(&self) -> usize {
        self.ens.m()
    }

    /// `F(y; eps) = ∫_0^1 f(t y; eps) D yᵀ dt`.
    pub fn scalar_f(&self, y: &[f64], eps: f64) -> f64 {
        self.quad.integrate(|t| {
            let ty: Vec<f64> = y.iter().map(|v| t * v).collect();
            self.d.form(&self.ens.f_raw(&ty, eps), y)
        })
    }

    /// `G(x) = ∫_0^1 g(t x) D xᵀ dt`.
    pub fn scalar_g(&self, x: &[f64]) -> f64 {
        self.quad.integrate(|t| {
            let tx: Vec<f64> = x.iter().map(|v| t * v).collect();
            self.d.form(&self.ens.g_raw(&tx), x)
        })
    }

    /// Line integral of `field · D` along the axis-parallel path that raises
    /// one coordinate at a time.
    fn staircase<F: Fn(&[f64]) -> Vec<f64>>(&self, x: &[f64], field: F) -> f64 {
        let mut total = 0.0;
        for k in 0..x.len() {
            if x[k] == 0.0 {
                continue;
            }
            total += self.quad.integrate(|t| {
                let mut z: Vec<f64> = x.to_vec();
                z[k] = t * x[k];
                z.iter_mut().skip(k + 1).for_each(|v| *v = 0.0);
                self.d.left_mul(&field(&z))[k] * x[k]
            });
        }
        total
    }

    pub fn scalar_f_staircase(&self, y: &[f64], eps: f64) -> f64 {
        self.staircase(y, |z| self.ens.f_raw(z, eps))
    }

    pub fn scalar_g_staircase(&self, x: &[f64]) -> f64 {
        self.staircase(x, |z| self.ens.g_raw(z))
    }

    /// Compares both integration paths at `points` random points of `[0,1]^m`
    /// with nonincreasing coordinates.
    pub fn path_independence(&self, eps: f64, points: usize, seed: u64) -> PathCheck {
        let m = self.m();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ones = vec![1.0; m];
        let mut max_diff_f = 0.0f64;
        let mut max_diff_g = 0.0f64;
        for _ in 0..points {
            let x = random_tail(&mut rng, m, &ones);
            max_diff_f = max_diff_f.max((self.scalar_f(&x, eps) - self.scalar_f_staircase(&x, eps)).abs());
            max_diff_g = max_diff_g.max((self.scalar_g(&x) - self.scalar_g_staircase(&x)).abs());
        }
        PathCheck {
            points,
            max_diff_f,
            max_diff_g,
            max_diff: max_diff_f.max(max_diff_g),
        }
    }

    /// `U(x; eps) = g(x) D xᵀ - G(x) - F(g(x); eps)`.
    pub fn potential(&self, x: &[f64], eps: f64) -> f64 {
        let gx = self.ens.g_raw(x);
        self.d.form(&gx, x) - self.scalar_g(x) - self.scalar_f(&gx, eps)
    }

    /// `U'(x; eps) = (x - f(g(x); eps)) D G_d(x)`.
    pub fn gradient(&self, x: &[f64], eps: f64) -> Vec<f64> {
        let m = self.m();
        let fx = self.ens.step_raw(x, eps);
        let diff: Vec<f64> = x.iter().zip(&fx).map(|(a, b)| a - b).collect();
        let row = self.d.left_mul(&diff);
        let jac = self.ens.jacobian_g(x);
        (0..m)
            .map(|n| (0..m).map(|j| row[j] * jac[j][n]).sum())
            .collect()
    }

    /// Hessian of `U` by central differences of the analytic gradient.
    pub fn hessian(&self, x: &[f64], eps: f64, step: f64) -> Vec<Vec<f64>> {
        let m = self.m();
        let mut h = vec![vec![0.0; m]; m];
        for b in 0..m {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[b] += step;
            dn[b] -= step;
            let gu = self.gradient(&up, eps);
            let gd = self.gradient(&dn, eps);
            for a in 0..m {
                h[a][b] = (gu[a] - gd[a]) / (2.0 * step);
            }
        }
        h
    }

    /// Energy gap: minimum of `U` over the distinct nonzero DE fixed points
    /// reached from the channel CCDF and from the scaled starts `t·p`.
    pub fn delta_e(&self, eps: f64, cfg: &DeConfig, opts: &DeltaEOptions) -> Result<PotentialReport> {
        check_eps(eps)?;
        let m = self.m();
        let p = self.ens.channel_ccdf(eps);
        let mut fixed_points: Vec<Vec<f64>> = Vec::new();
        let mut unconverged_starts = 0;
        let mut u_at_channel_fp = None;
        for step in (1..=10).rev() {
            let t = step as f64 / 10.0;
            let start: Vec<f64> = p.iter().map(|v| t * v).collect();
            let out = self.ens.de_fixed_point_from(start, eps, cfg)?;
            if out.decoded {
                continue;
            }
            if !out.converged {
                unconverged_starts += 1;
                continue;
            }
            let x = out.state.into_tail();
            if step == 10 {
                u_at_channel_fp = Some(self.potential(&x, eps));
            }
            if fixed_points.iter().all(|q| sup_diff(q, &x) > DISTINCT_TOL) {
                fixed_points.push(x);
            }
        }
        let u_values: Vec<f64> = fixed_points.iter().map(|x| self.potential(x, eps)).collect();
        let delta_e = u_values.iter().copied().fold(f64::INFINITY, f64::min);
        let boundary_min = if opts.scan_boundary && m <= 2 {
            self.scan_boundary(eps, cfg, &p, opts.boundary_grid)?
        } else {
            None
        };
        Ok(PotentialReport {
            eps,
            fixed_points,
            u_values,
            delta_e,
            u_at_channel_fp,
            boundary_min,
            unconverged_starts,
            eps_star: None,
            eps_bp: None,
        })
    }

    fn scan_boundary(&self, eps: f64, cfg: &DeConfig, p: &[f64], grid: usize) -> Result<Option<f64>> {
        let m = self.m();
        let levels = grid.max(2);
        let mut best: Option<f64> = None;
        let total = levels.pow(m as u32);
        for code in 0..total {
            let mut c = code;
            let x: Vec<f64> = (0..m)
                .map(|i| {
                    let k = c % levels;
                    c /= levels;
                    p[i] * k as f64 / (levels - 1) as f64
                })
                .collect();
            let on_face = x.iter().zip(p).any(|(v, cap)| *v == 0.0 || *v == *cap);
            let monotone = x.windows(2).all(|w| w[0] >= w[1]);
            if !on_face || !monotone || x.iter().all(|&v| v == 0.0) {
                continue;
            }
            let out = self.ens.de_fixed_point_from(x.clone(), eps, cfg)?;
            if !out.decoded {
                let u = self.potential(&x, eps);
                best = Some(best.map_or(u, |b: f64| b.min(u)));
            }
        }
        Ok(best)
    }

    /// Largest `eps` in `(eps_bp, 1]` with a nonnegative energy gap.
    pub fn threshold(&self, cfg: &DeConfig) -> Result<PotentialThreshold> {
        let eps_bp = self.ens.bp_threshold(cfg)?;
        let opts = DeltaEOptions {
            scan_boundary: false,
            ..DeltaEOptions::default()
        };
        let eps_star = bisect(eps_bp, 1.0, cfg.bisect_tol, |eps| {
            Ok(self.delta_e(eps, cfg, &opts)?.delta_e >= 0.0)
        })?;
        Ok(PotentialThreshold { eps_star, eps_bp })
    }

    /// `U(X; eps) = Tr(G(X) D Xᵀ) - Σ_i G(x_i) - Σ_t F((A G(X))_t; eps)`.
    pub fn coupled_potential(&self, state: &CoupledState, eps: f64, coupling: &CouplingMatrix) -> Result<f64> {
        check_eps(eps)?;
        if state.positions() != coupling.positions() || state.m() != self.m() {
            return Err(arg("coupled state does not match the coupling matrix"));
        }
        let g = g_rows(&self.ens, state);
        let mut total = 0.0;
        for (x, gx) in state.rows().iter().zip(&g) {
            total += self.d.form(gx, x) - self.scalar_g(x);
        }
        for y in coupling.average(&g) {
            total -= self.scalar_f(&y, eps);
        }
        Ok(total)
    }

    /// Estimates `K = sup ‖U''‖` (entrywise max) over a grid of the feasible
    /// set plus random points, and the resulting minimal coupling width.
    pub fn k_bound(&self, eps: f64, cfg: &DeConfig, opts: &KBoundOptions) -> Result<KBoundReport> {
        check_eps(eps)?;
        let report = self.delta_e(eps, cfg, &DeltaEOptions { scan_boundary: false, ..Default::default() })?;
        let delta_e = report.delta_e;
        if delta_e.is_nan() || delta_e <= 0.0 {
            return Err(Error::UndefinedBound { delta_e });
        }
        let m = self.m();
        let p = self.ens.channel_ccdf(eps);
        let levels = opts.grid_per_dim.unwrap_or(match m {
            1 => 401,
            2 => 41,
            3 => 15,
            _ => 6,
        });
        let mut points: Vec<Vec<f64>> = Vec::new();
        let total = levels.pow(m as u32);
        for code in 0..total {
            let mut c = code;
            let x: Vec<f64> = (0..m)
                .map(|i| {
                    let k = c % levels;
                    c /= levels;
                    p[i] * k as f64 / (levels - 1).max(1) as f64
                })
                .collect();
            if x.windows(2).all(|w| w[0] >= w[1]) {
                points.push(x);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.random_points {
            points.push(random_tail(&mut rng, m, &p));
        }
        let mut k = 0.0f64;
        let mut argmax = vec![0.0; m];
        for x in &points {
            let h = self.hessian(x, eps, opts.step);
            let local = h.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            if local > k {
                k = local;
                argmax = x.clone();
            }
        }
        let w_min = if delta_e.is_infinite() {
            0.0
        } else {
            coupling_width_bound(m, k, delta_e)?
        };
        Ok(KBoundReport {
            eps,
            m,
            k,
            delta_e,
            w_min,
            norm: "entrywise-max",
            argmax,
            samples: points.len(),
        })
    }
}
