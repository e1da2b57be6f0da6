//! Spatially-coupled density evolution in matrix form,
//! `X <- Aᵀ F(A G(X); eps)`.
//!
//! `X` has one CCDF row per check position `1..L+w-1`. `A` averages `w`
//! consecutive check positions into each of the `L` variable positions, and
//! `Aᵀ` spreads the variable-node outputs back. Only the `L` variable
//! positions see the channel; the terminating positions are known, which is
//! what seeds the decoding wave at both ends.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::de::{bisect, check_eps, sup_diff, DeConfig, Ensemble};
use crate::error::{arg, Error, Result};

/// The `L × (L+w-1)` banded averaging matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CouplingMatrix {
    l: usize,
    w: usize,
}

impl CouplingMatrix {
    pub fn new(l: usize, w: usize) -> Result<Self> {
        if l == 0 || w == 0 {
            return Err(arg(format!("L and w must be >= 1, got L={l} w={w}")));
        }
        Ok(Self { l, w })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn w(&self) -> usize {
        self.w
    }

    /// Number of check positions, `L + w - 1`.
    pub fn positions(&self) -> usize {
        self.l + self.w - 1
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        if row < self.l && col >= row && col < row + self.w {
            1.0 / self.w as f64
        } else {
            0.0
        }
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        (0..self.l)
            .map(|r| (0..self.positions()).map(|c| self.entry(r, c)).collect())
            .collect()
    }

    /// `A · rows`, one output row per variable position.
    pub fn average(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = rows[0].len();
        let scale = 1.0 / self.w as f64;
        (0..self.l)
            .map(|t| {
                let mut acc = vec![0.0; m];
                for row in &rows[t..t + self.w] {
                    acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                }
                acc.iter_mut().for_each(|a| *a *= scale);
                acc
            })
            .collect()
    }

    /// `Aᵀ · rows`, mapping `L` rows back to `L + w - 1` positions.
    pub fn spread(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = rows[0].len();
        let scale = 1.0 / self.w as f64;
        let mut out = vec![vec![0.0; m]; self.positions()];
        for (t, row) in rows.iter().enumerate() {
            for target in &mut out[t..t + self.w] {
                target.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            }
        }
        out.iter_mut()
            .for_each(|r| r.iter_mut().for_each(|a| *a *= scale));
        out
    }
}

/// Stack of CCDF rows, one per check position.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoupledState {
    rows: Vec<Vec<f64>>,
}

impl CoupledState {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.first().map(Vec::len).unwrap_or(0);
        if m == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(arg("coupled state rows must be nonempty and of equal length"));
        }
        Ok(Self { rows })
    }

    /// Every position set to the same tail vector.
    pub fn uniform(tail: &[f64], positions: usize) -> Self {
        Self {
            rows: vec![tail.to_vec(); positions],
        }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn positions(&self) -> usize {
        self.rows.len()
    }

    pub fn m(&self) -> usize {
        self.rows[0].len()
    }

    pub fn max_entry(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Sup norm of each row.
    pub fn row_norms(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().copied().fold(0.0, f64::max))
            .collect()
    }

    fn sup_diff(&self, other: &Self) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| sup_diff(a, b))
            .fold(0.0, f64::max)
    }
}

/// Rows at this `m` and above are evaluated in parallel.
const PARALLEL_ROWS_MIN_M: usize = 5;

fn map_rows<F>(rows: &[Vec<f64>], m: usize, f: F) -> Vec<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    if m >= PARALLEL_ROWS_MIN_M {
        rows.par_iter().map(|r| f(r)).collect()
    } else {
        rows.iter().map(|r| f(r)).collect()
    }
}

/// `G(X)` row-wise.
pub fn g_rows(ens: &Ensemble, state: &CoupledState) -> Vec<Vec<f64>> {
    map_rows(state.rows(), ens.m(), |r| ens.g_raw(r))
}

/// One coupled DE step.
pub fn coupled_update(
    state: &CoupledState,
    eps: f64,
    ens: &Ensemble,
    coupling: &CouplingMatrix,
) -> Result<CoupledState> {
    check_eps(eps)?;
    if state.positions() != coupling.positions() || state.m() != ens.m() {
        return Err(arg(format!(
            "state is {}x{}, expected {}x{}",
            state.positions(),
            state.m(),
            coupling.positions(),
            ens.m()
        )));
    }
    Ok(update_unchecked(state, eps, ens, coupling))
}

fn update_unchecked(
    state: &CoupledState,
    eps: f64,
    ens: &Ensemble,
    coupling: &CouplingMatrix,
) -> CoupledState {
    let g = g_rows(ens, state);
    let y = coupling.average(&g);
    let f = map_rows(&y, ens.m(), |r| ens.f_raw(r, eps));
    CoupledState {
        rows: coupling.spread(&f),
    }
}

/// One snapshot row of a decoding profile.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileRecord {
    pub iteration: usize,
    /// 1-based check position.
    pub position: usize,
    pub max_tail: f64,
    pub tail: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoupledOutcome {
    pub state: CoupledState,
    pub iterations: usize,
    pub decoded: bool,
    pub converged: bool,
    pub profile: Vec<ProfileRecord>,
}

/// Options for a coupled run beyond the DE tolerances.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Record every `n`-th iterate (plus the initial and final states).
    pub profile_every: Option<usize>,
    pub deadline: Option<Instant>,
}

/// Runs coupled DE from the all-channel initialization.
pub fn coupled_fixed_point(
    eps: f64,
    ens: &Ensemble,
    coupling: &CouplingMatrix,
    cfg: &DeConfig,
    opts: RunOptions,
) -> Result<CoupledOutcome> {
    check_eps(eps)?;
    cfg.validate()?;
    let mut state = CoupledState::uniform(&ens.channel_ccdf(eps), coupling.positions());
    let mut profile = Vec::new();
    let record = |it: usize, s: &CoupledState, profile: &mut Vec<ProfileRecord>| {
        for (p, row) in s.rows().iter().enumerate() {
            profile.push(ProfileRecord {
                iteration: it,
                position: p + 1,
                max_tail: row.iter().copied().fold(0.0, f64::max),
                tail: row.clone(),
            });
        }
    };
    if opts.profile_every.is_some() {
        record(0, &state, &mut profile);
    }
    let mut iterations = 0;
    let mut converged = false;
    let mut last_recorded = 0;
    while iterations < cfg.max_iters {
        if state.max_entry() < cfg.zero_tol {
            converged = true;
            break;
        }
        if let Some(deadline) = opts.deadline {
            if iterations % 64 == 0 && Instant::now() > deadline {
                return Err(Error::Timeout);
            }
        }
        let next = update_unchecked(&state, eps, ens, coupling);
        iterations += 1;
        let delta = next.sup_diff(&state);
        state = next;
        if let Some(every) = opts.profile_every {
            if iterations % every.max(1) == 0 {
                record(iterations, &state, &mut profile);
                last_recorded = iterations;
            }
        }
        if delta < cfg.fp_tol {
            converged = true;
            break;
        }
    }
    if opts.profile_every.is_some() && last_recorded != iterations {
        record(iterations, &state, &mut profile);
    }
    let decoded = state.max_entry() < cfg.zero_tol;
    Ok(CoupledOutcome {
        state,
        iterations,
        decoded,
        converged,
        profile,
    })
}

/// Largest `eps` for which the coupled chain decodes, by bisection.
pub fn bp_threshold_coupled(
    ens: &Ensemble,
    coupling: &CouplingMatrix,
    cfg: &DeConfig,
    deadline: Option<Instant>,
) -> Result<f64> {
    cfg.validate()?;
    let opts = RunOptions {
        profile_every: None,
        deadline,
    };
    bisect(0.0, 1.0, cfg.bisect_tol, |eps| {
        Ok(coupled_fixed_point(eps, ens, coupling, cfg, opts)?.decoded)
    })
}

/// Writes a profile as CSV: `iteration,position,max_tail,x_1..x_m`.
pub fn write_profile_csv<W: Write>(out: W, m: usize, profile: &[ProfileRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["iteration".to_string(), "position".into(), "max_tail".into()];
    header.extend((1..=m).map(|i| format!("x_{i}")));
    wtr.write_record(&header)?;
    for rec in profile {
        let mut row = vec![
            rec.iteration.to_string(),
            rec.position.to_string(),
            crate::report::fmt_sig(rec.max_tail),
        ];
        row.extend(rec.tail.iter().map(|&v| crate::report::fmt_sig(v)));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::de::EnsembleParams;

    fn ens(dv: usize, dc: usize, m: usize) -> Ensemble {
        Ensemble::new(EnsembleParams::new(dv, dc, m).unwrap()).unwrap()
    }

    #[test]
    fn coupling_matrix_layout() {
        let a = CouplingMatrix::new(3, 2).unwrap();
        assert_eq!(
            a.dense(),
            vec![
                vec![0.5, 0.5, 0.0, 0.0],
                vec![0.0, 0.5, 0.5, 0.0],
                vec![0.0, 0.0, 0.5, 0.5]
            ]
        );
        let id = CouplingMatrix::new(4, 1).unwrap().dense();
        for (r, row) in id.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert_eq!(*v, if r == c { 1.0 } else { 0.0 });
            }
        }
        let wide = CouplingMatrix::new(10, 3).unwrap();
        for row in wide.dense() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert!(CouplingMatrix::new(0, 3).is_err());
        assert!(CouplingMatrix::new(3, 0).is_err());
    }

    #[test]
    fn average_and_spread_match_dense_products() {
        let a = CouplingMatrix::new(5, 3).unwrap();
        let dense = a.dense();
        let rows: Vec<Vec<f64>> = (0..a.positions())
            .map(|i| vec![i as f64 * 0.1, (i * i) as f64 * 0.01])
            .collect();
        let avg = a.average(&rows);
        for t in 0..5 {
            for c in 0..2 {
                let want: f64 = (0..a.positions()).map(|p| dense[t][p] * rows[p][c]).sum();
                assert!((avg[t][c] - want).abs() < 1e-14);
            }
        }
        let back = a.spread(&avg);
        for p in 0..a.positions() {
            for c in 0..2 {
                let want: f64 = (0..5).map(|t| dense[t][p] * avg[t][c]).sum();
                assert!((back[p][c] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_channel_and_zero_state() {
        let e = ens(3, 6, 2);
        let a = CouplingMatrix::new(6, 3).unwrap();
        let s = CoupledState::uniform(&[0.7, 0.3], a.positions());
        assert_eq!(coupled_update(&s, 0.0, &e, &a).unwrap().max_entry(), 0.0);
        let z = CoupledState::uniform(&[0.0, 0.0], a.positions());
        assert_eq!(coupled_update(&z, 0.4, &e, &a).unwrap().max_entry(), 0.0);
        let wrong = CoupledState::uniform(&[0.0, 0.0], 3);
        assert!(coupled_update(&wrong, 0.4, &e, &a).is_err());
    }

    #[test]
    fn profile_records_every_position() {
        let e = ens(3, 6, 1);
        let a = CouplingMatrix::new(8, 2).unwrap();
        let out = coupled_fixed_point(
            0.3,
            &e,
            &a,
            &DeConfig::default(),
            RunOptions {
                profile_every: Some(5),
                deadline: None,
            },
        )
        .unwrap();
        assert!(out.decoded);
        assert_eq!(out.profile.len() % a.positions(), 0);
        assert_eq!(out.profile.last().unwrap().iteration, out.iterations);
        let mut buf = Vec::new();
        write_profile_csv(&mut buf, 1, &out.profile).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,position,max_tail,x_1\n"));
        assert_eq!(text.lines().count(), out.profile.len() + 1);
    }

    #[test]
    fn expired_deadline_times_out() {
        let e = ens(3, 6, 1);
        let a = CouplingMatrix::new(20, 3).unwrap();
        let past = Instant::now() - std::time::Duration::from_secs(1);
        let r = bp_threshold_coupled(&e, &a, &DeConfig::default(), Some(past));
        assert!(matches!(r, Err(Error::Timeout)));
    }
}
