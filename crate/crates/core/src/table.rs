//! Coupled BP threshold table over several regular ensembles and field sizes.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::coupled::{bp_threshold_coupled, CouplingMatrix};
use crate::de::{DeConfig, Ensemble, EnsembleParams};
use crate::error::{Error, Result};
use crate::report::fmt_sig;
use crate::subspace::CoeffTensors;

/// Published reference values for one ensemble row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub dv: usize,
    pub dc: usize,
    /// Coupled BP thresholds for `m = 1, 3, 5, 8`.
    pub eps_bp: [f64; 4],
    pub eps_map: f64,
    pub shannon_gap: f64,
}

/// Field sizes of the reference columns.
pub const REFERENCE_M: [usize; 4] = [1, 3, 5, 8];

pub const REFERENCE: [ReferenceRow; 4] = [
    ReferenceRow {
        dv: 3,
        dc: 6,
        eps_bp: [0.4880, 0.4978, 0.4995, 0.4998],
        eps_map: 0.4999,
        shannon_gap: 0.0002,
    },
    ReferenceRow {
        dv: 3,
        dc: 9,
        eps_bp: [0.3196, 0.3307, 0.3328, 0.3331],
        eps_map: 0.3332,
        shannon_gap: 0.0002,
    },
    ReferenceRow {
        dv: 3,
        dc: 12,
        eps_bp: [0.2372, 0.2476, 0.2495, 0.2497],
        eps_map: 0.2499,
        shannon_gap: 0.0003,
    },
    ReferenceRow {
        dv: 3,
        dc: 15,
        eps_bp: [0.1886, 0.1978, 0.1995, 0.1996],
        eps_map: 0.1999,
        shannon_gap: 0.0004,
    },
];

/// Reference coupled threshold for `(dv, dc, m)`, if tabulated.
pub fn reference_bp(dv: usize, dc: usize, m: usize) -> Option<f64> {
    let col = REFERENCE_M.iter().position(|&c| c == m)?;
    REFERENCE
        .iter()
        .find(|r| r.dv == dv && r.dc == dc)
        .map(|r| r.eps_bp[col])
}

/// Reference MAP threshold for `(dv, dc)`, if tabulated.
pub fn reference_map(dv: usize, dc: usize) -> Option<f64> {
    REFERENCE
        .iter()
        .find(|r| r.dv == dv && r.dc == dc)
        .map(|r| r.eps_map)
}

#[derive(Clone, Debug)]
pub struct TableSpec {
    pub ensembles: Vec<(usize, usize)>,
    pub m_list: Vec<usize>,
    pub l: usize,
    pub w: usize,
    pub cfg: DeConfig,
    pub cell_timeout: Option<Duration>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "value", rename_all = "lowercase")]
pub enum CellValue {
    Threshold(f64),
    Timeout,
}

impl CellValue {
    pub fn threshold(&self) -> Option<f64> {
        match self {
            CellValue::Threshold(v) => Some(*v),
            CellValue::Timeout => None,
        }
    }

    pub fn to_csv(&self) -> String {
        match self {
            CellValue::Threshold(v) => fmt_sig(*v),
            CellValue::Timeout => "TIMEOUT".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TableRow {
    pub dv: usize,
    pub dc: usize,
    pub rate: f64,
    /// One cell per entry of `TableSpec::m_list`, in the same order.
    pub cells: Vec<CellValue>,
    /// `rate` minus the threshold at the largest computed `m`.
    pub shannon_gap: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Table {
    pub m_list: Vec<usize>,
    #[serde(rename = "L")]
    pub l: usize,
    pub w: usize,
    pub rows: Vec<TableRow>,
}

/// Computes one coupled threshold per (ensemble, m) cell on the current
/// rayon pool. A cell that exceeds its timeout becomes `Timeout`.
pub fn compute_table(spec: &TableSpec) -> Result<Table> {
    let coupling = CouplingMatrix::new(spec.l, spec.w)?;
    let mut tensors = Vec::new();
    for &m in &spec.m_list {
        tensors.push(Arc::new(CoeffTensors::new(m)?));
    }
    let mut jobs = Vec::new();
    for &(dv, dc) in &spec.ensembles {
        let params: Vec<EnsembleParams> = spec
            .m_list
            .iter()
            .map(|&m| EnsembleParams::new(dv, dc, m))
            .collect::<Result<_>>()?;
        jobs.extend(params.into_iter().zip(tensors.iter().cloned()));
    }
    let cells: Vec<CellValue> = jobs
        .into_par_iter()
        .map(|(params, t)| {
            let ens = Ensemble::with_tensors(params, t)?;
            let deadline = spec.cell_timeout.map(|d| Instant::now() + d);
            match bp_threshold_coupled(&ens, &coupling, &spec.cfg, deadline) {
                Ok(v) => Ok(CellValue::Threshold(v)),
                Err(Error::Timeout) => Ok(CellValue::Timeout),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let width = spec.m_list.len();
    let rows = spec
        .ensembles
        .iter()
        .zip(cells.chunks(width.max(1)))
        .map(|(&(dv, dc), cells)| {
            let rate = 1.0 - dv as f64 / dc as f64;
            let shannon_gap = cells.last().and_then(CellValue::threshold).map(|e| rate - e);
            TableRow {
                dv,
                dc,
                rate,
                cells: cells.to_vec(),
                shannon_gap,
            }
        })
        .collect();
    Ok(Table {
        m_list: spec.m_list.clone(),
        l: spec.l,
        w: spec.w,
        rows,
    })
}

impl Table {
    /// CSV with header `dv,dc,rate,eps_bp_m<m>...,shannon_gap`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["dv".to_string(), "dc".into(), "rate".into()];
        header.extend(self.m_list.iter().map(|m| format!("eps_bp_m{m}")));
        header.push("shannon_gap".into());
        wtr.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.dv.to_string(), row.dc.to_string(), fmt_sig(row.rate)];
            rec.extend(row.cells.iter().map(CellValue::to_csv));
            rec.push(row.shannon_gap.map(fmt_sig).unwrap_or_else(|| "TIMEOUT".into()));
            wtr.write_record(&rec)?;
        }
        wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn has_timeouts(&self) -> bool {
        self.rows
            .iter()
            .flat_map(|r| &r.cells)
            .any(|c| matches!(c, CellValue::Timeout))
    }
}
