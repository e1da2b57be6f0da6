//! Command-line front end for the `nbsc` binary.
//!
//! Every command writes a single CSV or JSON document, to `--out` or stdout.
//! With `--out`, a `<out>.manifest.json` file records the parameters,
//! tolerances and a content hash of each output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::coupled::{bp_threshold_coupled, coupled_fixed_point, write_profile_csv, CouplingMatrix, RunOptions};
use crate::de::{DeConfig, Ensemble, EnsembleParams};
use crate::error::{arg, Error, Result};
use crate::potential::{construct_d, eps_grid, DOptions, DeltaEOptions, KBoundOptions, Potential};
use crate::report::{fmt_sig, RunManifest};
use crate::subspace::{check_against_oracle, CoeffTensors, ORACLE_MAX_M};
use crate::table::{compute_table, TableSpec};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const ARGUMENT: i32 = 2;
    pub const ORACLE: i32 = 3;
    pub const NON_CONVERGENCE: i32 = 4;
}

#[derive(Parser, Debug)]
#[command(name = "nbsc", version, about = "Density evolution and potential analysis for nonbinary SC-LDPC ensembles on the BEC")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// key=value file presetting tolerances, jobs and seed.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Bisection tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Fixed-point stopping tolerance on the sup-norm step.
    #[arg(long, global = true)]
    pub fp_tol: Option<f64>,
    /// Sup-norm below which a state counts as decoded.
    #[arg(long, global = true)]
    pub zero_tol: Option<f64>,
    /// Iteration cap for a single DE run.
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for sampled starts and random check points.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; a manifest is written beside it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone, Copy, Serialize)]
pub struct EnsembleArgs {
    /// Variable-node degree.
    #[arg(long, default_value_t = 3)]
    pub dv: usize,
    /// Check-node degree.
    #[arg(long, default_value_t = 6)]
    pub dc: usize,
    /// Field extension degree, GF(2^m).
    #[arg(long, default_value_t = 1)]
    pub m: usize,
}

#[derive(Args, Debug, Clone, Copy, Serialize)]
pub struct CouplingArgs {
    /// Number of coupled positions.
    #[arg(long = "L", default_value_t = 100)]
    pub l: usize,
    /// Coupling window width.
    #[arg(long, default_value_t = 3)]
    pub w: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Dump the V and C tensors and compare them with subspace enumeration.
    Coeffs {
        /// Field extension degree, GF(2^m).
        #[arg(long)]
        m: usize,
        /// Skip the enumeration check (required for m > 4).
        #[arg(long)]
        skip_oracle: bool,
    },
    /// Run DE at one erasure probability; coupled when --L is given.
    DeRun {
        #[command(flatten)]
        ens: EnsembleArgs,
        /// Channel erasure probability.
        #[arg(long)]
        eps: f64,
        /// Number of coupled positions; omit for the uncoupled ensemble.
        #[arg(long = "L")]
        l: Option<usize>,
        /// Coupling window width.
        #[arg(long, default_value_t = 3)]
        w: usize,
        /// Export the decoding profile every n iterations (coupled runs).
        #[arg(long)]
        profile_every: Option<usize>,
    },
    /// Uncoupled BP threshold.
    Threshold {
        #[command(flatten)]
        ens: EnsembleArgs,
    },
    /// Coupled BP threshold.
    ThresholdCoupled {
        #[command(flatten)]
        ens: EnsembleArgs,
        #[command(flatten)]
        coupling: CouplingArgs,
        /// Give up after this many seconds.
        #[arg(long)]
        cell_timeout: Option<f64>,
    },
    /// Energy gap sweep plus the potential threshold.
    Potential {
        #[command(flatten)]
        ens: EnsembleArgs,
        /// Comma-separated erasure probabilities (default 0.1,...,0.9).
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
    },
    /// Potential threshold and the matrix D.
    PotentialThreshold {
        #[command(flatten)]
        ens: EnsembleArgs,
    },
    /// Coupled BP thresholds laid out like the reference table.
    Table1 {
        /// Semicolon-separated dv,dc pairs.
        #[arg(long, default_value = "3,6;3,9;3,12;3,15")]
        ensembles: String,
        /// Comma-separated field sizes.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 3])]
        m: Vec<usize>,
        /// Add the m = 5 and m = 8 columns.
        #[arg(long)]
        long: bool,
        #[command(flatten)]
        coupling: CouplingArgs,
        /// Per-cell limit in seconds; cells that hit it print TIMEOUT.
        #[arg(long)]
        cell_timeout: Option<f64>,
        /// Exit with the non-convergence code if any cell times out.
        #[arg(long)]
        strict: bool,
    },
    /// Hessian bound K and the minimal coupling width at one eps.
    KBound {
        #[command(flatten)]
        ens: EnsembleArgs,
        /// Channel erasure probability.
        #[arg(long)]
        eps: f64,
        /// Grid points per dimension (default depends on m).
        #[arg(long)]
        grid: Option<usize>,
        /// Extra random sample points.
        #[arg(long, default_value_t = 200)]
        random_points: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Coeffs { .. } => "coeffs",
            Command::DeRun { .. } => "de-run",
            Command::Threshold { .. } => "threshold",
            Command::ThresholdCoupled { .. } => "threshold-coupled",
            Command::Potential { .. } => "potential",
            Command::PotentialThreshold { .. } => "potential-threshold",
            Command::Table1 { .. } => "table1",
            Command::KBound { .. } => "k-bound",
        }
    }
}

/// Settings after merging the config file with command-line flags.
#[derive(Clone, Debug)]
pub struct Settings {
    pub cfg: DeConfig,
    pub jobs: usize,
    pub seed: u64,
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| arg(format!("config line {}: expected key=value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| arg(format!("config: cannot parse {key}={v}")))
}

pub fn resolve_settings(common: &Common) -> Result<Settings> {
    let mut cfg = DeConfig::default();
    let mut jobs = 0;
    let mut seed = 0;
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)?;
        for (k, v) in parse_config(&text)? {
            match k.as_str() {
                "max_iters" => cfg.max_iters = parse_value(&k, &v)?,
                "fp_tol" => cfg.fp_tol = parse_value(&k, &v)?,
                "zero_tol" => cfg.zero_tol = parse_value(&k, &v)?,
                "bisect_tol" | "tol" => cfg.bisect_tol = parse_value(&k, &v)?,
                "jobs" => jobs = parse_value(&k, &v)?,
                "seed" => seed = parse_value(&k, &v)?,
                _ => return Err(arg(format!("config: unknown key {k}"))),
            }
        }
    }
    if let Some(v) = common.tol {
        cfg.bisect_tol = v;
    }
    if let Some(v) = common.fp_tol {
        cfg.fp_tol = v;
    }
    if let Some(v) = common.zero_tol {
        cfg.zero_tol = v;
    }
    if let Some(v) = common.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = common.jobs {
        jobs = v;
    }
    if let Some(v) = common.seed {
        seed = v;
    }
    cfg.validate()?;
    Ok(Settings { cfg, jobs, seed })
}

/// A finished command: the document to emit and the exit code.
pub struct Output {
    pub bytes: Vec<u8>,
    pub code: i32,
    pub manifest: RunManifest,
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(row)?;
    }
    wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn ensemble(args: &EnsembleArgs) -> Result<Ensemble> {
    Ensemble::new(EnsembleParams::new(args.dv, args.dc, args.m)?)
}

fn timeout(secs: Option<f64>) -> Result<Option<Duration>> {
    secs.map(|s| Duration::try_from_secs_f64(s).map_err(|_| arg(format!("invalid timeout {s}"))))
        .transpose()
}

fn parse_ensembles(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (a, b) = p
                .split_once(',')
                .ok_or_else(|| arg(format!("ensemble {p:?} is not dv,dc")))?;
            let dv = a.trim().parse().map_err(|_| arg(format!("bad dv in {p:?}")))?;
            let dc = b.trim().parse().map_err(|_| arg(format!("bad dc in {p:?}")))?;
            Ok((dv, dc))
        })
        .collect()
}

/// Runs one parsed command. The caller is responsible for the thread pool.
pub fn execute(cli: &Cli, settings: &Settings) -> Result<Output> {
    let cfg = settings.cfg;
    let mut manifest = RunManifest::new(cli.command.name(), cfg, settings.seed, rayon::current_num_threads());
    let format = cli.common.format;
    let fmt = |default: Format| format.unwrap_or(default);
    let mut code = exit::SUCCESS;
    let bytes = match &cli.command {
        Command::Coeffs { m, skip_oracle } => {
            manifest.param("m", m);
            manifest.param("skip_oracle", skip_oracle);
            if fmt(Format::Json) != Format::Json {
                return Err(arg("coeffs only supports --format json"));
            }
            if !skip_oracle && *m > ORACLE_MAX_M {
                return Err(Error::UnsupportedScale {
                    what: "enumeration check (pass --skip-oracle)",
                    limit: ORACLE_MAX_M,
                    got: *m,
                });
            }
            let tensors = CoeffTensors::new(*m)?;
            let oracle = if *skip_oracle {
                None
            } else {
                Some(check_against_oracle(&tensors)?)
            };
            if oracle.as_ref().is_some_and(|o| !o.passed()) {
                code = exit::ORACLE;
            }
            #[derive(Serialize)]
            struct Doc {
                #[serde(flatten)]
                tensors: crate::subspace::CoeffDump,
                oracle: Option<crate::subspace::OracleCheck>,
            }
            json_bytes(&Doc {
                tensors: tensors.dump(),
                oracle,
            })?
        }
        Command::DeRun {
            ens: e,
            eps,
            l,
            w,
            profile_every,
        } => {
            manifest.param("ensemble", e);
            manifest.param("eps", eps);
            manifest.param("L", l);
            manifest.param("w", w);
            manifest.param("profile_every", profile_every);
            let ens = ensemble(e)?;
            match l {
                None => {
                    let out = ens.de_fixed_point(*eps, &cfg)?;
                    if !out.converged {
                        code = exit::NON_CONVERGENCE;
                    }
                    match fmt(Format::Csv) {
                        Format::Json => json_bytes(&out)?,
                        Format::Csv => {
                            let mut header = vec!["eps", "iterations", "decoded", "converged"];
                            let names: Vec<String> = (1..=e.m).map(|i| format!("x_{i}")).collect();
                            header.extend(names.iter().map(String::as_str));
                            let mut row = vec![
                                fmt_sig(*eps),
                                out.iterations.to_string(),
                                out.decoded.to_string(),
                                out.converged.to_string(),
                            ];
                            row.extend(out.state.tail().iter().map(|&v| fmt_sig(v)));
                            csv_bytes(&header, &[row])?
                        }
                    }
                }
                Some(l) => {
                    let coupling = CouplingMatrix::new(*l, *w)?;
                    let opts = RunOptions {
                        profile_every: Some(profile_every.unwrap_or(usize::MAX)),
                        deadline: None,
                    };
                    let out = coupled_fixed_point(*eps, &ens, &coupling, &cfg, opts)?;
                    if !out.converged {
                        code = exit::NON_CONVERGENCE;
                    }
                    match fmt(Format::Csv) {
                        Format::Json => json_bytes(&out)?,
                        Format::Csv => {
                            let mut buf = Vec::new();
                            write_profile_csv(&mut buf, e.m, &out.profile)?;
                            buf
                        }
                    }
                }
            }
        }
        Command::Threshold { ens: e } => {
            manifest.param("ensemble", e);
            let eps_bp = ensemble(e)?.bp_threshold(&cfg)?;
            threshold_doc(fmt(Format::Csv), e, None, eps_bp)?
        }
        Command::ThresholdCoupled {
            ens: e,
            coupling: c,
            cell_timeout,
        } => {
            manifest.param("ensemble", e);
            manifest.param("coupling", c);
            manifest.param("cell_timeout", cell_timeout);
            let ens = ensemble(e)?;
            let coupling = CouplingMatrix::new(c.l, c.w)?;
            let deadline = timeout(*cell_timeout)?.map(|d| Instant::now() + d);
            let eps_bp = bp_threshold_coupled(&ens, &coupling, &cfg, deadline)?;
            threshold_doc(fmt(Format::Csv), e, Some(c), eps_bp)?
        }
        Command::Potential { ens: e, eps } => {
            let grid: Vec<f64> = if eps.is_empty() {
                eps_grid().iter().map(crate::subspace::to_f64).collect()
            } else {
                eps.clone()
            };
            manifest.param("ensemble", e);
            manifest.param("eps", &grid);
            let opts = DOptions {
                method: None,
                seed: settings.seed,
            };
            let (pot, construction) = Potential::build(ensemble(e)?, &opts)?;
            let th = pot.threshold(&cfg)?;
            let mut reports = grid
                .par_iter()
                .map(|&eps| pot.delta_e(eps, &cfg, &DeltaEOptions::default()))
                .collect::<Result<Vec<_>>>()?;
            for r in &mut reports {
                r.eps_star = Some(th.eps_star);
                r.eps_bp = Some(th.eps_bp);
            }
            match fmt(Format::Csv) {
                Format::Json => {
                    #[derive(Serialize)]
                    struct Doc<'a> {
                        ensemble: &'a EnsembleArgs,
                        #[serde(rename = "D")]
                        d: &'a crate::potential::DConstruction,
                        eps_star: f64,
                        eps_bp: f64,
                        reports: Vec<crate::potential::PotentialReport>,
                    }
                    json_bytes(&Doc {
                        ensemble: e,
                        d: &construction,
                        eps_star: th.eps_star,
                        eps_bp: th.eps_bp,
                        reports,
                    })?
                }
                Format::Csv => {
                    let rows: Vec<Vec<String>> = reports
                        .iter()
                        .map(|r| {
                            vec![
                                fmt_sig(r.eps),
                                fmt_sig(r.delta_e),
                                r.u_at_channel_fp.map(fmt_sig).unwrap_or_default(),
                                fmt_sig(th.eps_star),
                                fmt_sig(th.eps_bp),
                            ]
                        })
                        .collect();
                    csv_bytes(&["eps", "delta_E", "U_at_fp", "eps_star", "eps_bp"], &rows)?
                }
            }
        }
        Command::PotentialThreshold { ens: e } => {
            manifest.param("ensemble", e);
            let ens = ensemble(e)?;
            let construction = construct_d(
                &ens,
                &DOptions {
                    method: None,
                    seed: settings.seed,
                },
            )?;
            let pot = Potential::new(ens, construction.d.clone())?;
            let th = pot.threshold(&cfg)?;
            match fmt(Format::Csv) {
                Format::Json => {
                    #[derive(Serialize)]
                    struct Doc<'a> {
                        ensemble: &'a EnsembleArgs,
                        eps_star: f64,
                        eps_bp: f64,
                        #[serde(rename = "D")]
                        d: &'a crate::potential::DConstruction,
                    }
                    json_bytes(&Doc {
                        ensemble: e,
                        eps_star: th.eps_star,
                        eps_bp: th.eps_bp,
                        d: &construction,
                    })?
                }
                Format::Csv => csv_bytes(
                    &["dv", "dc", "m", "eps_star", "eps_bp"],
                    &[vec![
                        e.dv.to_string(),
                        e.dc.to_string(),
                        e.m.to_string(),
                        fmt_sig(th.eps_star),
                        fmt_sig(th.eps_bp),
                    ]],
                )?,
            }
        }
        Command::Table1 {
            ensembles,
            m,
            long,
            coupling: c,
            cell_timeout,
            strict,
        } => {
            let mut m_list = m.clone();
            if *long {
                m_list.extend([5, 8]);
            }
            m_list.sort_unstable();
            m_list.dedup();
            let spec = TableSpec {
                ensembles: parse_ensembles(ensembles)?,
                m_list,
                l: c.l,
                w: c.w,
                cfg,
                cell_timeout: timeout(*cell_timeout)?,
            };
            manifest.param("ensembles", &spec.ensembles);
            manifest.param("m", &spec.m_list);
            manifest.param("coupling", c);
            manifest.param("cell_timeout", cell_timeout);
            let table = compute_table(&spec)?;
            if *strict && table.has_timeouts() {
                code = exit::NON_CONVERGENCE;
            }
            match fmt(Format::Csv) {
                Format::Json => json_bytes(&table)?,
                Format::Csv => table.to_csv()?,
            }
        }
        Command::KBound {
            ens: e,
            eps,
            grid,
            random_points,
        } => {
            manifest.param("ensemble", e);
            manifest.param("eps", eps);
            manifest.param("grid", grid);
            manifest.param("random_points", random_points);
            let ens = ensemble(e)?;
            let construction = construct_d(
                &ens,
                &DOptions {
                    method: None,
                    seed: settings.seed,
                },
            )?;
            let pot = Potential::new(ens, construction.d)?;
            let report = pot.k_bound(
                *eps,
                &cfg,
                &KBoundOptions {
                    grid_per_dim: *grid,
                    random_points: *random_points,
                    seed: settings.seed,
                    ..KBoundOptions::default()
                },
            )?;
            match fmt(Format::Json) {
                Format::Json => json_bytes(&report)?,
                Format::Csv => csv_bytes(
                    &["eps", "K", "delta_E", "w_min", "norm"],
                    &[vec![
                        fmt_sig(report.eps),
                        fmt_sig(report.k),
                        fmt_sig(report.delta_e),
                        fmt_sig(report.w_min),
                        report.norm.to_string(),
                    ]],
                )?,
            }
        }
    };
    Ok(Output { bytes, code, manifest })
}

fn threshold_doc(format: Format, e: &EnsembleArgs, c: Option<&CouplingArgs>, eps_bp: f64) -> Result<Vec<u8>> {
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                ensemble: &'a EnsembleArgs,
                coupling: Option<&'a CouplingArgs>,
                eps_bp: f64,
            }
            json_bytes(&Doc {
                ensemble: e,
                coupling: c,
                eps_bp,
            })
        }
        Format::Csv => {
            let mut header = vec!["dv", "dc", "m"];
            let mut row = vec![e.dv.to_string(), e.dc.to_string(), e.m.to_string()];
            if let Some(c) = c {
                header.extend(["L", "w"]);
                row.extend([c.l.to_string(), c.w.to_string()]);
            }
            header.push("eps_bp");
            row.push(fmt_sig(eps_bp));
            csv_bytes(&header, &[row])
        }
    }
}

/// Maps an error to the documented exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Argument(_) | Error::UnsupportedScale { .. } | Error::Contract(_) | Error::UndefinedBound { .. } => {
            exit::ARGUMENT
        }
        Error::Construction { .. } => exit::ORACLE,
        Error::Timeout => exit::NON_CONVERGENCE,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => exit::FAILURE,
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Parses, runs and writes outputs; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let started = Instant::now();
    let result = resolve_settings(&cli.common).and_then(|settings| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(settings.jobs)
            .build()
            .map_err(|e| arg(format!("cannot start {} workers: {e}", settings.jobs)))?;
        let mut output = pool.install(|| execute(&cli, &settings))?;
        output.manifest.jobs = pool.current_num_threads();
        match &cli.common.out {
            Some(path) => {
                fs::write(path, &output.bytes)?;
                output.manifest.add_output(&path.to_string_lossy(), &output.bytes);
                output.manifest.wall_clock_secs = started.elapsed().as_secs_f64();
                fs::write(manifest_path(path), json_bytes(&output.manifest)?)?;
            }
            None => {
                use std::io::Write;
                std::io::stdout().write_all(&output.bytes)?;
            }
        }
        Ok(output.code)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("nbsc: {e}");
            exit_code(&e)
        }
    }
}
