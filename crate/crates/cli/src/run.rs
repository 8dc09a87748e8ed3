//! Experiment execution and plot regeneration.

use std::fmt;
use std::io;
use std::path::Path;

use stochlab::cell::{
    defect_coefficients_with, sqs_auxiliary_for_law, CellSolver, PreconditionerKind, SolverOptions,
};
use stochlab::estimators::{
    antithetic_estimate_with, compare_strategies, control_variate_estimate_with, mc_estimate_with,
    sqs_estimate_with, write_reports_csv, EstimatorReport, Sampler, SqsMode, Strategy,
};
use stochlab::field::{realize_field, sample_configuration, FieldLaw};
use stochlab::Entry;
use stochlab_msfem::{
    baseline_solve, build_perforations, compute_errors, reference_solve, CoarseMesh, PerforationSpec,
    SolveOptions,
};

use crate::archive::{Archive, Manifest};
use crate::config::{validate, Diagnostic, ExperimentConfig, Kind, Level};
use crate::svg::{Plot, Series};

pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const REPORTS_CSV: &str = "reports.csv";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const MSFEM_CSV: &str = "msfem.csv";
pub const ROBUSTNESS_CSV: &str = "robustness.csv";

pub const MSFEM_CSV_HEADER: &str = "method,H,geometry,with_bubbles,l2_rel,h1_rel,dof,solves";
pub const COMPARISON_CSV_HEADER: &str = "n,r,strategy,entry,factor,bias,combined_ci,consistent";
pub const ROBUSTNESS_CSV_HEADER: &str =
    "method,H,with_bubbles,l2_test1,l2_test2,h1_test1,h1_test2,l2_degradation,h1_degradation";

#[derive(Debug)]
pub enum RunError {
    Config(Vec<Diagnostic>),
    Io(io::Error),
    /// A solver failed; partial results and a failed manifest were written.
    Solver(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(d) => {
                for (k, x) in d.iter().filter(|x| x.level == Level::Error).enumerate() {
                    if k > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
            RunError::Io(e) => write!(f, "i/o error: {e}"),
            RunError::Solver(e) => write!(f, "solver error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

/// Seed of a strategy's samples: the run seed offset by the strategy's position.
pub fn strategy_seed(seed: u64, s: Strategy) -> u64 {
    let k = Strategy::ALL.iter().position(|x| *x == s).unwrap_or(0) as u64;
    seed.wrapping_add(k)
}

/// Configuration as archived: defaults filled in, output directory dropped.
pub fn snapshot(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.out = None;
    toml::to_string(&c).expect("configuration serializes")
}

/// Validates, executes and archives `cfg` into `out`.
pub fn run(cfg: ExperimentConfig, out: &Path) -> Result<Manifest, RunError> {
    let cfg = cfg.with_defaults();
    let diags = validate(&cfg);
    if diags.iter().any(|d| d.level == Level::Error) {
        return Err(RunError::Config(diags));
    }
    let mut archive = Archive::create(out)?;
    for d in &diags {
        archive.warn(format!("{}: {}", d.key, d.message));
    }
    archive.write(CONFIG_SNAPSHOT, snapshot(&cfg).as_bytes())?;
    let kind = toml::Value::try_from(cfg.kind)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default();
    let outcome = match cfg.kind {
        Kind::Homogenize | Kind::VrCompare => run_estimation(&cfg, &mut archive),
        Kind::Msfem | Kind::MsfemRobustness => run_msfem(&cfg, &mut archive),
    };
    match outcome {
        Ok(()) => Ok(archive.finish(&kind, cfg.seed, None)?),
        Err(Failure::Io(e)) => {
            archive.finish(&kind, cfg.seed, Some(e.to_string()))?;
            Err(RunError::Io(e))
        }
        Err(Failure::Solver(e)) => {
            archive.finish(&kind, cfg.seed, Some(e.clone()))?;
            Err(RunError::Solver(e))
        }
    }
}

enum Failure {
    Io(io::Error),
    Solver(String),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

fn solver_failure(e: impl fmt::Display) -> Failure {
    Failure::Solver(e.to_string())
}

fn run_estimation(cfg: &ExperimentConfig, archive: &mut Archive) -> Result<(), Failure> {
    let e = cfg.estimation.as_ref().expect("validated");
    let law = cfg.law().expect("validated");
    let opts = SolverOptions {
        rel_tol: e.tolerance,
        preconditioner: if e.preconditioner == "jacobi" {
            PreconditionerKind::Jacobi
        } else {
            PreconditionerKind::Fft
        },
        ..SolverOptions::default()
    };
    let strategies = if cfg.kind == Kind::Homogenize {
        vec![Strategy::MC]
    } else {
        cfg.strategies()
    };
    let mut reports: Vec<EstimatorReport> = Vec::new();
    let mut comparison = String::from(COMPARISON_CSV_HEADER);
    comparison.push('\n');
    let mut failure = None;
    'sizes: for &n in &e.n {
        let sampler = match Sampler::with_options(n, e.r, opts) {
            Ok(s) => s,
            Err(err) => {
                failure = Some(solver_failure(format!("n = {n}: {err}")));
                break;
            }
        };
        if e.dump_correctors {
            if let Err(err) = dump_correctors(&law, sampler.solver(), cfg.seed, archive) {
                failure = Some(err);
                break;
            }
        }
        let mut at_n = Vec::new();
        for &s in &strategies {
            match estimate(s, &sampler, &law, e.m, e.sqs_pool, strategy_seed(cfg.seed, s)) {
                Ok(rep) => {
                    for w in &rep.warnings {
                        archive.warn(format!("{s} at n = {n}: {w}"));
                    }
                    at_n.push(rep);
                }
                Err(err) => {
                    reports.extend(at_n);
                    failure = Some(solver_failure(format!("{s} at n = {n}: {err}")));
                    break 'sizes;
                }
            }
        }
        if cfg.kind == Kind::VrCompare {
            match compare_strategies(&at_n) {
                Ok(t) => {
                    for row in &t.rows {
                        comparison.push_str(&format!(
                            "{},{},{},{},{},{},{},{}\n",
                            t.n,
                            t.r,
                            row.strategy,
                            row.entry,
                            row.factor,
                            row.bias,
                            row.combined_ci,
                            row.consistent()
                        ));
                        if row.strategy != Strategy::MC && !row.consistent() {
                            archive.warn(format!(
                                "{} at n = {n}: mean of {} differs from MC by more than the combined CI",
                                row.strategy, row.entry
                            ));
                        }
                    }
                }
                Err(err) => failure = Some(solver_failure(err)),
            }
        }
        reports.extend(at_n);
        if failure.is_some() {
            break;
        }
    }
    let mut csv = Vec::new();
    write_reports_csv(&reports, &mut csv)?;
    archive.write(REPORTS_CSV, &csv)?;
    if cfg.kind == Kind::VrCompare {
        archive.write(COMPARISON_CSV, comparison.as_bytes())?;
    }
    if !reports.is_empty() {
        let plot = estimation_plot(std::str::from_utf8(&csv).expect("utf-8"), Entry::A11).map_err(solver_failure)?;
        archive.write(&format!("plot_{}.svg", Entry::A11), plot.as_bytes())?;
    }
    failure.map_or(Ok(()), Err)
}

fn estimate(s: Strategy, sampler: &Sampler, law: &FieldLaw, m: usize, pool: usize, seed: u64) -> stochlab::Result<EstimatorReport> {
    match s {
        Strategy::MC => mc_estimate_with(sampler, law, m, seed),
        Strategy::Antithetic => antithetic_estimate_with(sampler, law, m, seed),
        Strategy::ControlVariate1 | Strategy::ControlVariate2 => {
            let order = if s == Strategy::ControlVariate1 { 1 } else { 2 };
            let d = defect_coefficients_with(sampler.solver(), law, order)?;
            control_variate_estimate_with(sampler, law, m, order, seed, &d)
        }
        Strategy::Sqs1 | Strategy::Sqs2 => {
            let aux = sqs_auxiliary_for_law(law, sampler.n(), sampler.r())?;
            let mode = if s == Strategy::Sqs1 { SqsMode::Exact1 } else { SqsMode::Ranked2 };
            sqs_estimate_with(sampler, law, m, seed, mode, pool, &aux)
        }
    }
}

fn dump_correctors(law: &FieldLaw, solver: &CellSolver, seed: u64, archive: &mut Archive) -> Result<(), Failure> {
    let n = solver.grid().n;
    let c = sample_configuration(law, n, seed, 0).map_err(solver_failure)?;
    let field = realize_field(law, &c).map_err(solver_failure)?;
    let w = solver.correctors(&field).map_err(solver_failure)?;
    for (k, sol) in w.iter().enumerate() {
        let mut buf = Vec::new();
        sol.write_csv(&mut buf)?;
        archive.write(&format!("corrector_n{n}_p{}.csv", k + 1), &buf)?;
    }
    Ok(())
}

fn geometry_id(spec: &PerforationSpec) -> String {
    match spec {
        PerforationSpec::None => "none".into(),
        PerforationSpec::PeriodicDiscs { epsilon, radius_factor } => {
            format!("periodic-discs eps={epsilon} radius={radius_factor}eps")
        }
        PerforationSpec::ShiftedPeriodicDiscs {
            epsilon,
            radius_factor,
            shift,
        } => format!(
            "shifted-discs eps={epsilon} radius={radius_factor}eps shift=({} {})",
            shift[0], shift[1]
        ),
        PerforationSpec::RandomRectangles { count, seed, .. } => format!("random-rectangles count={count} seed={seed}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
struct MsfemRow {
    method: String,
    h: f64,
    geometry: String,
    with_bubbles: bool,
    l2: f64,
    h1: f64,
    dof: usize,
    solves: usize,
}

fn run_msfem(cfg: &ExperimentConfig, archive: &mut Archive) -> Result<(), Failure> {
    let m = cfg.msfem.as_ref().expect("validated");
    let spec = cfg.perforation_spec().expect("validated");
    let source = cfg.source().expect("validated");
    let opts = SolveOptions {
        penalty_scale: m.penalty_scale,
        rel_tol: m.tolerance,
        strict: cfg.strict,
    };
    let mut specs = vec![spec.clone()];
    if cfg.kind == Kind::MsfemRobustness {
        if let PerforationSpec::PeriodicDiscs { epsilon, radius_factor } = spec {
            specs.push(PerforationSpec::ShiftedPeriodicDiscs {
                epsilon,
                radius_factor,
                shift: [0.5 * epsilon, 0.5 * epsilon],
            });
        }
    }
    let mut rows: Vec<MsfemRow> = Vec::new();
    let mut failure = None;
    'geometries: for spec in &specs {
        let gid = geometry_id(spec);
        let perf = match build_perforations(spec) {
            Ok(p) => p,
            Err(e) => {
                failure = Some(solver_failure(format!("{gid}: {e}")));
                break;
            }
        };
        let reference = match reference_solve(&perf, &source, m.fine_n, opts) {
            Ok(u) => u,
            Err(e) => {
                failure = Some(solver_failure(format!("reference for {gid}: {e}")));
                break;
            }
        };
        for w in &reference.warnings {
            archive.warn(format!("reference for {gid}: {w}"));
        }
        for nc in cfg.coarse_counts() {
            let mesh = CoarseMesh::new(nc).map_err(solver_failure)?;
            for method in cfg.methods() {
                for &b in &m.bubbles {
                    let tag = format!("{} H=1/{nc} bubbles={b} on {gid}", method.label());
                    let u = match baseline_solve(mesh, &perf, &source, method, b, m.fine_n / nc, opts) {
                        Ok(u) => u,
                        Err(e) => {
                            failure = Some(solver_failure(format!("{tag}: {e}")));
                            break 'geometries;
                        }
                    };
                    for w in &u.warnings {
                        archive.warn(format!("{tag}: {w}"));
                    }
                    let (l2, h1) = compute_errors(&u, &reference).map_err(solver_failure)?;
                    rows.push(MsfemRow {
                        method: method.label().into(),
                        h: 1.0 / nc as f64,
                        geometry: gid.clone(),
                        with_bubbles: b,
                        l2,
                        h1,
                        dof: u.dim(),
                        solves: u.solves,
                    });
                }
            }
        }
    }
    let csv = msfem_csv(&rows)?;
    archive.write(MSFEM_CSV, csv.as_bytes())?;
    if cfg.kind == Kind::MsfemRobustness && failure.is_none() {
        archive.write(ROBUSTNESS_CSV, robustness_csv(&rows, &specs).as_bytes())?;
    }
    if !rows.is_empty() {
        for (name, plot) in msfem_plots(&csv).map_err(solver_failure)? {
            archive.write(&name, plot.as_bytes())?;
        }
    }
    failure.map_or(Ok(()), Err)
}

fn msfem_csv(rows: &[MsfemRow]) -> io::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MSFEM_CSV_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.h.to_string(),
            r.geometry.clone(),
            r.with_bubbles.to_string(),
            r.l2.to_string(),
            r.h1.to_string(),
            r.dof.to_string(),
            r.solves.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

fn robustness_csv(rows: &[MsfemRow], specs: &[PerforationSpec]) -> String {
    let (g1, g2) = (geometry_id(&specs[0]), geometry_id(&specs[1]));
    let mut out = String::from(ROBUSTNESS_CSV_HEADER);
    out.push('\n');
    for a in rows.iter().filter(|r| r.geometry == g1) {
        if let Some(b) = rows
            .iter()
            .find(|r| r.geometry == g2 && r.method == a.method && r.h == a.h && r.with_bubbles == a.with_bubbles)
        {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                a.method,
                a.h,
                a.with_bubbles,
                a.l2,
                b.l2,
                a.h1,
                b.h1,
                b.l2 - a.l2,
                b.h1 - a.h1
            ));
        }
    }
    out
}

/// Mean ± 95% CI of one tensor entry against `n`, one band per strategy.
pub fn estimation_plot(reports_csv: &str, entry: Entry) -> Result<String, String> {
    let mut rdr = csv::Reader::from_reader(reports_csv.as_bytes());
    let mut series: Vec<Series> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.get(4) != Some(entry.label()) {
            continue;
        }
        let num = |i: usize| -> Result<f64, String> {
            rec.get(i)
                .ok_or("short row")?
                .parse::<f64>()
                .map_err(|e| format!("column {i}: {e}"))
        };
        let (n, mean, ci) = (num(1)?, num(5)?, num(7)?);
        let label = rec.get(0).unwrap_or("?").to_string();
        let k = match series.iter().position(|s| s.label == label) {
            Some(k) => k,
            None => {
                series.push(Series {
                    label,
                    points: Vec::new(),
                    band: Some(Vec::new()),
                });
                series.len() - 1
            }
        };
        series[k].points.push((n, mean));
        series[k].band.as_mut().unwrap().push((mean - ci, mean + ci));
    }
    Ok(Plot {
        title: format!("Estimated {entry} with 95% confidence interval"),
        x_label: "N".into(),
        y_label: entry.label().into(),
        log_x: false,
        series,
    }
    .render())
}

/// Relative error against `H` on a log axis, one SVG per norm.
pub fn msfem_plots(msfem_csv: &str) -> Result<Vec<(String, String)>, String> {
    let mut rdr = csv::Reader::from_reader(msfem_csv.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let num = |i: usize| -> Result<f64, String> {
            rec.get(i)
                .ok_or("short row")?
                .parse::<f64>()
                .map_err(|e| format!("column {i}: {e}"))
        };
        rows.push((
            rec.get(0).unwrap_or("?").to_string(),
            num(1)?,
            rec.get(2).unwrap_or("").to_string(),
            rec.get(3) == Some("true"),
            num(4)?,
            num(5)?,
        ));
    }
    let multi_geometry = rows.iter().any(|r| r.2 != rows[0].2);
    let mut out = Vec::new();
    for (name, norm, col) in [("msfem_l2.svg", "L2", 4), ("msfem_h1.svg", "H1", 5)] {
        let mut series: Vec<Series> = Vec::new();
        for r in &rows {
            let mut label = format!("{}{}", r.0, if r.3 { " + bubbles" } else { "" });
            if multi_geometry {
                label = format!("{label} [{}]", r.2.split(' ').next().unwrap_or(""));
            }
            let y = if col == 4 { r.4 } else { r.5 };
            match series.iter_mut().find(|s| s.label == label) {
                Some(s) => s.points.push((r.1, y)),
                None => series.push(Series {
                    label,
                    points: vec![(r.1, y)],
                    band: None,
                }),
            }
        }
        for s in &mut series {
            s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        let plot = Plot {
            title: format!("Relative {norm} error"),
            x_label: "H".into(),
            y_label: format!("relative {norm} error"),
            log_x: true,
            series,
        };
        out.push((name.to_string(), plot.render()));
    }
    Ok(out)
}

/// Regenerates the SVG plots of an archive directory from its CSV files.
pub fn plot_dir(dir: &Path) -> Result<Vec<String>, String> {
    let mut written = Vec::new();
    let reports = dir.join(REPORTS_CSV);
    if reports.exists() {
        let text = std::fs::read_to_string(&reports).map_err(|e| e.to_string())?;
        let name = format!("plot_{}.svg", Entry::A11);
        std::fs::write(dir.join(&name), estimation_plot(&text, Entry::A11)?).map_err(|e| e.to_string())?;
        written.push(name);
    }
    let msfem = dir.join(MSFEM_CSV);
    if msfem.exists() {
        let text = std::fs::read_to_string(&msfem).map_err(|e| e.to_string())?;
        for (name, svg) in msfem_plots(&text)? {
            std::fs::write(dir.join(&name), svg).map_err(|e| e.to_string())?;
            written.push(name);
        }
    }
    if written.is_empty() {
        return Err(format!("no {REPORTS_CSV} or {MSFEM_CSV} in {}", dir.display()));
    }
    Ok(written)
}
