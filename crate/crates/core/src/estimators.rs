//! Monte Carlo strategies for `E[A*_N]`: plain, antithetic, control variates
//! and SQS selection, with equal-cost comparison.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::cell::{sqs_condition_values, CellSolver, DefectCoefficients, SolverOptions, SqsAuxiliary};
use crate::error::{Error, Result};
use crate::field::{
    antithetic_transform, realize_field, sample_configuration, sqs1_exact_sample, CoefficientField, Configuration,
    FieldLaw,
};
use crate::tensor::{Entry, Tensor2};

/// Control-variate variances below this are treated as degenerate.
pub const DEGENERATE_VARIANCE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    MC,
    Antithetic,
    ControlVariate1,
    ControlVariate2,
    Sqs1,
    Sqs2,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::MC,
        Strategy::Antithetic,
        Strategy::ControlVariate1,
        Strategy::ControlVariate2,
        Strategy::Sqs1,
        Strategy::Sqs2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::MC => "MC",
            Strategy::Antithetic => "Antithetic",
            Strategy::ControlVariate1 => "CV1",
            Strategy::ControlVariate2 => "CV2",
            Strategy::Sqs1 => "SQS1",
            Strategy::Sqs2 => "SQS2",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.label().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Selection rule for [`sqs_estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqsMode {
    Exact1,
    Ranked2,
}

/// Summary of one estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub strategy: Strategy,
    pub law: FieldLaw,
    pub seed: u64,
    pub n: usize,
    pub r: usize,
    pub m: usize,
    pub mean: Tensor2,
    /// Unbiased empirical variance of the per-sample estimator, per entry.
    pub var: Tensor2,
    pub ci95: Tensor2,
    /// Corrector solves spent on the samples.
    pub solves: usize,
    /// Solves spent before sampling (defect tables, SQS kernels).
    pub offline_solves: usize,
    pub rejected: usize,
    /// Control-variate coefficients per entry (first and second order).
    pub rho: Option<[[f64; 2]; 3]>,
    pub warnings: Vec<String>,
    /// Per-sample estimator values in index order.
    pub samples: Vec<Tensor2>,
}

impl EstimatorReport {
    fn from_samples(strategy: Strategy, law: &FieldLaw, seed: u64, r: usize, n: usize, samples: Vec<Tensor2>) -> Self {
        let (mean, var) = mean_and_variance(&samples);
        let m = samples.len();
        let ci95 = var.map(|v| 1.96 * (v / m as f64).sqrt());
        EstimatorReport {
            strategy,
            law: law.clone(),
            seed,
            n,
            r,
            m,
            mean,
            var,
            ci95,
            solves: 0,
            offline_solves: 0,
            rejected: 0,
            rho: None,
            warnings: Vec::new(),
            samples,
        }
    }

    /// Corrector solves per sample.
    pub fn cost_per_sample(&self) -> f64 {
        self.solves as f64 / self.m as f64
    }

    /// Variance of the mean, per entry.
    pub fn variance_of_mean(&self) -> Tensor2 {
        self.var * (1.0 / self.m as f64)
    }
}

/// Mean and unbiased variance, entrywise.
pub fn mean_and_variance(samples: &[Tensor2]) -> (Tensor2, Tensor2) {
    let m = samples.len() as f64;
    let mean = samples.iter().fold(Tensor2::ZERO, |a, s| a + *s) * (1.0 / m);
    let var = if samples.len() < 2 {
        Tensor2::ZERO
    } else {
        samples
            .iter()
            .fold(Tensor2::ZERO, |a, s| a + (*s - mean).map(|d| d * d))
            * (1.0 / (m - 1.0))
    };
    (mean, var)
}

fn covariance(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (m - 1.0)
}

/// Shared machinery: one grid per run, Voigt-Reuss check on every sample.
#[derive(Debug, Clone)]
pub struct Sampler {
    solver: CellSolver,
}

impl Sampler {
    pub fn new(n: usize, r: usize) -> Result<Self> {
        Ok(Sampler {
            solver: CellSolver::new(n, r)?,
        })
    }

    pub fn with_options(n: usize, r: usize, opts: SolverOptions) -> Result<Self> {
        Ok(Sampler {
            solver: CellSolver::with_options(n, r, opts)?,
        })
    }

    pub fn solver(&self) -> &CellSolver {
        &self.solver
    }

    pub fn n(&self) -> usize {
        self.solver.grid().n
    }

    pub fn r(&self) -> usize {
        self.solver.grid().r
    }

    /// `A*_N` of a configuration, checked against the Voigt-Reuss bounds.
    pub fn tensor(&self, law: &FieldLaw, c: &Configuration, index: usize) -> Result<Tensor2> {
        let field = realize_field(law, c).map_err(|e| e.at_sample(index))?;
        self.tensor_of_field(&field, index)
    }

    pub fn tensor_of_field(&self, field: &CoefficientField, index: usize) -> Result<Tensor2> {
        let t = self.solver.homogenize(field).map_err(|e| e.at_sample(index))?;
        check_bounds(field, &t, index)?;
        Ok(t)
    }
}

/// Eigenvalues of `t` inside `[λ_min(Reuss), λ_max(Voigt)]` up to solver noise.
pub fn check_bounds(field: &CoefficientField, t: &Tensor2, index: usize) -> Result<()> {
    let (lo, hi) = field.voigt_reuss_bounds();
    let eig = t.sym_eigenvalues();
    let slack = 1e-8 * hi.abs();
    if eig[0] < lo - slack || eig[1] > hi + slack {
        return Err(Error::Bounds {
            index,
            eig,
            lower: lo,
            upper: hi,
        });
    }
    Ok(())
}

fn check_count(name: &'static str, m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::param(name, format!("need at least 2 samples, got {m}")));
    }
    Ok(())
}

/// Evaluates `f` for indices `0..m` in parallel, returning results in index
/// order; the first failing index aborts the run.
fn par_indexed<T: Send>(m: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..m).into_par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
}

pub fn mc_estimate(law: &FieldLaw, n: usize, r: usize, m: usize, seed: u64) -> Result<EstimatorReport> {
    mc_estimate_with(&Sampler::new(n, r)?, law, m, seed)
}

pub fn mc_estimate_with(s: &Sampler, law: &FieldLaw, m: usize, seed: u64) -> Result<EstimatorReport> {
    law.validate()?;
    check_count("m", m)?;
    let n = s.n();
    let samples = par_indexed(m, |i| {
        let c = sample_configuration(law, n, seed, i as u64)?;
        s.tensor(law, &c, i)
    })?;
    let mut rep = EstimatorReport::from_samples(Strategy::MC, law, seed, s.r(), n, samples);
    rep.solves = 2 * m;
    Ok(rep)
}

pub fn antithetic_estimate(law: &FieldLaw, n: usize, r: usize, m_pairs: usize, seed: u64) -> Result<EstimatorReport> {
    antithetic_estimate_with(&Sampler::new(n, r)?, law, m_pairs, seed)
}

pub fn antithetic_estimate_with(s: &Sampler, law: &FieldLaw, m_pairs: usize, seed: u64) -> Result<EstimatorReport> {
    law.validate()?;
    check_count("m_pairs", m_pairs)?;
    let n = s.n();
    let samples = par_indexed(m_pairs, |i| {
        let c = sample_configuration(law, n, seed, i as u64)?;
        let a = s.tensor(law, &c, i)?;
        let b = s.tensor(law, &antithetic_transform(&c), i)?;
        Ok((a + b) * 0.5)
    })?;
    let mut rep = EstimatorReport::from_samples(Strategy::Antithetic, law, seed, s.r(), n, samples);
    rep.solves = 4 * m_pairs;
    Ok(rep)
}

/// Control variates `(Y1, Y2)` of one configuration.
pub fn defect_controls(c: &Configuration, d: &DefectCoefficients) -> (Tensor2, Tensor2) {
    let n = c.n;
    let area = (n * n) as f64;
    let y1 = d.a_per_star + d.a_1def * (c.count_ones() as f64 / area);
    let mut y2 = Tensor2::ZERO;
    if !d.a_2def.is_empty() {
        let ones: Vec<(usize, usize)> = (0..n * n)
            .filter(|&k| c.draws[k] == 1)
            .map(|k| (k % n, k / n))
            .collect();
        for (a, &(ki, kj)) in ones.iter().enumerate() {
            for &(li, lj) in &ones[a + 1..] {
                y2 += d.pair(((li + n - ki) % n, (lj + n - kj) % n));
            }
        }
        y2 = y2 * (1.0 / area);
    }
    (y1, y2)
}

/// Analytic expectations of the controls under i.i.d. Bernoulli(η) cells.
pub fn defect_control_means(d: &DefectCoefficients, eta: f64) -> (Tensor2, Tensor2) {
    (d.a_per_star + d.a_1def * eta, d.pair_sum() * (0.5 * eta * eta))
}

pub fn control_variate_estimate(
    law: &FieldLaw,
    n: usize,
    r: usize,
    m: usize,
    order: u8,
    seed: u64,
    defects: &DefectCoefficients,
) -> Result<EstimatorReport> {
    control_variate_estimate_with(&Sampler::new(n, r)?, law, m, order, seed, defects)
}

pub fn control_variate_estimate_with(
    s: &Sampler,
    law: &FieldLaw,
    m: usize,
    order: u8,
    seed: u64,
    defects: &DefectCoefficients,
) -> Result<EstimatorReport> {
    law.validate()?;
    check_count("m", m)?;
    let FieldLaw::PerturbedPeriodic { eta, .. } = *law else {
        return Err(Error::param("law", "control variates need a perturbed periodic law"));
    };
    if !(order == 1 || order == 2) {
        return Err(Error::param("order", format!("must be 1 or 2, got {order}")));
    }
    if order == 2 && defects.order < 2 {
        return Err(Error::param("defects", "order-2 control needs the two-defect catalogue"));
    }
    let n = s.n();
    let mut warnings = Vec::new();
    if defects.n != n {
        warnings.push(format!(
            "defect coefficients computed at n = {} but sampling at n = {n}",
            defects.n
        ));
    }
    let rows = par_indexed(m, |i| {
        let c = sample_configuration(law, n, seed, i as u64)?;
        let a = s.tensor(law, &c, i)?;
        let (y1, y2) = defect_controls(&c, defects);
        Ok((a, y1, y2))
    })?;
    let (ey1, ey2) = defect_control_means(defects, eta);

    let mut rho = [[0.0; 2]; 3];
    let mut samples: Vec<Tensor2> = rows.iter().map(|r| r.0).collect();
    for e in Entry::ALL {
        let a: Vec<f64> = rows.iter().map(|r| r.0.entry(e)).collect();
        let y1: Vec<f64> = rows.iter().map(|r| r.1.entry(e)).collect();
        let y2: Vec<f64> = rows.iter().map(|r| r.2.entry(e)).collect();
        let v1 = covariance(&y1, &y1);
        let v2 = covariance(&y2, &y2);
        let use1 = v1 >= DEGENERATE_VARIANCE;
        let mut use2 = order == 2 && v2 >= DEGENERATE_VARIANCE;
        if !use1 {
            warnings.push(format!("degenerate first-order control for {e}: rho1 = 0"));
        }
        if order == 2 && !use2 {
            warnings.push(format!("degenerate second-order control for {e}: rho2 = 0"));
        }
        let mut coef = [0.0; 2];
        if use1 && use2 {
            let c12 = covariance(&y1, &y2);
            let sol = crate::linalg::dense_solve(
                vec![vec![v1, c12], vec![c12, v2]],
                vec![covariance(&a, &y1), covariance(&a, &y2)],
            );
            match sol {
                Some(x) => coef = [x[0], x[1]],
                None => {
                    warnings.push(format!("collinear controls for {e}: second-order term dropped"));
                    use2 = false;
                }
            }
        }
        if use1 && !use2 {
            coef[0] = covariance(&a, &y1) / v1;
        } else if !use1 && use2 {
            coef[1] = covariance(&a, &y2) / v2;
        }
        rho[e.position()] = coef;
        let (i, j) = e.index();
        for (s, row) in samples.iter_mut().zip(&rows) {
            let mut v = s[(i, j)];
            if coef[0] != 0.0 {
                v -= coef[0] * (row.1[(i, j)] - ey1[(i, j)]);
            }
            if coef[1] != 0.0 {
                v -= coef[1] * (row.2[(i, j)] - ey2[(i, j)]);
            }
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    let strategy = if order == 1 {
        Strategy::ControlVariate1
    } else {
        Strategy::ControlVariate2
    };
    let mut rep = EstimatorReport::from_samples(strategy, law, seed, s.r(), n, samples);
    rep.solves = 2 * m;
    rep.offline_solves = defects.solves;
    rep.rho = Some(rho);
    rep.warnings = warnings;
    Ok(rep)
}

/// Indices of the `m_keep` configurations with the smallest SQS-2 residual
/// among `pool` exact SQS-1 draws, in ascending index order.
pub fn rank_sqs2(n: usize, seed: u64, p: f64, pool: usize, m_keep: usize, aux: &SqsAuxiliary) -> Result<Vec<usize>> {
    if pool < m_keep {
        return Err(Error::param("pool", format!("pool {pool} smaller than m_keep {m_keep}")));
    }
    let scores = par_indexed(pool, |i| {
        let c = sqs1_exact_sample(n, seed, i as u64, p)?;
        Ok(sqs_condition_values(&c, aux).1)
    })?;
    let mut order: Vec<usize> = (0..pool).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut keep = order[..m_keep].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

#[allow(clippy::too_many_arguments)]
pub fn sqs_estimate(
    law: &FieldLaw,
    n: usize,
    r: usize,
    m_keep: usize,
    seed: u64,
    mode: SqsMode,
    pool: usize,
    aux: &SqsAuxiliary,
) -> Result<EstimatorReport> {
    sqs_estimate_with(&Sampler::new(n, r)?, law, m_keep, seed, mode, pool, aux)
}

pub fn sqs_estimate_with(
    s: &Sampler,
    law: &FieldLaw,
    m_keep: usize,
    seed: u64,
    mode: SqsMode,
    pool: usize,
    aux: &SqsAuxiliary,
) -> Result<EstimatorReport> {
    law.validate()?;
    check_count("m_keep", m_keep)?;
    let n = s.n();
    let p = law.probability();
    let indices: Vec<usize> = match mode {
        SqsMode::Exact1 => (0..m_keep).collect(),
        SqsMode::Ranked2 => {
            if aux.n != n {
                return Err(Error::Dimension(format!(
                    "SQS integrals built for n = {}, sampling at n = {n}",
                    aux.n
                )));
            }
            rank_sqs2(n, seed, p, pool, m_keep, aux)?
        }
    };
    let samples = par_indexed(indices.len(), |k| {
        let i = indices[k];
        let c = sqs1_exact_sample(n, seed, i as u64, p)?;
        s.tensor(law, &c, i)
    })?;
    let strategy = match mode {
        SqsMode::Exact1 => Strategy::Sqs1,
        SqsMode::Ranked2 => Strategy::Sqs2,
    };
    let mut rep = EstimatorReport::from_samples(strategy, law, seed, s.r(), n, samples);
    rep.solves = 2 * m_keep;
    if mode == SqsMode::Ranked2 {
        rep.rejected = pool - m_keep;
        rep.offline_solves = aux.solves;
    }
    Ok(rep)
}

/// One row of a [`ComparisonTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub strategy: Strategy,
    pub entry: Entry,
    /// Equal-cost variance-reduction factor relative to MC.
    pub factor: f64,
    /// `|mean − mean_MC|`.
    pub bias: f64,
    /// `ci95 + ci95_MC`.
    pub combined_ci: f64,
}

impl ComparisonRow {
    pub fn consistent(&self) -> bool {
        self.bias <= self.combined_ci
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub n: usize,
    pub r: usize,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn get(&self, strategy: Strategy, entry: Entry) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.entry == entry)
    }
}

/// Equal-cost factor `(σ²_MC·cost_MC) / (σ²_X·cost_X)` with costs in solves per sample.
pub fn equal_cost_factor(mc: &EstimatorReport, x: &EstimatorReport, e: Entry) -> f64 {
    let num = mc.var.entry(e) * mc.cost_per_sample();
    let den = x.var.entry(e) * x.cost_per_sample();
    if den == 0.0 {
        if num == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// Factors and bias diagnostics of every report against the (first) MC report.
pub fn compare_strategies(reports: &[EstimatorReport]) -> Result<ComparisonTable> {
    let mc = reports
        .iter()
        .find(|r| r.strategy == Strategy::MC)
        .ok_or_else(|| Error::Comparability("no MC report to compare against".into()))?;
    for r in reports {
        if r.n != mc.n || r.r != mc.r || r.law != mc.law {
            return Err(Error::Comparability(format!(
                "{} report has (n={}, r={}, law={:?}), MC has (n={}, r={}, law={:?})",
                r.strategy, r.n, r.r, r.law, mc.n, mc.r, mc.law
            )));
        }
    }
    let mut rows = Vec::new();
    for r in reports {
        for e in Entry::ALL {
            rows.push(ComparisonRow {
                strategy: r.strategy,
                entry: e,
                factor: equal_cost_factor(mc, r, e),
                bias: (r.mean.entry(e) - mc.mean.entry(e)).abs(),
                combined_ci: r.ci95.entry(e) + mc.ci95.entry(e),
            });
        }
    }
    Ok(ComparisonTable {
        n: mc.n,
        r: mc.r,
        rows,
    })
}

pub const REPORT_CSV_HEADER: &str = "strategy,n,r,m,entry,mean,var,ci95,solves,rejected,rho";

/// One row per report and distinct tensor entry.
pub fn write_reports_csv<W: Write>(reports: &[EstimatorReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{REPORT_CSV_HEADER}")?;
    for r in reports {
        for e in Entry::ALL {
            let rho = match (r.rho, r.strategy) {
                (Some(rho), Strategy::ControlVariate1) => format!("{}", rho[e.position()][0]),
                (Some(rho), _) => format!("{};{}", rho[e.position()][0], rho[e.position()][1]),
                (None, _) => String::new(),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.strategy,
                r.n,
                r.r,
                r.m,
                e,
                r.mean.entry(e),
                r.var.entry(e),
                r.ci95.entry(e),
                r.solves,
                r.rejected,
                rho
            )?;
        }
    }
    Ok(())
}
