//! Periodic corrector problems on `Q_N` and the quantities built from them.

mod defect;
mod grid;
mod sqs;

use std::io::Write;

pub use defect::{defect_coefficients, defect_coefficients_with, lattice_symmetries, one_defect_contribution, DefectCoefficients};
pub use grid::{FftLaplacePreconditioner, PeriodicGrid, Q1Blocks, StencilOperator};
pub use sqs::{sqs_auxiliary, sqs_auxiliary_for_law, sqs_condition_values, SqsAuxiliary};

use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::linalg::{pcg, CgOptions, CgStats, Jacobi, LinearOperator, Preconditioner};
use crate::tensor::Tensor2;

/// Default fine subdivisions per unit cell.
pub const DEFAULT_REFINEMENT: usize = 8;
/// Default relative residual tolerance of the corrector solves.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PreconditionerKind {
    /// Exact inverse of a constant-coefficient periodic Laplacian.
    #[default]
    Fft,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rel_tol: f64,
    /// Iteration cap; `None` means `50·sqrt(dofs)`.
    pub max_iter: Option<usize>,
    pub preconditioner: PreconditionerKind,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rel_tol: DEFAULT_TOL,
            max_iter: None,
            preconditioner: PreconditionerKind::Fft,
        }
    }
}

/// Corrector `w_p` on the periodic fine grid, mean zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorSolution {
    pub n: usize,
    pub r: usize,
    pub p: [f64; 2],
    /// Nodal values, node `(a, b)` at `a + n·r·b`.
    pub values: Vec<f64>,
    pub stats: CgStats,
}

impl CorrectorSolution {
    /// Dump as CSV with columns `n,r,p1,p2,i,j,value`, one row per node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,r,p1,p2,i,j,value")?;
        let m = self.n * self.r;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{:e}",
                self.n,
                self.r,
                self.p[0],
                self.p[1],
                k % m,
                k / m,
                v
            )?;
        }
        Ok(())
    }
}

/// A periodic grid plus solver settings; reusable across realizations and
/// shareable between threads.
#[derive(Debug, Clone)]
pub struct CellSolver {
    grid: PeriodicGrid,
    opts: SolverOptions,
}

impl CellSolver {
    pub fn new(n: usize, r: usize) -> Result<Self> {
        Self::with_options(n, r, SolverOptions::default())
    }

    pub fn with_options(n: usize, r: usize, opts: SolverOptions) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        if r == 0 {
            return Err(Error::param("r", "must be at least 1"));
        }
        if !(opts.rel_tol > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        Ok(CellSolver {
            grid: PeriodicGrid::new(n, r),
            opts,
        })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn options(&self) -> SolverOptions {
        self.opts
    }

    fn check_field(&self, cells: &[Tensor2]) -> Result<()> {
        if cells.len() != self.grid.n * self.grid.n {
            return Err(Error::Dimension(format!(
                "field has {} cells, grid expects {}",
                cells.len(),
                self.grid.n * self.grid.n
            )));
        }
        Ok(())
    }

    /// Solve `∫ A ∇u·∇v = load(v)` for mean-zero periodic `u`.
    pub fn solve_load(&self, cells: &[Tensor2], load: &[f64]) -> Result<(Vec<f64>, CgStats)> {
        self.check_field(cells)?;
        let op = self.grid.stiffness(cells);
        let mut x = vec![0.0; op.dim()];
        let stats = self.run_pcg(cells, &op, load, &mut x)?;
        Ok((x, stats))
    }

    fn run_pcg(&self, cells: &[Tensor2], op: &StencilOperator<'_>, b: &[f64], x: &mut [f64]) -> Result<CgStats> {
        let dofs = op.dim();
        let opts = CgOptions {
            rel_tol: self.opts.rel_tol,
            max_iter: self
                .opts
                .max_iter
                .unwrap_or_else(|| (50.0 * (dofs as f64).sqrt()).ceil() as usize),
            project_mean: true,
        };
        let pc: Box<dyn Preconditioner> = match self.opts.preconditioner {
            PreconditionerKind::Fft => {
                let (lo, hi) = cells.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), a| {
                    let e = a.sym_eigenvalues();
                    (lo.min(e[0]), hi.max(e[1]))
                });
                if !(lo > 0.0) {
                    return Err(Error::Ellipticity(format!("smallest cell eigenvalue {lo}")));
                }
                Box::new(FftLaplacePreconditioner::new(self.grid.side(), (lo * hi).sqrt()))
            }
            PreconditionerKind::Jacobi => Box::new(Jacobi::new(&op.diagonal())),
        };
        pcg(op, pc.as_ref(), b, x, opts)
    }

    pub fn solve_corrector(&self, field: &CoefficientField, p: [f64; 2]) -> Result<CorrectorSolution> {
        self.check_field(&field.cells)?;
        let load = self
            .grid
            .divergence_load(|k| Some(field.cells[k].apply(p)));
        let (values, stats) = self.solve_load(&field.cells, &load)?;
        Ok(CorrectorSolution {
            n: self.grid.n,
            r: self.grid.r,
            p,
            values,
            stats,
        })
    }

    /// Correctors for `e₁` and `e₂`, sharing one assembly and preconditioner.
    pub fn correctors(&self, field: &CoefficientField) -> Result<[CorrectorSolution; 2]> {
        self.check_field(&field.cells)?;
        let op = self.grid.stiffness(&field.cells);
        let solve = |p: [f64; 2]| -> Result<CorrectorSolution> {
            let load = self.grid.divergence_load(|k| Some(field.cells[k].apply(p)));
            let mut x = vec![0.0; op.dim()];
            let stats = self.run_pcg(&field.cells, &op, &load, &mut x)?;
            Ok(CorrectorSolution {
                n: self.grid.n,
                r: self.grid.r,
                p,
                values: x,
                stats,
            })
        };
        Ok([solve([1.0, 0.0])?, solve([0.0, 1.0])?])
    }

    /// `A*_N` of one realization (two corrector solves).
    pub fn homogenize(&self, field: &CoefficientField) -> Result<Tensor2> {
        let w = self.correctors(field)?;
        homogenized_tensor(field, &w)
    }
}

/// One corrector on a fresh grid; see [`CellSolver`] for repeated solves.
pub fn solve_corrector(field: &CoefficientField, p: [f64; 2], r: usize, tol: f64) -> Result<CorrectorSolution> {
    let solver = CellSolver::with_options(
        field.n,
        r,
        SolverOptions {
            rel_tol: tol,
            ..SolverOptions::default()
        },
    )?;
    solver.solve_corrector(field, p)
}

/// `A*_N` from correctors for two independent directions.
pub fn homogenized_tensor(field: &CoefficientField, w: &[CorrectorSolution]) -> Result<Tensor2> {
    if w.len() != 2 {
        return Err(Error::Dimension(format!("need 2 correctors, got {}", w.len())));
    }
    let n = field.n;
    for s in w {
        if s.n != n || s.values.len() != (s.n * s.r).pow(2) || s.r != w[0].r {
            return Err(Error::Dimension(format!(
                "corrector on grid n={} r={} does not match field n={n}",
                s.n, s.r
            )));
        }
    }
    let grid = PeriodicGrid::new(n, w[0].r);
    let area = (n * n) as f64;
    let mut cols = [[0.0; 2]; 2];
    for (c, s) in cols.iter_mut().zip(w) {
        let grads = grid.cell_gradient_integrals(&s.values);
        for (a, g) in field.cells.iter().zip(&grads) {
            let v = a.apply([s.p[0] + g[0], s.p[1] + g[1]]);
            c[0] += v[0] / area;
            c[1] += v[1] / area;
        }
    }
    let images = Tensor2::from_columns(cols[0], cols[1]);
    let dirs = Tensor2::from_columns(w[0].p, w[1].p);
    let inv = dirs
        .inverse()
        .filter(|_| dirs.det().abs() > 1e-12)
        .ok_or_else(|| Error::Dimension("corrector directions are linearly dependent".into()))?;
    Ok(images * inv)
}

/// `(1/|Q_N|) ∫ (p + ∇w)ᵀ A (p + ∇w)` for one corrector.
pub fn energy_form(field: &CoefficientField, w: &CorrectorSolution) -> f64 {
    let grid = PeriodicGrid::new(field.n, w.r);
    grid.energy(&field.cells, w.p, &w.values, &w.values) / (field.n * field.n) as f64
}

/// Relative Euclidean residual of the discrete corrector equations.
pub fn galerkin_residual(field: &CoefficientField, w: &CorrectorSolution) -> f64 {
    let grid = PeriodicGrid::new(field.n, w.r);
    let op = grid.stiffness(&field.cells);
    let load = grid.divergence_load(|k| Some(field.cells[k].apply(w.p)));
    let mut kw = vec![0.0; op.dim()];
    op.apply(&w.values, &mut kw);
    let num: f64 = kw.iter().zip(&load).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = load.iter().map(|b| b * b).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}
