//! Coarse Galerkin systems, solutions and error norms.

use std::collections::BTreeMap;

use rayon::prelude::*;
use stochlab::linalg::BandedSpd;

use crate::error::{MsfemError, Result};
use crate::fine::{ElementGrid, FineSolution, SolveOptions, Source};
use crate::geometry::{CoarseMesh, PerforationSet};
use crate::space::{build_baseline_space, CoarseDof, Method, MsFEMSpace};

/// Coarse solution with its element-wise fine-grid reconstruction.
#[derive(Debug, Clone)]
pub struct CoarseSolution {
    pub method: Method,
    pub mesh: CoarseMesh,
    pub cells: usize,
    pub dofs: Vec<CoarseDof>,
    pub coefficients: Vec<f64>,
    /// Nodal values per element (`ex + nc·ey`) on its own fine grid; values
    /// on shared element sides may differ between neighbours.
    pub local: Vec<Vec<f64>>,
    /// `‖G c − F‖ / ‖F‖` of the coarse system.
    pub residual: f64,
    pub solves: usize,
    pub warnings: Vec<String>,
}

impl CoarseSolution {
    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    /// Cuts a global fine solution into element pieces, for self-comparison.
    pub fn from_fine(u: &FineSolution, mesh: CoarseMesh) -> Result<Self> {
        if u.n % mesh.nc != 0 {
            return Err(MsfemError::Dimension(format!(
                "fine grid {} is not a multiple of {} coarse elements",
                u.n, mesh.nc
            )));
        }
        let c = u.n / mesh.nc;
        let local = mesh
            .elements()
            .map(|(ex, ey)| {
                let mut v = Vec::with_capacity((c + 1) * (c + 1));
                for b in 0..=c {
                    for a in 0..=c {
                        v.push(u.at(ex * c + a, ey * c + b));
                    }
                }
                v
            })
            .collect();
        Ok(CoarseSolution {
            method: Method::CoarseQ1,
            mesh,
            cells: c,
            dofs: Vec::new(),
            coefficients: Vec::new(),
            local,
            residual: 0.0,
            solves: 0,
            warnings: Vec::new(),
        })
    }
}

struct ElementSystem {
    dofs: Vec<usize>,
    gram: Vec<Vec<f64>>,
    load: Vec<f64>,
}

/// Element Gram matrix `a_T(X_i, X_j)` and load `∫_T f X_i` in the order of
/// the element's local basis.
pub fn element_system(space: &MsFEMSpace, e: (usize, usize), f: &Source) -> (Vec<Vec<f64>>, Vec<f64>) {
    let lb = space.basis(e);
    let g = space.grid(e);
    let a = g.operator(space.kappa);
    let mf = g.mass_apply(&g.interpolate(f));
    let nn = g.num_nodes();
    let af: Vec<Vec<f64>> = lb
        .functions
        .iter()
        .map(|v| {
            let mut y = vec![0.0; nn];
            a.mul_vec(v, &mut y);
            y
        })
        .collect();
    let gram = af
        .iter()
        .map(|ai| lb.functions.iter().map(|fj| dot(ai, fj)).collect())
        .collect();
    let load = lb.functions.iter().map(|v| dot(v, &mf)).collect();
    (gram, load)
}

/// Assembles and solves the coarse Galerkin system of `space` for source `f`.
pub fn msfem_solve(space: &MsFEMSpace, f: &Source) -> Result<CoarseSolution> {
    let dofs = space.dofs();
    if dofs.is_empty() {
        return Err(MsfemError::Assembly("no basis function survives the perforations".into()));
    }
    let index: BTreeMap<CoarseDof, usize> = dofs.iter().enumerate().map(|(k, d)| (*d, k)).collect();
    let elements: Vec<(usize, usize)> = space.mesh.elements().collect();
    let systems: Vec<ElementSystem> = elements
        .par_iter()
        .map(|&e| {
            let (gram, load) = element_system(space, e, f);
            ElementSystem {
                dofs: space.basis(e).dofs.iter().map(|d| index[d]).collect(),
                gram,
                load,
            }
        })
        .collect();

    let n = dofs.len();
    let bw = systems
        .iter()
        .map(|s| {
            let lo = s.dofs.iter().min().copied().unwrap_or(0);
            let hi = s.dofs.iter().max().copied().unwrap_or(0);
            hi - lo
        })
        .max()
        .unwrap_or(0);
    let mut mat = BandedSpd::zeros(n, bw);
    let mut rhs = vec![0.0; n];
    for s in &systems {
        for (li, &gi) in s.dofs.iter().enumerate() {
            rhs[gi] += s.load[li];
            for (lj, &gj) in s.dofs.iter().enumerate() {
                if gj <= gi {
                    mat.add(gi, gj, s.gram[li][lj]);
                }
            }
        }
    }
    let chol = mat
        .clone()
        .factor()
        .map_err(|e| MsfemError::Assembly(format!("{e} for unknown {:?}", dofs[e.row])))?;
    let coefficients = chol.solve(&rhs);
    let mut r = vec![0.0; n];
    mat.mul_vec(&coefficients, &mut r);
    let fnorm = dot(&rhs, &rhs).sqrt();
    let rnorm = r.iter().zip(&rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let residual = if fnorm > 0.0 { rnorm / fnorm } else { rnorm };

    let local = elements
        .par_iter()
        .zip(&systems)
        .map(|(&e, s)| {
            let lb = space.basis(e);
            let mut v = vec![0.0; (space.cells + 1) * (space.cells + 1)];
            for (f, &gi) in lb.functions.iter().zip(&s.dofs) {
                let c = coefficients[gi];
                v.iter_mut().zip(f).for_each(|(o, x)| *o += c * x);
            }
            v
        })
        .collect();
    Ok(CoarseSolution {
        method: space.method,
        mesh: space.mesh,
        cells: space.cells,
        dofs,
        coefficients,
        local,
        residual,
        solves: space.solves,
        warnings: space.warnings.clone(),
    })
}

/// Builds the baseline space and solves.
pub fn baseline_solve(
    mesh: CoarseMesh,
    perf: &PerforationSet,
    f: &Source,
    method: Method,
    with_bubbles: bool,
    cells: usize,
    opts: SolveOptions,
) -> Result<CoarseSolution> {
    let space = build_baseline_space(mesh, perf, method, cells, with_bubbles, opts)?;
    msfem_solve(&space, f)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Relative `L²(D_ε)` and broken `H¹` errors of `u_h` against the reference.
///
/// Both are compared on the coarser of the two grids, which must divide the
/// finer one; integrals run over fine cells whose centre lies outside `B_ε`.
pub fn compute_errors(u_h: &CoarseSolution, reference: &FineSolution) -> Result<(f64, f64)> {
    let nc = u_h.mesh.nc;
    let n_h = nc * u_h.cells;
    let n_r = reference.n;
    let n_t = n_h.min(n_r);
    if n_h.max(n_r) % n_t != 0 || n_t % nc != 0 {
        return Err(MsfemError::Dimension(format!(
            "grids of {n_h} and {n_r} cells are not nested over {nc} elements"
        )));
    }
    let ct = n_t / nc;
    let sh = n_h / n_t;
    let sr = n_r / n_t;
    let perf = &reference.perf;
    let parts: Vec<[f64; 4]> = u_h
        .mesh
        .elements()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(ex, ey)| {
            let g = ElementGrid::new(&u_h.mesh, (ex, ey), ct, perf);
            let lh = &u_h.local[ex + nc * ey];
            let mut r = Vec::with_capacity(g.num_nodes());
            let mut e = Vec::with_capacity(g.num_nodes());
            for b in 0..=ct {
                for a in 0..=ct {
                    let ur = reference.at((ex * ct + a) * sr, (ey * ct + b) * sr);
                    let uh = lh[a * sh + (u_h.cells + 1) * b * sh];
                    r.push(ur);
                    e.push(uh - ur);
                }
            }
            let (el2, eh1) = g.squared_norms(perf, &e);
            let (rl2, rh1) = g.squared_norms(perf, &r);
            [el2, eh1, rl2, rh1]
        })
        .collect();
    let s = parts
        .iter()
        .fold([0.0; 4], |acc, p| [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2], acc[3] + p[3]]);
    let rel = |e: f64, r: f64| if r > 0.0 { (e / r).sqrt() } else { e.sqrt() };
    Ok((rel(s[0], s[2]), rel(s[1], s[3])))
}
