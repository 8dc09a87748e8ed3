//! Multiscale basis functions computed on the fine grid of each coarse element.

use rayon::prelude::*;
use stochlab::linalg::{dense_solve, BandedCholesky};

use crate::error::{MsfemError, Result};
use crate::fine::{resolution_check, ElementGrid, SolveOptions};
use crate::geometry::{CoarseMesh, EdgeId, PerforationSet, Side};

/// Method used to build the coarse space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Crouzeix–Raviart multiscale elements (weak edge-average continuity).
    CrouzeixRaviart,
    /// Conforming multiscale elements with affine boundary data.
    MsFEMLinear,
    /// Standard bilinear elements on the coarse mesh.
    CoarseQ1,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::CrouzeixRaviart, Method::MsFEMLinear, Method::CoarseQ1];

    pub fn label(self) -> &'static str {
        match self {
            Method::CrouzeixRaviart => "CR",
            Method::MsFEMLinear => "MsFEMLinear",
            Method::CoarseQ1 => "CoarseQ1",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.label().eq_ignore_ascii_case(s))
    }
}

/// A coarse degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CoarseDof {
    Vertex(usize, usize),
    Edge(EdgeId),
    Bubble(usize, usize),
}

impl CoarseDof {
    /// Sort key giving a row-by-row ordering with a narrow band.
    pub fn key(&self) -> (usize, u8, usize) {
        match *self {
            CoarseDof::Vertex(i, j) => (2 * j, 0, i),
            CoarseDof::Edge(EdgeId::H(i, j)) => (2 * j, 0, i),
            CoarseDof::Edge(EdgeId::V(i, j)) => (2 * j + 1, 0, i),
            CoarseDof::Bubble(ex, ey) => (2 * ey + 1, 1, ex),
        }
    }
}

/// Restrictions of the basis functions to one element, as nodal values on
/// its fine grid.
#[derive(Debug, Clone)]
pub struct LocalBasis {
    pub element: (usize, usize),
    pub dofs: Vec<CoarseDof>,
    pub functions: Vec<Vec<f64>>,
}

impl LocalBasis {
    pub fn function(&self, dof: CoarseDof) -> Option<&[f64]> {
        self.dofs.iter().position(|d| *d == dof).map(|k| self.functions[k].as_slice())
    }
}

#[derive(Debug, Clone)]
pub struct MsFEMSpace {
    pub method: Method,
    pub mesh: CoarseMesh,
    pub perf: PerforationSet,
    pub kappa: f64,
    /// Fine cells per coarse element side.
    pub cells: usize,
    pub with_bubbles: bool,
    /// One entry per element, `ex + nc·ey`.
    pub local: Vec<LocalBasis>,
    /// Local right-hand sides solved.
    pub solves: usize,
    pub warnings: Vec<String>,
}

impl MsFEMSpace {
    pub fn grid(&self, element: (usize, usize)) -> ElementGrid {
        ElementGrid::new(&self.mesh, element, self.cells, &self.perf)
    }

    pub fn basis(&self, element: (usize, usize)) -> &LocalBasis {
        &self.local[element.0 + self.mesh.nc * element.1]
    }

    /// `Φ_E` on its two elements, `None` for boundary edges and edges inside `B_ε`.
    pub fn phi(&self, e: EdgeId) -> Option<[(&LocalBasis, &[f64]); 2]> {
        let [a, b] = self.mesh.neighbours(e)?;
        let (la, lb) = (self.basis(a), self.basis(b));
        Some([
            (la, la.function(CoarseDof::Edge(e))?),
            (lb, lb.function(CoarseDof::Edge(e))?),
        ])
    }

    pub fn psi(&self, element: (usize, usize)) -> Option<&[f64]> {
        self.basis(element).function(CoarseDof::Bubble(element.0, element.1))
    }

    /// All retained degrees of freedom in coarse ordering.
    pub fn dofs(&self) -> Vec<CoarseDof> {
        let mut all: Vec<CoarseDof> = self.local.iter().flat_map(|l| l.dofs.iter().copied()).collect();
        all.sort_by_key(|d| d.key());
        all.dedup();
        all
    }

    pub fn dim(&self) -> usize {
        self.dofs().len()
    }

    /// Largest `|∫_E [[X]]|` over internal edges not inside `B_ε` and all
    /// basis functions `X`; `None` unless the space is Crouzeix–Raviart.
    pub fn mean_jump_residual(&self) -> Option<f64> {
        if self.method != Method::CrouzeixRaviart {
            return None;
        }
        let side_of = |el: (usize, usize), id: EdgeId| Side::ALL.into_iter().find(|&s| self.mesh.edge(el, s) == id);
        let worst = self
            .mesh
            .internal_edges()
            .par_iter()
            .map(|&id| {
                let [a, b] = self.mesh.neighbours(id).expect("internal edge");
                let (sa, sb) = (side_of(a, id).unwrap(), side_of(b, id).unwrap());
                let (ga, gb) = (self.grid(a), self.grid(b));
                if ga.side_inside(sa) {
                    return 0.0;
                }
                let (wa, wb) = (ga.side_functional(sa), gb.side_functional(sb));
                let integral = |lb: &LocalBasis, w: &[(usize, f64)], dof: CoarseDof| {
                    lb.function(dof).map_or(0.0, |f| w.iter().map(|&(i, c)| c * f[i]).sum::<f64>())
                };
                let (la, lb) = (self.basis(a), self.basis(b));
                la.dofs
                    .iter()
                    .chain(&lb.dofs)
                    .map(|&d| (integral(la, &wa, d) - integral(lb, &wb, d)).abs())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        Some(worst)
    }

    /// Largest `|a_T(X, w)| / (‖X‖_a ‖w‖_a)` over elements, basis functions
    /// and `trials` random `w` vanishing on `∂D` with zero averages on the
    /// constrained sides (and zero mean on `T` when `X` is a bubble).
    /// `None` unless the space is Crouzeix–Raviart.
    pub fn orthogonality_residual(&self, trials: usize, seed: u64) -> Option<f64> {
        use rand::{Rng, SeedableRng};
        if self.method != Method::CrouzeixRaviart {
            return None;
        }
        let elements: Vec<(usize, usize)> = self.mesh.elements().collect();
        let worst = elements
            .par_iter()
            .map(|&e| {
                let lb = self.basis(e);
                if lb.dofs.is_empty() {
                    return 0.0;
                }
                let loc = cr_local(&self.mesh, &self.perf, e, self.cells);
                let g = &loc.grid;
                let a = g.operator(self.kappa);
                let mut m1 = g.mass_apply(&vec![1.0; g.num_nodes()]);
                for (m, &d) in m1.iter_mut().zip(&loc.dirichlet) {
                    if d {
                        *m = 0.0;
                    }
                }
                let mut ortho: Vec<Vec<f64>> = Vec::new();
                for c in loc.rows.iter().chain(std::iter::once(&m1)) {
                    let mut c = c.clone();
                    for b in &ortho {
                        let p = dot(&c, b);
                        c.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
                    }
                    let n = dot(&c, &c).sqrt();
                    c.iter_mut().for_each(|x| *x /= n);
                    ortho.push(c);
                }
                let energy = |v: &[f64]| {
                    let mut av = vec![0.0; v.len()];
                    a.mul_vec(v, &mut av);
                    av
                };
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (e.0 as u64) << 32 ^ e.1 as u64);
                let mut worst = 0.0f64;
                for _ in 0..trials {
                    let mut w: Vec<f64> = loc
                        .dirichlet
                        .iter()
                        .map(|&d| if d { 0.0 } else { rng.gen_range(-1.0..1.0) })
                        .collect();
                    // w in the constraint kernel, then also of zero mean
                    let k = loc.rows.len();
                    for b in &ortho[..k] {
                        let p = dot(&w, b);
                        w.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
                    }
                    let mut w0 = w.clone();
                    let p = dot(&w0, &ortho[k]);
                    w0.iter_mut().zip(&ortho[k]).for_each(|(x, y)| *x -= p * y);
                    let (aw, aw0) = (energy(&w), energy(&w0));
                    for (dof, f) in lb.dofs.iter().zip(&lb.functions) {
                        let (t, at) = if matches!(dof, CoarseDof::Bubble(..)) { (&w0, &aw0) } else { (&w, &aw) };
                        let af = energy(f);
                        let scale = (dot(f, &af) * dot(t, at)).sqrt();
                        if scale > 0.0 {
                            worst = worst.max(dot(at, f).abs() / scale);
                        }
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max);
        Some(worst)
    }
}

fn check_cells(mesh: &CoarseMesh, perf: &PerforationSet, cells: usize, opts: &SolveOptions) -> Result<Vec<String>> {
    if cells < 2 {
        return Err(MsfemError::param("fine_n", format!("need at least 2 fine cells per element, got {cells}")));
    }
    let h = mesh.h() / cells as f64;
    Ok(resolution_check(perf, h, opts.strict)?.into_iter().collect())
}

fn local_error(element: (usize, usize)) -> impl Fn(stochlab::linalg::NotPositiveDefinite) -> MsfemError {
    move |e| MsfemError::LocalSolve {
        what: format!("element ({}, {})", element.0, element.1),
        row: e.row,
        pivot: e.pivot,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Builds the Crouzeix–Raviart multiscale space. `cells` is the number of
/// fine cells per element side.
pub fn build_cr_space(
    mesh: CoarseMesh,
    perf: &PerforationSet,
    cells: usize,
    with_bubbles: bool,
    opts: SolveOptions,
) -> Result<MsFEMSpace> {
    let warnings = check_cells(&mesh, perf, cells, &opts)?;
    let h = mesh.h() / cells as f64;
    let kappa = opts.penalty_scale / (h * h);
    let elements: Vec<(usize, usize)> = mesh.elements().collect();
    let results: Vec<Result<(LocalBasis, usize)>> = elements
        .par_iter()
        .map(|&e| cr_element(&mesh, perf, e, cells, kappa, with_bubbles))
        .collect();
    let mut local = Vec::with_capacity(results.len());
    let mut solves = 0;
    for r in results {
        let (l, s) = r?;
        solves += s;
        local.push(l);
    }
    Ok(MsFEMSpace {
        method: Method::CrouzeixRaviart,
        mesh,
        perf: perf.clone(),
        kappa,
        cells,
        with_bubbles,
        local,
        solves,
        warnings,
    })
}

/// Constraint data of the CR local problem on one element.
pub(crate) struct CrLocal {
    pub grid: ElementGrid,
    pub dirichlet: Vec<bool>,
    pub constrained: Vec<(Side, EdgeId)>,
    /// Dense constraint rows, zero at Dirichlet nodes.
    pub rows: Vec<Vec<f64>>,
}

pub(crate) fn cr_local(mesh: &CoarseMesh, perf: &PerforationSet, e: (usize, usize), cells: usize) -> CrLocal {
    let grid = ElementGrid::new(mesh, e, cells, perf);
    let nn = grid.num_nodes();
    let mut dirichlet = vec![false; nn];
    let mut constrained = Vec::new();
    for side in Side::ALL {
        let id = mesh.edge(e, side);
        if !mesh.is_internal(id) {
            for i in grid.side_nodes(side) {
                dirichlet[i] = true;
            }
        } else if !grid.side_inside(side) {
            constrained.push((side, id));
        }
    }
    let rows = constrained
        .iter()
        .map(|&(side, _)| {
            let mut row = vec![0.0; nn];
            for (i, w) in grid.side_functional(side) {
                if !dirichlet[i] {
                    row[i] = w;
                }
            }
            row
        })
        .collect();
    CrLocal {
        grid,
        dirichlet,
        constrained,
        rows,
    }
}

fn cr_element(
    mesh: &CoarseMesh,
    perf: &PerforationSet,
    e: (usize, usize),
    cells: usize,
    kappa: f64,
    with_bubble: bool,
) -> Result<(LocalBasis, usize)> {
    let loc = cr_local(mesh, perf, e, cells);
    let g = &loc.grid;
    let empty = LocalBasis {
        element: e,
        dofs: Vec::new(),
        functions: Vec::new(),
    };
    if g.all_inside() {
        return Ok((empty, 0));
    }
    let mut a = g.operator(kappa);
    // Adding a multiple of c cᵀ for a constrained side leaves the constrained
    // minimizer unchanged and removes the constant kernel when nothing is pinned.
    if let Some(k) = loc.constrained.iter().position(|(s, _)| *s == Side::Bottom) {
        let row = &loc.rows[k];
        let scale = 1.0 / (g.h * g.h);
        for i in 0..=g.c {
            for j in 0..=i {
                let v = scale * row[i] * row[j];
                if v != 0.0 {
                    a.add(i, j, v);
                }
            }
        }
    }
    for (i, &d) in loc.dirichlet.iter().enumerate() {
        if d {
            a.pin(i);
        }
    }
    let chol = a.factor().map_err(local_error(e))?;
    let k = loc.rows.len();
    let z: Vec<Vec<f64>> = loc.rows.iter().map(|r| chol.solve(r)).collect();
    let s: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| dot(&loc.rows[i], &z[j])).collect()).collect();
    let singular = || MsfemError::LocalSolve {
        what: format!("element ({}, {}) edge constraints", e.0, e.1),
        row: 0,
        pivot: 0.0,
    };
    let combine = |coef: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; g.num_nodes()];
        for (zj, cj) in z.iter().zip(coef) {
            out.iter_mut().zip(zj).for_each(|(o, v)| *o += cj * v);
        }
        out
    };
    let mut dofs = Vec::new();
    let mut functions = Vec::new();
    for (i, &(_, id)) in loc.constrained.iter().enumerate() {
        let mut rhs = vec![0.0; k];
        rhs[i] = 1.0;
        let coef = dense_solve(s.clone(), rhs).ok_or_else(singular)?;
        dofs.push(CoarseDof::Edge(id));
        functions.push(combine(&coef));
    }
    let mut solves = k;
    if with_bubble {
        let mut b = g.mass_apply(&vec![1.0; g.num_nodes()]);
        for (v, &d) in b.iter_mut().zip(&loc.dirichlet) {
            if d {
                *v = 0.0;
            }
        }
        let y = chol.solve(&b);
        let psi = if k == 0 {
            y
        } else {
            let cy: Vec<f64> = loc.rows.iter().map(|r| dot(r, &y)).collect();
            let coef = dense_solve(s.clone(), cy).ok_or_else(singular)?;
            let corr = combine(&coef);
            y.iter().zip(&corr).map(|(a, b)| a - b).collect()
        };
        dofs.push(CoarseDof::Bubble(e.0, e.1));
        functions.push(psi);
        solves += 1;
    }
    Ok((
        LocalBasis {
            element: e,
            dofs,
            functions,
        },
        solves,
    ))
}

/// Builds the space of one of the baseline methods.
pub fn build_baseline_space(
    mesh: CoarseMesh,
    perf: &PerforationSet,
    method: Method,
    cells: usize,
    with_bubbles: bool,
    opts: SolveOptions,
) -> Result<MsFEMSpace> {
    if method == Method::CrouzeixRaviart {
        return build_cr_space(mesh, perf, cells, with_bubbles, opts);
    }
    let warnings = check_cells(&mesh, perf, cells, &opts)?;
    let h = mesh.h() / cells as f64;
    let kappa = opts.penalty_scale / (h * h);
    let elements: Vec<(usize, usize)> = mesh.elements().collect();
    let results: Vec<Result<(LocalBasis, usize)>> = elements
        .par_iter()
        .map(|&e| conforming_element(&mesh, perf, e, cells, kappa, method, with_bubbles))
        .collect();
    let mut local = Vec::with_capacity(results.len());
    let mut solves = 0;
    for r in results {
        let (l, s) = r?;
        solves += s;
        local.push(l);
    }
    Ok(MsFEMSpace {
        method,
        mesh,
        perf: perf.clone(),
        kappa,
        cells,
        with_bubbles,
        local,
        solves,
        warnings,
    })
}

fn conforming_element(
    mesh: &CoarseMesh,
    perf: &PerforationSet,
    e: (usize, usize),
    cells: usize,
    kappa: f64,
    method: Method,
    with_bubble: bool,
) -> Result<(LocalBasis, usize)> {
    let g = ElementGrid::new(mesh, e, cells, perf);
    let c = g.c;
    let nn = g.num_nodes();
    let a = g.operator(kappa);
    let bnd = g.boundary_nodes();
    let bubble = with_bubble && !g.all_inside();
    let chol: Option<BandedCholesky> = if method == Method::MsFEMLinear || bubble {
        let mut pinned = a.clone();
        for &i in &bnd {
            pinned.pin(i);
        }
        Some(pinned.factor().map_err(local_error(e))?)
    } else {
        None
    };
    let mut dofs = Vec::new();
    let mut functions = Vec::new();
    let mut solves = 0;
    for (dx, dy) in [(0, 0), (1, 0), (1, 1), (0, 1)] {
        let (vi, vj) = (e.0 + dx, e.1 + dy);
        if vi == 0 || vj == 0 || vi == mesh.nc || vj == mesh.nc {
            continue;
        }
        let mut hat = vec![0.0; nn];
        for b in 0..=c {
            for x in 0..=c {
                let s = x as f64 / c as f64;
                let t = b as f64 / c as f64;
                let wx = if dx == 1 { s } else { 1.0 - s };
                let wy = if dy == 1 { t } else { 1.0 - t };
                hat[g.node(x, b)] = wx * wy;
            }
        }
        let values = if method == Method::CoarseQ1 {
            hat
        } else {
            // interior values from the penalized problem with the hat as boundary data
            let mut trace = vec![0.0; nn];
            for &i in &bnd {
                trace[i] = hat[i];
            }
            let mut rhs = vec![0.0; nn];
            a.mul_vec(&trace, &mut rhs);
            rhs.iter_mut().for_each(|v| *v = -*v);
            for &i in &bnd {
                rhs[i] = hat[i];
            }
            solves += 1;
            chol.as_ref().expect("factored for this method").solve(&rhs)
        };
        dofs.push(CoarseDof::Vertex(vi, vj));
        functions.push(values);
    }
    if bubble {
        let mut rhs = g.mass_apply(&vec![1.0; nn]);
        for &i in &bnd {
            rhs[i] = 0.0;
        }
        solves += 1;
        dofs.push(CoarseDof::Bubble(e.0, e.1));
        functions.push(chol.as_ref().expect("factored when bubbles are on").solve(&rhs));
    }
    Ok((
        LocalBasis {
            element: e,
            dofs,
            functions,
        },
        solves,
    ))
}
