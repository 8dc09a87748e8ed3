//! Q1 discretization on uniform fine grids: element-local grids of the coarse
//! elements and the global penalized reference problem.

use stochlab::linalg::{pcg, BandedSpd, CgOptions, CgStats, Jacobi, LinearOperator};

use crate::error::{MsfemError, Result};
use crate::geometry::{CoarseMesh, PerforationSet, Side};

/// Penalty `κ = PENALTY_SCALE / h²` inside the perforations.
pub const PENALTY_SCALE: f64 = 1e8;

/// Right-hand sides used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    Constant(f64),
    /// `sin(πx/2)·sin(πy/2)`.
    SineHalfPi,
}

impl Source {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            Source::Constant(c) => c,
            Source::SineHalfPi => {
                let h = 0.5 * std::f64::consts::PI;
                (h * x).sin() * (h * y).sin()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Source::Constant(c) if *c == 0.0)
    }
}

/// Q1 stiffness of the Laplacian on a square element, local order
/// (0,0), (1,0), (1,1), (0,1).
pub const Q1_LAPLACE: [[f64; 4]; 4] = [
    [2.0 / 3.0, -1.0 / 6.0, -1.0 / 3.0, -1.0 / 6.0],
    [-1.0 / 6.0, 2.0 / 3.0, -1.0 / 6.0, -1.0 / 3.0],
    [-1.0 / 3.0, -1.0 / 6.0, 2.0 / 3.0, -1.0 / 6.0],
    [-1.0 / 6.0, -1.0 / 3.0, -1.0 / 6.0, 2.0 / 3.0],
];

/// Q1 mass on a unit square element (scale by `h²`).
pub const Q1_MASS: [[f64; 4]; 4] = [
    [4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0],
    [1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0],
];

const CORNERS: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

/// Fine grid of `c × c` cells covering coarse element `(ex, ey)`.
#[derive(Debug, Clone)]
pub struct ElementGrid {
    pub c: usize,
    pub h: f64,
    pub element: (usize, usize),
    origin: [f64; 2],
    inside: Vec<bool>,
}

impl ElementGrid {
    pub fn new(mesh: &CoarseMesh, element: (usize, usize), c: usize, perf: &PerforationSet) -> Self {
        let h = mesh.h() / c as f64;
        let origin = [element.0 as f64 * mesh.h(), element.1 as f64 * mesh.h()];
        let global = element.0 * c;
        let global_y = element.1 * c;
        let fine_n = mesh.nc * c;
        let mut inside = Vec::with_capacity((c + 1) * (c + 1));
        for b in 0..=c {
            for a in 0..=c {
                // coordinates from global integer indices so neighbours agree bitwise
                let x = (global + a) as f64 / fine_n as f64;
                let y = (global_y + b) as f64 / fine_n as f64;
                inside.push(perf.indicator(x, y));
            }
        }
        ElementGrid {
            c,
            h,
            element,
            origin,
            inside,
        }
    }

    pub fn num_nodes(&self) -> usize {
        (self.c + 1) * (self.c + 1)
    }

    #[inline]
    pub fn node(&self, a: usize, b: usize) -> usize {
        a + (self.c + 1) * b
    }

    pub fn coords(&self, a: usize, b: usize) -> [f64; 2] {
        [self.origin[0] + a as f64 * self.h, self.origin[1] + b as f64 * self.h]
    }

    pub fn inside(&self, node: usize) -> bool {
        self.inside[node]
    }

    pub fn all_inside(&self) -> bool {
        self.inside.iter().all(|&b| b)
    }

    /// Nodes along one side, in increasing coordinate order.
    pub fn side_nodes(&self, side: Side) -> Vec<usize> {
        let c = self.c;
        (0..=c)
            .map(|t| match side {
                Side::Bottom => self.node(t, 0),
                Side::Top => self.node(t, c),
                Side::Left => self.node(0, t),
                Side::Right => self.node(c, t),
            })
            .collect()
    }

    pub fn side_inside(&self, side: Side) -> bool {
        self.side_nodes(side).iter().all(|&i| self.inside[i])
    }

    /// Trapezoid weights of `∫_side u` over the side nodes.
    pub fn side_functional(&self, side: Side) -> Vec<(usize, f64)> {
        let nodes = self.side_nodes(side);
        let last = nodes.len() - 1;
        nodes
            .into_iter()
            .enumerate()
            .map(|(t, i)| (i, if t == 0 || t == last { 0.5 * self.h } else { self.h }))
            .collect()
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        let c = self.c;
        (0..self.num_nodes())
            .filter(|&i| {
                let (a, b) = (i % (c + 1), i / (c + 1));
                a == 0 || b == 0 || a == c || b == c
            })
            .collect()
    }

    fn element_nodes(&self, a: usize, b: usize) -> [usize; 4] {
        CORNERS.map(|(dx, dy)| self.node(a + dx, b + dy))
    }

    /// Centre of fine element `(a, b)` lies outside the perforations.
    pub fn element_outside(&self, perf: &PerforationSet, a: usize, b: usize) -> bool {
        let p = self.coords(a, b);
        !perf.indicator(p[0] + 0.5 * self.h, p[1] + 0.5 * self.h)
    }

    /// `∫ ∇u·∇v + κ ∫_B u v` with lumped penalty, half-bandwidth `c + 2`.
    pub fn operator(&self, kappa: f64) -> BandedSpd {
        let c = self.c;
        let mut a = BandedSpd::zeros(self.num_nodes(), c + 2);
        let pen = 0.25 * kappa * self.h * self.h;
        for b in 0..c {
            for x in 0..c {
                let nodes = self.element_nodes(x, b);
                for (li, &gi) in nodes.iter().enumerate() {
                    for (lj, &gj) in nodes.iter().enumerate() {
                        if gj <= gi {
                            a.add(gi, gj, Q1_LAPLACE[li][lj]);
                        }
                    }
                    if self.inside[gi] {
                        a.add(gi, gi, pen);
                    }
                }
            }
        }
        a
    }

    /// Mass matrix times `v`.
    pub fn mass_apply(&self, v: &[f64]) -> Vec<f64> {
        let c = self.c;
        let h2 = self.h * self.h;
        let mut out = vec![0.0; self.num_nodes()];
        for b in 0..c {
            for x in 0..c {
                let nodes = self.element_nodes(x, b);
                for (li, &gi) in nodes.iter().enumerate() {
                    let mut s = 0.0;
                    for (lj, &gj) in nodes.iter().enumerate() {
                        s += Q1_MASS[li][lj] * v[gj];
                    }
                    out[gi] += h2 * s;
                }
            }
        }
        out
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: &Source) -> Vec<f64> {
        let c = self.c;
        let mut out = Vec::with_capacity(self.num_nodes());
        for b in 0..=c {
            for a in 0..=c {
                let p = self.coords(a, b);
                out.push(f.eval(p[0], p[1]));
            }
        }
        out
    }

    /// `(Σ eᵀM_e e, Σ eᵀK_e e)` over fine elements whose centre is outside `B`.
    pub fn squared_norms(&self, perf: &PerforationSet, e: &[f64]) -> (f64, f64) {
        let c = self.c;
        let h2 = self.h * self.h;
        let (mut l2, mut h1) = (0.0, 0.0);
        for b in 0..c {
            for x in 0..c {
                if !self.element_outside(perf, x, b) {
                    continue;
                }
                let nodes = self.element_nodes(x, b);
                let v = nodes.map(|i| e[i]);
                for li in 0..4 {
                    for lj in 0..4 {
                        l2 += h2 * Q1_MASS[li][lj] * v[li] * v[lj];
                        h1 += Q1_LAPLACE[li][lj] * v[li] * v[lj];
                    }
                }
            }
        }
        (l2, h1)
    }
}

/// Penalized reference solution on the global `n × n` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FineSolution {
    pub n: usize,
    /// Node `(i, j)` at `i + (n+1)·j`.
    pub values: Vec<f64>,
    pub kappa: f64,
    pub perf: PerforationSet,
    pub stats: CgStats,
    pub warnings: Vec<String>,
}

impl FineSolution {
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i + (self.n + 1) * j]
    }

    /// `(‖u‖_{L²(D_ε)}, |u|_{H¹(D_ε)})` over fine cells whose centre is outside `B_ε`.
    pub fn norms(&self) -> (f64, f64) {
        let n = self.n;
        let h = self.h();
        let (mut l2, mut h1) = (0.0, 0.0);
        for j in 0..n {
            for i in 0..n {
                if self.perf.indicator((i as f64 + 0.5) * h, (j as f64 + 0.5) * h) {
                    continue;
                }
                let v = CORNERS.map(|(dx, dy)| self.at(i + dx, j + dy));
                for a in 0..4 {
                    for b in 0..4 {
                        l2 += h * h * Q1_MASS[a][b] * v[a] * v[b];
                        h1 += Q1_LAPLACE[a][b] * v[a] * v[b];
                    }
                }
            }
        }
        (l2.sqrt(), h1.sqrt())
    }

    /// Bilinear interpolation at a point of the unit square.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let n = self.n as f64;
        let (fx, fy) = ((x * n).clamp(0.0, n), (y * n).clamp(0.0, n));
        let (i, j) = ((fx.floor() as usize).min(self.n - 1), (fy.floor() as usize).min(self.n - 1));
        let (s, t) = (fx - i as f64, fy - j as f64);
        (1.0 - s) * (1.0 - t) * self.at(i, j)
            + s * (1.0 - t) * self.at(i + 1, j)
            + s * t * self.at(i + 1, j + 1)
            + (1.0 - s) * t * self.at(i, j + 1)
    }
}

/// Options shared by the reference solve and the multiscale constructions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// `κ = penalty_scale / h²`.
    pub penalty_scale: f64,
    pub rel_tol: f64,
    /// Turn resolution warnings into errors.
    pub strict: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            penalty_scale: PENALTY_SCALE,
            rel_tol: 1e-10,
            strict: false,
        }
    }
}

/// Checks the four-cells-across rule; returns the warning (if any) or fails in strict mode.
pub fn resolution_check(perf: &PerforationSet, h: f64, strict: bool) -> Result<Option<String>> {
    match perf.resolution_warning(h) {
        Some(w) if strict => Err(MsfemError::Resolution(w)),
        other => Ok(other),
    }
}

/// Interior-node Laplacian plus nodal penalty on the global grid; boundary
/// rows are the identity.
struct GlobalOperator {
    n: usize,
    penalty: Vec<f64>,
}

impl GlobalOperator {
    fn boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n || j == self.n
    }

    fn diagonal(&self) -> Vec<f64> {
        let m = self.n + 1;
        (0..m * m)
            .map(|k| {
                let (i, j) = (k % m, k / m);
                if self.boundary(i, j) {
                    1.0
                } else {
                    8.0 / 3.0 + self.penalty[k]
                }
            })
            .collect()
    }
}

impl LinearOperator for GlobalOperator {
    fn dim(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let m = self.n + 1;
        for j in 0..m {
            for i in 0..m {
                let k = i + m * j;
                if self.boundary(i, j) {
                    y[k] = x[k];
                    continue;
                }
                let mut s = (8.0 / 3.0 + self.penalty[k]) * x[k];
                for dj in [j - 1, j, j + 1] {
                    for di in [i - 1, i, i + 1] {
                        if (di, dj) == (i, j) || self.boundary(di, dj) {
                            continue;
                        }
                        s -= x[di + m * dj] / 3.0;
                    }
                }
                y[k] = s;
            }
        }
    }
}

/// Bilinear FEM for `∫∇u·∇v + κ∫_B u v = ∫ f v` on `H¹₀` of the unit square.
pub fn reference_solve(perf: &PerforationSet, f: &Source, n: usize, opts: SolveOptions) -> Result<FineSolution> {
    if n < 2 {
        return Err(MsfemError::param("fine_n", "need at least 2 cells"));
    }
    let h = 1.0 / n as f64;
    let mut warnings = Vec::new();
    if let Some(w) = resolution_check(perf, h, opts.strict)? {
        warnings.push(w);
    }
    let kappa = opts.penalty_scale / (h * h);
    let m = n + 1;
    let mut penalty = vec![0.0; m * m];
    let mut fv = vec![0.0; m * m];
    for j in 0..m {
        for i in 0..m {
            let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
            if perf.indicator(x, y) {
                penalty[i + m * j] = kappa * h * h;
            }
            fv[i + m * j] = f.eval(x, y);
        }
    }
    let op = GlobalOperator { n, penalty };
    let mut b = vec![0.0; m * m];
    let w = [1.0, 4.0, 1.0];
    for j in 1..n {
        for i in 1..n {
            let mut s = 0.0;
            for (a, wa) in w.iter().enumerate() {
                for (c, wc) in w.iter().enumerate() {
                    s += wa * wc * fv[(i + a - 1) + m * (j + c - 1)];
                }
            }
            b[i + m * j] = s * h * h / 36.0;
        }
    }
    let pc = Jacobi::new(&op.diagonal());
    let mut x = vec![0.0; m * m];
    let stats = pcg(
        &op,
        &pc,
        &b,
        &mut x,
        CgOptions {
            rel_tol: opts.rel_tol,
            max_iter: (50.0 * (m as f64 * m as f64).sqrt()).ceil() as usize * 4,
            project_mean: false,
        },
    )?;
    Ok(FineSolution {
        n,
        values: x,
        kappa,
        perf: perf.clone(),
        stats,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_perforations, PerforationSpec};

    #[test]
    fn element_matrices_are_consistent() {
        for row in &Q1_LAPLACE {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
        let total: f64 = Q1_MASS.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn local_operator_has_zero_row_sums_without_penalty() {
        let mesh = CoarseMesh::new(2).unwrap();
        let g = ElementGrid::new(&mesh, (1, 0), 4, &PerforationSet::empty());
        let a = g.operator(1e8);
        let ones = vec![1.0; g.num_nodes()];
        let mut y = vec![0.0; g.num_nodes()];
        a.mul_vec(&ones, &mut y);
        assert!(y.iter().all(|v| v.abs() < 1e-13));
        let m = g.mass_apply(&ones);
        assert!((m.iter().sum::<f64>() - 0.25).abs() < 1e-14);
        let w: f64 = g.side_functional(Side::Left).iter().map(|p| p.1).sum();
        assert!((w - 0.5).abs() < 1e-14);
    }

    #[test]
    fn penalty_keeps_solution_small_in_holes() {
        let perf = build_perforations(&PerforationSpec::PeriodicDiscs {
            epsilon: 0.25,
            radius_factor: 0.3,
        })
        .unwrap();
        let u = reference_solve(&perf, &Source::Constant(1.0), 64, SolveOptions::default()).unwrap();
        let max = u.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut inside = 0.0_f64;
        for j in 0..=64 {
            for i in 0..=64 {
                if perf.indicator(i as f64 / 64.0, j as f64 / 64.0) {
                    inside = inside.max(u.at(i, j).abs());
                }
            }
        }
        assert!(max > 0.0 && inside <= 1e-4 * max);
    }
}
