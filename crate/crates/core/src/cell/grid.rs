//! Bilinear (Q1) finite elements on the periodic square `Q_N = [0, N)²` with `r`
//! elements per unit cell along each axis.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::linalg::{LinearOperator, Preconditioner};
use crate::tensor::Tensor2;

/// Local node order on an element: (0,0), (1,0), (1,1), (0,1).
pub(crate) const LOCAL_OFFSETS: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

/// `∫_e ∇φ_i` divided by the element size `h`.
pub(crate) const GRAD_INTEGRALS: [[f64; 2]; 4] = [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]];

/// Reference Q1 stiffness blocks `∫ ∂_a φ_i ∂_b φ_j` on a square element (they
/// do not depend on the element size in two dimensions).
#[derive(Debug, Clone, Copy)]
pub struct Q1Blocks {
    pub xx: [[f64; 4]; 4],
    pub yy: [[f64; 4]; 4],
    /// Symmetrized mixed block `∫ ∂_x φ_i ∂_y φ_j + ∂_y φ_i ∂_x φ_j`.
    pub xy: [[f64; 4]; 4],
}

impl Q1Blocks {
    pub fn new() -> Self {
        // 2-point Gauss is exact for these (bi)quadratic integrands.
        let g = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
        let grad = |i: usize, x: f64, y: f64| -> [f64; 2] {
            let (xi, yi) = LOCAL_OFFSETS[i];
            let (fx, dfx) = if xi == 1 { (x, 1.0) } else { (1.0 - x, -1.0) };
            let (fy, dfy) = if yi == 1 { (y, 1.0) } else { (1.0 - y, -1.0) };
            [dfx * fy, fx * dfy]
        };
        let mut b = Q1Blocks {
            xx: [[0.0; 4]; 4],
            yy: [[0.0; 4]; 4],
            xy: [[0.0; 4]; 4],
        };
        for &x in &g {
            for &y in &g {
                for i in 0..4 {
                    let gi = grad(i, x, y);
                    for j in 0..4 {
                        let gj = grad(j, x, y);
                        b.xx[i][j] += 0.25 * gi[0] * gj[0];
                        b.yy[i][j] += 0.25 * gi[1] * gj[1];
                        b.xy[i][j] += 0.25 * (gi[0] * gj[1] + gi[1] * gj[0]);
                    }
                }
            }
        }
        b
    }

    /// Element stiffness for a constant symmetric coefficient.
    pub fn stiffness(&self, a: &Tensor2) -> [[f64; 4]; 4] {
        let mut k = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                k[i][j] = a[(0, 0)] * self.xx[i][j] + a[(1, 1)] * self.yy[i][j] + a[(0, 1)] * self.xy[i][j];
            }
        }
        k
    }
}

impl Default for Q1Blocks {
    fn default() -> Self {
        Self::new()
    }
}

/// Periodic fine grid of `m = n·r` nodes per side. Node `(a, b)` sits at
/// `(a/r, b/r)` and has index `a + m·b`; element `(a, b)` spans
/// `[a/r, (a+1)/r] × [b/r, (b+1)/r]` and lies in unit cell `(a/r, b/r)`.
#[derive(Debug, Clone)]
pub struct PeriodicGrid {
    pub n: usize,
    pub r: usize,
    m: usize,
    /// Nine stencil neighbours per node, slot `(dx+1) + 3(dy+1)`.
    cols: Vec<u32>,
    blocks: Q1Blocks,
}

impl PeriodicGrid {
    pub fn new(n: usize, r: usize) -> Self {
        assert!(n >= 1 && r >= 1, "grid needs n >= 1 and r >= 1");
        let m = n * r;
        let mut cols = Vec::with_capacity(9 * m * m);
        for b in 0..m {
            for a in 0..m {
                for dy in [m - 1, 0, 1] {
                    for dx in [m - 1, 0, 1] {
                        let (x, y) = ((a + dx) % m, (b + dy) % m);
                        cols.push((x + m * y) as u32);
                    }
                }
            }
        }
        PeriodicGrid {
            n,
            r,
            m,
            cols,
            blocks: Q1Blocks::new(),
        }
    }

    /// Nodes (and elements) per side.
    pub fn side(&self) -> usize {
        self.m
    }

    pub fn num_dofs(&self) -> usize {
        self.m * self.m
    }

    pub fn num_elements(&self) -> usize {
        self.m * self.m
    }

    pub fn h(&self) -> f64 {
        1.0 / self.r as f64
    }

    #[inline]
    pub fn node(&self, a: usize, b: usize) -> usize {
        (a % self.m) + self.m * (b % self.m)
    }

    #[inline]
    pub fn element_nodes(&self, a: usize, b: usize) -> [usize; 4] {
        LOCAL_OFFSETS.map(|(dx, dy)| self.node(a + dx, b + dy))
    }

    /// Unit cell index (row-major over the `n × n` lattice) containing element `(a, b)`.
    #[inline]
    pub fn element_cell(&self, a: usize, b: usize) -> usize {
        a / self.r + self.n * (b / self.r)
    }

    /// Stiffness operator `∫ A ∇u · ∇v` for cell-wise constant `A`
    /// (`cells` row-major over the lattice).
    pub fn stiffness(&self, cells: &[Tensor2]) -> StencilOperator<'_> {
        assert_eq!(cells.len(), self.n * self.n, "one coefficient per unit cell");
        let local: Vec<[[f64; 4]; 4]> = cells.iter().map(|a| self.blocks.stiffness(a)).collect();
        let mut values = vec![0.0; 9 * self.num_dofs()];
        for b in 0..self.m {
            for a in 0..self.m {
                let k = &local[self.element_cell(a, b)];
                let nodes = self.element_nodes(a, b);
                for (li, &(xi, yi)) in LOCAL_OFFSETS.iter().enumerate() {
                    let row = nodes[li];
                    for (lj, &(xj, yj)) in LOCAL_OFFSETS.iter().enumerate() {
                        let dx = (xj as isize - xi as isize + 1) as usize;
                        let dy = (yj as isize - yi as isize + 1) as usize;
                        values[9 * row + dx + 3 * dy] += k[li][lj];
                    }
                }
            }
        }
        StencilOperator { grid: self, values }
    }

    /// Load vector `-∫ s · ∇v` for a source vector field constant on each
    /// unit cell (`None` cells contribute nothing).
    pub fn divergence_load(&self, source: impl Fn(usize) -> Option<[f64; 2]>) -> Vec<f64> {
        let h = self.h();
        let mut f = vec![0.0; self.num_dofs()];
        for b in 0..self.m {
            for a in 0..self.m {
                let Some(s) = source(self.element_cell(a, b)) else {
                    continue;
                };
                if s == [0.0, 0.0] {
                    continue;
                }
                for (li, node) in self.element_nodes(a, b).into_iter().enumerate() {
                    let g = GRAD_INTEGRALS[li];
                    f[node] -= h * (s[0] * g[0] + s[1] * g[1]);
                }
            }
        }
        f
    }

    /// `∫_{Q+k} ∇w` for every unit cell `k`, exact for bilinear `w`.
    pub fn cell_gradient_integrals(&self, w: &[f64]) -> Vec<[f64; 2]> {
        let h = self.h();
        let mut out = vec![[0.0; 2]; self.n * self.n];
        for b in 0..self.m {
            for a in 0..self.m {
                let c = &mut out[self.element_cell(a, b)];
                for (li, node) in self.element_nodes(a, b).into_iter().enumerate() {
                    let g = GRAD_INTEGRALS[li];
                    c[0] += h * g[0] * w[node];
                    c[1] += h * g[1] * w[node];
                }
            }
        }
        out
    }

    /// `∫_{Q_N} (p + ∇u)ᵀ A (p + ∇v)` evaluated element by element.
    pub fn energy(&self, cells: &[Tensor2], p: [f64; 2], u: &[f64], v: &[f64]) -> f64 {
        let h = self.h();
        let area = h * h;
        let mut total = 0.0;
        for b in 0..self.m {
            for a in 0..self.m {
                let k = self.blocks.stiffness(&cells[self.element_cell(a, b)]);
                let nodes = self.element_nodes(a, b);
                let ue: [f64; 4] = nodes.map(|i| u[i]);
                let ve: [f64; 4] = nodes.map(|i| v[i]);
                let mut gu = [0.0; 2];
                let mut gv = [0.0; 2];
                for li in 0..4 {
                    for d in 0..2 {
                        gu[d] += h * GRAD_INTEGRALS[li][d] * ue[li];
                        gv[d] += h * GRAD_INTEGRALS[li][d] * ve[li];
                    }
                }
                let am = cells[self.element_cell(a, b)];
                let ap = am.apply(p);
                // constant·constant, constant·gradient and gradient·gradient parts
                total += area * (p[0] * ap[0] + p[1] * ap[1]);
                total += ap[0] * gv[0] + ap[1] * gv[1] + ap[0] * gu[0] + ap[1] * gu[1];
                for i in 0..4 {
                    for j in 0..4 {
                        total += ue[i] * k[i][j] * ve[j];
                    }
                }
            }
        }
        total
    }
}

/// Assembled periodic stiffness with a fixed 9-point pattern.
#[derive(Debug, Clone)]
pub struct StencilOperator<'g> {
    grid: &'g PeriodicGrid,
    values: Vec<f64>,
}

impl StencilOperator<'_> {
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.grid.num_dofs()).map(|i| self.values[9 * i + 4]).collect()
    }
}

impl LinearOperator for StencilOperator<'_> {
    fn dim(&self) -> usize {
        self.grid.num_dofs()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let cols = &self.grid.cols;
        for (i, yi) in y.iter_mut().enumerate() {
            let base = 9 * i;
            let mut s = 0.0;
            for k in base..base + 9 {
                s += self.values[k] * x[cols[k] as usize];
            }
            *yi = s;
        }
    }
}

/// Exact inverse (on mean-zero vectors) of the constant-coefficient periodic Q1
/// Laplacian `c·(K_xx + K_yy)`, applied through 2D FFTs.
pub struct FftLaplacePreconditioner {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    inv_symbol: Vec<f64>,
}

impl std::fmt::Debug for FftLaplacePreconditioner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftLaplacePreconditioner").field("m", &self.m).finish()
    }
}

impl FftLaplacePreconditioner {
    pub fn new(m: usize, conductivity: f64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let theta = |k: usize| 2.0 * std::f64::consts::PI * k as f64 / m as f64;
        let lam: Vec<f64> = (0..m).map(|k| 2.0 - 2.0 * theta(k).cos()).collect();
        let mu: Vec<f64> = (0..m).map(|k| (4.0 + 2.0 * theta(k).cos()) / 6.0).collect();
        let mut inv_symbol = vec![0.0; m * m];
        for ky in 0..m {
            for kx in 0..m {
                let s = conductivity * (lam[kx] * mu[ky] + mu[kx] * lam[ky]);
                inv_symbol[kx + m * ky] = if kx == 0 && ky == 0 || s <= 0.0 {
                    0.0
                } else {
                    1.0 / (s * (m * m) as f64)
                };
            }
        }
        FftLaplacePreconditioner {
            m,
            forward,
            inverse,
            inv_symbol,
        }
    }

    fn transform(&self, buf: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let m = self.m;
        for row in buf.chunks_exact_mut(m) {
            fft.process(row);
        }
        let mut col = vec![Complex64::default(); m];
        for x in 0..m {
            for y in 0..m {
                col[y] = buf[x + m * y];
            }
            fft.process(&mut col);
            for y in 0..m {
                buf[x + m * y] = col[y];
            }
        }
    }
}

impl Preconditioner for FftLaplacePreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let mut buf: Vec<Complex64> = r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        for (c, s) in buf.iter_mut().zip(&self.inv_symbol) {
            *c *= *s;
        }
        self.transform(&mut buf, &self.inverse);
        for (zi, c) in z.iter_mut().zip(&buf) {
            *zi = c.re;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q1_laplacian_stencil() {
        let b = Q1Blocks::new();
        let k = b.stiffness(&Tensor2::IDENTITY);
        assert!((k[0][0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((k[0][1] + 1.0 / 6.0).abs() < 1e-14);
        assert!((k[0][2] + 1.0 / 3.0).abs() < 1e-14);
        for row in &k {
            assert!(row.iter().sum::<f64>().abs() < 1e-14);
        }
        let g = PeriodicGrid::new(2, 3);
        let op = g.stiffness(&vec![Tensor2::IDENTITY; 4]);
        assert!(op.diagonal().iter().all(|d| (d - 8.0 / 3.0).abs() < 1e-13));
    }

    #[test]
    fn fft_preconditioner_inverts_constant_operator() {
        let g = PeriodicGrid::new(3, 4);
        let op = g.stiffness(&vec![Tensor2::scalar(2.5); 9]);
        let pc = FftLaplacePreconditioner::new(g.side(), 2.5);
        let mut x: Vec<f64> = (0..g.num_dofs()).map(|i| ((i * 7919) % 13) as f64).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        x.iter_mut().for_each(|v| *v -= mean);
        let mut y = vec![0.0; x.len()];
        op.apply(&x, &mut y);
        let mut z = vec![0.0; x.len()];
        pc.apply(&y, &mut z);
        for (a, b) in x.iter().zip(&z) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn divergence_load_has_zero_sum() {
        let g = PeriodicGrid::new(4, 2);
        let f = g.divergence_load(|k| Some([k as f64, 1.0 - k as f64]));
        assert!(f.iter().sum::<f64>().abs() < 1e-12);
    }
}
