//! Sparse and banded linear algebra shared by the periodic cell solver and the
//! perforated-domain finite element code.

use crate::error::{Error, Result};

/// Square operator `y = A x`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Approximate inverse `z ≈ A⁻¹ r`.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..n {
            row.clear();
            row.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            row.sort_unstable_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let (j, mut v) = row[k];
                k += 1;
                while k < row.len() && row[k].0 == j {
                    v += row[k].1;
                    k += 1;
                }
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds a matrix with a fixed pattern and zero values; `slot` can then be
    /// used to locate entries for repeated refills.
    pub fn from_pattern(n: usize, pattern: &[(usize, usize)]) -> Self {
        let t: Vec<_> = pattern.iter().map(|&(i, j)| (i, j, 0.0)).collect();
        Self::from_triplets(n, &t)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Index into the value array of entry `(i, j)`, if present in the pattern.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        cols.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| {
            self.row(i)
                .all(|(j, v)| (v - self.get(j, i)).abs() <= tol * v.abs().max(1.0))
        })
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }
}

/// Diagonal (Jacobi) preconditioner.
#[derive(Debug, Clone)]
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(diag: &[f64]) -> Self {
        let inv_diag = diag
            .iter()
            .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        Jacobi { inv_diag }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

/// Options for [`pcg`].
#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    /// Stop when `‖b - A x‖ ≤ rel_tol ‖b‖`.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Remove the constant mode from the residual each iteration (periodic
    /// problems whose kernel is the constants).
    pub project_mean: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CgStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Preconditioned conjugate gradients; `x` holds the initial guess on entry.
pub fn pcg<A, M>(a: &A, m: &M, b: &[f64], x: &mut [f64], opts: CgOptions) -> Result<CgStats>
where
    A: LinearOperator + ?Sized,
    M: Preconditioner + ?Sized,
{
    let n = a.dim();
    if b.len() != n || x.len() != n {
        return Err(Error::Dimension(format!(
            "operator of size {n}, rhs {}, unknown {}",
            b.len(),
            x.len()
        )));
    }
    let mut rhs = b.to_vec();
    if opts.project_mean {
        remove_mean(&mut rhs);
    }
    let b_norm = dot(&rhs, &rhs).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            rel_residual: 0.0,
        });
    }

    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(&rhs) {
        *ri = bi - *ri;
    }
    if opts.project_mean {
        remove_mean(&mut r);
    }
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / b_norm;
    let mut it = 0;
    while res > opts.rel_tol {
        if it >= opts.max_iter {
            return Err(Error::Solver {
                iterations: it,
                residual: res,
            });
        }
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Solver {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if opts.project_mean {
            remove_mean(&mut r);
        }
        m.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        it += 1;
    }
    if opts.project_mean {
        remove_mean(x);
    }
    Ok(CgStats {
        iterations: it,
        rel_residual: res,
    })
}

/// Symmetric positive definite matrix in lower band storage.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    // row i holds columns i-bw ..= i
    data: Vec<f64>,
}

/// Row at which a banded Cholesky factorization met a non-positive pivot.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("matrix is not positive definite (pivot {pivot:.3e} at row {row})")]
pub struct NotPositiveDefinite {
    pub row: usize,
    pub pivot: f64,
}

impl BandedSpd {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        BandedSpd {
            n,
            bw: bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`). Panics when the entry
    /// lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i},{j}) outside bandwidth {}", self.bw);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Replaces row and column `i` by the identity (homogeneous Dirichlet).
    pub fn pin(&mut self, i: usize) {
        for j in i.saturating_sub(self.bw)..i {
            let k = self.idx(i, j);
            self.data[k] = 0.0;
        }
        for r in i + 1..(i + self.bw + 1).min(self.n) {
            let k = self.idx(r, i);
            self.data[k] = 0.0;
        }
        let k = self.idx(i, i);
        self.data[k] = 1.0;
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            for j in j0..i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += self.data[self.idx(i, i)] * x[i];
        }
    }

    /// In-place Cholesky factorization `A = L Lᵀ`.
    pub fn factor(mut self) -> std::result::Result<BandedCholesky, NotPositiveDefinite> {
        let w = self.bw + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            for j in j0..=i {
                // columns k in [j0, j) are shared by rows i and j
                let ri = i * w + (j0 + self.bw - i);
                let rj = j * w + (j0 + self.bw - j);
                let len = j - j0;
                let s: f64 = self.data[ri..ri + len]
                    .iter()
                    .zip(&self.data[rj..rj + len])
                    .map(|(a, b)| a * b)
                    .sum();
                let k = i * w + (j + self.bw - i);
                let v = self.data[k] - s;
                if i == j {
                    if v <= 0.0 || !v.is_finite() {
                        return Err(NotPositiveDefinite { row: i, pivot: v });
                    }
                    self.data[k] = v.sqrt();
                } else {
                    let djj = self.data[j * w + self.bw];
                    self.data[k] = v / djj;
                }
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

impl LinearOperator for BandedSpd {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec(x, y)
    }
}

/// Cholesky factor of a [`BandedSpd`] matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    l: BandedSpd,
}

impl BandedCholesky {
    pub fn dim(&self) -> usize {
        self.l.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let l = &self.l;
        let w = l.bw + 1;
        for i in 0..l.n {
            let j0 = i.saturating_sub(l.bw);
            let row = &l.data[i * w + (j0 + l.bw - i)..i * w + l.bw];
            let s: f64 = row.iter().zip(&b[j0..i]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - s) / l.data[i * w + l.bw];
        }
        for i in (0..l.n).rev() {
            b[i] /= l.data[i * w + l.bw];
            let bi = b[i];
            let j0 = i.saturating_sub(l.bw);
            for j in j0..i {
                b[j] -= l.data[i * w + (j + l.bw - i)] * bi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Solves a small dense system by Gaussian elimination with partial pivoting.
/// Returns `None` when the matrix is numerically singular.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| a[c][k] * b[k]).sum();
        b[c] = (b[c] - s) / a[c][c];
    }
    Some(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        t
    }

    #[test]
    fn csr_sums_duplicates_and_finds_slots() {
        let m = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.nnz(), 2);
        assert!(m.slot(1, 1).is_none());
    }

    #[test]
    fn pcg_matches_banded_cholesky() {
        let n = 50;
        let a = CsrMatrix::from_triplets(n, &laplacian_1d(n));
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = vec![0.0; n];
        let st = pcg(
            &a,
            &Jacobi::new(&a.diagonal()),
            &b,
            &mut x,
            CgOptions {
                rel_tol: 1e-12,
                max_iter: 1000,
                project_mean: false,
            },
        )
        .unwrap();
        assert!(st.rel_residual <= 1e-12);

        let mut band = BandedSpd::zeros(n, 1);
        for (i, j, v) in laplacian_1d(n) {
            if i >= j {
                band.add(i, j, v);
            }
        }
        let y = band.factor().unwrap().solve(&b);
        for i in 0..n {
            assert!((x[i] - y[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn pcg_reports_non_convergence() {
        let n = 200;
        let a = CsrMatrix::from_triplets(n, &laplacian_1d(n));
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let err = pcg(
            &a,
            &Jacobi::new(&a.diagonal()),
            &b,
            &mut x,
            CgOptions {
                rel_tol: 1e-12,
                max_iter: 3,
                project_mean: false,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Solver { iterations: 3, .. }));
    }

    #[test]
    fn banded_rejects_indefinite_and_pins_rows() {
        let mut a = BandedSpd::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        assert_eq!(a.clone().factor().unwrap_err().row, 1);
        a.pin(1);
        let x = a.factor().unwrap().solve(&[3.0, 0.0]);
        assert_eq!(x, vec![3.0, 0.0]);
    }

    #[test]
    fn dense_solve_pivots() {
        let x = dense_solve(vec![vec![0.0, 1.0], vec![2.0, 0.0]], vec![3.0, 4.0]).unwrap();
        assert_eq!(x, vec![2.0, 3.0]);
        assert!(dense_solve(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 1.0]).is_none());
    }
}
