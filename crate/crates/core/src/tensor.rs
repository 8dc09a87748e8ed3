//! Small fixed-size 2×2 matrices used for coefficients and homogenized tensors.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

/// A 2×2 real matrix stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tensor2(pub [[f64; 2]; 2]);

/// The three distinct entries of a symmetric 2×2 tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Entry {
    A11,
    A12,
    A22,
}

impl Entry {
    pub const ALL: [Entry; 3] = [Entry::A11, Entry::A12, Entry::A22];

    pub fn index(self) -> (usize, usize) {
        match self {
            Entry::A11 => (0, 0),
            Entry::A12 => (0, 1),
            Entry::A22 => (1, 1),
        }
    }

    pub fn position(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Entry::A11 => "a11",
            Entry::A12 => "a12",
            Entry::A22 => "a22",
        }
    }

    pub fn parse(s: &str) -> Option<Entry> {
        Entry::ALL.into_iter().find(|e| e.label() == s)
    }
}

impl fmt::Display for Entry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Tensor2 {
    pub const ZERO: Tensor2 = Tensor2([[0.0; 2]; 2]);
    pub const IDENTITY: Tensor2 = Tensor2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Tensor2([[a11, a12], [a21, a22]])
    }

    pub fn symmetric(a11: f64, a12: f64, a22: f64) -> Self {
        Tensor2([[a11, a12], [a12, a22]])
    }

    pub fn scalar(c: f64) -> Self {
        Tensor2([[c, 0.0], [0.0, c]])
    }

    pub fn diag(a11: f64, a22: f64) -> Self {
        Tensor2([[a11, 0.0], [0.0, a22]])
    }

    pub fn from_columns(c0: [f64; 2], c1: [f64; 2]) -> Self {
        Tensor2([[c0[0], c1[0]], [c0[1], c1[1]]])
    }

    pub fn column(&self, j: usize) -> [f64; 2] {
        [self.0[0][j], self.0[1][j]]
    }

    pub fn entry(&self, e: Entry) -> f64 {
        let (i, j) = e.index();
        self.0[i][j]
    }

    pub fn transpose(&self) -> Self {
        let a = self.0;
        Tensor2([[a[0][0], a[1][0]], [a[0][1], a[1][1]]])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let a = self.0;
        Some(Tensor2([
            [a[1][1] / d, -a[0][1] / d],
            [-a[1][0] / d, a[0][0] / d],
        ]))
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        (self.0[0][1] - self.0[1][0]).abs() <= rel_tol * self.frobenius().max(f64::MIN_POSITIVE)
    }

    /// Symmetric part (A + Aᵀ)/2.
    pub fn sym(&self) -> Self {
        let a12 = 0.5 * (self.0[0][1] + self.0[1][0]);
        Tensor2([[self.0[0][0], a12], [a12, self.0[1][1]]])
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn sym_eigenvalues(&self) -> [f64; 2] {
        let s = self.sym();
        let m = 0.5 * s.trace();
        let d = (0.25 * (s.0[0][0] - s.0[1][1]).powi(2) + s.0[0][1].powi(2)).sqrt();
        [m - d, m + d]
    }

    /// Congruence `g · self · gᵀ`.
    pub fn congruence(&self, g: &Tensor2) -> Self {
        *g * *self * g.transpose()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let a = self.0;
        Tensor2([[f(a[0][0]), f(a[0][1])], [f(a[1][0]), f(a[1][1])]])
    }

    pub fn zip_map(&self, other: &Tensor2, f: impl Fn(f64, f64) -> f64) -> Self {
        let (a, b) = (self.0, other.0);
        Tensor2([
            [f(a[0][0], b[0][0]), f(a[0][1], b[0][1])],
            [f(a[1][0], b[1][0]), f(a[1][1], b[1][1])],
        ])
    }
}

impl Index<(usize, usize)> for Tensor2 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for Tensor2 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.0[i][j]
    }
}

impl Add for Tensor2 {
    type Output = Tensor2;
    fn add(self, rhs: Tensor2) -> Tensor2 {
        self.zip_map(&rhs, |a, b| a + b)
    }
}

impl AddAssign for Tensor2 {
    fn add_assign(&mut self, rhs: Tensor2) {
        *self = *self + rhs;
    }
}

impl Sub for Tensor2 {
    type Output = Tensor2;
    fn sub(self, rhs: Tensor2) -> Tensor2 {
        self.zip_map(&rhs, |a, b| a - b)
    }
}

impl SubAssign for Tensor2 {
    fn sub_assign(&mut self, rhs: Tensor2) {
        *self = *self - rhs;
    }
}

impl Neg for Tensor2 {
    type Output = Tensor2;
    fn neg(self) -> Tensor2 {
        self.map(|a| -a)
    }
}

impl Mul<f64> for Tensor2 {
    type Output = Tensor2;
    fn mul(self, s: f64) -> Tensor2 {
        self.map(|a| a * s)
    }
}

impl Mul<Tensor2> for f64 {
    type Output = Tensor2;
    fn mul(self, t: Tensor2) -> Tensor2 {
        t * self
    }
}

impl Mul for Tensor2 {
    type Output = Tensor2;
    fn mul(self, rhs: Tensor2) -> Tensor2 {
        let (a, b) = (self.0, rhs.0);
        let mut c = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Tensor2(c)
    }
}

impl fmt::Display for Tensor2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.0;
        write!(f, "[[{}, {}], [{}, {}]]", a[0][0], a[0][1], a[1][0], a[1][1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_diagonal_and_rotated() {
        let t = Tensor2::diag(2.0, 5.0);
        assert_eq!(t.sym_eigenvalues(), [2.0, 5.0]);
        let (c, s) = (0.3_f64.cos(), 0.3_f64.sin());
        let r = Tensor2::new(c, -s, s, c);
        let e = t.congruence(&r).sym_eigenvalues();
        assert!((e[0] - 2.0).abs() < 1e-12 && (e[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_roundtrip() {
        let t = Tensor2::symmetric(3.0, 1.0, 2.0);
        let p = t * t.inverse().unwrap();
        assert!((p - Tensor2::IDENTITY).max_abs() < 1e-14);
        assert!(Tensor2::ZERO.inverse().is_none());
    }
}
