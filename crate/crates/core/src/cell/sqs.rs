//! Auxiliary integrals for the SQS selection conditions.

use super::CellSolver;
use crate::error::{Error, Result};
use crate::field::{Configuration, FieldLaw};
use crate::tensor::Tensor2;

/// Kernel integrals for `A = C0 + X·C1` with centred i.i.d. `X`.
///
/// Column `q` of every stored matrix corresponds to the direction `e_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SqsAuxiliary {
    pub n: usize,
    pub r: usize,
    pub c0: Tensor2,
    pub c1: Tensor2,
    /// Bernoulli parameter used for centring the draws.
    pub prob: f64,
    /// `I^N_{0,o}` for `o = ox + n·oy`.
    pub kernel: Vec<Tensor2>,
    /// Side of the periodic box standing in for the whole plane.
    pub n_big: usize,
    /// `I^{N_big}_{0,o}`, the proxy for `I_o^∞`.
    pub kernel_big: Vec<Tensor2>,
    /// `E[X̃_0²] I_0^∞`.
    pub rhs_second_moments: Tensor2,
    pub solves: usize,
}

impl SqsAuxiliary {
    /// `I^N_{k,j}`.
    pub fn i_nn(&self, k: (usize, usize), j: (usize, usize)) -> Tensor2 {
        let n = self.n;
        let ox = (j.0 + n - k.0 % n) % n;
        let oy = (j.1 + n - k.1 % n) % n;
        self.kernel[ox + n * oy]
    }

    /// Proxy for `I_k^∞` at a signed lattice offset.
    pub fn i_inf(&self, k: (i64, i64)) -> Tensor2 {
        let m = self.n_big as i64;
        let (x, y) = (k.0.rem_euclid(m) as usize, k.1.rem_euclid(m) as usize);
        self.kernel_big[x + self.n_big * y]
    }
}

fn kernel(solver: &CellSolver, c0: Tensor2, c1: Tensor2) -> Result<Vec<Tensor2>> {
    let grid = solver.grid();
    let n = grid.n;
    let cells = vec![c0; n * n];
    let mut cols = Vec::with_capacity(2);
    for p in [[1.0, 0.0], [0.0, 1.0]] {
        let src = c1.apply(p);
        let load = grid.divergence_load(|k| (k == 0).then_some(src));
        let (phi, _) = solver.solve_load(&cells, &load)?;
        cols.push(grid.cell_gradient_integrals(&phi));
    }
    Ok((0..n * n)
        .map(|o| Tensor2::from_columns(c1.apply(cols[0][o]), c1.apply(cols[1][o])))
        .collect())
}

/// Kernel integrals on `Q_n` and on the enlarged box `max(3n, 24)`.
pub fn sqs_auxiliary(c0: Tensor2, c1: Tensor2, n: usize, r: usize, prob: f64) -> Result<SqsAuxiliary> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::param("p", format!("{prob} is not a probability")));
    }
    if !(c0.sym_eigenvalues()[0] > 0.0) || !c0.is_symmetric(1e-12) {
        return Err(Error::Ellipticity(format!("c0 = {c0} is not positive definite")));
    }
    let small = CellSolver::new(n, r)?;
    let n_big = (3 * n).max(24);
    let big = CellSolver::new(n_big, r)?;
    let kernel_small = kernel(&small, c0, c1)?;
    let kernel_big = kernel(&big, c0, c1)?;
    let rhs = kernel_big[0] * (prob * (1.0 - prob));
    Ok(SqsAuxiliary {
        n,
        r,
        c0,
        c1,
        prob,
        kernel: kernel_small,
        n_big,
        kernel_big,
        rhs_second_moments: rhs,
        solves: 4,
    })
}

/// [`sqs_auxiliary`] for the centred decomposition of `law`.
pub fn sqs_auxiliary_for_law(law: &FieldLaw, n: usize, r: usize) -> Result<SqsAuxiliary> {
    law.validate()?;
    let (c0, c1, p) = law.centered_decomposition();
    sqs_auxiliary(c0, c1, n, r, p)
}

/// `(s1, s2_residual)`: the centred volume fraction and the Frobenius norm of
/// the second-order condition residual.
pub fn sqs_condition_values(cfg: &Configuration, aux: &SqsAuxiliary) -> (f64, f64) {
    let n = cfg.n;
    assert_eq!(n, aux.n, "auxiliary integrals built for another box size");
    let cells = (n * n) as f64;
    let s1 = (cfg.count_ones() as f64 - aux.prob * cells) / cells;
    let x: Vec<f64> = cfg.draws.iter().map(|&d| d as f64 - aux.prob).collect();
    let mut lhs = Tensor2::ZERO;
    for oy in 0..n {
        for ox in 0..n {
            let mut corr = 0.0;
            for ky in 0..n {
                let jy = (ky + oy) % n;
                for kx in 0..n {
                    let jx = (kx + ox) % n;
                    corr += x[kx + n * ky] * x[jx + n * jy];
                }
            }
            if corr != 0.0 {
                lhs += aux.kernel[ox + n * oy] * corr;
            }
        }
    }
    let lhs = lhs * (1.0 / cells);
    (s1, (lhs - aux.rhs_second_moments).frobenius())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sqs1_exact_sample;

    fn aux(c1: f64) -> SqsAuxiliary {
        sqs_auxiliary(Tensor2::scalar(11.5), Tensor2::scalar(c1), 6, 2, 0.5).unwrap()
    }

    #[test]
    fn zero_perturbation_gives_zero_integrals() {
        let a = aux(0.0);
        assert!(a.kernel.iter().chain(&a.kernel_big).all(|t| t.max_abs() == 0.0));
    }

    #[test]
    fn kernel_is_translation_invariant() {
        let a = aux(17.0);
        let solver = CellSolver::new(6, 2).unwrap();
        let grid = solver.grid();
        let k = (2usize, 4usize);
        let src = a.c1.apply([1.0, 0.0]);
        let load = grid.divergence_load(|c| (c == k.0 + 6 * k.1).then_some(src));
        let (phi, _) = solver.solve_load(&vec![a.c0; 36], &load).unwrap();
        let g = grid.cell_gradient_integrals(&phi);
        for jy in 0..6 {
            for jx in 0..6 {
                let direct = a.c1.apply(g[jx + 6 * jy]);
                let shifted = a.i_nn(k, (jx, jy)).apply([1.0, 0.0]);
                assert!((direct[0] - shifted[0]).abs() < 1e-8 && (direct[1] - shifted[1]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn kernel_sums_to_zero_over_the_box() {
        let a = aux(17.0);
        let scale = a.kernel.iter().map(|t| t.max_abs()).fold(0.0, f64::max);
        let total = a.kernel.iter().fold(Tensor2::ZERO, |s, t| s + *t);
        assert!(scale > 0.0 && total.max_abs() < 1e-8 * scale.max(1.0));
    }

    #[test]
    fn first_condition_values() {
        let a = aux(17.0);
        let balanced = sqs1_exact_sample(6, 3, 0, 0.5).unwrap();
        assert_eq!(sqs_condition_values(&balanced, &a).0, 0.0);
        let ones = Configuration::from_draws(6, vec![1; 36]).unwrap();
        assert_eq!(sqs_condition_values(&ones, &a).0, 0.5);
    }

    #[test]
    fn second_condition_residual_spreads() {
        let a = sqs_auxiliary(Tensor2::scalar(11.5), Tensor2::scalar(17.0), 8, 2, 0.5).unwrap();
        let mut s2: Vec<f64> = (0..2000)
            .map(|i| sqs_condition_values(&sqs1_exact_sample(8, 5, i, 0.5).unwrap(), &a).1)
            .collect();
        s2.sort_by(f64::total_cmp);
        assert!(s2[s2.len() - 1] > s2[0]);
        assert!(s2[100] < s2[1000]);
    }
}
