//! One- and two-defect cell problems for the perturbed periodic law.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::CellSolver;
use crate::error::{Error, Result};
use crate::field::{CoefficientField, FieldLaw};
use crate::tensor::Tensor2;

/// First- and second-order defect contributions at truncation size `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectCoefficients {
    pub n: usize,
    pub r: usize,
    pub order: u8,
    pub a_per_star: Tensor2,
    /// `∫_{Q_N} [(A_per + 1_Q C_per)(e_i + ∇w_i^N) − A_per(e_i + ∇w_i^0)]`.
    pub a_1def: Tensor2,
    /// Pair corrections keyed by offset `(dx, dy) mod n`; every catalogued
    /// offset is present together with its opposite.
    pub a_2def: BTreeMap<(usize, usize), Tensor2>,
    /// Pair-distance cutoff of the catalogue.
    pub pair_radius: f64,
    /// Cell problems solved to build this table (two directions each).
    pub solves: usize,
}

impl DefectCoefficients {
    /// Pair correction for offset `o`; zero outside the catalogue.
    pub fn pair(&self, o: (usize, usize)) -> Tensor2 {
        self.a_2def
            .get(&(o.0 % self.n, o.1 % self.n))
            .copied()
            .unwrap_or(Tensor2::ZERO)
    }

    /// `Σ_o 𝒜^2def(o)` over the catalogue.
    pub fn pair_sum(&self) -> Tensor2 {
        self.a_2def.values().fold(Tensor2::ZERO, |acc, t| acc + *t)
    }
}

/// Integer lattice maps `G` (as matrices) with `G M Gᵀ = M` for every `M` given.
pub fn lattice_symmetries(invariant: &[Tensor2]) -> Vec<Tensor2> {
    let mut out = Vec::new();
    for swap in [false, true] {
        for sx in [1.0, -1.0] {
            for sy in [1.0, -1.0] {
                let g = if swap {
                    Tensor2::new(0.0, sx, sy, 0.0)
                } else {
                    Tensor2::new(sx, 0.0, 0.0, sy)
                };
                let ok = invariant
                    .iter()
                    .all(|m| (m.congruence(&g) - *m).max_abs() <= 1e-12 * m.max_abs().max(1.0));
                if ok {
                    out.push(g);
                }
            }
        }
    }
    out
}

fn signed(d: usize, n: usize) -> i64 {
    if 2 * d > n {
        d as i64 - n as i64
    } else {
        d as i64
    }
}

fn wrap(v: i64, n: usize) -> usize {
    v.rem_euclid(n as i64) as usize
}

fn perturbed_parts(law: &FieldLaw) -> Result<(Tensor2, Tensor2)> {
    match law {
        FieldLaw::PerturbedPeriodic { a_per, c_per, .. } => Ok((*a_per, *c_per)),
        FieldLaw::Checkerboard { .. } => Err(Error::param(
            "law",
            "defect problems need a perturbed periodic law",
        )),
    }
}

fn defect_field(n: usize, a_per: Tensor2, c_per: Tensor2, defects: &[(usize, usize)]) -> CoefficientField {
    let mut f = CoefficientField::constant(n, a_per);
    for &(i, j) in defects {
        f.cells[i + n * j] = a_per + c_per;
    }
    f
}

/// `n²(A*_N(defect at k) − A*_per)` with the solver's grid.
pub fn one_defect_contribution(solver: &CellSolver, law: &FieldLaw, k: (usize, usize)) -> Result<Tensor2> {
    let (a_per, c_per) = perturbed_parts(law)?;
    let n = solver.grid().n;
    let base = solver.homogenize(&CoefficientField::constant(n, a_per))?;
    let t = solver.homogenize(&defect_field(n, a_per, c_per, &[(k.0 % n, k.1 % n)]))?;
    Ok((t - base) * (n * n) as f64)
}

/// Builds the defect table; order 2 adds the two-defect catalogue up to
/// periodic distance `n/2`, solving one problem per symmetry orbit.
pub fn defect_coefficients(law: &FieldLaw, n: usize, r: usize, order: u8) -> Result<DefectCoefficients> {
    let solver = CellSolver::new(n, r)?;
    defect_coefficients_with(&solver, law, order)
}

pub fn defect_coefficients_with(solver: &CellSolver, law: &FieldLaw, order: u8) -> Result<DefectCoefficients> {
    let (a_per, c_per) = perturbed_parts(law)?;
    let n = solver.grid().n;
    let r = solver.grid().r;
    if n < 2 {
        return Err(Error::param("n", "defect problems need n >= 2"));
    }
    if !(order == 1 || order == 2) {
        return Err(Error::param("order", format!("must be 1 or 2, got {order}")));
    }
    for (name, m) in [("a_per", a_per), ("a_per + c_per", a_per + c_per)] {
        let lo = m.sym_eigenvalues()[0];
        if !(lo > 0.0) || !m.is_symmetric(1e-12) {
            return Err(Error::Ellipticity(format!("{name} = {m} is not positive definite")));
        }
    }
    let area = (n * n) as f64;
    let a_per_star = solver.homogenize(&CoefficientField::constant(n, a_per))?;
    let one = solver.homogenize(&defect_field(n, a_per, c_per, &[(0, 0)]))?;
    let a_1def = (one - a_per_star) * area;
    let mut solves = 4;

    let pair_radius = n as f64 / 2.0;
    let mut a_2def = BTreeMap::new();
    if order == 2 {
        let group = lattice_symmetries(&[a_per, c_per]);
        let mut reps: Vec<((usize, usize), Vec<((usize, usize), Tensor2)>)> = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for dy in 0..n {
            for dx in 0..n {
                if (dx, dy) == (0, 0) || seen.contains(&(dx, dy)) {
                    continue;
                }
                let s = [signed(dx, n), signed(dy, n)];
                if ((s[0] * s[0] + s[1] * s[1]) as f64).sqrt() > pair_radius + 1e-12 {
                    continue;
                }
                let mut orbit = Vec::new();
                for g in &group {
                    // point reflection is always a symmetry of the pair problem
                    for sign in [1.0, -1.0] {
                        let gg = *g * sign;
                        let img = gg.apply([s[0] as f64, s[1] as f64]);
                        let key = (wrap(img[0].round() as i64, n), wrap(img[1].round() as i64, n));
                        if seen.insert(key) {
                            orbit.push((key, gg));
                        }
                    }
                }
                reps.push(((dx, dy), orbit));
            }
        }
        let rep_values: Vec<Result<Tensor2>> = reps
            .par_iter()
            .map(|(o, _)| {
                let t = solver.homogenize(&defect_field(n, a_per, c_per, &[(0, 0), *o]))?;
                Ok((t - a_per_star) * area - a_1def * 2.0)
            })
            .collect();
        for ((_, orbit), value) in reps.iter().zip(rep_values) {
            let value = value?;
            solves += 2;
            for (key, g) in orbit {
                a_2def.insert(*key, value.congruence(g));
            }
        }
    }
    Ok(DefectCoefficients {
        n,
        r,
        order,
        a_per_star,
        a_1def,
        a_2def,
        pair_radius,
        solves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(c: f64) -> FieldLaw {
        FieldLaw::perturbed(Tensor2::scalar(3.0), Tensor2::scalar(c), 0.5)
    }

    #[test]
    fn zero_perturbation_gives_zero_contribution() {
        let d = defect_coefficients(&law(0.0), 4, 2, 2).unwrap();
        assert!(d.a_1def.max_abs() <= 1e-10);
        assert!(d.a_2def.values().all(|t| t.max_abs() <= 1e-10));
    }

    #[test]
    fn one_defect_is_translation_invariant() {
        let s = CellSolver::new(5, 4).unwrap();
        let a = one_defect_contribution(&s, &law(17.0), (0, 0)).unwrap();
        let b = one_defect_contribution(&s, &law(17.0), (2, 3)).unwrap();
        assert!((a - b).max_abs() <= 1e-8 * a.max_abs());
    }

    #[test]
    fn symmetry_expansion_matches_direct_solves() {
        let l = FieldLaw::perturbed(Tensor2::diag(3.0, 5.0), Tensor2::scalar(7.0), 0.5);
        let s = CellSolver::new(6, 2).unwrap();
        let d = defect_coefficients_with(&s, &l, 2).unwrap();
        let (a_per, c_per) = perturbed_parts(&l).unwrap();
        for o in [(1, 0), (0, 1), (5, 1), (2, 2), (4, 5), (3, 0)] {
            let t = s.homogenize(&defect_field(6, a_per, c_per, &[(0, 0), o])).unwrap();
            let direct = (t - d.a_per_star) * 36.0 - d.a_1def * 2.0;
            assert!((direct - d.pair(o)).max_abs() < 1e-6, "{o:?}");
        }
        // (0,3) and (3,0) are not equivalent for an anisotropic a_per
        assert_eq!(lattice_symmetries(&[a_per, c_per]).len(), 4);
    }

    #[test]
    fn catalogue_is_symmetric_under_negation() {
        let d = defect_coefficients(&law(17.0), 6, 2, 2).unwrap();
        for (&(dx, dy), t) in &d.a_2def {
            let neg = d.pair(((6 - dx) % 6, (6 - dy) % 6));
            assert!((neg - *t).max_abs() < 1e-9);
        }
        assert!(d.a_2def.len() >= 8);
    }
}
