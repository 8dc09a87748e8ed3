//! Random coefficient laws on the lattice of unit cells of `Q_N`, reproducible
//! configuration sampling, the antithetic map, and exactly balanced draws.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Law of a cell-wise constant random coefficient with i.i.d. Bernoulli cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldLaw {
    /// Each cell is `alpha·Id` or `beta·Id` with probability one half.
    Checkerboard { alpha: f64, beta: f64 },
    /// Each cell is `a_per` (draw 0) or `a_per + c_per` (draw 1, probability `eta`).
    PerturbedPeriodic {
        a_per: Tensor2,
        c_per: Tensor2,
        eta: f64,
    },
}

/// Smallest eigenvalue accepted as "positive definite".
const ELLIPTICITY_FLOOR: f64 = 1e-12;

impl FieldLaw {
    pub fn checkerboard(alpha: f64, beta: f64) -> Self {
        FieldLaw::Checkerboard { alpha, beta }
    }

    pub fn perturbed(a_per: Tensor2, c_per: Tensor2, eta: f64) -> Self {
        FieldLaw::PerturbedPeriodic { a_per, c_per, eta }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FieldLaw::Checkerboard { alpha, beta } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
                }
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(Error::param("beta", format!("must be positive, got {beta}")));
                }
            }
            FieldLaw::PerturbedPeriodic { a_per, c_per, eta } => {
                if !(0.0..=1.0).contains(&eta) {
                    return Err(Error::param("eta", format!("must lie in [0, 1], got {eta}")));
                }
                if !a_per.is_symmetric(1e-12) || !c_per.is_symmetric(1e-12) {
                    return Err(Error::param("a_per/c_per", "matrices must be symmetric"));
                }
                for (name, m) in [("a_per", a_per), ("a_per + c_per", a_per + c_per)] {
                    let lo = m.sym_eigenvalues()[0];
                    if !(lo > ELLIPTICITY_FLOOR) {
                        return Err(Error::Ellipticity(format!(
                            "{name} has smallest eigenvalue {lo}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Probability that a cell draw equals 1.
    pub fn probability(&self) -> f64 {
        match *self {
            FieldLaw::Checkerboard { .. } => 0.5,
            FieldLaw::PerturbedPeriodic { eta, .. } => eta,
        }
    }

    /// Cell matrix for a draw value.
    pub fn phase(&self, draw: u8) -> Tensor2 {
        match *self {
            FieldLaw::Checkerboard { alpha, beta } => {
                Tensor2::scalar(if draw == 0 { alpha } else { beta })
            }
            FieldLaw::PerturbedPeriodic { a_per, c_per, .. } => {
                if draw == 0 {
                    a_per
                } else {
                    a_per + c_per
                }
            }
        }
    }

    /// Splits the law as `A = C0 + X·C1` with `X = draw - E[draw]` centered,
    /// returning `(C0, C1, E[draw])`.
    pub fn centered_decomposition(&self) -> (Tensor2, Tensor2, f64) {
        let p = self.probability();
        let base = self.phase(0);
        let c1 = self.phase(1) - base;
        (base + c1 * p, c1, p)
    }
}

/// One realization of the per-cell Bernoulli draws on an `n × n` lattice.
///
/// Cells are stored row-major: cell `(i, j)` (x index `i`) lives at `i + n·j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub n: usize,
    pub draws: Vec<u8>,
    pub seed: u64,
    pub index: u64,
    pub antithetic: bool,
    /// Bernoulli parameter the draws were thresholded at.
    pub p: f64,
    /// Underlying 52-bit uniforms (`u = (2k + 1) / 2^53`), when the
    /// configuration was produced by thresholding.
    pub latent: Option<Vec<u64>>,
}

const LATENT_BITS: u32 = 52;
const LATENT_MAX: u64 = (1u64 << LATENT_BITS) - 1;

fn latent_to_draw(k: u64, p: f64) -> u8 {
    let u = (2 * k + 1) as f64 * (-(LATENT_BITS as f64 + 1.0)).exp2();
    u8::from(u < p)
}

/// Domain tags separating independent random streams derived from one seed.
pub(crate) mod domain {
    pub const CONFIGURATION: u64 = 0x6366_675f_6472_6177;
    pub const SQS_SHUFFLE: u64 = 0x7371_735f_7368_7566;
}

/// Counter-based generator keyed by `(seed, domain, index)`.
pub(crate) fn keyed_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

impl Configuration {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn draw(&self, i: usize, j: usize) -> u8 {
        self.draws[i + self.n * j]
    }

    pub fn count_ones(&self) -> usize {
        self.draws.iter().map(|&d| d as usize).sum()
    }

    pub fn fraction_ones(&self) -> f64 {
        self.count_ones() as f64 / self.draws.len() as f64
    }

    /// Builds a configuration from explicit draws (tests, defect problems).
    pub fn from_draws(n: usize, draws: Vec<u8>) -> Result<Self> {
        if n == 0 || draws.len() != n * n {
            return Err(Error::Dimension(format!(
                "{} draws for an {n}x{n} lattice",
                draws.len()
            )));
        }
        if draws.iter().any(|&d| d > 1) {
            return Err(Error::param("draws", "values must be 0 or 1"));
        }
        Ok(Configuration {
            n,
            draws,
            seed: 0,
            index: 0,
            antithetic: false,
            p: 0.5,
            latent: None,
        })
    }
}

/// Draws configuration `index` of the stream `seed`: i.i.d. Bernoulli cells with
/// the law's probability. The result depends only on `(law, n, seed, index)`.
pub fn sample_configuration(law: &FieldLaw, n: usize, seed: u64, index: u64) -> Result<Configuration> {
    law.validate()?;
    if n == 0 {
        return Err(Error::param("n", "lattice size must be at least 1"));
    }
    let p = law.probability();
    let mut rng = keyed_rng(seed, domain::CONFIGURATION, index);
    let latent: Vec<u64> = (0..n * n).map(|_| rng.next_u64() >> (64 - LATENT_BITS)).collect();
    let draws = latent.iter().map(|&k| latent_to_draw(k, p)).collect();
    Ok(Configuration {
        n,
        draws,
        seed,
        index,
        antithetic: false,
        p,
        latent: Some(latent),
    })
}

/// Antithetic partner: the underlying uniforms are reflected `u → 1 - u` before
/// thresholding (a plain bit flip when no uniforms are attached). Involutive.
pub fn antithetic_transform(c: &Configuration) -> Configuration {
    let (draws, latent) = match &c.latent {
        Some(lat) => {
            let flipped: Vec<u64> = lat.iter().map(|&k| LATENT_MAX - k).collect();
            let draws = flipped.iter().map(|&k| latent_to_draw(k, c.p)).collect();
            (draws, Some(flipped))
        }
        None => (c.draws.iter().map(|&d| 1 - d).collect(), None),
    };
    Configuration {
        n: c.n,
        draws,
        seed: c.seed,
        index: c.index,
        antithetic: !c.antithetic,
        p: c.p,
        latent,
    }
}

/// Uniform draw among configurations with exactly `p·n²` ones, so the centered
/// first moment `Σ (X_k - p)` vanishes exactly.
pub fn sqs1_exact_sample(n: usize, seed: u64, index: u64, p: f64) -> Result<Configuration> {
    if n == 0 {
        return Err(Error::param("n", "lattice size must be at least 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param("p", format!("must lie in [0, 1], got {p}")));
    }
    let cells = n * n;
    let target = p * cells as f64;
    let ones = target.round();
    if (target - ones).abs() > 1e-9 {
        return Err(Error::Infeasible(format!(
            "p·n² = {target} is not an integer for n = {n}, p = {p}"
        )));
    }
    let ones = ones as usize;
    let mut draws = vec![0u8; cells];
    draws[..ones].iter_mut().for_each(|d| *d = 1);
    let mut rng = keyed_rng(seed, domain::SQS_SHUFFLE, index);
    draws.shuffle(&mut rng);
    Ok(Configuration {
        n,
        draws,
        seed,
        index,
        antithetic: false,
        p,
        latent: None,
    })
}

/// Cell-wise constant symmetric coefficient on `Q_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub n: usize,
    /// Row-major, cell `(i, j)` at `i + n·j`.
    pub cells: Vec<Tensor2>,
}

impl CoefficientField {
    pub fn constant(n: usize, a: Tensor2) -> Self {
        CoefficientField {
            n,
            cells: vec![a; n * n],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> Tensor2) -> Self {
        let mut cells = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                cells.push(f(i, j));
            }
        }
        CoefficientField { n, cells }
    }

    pub fn cell(&self, i: usize, j: usize) -> Tensor2 {
        self.cells[i + self.n * j]
    }

    /// Arithmetic (Voigt) average of the cell matrices.
    pub fn voigt(&self) -> Tensor2 {
        let s = self.cells.iter().fold(Tensor2::ZERO, |acc, a| acc + *a);
        s * (1.0 / self.cells.len() as f64)
    }

    /// Harmonic (Reuss) average of the cell matrices.
    pub fn reuss(&self) -> Tensor2 {
        let s = self.cells.iter().fold(Tensor2::ZERO, |acc, a| {
            acc + a.inverse().expect("elliptic cells are invertible")
        });
        (s * (1.0 / self.cells.len() as f64))
            .inverse()
            .expect("mean of SPD inverses is SPD")
    }

    /// `[λ_min(Reuss), λ_max(Voigt)]`, which brackets the eigenvalues of every
    /// homogenized tensor of this field.
    pub fn voigt_reuss_bounds(&self) -> (f64, f64) {
        (self.reuss().sym_eigenvalues()[0], self.voigt().sym_eigenvalues()[1])
    }

    pub fn ellipticity(&self) -> (f64, f64) {
        self.cells.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), a| {
            let e = a.sym_eigenvalues();
            (lo.min(e[0]), hi.max(e[1]))
        })
    }
}

/// Cell matrices of a configuration under `law`.
pub fn realize_field(law: &FieldLaw, c: &Configuration) -> Result<CoefficientField> {
    if c.draws.len() != c.n * c.n {
        return Err(Error::Dimension(format!(
            "configuration has {} draws for n = {}",
            c.draws.len(),
            c.n
        )));
    }
    let zero = law.phase(0);
    let one = law.phase(1);
    for (d, m) in [(0, zero), (1, one)] {
        if !c.draws.contains(&d) {
            continue;
        }
        let lo = m.sym_eigenvalues()[0];
        if !(lo > ELLIPTICITY_FLOOR) || !m.is_symmetric(1e-12) {
            return Err(Error::Ellipticity(format!(
                "phase {d} matrix {m} is not symmetric positive definite"
            )));
        }
    }
    Ok(CoefficientField {
        n: c.n,
        cells: c
            .draws
            .iter()
            .map(|&d| if d == 0 { zero } else { one })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cb() -> FieldLaw {
        FieldLaw::checkerboard(3.0, 20.0)
    }

    #[test]
    fn shape_and_values() {
        let c = sample_configuration(&cb(), 2, 7, 0).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.draws.iter().all(|&d| d <= 1));
    }

    #[test]
    fn eta_zero_gives_all_zeros() {
        let law = FieldLaw::perturbed(Tensor2::scalar(3.0), Tensor2::scalar(17.0), 0.0);
        let c = sample_configuration(&law, 8, 1, 3).unwrap();
        assert_eq!(c.count_ones(), 0);
        let f = realize_field(&law, &c).unwrap();
        assert!(f.cells.iter().all(|a| *a == Tensor2::scalar(3.0)));
    }

    #[test]
    fn fraction_of_ones_is_near_half_and_reproducible() {
        // 4096 fair coins: 0.05 is more than six standard deviations.
        let a = sample_configuration(&cb(), 64, 2024, 5).unwrap();
        let b = sample_configuration(&cb(), 64, 2024, 5).unwrap();
        assert_eq!(a, b);
        assert!((a.fraction_ones() - 0.5).abs() < 0.05);
        let c = sample_configuration(&cb(), 64, 2024, 6).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let bad = FieldLaw::perturbed(Tensor2::scalar(1.0), Tensor2::ZERO, 1.5);
        assert!(matches!(
            sample_configuration(&bad, 4, 0, 0),
            Err(Error::Parameter { name: "eta", .. })
        ));
        assert!(sample_configuration(&FieldLaw::checkerboard(0.0, 1.0), 4, 0, 0).is_err());
        let non_elliptic = FieldLaw::perturbed(Tensor2::scalar(1.0), Tensor2::scalar(-2.0), 0.5);
        assert!(matches!(non_elliptic.validate(), Err(Error::Ellipticity(_))));
    }

    #[test]
    fn antithetic_flips_all_zeros() {
        let c = Configuration::from_draws(3, vec![0; 9]).unwrap();
        let t = antithetic_transform(&c);
        assert!(t.draws.iter().all(|&d| d == 1));
        assert!(t.antithetic);
    }

    #[test]
    fn antithetic_counting_identity() {
        let c = sample_configuration(&cb(), 64, 11, 0).unwrap();
        let t = antithetic_transform(&c);
        assert_eq!(t.count_ones() + c.count_ones(), 64 * 64);
        assert_eq!(t.seed, c.seed);
        assert_eq!(t.index, c.index);
    }

    #[test]
    fn antithetic_preserves_bernoulli_marginal_for_general_eta() {
        let law = FieldLaw::perturbed(Tensor2::scalar(1.0), Tensor2::scalar(1.0), 0.2);
        let c = sample_configuration(&law, 64, 3, 0).unwrap();
        let t = antithetic_transform(&c);
        let n = 4096.0;
        let sd = (0.2_f64 * 0.8 / n).sqrt();
        assert!((t.fraction_ones() - 0.2).abs() < 3.0 * sd);
        assert!((c.fraction_ones() - 0.2).abs() < 3.0 * sd);
        // cells that are 1 in the partner are never 1 in the original when eta <= 1/2
        assert!(c.draws.iter().zip(&t.draws).all(|(a, b)| a + b <= 1));
    }

    #[test]
    fn realize_checkerboard_example() {
        let c = Configuration::from_draws(2, vec![0, 1, 1, 0]).unwrap();
        let f = realize_field(&cb(), &c).unwrap();
        assert_eq!(f.cell(0, 0), Tensor2::scalar(3.0));
        assert_eq!(f.cell(1, 0), Tensor2::scalar(20.0));
        assert_eq!(f.cell(0, 1), Tensor2::scalar(20.0));
        assert_eq!(f.cell(1, 1), Tensor2::scalar(3.0));
    }

    #[test]
    fn sqs1_forced_counts() {
        let c = sqs1_exact_sample(2, 0, 0, 0.5).unwrap();
        assert_eq!(c.count_ones(), 2);
        let c = sqs1_exact_sample(10, 9, 4, 0.5).unwrap();
        let centered: i64 = c.draws.iter().map(|&d| 2 * d as i64 - 1).sum();
        assert_eq!(centered, 0);
        assert!(matches!(sqs1_exact_sample(3, 0, 0, 0.5), Err(Error::Infeasible(_))));
    }

    #[test]
    fn sqs1_is_uniform_over_balanced_configurations() {
        // The C(4,2) = 6 balanced 2x2 configurations, enumerated independently.
        let mut balanced = Vec::new();
        for mask in 0u8..16 {
            if mask.count_ones() == 2 {
                balanced.push((0..4).map(|b| (mask >> b) & 1).collect::<Vec<u8>>());
            }
        }
        assert_eq!(balanced.len(), 6);
        let draws = 6000;
        let mut counts = [0usize; 6];
        for idx in 0..draws {
            let c = sqs1_exact_sample(2, 77, idx, 0.5).unwrap();
            let k = balanced.iter().position(|b| *b == c.draws).unwrap();
            counts[k] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 1.0 / 6.0).abs() < 0.05, "{counts:?}");
        }
    }

    #[test]
    fn cell_histogram_is_translation_independent() {
        // chi-square on the 2x2 contingency table of (block, draw), 5% level (3.841, 1 dof).
        let c = sample_configuration(&cb(), 64, 99, 0).unwrap();
        let block = |i0: usize, j0: usize| {
            let mut ones = 0usize;
            for j in j0..j0 + 32 {
                for i in i0..i0 + 32 {
                    ones += c.draw(i, j) as usize;
                }
            }
            ones as f64
        };
        let (a, b) = (block(0, 0), block(32, 32));
        let n = 1024.0;
        let table = [[a, n - a], [b, n - b]];
        let total = 2.0 * n;
        let col = [a + b, 2.0 * n - a - b];
        let mut chi2 = 0.0;
        for row in &table {
            for (k, &obs) in row.iter().enumerate() {
                let expected = n * col[k] / total;
                chi2 += (obs - expected).powi(2) / expected;
            }
        }
        assert!(chi2 < 3.841, "chi2 = {chi2}");
    }

    proptest! {
        #[test]
        fn antithetic_is_involutive(seed in any::<u64>(), index in 0u64..1000, eta in 0.0f64..=1.0) {
            let law = FieldLaw::perturbed(Tensor2::scalar(2.0), Tensor2::scalar(1.0), eta);
            let c = sample_configuration(&law, 5, seed, index).unwrap();
            prop_assert_eq!(antithetic_transform(&antithetic_transform(&c)), c);
        }

        #[test]
        fn antithetic_is_a_bit_flip_at_one_half(seed in any::<u64>()) {
            let c = sample_configuration(&cb(), 6, seed, 0).unwrap();
            let t = antithetic_transform(&c);
            prop_assert!(c.draws.iter().zip(&t.draws).all(|(a, b)| a + b == 1));
            let f = realize_field(&cb(), &c).unwrap();
            let g = realize_field(&cb(), &t).unwrap();
            for (x, y) in f.cells.iter().zip(&g.cells) {
                prop_assert_eq!(*x + *y, Tensor2::scalar(23.0));
            }
        }

        #[test]
        fn sqs1_satisfies_centered_identity(n in 1usize..12, seed in any::<u64>()) {
            prop_assume!(n % 2 == 0);
            let c = sqs1_exact_sample(n, seed, 0, 0.5).unwrap();
            prop_assert_eq!(2 * c.count_ones(), n * n);
        }
    }
}
