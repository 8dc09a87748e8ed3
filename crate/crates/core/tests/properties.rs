use proptest::prelude::*;
use stochlab::cell::CellSolver;
use stochlab::estimators::mean_and_variance;
use stochlab::field::CoefficientField;
use stochlab::Tensor2;

fn field_from(n: usize, draws: &[bool], lo: f64, hi: f64) -> CoefficientField {
    CoefficientField::from_fn(n, |i, j| Tensor2::scalar(if draws[i + n * j] { hi } else { lo }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn homogenized_tensor_is_symmetric_and_bounded(
        n in 2usize..5,
        draws in prop::collection::vec(any::<bool>(), 16),
        lo in 0.5f64..3.0,
        contrast in 1.0f64..20.0,
    ) {
        let f = field_from(n, &draws, lo, lo * contrast);
        let t = CellSolver::new(n, 2).unwrap().homogenize(&f).unwrap();
        prop_assert!(t.is_symmetric(1e-8));
        let (reuss, voigt) = f.voigt_reuss_bounds();
        let ev = t.sym_eigenvalues();
        prop_assert!(ev[0] >= reuss * (1.0 - 1e-8) && ev[1] <= voigt * (1.0 + 1e-8));
    }

    #[test]
    fn cyclic_shift_and_transpose_act_as_expected(
        draws in prop::collection::vec(any::<bool>(), 9),
        sx in 0usize..3,
        sy in 0usize..3,
    ) {
        let n = 3;
        let s = CellSolver::new(n, 2).unwrap();
        let f = field_from(n, &draws, 1.0, 7.0);
        let t = s.homogenize(&f).unwrap();
        let shifted = CoefficientField::from_fn(n, |i, j| f.cell((i + sx) % n, (j + sy) % n));
        let ts = s.homogenize(&shifted).unwrap();
        prop_assert!((t - ts).max_abs() <= 1e-8 * t.max_abs());
        // exchanging the axes exchanges the diagonal entries
        let swapped = CoefficientField::from_fn(n, |i, j| f.cell(j, i));
        let tw = s.homogenize(&swapped).unwrap();
        prop_assert!((tw.0[0][0] - t.0[1][1]).abs() <= 1e-8 * t.max_abs());
        prop_assert!((tw.0[1][1] - t.0[0][0]).abs() <= 1e-8 * t.max_abs());
    }

    #[test]
    fn mean_and_variance_match_direct_formulas(xs in prop::collection::vec(-10.0f64..10.0, 2..40)) {
        let samples: Vec<Tensor2> = xs.iter().map(|&x| Tensor2::symmetric(x, 2.0 * x, x * x)).collect();
        let (mean, var) = mean_and_variance(&samples);
        let m = xs.len() as f64;
        let mu = xs.iter().sum::<f64>() / m;
        let v = xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (m - 1.0);
        prop_assert!((mean.0[0][0] - mu).abs() <= 1e-12 * (1.0 + mu.abs()));
        prop_assert!((var.0[0][0] - v).abs() <= 1e-10 * (1.0 + v));
        prop_assert!((var.0[0][1] - 4.0 * v).abs() <= 1e-10 * (1.0 + v));
        prop_assert!(var.0[1][1] >= 0.0);
    }
}
