use stochlab::estimators::*;
use stochlab::field::FieldLaw;
use stochlab::{Entry, Tensor2};

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let law = FieldLaw::checkerboard(3.0, 20.0);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| antithetic_estimate(&law, 4, 2, 20, 9).unwrap());
    let b = four.install(|| antithetic_estimate(&law, 4, 2, 20, 9).unwrap());
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.mean, b.mean);
}

#[test]
fn doubling_m_halves_the_variance_of_the_mean() {
    let law = FieldLaw::checkerboard(3.0, 20.0);
    let small = mc_estimate(&law, 4, 2, 400, 21).unwrap();
    let large = mc_estimate(&law, 4, 2, 800, 22).unwrap();
    let ratio = small.variance_of_mean().entry(Entry::A11) / large.variance_of_mean().entry(Entry::A11);
    assert!((ratio - 2.0).abs() <= 0.3 * 2.0, "{ratio}");
}

#[test]
fn antithetic_mean_agrees_with_mc_in_most_batches() {
    let law = FieldLaw::checkerboard(3.0, 20.0);
    let batches = 40;
    let mut consistent = 0;
    for s in 0..batches {
        let mc = mc_estimate(&law, 5, 2, 200, 2 * s + 1).unwrap();
        let av = antithetic_estimate(&law, 5, 2, 100, 2 * s + 2).unwrap();
        let table = compare_strategies(&[mc, av]).unwrap();
        let row = table.get(Strategy::Antithetic, Entry::A11).unwrap();
        assert!(row.factor.is_finite());
        if row.consistent() {
            consistent += 1;
        }
    }
    assert!(consistent as f64 >= 0.95 * batches as f64, "{consistent}/{batches}");
}

#[test]
fn control_variate_without_perturbation_is_mc() {
    let law = FieldLaw::perturbed(Tensor2::scalar(3.0), Tensor2::ZERO, 0.5);
    let mc = mc_estimate(&law, 4, 2, 30, 5).unwrap();
    let d = stochlab::cell::defect_coefficients(&law, 4, 2, 2).unwrap();
    let cv = control_variate_estimate(&law, 4, 2, 30, 2, 5, &d).unwrap();
    assert_eq!(cv.mean, mc.mean);
    assert_eq!(cv.var, mc.var);
    assert!(!cv.warnings.is_empty());
}
