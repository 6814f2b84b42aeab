use proptest::prelude::*;

use opconvex::functional::{FunctionalFamily, TestFunction};
use opconvex::inequality::{beta_series, classify_signs, gusic_gap, gusic_sum_of_squares, SignVerdict};
use opconvex::values::{Evaluator, Truncation};
use opconvex::{OperatorFamily, TruncatedSeries};

fn series(max_len: usize) -> impl Strategy<Value = TruncatedSeries> {
    prop::collection::vec(-2.0..2.0f64, 1..max_len).prop_map(|c| TruncatedSeries::new(c).unwrap())
}

/// Three series of one common order; truncated products only form a ring
/// at a fixed order.
fn triple(max_len: usize) -> impl Strategy<Value = (TruncatedSeries, TruncatedSeries, TruncatedSeries)> {
    (1..max_len).prop_flat_map(|len| {
        let one = || prop::collection::vec(-2.0..2.0f64, len).prop_map(|c| TruncatedSeries::new(c).unwrap());
        (one(), one(), one())
    })
}

fn close(a: &TruncatedSeries, b: &TruncatedSeries, tol: f64) -> bool {
    let order = a.order().max(b.order());
    (0..=order).all(|k| (a.coeff(k) - b.coeff(k)).abs() <= tol)
}

fn unit_points(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=1.0f64, m)
}

proptest! {
    #[test]
    fn multiply_commutes_and_associates((a, b, c) in triple(8)) {
        prop_assert!(close(&a.multiply(&b), &b.multiply(&a), 1e-12));
        let left = a.multiply(&b).multiply(&c);
        let right = a.multiply(&b.multiply(&c));
        prop_assert!(close(&left, &right, 1e-10));
    }

    #[test]
    fn multiply_distributes((a, b, c) in triple(8)) {
        let sum = TruncatedSeries::linear_combine(1.0, &b, 1.0, &c);
        let lhs = a.multiply(&sum);
        let rhs = TruncatedSeries::linear_combine(1.0, &a.multiply(&b), 1.0, &a.multiply(&c));
        prop_assert!(close(&lhs, &rhs, 1e-11));
    }

    #[test]
    fn int_pow_matches_repeated_multiply(a in series(6), m in 0u32..6) {
        let mut expect = TruncatedSeries::one(a.order());
        for _ in 0..m {
            expect = expect.multiply(&a);
        }
        let got = a.int_pow(m);
        let scale = expect.coeffs().iter().fold(1.0_f64, |s, c| s.max(c.abs()));
        prop_assert!(close(&got, &expect, 1e-12 * scale));
    }

    #[test]
    fn division_round_trips(a in series(10), power in 1u32..=2) {
        // multiply by (z - 1)^power, then divide it out again
        let order = a.order() + power as usize;
        let factor = TruncatedSeries::new(vec![-1.0, 1.0]).unwrap().with_order(order).int_pow(power);
        let product = a.with_order(order).multiply(&factor);
        let (q, residual) = product.divide_by_z_minus_1(power);
        prop_assert!(residual < 1e-10, "residual {}", residual);
        for k in 0..=a.order() {
            prop_assert!((q.coeff(k) - a.coeff(k)).abs() < 1e-9);
        }
    }

    #[test]
    fn classification_is_scale_invariant(
        seq in prop::collection::vec(-1.0..1.0f64, 0..12),
        scale in 0.5..100.0f64,
    ) {
        let tol = 1e-3;
        let a = classify_signs(&seq, tol);
        let scaled: Vec<f64> = seq.iter().map(|v| v * scale).collect();
        let b = classify_signs(&scaled, tol * scale);
        prop_assert_eq!(a.verdict, b.verdict);
        prop_assert_eq!(a.verdict == SignVerdict::Mixed, a.witness_positive.is_some() && a.witness_negative.is_some());
    }

    #[test]
    fn power_form_holds(n in 1u32..5, m in 2u32..4, x in 0.0..3.0f64) {
        for fam in [OperatorFamily::Szasz, OperatorFamily::Baskakov] {
            let g = fam.generating_series(n, x, 30).unwrap();
            let gm = fam.generating_series(m * n, x, 30).unwrap();
            prop_assert!(close(&g.int_pow(m), &gm, 1e-12));
        }
        let x = x / 3.0;
        let b = OperatorFamily::Bernstein;
        let g = b.generating_series(n, x, 20).unwrap();
        prop_assert!(close(&g.int_pow(m), &b.generating_series(m * n, x, 20).unwrap(), 1e-12));
    }

    #[test]
    fn weights_are_nonnegative(n in 1u32..8, x in 0.0..4.0f64) {
        for fam in OperatorFamily::builtins() {
            let x = if fam.domain().hi.is_some() { x / 4.0 } else { x };
            let w = fam.coefficients(n, x, 40).unwrap();
            prop_assert!(w.iter().all(|&c| c >= 0.0));
            prop_assert!(w.iter().sum::<f64>() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn beta_is_antisymmetric(n in 1u32..5, x in 0.0..1.0f64, y in 0.0..1.0f64) {
        for fam in OperatorFamily::builtins() {
            let a = beta_series(&fam, n, x, y, Some(30)).unwrap().series;
            let b = beta_series(&fam, n, y, x, Some(30)).unwrap().series;
            prop_assert!((0..30).all(|k| (a.coeff(k) + b.coeff(k)).abs() < 1e-14));
        }
    }

    #[test]
    fn cm_and_bm_are_symmetric(n in 1u32..4, xs in unit_points(3)) {
        let f = TestFunction::from_name("abs:c=0.5").unwrap();
        let dirac = FunctionalFamily::Dirac;
        let fam = OperatorFamily::Bernstein;
        let ev = Evaluator::new(&fam, &dirac, &f);
        let perm = [xs[2], xs[0], xs[1]];
        let c = (ev.cm_value(n, &xs).unwrap().value, ev.cm_value(n, &perm).unwrap().value);
        let b = (ev.bm_value(n, &xs).unwrap().value, ev.bm_value(n, &perm).unwrap().value);
        prop_assert!((c.0 - c.1).abs() < 1e-12);
        prop_assert!((b.0 - b.1).abs() < 1e-12);
    }

    #[test]
    fn affine_functions_are_annihilated(n in 1u32..4, xs in unit_points(2), h in 0.05..0.5f64) {
        let avg = FunctionalFamily::sliding_average(h).unwrap();
        for functional in [FunctionalFamily::Dirac, avg] {
            for fam in [OperatorFamily::Bernstein, OperatorFamily::Baskakov] {
                for i in 0..=1 {
                    let f = TestFunction::monomial(i);
                    let ev = Evaluator::new(&fam, &functional, &f);
                    let a = ev.rasa_functional(n, xs[0], xs[1]).unwrap();
                    let c = ev.cm_value(n, &xs).unwrap();
                    let b = ev.bm_value(n, &xs).unwrap();
                    for v in [a, c, b] {
                        prop_assert!(v.value.abs() <= 1e-10 + v.tail_bound, "{:?}", v);
                    }
                }
            }
        }
    }

    #[test]
    fn decomposition_holds(n in 1u32..4, xs in unit_points(3)) {
        let dirac = FunctionalFamily::Dirac;
        for name in ["e2", "exp", "abs:c=0.25"] {
            let f = TestFunction::from_name(name).unwrap();
            for fam in [OperatorFamily::Bernstein, OperatorFamily::Szasz] {
                let d = Evaluator::new(&fam, &dirac, &f).decomposition_check(n, &xs).unwrap();
                prop_assert!(d.passed(), "{} {}: {:?}", fam, name, d);
            }
        }
    }

    #[test]
    fn sliding_average_preserves_bernstein_positivity(n in 1u32..4, xs in unit_points(2), h in 0.05..0.5f64) {
        let avg = FunctionalFamily::sliding_average(h).unwrap();
        let fam = OperatorFamily::Bernstein;
        for f in TestFunction::convex_registry() {
            let ev = Evaluator::new(&fam, &avg, &f);
            let b = ev.bm_value(n, &xs).unwrap();
            prop_assert!(b.value >= -1e-10, "{} {:?}", f.name(), b);
            let r = ev.bm_value_via_representation(n, &xs).unwrap();
            prop_assert!((r.value - b.value).abs() <= 1e-10);
        }
    }

    #[test]
    fn brute_force_matches_convolution(n in 1u32..4, xs in prop::collection::vec(0.0..2.0f64, 2..=3)) {
        let f = TestFunction::from_name("hinge:c=0.5").unwrap();
        let dirac = FunctionalFamily::Dirac;
        for fam in [OperatorFamily::Szasz, OperatorFamily::Baskakov] {
            let ev = Evaluator::new(&fam, &dirac, &f).with_truncation(Truncation::Fixed(14));
            let a = ev.cm_value(n, &xs).unwrap().value;
            let b = ev.cm_brute_force(n, &xs, 14).unwrap().value;
            prop_assert!((a - b).abs() < 1e-11);
            let r = ev.rasa_functional(n, xs[0], xs[1]).unwrap().value;
            let rb = ev.rasa_brute_force(n, xs[0], xs[1], 14).unwrap().value;
            prop_assert!((r - rb).abs() < 1e-11);
        }
    }

    #[test]
    fn gusic_decomposition_matches_gap(a in prop::collection::vec(0.0..5.0f64, 2..=3)) {
        let gap = gusic_gap(&a).unwrap();
        let sos = gusic_sum_of_squares(&a).unwrap();
        let scale = a.iter().sum::<f64>().powi(a.len() as i32).max(1.0);
        prop_assert!((gap - sos).abs() <= 1e-12 * scale);
    }
}
