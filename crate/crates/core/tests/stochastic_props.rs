use proptest::prelude::*;
use sbseries::numbers::rational;
use sbseries::stochastic_eval::{eval_raw, eval_weight, mc_moments, sample_path_indexed, MCStats};
use sbseries::weight::{Interpretation, RawExpr, WeightExpr};

fn w(s: &str) -> WeightExpr {
    WeightExpr::parse(s).unwrap()
}

#[test]
fn brownian_endpoint_has_variance_h() {
    let h = 0.3;
    let samples: Vec<f64> = (0..100_000)
        .map(|p| sample_path_indexed(h, 4, 1, 21, p).value(1, 4))
        .collect();
    let s = MCStats::from_samples(&samples);
    assert!(s.mean.abs() < 3.0 * s.std_error, "{s:?}");
    assert!((s.second_moment - h).abs() < 3.0 * s.second_moment_se, "{s:?}");
}

#[test]
fn increment_moments() {
    let h = 0.25;
    let s = mc_moments(&WeightExpr::dw(1), h, 1, 20_000, Interpretation::Ito, 4).unwrap();
    assert!(s.mean.abs() < 3.0 * s.std_error, "{s:?}");
    let s = mc_moments(&WeightExpr::dw_pow(1, 2), h, 1, 20_000, Interpretation::Ito, 4).unwrap();
    assert!((s.mean - h).abs() < 3.0 * s.std_error, "{s:?}");
    // A zero expression has zero moments, not noise.
    let s = mc_moments(&WeightExpr::zero(), h, 8, 100, Interpretation::Ito, 4).unwrap();
    assert_eq!((s.mean, s.second_moment), (0.0, 0.0));
}

#[test]
fn deterministic_quadrature_is_second_order() {
    let h = 0.8f64;
    // As written, so the time integrals go through the quadrature; the
    // normalized form of this is the closed form `h³/3`.
    let e = RawExpr::parse("Int0[s^2]").unwrap();
    let exact = h.powi(3) / 3.0;
    assert!(
        (eval_weight(&e.normalize(), &sample_path_indexed(h, 4, 0, 0, 0), Interpretation::Ito).unwrap() - exact).abs()
            < 1e-15
    );
    let errs: Vec<f64> = [64, 128, 256, 512]
        .iter()
        .map(|&n| (eval_raw(&e, &sample_path_indexed(h, n, 0, 0, 0), Interpretation::Ito).unwrap() - exact).abs())
        .collect();
    for pair in errs.windows(2) {
        let ratio = pair[0] / pair[1];
        assert!((ratio - 4.0).abs() < 0.05, "{errs:?}");
    }
    let lin = eval_raw(
        &RawExpr::parse("Int0[Int0[1]]").unwrap(),
        &sample_path_indexed(h, 7, 0, 0, 0),
        Interpretation::Ito,
    )
    .unwrap();
    assert!((lin - h * h / 2.0).abs() < 1e-12, "{lin}");
}

#[test]
fn calculi_agree_on_deterministic_integrands() {
    for s in ["1/3*Int0[Int1[s^4],s]", "Int1[s]", "Int1[Int0[s]]*dW1"] {
        let e = w(s);
        assert_eq!(
            e.simplify(Interpretation::Ito),
            e.simplify(Interpretation::Stratonovich),
            "{s}"
        );
        for p in 0..5 {
            let path = sample_path_indexed(1.0, 256, 1, 9, p);
            let ito = eval_weight(&e, &path, Interpretation::Ito).unwrap();
            let st = eval_weight(&e, &path, Interpretation::Stratonovich).unwrap();
            assert_eq!(ito.to_bits(), st.to_bits(), "{s}");
        }
    }
    let random = w("Int1[W1]");
    assert_ne!(
        random.simplify(Interpretation::Ito),
        random.simplify(Interpretation::Stratonovich)
    );
}

#[test]
fn moments_do_not_depend_on_thread_count() {
    let e = w("1/3*Int0[Int1[s^4],s]+Int1[W1]*h");
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_moments(&e, 1.0, 256, 3000, Interpretation::Stratonovich, 17).unwrap())
    };
    let one = run(1);
    for threads in [2, 3, 8] {
        let other = run(threads);
        assert_eq!(format!("{one:?}"), format!("{other:?}"));
        assert_eq!(one.mean.to_bits(), other.mean.to_bits());
        assert_eq!(one.second_moment.to_bits(), other.second_moment.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn polynomials_evaluate_at_the_endpoint(
        coeffs in prop::collection::vec((-6i64..7, 1i64..5, 0u32..4, 0u32..4), 1..5),
        seed in 0u64..1000,
    ) {
        let mut e = WeightExpr::zero();
        for (p, q, a, b) in &coeffs {
            let term = &WeightExpr::h_pow(*a) * &WeightExpr::dw_pow(1, *b);
            e = &e + &term.scale(&rational(*p, *q));
        }
        let path = sample_path_indexed(0.6, 16, 1, seed, 0);
        let direct = e.eval_poly(0.6, &[path.value(1, 16)]).unwrap();
        for interp in [Interpretation::Ito, Interpretation::Stratonovich] {
            let q = eval_weight(&e, &path, interp).unwrap();
            prop_assert!((q - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn quadrature_is_linear(a in -3i64..4, b in -3i64..4, seed in 0u64..1000) {
        let x = w("Int1[s,W1]");
        let y = w("Int0[Int1[1]]");
        let path = sample_path_indexed(1.0, 64, 1, seed, 0);
        let sum = &x.scale(&rational(a, 1)) + &y.scale(&rational(b, 1));
        for interp in [Interpretation::Ito, Interpretation::Stratonovich] {
            let lhs = eval_weight(&sum, &path, interp).unwrap();
            let rhs = a as f64 * eval_weight(&x, &path, interp).unwrap() + b as f64 * eval_weight(&y, &path, interp).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
