use std::collections::BTreeMap;

use nalgebra::DVector;
use sbseries::elementary::eval_bseries;
use sbseries::elementary::fixtures::{langevin_semilinear, noncommutative};
use sbseries::numbers::{factorial, int, rational, HalfInt, Rational};
use sbseries::sdesim::ErkIntegrator;
use sbseries::semilinear_erk::{
    admissible_splits, builtin_exponential_midpoint, erk_weights, order_residuals, semilinear_trees, tree_residual,
};
use sbseries::stochastic_eval::sample_path_indexed;
use sbseries::trees::{Tree, TreeModel};
use sbseries::weight::{Interpretation, WeightExpr};

/// Words `k_1 … k_n` stand for `A^{(k_1)} ⋯ A^{(k_n)}`, of degree `Σ (k_i + 1)` in `h`.
type Poly = BTreeMap<Vec<u32>, Rational>;

fn degree(w: &[u32]) -> u32 {
    w.iter().map(|k| k + 1).sum()
}

fn mul(a: &Poly, b: &Poly, max: u32) -> Poly {
    let mut out = Poly::new();
    for (u, x) in a {
        for (v, y) in b {
            let w: Vec<u32> = u.iter().chain(v).copied().collect();
            if degree(&w) <= max {
                *out.entry(w).or_insert_with(|| int(0)) += x * y;
            }
        }
    }
    out
}

/// `exp(∫_{lo h}^{hi h} A(t + s) ds)` with `A(t + s) = Σ_k A^{(k)} s^k / k!`, per unit `h`.
fn exp_integral(lo: Rational, hi: Rational, max: u32) -> Poly {
    let mut m = Poly::new();
    for k in 0..max {
        let c = (hi.pow(k as i32 + 1) - lo.pow(k as i32 + 1)) / Rational::from_integer(factorial(k as usize + 1));
        m.insert(vec![k], c);
    }
    let mut out = Poly::new();
    out.insert(vec![], int(1));
    let mut power = out.clone();
    for n in 1..=max {
        power = mul(&power, &m, max);
        for (w, c) in &power {
            *out.entry(w.clone()).or_insert_with(|| int(0)) += c / Rational::from_integer(factorial(n as usize));
        }
    }
    out
}

/// The `T̄_A` tree with `F = A^{(k_1)} ⋯ A^{(k_n)} x`.
fn word_tree(w: &[u32]) -> Tree {
    let mut s = String::new();
    for &k in w.iter().rev() {
        let mut kids: Vec<String> = vec!["t".into(); k as usize];
        if !s.is_empty() {
            kids.push(s.clone());
        }
        s = if kids.is_empty() {
            "A".into()
        } else {
            format!("[{}]A", kids.join(","))
        };
    }
    if s.is_empty() { "e".into() } else { s }.parse().unwrap()
}

#[test]
fn midpoint_exponential_weights_match_the_word_expansion() {
    let method = builtin_exponential_midpoint(HalfInt::from_twice(7)).unwrap();
    let cases = [
        (&method.stage0[0], rational(0, 1), rational(1, 2), WeightExpr::one()),
        (&method.update0, rational(0, 1), int(1), WeightExpr::one()),
        (&method.update[0][0], rational(1, 2), int(1), WeightExpr::h()),
        (&method.update[1][0], rational(1, 2), int(1), WeightExpr::dw(1)),
    ];
    let tbar: Vec<Tree> = semilinear_trees(1, HalfInt::from_int(3))
        .unwrap()
        .into_iter()
        .filter(TreeModel::is_a_tree)
        .collect();
    for (series, lo, hi, factor) in cases {
        let poly = exp_integral(lo, hi, 3);
        assert_eq!(poly.len(), 8);
        for (word, c) in &poly {
            let tau = word_tree(word);
            // α(τ) = Π 1/k_i! for a chain, and the coefficient of F(τ) is α Φ.
            let sym: Rational = word
                .iter()
                .map(|&k| Rational::from_integer(factorial(k as usize)))
                .product();
            let want = &WeightExpr::h_pow(degree(word)).scale(&(c * &sym)) * &factor;
            assert_eq!(series.get(&tau), want, "{tau}");
            assert_eq!(tau.alpha() * sym, int(1));
        }
        let trees: Vec<Tree> = poly.keys().map(|w| word_tree(w)).collect();
        assert!(
            tbar.iter().all(|t| trees.contains(t)),
            "every T̄_A tree up to order 3 is a word"
        );
    }
}

#[test]
fn weight_recursion_has_one_split_with_unit_gamma() {
    for colors in [1, 2] {
        for tau in semilinear_trees(colors, HalfInt::from_twice(7)).unwrap() {
            if tau.is_empty() || TreeModel::is_a_tree(&tau) || tau.is_leaf() && tau.label().unwrap().is_leaf_only() {
                continue;
            }
            let splits = admissible_splits(&tau);
            assert_eq!(splits.len(), 1, "{tau}");
            assert_eq!(splits[0].2, int(1), "{tau}");
        }
    }
}

#[test]
fn residuals_vanish_through_order_one() {
    let method = builtin_exponential_midpoint(HalfInt::from_twice(7)).unwrap();
    for interp in [Interpretation::Stratonovich, Interpretation::Ito] {
        let low = order_residuals(&method, HalfInt::from_int(1), interp).unwrap();
        let zero = low.iter().all(|r| r.residual.is_zero());
        // The midpoint rule is a Stratonovich method.
        assert_eq!(zero, interp == Interpretation::Stratonovich, "{interp:?}");
    }
    let r = tree_residual(
        &method,
        &"[[[t,t]A,0]1,t]A".parse().unwrap(),
        Interpretation::Stratonovich,
    )
    .unwrap();
    assert_eq!(r.tree_order, HalfInt::from_twice(13));
    assert!(!r.residual.is_zero());
}

#[test]
fn method_series_predicts_one_step() {
    let method = builtin_exponential_midpoint(HalfInt::from_twice(7)).unwrap();
    let integ = ErkIntegrator::midpoint();
    for problem in [langevin_semilinear(), noncommutative()] {
        let (phi, _) = erk_weights(&method, HalfInt::from_int(2)).unwrap();
        let z = problem.initial_state();
        let y = DVector::from_vec(problem.x0.clone());
        let mut logs = (Vec::new(), Vec::new());
        for k in 3..7 {
            let h = 0.5f64.powi(k);
            let mut sq = 0.0;
            let n = 200;
            for i in 0..n {
                let path = sample_path_indexed(h, 1, 1, 5, i);
                let dw = [path.increment(1, 0)];
                let stepped = integ.step(&problem, &y, 0.0, h, &dw).unwrap();
                let series = eval_bseries(&problem, &phi, &z, h, &path).unwrap();
                sq += stepped.iter().zip(&series).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            }
            logs.0.push(h.log2());
            logs.1.push((sq / n as f64).sqrt().log2());
        }
        let slope = sbseries::sdesim::ls_slope(&logs.0, &logs.1);
        println!("{} truncation slope {slope}", problem.name);
        assert!(slope > 2.3, "{}: {slope}", problem.name);
    }
}
