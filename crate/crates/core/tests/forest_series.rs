use sbseries::forest_ops::{gamma, reconstructs, split_pairs, subtree_pairs};
use sbseries::numbers::{int, rational, HalfInt};
use sbseries::series::{compose, derivative_product, exact_solution_series, BSeries};
use sbseries::trees::{enumerate_trees, Tree, TreeModel};
use sbseries::weight::WeightExpr;

fn models() -> Vec<TreeModel> {
    vec![TreeModel::semilinear(1), TreeModel::langevin(), TreeModel::classical()]
}

fn t(s: &str) -> Tree {
    s.parse().unwrap()
}

#[test]
fn every_pair_reconstructs_its_tree() {
    for model in models() {
        for tau in enumerate_trees(&model, HalfInt::from_int(3)).unwrap() {
            let pairs = subtree_pairs(&tau);
            assert!(pairs.iter().all(|p| p.coefficient > int(0)));
            for p in &pairs {
                assert!(reconstructs(&tau, p), "{tau}: {}", p.format());
            }
            let sp = split_pairs(&tau);
            assert_eq!(
                sp,
                pairs
                    .iter()
                    .filter(|p| p.remainder.len() == 1)
                    .cloned()
                    .collect::<Vec<_>>()
            );
        }
    }
}

#[test]
fn gamma_identity_cases() {
    for model in models() {
        for tau in enumerate_trees(&model, HalfInt::from_int(3)).unwrap() {
            let empties: Vec<Tree> = subtree_pairs(&tau)
                .into_iter()
                .find(|p| p.subtree == tau)
                .expect("(τ, {∅…}) is always a pair")
                .remainder;
            assert!(empties.iter().all(Tree::is_empty));
            assert_eq!(gamma(&tau, &tau, &empties).unwrap(), int(1), "{tau}");
            let e = Tree::empty(tau.partition());
            assert_eq!(gamma(&tau, &e, std::slice::from_ref(&tau)).unwrap(), int(1), "{tau}");
        }
    }
    let e = Tree::empty(1);
    assert_eq!(gamma(&e, &e, std::slice::from_ref(&e)).unwrap(), int(1));
    assert!(gamma(&t("[1]0"), &t("1"), &[t("0")]).is_err());
}

#[test]
fn split_pairs_of_a_leaf() {
    let got: Vec<String> = split_pairs(&t("1")).iter().map(|p| p.format()).collect();
    assert_eq!(got, ["(e, {1})", "(1, {e})"]);
}

#[test]
fn langevin_tree_split_listing() {
    let tau = t("[[[g(2,1,0),g(2,1,0)]g(1,2,0),g(1,1,0)]g(1,1,1),g(2,1,0)]g(1,2,0)");
    let got: Vec<(String, String)> = split_pairs(&tau)
        .iter()
        .map(|p| (p.subtree.to_string(), p.remainder[0].to_string()))
        .collect();
    let whole = tau.to_string();
    let want = [
        ("e", whole.as_str()),
        ("[g(2,1,0)]g(1,2,0)", "[[g(2,1,0),g(2,1,0)]g(1,2,0),g(1,1,0)]g(1,1,1)"),
        ("[[g(1,1,0)]g(1,1,1),g(2,1,0)]g(1,2,0)", "[g(2,1,0),g(2,1,0)]g(1,2,0)"),
        ("[[[g(2,1,0)]g(1,2,0),g(1,1,0)]g(1,1,1),g(2,1,0)]g(1,2,0)", "g(2,1,0)"),
        ("[[[g(2,1,0),g(2,1,0)]g(1,2,0)]g(1,1,1),g(2,1,0)]g(1,2,0)", "g(1,1,0)"),
        ("[[[g(2,1,0),g(2,1,0)]g(1,2,0),g(1,1,0)]g(1,1,1)]g(1,2,0)", "g(2,1,0)"),
    ];
    let mut want: Vec<(String, String)> = want.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    want.sort();
    let mut got = got;
    got.sort();
    assert_eq!(got, want);
}

/// Weights `c_τ h^{2ρ(τ)}` with distinct rational `c_τ`; `φ(∅) = 1`.
fn sample_series(model: &TreeModel, cap: HalfInt) -> BSeries {
    let mut s = BSeries::identity(model.clone(), cap);
    for (k, tau) in BSeries::key_trees(model, cap).unwrap().into_iter().enumerate() {
        if tau.is_empty() {
            continue;
        }
        let c = rational(k as i64 % 7 - 3, 1 + k as i64 % 5);
        s.set(tau.clone(), WeightExpr::h_pow(tau.rho().twice()).scale(&c));
    }
    s
}

#[test]
fn composition_identity_laws() {
    let cap = HalfInt::from_int(3);
    for model in models() {
        let id = BSeries::identity(model.clone(), cap);
        for phi in [exact_solution_series(&model, cap).unwrap(), sample_series(&model, cap)] {
            // B(φ, ·) evaluated at the identity map, and the identity at B(φ, ·).
            assert_eq!(compose(&id, &phi).unwrap(), phi, "{model:?}");
            assert_eq!(compose(&phi, &id).unwrap(), phi, "{model:?}");
        }
    }
}

#[test]
fn derivative_product_is_linear_in_the_increment() {
    let cap = HalfInt::from_int(3);
    let model = TreeModel::semilinear(1);
    let mut x = sample_series(&model, cap);
    x.set(Tree::empty(1), WeightExpr::zero());
    let y = sample_series(&model, cap);
    let doubled = x.map(|w| w.scale(&int(2)));
    let a = derivative_product(&x, &y).unwrap();
    let b = derivative_product(&doubled, &y).unwrap();
    // Against the identity only the ϑ = ∅ pair survives.
    let id = derivative_product(&x, &BSeries::identity(model.clone(), cap)).unwrap();
    for tau in enumerate_trees(&model, cap).unwrap() {
        assert_eq!(b.get(&tau), a.get(&tau).scale(&int(2)), "{tau}");
        assert_eq!(id.get(&tau), x.get(&tau), "{tau}");
    }
    assert!(derivative_product(&y, &y).is_err());
}

/// Classical weights of a Runge–Kutta method with matrix `a` and weights `b`.
fn rk_weights(a: &[Vec<i64>], b: &[i64], tau: &Tree) -> i64 {
    fn stage(a: &[Vec<i64>], i: usize, tau: &Tree) -> i64 {
        // Internal weight of stage i: Σ_j a_ij Π_children internal weights.
        (0..a.len())
            .map(|j| a[i][j] * tau.children().iter().map(|c| stage(a, j, c)).product::<i64>())
            .sum()
    }
    (0..b.len())
        .map(|i| b[i] * tau.children().iter().map(|c| stage(a, i, c)).product::<i64>())
        .sum()
}

#[test]
fn deterministic_composition_matches_butcher_product() {
    // Euler after Euler equals the two-stage method c = (0, 1), a21 = 1, b = (1, 1),
    // whose weights carry h^{|τ|}.
    let model = TreeModel::classical();
    let cap = HalfInt::from_int(3);
    let mut euler = BSeries::identity(model.clone(), cap);
    euler.set(t("g(1,1,0)"), WeightExpr::h());
    let composed = compose(&euler, &euler).unwrap();
    let a = vec![vec![0, 0], vec![1, 0]];
    let b = vec![1, 1];
    for tau in enumerate_trees(&model, cap).unwrap() {
        let want = WeightExpr::h_pow(tau.rho().twice() / 2).scale(&int(rk_weights(&a, &b, &tau)));
        assert_eq!(composed.get(&tau), want, "{tau}");
    }
    assert_eq!(composed.get(&t("g(1,1,0)")), WeightExpr::h().scale(&int(2)));
    assert_eq!(composed.get(&t("[[g(1,1,0)]g(1,1,0)]g(1,1,0)")), WeightExpr::zero());
}
