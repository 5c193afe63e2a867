use sbseries::elementary::fixtures::{langevin, langevin_vnoise, noncommutative};
use sbseries::elementary::{derivative, eval_bseries, eval_elementary, DerivativeMode, SdeProblem};
use sbseries::numbers::HalfInt;
use sbseries::sdesim::{ls_slope, reference_solution};
use sbseries::series::{exact_solution_series, BSeries};
use sbseries::stochastic_eval::{sample_path_indexed, PathGrid};
use sbseries::trees::{enumerate_trees, Tree};

fn t(s: &str) -> Tree {
    s.parse().unwrap()
}

const LANGEVIN_TREE: &str = "[[[g(2,1,0),g(2,1,0)]g(1,2,0),g(1,1,0)]g(1,1,1),g(2,1,0)]g(1,2,0)";

/// Hand-derived pieces at `z = (r, v, t)` for the V-dependent noise fixture.
struct Hand {
    f_d: f64,
    f_s_vv: f64,
    alpha_dot: f64,
    alpha_ddot: f64,
}

fn hand(z: &[f64]) -> Hand {
    let (r, v, t) = (z[0], z[1], z[2]);
    Hand {
        f_d: -r.sin() * (1.0 + t),
        // f_s = 0.2 (1 + t/2)(cos r + sin(v)/2)
        f_s_vv: -0.2 * (1.0 + 0.5 * t) * 0.5 * v.sin(),
        alpha_dot: 0.5 * t,
        alpha_ddot: 0.5,
    }
}

fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let scale = want.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
    got.iter().zip(want).fold(0.0f64, |a, (g, w)| a.max((g - w).abs())) / scale
}

#[test]
fn deep_tree_matches_hand_formula() {
    let z = [0.7, -0.4, 0.9];
    let h = hand(&z);
    let v = z[1];
    let steps = [
        ("[g(2,1,0),g(2,1,0)]g(1,2,0)", [0.0, -h.alpha_ddot * v]),
        (
            "[[g(2,1,0),g(2,1,0)]g(1,2,0),g(1,1,0)]g(1,1,1)",
            [0.0, h.f_s_vv * (-h.alpha_ddot * v) * h.f_d],
        ),
        (
            LANGEVIN_TREE,
            [0.0, -h.alpha_dot * h.f_s_vv * (-h.alpha_ddot * v) * h.f_d],
        ),
    ];
    for (mode, tol) in [
        (DerivativeMode::Analytic, 1e-8),
        (DerivativeMode::FiniteDifference, 1e-6),
    ] {
        let p = langevin_vnoise().with_mode(mode);
        for (s, want) in &steps {
            let got = eval_elementary(&p, &t(s), &z).unwrap();
            assert_eq!(got[0], 0.0, "{s}");
            assert!(rel_err(&got, want) < tol, "{mode:?} {s}: {got:?} vs {want:?}");
        }
    }
}

#[test]
fn deep_tree_vanishes_for_position_only_noise() {
    for z in [[0.7, -0.4, 0.9], [1.3, 2.0, 0.1], [-0.2, 0.5, 3.0]] {
        let f = eval_elementary(&langevin(), &t(LANGEVIN_TREE), &z).unwrap();
        assert!(f.iter().all(|x| *x == 0.0), "{f:?}");
        let f = eval_elementary(
            &langevin().with_mode(DerivativeMode::FiniteDifference),
            &t(LANGEVIN_TREE),
            &z,
        )
        .unwrap();
        assert!(f.iter().all(|x| x.abs() < 1e-6), "{f:?}");
    }
}

#[test]
fn finite_differences_agree_with_jets() {
    let z = [0.7, -0.4, 0.9];
    let cases: Vec<(SdeProblem, Vec<f64>)> = vec![
        (langevin_vnoise(), z.to_vec()),
        (noncommutative(), vec![0.4, -0.7, 0.6]),
    ];
    for (p, z) in cases {
        let fd = p.clone().with_mode(DerivativeMode::FiniteDifference);
        for tau in enumerate_trees(&p.model, HalfInt::from_twice(5)).unwrap() {
            if tau.is_empty() || max_arity(&tau) > 3 {
                continue;
            }
            let exact = eval_elementary(&p, &tau, &z).unwrap();
            let approx = eval_elementary(&fd, &tau, &z).unwrap();
            let scale = 1.0 + exact.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let err = exact.iter().zip(&approx).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(err <= 1e-6 * scale, "{} {tau}: {exact:?} vs {approx:?}", p.name);
        }
    }
}

fn max_arity(t: &Tree) -> usize {
    t.children()
        .iter()
        .map(max_arity)
        .max()
        .unwrap_or(0)
        .max(t.children().len())
}

#[test]
fn derivatives_are_symmetric_and_multilinear() {
    let p = langevin_vnoise();
    let field = p.field(t("g(1,1,1)").label().unwrap()).unwrap();
    let z = [0.3, 1.1, 0.4];
    let u = vec![0.2, -1.0, 0.5];
    let v = vec![1.5, 0.3, -0.7];
    let w = vec![-0.4, 0.8, 0.1];
    let d = |dirs: &[Vec<f64>]| derivative(field.as_ref(), &z, dirs, DerivativeMode::Analytic, "g").unwrap();
    let uvw = d(&[u.clone(), v.clone(), w.clone()]);
    for perm in [[&w, &u, &v], [&v, &w, &u], [&u, &w, &v]] {
        let got = d(&perm.map(|x| x.clone()));
        assert!(rel_err(&got, &uvw) < 1e-13 || (got[1] - uvw[1]).abs() < 1e-15);
    }
    let mix: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 2.5 * a - b).collect();
    let lhs = d(&[mix, w.clone()]);
    let a = d(&[u, w.clone()]);
    let b = d(&[v, w]);
    for i in 0..2 {
        assert!((lhs[i] - (2.5 * a[i] - b[i])).abs() < 1e-13);
    }
}

#[test]
fn empty_series_gives_the_initial_state() {
    let p = langevin();
    let z = [0.7, -0.4, 0.9];
    let series = BSeries::identity(p.model.clone(), HalfInt::from_int(2));
    let path = sample_path_indexed(0.1, 16, 1, 3, 0);
    assert_eq!(eval_bseries(&p, &series, &z, 0.1, &path).unwrap(), z.to_vec());
    assert!(eval_bseries(&p, &series, &z, 0.2, &path).is_err());
}

fn still_path(h: f64, steps: usize) -> PathGrid {
    PathGrid {
        h,
        steps,
        w: vec![vec![0.0; steps + 1]],
        seed: 0,
        path_index: 0,
    }
}

/// Classical RK4 on the drift, `n` steps over `[0, h]`.
fn rk4(p: &SdeProblem, h: f64, n: usize) -> Vec<f64> {
    let mut z = p.initial_state();
    let dt = h / n as f64;
    let f = |z: &[f64]| p.vector_fields(z).unwrap().swap_remove(0);
    let axpy = |z: &[f64], a: f64, k: &[f64]| -> Vec<f64> { z.iter().zip(k).map(|(x, y)| x + a * y).collect() };
    for _ in 0..n {
        let k1 = f(&z);
        let k2 = f(&axpy(&z, dt / 2.0, &k1));
        let k3 = f(&axpy(&z, dt / 2.0, &k2));
        let k4 = f(&axpy(&z, dt, &k3));
        for i in 0..z.len() {
            z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    z
}

#[test]
fn exact_series_on_a_still_path_is_the_taylor_expansion() {
    let p = langevin();
    let series = exact_solution_series(&p.model, HalfInt::from_int(3)).unwrap();
    let mut logs = (Vec::new(), Vec::new());
    for k in 3..7 {
        let h = 0.5f64.powi(k);
        let got = eval_bseries(&p, &series, &p.initial_state(), h, &still_path(h, 8)).unwrap();
        let want = rk4(&p, h, 64);
        let err = got.iter().zip(&want).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        logs.0.push(h.log2());
        logs.1.push(err.log2());
    }
    let slope = ls_slope(&logs.0, &logs.1);
    println!("taylor slope {slope}");
    assert!(slope > 3.7, "local order {slope}");
}

#[test]
fn truncated_exact_series_tracks_one_fine_step() {
    let p = langevin();
    let series = exact_solution_series(&p.model, HalfInt::from_int(2)).unwrap();
    let n_paths = 200;
    let mut logs = (Vec::new(), Vec::new());
    for k in 3..6 {
        let h = 0.5f64.powi(k);
        let mut sq = 0.0;
        for i in 0..n_paths {
            let path = sample_path_indexed(h, 2048, 1, 11, i);
            let got = eval_bseries(&p, &series, &p.initial_state(), h, &path).unwrap();
            let want = reference_solution(&p, h, 2048, &path).unwrap();
            sq += got.iter().zip(want.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        }
        logs.0.push(h.log2());
        logs.1.push((sq / n_paths as f64).sqrt().log2());
    }
    // Remainder of order h^{5/2}.
    let slope = ls_slope(&logs.0, &logs.1);
    println!("one-step slope {slope}");
    assert!(slope > 2.2, "local order {slope}");
}
