//! Wiener paths on a uniform grid and pathwise / Monte Carlo evaluation of
//! weight expressions.
//!
//! Randomness comes from one ChaCha stream per `(seed, color, path index)`, so
//! a path can be regenerated on its own and parallel evaluation gives the same
//! numbers as a sequential loop. When the step count is a power of two the path
//! is built by Brownian-bridge refinement, level by level: the first `N`
//! normals of a stream determine the `N`-step path, so the `2N`-step path drawn
//! from the same stream restricted to every other point is the `N`-step path.

use std::collections::HashMap;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numbers::to_f64;
use crate::weight::{Interpretation, IterInt, Monomial, RawExpr, WeightExpr};

#[derive(Clone, Debug, PartialEq)]
pub struct PathGrid {
    pub h: f64,
    pub steps: usize,
    /// `w[m - 1][k] = W_m(t_k)`.
    pub w: Vec<Vec<f64>>,
    pub seed: u64,
    pub path_index: u64,
}

impl PathGrid {
    pub fn colors(&self) -> u32 {
        self.w.len() as u32
    }

    pub fn time(&self, k: usize) -> f64 {
        self.h * (k as f64 / self.steps as f64)
    }

    pub fn dt(&self) -> f64 {
        self.h / self.steps as f64
    }

    /// `W_m(t_k)`, with `W_0(t) = t`.
    pub fn value(&self, m: u32, k: usize) -> f64 {
        if m == 0 {
            self.time(k)
        } else {
            self.w[m as usize - 1][k]
        }
    }

    /// `W_m(t_{k+1}) - W_m(t_k)`.
    pub fn increment(&self, m: u32, k: usize) -> f64 {
        if m == 0 {
            self.time(k + 1) - self.time(k)
        } else {
            let w = &self.w[m as usize - 1];
            w[k + 1] - w[k]
        }
    }

    /// The same path on the grid with `steps` points, `steps` dividing `self.steps`.
    pub fn coarsen(&self, steps: usize) -> Result<PathGrid> {
        if steps == 0 || !self.steps.is_multiple_of(steps) {
            return Err(Error::PathTooShort(format!(
                "cannot restrict a {}-step path to {} steps",
                self.steps, steps
            )));
        }
        let stride = self.steps / steps;
        Ok(PathGrid {
            h: self.h,
            steps,
            w: self
                .w
                .iter()
                .map(|w| (0..=steps).map(|k| w[k * stride]).collect())
                .collect(),
            seed: self.seed,
            path_index: self.path_index,
        })
    }
}

fn stream(seed: u64, color: u32, path_index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&color.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(path_index);
    rng
}

fn brownian(h: f64, steps: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut w = vec![0.0; steps + 1];
    if steps.is_power_of_two() {
        w[steps] = h.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let mut span = steps;
        while span > 1 {
            let half = span / 2;
            // Bridge midpoint of an interval of length L has variance L/4.
            let sd = (h * span as f64 / steps as f64 / 4.0).sqrt();
            for a in (0..steps).step_by(span) {
                let z: f64 = rng.sample(StandardNormal);
                w[a + half] = 0.5 * (w[a] + w[a + span]) + sd * z;
            }
            span = half;
        }
    } else {
        let sd = (h / steps as f64).sqrt();
        for k in 0..steps {
            let z: f64 = rng.sample(StandardNormal);
            w[k + 1] = w[k] + sd * z;
        }
    }
    w
}

/// Path number 0 of the stream family `seed`.
pub fn sample_path(h: f64, steps: usize, colors: u32, seed: u64) -> PathGrid {
    sample_path_indexed(h, steps, colors, seed, 0)
}

pub fn sample_path_indexed(h: f64, steps: usize, colors: u32, seed: u64, path_index: u64) -> PathGrid {
    assert!(steps >= 1, "a path needs at least one step");
    let w = (1..=colors)
        .map(|m| brownian(h, steps, &mut stream(seed, m, path_index)))
        .collect();
    PathGrid {
        h,
        steps,
        w,
        seed,
        path_index,
    }
}

fn check_colors(colors: &[u32], path: &PathGrid) -> Result<()> {
    match colors.iter().find(|&&m| m > path.colors()) {
        Some(&color) => Err(Error::ColorMissing {
            color,
            available: path.colors(),
        }),
        None => Ok(()),
    }
}

fn monomial_is_deterministic(m: &Monomial) -> bool {
    m.w.is_empty()
        && m.ints
            .iter()
            .all(|i| i.color == 0 && monomial_is_deterministic(&i.integrand))
}

fn raw_is_deterministic(e: &RawExpr) -> bool {
    match e {
        RawExpr::Const(_) | RawExpr::Var(_) => true,
        RawExpr::Wiener(_, p) => *p == 0,
        RawExpr::Int(m, fs) => *m == 0 && fs.iter().all(raw_is_deterministic),
        RawExpr::Sum(xs) | RawExpr::Product(xs) => xs.iter().all(raw_is_deterministic),
        RawExpr::Neg(x) => raw_is_deterministic(x),
    }
}

struct Quadrature<'a> {
    path: &'a PathGrid,
    interp: Interpretation,
    cache: HashMap<IterInt, Rc<Vec<f64>>>,
}

impl Quadrature<'_> {
    /// `∫_0^{t_k} f(s) ⋆dW_m(s)` for every `k`. A deterministic integrand has
    /// the same Itô and Stratonovich integral, so it always gets the trapezoid.
    fn cumulative(&self, color: u32, f: &[f64], deterministic: bool) -> Vec<f64> {
        let n = self.path.steps;
        let mut out = vec![0.0; n + 1];
        let left = color > 0 && !deterministic && self.interp == Interpretation::Ito;
        for k in 0..n {
            let d = self.path.increment(color, k);
            let avg = if left { f[k] } else { 0.5 * (f[k] + f[k + 1]) };
            out[k + 1] = out[k] + avg * d;
        }
        out
    }

    fn monomial(&mut self, mono: &Monomial) -> Vec<f64> {
        let n = self.path.steps;
        let mut v: Vec<f64> = (0..=n).map(|k| self.path.time(k).powi(mono.h as i32)).collect();
        for (&m, &p) in &mono.w {
            for (k, x) in v.iter_mut().enumerate() {
                *x *= self.path.value(m, k).powi(p as i32);
            }
        }
        for i in &mono.ints {
            let iv = self.integral(i);
            for (x, y) in v.iter_mut().zip(iv.iter()) {
                *x *= y;
            }
        }
        v
    }

    fn integral(&mut self, i: &IterInt) -> Rc<Vec<f64>> {
        if let Some(v) = self.cache.get(i) {
            return v.clone();
        }
        let f = self.monomial(&i.integrand);
        let v = Rc::new(self.cumulative(i.color, &f, monomial_is_deterministic(&i.integrand)));
        self.cache.insert(i.clone(), v.clone());
        v
    }

    fn expr(&mut self, e: &WeightExpr) -> Vec<f64> {
        let mut out = vec![0.0; self.path.steps + 1];
        for (mono, c) in e.terms() {
            let c = to_f64(c);
            for (x, y) in out.iter_mut().zip(self.monomial(mono)) {
                *x += c * y;
            }
        }
        out
    }

    fn raw(&mut self, e: &RawExpr) -> Vec<f64> {
        let n = self.path.steps;
        match e {
            RawExpr::Const(c) => vec![to_f64(c); n + 1],
            RawExpr::Var(p) => (0..=n).map(|k| self.path.time(k).powi(*p as i32)).collect(),
            RawExpr::Wiener(m, p) => (0..=n).map(|k| self.path.value(*m, k).powi(*p as i32)).collect(),
            RawExpr::Int(m, fs) => {
                let mut f = vec![1.0; n + 1];
                for x in fs {
                    for (a, b) in f.iter_mut().zip(self.raw(x)) {
                        *a *= b;
                    }
                }
                self.cumulative(*m, &f, fs.iter().all(raw_is_deterministic))
            }
            RawExpr::Sum(xs) => {
                let mut out = vec![0.0; n + 1];
                for x in xs {
                    for (a, b) in out.iter_mut().zip(self.raw(x)) {
                        *a += b;
                    }
                }
                out
            }
            RawExpr::Product(xs) => {
                let mut out = vec![1.0; n + 1];
                for x in xs {
                    for (a, b) in out.iter_mut().zip(self.raw(x)) {
                        *a *= b;
                    }
                }
                out
            }
            RawExpr::Neg(x) => self.raw(x).into_iter().map(|v| -v).collect(),
        }
    }
}

/// Value of `expr` on `path`: left-point sums for Itô integrals of random
/// integrands, trapezoidal averages for everything else.
pub fn eval_weight(expr: &WeightExpr, path: &PathGrid, interp: Interpretation) -> Result<f64> {
    check_colors(&expr.colors(), path)?;
    let mut q = Quadrature {
        path,
        interp,
        cache: HashMap::new(),
    };
    Ok(*q.expr(expr).last().unwrap())
}

/// Same quadrature applied to an expression as written, without normalization.
pub fn eval_raw(expr: &RawExpr, path: &PathGrid, interp: Interpretation) -> Result<f64> {
    check_colors(&expr.colors(), path)?;
    let mut q = Quadrature {
        path,
        interp,
        cache: HashMap::new(),
    };
    Ok(*q.raw(expr).last().unwrap())
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct MCStats {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    /// Sample mean of the squared values and its standard error.
    pub second_moment: f64,
    pub second_moment_se: f64,
}

/// Sum by recursive halving; the split points depend only on the length.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

impl MCStats {
    pub fn from_samples(v: &[f64]) -> MCStats {
        let n = v.len();
        let nf = n as f64;
        let mean = pairwise_sum(v) / nf;
        let dev: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
        let variance = if n > 1 { pairwise_sum(&dev) / (nf - 1.0) } else { 0.0 };
        let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
        let second_moment = pairwise_sum(&sq) / nf;
        let dev2: Vec<f64> = sq.iter().map(|x| (x - second_moment).powi(2)).collect();
        let var2 = if n > 1 { pairwise_sum(&dev2) / (nf - 1.0) } else { 0.0 };
        MCStats {
            count: n,
            mean,
            variance,
            std_error: (variance / nf).sqrt(),
            second_moment,
            second_moment_se: (var2 / nf).sqrt(),
        }
    }
}

/// Monte Carlo statistics of `expr` over `n_paths` independent paths.
pub fn mc_moments(
    expr: &WeightExpr,
    h: f64,
    steps: usize,
    n_paths: usize,
    interp: Interpretation,
    seed: u64,
) -> Result<MCStats> {
    if n_paths == 0 || steps == 0 {
        return Err(Error::InvalidArgument("paths and steps must be positive".into()));
    }
    let colors = expr.colors().last().copied().unwrap_or(0);
    let values: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let path = sample_path_indexed(h, steps, colors, seed, p);
            eval_weight(expr, &path, interp)
        })
        .collect::<Result<_>>()?;
    Ok(MCStats::from_samples(&values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_start_at_zero_and_repeat() {
        let a = sample_path(0.5, 64, 2, 11);
        assert!(a.w.iter().all(|w| w[0] == 0.0));
        assert_eq!(a, sample_path(0.5, 64, 2, 11));
        assert_ne!(a.w[0], a.w[1]);
        assert_ne!(a, sample_path_indexed(0.5, 64, 2, 11, 1));
    }

    #[test]
    fn refinement_is_consistent() {
        let coarse = sample_path(1.0, 32, 1, 3);
        let fine = sample_path(1.0, 64, 1, 3);
        assert_eq!(fine.coarsen(32).unwrap(), coarse);
        assert!(fine.coarsen(3).is_err());
    }

    #[test]
    fn deterministic_quadrature() {
        let path = sample_path(0.7, 10, 0, 0);
        let h = eval_weight(&WeightExpr::h(), &path, Interpretation::Ito).unwrap();
        assert_eq!(h, 0.7);
        let raw = RawExpr::parse("Int0[Int0[1]]").unwrap();
        let v = eval_raw(&raw, &path, Interpretation::Stratonovich).unwrap();
        assert!((v - 0.49 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn missing_colors_are_reported() {
        let path = sample_path(1.0, 4, 1, 0);
        let e = WeightExpr::dw(2);
        assert_eq!(
            eval_weight(&e, &path, Interpretation::Ito),
            Err(Error::ColorMissing { color: 2, available: 1 })
        );
    }

    #[test]
    fn ito_and_stratonovich_differ_by_half_h() {
        let path = sample_path(1.0, 4096, 1, 5);
        let e = WeightExpr::parse("Int1[W1]").unwrap();
        let ito = eval_weight(&e, &path, Interpretation::Ito).unwrap();
        let st = eval_weight(&e, &path, Interpretation::Stratonovich).unwrap();
        let w = path.value(1, 4096);
        assert!((st - w * w / 2.0).abs() < 1e-12);
        let qv: f64 = (0..4096).map(|k| path.increment(1, k).powi(2)).sum();
        assert!((st - ito - qv / 2.0).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_plain_sum() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }
}
