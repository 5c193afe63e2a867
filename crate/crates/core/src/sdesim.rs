//! Time stepping of semi-linear test problems with exponential Runge–Kutta
//! methods, a fine-grid reference solver, and mean-square order estimates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::elementary::SdeProblem;
use crate::error::{Error, Result};
use crate::numbers::to_f64;
use crate::semilinear_erk::{builtin_exponential_midpoint, ERKMethodSpec};
use crate::stochastic_eval::{pairwise_sum, sample_path_indexed, PathGrid};
use crate::trees::{NodeLabel, Root, Tree};
use crate::weight::Interpretation;

/// How the operator coefficients of a step are formed.
#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientMaps {
    /// Exponential midpoint with `exp(∫A)` by Simpson quadrature and a matrix
    /// exponential.
    MidpointExponentials,
    /// Truncated coefficient series of the method, summed with the
    /// derivatives of `A` at the left end of the step.
    Series,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErkIntegrator {
    pub method: ERKMethodSpec,
    pub maps: CoefficientMaps,
}

impl ErkIntegrator {
    pub fn midpoint() -> ErkIntegrator {
        ErkIntegrator {
            method: builtin_exponential_midpoint(crate::numbers::HalfInt::from_twice(7)).expect("builtin"),
            maps: CoefficientMaps::MidpointExponentials,
        }
    }

    pub fn from_series(method: ERKMethodSpec) -> ErkIntegrator {
        ErkIntegrator {
            method,
            maps: CoefficientMaps::Series,
        }
    }
}

/// Operator coefficients of one step as matrices.
#[derive(Clone, Debug)]
pub struct StepCoefficients {
    pub stage0: Vec<DMatrix<f64>>,
    /// `[m][i][j]`.
    pub stage: Vec<Vec<Vec<DMatrix<f64>>>>,
    pub update0: DMatrix<f64>,
    /// `[m][i]`.
    pub update: Vec<Vec<DMatrix<f64>>>,
}

/// `∫_a^b A(s) ds` by Simpson's rule.
pub fn integral_of_a(problem: &SdeProblem, a: f64, b: f64) -> Result<DMatrix<f64>> {
    let m = (a + b) / 2.0;
    Ok((problem.a_matrix(a)? + problem.a_matrix(m)? * 4.0 + problem.a_matrix(b)?) * ((b - a) / 6.0))
}

pub fn exp_integral(problem: &SdeProblem, a: f64, b: f64) -> Result<DMatrix<f64>> {
    Ok(integral_of_a(problem, a, b)?.exp())
}

/// The matrix `M(τ)` with `F(τ)(x, t) = M(τ) x` for `τ ∈ T̄_A`.
pub fn tbar_a_matrix(problem: &SdeProblem, tau: &Tree, t: f64) -> Result<DMatrix<f64>> {
    let d = problem.x_dim();
    match tau.root() {
        Root::Empty(_) => Ok(DMatrix::identity(d, d)),
        Root::Node(NodeLabel::A) => {
            let k = tau
                .children()
                .iter()
                .filter(|c| c.label() == Some(NodeLabel::T))
                .count();
            let inner = tau.children().iter().find(|c| c.label() != Some(NodeLabel::T));
            match inner {
                None => problem.a_derivative(t, k),
                Some(c) => Ok(problem.a_derivative(t, k)? * tbar_a_matrix(problem, c, t)?),
            }
        }
        _ => Err(Error::ModelMismatch(format!("{tau} is not built from A and t nodes"))),
    }
}

fn series_matrix(
    problem: &SdeProblem,
    series: &crate::series::BSeries,
    t: f64,
    h: f64,
    dw: &[f64],
) -> Result<DMatrix<f64>> {
    let d = problem.x_dim();
    let mut out = DMatrix::zeros(d, d);
    for (tau, w) in series.iter() {
        let c = w.eval_poly(h, dw)?;
        if c == 0.0 {
            continue;
        }
        out += tbar_a_matrix(problem, tau, t)? * (to_f64(&tau.alpha()) * c);
    }
    Ok(out)
}

impl ErkIntegrator {
    /// Coefficients for the step `[t, t + h]` with increments `dw[m - 1]`.
    pub fn coefficients(&self, problem: &SdeProblem, t: f64, h: f64, dw: &[f64]) -> Result<StepCoefficients> {
        let d = problem.x_dim();
        let eye = DMatrix::<f64>::identity(d, d);
        match self.maps {
            CoefficientMaps::MidpointExponentials => {
                let half = exp_integral(problem, t, t + h / 2.0)?;
                let full = exp_integral(problem, t, t + h)?;
                let second = exp_integral(problem, t + h / 2.0, t + h)?;
                let dw1 = dw[0];
                Ok(StepCoefficients {
                    stage0: vec![half],
                    stage: vec![vec![vec![&eye * (h / 2.0)]], vec![vec![&eye * (dw1 / 2.0)]]],
                    update0: full,
                    update: vec![vec![&second * h], vec![&second * dw1]],
                })
            }
            CoefficientMaps::Series => {
                let m = &self.method;
                let mat = |s| series_matrix(problem, s, t, h, dw);
                Ok(StepCoefficients {
                    stage0: m.stage0.iter().map(mat).collect::<Result<_>>()?,
                    stage: m
                        .stage
                        .iter()
                        .map(|rows| {
                            rows.iter()
                                .map(|r| r.iter().map(mat).collect::<Result<Vec<_>>>())
                                .collect::<Result<Vec<_>>>()
                        })
                        .collect::<Result<_>>()?,
                    update0: mat(&m.update0)?,
                    update: m
                        .update
                        .iter()
                        .map(|r| r.iter().map(mat).collect::<Result<Vec<_>>>())
                        .collect::<Result<_>>()?,
                })
            }
        }
    }

    /// One step from `(y, t)`.
    pub fn step(&self, problem: &SdeProblem, y: &DVector<f64>, t: f64, h: f64, dw: &[f64]) -> Result<DVector<f64>> {
        let m = &self.method;
        let colors = m.colors as usize + 1;
        let k = self.coefficients(problem, t, h, dw)?;
        let fields = (0..colors)
            .map(|c| problem.field(NodeLabel::G(c as u32)))
            .collect::<Result<Vec<_>>>()?;
        let times: Vec<f64> = m.c.iter().map(|c| t + to_f64(c) * h).collect();
        let g = |c: usize, x: &DVector<f64>, time: f64| -> DVector<f64> {
            DVector::from_vec(fields[c].eval(&problem.state(x.as_slice(), time)))
        };
        let base: Vec<DVector<f64>> = k.stage0.iter().map(|z| z * y).collect();
        let mut stages = base.clone();
        let mut converged = false;
        for _ in 0..100 {
            let evals: Vec<Vec<DVector<f64>>> = (0..colors)
                .map(|c| stages.iter().zip(&times).map(|(x, &ti)| g(c, x, ti)).collect())
                .collect();
            let mut next = base.clone();
            for (i, n) in next.iter_mut().enumerate() {
                for (c, ev) in evals.iter().enumerate() {
                    for (j, e) in ev.iter().enumerate() {
                        *n += &k.stage[c][i][j] * e;
                    }
                }
            }
            let change = next
                .iter()
                .zip(&stages)
                .map(|(a, b)| (a - b).amax() / (1.0 + a.amax()))
                .fold(0.0, f64::max);
            stages = next;
            if !change.is_finite() {
                break;
            }
            if change <= 1e-12 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::StageDivergence {
                t,
                h,
                update: stages.iter().map(|s| s.amax()).fold(0.0, f64::max),
            });
        }
        let mut out = &k.update0 * y;
        for c in 0..colors {
            for (i, (x, &ti)) in stages.iter().zip(&times).enumerate() {
                out += &k.update[c][i] * g(c, x, ti);
            }
        }
        Ok(out)
    }
}

/// States at `t_0, t_0 + h, …, t_0 + T` along `path`, which must cover `[0, T]`
/// on a grid that refines the `T/h` steps.
pub fn integrate_erk(
    problem: &SdeProblem,
    integrator: &ErkIntegrator,
    horizon: f64,
    h: f64,
    path: &PathGrid,
) -> Result<Vec<DVector<f64>>> {
    let n = steps_for(horizon, h)?;
    if (path.h - horizon).abs() > 1e-12 * horizon {
        return Err(Error::PathTooShort(format!(
            "path covers [0, {}], need [0, {horizon}]",
            path.h
        )));
    }
    if integrator.method.colors > path.colors() {
        return Err(Error::ColorMissing {
            color: integrator.method.colors,
            available: path.colors(),
        });
    }
    let coarse = path.coarsen(n)?;
    let mut y = DVector::from_vec(problem.x0.clone());
    let mut out = Vec::with_capacity(n + 1);
    out.push(y.clone());
    for k in 0..n {
        let dw: Vec<f64> = (1..=coarse.colors()).map(|m| coarse.increment(m, k)).collect();
        y = integrator.step(problem, &y, problem.t0 + k as f64 * h, h, &dw)?;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "method state after step {} of size {h}",
                k + 1
            )));
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn steps_for(horizon: f64, h: f64) -> Result<usize> {
    let n = (horizon / h).round();
    if h <= 0.0 || n < 1.0 || (n * h - horizon).abs() > 1e-9 * horizon {
        return Err(Error::InvalidArgument(format!(
            "step {h} does not divide the horizon {horizon}"
        )));
    }
    Ok(n as usize)
}

/// Heun's method for Stratonovich problems, Euler–Maruyama for Itô ones, on
/// `n_fine` steps of `path`; returns the state at the horizon.
pub fn reference_solution(problem: &SdeProblem, horizon: f64, n_fine: usize, path: &PathGrid) -> Result<DVector<f64>> {
    if (path.h - horizon).abs() > 1e-12 * horizon {
        return Err(Error::PathTooShort(format!(
            "path covers [0, {}], need [0, {horizon}]",
            path.h
        )));
    }
    let fine = path.coarsen(n_fine)?;
    let colors = problem.model.colors();
    if colors > fine.colors() {
        return Err(Error::ColorMissing {
            color: colors,
            available: fine.colors(),
        });
    }
    let mut z = problem.initial_state();
    let incr = |fields: &[Vec<f64>], dw: &[f64]| -> Vec<f64> {
        let mut d = vec![0.0; fields[0].len()];
        for (f, w) in fields.iter().zip(dw) {
            for (a, b) in d.iter_mut().zip(f) {
                *a += b * w;
            }
        }
        d
    };
    for k in 0..n_fine {
        let dw: Vec<f64> = (0..=colors).map(|m| fine.increment(m, k)).collect();
        let b = problem.vector_fields(&z)?;
        let euler = incr(&b, &dw);
        match problem.interpretation {
            Interpretation::Ito => {
                for (a, e) in z.iter_mut().zip(euler) {
                    *a += e;
                }
            }
            Interpretation::Stratonovich => {
                let pred: Vec<f64> = z.iter().zip(&euler).map(|(a, e)| a + e).collect();
                let corr = incr(&problem.vector_fields(&pred)?, &dw);
                for ((a, e), c) in z.iter_mut().zip(euler).zip(corr) {
                    *a += 0.5 * (e + c);
                }
            }
        }
    }
    if !z.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("reference solution with {n_fine} steps")));
    }
    Ok(DVector::from_column_slice(&z[..problem.x_dim()]))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub problem: String,
    pub method: String,
    pub horizon: f64,
    pub n_paths: usize,
    pub n_fine: usize,
    pub seed: u64,
    pub h: Vec<f64>,
    pub rms_error: Vec<f64>,
    /// Delta-method standard error of each RMS value.
    pub se: Vec<f64>,
    /// 95% half-widths, `1.96 se`.
    pub half_width: Vec<f64>,
    /// Least-squares slope of `log2(rms)` against `log2(h)`.
    pub slope: f64,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["h", "rms_error", "se", "slope"]).map_err(io)?;
        let last = self.h.len() - 1;
        for i in 0..self.h.len() {
            let slope = if i == last {
                self.slope.to_string()
            } else {
                String::new()
            };
            w.write_record([
                self.h[i].to_string(),
                self.rms_error[i].to_string(),
                self.se[i].to_string(),
                slope,
            ])
            .map_err(io)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Mean-square errors at the horizon against the fine-grid reference for each
/// step size in `h_list`, every size integrating the same Brownian paths.
#[allow(clippy::too_many_arguments)]
pub fn ms_order_estimate(
    problem: &SdeProblem,
    integrator: &ErkIntegrator,
    h_list: &[f64],
    n_paths: usize,
    horizon: f64,
    seed: u64,
    n_fine: usize,
) -> Result<ConvergenceReport> {
    if n_paths < 2 {
        return Err(Error::InvalidArgument("at least two paths are needed".into()));
    }
    if h_list.len() < 2 || h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "step sizes must be strictly decreasing, at least two".into(),
        ));
    }
    for &h in h_list {
        let n = steps_for(horizon, h)?;
        if !n.is_power_of_two() || !n_fine.is_multiple_of(n) {
            return Err(Error::InvalidArgument(format!(
                "step {h} must be a dyadic fraction of the horizon dividing the fine grid"
            )));
        }
    }
    let colors = problem.model.colors().max(integrator.method.colors);
    let errors: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let path = sample_path_indexed(horizon, n_fine, colors, seed, p);
            let exact = reference_solution(problem, horizon, n_fine, &path)?;
            h_list
                .iter()
                .map(|&h| {
                    let y = integrate_erk(problem, integrator, horizon, h, &path)?;
                    Ok((y.last().unwrap() - &exact).norm_squared())
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let nf = n_paths as f64;
    let mut rms_error = Vec::new();
    let mut se = Vec::new();
    for i in 0..h_list.len() {
        let sq: Vec<f64> = errors.iter().map(|e| e[i]).collect();
        let mean = pairwise_sum(&sq) / nf;
        let dev: Vec<f64> = sq.iter().map(|x| (x - mean).powi(2)).collect();
        let var = pairwise_sum(&dev) / (nf - 1.0);
        let rms = mean.sqrt();
        if !var.is_finite() {
            return Err(Error::NonFinite(format!("mean-square error at h = {}", h_list[i])));
        }
        rms_error.push(rms);
        se.push(if rms > 0.0 {
            (var / nf).sqrt() / (2.0 * rms)
        } else {
            0.0
        });
    }
    let lx: Vec<f64> = h_list.iter().map(|h| h.log2()).collect();
    let ly: Vec<f64> = rms_error.iter().map(|e| e.log2()).collect();
    Ok(ConvergenceReport {
        problem: problem.name.clone(),
        method: integrator.method.name.clone(),
        horizon,
        n_paths,
        n_fine,
        seed,
        h: h_list.to_vec(),
        half_width: se.iter().map(|s| 1.96 * s).collect(),
        rms_error,
        se,
        slope: ls_slope(&lx, &ly),
    })
}

/// `2^-lo, …, 2^-hi` times the horizon.
pub fn dyadic_steps(horizon: f64, lo: u32, hi: u32) -> Vec<f64> {
    (lo..=hi).map(|k| horizon / f64::powi(2.0, k as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elementary::fixtures;
    use crate::stochastic_eval::sample_path;

    #[test]
    fn linear_flow_is_reproduced() {
        let mut p = fixtures::noncommutative();
        p.fields.insert(
            NodeLabel::G(0),
            std::sync::Arc::new(crate::elementary::Pointwise {
                dim: 2,
                f: |_: &[f64]| vec![0.0; 2],
            }),
        );
        p.fields.insert(
            NodeLabel::G(1),
            std::sync::Arc::new(crate::elementary::Pointwise {
                dim: 2,
                f: |_: &[f64]| vec![0.0; 2],
            }),
        );
        let y0 = DVector::from_vec(p.x0.clone());
        let y = ErkIntegrator::midpoint().step(&p, &y0, 0.3, 0.1, &[0.2]).unwrap();
        let want = exp_integral(&p, 0.3, 0.4).unwrap() * &y0;
        assert!((y - want).amax() < 1e-14);
    }

    #[test]
    fn series_maps_agree_with_exponentials_to_third_order() {
        let p = fixtures::noncommutative();
        let exp = ErkIntegrator::midpoint();
        let ser = ErkIntegrator::from_series(exp.method.clone());
        let y0 = DVector::from_vec(p.x0.clone());
        let mut prev = f64::INFINITY;
        for h in [0.1f64, 0.05, 0.025] {
            let dw = [0.7 * h.sqrt()];
            let a = exp.step(&p, &y0, 0.2, h, &dw).unwrap();
            let b = ser.step(&p, &y0, 0.2, h, &dw).unwrap();
            let diff = (a - b).amax();
            // Truncation after the h^3 terms.
            assert!(diff < prev / 12.0, "h = {h}: {diff} vs {prev}");
            prev = diff;
        }
    }

    #[test]
    fn zero_problem_stays_put() {
        let mut p = fixtures::scalar_semilinear();
        let zero = || -> std::sync::Arc<dyn crate::elementary::Field> {
            std::sync::Arc::new(crate::elementary::Pointwise {
                dim: 1,
                f: |_: &[f64]| vec![0.0],
            })
        };
        p.linear = Some(zero());
        p.fields.insert(NodeLabel::G(0), zero());
        p.fields.insert(NodeLabel::G(1), zero());
        let path = sample_path(1.0, 64, 1, 5);
        assert_eq!(reference_solution(&p, 1.0, 64, &path).unwrap()[0], p.x0[0]);
    }

    #[test]
    fn slope_of_exact_power_law() {
        let x = [-4.0, -5.0, -6.0];
        assert!((ls_slope(&x, &x.map(|v| 1.5 * v + 2.0)) - 1.5).abs() < 1e-14);
    }
}
