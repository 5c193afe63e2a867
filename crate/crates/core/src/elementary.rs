//! Concrete SDE problems, elementary differentials and numerical evaluation of
//! truncated B-series.
//!
//! The state is one flat vector `z`: the partitions `x^{(1)}, …, x^{(Q)}` one
//! after the other, followed by the auxiliary coordinates of the tree model
//! (`t` for the semi-linear model, `t, W_1, …, W_l` for the non-autonomous
//! one). Leaf-only nodes then act as unit directions along those coordinates,
//! and the `A`-node is the ordinary vector field `A(t)x`, so the case split of
//! its elementary differentials comes out of the derivatives.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::jet::{Jet, Scalar};
use crate::numbers::to_f64;
use crate::series::BSeries;
use crate::stochastic_eval::{eval_weight, PathGrid};
use crate::trees::{NodeLabel, Root, Tree, TreeModel};
use crate::weight::Interpretation;

/// A coefficient function of the full state.
pub trait Field: Send + Sync {
    fn out_dim(&self) -> usize;
    fn eval(&self, z: &[f64]) -> Vec<f64>;
    /// Jet evaluation, if the function is written generically.
    fn eval_jet(&self, _z: &[Jet]) -> Option<Vec<Jet>> {
        None
    }
}

/// A map written once for every [`Scalar`] type.
pub trait SmoothMap: Send + Sync {
    fn out_dim(&self) -> usize;
    fn apply<S: Scalar>(&self, z: &[S]) -> Vec<S>;
}

/// Field with analytic derivatives through jets.
pub struct Analytic<F>(pub F);

impl<F: SmoothMap> Field for Analytic<F> {
    fn out_dim(&self) -> usize {
        self.0.out_dim()
    }
    fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.0.apply(z)
    }
    fn eval_jet(&self, z: &[Jet]) -> Option<Vec<Jet>> {
        Some(self.0.apply(z))
    }
}

/// Field given only pointwise; derivatives fall back to finite differences.
pub struct Pointwise<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64> + Send + Sync> Field for Pointwise<F> {
    fn out_dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, z: &[f64]) -> Vec<f64> {
        (self.f)(z)
    }
}

/// `A(t)x` for a matrix function given row-major as a field of `[t]`.
struct LinearPart {
    dim: usize,
    t_index: usize,
    matrix: Arc<dyn Field>,
}

impl LinearPart {
    fn apply<S: Scalar>(&self, z: &[S], a: &[S]) -> Vec<S> {
        (0..self.dim)
            .map(|i| {
                (0..self.dim).fold(z[0].constant(0.0), |acc, j| {
                    acc + a[i * self.dim + j].clone() * z[j].clone()
                })
            })
            .collect()
    }
}

impl Field for LinearPart {
    fn out_dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, z: &[f64]) -> Vec<f64> {
        let a = self.matrix.eval(&z[self.t_index..=self.t_index]);
        self.apply(z, &a)
    }
    fn eval_jet(&self, z: &[Jet]) -> Option<Vec<Jet>> {
        let a = self.matrix.eval_jet(&z[self.t_index..=self.t_index])?;
        Some(self.apply(z, &a))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivativeMode {
    /// Jets where the field supports them, finite differences otherwise.
    Analytic,
    FiniteDifference,
}

#[derive(Clone)]
pub struct SdeProblem {
    pub name: String,
    pub model: TreeModel,
    pub interpretation: Interpretation,
    /// `d_q` per partition.
    pub dims: Vec<usize>,
    pub fields: BTreeMap<NodeLabel, Arc<dyn Field>>,
    /// `A(t)` row-major as a field of `[t]` (semi-linear model only).
    pub linear: Option<Arc<dyn Field>>,
    /// Initial partitions, concatenated.
    pub x0: Vec<f64>,
    pub t0: f64,
    pub mode: DerivativeMode,
}

impl std::fmt::Debug for SdeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeProblem")
            .field("name", &self.name)
            .field("model", &self.model)
            .field("dims", &self.dims)
            .field("x0", &self.x0)
            .finish()
    }
}

impl SdeProblem {
    pub fn with_mode(mut self, mode: DerivativeMode) -> SdeProblem {
        self.mode = mode;
        self
    }

    pub fn x_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn state_dim(&self) -> usize {
        self.x_dim() + self.model.leaf_only_labels().len()
    }

    pub fn offset(&self, q: u32) -> usize {
        self.dims[..q as usize - 1].iter().sum()
    }

    /// Index of the auxiliary coordinate of a leaf-only label.
    pub fn aux_index(&self, label: NodeLabel) -> Option<usize> {
        let pos = self.model.leaf_only_labels().iter().position(|&l| l == label)?;
        Some(self.x_dim() + pos)
    }

    /// Full state at `(x, t)` with the Wiener coordinates at 0.
    pub fn state(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut z = x.to_vec();
        for l in self.model.leaf_only_labels() {
            z.push(if l == NodeLabel::T { t } else { 0.0 });
        }
        z
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.state(&self.x0, self.t0)
    }

    pub fn field(&self, label: NodeLabel) -> Result<Arc<dyn Field>> {
        if label == NodeLabel::A {
            let matrix = self
                .linear
                .clone()
                .ok_or_else(|| Error::ModelMismatch(format!("problem {} has no linear part", self.name)))?;
            return Ok(Arc::new(LinearPart {
                dim: self.x_dim(),
                t_index: self.aux_index(NodeLabel::T).unwrap_or(self.x_dim()),
                matrix,
            }));
        }
        self.fields
            .get(&label)
            .cloned()
            .ok_or_else(|| Error::ModelMismatch(format!("problem {} has no coefficient {label}", self.name)))
    }

    /// `A(t)` as a matrix.
    pub fn a_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        let d = self.x_dim();
        let f = self
            .linear
            .as_ref()
            .ok_or_else(|| Error::ModelMismatch(format!("problem {} has no linear part", self.name)))?;
        Ok(DMatrix::from_row_slice(d, d, &f.eval(&[t])))
    }

    /// `d^k A / dt^k (t)`.
    pub fn a_derivative(&self, t: f64, k: usize) -> Result<DMatrix<f64>> {
        let d = self.x_dim();
        let f = self
            .linear
            .as_ref()
            .ok_or_else(|| Error::ModelMismatch(format!("problem {} has no linear part", self.name)))?;
        let entries = derivative(f.as_ref(), &[t], &vec![vec![1.0]; k], self.mode, "A")?;
        Ok(DMatrix::from_row_slice(d, d, &entries))
    }

    /// Sum over coefficient functions of each color of their embedding into the
    /// full state, including the auxiliary coordinates: `dz = Σ_m b_m(z) ⋆dW_m`.
    pub fn vector_fields(&self, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = self.state_dim();
        let mut out = vec![vec![0.0; n]; self.model.colors() as usize + 1];
        for label in self.model.node_labels() {
            let f = self.field(label)?;
            let v = f.eval(z);
            let off = self.offset(label.partition());
            for (i, x) in v.into_iter().enumerate() {
                out[label.color() as usize][off + i] += x;
            }
        }
        for l in self.model.leaf_only_labels() {
            let idx = self.aux_index(l).unwrap();
            out[l.color() as usize][idx] += 1.0;
        }
        Ok(out)
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Mixed central differences for `D^k g(z)[u_1, …, u_k]`, `k ≤ 3`.
pub fn fd_directional(field: &dyn Field, z: &[f64], directions: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = directions.len();
    if k > 3 {
        return Err(Error::DerivativeOrderUnsupported {
            label: "finite differences".into(),
            order: k,
        });
    }
    if k == 0 {
        return Ok(field.eval(z));
    }
    if directions.iter().any(|u| norm_inf(u) == 0.0) {
        return Ok(vec![0.0; field.out_dim()]);
    }
    let base = f64::EPSILON.powf(1.0 / (k as f64 + 2.0)) * (1.0 + norm_inf(z));
    let steps: Vec<f64> = directions.iter().map(|u| base / norm_inf(u)).collect();
    let mut acc = vec![0.0; field.out_dim()];
    for signs in 0..(1usize << k) {
        let mut p = z.to_vec();
        let mut sign = 1.0;
        for (i, u) in directions.iter().enumerate() {
            let s = if signs >> i & 1 == 1 { -1.0 } else { 1.0 };
            sign *= s;
            for (pj, uj) in p.iter_mut().zip(u) {
                *pj += s * steps[i] * uj;
            }
        }
        for (a, v) in acc.iter_mut().zip(field.eval(&p)) {
            *a += sign * v;
        }
    }
    let denom: f64 = steps.iter().product::<f64>() * (1usize << k) as f64;
    Ok(acc.into_iter().map(|a| a / denom).collect())
}

/// `D^k g(z)[u_1, …, u_k]` by jets when available, else finite differences.
pub fn derivative(
    field: &dyn Field,
    z: &[f64],
    directions: &[Vec<f64>],
    mode: DerivativeMode,
    label: &str,
) -> Result<Vec<f64>> {
    if directions.is_empty() {
        return Ok(field.eval(z));
    }
    if mode == DerivativeMode::Analytic {
        let jz: Vec<Jet> = z
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let du: Vec<f64> = directions.iter().map(|u| u[i]).collect();
                Jet::seeded(x, &du)
            })
            .collect();
        if let Some(v) = field.eval_jet(&jz) {
            return Ok(v.iter().map(Jet::top).collect());
        }
    }
    if directions.len() > 3 {
        return Err(Error::DerivativeOrderUnsupported {
            label: label.to_string(),
            order: directions.len(),
        });
    }
    fd_directional(field, z, directions)
}

fn validate(problem: &SdeProblem, tau: &Tree) -> Result<()> {
    let check = if tau.label() == Some(NodeLabel::F) {
        problem.model.check_function_tree(tau)
    } else {
        problem.model.check(tau)
    };
    check.map_err(|e| Error::ModelMismatch(format!("{tau} is not a tree of problem {}: {e}", problem.name)))
}

/// `F(τ)(z)`, a vector in the space of the partition of `τ`.
pub fn eval_elementary(problem: &SdeProblem, tau: &Tree, z: &[f64]) -> Result<Vec<f64>> {
    validate(problem, tau)?;
    elementary(problem, tau, z)
}

fn elementary(problem: &SdeProblem, tau: &Tree, z: &[f64]) -> Result<Vec<f64>> {
    match tau.root() {
        Root::Empty(q) => {
            let off = problem.offset(q);
            Ok(z[off..off + problem.dims[q as usize - 1]].to_vec())
        }
        Root::Node(label) if label.is_leaf_only() => Ok(vec![1.0]),
        Root::Node(label) => {
            let field = problem.field(label)?;
            apply_node(problem, field.as_ref(), &label.to_string(), tau.children(), z)
        }
    }
}

fn apply_node(problem: &SdeProblem, field: &dyn Field, name: &str, children: &[Tree], z: &[f64]) -> Result<Vec<f64>> {
    let dirs = children
        .iter()
        .map(|c| direction(problem, c, z))
        .collect::<Result<Vec<_>>>()?;
    derivative(field, z, &dirs, problem.mode, name)
}

/// `F(τ)` embedded as a direction in the full state.
fn direction(problem: &SdeProblem, tau: &Tree, z: &[f64]) -> Result<Vec<f64>> {
    let mut u = vec![0.0; problem.state_dim()];
    let label = tau.label().expect("empty trees are never children");
    if label.is_leaf_only() {
        let idx = problem
            .aux_index(label)
            .ok_or_else(|| Error::ModelMismatch(format!("no coordinate for {label}")))?;
        u[idx] = 1.0;
        return Ok(u);
    }
    let v = elementary(problem, tau, z)?;
    let off = problem.offset(tau.partition());
    u[off..off + v.len()].copy_from_slice(&v);
    Ok(u)
}

/// `G(u)(z)` for `u = [τ_1, …, τ_κ]_f`: `D^κ f(z)[F(τ_1), …, F(τ_κ)]`.
pub fn eval_function_tree(problem: &SdeProblem, f: &dyn Field, u: &Tree, z: &[f64]) -> Result<Vec<f64>> {
    validate(problem, u)?;
    apply_node(problem, f, "f", u.children(), z)
}

/// `Σ_τ α(τ) φ(τ)(h) F(τ)(z)` with the weights read off `path`, per partition,
/// concatenated.
pub fn eval_bseries(problem: &SdeProblem, series: &BSeries, z: &[f64], h: f64, path: &PathGrid) -> Result<Vec<f64>> {
    if series.model != problem.model {
        return Err(Error::ModelMismatch(format!(
            "series over the {} model, problem {} uses the {} model",
            series.model.name(),
            problem.name,
            problem.model.name()
        )));
    }
    if (path.h - h).abs() > 1e-12 * h.abs().max(1.0) {
        return Err(Error::PathTooShort(format!(
            "path covers [0, {}], step needs [0, {h}]",
            path.h
        )));
    }
    let mut out = vec![0.0; problem.x_dim()];
    for (tau, w) in series.iter() {
        if tau.label().is_some_and(NodeLabel::is_leaf_only) {
            continue;
        }
        let phi = eval_weight(w, path, problem.interpretation)?;
        if phi == 0.0 {
            continue;
        }
        let f = elementary(problem, tau, z)?;
        let c = to_f64(&tau.alpha()) * phi;
        let off = problem.offset(tau.partition());
        for (o, v) in out[off..off + f.len()].iter_mut().zip(f) {
            *o += c * v;
        }
    }
    Ok(out)
}

pub mod fixtures {
    //! Built-in test problems. The Langevin coefficients are fixtures chosen
    //! for testing (smooth, bounded, time dependent), not data.

    use super::*;

    /// Friction `α(t) = 1 + t²/4`.
    fn friction<S: Scalar>(t: &S) -> S {
        t.constant(1.0) + t.clone() * t.clone() * t.constant(0.25)
    }

    /// `f_d(r, t) = -sin(r)(1 + t)`.
    fn force<S: Scalar>(r: &S, t: &S) -> S {
        -(r.sin() * (t.constant(1.0) + t.clone()))
    }

    /// `f_s(r, v, t)`; the default depends on `r` only.
    fn noise<S: Scalar>(r: &S, v: &S, t: &S, v_dependent: bool) -> S {
        let time = t.constant(1.0) + t.scale(0.5);
        let space = if v_dependent {
            r.cos() + v.sin().scale(0.5)
        } else {
            r.cos()
        };
        space * time.scale(0.2)
    }

    macro_rules! smooth_map {
        ($name:ident, $dim:expr, |$z:ident| $body:expr) => {
            struct $name;
            impl SmoothMap for $name {
                fn out_dim(&self) -> usize {
                    $dim
                }
                fn apply<S: Scalar>(&self, $z: &[S]) -> Vec<S> {
                    $body
                }
            }
        };
    }

    // General partitioned form: z = (R, V, t).
    smooth_map!(LangevinForce, 2, |z| vec![z[0].constant(0.0), force(&z[0], &z[2])]);
    smooth_map!(LangevinFriction, 2, |z| vec![
        z[1].clone(),
        -(friction(&z[2]) * z[1].clone())
    ]);
    smooth_map!(LangevinNoise, 2, |z| vec![
        z[0].constant(0.0),
        noise(&z[0], &z[1], &z[2], false)
    ]);
    smooth_map!(LangevinNoiseV, 2, |z| vec![
        z[0].constant(0.0),
        noise(&z[0], &z[1], &z[2], true)
    ]);
    smooth_map!(Clock, 1, |z| vec![z[0].constant(1.0)]);

    // Semi-linear form: A(t) of [t], fields of (R, V, t).
    smooth_map!(LangevinLinear, 4, |z| {
        let c = |x: f64| z[0].constant(x);
        vec![c(0.0), c(1.0), c(0.0), -friction(&z[0])]
    });

    // Noncommutative 2x2 fixture.
    smooth_map!(RotLinear, 4, |z| {
        let c = |x: f64| z[0].constant(x);
        vec![c(-1.0), c(1.0), z[0].clone(), c(-1.0)]
    });
    smooth_map!(RotDrift, 2, |z| {
        let time = z[2].constant(1.0) + z[2].clone();
        vec![z[1].sin().scale(0.5), -(z[0].cos() * time).scale(0.5)]
    });
    smooth_map!(RotNoise, 2, |z| {
        vec![z[1].cos().scale(0.4), z[0].sin().scale(0.3) + z[1].scale(0.2)]
    });

    // Scalar: A = -1, g_0 = sin x, g_1 = x/2.
    smooth_map!(ScalarLinear, 1, |z| vec![z[0].constant(-1.0)]);
    smooth_map!(ScalarDrift, 1, |z| vec![z[0].sin()]);
    smooth_map!(ScalarNoise, 1, |z| vec![z[0].scale(0.5)]);

    fn arc<F: SmoothMap + 'static>(f: F) -> Arc<dyn Field> {
        Arc::new(Analytic(f))
    }

    fn general(v_noise: bool) -> SdeProblem {
        let mut fields = BTreeMap::new();
        fields.insert(NodeLabel::General { q: 1, v: 1, m: 0 }, arc(LangevinForce));
        fields.insert(NodeLabel::General { q: 1, v: 2, m: 0 }, arc(LangevinFriction));
        fields.insert(
            NodeLabel::General { q: 1, v: 1, m: 1 },
            if v_noise {
                arc(LangevinNoiseV)
            } else {
                arc(LangevinNoise)
            },
        );
        fields.insert(NodeLabel::General { q: 2, v: 1, m: 0 }, arc(Clock));
        SdeProblem {
            name: if v_noise { "langevin-vnoise" } else { "langevin" }.into(),
            model: TreeModel::langevin(),
            interpretation: Interpretation::Stratonovich,
            dims: vec![2, 1],
            fields,
            linear: None,
            x0: vec![1.0, 0.5, 0.0],
            t0: 0.0,
            mode: DerivativeMode::Analytic,
        }
    }

    /// Langevin equation split as `X¹ = (R, V)`, `X² = t`.
    pub fn langevin() -> SdeProblem {
        general(false)
    }

    /// As [`langevin`] with noise intensity `0.2(1 + t/2)(cos r + sin(v)/2)`.
    pub fn langevin_vnoise() -> SdeProblem {
        general(true)
    }

    fn semilinear(
        name: &str,
        linear: Arc<dyn Field>,
        g0: Arc<dyn Field>,
        g1: Arc<dyn Field>,
        x0: Vec<f64>,
    ) -> SdeProblem {
        let mut fields = BTreeMap::new();
        fields.insert(NodeLabel::G(0), g0);
        fields.insert(NodeLabel::G(1), g1);
        SdeProblem {
            name: name.into(),
            model: TreeModel::semilinear(1),
            interpretation: Interpretation::Stratonovich,
            dims: vec![x0.len()],
            fields,
            linear: Some(linear),
            x0,
            t0: 0.0,
            mode: DerivativeMode::Analytic,
        }
    }

    /// The Langevin equation as `dX = A(t)X dt + g_0 dt + g_1 ∘dW`.
    pub fn langevin_semilinear() -> SdeProblem {
        semilinear(
            "langevin",
            arc(LangevinLinear),
            arc(LangevinForce),
            arc(LangevinNoise),
            vec![1.0, 0.5],
        )
    }

    pub fn langevin_vnoise_semilinear() -> SdeProblem {
        semilinear(
            "langevin-vnoise",
            arc(LangevinLinear),
            arc(LangevinForce),
            arc(LangevinNoiseV),
            vec![1.0, 0.5],
        )
    }

    /// `A(t) = [[-1, 1], [t, -1]]` (so `A Ȧ ≠ Ȧ A`) with nonlinear drift and
    /// multiplicative noise.
    pub fn noncommutative() -> SdeProblem {
        semilinear(
            "noncommutative",
            arc(RotLinear),
            arc(RotDrift),
            arc(RotNoise),
            vec![1.0, 0.5],
        )
    }

    pub fn scalar_semilinear() -> SdeProblem {
        semilinear(
            "scalar-semilinear",
            arc(ScalarLinear),
            arc(ScalarDrift),
            arc(ScalarNoise),
            vec![1.0],
        )
    }

    pub const GENERAL_NAMES: [&str; 2] = ["langevin", "langevin-vnoise"];
    pub const SEMILINEAR_NAMES: [&str; 4] = ["langevin", "langevin-vnoise", "noncommutative", "scalar-semilinear"];

    /// Problems in the general partitioned form.
    pub fn general_problem(name: &str) -> Result<SdeProblem> {
        match name {
            "langevin" => Ok(langevin()),
            "langevin-vnoise" => Ok(langevin_vnoise()),
            _ => Err(Error::InvalidArgument(format!(
                "unknown problem '{name}' (available: {})",
                GENERAL_NAMES.join(", ")
            ))),
        }
    }

    /// Problems in semi-linear form.
    pub fn semilinear_problem(name: &str) -> Result<SdeProblem> {
        match name {
            "langevin" => Ok(langevin_semilinear()),
            "langevin-vnoise" => Ok(langevin_vnoise_semilinear()),
            "noncommutative" => Ok(noncommutative()),
            "scalar-semilinear" => Ok(scalar_semilinear()),
            _ => Err(Error::InvalidArgument(format!(
                "unknown problem '{name}' (available: {})",
                SEMILINEAR_NAMES.join(", ")
            ))),
        }
    }
}
