//! Exponential Runge–Kutta methods for semi-linear SDEs
//! `dX = A(t)X dt + Σ_m g_m(X, t) ⋆dW_m`: method coefficients as series over
//! the `g`-free trees, the weight recursion for stages and update, and order
//! residuals against the exact solution.

use std::collections::{BTreeMap, HashMap};

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::forest_ops::split_pairs;
use crate::numbers::{int, parse_rational, rational, HalfInt, Rational};
use crate::series::{exact_tree_weight, BSeries};
use crate::trees::{enumerate_trees, NodeLabel, Tree, TreeModel};
use crate::weight::{Interpretation, WeightExpr};

/// Trees of the semi-linear model with `colors` Wiener processes up to `rho_max`.
pub fn semilinear_trees(colors: u32, rho_max: HalfInt) -> Result<Vec<Tree>> {
    enumerate_trees(&TreeModel::semilinear(colors), rho_max)
}

/// `Z_{i0}`, `Z_{ij}^{(m)}`, `z_0`, `z_i^{(m)}` with abscissae `c_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ERKMethodSpec {
    pub name: String,
    pub stages: usize,
    pub colors: u32,
    pub c: Vec<Rational>,
    /// `Z_{i0}` per stage.
    pub stage0: Vec<BSeries>,
    /// `Z_{ij}^{(m)}` indexed `[m][i][j]`.
    pub stage: Vec<Vec<Vec<BSeries>>>,
    /// `z_0`.
    pub update0: BSeries,
    /// `z_i^{(m)}` indexed `[m][i]`.
    pub update: Vec<Vec<BSeries>>,
    /// Largest order of the coefficient trees that are given.
    pub cap: HalfInt,
}

impl ERKMethodSpec {
    pub fn model(&self) -> TreeModel {
        TreeModel::semilinear(self.colors)
    }

    /// Empty coefficient series for `stages` stages and `colors` noises.
    pub fn zeros(name: &str, stages: usize, colors: u32, c: Vec<Rational>, cap: HalfInt) -> ERKMethodSpec {
        let model = TreeModel::semilinear(colors);
        let zero = BSeries::new(model, cap);
        let m = colors as usize + 1;
        ERKMethodSpec {
            name: name.into(),
            stages,
            colors,
            c,
            stage0: vec![zero.clone(); stages],
            stage: vec![vec![vec![zero.clone(); stages]; stages]; m],
            update0: zero.clone(),
            update: vec![vec![zero; stages]; m],
            cap,
        }
    }

    fn all_series(&self) -> impl Iterator<Item = (String, &BSeries)> {
        let s0 = self.stage0.iter().enumerate().map(|(i, s)| (format!("Z{}0", i + 1), s));
        let s = self.stage.iter().enumerate().flat_map(|(m, rows)| {
            rows.iter().enumerate().flat_map(move |(i, row)| {
                row.iter()
                    .enumerate()
                    .map(move |(j, s)| (format!("Z{}{}^({m})", i + 1, j + 1), s))
            })
        });
        let u0 = std::iter::once(("z0".to_string(), &self.update0));
        let u = self.update.iter().enumerate().flat_map(|(m, row)| {
            row.iter()
                .enumerate()
                .map(move |(i, s)| (format!("z{}^({m})", i + 1), s))
        });
        s0.chain(s).chain(u0).chain(u)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.stages;
        let m = self.colors as usize + 1;
        if s == 0 || self.c.len() != s || self.stage0.len() != s || self.update.len() != m || self.stage.len() != m {
            return Err(Error::MethodSpec(format!(
                "{}: coefficient arrays do not match {s} stages and {m} colors",
                self.name
            )));
        }
        if self
            .stage
            .iter()
            .any(|rows| rows.len() != s || rows.iter().any(|r| r.len() != s))
            || self.update.iter().any(|r| r.len() != s)
        {
            return Err(Error::MethodSpec(format!(
                "{}: coefficient matrices must be {s}x{s}",
                self.name
            )));
        }
        for (what, series) in self.all_series() {
            if series.model != self.model() {
                return Err(Error::MethodSpec(format!(
                    "{what} is not a series over the semi-linear model"
                )));
            }
            for (t, w) in series.iter() {
                if !TreeModel::is_a_tree(t) {
                    return Err(Error::MethodSpec(format!("{what}: key {t} contains a g-node")));
                }
                if !w.is_polynomial() {
                    return Err(Error::MethodSpec(format!(
                        "{what}({t}) = {w} is not a polynomial in h and dW"
                    )));
                }
            }
        }
        let e = Tree::empty(1);
        for (what, series) in self.stage0.iter().chain(std::iter::once(&self.update0)).enumerate() {
            if series.get(&e) != WeightExpr::one() {
                let name = if what < s {
                    format!("Z{}0", what + 1)
                } else {
                    "z0".into()
                };
                return Err(Error::MethodSpec(format!(
                    "{name}(e) must be 1, found {}",
                    series.get(&e)
                )));
            }
        }
        Ok(())
    }

    fn lookup(&self, series: &BSeries, t: &Tree) -> Result<WeightExpr> {
        if !t.is_empty() && t.rho() > self.cap {
            return Err(Error::CapUnsupported {
                requested: t.rho().to_string(),
                max: self.cap.to_string(),
            });
        }
        Ok(series.get(t))
    }
}

/// The pairs `(ϑ, {δ}) ∈ SP(τ)` with `ϑ ∈ T̄_A ∪ {∅}` and `δ` rooted at a
/// `g`-node, with their `γ`.
pub fn admissible_splits(tau: &Tree) -> Vec<(Tree, Tree, Rational)> {
    split_pairs(tau)
        .into_iter()
        .filter(|p| TreeModel::is_a_tree(&p.subtree) && matches!(p.remainder[0].label(), Some(NodeLabel::G(_))))
        .map(|p| (p.subtree, p.remainder[0].clone(), p.coefficient))
        .collect()
}

/// Memoized evaluation of `Φ` (`stage = None`) and `Φ_i`.
pub struct ErkRecursion<'a> {
    method: &'a ERKMethodSpec,
    memo: HashMap<(Option<usize>, Tree), WeightExpr>,
}

impl<'a> ErkRecursion<'a> {
    pub fn new(method: &'a ERKMethodSpec) -> Result<ErkRecursion<'a>> {
        method.validate()?;
        Ok(ErkRecursion {
            method,
            memo: HashMap::new(),
        })
    }

    /// `Φ(τ)` for the update, `Φ_i(τ)` for stage `i` (0-based).
    pub fn weight(&mut self, stage: Option<usize>, tau: &Tree) -> Result<WeightExpr> {
        let key = (stage, tau.clone());
        if let Some(w) = self.memo.get(&key) {
            return Ok(w.clone());
        }
        let w = self.compute(stage, tau)?;
        self.memo.insert(key, w.clone());
        Ok(w)
    }

    fn compute(&mut self, stage: Option<usize>, tau: &Tree) -> Result<WeightExpr> {
        let method = self.method;
        if tau.is_empty() {
            return Ok(WeightExpr::one());
        }
        if tau.label() == Some(NodeLabel::T) {
            // The time coordinate of stage i sits at t_0 + c_i h, that of the update at t_0 + h.
            let c = stage.map_or_else(|| int(1), |i| method.c[i].clone());
            return Ok(WeightExpr::h().scale(&c));
        }
        if TreeModel::is_a_tree(tau) {
            let series = stage.map_or(&method.update0, |i| &method.stage0[i]);
            return method.lookup(series, tau);
        }
        let splits = admissible_splits(tau);
        let (theta, delta, gamma) = match splits.len() {
            1 => splits.into_iter().next().unwrap(),
            0 => return Err(Error::NoAdmissibleSplit(tau.to_string())),
            n => {
                return Err(Error::AmbiguousSplit {
                    tree: tau.to_string(),
                    count: n,
                })
            }
        };
        let Some(NodeLabel::G(m)) = delta.label() else {
            unreachable!()
        };
        if m > method.colors {
            return Err(Error::ModelMismatch(format!(
                "{tau} uses color {m}, method has {}",
                method.colors
            )));
        }
        let mut total = WeightExpr::zero();
        for j in 0..method.stages {
            let coeff = match stage {
                None => &method.update[m as usize][j],
                Some(i) => &method.stage[m as usize][i][j],
            };
            let z = method.lookup(coeff, &theta)?;
            if z.is_zero() {
                continue;
            }
            let mut term = z;
            for child in delta.children() {
                term = &term * &self.weight(Some(j), child)?;
            }
            total = &total + &term;
        }
        Ok(total.scale(&gamma))
    }
}

/// `Φ` and `Φ_1, …, Φ_s` on every tree up to `rho_max`.
pub fn erk_weights(method: &ERKMethodSpec, rho_max: HalfInt) -> Result<(BSeries, Vec<BSeries>)> {
    let mut rec = ErkRecursion::new(method)?;
    let model = method.model();
    let keys = BSeries::key_trees(&model, rho_max)?;
    let mut phi = BSeries::new(model.clone(), rho_max);
    let mut stages = vec![BSeries::new(model, rho_max); method.stages];
    for t in keys {
        phi.set(t.clone(), rec.weight(None, &t)?);
        for (i, s) in stages.iter_mut().enumerate() {
            s.set(t.clone(), rec.weight(Some(i), &t)?);
        }
    }
    Ok((phi, stages))
}

/// `Φ(τ)` for a single tree.
pub fn erk_tree_weight(method: &ERKMethodSpec, tau: &Tree) -> Result<WeightExpr> {
    TreeModel::semilinear(method.colors)
        .check(tau)
        .map_err(|e| Error::ModelMismatch(e.to_string()))?;
    ErkRecursion::new(method)?.weight(None, tau)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderResidual {
    pub tree: Tree,
    pub tree_order: HalfInt,
    pub exact_weight: WeightExpr,
    pub numeric_weight: WeightExpr,
    pub residual: WeightExpr,
}

/// `φ(τ) - Φ(τ)` for every tree up to `rho_max`, sorted by order. Exact weights
/// are reduced with the closed forms of the chosen calculus before subtracting.
pub fn order_residuals(method: &ERKMethodSpec, rho_max: HalfInt, interp: Interpretation) -> Result<Vec<OrderResidual>> {
    let mut rec = ErkRecursion::new(method)?;
    semilinear_trees(method.colors, rho_max)?
        .into_iter()
        .map(|t| residual(&mut rec, t, interp))
        .collect()
}

/// Residual of one tree.
pub fn tree_residual(method: &ERKMethodSpec, tau: &Tree, interp: Interpretation) -> Result<OrderResidual> {
    TreeModel::semilinear(method.colors)
        .check(tau)
        .map_err(|e| Error::ModelMismatch(e.to_string()))?;
    residual(&mut ErkRecursion::new(method)?, tau.clone(), interp)
}

fn residual(rec: &mut ErkRecursion, t: Tree, interp: Interpretation) -> Result<OrderResidual> {
    let exact = exact_tree_weight(&t).simplify(interp);
    let numeric = rec.weight(None, &t)?;
    let residual = (&exact - &numeric).simplify(interp);
    Ok(OrderResidual {
        tree_order: t.rho(),
        tree: t,
        exact_weight: exact,
        numeric_weight: numeric,
        residual,
    })
}

/// The exponential midpoint rule
/// `H_1 = e^{∫_{t}^{t+h/2} A} Y + (h/2) g_0(H_1) + (ΔW/2) g_1(H_1)`,
/// `Y' = e^{∫_t^{t+h} A} Y + e^{∫_{t+h/2}^{t+h} A} (h g_0(H_1) + ΔW g_1(H_1))`,
/// with coefficient series through order 3.
pub fn builtin_exponential_midpoint(cap: HalfInt) -> Result<ERKMethodSpec> {
    let max = HalfInt::from_twice(7);
    if cap > max {
        return Err(Error::CapUnsupported {
            requested: cap.to_string(),
            max: max.to_string(),
        });
    }
    // (tree, Z_10, z_0, z_1 without the factor h or dW), weights per unit `α`.
    type Row = (&'static str, (i64, i64), (i64, i64), (i64, i64), u32);
    let table: [Row; 8] = [
        ("e", (1, 1), (1, 1), (1, 1), 0),
        ("A", (1, 2), (1, 1), (1, 2), 1),
        ("[t]A", (1, 8), (1, 2), (3, 8), 2),
        ("[A]A", (1, 8), (1, 2), (1, 8), 2),
        ("[t,t]A", (1, 24), (1, 3), (7, 24), 3),
        ("[A,t]A", (1, 32), (1, 4), (3, 32), 3),
        ("[[t]A]A", (1, 32), (1, 4), (3, 32), 3),
        ("[[A]A]A", (1, 48), (1, 6), (1, 48), 3),
    ];
    let mut m = ERKMethodSpec::zeros("exponential-midpoint", 1, 1, vec![rational(1, 2)], cap);
    for (s, z10, z0, z1, p) in table {
        let t: Tree = s.parse().expect("builtin tree");
        let hp = WeightExpr::h_pow(p);
        m.stage0[0].set(t.clone(), hp.scale(&rational(z10.0, z10.1)));
        m.update0.set(t.clone(), hp.scale(&rational(z0.0, z0.1)));
        let z1 = hp.scale(&rational(z1.0, z1.1));
        m.update[0][0].set(t.clone(), &z1 * &WeightExpr::h());
        m.update[1][0].set(t, &z1 * &WeightExpr::dw(1));
    }
    let e = Tree::empty(1);
    m.stage[0][0][0].set(e.clone(), WeightExpr::h().scale(&rational(1, 2)));
    m.stage[1][0][0].set(e, WeightExpr::dw(1).scale(&rational(1, 2)));
    Ok(m)
}

/// Resolves `builtin:midpoint` (or `midpoint`) or reads a JSON method file.
pub fn load_method(spec: &str, cap: Option<HalfInt>) -> Result<ERKMethodSpec> {
    let cap_or_max = cap.unwrap_or(HalfInt::from_twice(7));
    match spec {
        "builtin:midpoint" | "midpoint" => builtin_exponential_midpoint(cap_or_max),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{path}: {e}")))?;
            ERKMethodSpec::from_json(&text)
        }
    }
}

fn series_to_json(s: &BSeries) -> Value {
    let mut map = Map::new();
    for (t, w) in s.iter() {
        map.insert(t.to_string(), Value::String(w.to_string()));
    }
    Value::Object(map)
}

fn series_from_json(v: &Value, model: &TreeModel, cap: HalfInt, what: &str) -> Result<BSeries> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::MethodSpec(format!("{what} must map tree strings to expressions")))?;
    let mut s = BSeries::new(model.clone(), cap);
    for (k, e) in obj {
        let t: Tree = k
            .parse()
            .map_err(|e| Error::MethodSpec(format!("{what}: bad tree '{k}': {e}")))?;
        if !t.is_empty() {
            model.check(&t).map_err(|e| Error::MethodSpec(format!("{what}: {e}")))?;
        }
        if !t.is_empty() && t.rho() > cap {
            return Err(Error::MethodSpec(format!(
                "{what}: tree {t} exceeds the method cap {cap}"
            )));
        }
        let text = e
            .as_str()
            .ok_or_else(|| Error::MethodSpec(format!("{what}({k}) must be an expression string")))?;
        let w = WeightExpr::parse(text).map_err(|e| Error::MethodSpec(format!("{what}({k}): {e}")))?;
        s.set(t, w);
    }
    Ok(s)
}

fn index_map<'v>(v: Option<&'v Value>, what: &str) -> Result<BTreeMap<u32, &'v Value>> {
    let Some(v) = v else { return Ok(BTreeMap::new()) };
    let obj = v
        .as_object()
        .ok_or_else(|| Error::MethodSpec(format!("'{what}' must be an object keyed by index")))?;
    obj.iter()
        .map(|(k, x)| {
            k.parse::<u32>()
                .map(|i| (i, x))
                .map_err(|_| Error::MethodSpec(format!("'{what}': key '{k}' is not an index")))
        })
        .collect()
}

fn rational_from_json(v: &Value) -> Result<Rational> {
    match v {
        Value::String(s) => parse_rational(s).map_err(|e| Error::MethodSpec(format!("abscissa '{s}': {e}"))),
        Value::Number(n) => parse_rational(&n.to_string()).map_err(|e| Error::MethodSpec(e.to_string())),
        other => Err(Error::MethodSpec(format!(
            "abscissa {other} must be a number or a fraction string"
        ))),
    }
}

impl ERKMethodSpec {
    /// Schema: `{"stages", "c", "Z0": {i: series}, "Z": {m: [[series]]},
    /// "z0": series, "z": {m: [series]}, "cap"}` with stages counted from 1,
    /// series as `{tree: expression}` and `e` for the empty tree.
    pub fn from_json(text: &str) -> Result<ERKMethodSpec> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::MethodSpec(format!("invalid JSON: {e}")))?;
        let s = v
            .get("stages")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::MethodSpec("'stages' must be a positive integer".into()))? as usize;
        let cap = match v.get("cap") {
            Some(Value::String(c)) => c
                .parse::<HalfInt>()
                .map_err(|e| Error::MethodSpec(format!("cap: {e}")))?,
            Some(Value::Number(n)) => n
                .to_string()
                .parse::<HalfInt>()
                .map_err(|e| Error::MethodSpec(format!("cap: {e}")))?,
            _ => return Err(Error::MethodSpec("'cap' is required, e.g. \"7/2\"".into())),
        };
        let c = v
            .get("c")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::MethodSpec("'c' must be an array of abscissae".into()))?
            .iter()
            .map(rational_from_json)
            .collect::<Result<Vec<_>>>()?;
        let big_z = index_map(v.get("Z"), "Z")?;
        let small_z = index_map(v.get("z"), "z")?;
        let colors = big_z.keys().chain(small_z.keys()).copied().max().unwrap_or(0);
        let name = v.get("name").and_then(Value::as_str).unwrap_or("method");
        let mut m = ERKMethodSpec::zeros(name, s, colors, c, cap);
        let model = m.model();
        for (i, series) in index_map(v.get("Z0"), "Z0")? {
            if i == 0 || i as usize > s {
                return Err(Error::MethodSpec(format!("Z0: stage {i} out of range 1..={s}")));
            }
            m.stage0[i as usize - 1] = series_from_json(series, &model, cap, &format!("Z{i}0"))?;
        }
        for (color, rows) in big_z {
            let rows = rows
                .as_array()
                .filter(|r| r.len() == s)
                .ok_or_else(|| Error::MethodSpec(format!("Z.{color} must be an {s}x{s} matrix")))?;
            for (i, row) in rows.iter().enumerate() {
                let row = row
                    .as_array()
                    .filter(|r| r.len() == s)
                    .ok_or_else(|| Error::MethodSpec(format!("Z.{color} must be an {s}x{s} matrix")))?;
                for (j, series) in row.iter().enumerate() {
                    let what = format!("Z{}{}^({color})", i + 1, j + 1);
                    m.stage[color as usize][i][j] = series_from_json(series, &model, cap, &what)?;
                }
            }
        }
        if let Some(z0) = v.get("z0") {
            m.update0 = series_from_json(z0, &model, cap, "z0")?;
        }
        for (color, row) in small_z {
            let row = row
                .as_array()
                .filter(|r| r.len() == s)
                .ok_or_else(|| Error::MethodSpec(format!("z.{color} must list {s} series")))?;
            for (i, series) in row.iter().enumerate() {
                let what = format!("z{}^({color})", i + 1);
                m.update[color as usize][i] = series_from_json(series, &model, cap, &what)?;
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let stage0: Map<String, Value> = self
            .stage0
            .iter()
            .enumerate()
            .map(|(i, s)| ((i + 1).to_string(), series_to_json(s)))
            .collect();
        let big_z: Map<String, Value> = self
            .stage
            .iter()
            .enumerate()
            .map(|(m, rows)| {
                let rows: Vec<Value> = rows
                    .iter()
                    .map(|r| Value::Array(r.iter().map(series_to_json).collect()))
                    .collect();
                (m.to_string(), Value::Array(rows))
            })
            .collect();
        let small_z: Map<String, Value> = self
            .update
            .iter()
            .enumerate()
            .map(|(m, r)| (m.to_string(), Value::Array(r.iter().map(series_to_json).collect())))
            .collect();
        let v = json!({
            "name": self.name,
            "stages": self.stages,
            "c": self.c.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
            "Z0": stage0,
            "Z": big_z,
            "z0": series_to_json(&self.update0),
            "z": small_z,
            "cap": self.cap.to_string(),
        });
        serde_json::to_string_pretty(&v).expect("serializable")
    }
}
