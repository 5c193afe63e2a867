use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::forest_ops::{split_pairs, subtree_pairs};
use crate::numbers::{HalfInt, Rational};
use crate::trees::{enumerate_trees, NodeLabel, Tree, TreeModel};
use crate::weight::WeightExpr;

/// Truncated B-series: weights per tree, missing trees have weight 0.
///
/// The map also holds the empty trees `∅_q` and, for models with leaf-only
/// nodes, the standalone leaves `•_t` / `•_{W_i}` (the series of the auxiliary
/// time and Wiener coordinates). The cap applies to the other keys.
#[derive(Clone, Debug, PartialEq)]
pub struct BSeries {
    pub model: TreeModel,
    pub order_cap: HalfInt,
    weights: BTreeMap<Tree, WeightExpr>,
}

impl BSeries {
    pub fn new(model: TreeModel, order_cap: HalfInt) -> BSeries {
        BSeries {
            model,
            order_cap,
            weights: BTreeMap::new(),
        }
    }

    /// Weights 1 at every `∅_q` and 0 elsewhere.
    pub fn identity(model: TreeModel, order_cap: HalfInt) -> BSeries {
        let mut s = BSeries::new(model, order_cap);
        for q in s.model.empty_partitions() {
            s.weights.insert(Tree::empty(q), WeightExpr::one());
        }
        s
    }

    fn is_auxiliary(t: &Tree) -> bool {
        t.is_empty() || t.label().is_some_and(NodeLabel::is_leaf_only)
    }

    pub fn get(&self, t: &Tree) -> WeightExpr {
        self.weights.get(t).cloned().unwrap_or_default()
    }

    pub fn weight(&self, t: &Tree) -> Option<&WeightExpr> {
        self.weights.get(t)
    }

    /// Stores a weight; trees above the cap are dropped, zero weights removed.
    pub fn set(&mut self, t: Tree, w: WeightExpr) {
        if !BSeries::is_auxiliary(&t) && t.rho() > self.order_cap {
            return;
        }
        if w.is_zero() {
            self.weights.remove(&t);
        } else {
            self.weights.insert(t, w);
        }
    }

    pub fn empty_weight(&self, q: u32) -> WeightExpr {
        self.get(&Tree::empty(q))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Tree, &WeightExpr)> {
        self.weights.iter()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Every tree with `ρ ≤ cap` together with the auxiliary keys.
    pub fn key_trees(model: &TreeModel, cap: HalfInt) -> Result<Vec<Tree>> {
        let mut out: Vec<Tree> = model.empty_partitions().into_iter().map(Tree::empty).collect();
        out.extend(model.leaf_only_labels().into_iter().map(Tree::leaf));
        if cap.twice() > 0 {
            out.extend(enumerate_trees(model, cap)?);
        }
        Ok(out)
    }

    fn check_empty(&self, expect_one: bool) -> Result<()> {
        for q in self.model.empty_partitions() {
            let w = self.empty_weight(q);
            if expect_one && w != WeightExpr::one() {
                return Err(Error::EmptyWeightNotOne { found: w.to_string() });
            }
            if !expect_one && !w.is_zero() {
                return Err(Error::EmptyWeightNotZero { found: w.to_string() });
            }
        }
        Ok(())
    }

    /// Applies `f` to every weight.
    pub fn map(&self, f: impl Fn(&WeightExpr) -> WeightExpr) -> BSeries {
        let mut out = BSeries::new(self.model.clone(), self.order_cap);
        for (t, w) in &self.weights {
            out.set(t.clone(), f(w));
        }
        out
    }
}

fn check_models(a: &BSeries, b: &BSeries) -> Result<()> {
    if a.model != b.model {
        return Err(Error::ModelMismatch(format!(
            "series over the {} and {} models",
            a.model.name(),
            b.model.name()
        )));
    }
    Ok(())
}

/// Exact weights `φ` of the solution: `φ(∅) = 1`, `φ(•_m) = W_m(h)` and
/// `φ([τ_1, …, τ_κ]_m) = ∫_0^h Π φ(τ_j)(s) ⋆dW_m(s)`.
pub fn exact_solution_series(model: &TreeModel, order_cap: HalfInt) -> Result<BSeries> {
    let mut s = BSeries::new(model.clone(), order_cap);
    for t in BSeries::key_trees(model, order_cap)? {
        let w = exact_weight(&t, &s);
        s.set(t, w);
    }
    Ok(s)
}

/// `φ(τ)` given the weights of the children (already stored in `known`).
fn exact_weight(t: &Tree, known: &BSeries) -> WeightExpr {
    let Some(label) = t.label() else {
        return WeightExpr::one();
    };
    let color = match label {
        NodeLabel::W(i) => i,
        other => other.color(),
    };
    if t.is_leaf() {
        return WeightExpr::dw(color);
    }
    let factors: Vec<WeightExpr> = t
        .children()
        .iter()
        .map(|c| known.weight(c).cloned().unwrap_or_else(|| exact_weight(c, known)))
        .collect();
    WeightExpr::integrate_product(color, &factors)
}

/// Exact weight of a single tree, without building the series.
pub fn exact_tree_weight(t: &Tree) -> WeightExpr {
    exact_weight(t, &BSeries::new(TreeModel::classical(), HalfInt::ZERO))
}

/// `φ_x ∗ φ_y`: the series of `B(φ_y, ·)` evaluated at `B(φ_x, x_0)`.
pub fn compose(phi_x: &BSeries, phi_y: &BSeries) -> Result<BSeries> {
    check_models(phi_x, phi_y)?;
    phi_x.check_empty(true)?;
    let cap = phi_x.order_cap.min(phi_y.order_cap);
    let mut out = BSeries::new(phi_x.model.clone(), cap);
    for t in BSeries::key_trees(&phi_x.model, cap)? {
        if t.is_empty() {
            out.set(t.clone(), phi_y.get(&t));
            continue;
        }
        let mut sum = WeightExpr::zero();
        for pair in subtree_pairs(&t) {
            let y = phi_y.get(&pair.subtree);
            if y.is_zero() {
                continue;
            }
            let mut term = y.scale(&pair.coefficient);
            for d in &pair.remainder {
                term = &term * &phi_x.get(d);
                if term.is_zero() {
                    break;
                }
            }
            sum = &sum + &term;
        }
        out.set(t, sum);
    }
    Ok(out)
}

/// `φ_x ⋄ φ_y`: the series of `∂_2 B(φ_y, x_0) · B(φ_x, x_0)`.
pub fn derivative_product(phi_x: &BSeries, phi_y: &BSeries) -> Result<BSeries> {
    check_models(phi_x, phi_y)?;
    phi_x.check_empty(false)?;
    let cap = phi_x.order_cap.min(phi_y.order_cap);
    let mut out = BSeries::new(phi_x.model.clone(), cap);
    for t in BSeries::key_trees(&phi_x.model, cap)? {
        if t.is_empty() {
            continue;
        }
        let mut sum = WeightExpr::zero();
        for pair in split_pairs(&t) {
            let term = &phi_y.get(&pair.subtree) * &phi_x.get(&pair.remainder[0]);
            sum = &sum + &term.scale(&pair.coefficient);
        }
        out.set(t, sum);
    }
    Ok(out)
}

/// One term `β(u) ψ_φ(u) G(u)` of the expansion of `f(B(φ, x_0))`.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionTerm {
    /// `[τ_1, …, τ_κ]_f`.
    pub tree: Tree,
    pub beta: Rational,
    pub psi: WeightExpr,
}

/// Terms of `f(B(φ, x_0; h))` over the trees `[τ_1, …, τ_κ]_f` with
/// `Σ ρ(τ_j) ≤ order_cap`.
pub fn function_series(phi: &BSeries, order_cap: HalfInt) -> Result<Vec<FunctionTerm>> {
    phi.check_empty(true)?;
    let model = &phi.model;
    let mut candidates: Vec<Tree> = model.leaf_only_labels().into_iter().map(Tree::leaf).collect();
    if order_cap.twice() > 0 {
        candidates.extend(enumerate_trees(model, order_cap)?);
    }
    candidates.sort();
    let mut out = Vec::new();
    let mut chosen = Vec::new();
    collect_forests(
        &candidates,
        candidates.len(),
        order_cap.twice(),
        &mut chosen,
        &mut |children| {
            let tree = Tree::node(NodeLabel::F, children.to_vec());
            let psi = children.iter().fold(WeightExpr::one(), |acc, c| &acc * &phi.get(c));
            out.push(FunctionTerm {
                beta: tree.alpha(),
                tree,
                psi,
            });
        },
    );
    out.sort_by(|a, b| a.tree.cmp(&b.tree));
    Ok(out)
}

fn collect_forests(
    candidates: &[Tree],
    end: usize,
    budget: u32,
    chosen: &mut Vec<Tree>,
    emit: &mut dyn FnMut(&[Tree]),
) {
    emit(chosen);
    for idx in (0..end).rev() {
        let w = candidates[idx].rho().twice();
        if w > budget {
            continue;
        }
        chosen.push(candidates[idx].clone());
        collect_forests(candidates, idx + 1, budget - w, chosen, emit);
        chosen.pop();
    }
}
