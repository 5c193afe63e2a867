use super::{NodeLabel, Tree, TreeModel};
use crate::error::{Error, Result};
use crate::numbers::HalfInt;

pub const DEFAULT_TREE_LIMIT: usize = 1_000_000;

/// All trees of `model` (the empty tree excluded) with `ρ ≤ rho_max`, sorted by
/// `(ρ, canonical order)`.
pub fn enumerate_trees(model: &TreeModel, rho_max: HalfInt) -> Result<Vec<Tree>> {
    enumerate_trees_with_limit(model, rho_max, DEFAULT_TREE_LIMIT)
}

pub fn enumerate_trees_with_limit(model: &TreeModel, rho_max: HalfInt, limit: usize) -> Result<Vec<Tree>> {
    if rho_max.twice() == 0 {
        return Err(Error::InvalidArgument("rho_max must be at least 1/2".into()));
    }
    let max = rho_max.twice();
    let roots = model.node_labels();
    let leaf_only: Vec<Tree> = model.leaf_only_labels().into_iter().map(Tree::leaf).collect();

    // Children available for a node: every tree generated so far plus the
    // leaf-only nodes, kept sorted ascending. Sorting is weight-first, so the
    // candidates of weight <= r always form a prefix.
    let mut candidates: Vec<Tree> = Vec::new();
    let mut out: Vec<Tree> = Vec::new();

    for w in 1..=max {
        let mut level: Vec<Tree> = Vec::new();
        for &label in &roots {
            let own = label.twice_order();
            if own > w {
                continue;
            }
            let rest = w - own;
            if rest == 0 {
                level.push(Tree::leaf(label));
                continue;
            }
            let mut chosen = Vec::new();
            let bound = candidates.partition_point(|t| t.rho().twice() <= rest);
            if bound == 0 {
                continue;
            }
            multisets(
                &candidates,
                bound - 1,
                rest,
                label == NodeLabel::A,
                0,
                &mut chosen,
                &mut |children| {
                    level.push(Tree::from_sorted(label, children.to_vec()));
                },
            );
            if out.len() + level.len() > limit {
                return Err(Error::CapExceeded { limit });
            }
        }
        level.sort();
        out.extend(level.iter().cloned());
        candidates.extend(level);
        candidates.extend(leaf_only.iter().filter(|t| t.rho().twice() == w).cloned());
        candidates.sort();
    }
    Ok(out)
}

/// Visits every multiset of `candidates[..=hi]` with total weight `rest`,
/// emitting children in descending canonical order. Under `a_node` at most one
/// child may be something other than a `t` leaf.
fn multisets(
    candidates: &[Tree],
    hi: usize,
    rest: u32,
    a_node: bool,
    non_t: usize,
    chosen: &mut Vec<Tree>,
    emit: &mut dyn FnMut(&[Tree]),
) {
    if rest == 0 {
        emit(chosen);
        return;
    }
    let fits = candidates.partition_point(|t| t.rho().twice() <= rest);
    if fits == 0 {
        return;
    }
    for idx in (0..=hi.min(fits - 1)).rev() {
        let c = &candidates[idx];
        let w = c.rho().twice();
        let is_t = c.label() == Some(NodeLabel::T);
        if a_node && !is_t && non_t >= 1 {
            continue;
        }
        chosen.push(c.clone());
        multisets(
            candidates,
            idx,
            rest - w,
            a_node,
            non_t + usize::from(!is_t),
            chosen,
            emit,
        );
        chosen.pop();
    }
}
