//! Shaped, colored rooted trees.
//!
//! A [`Tree`] is always canonical: the children of every node are stored in
//! descending order of the total order on trees, which compares
//! `(2ρ, root label, children)` lexicographically. Two trees are equal exactly
//! when their bracket serializations are byte-equal.
//!
//! Three tree models are supported (see [`TreeModel`]): the general
//! partitioned model with shapes `(q, v)` and colors `m`, the non-autonomous
//! model in which the time and Wiener coordinates appear as leaf-only `W`
//! nodes, and the semi-linear model with `g`-nodes, linear-part `A`-nodes and
//! `t`-nodes.

mod enumerate;
mod model;
mod parse;

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::One;

use crate::numbers::{factorial, HalfInt, Rational};

pub use enumerate::{enumerate_trees, enumerate_trees_with_limit, DEFAULT_TREE_LIMIT};
pub use model::TreeModel;
pub use parse::{canonicalize, RawTree};

/// Label of a single vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeLabel {
    /// `•_{q,v,m}`: partition `q`, variant `v`, color `m`.
    General { q: u32, v: u32, m: u32 },
    /// `•_{W_i}` for `i ≥ 1`; `W_0` is always stored as [`NodeLabel::T`].
    W(u32),
    /// The time node `•_t`.
    T,
    /// The linear-part node `•_A` of the semi-linear model.
    A,
    /// `•_m`: nonlinearity `g_m` of the semi-linear model.
    G(u32),
    /// Root marker `•_f` of trees in the expansion of `f(B(φ))`.
    F,
}

impl NodeLabel {
    /// Color `m` of the driving process (0 = deterministic).
    pub fn color(self) -> u32 {
        match self {
            NodeLabel::General { m, .. } | NodeLabel::G(m) => m,
            NodeLabel::W(i) => i,
            NodeLabel::T | NodeLabel::A | NodeLabel::F => 0,
        }
    }

    /// Contribution to `2ρ`: 2 for deterministic nodes, 1 for stochastic ones.
    /// The `f` root carries no order of its own.
    pub fn twice_order(self) -> u32 {
        match self {
            NodeLabel::F => 0,
            l if l.color() == 0 => 2,
            _ => 1,
        }
    }

    /// `t` and `W_i` nodes have vanishing derivatives and only occur as leaves.
    pub fn is_leaf_only(self) -> bool {
        matches!(self, NodeLabel::T | NodeLabel::W(_))
    }

    /// Partition index used for empty trees and elementary differentials;
    /// 1 for every label outside the general partitioned model.
    pub fn partition(self) -> u32 {
        match self {
            NodeLabel::General { q, .. } => q,
            _ => 1,
        }
    }
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeLabel::General { q, v, m } => write!(f, "g({q},{v},{m})"),
            NodeLabel::W(i) => write!(f, "W{i}"),
            NodeLabel::T => f.write_str("t"),
            NodeLabel::A => f.write_str("A"),
            NodeLabel::G(m) => write!(f, "{m}"),
            NodeLabel::F => f.write_str("f"),
        }
    }
}

/// Root of a tree: either the empty tree `∅_q` or a labelled vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Root {
    Empty(u32),
    Node(NodeLabel),
}

#[derive(Debug)]
struct Inner {
    twice_rho: u32,
    root: Root,
    children: Vec<Tree>,
}

/// Canonical rooted tree; cheap to clone.
#[derive(Clone)]
pub struct Tree(Arc<Inner>);

impl Tree {
    /// The empty tree `∅_q`.
    pub fn empty(partition: u32) -> Tree {
        Tree(Arc::new(Inner {
            twice_rho: 2,
            root: Root::Empty(partition),
            children: Vec::new(),
        }))
    }

    pub fn leaf(label: NodeLabel) -> Tree {
        Tree::node(label, Vec::new())
    }

    /// `[children]_label`, sorted into canonical order.
    pub fn node(label: NodeLabel, mut children: Vec<Tree>) -> Tree {
        children.sort_by(|a, b| b.cmp(a));
        Tree::from_sorted(label, children)
    }

    /// Builds a node whose children are already in descending canonical order.
    pub(crate) fn from_sorted(label: NodeLabel, children: Vec<Tree>) -> Tree {
        debug_assert!(children.windows(2).all(|w| w[0] >= w[1]));
        let label = match label {
            NodeLabel::W(0) => NodeLabel::T,
            l => l,
        };
        let twice_rho = label.twice_order() + children.iter().map(|c| c.0.twice_rho).sum::<u32>();
        Tree(Arc::new(Inner {
            twice_rho,
            root: Root::Node(label),
            children,
        }))
    }

    pub fn root(&self) -> Root {
        self.0.root
    }

    /// Root label, `None` for the empty tree.
    pub fn label(&self) -> Option<NodeLabel> {
        match self.0.root {
            Root::Node(l) => Some(l),
            Root::Empty(_) => None,
        }
    }

    pub fn children(&self) -> &[Tree] {
        &self.0.children
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.0.root, Root::Empty(_))
    }

    pub fn is_leaf(&self) -> bool {
        !self.is_empty() && self.0.children.is_empty()
    }

    /// Tree order ρ. Nodes of color 0 count 1, stochastic nodes ½, and
    /// `ρ(∅_q) = 1`.
    pub fn rho(&self) -> HalfInt {
        HalfInt::from_twice(self.0.twice_rho)
    }

    /// Partition of the root (the `q` of `∅_q` for empty trees).
    pub fn partition(&self) -> u32 {
        match self.0.root {
            Root::Empty(q) => q,
            Root::Node(l) => l.partition(),
        }
    }

    /// Symmetry coefficient `α(τ) = ∏ α(τ_j) / ∏ r_i!` where the `r_i` count
    /// equal children.
    pub fn alpha(&self) -> Rational {
        let children = self.children();
        let mut denom = BigInt::one();
        let mut acc = Rational::one();
        let mut i = 0;
        while i < children.len() {
            let mut j = i + 1;
            while j < children.len() && children[j] == children[i] {
                j += 1;
            }
            denom *= factorial(j - i);
            let a = children[i].alpha();
            for _ in i..j {
                acc *= &a;
            }
            i = j;
        }
        acc / Rational::from_integer(denom)
    }

    pub fn node_count(&self) -> usize {
        if self.is_empty() {
            return 0;
        }
        1 + self.children().iter().map(Tree::node_count).sum::<usize>()
    }

    pub fn leaf_count(&self) -> usize {
        if self.is_empty() {
            0
        } else if self.is_leaf() {
            1
        } else {
            self.children().iter().map(Tree::leaf_count).sum()
        }
    }

    /// Whether some vertex satisfies `pred`.
    pub fn any_label(&self, pred: &impl Fn(NodeLabel) -> bool) -> bool {
        self.label().is_some_and(pred) || self.children().iter().any(|c| c.any_label(pred))
    }

    /// Children grouped into `(distinct child, multiplicity)` runs.
    pub fn child_multiplicities(&self) -> Vec<(&Tree, usize)> {
        let mut out: Vec<(&Tree, usize)> = Vec::new();
        for c in self.children() {
            match out.last_mut() {
                Some((t, n)) if *t == c => *n += 1,
                _ => out.push((c, 1)),
            }
        }
        out
    }
}

impl PartialEq for Tree {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.twice_rho == other.0.twice_rho
                && self.0.root == other.0.root
                && self.0.children == other.0.children)
    }
}

impl Eq for Tree {}

impl Hash for Tree {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.twice_rho.hash(state);
        self.0.root.hash(state);
        self.0.children.hash(state);
    }
}

impl Ord for Tree {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        self.0
            .twice_rho
            .cmp(&other.0.twice_rho)
            .then_with(|| self.0.root.cmp(&other.0.root))
            .then_with(|| self.0.children.cmp(&other.0.children))
    }
}

impl PartialOrd for Tree {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0.root {
            Root::Empty(1) => f.write_str("e"),
            Root::Empty(q) => write!(f, "e({q})"),
            Root::Node(label) => {
                if !self.0.children.is_empty() {
                    f.write_str("[")?;
                    for (i, c) in self.0.children.iter().enumerate() {
                        if i > 0 {
                            f.write_str(",")?;
                        }
                        write!(f, "{c}")?;
                    }
                    f.write_str("]")?;
                }
                write!(f, "{label}")
            }
        }
    }
}

impl fmt::Debug for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tree({self})")
    }
}

/// Formats a multiset of trees as `{a, b, ...}`.
pub fn format_forest(trees: &[Tree]) -> String {
    let inner: Vec<String> = trees.iter().map(Tree::to_string).collect();
    format!("{{{}}}", inner.join(", "))
}
