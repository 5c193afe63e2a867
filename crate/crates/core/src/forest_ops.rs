//! Subtree/remainder decompositions `ST(τ)` and `SP(τ)` and the multiplicity
//! coefficient `γ(τ, ϑ, ω)` of the composition law.
//!
//! A decomposition keeps a root-containing subtree `ϑ` of `τ` and cuts every
//! edge leaving it; the cut-off subtrees form the remainder multiset `ω`.
//! `γ(τ, ϑ, ω)` is the number of vertex subsets of a labelled copy of `τ`
//! realising the pair, which is what the multinomial recursion of the
//! composition law evaluates to. Pairs that arise from different
//! attachment patterns but coincide as `(ϑ, ω)` are merged with their counts
//! summed.
//!
//! Empty placeholders: when nothing is cut (`ϑ = τ`) the remainder is one
//! `∅_q` per leaf of `τ`, as produced by the recursive definition starting from
//! `ST(•) = {(∅, {•}), (•, {∅})}`. When at least one subtree is cut the
//! placeholders are dropped and `ω` lists only the nonempty remainders.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::sync::Mutex;

use num_bigint::BigInt;

use crate::error::{Error, Result};
use crate::numbers::Rational;
use crate::trees::{format_forest, NodeLabel, Tree};

/// One element `(ϑ, ω)` of `ST(τ)` with its coefficient `γ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubtreePair {
    /// `ϑ`; the empty tree `∅_q` when the whole of `τ` is cut off.
    pub subtree: Tree,
    /// `ω`, sorted descending.
    pub remainder: Vec<Tree>,
    /// `γ(τ, ϑ, ω) > 0`.
    pub coefficient: Rational,
}

impl SubtreePair {
    /// The remaining trees other than empty placeholders.
    pub fn nonempty_remainder(&self) -> impl Iterator<Item = &Tree> {
        self.remainder.iter().filter(|t| !t.is_empty())
    }

    pub fn format(&self) -> String {
        format!("({}, {})", self.subtree, format_forest(&self.remainder))
    }
}

type Key = (Option<Tree>, Vec<Tree>);

/// Raw decomposition counts: `ϑ = None` stands for the empty subtree and the
/// vector holds the cut-off subtrees only.
fn counts(tau: &Tree, memo: &mut HashMap<Tree, BTreeMap<Key, u64>>) -> BTreeMap<Key, u64> {
    if let Some(hit) = memo.get(tau) {
        return hit.clone();
    }
    let label = tau.label().expect("decompositions of the empty tree are not defined");
    let mut out: BTreeMap<Key, u64> = BTreeMap::new();
    out.insert((None, vec![tau.clone()]), 1);

    // Product over children of their decompositions, merging equal states.
    let mut states: BTreeMap<(Vec<Tree>, Vec<Tree>), u64> = BTreeMap::new();
    states.insert((Vec::new(), Vec::new()), 1);
    for child in tau.children() {
        let child_pairs = counts(child, memo);
        let mut next: BTreeMap<(Vec<Tree>, Vec<Tree>), u64> = BTreeMap::new();
        for ((kept, cut), n) in &states {
            for ((sub, rem), m) in &child_pairs {
                let mut kept = kept.clone();
                if let Some(s) = sub {
                    kept.push(s.clone());
                    kept.sort_by(|a, b| b.cmp(a));
                }
                let mut cut = cut.clone();
                cut.extend(rem.iter().cloned());
                cut.sort_by(|a, b| b.cmp(a));
                *next.entry((kept, cut)).or_insert(0) += n * m;
            }
        }
        states = next;
    }
    for ((kept, cut), n) in states {
        let theta = Tree::from_sorted(label, kept);
        *out.entry((Some(theta), cut)).or_insert(0) += n;
    }
    memo.insert(tau.clone(), out.clone());
    out
}

fn empty_placeholders(tau: &Tree) -> Vec<Tree> {
    fn walk(t: &Tree, out: &mut Vec<Tree>) {
        if t.is_leaf() {
            out.push(Tree::empty(t.partition()));
        }
        for c in t.children() {
            walk(c, out);
        }
    }
    let mut out = Vec::new();
    walk(tau, &mut out);
    out.sort_by(|a, b| b.cmp(a));
    out
}

static MEMO: Mutex<Option<HashMap<Tree, BTreeMap<Key, u64>>>> = Mutex::new(None);

fn cached_counts(tau: &Tree) -> BTreeMap<Key, u64> {
    let mut guard = MEMO.lock().unwrap_or_else(|e| e.into_inner());
    let memo = guard.get_or_insert_with(HashMap::new);
    if memo.len() > 200_000 {
        memo.clear();
    }
    counts(tau, memo)
}

/// `ST(τ)` for a nonempty tree, sorted by `(ϑ, ω)`.
pub fn subtree_pairs(tau: &Tree) -> Vec<SubtreePair> {
    assert!(!tau.is_empty(), "ST is defined for nonempty trees only");
    cached_counts(tau)
        .into_iter()
        .map(|((sub, cut), n)| {
            let (subtree, remainder) = match sub {
                None => (Tree::empty(tau.partition()), cut),
                Some(s) if cut.is_empty() => (s, empty_placeholders(tau)),
                Some(s) => (s, cut),
            };
            SubtreePair {
                subtree,
                remainder,
                coefficient: Rational::from_integer(BigInt::from(n)),
            }
        })
        .collect()
}

/// `SP(τ)`: the pairs of `ST(τ)` whose remainder has exactly one element.
pub fn split_pairs(tau: &Tree) -> Vec<SubtreePair> {
    subtree_pairs(tau)
        .into_iter()
        .filter(|p| p.remainder.len() == 1)
        .collect()
}

/// `γ(τ, ϑ, ω)`; `γ(∅_q, ∅_q, {∅_q}) = 1`.
pub fn gamma(tau: &Tree, subtree: &Tree, remainder: &[Tree]) -> Result<Rational> {
    let mut rem = remainder.to_vec();
    rem.sort_by(|a, b| b.cmp(a));
    if tau.is_empty() {
        if subtree == tau && rem.len() == 1 && rem[0] == *tau {
            return Ok(Rational::from_integer(BigInt::from(1)));
        }
    } else if let Some(p) = subtree_pairs(tau)
        .into_iter()
        .find(|p| p.subtree == *subtree && p.remainder == rem)
    {
        return Ok(p.coefficient);
    }
    Err(Error::PairNotInSt {
        tree: tau.to_string(),
        subtree: subtree.to_string(),
        remainder: format_forest(&rem),
    })
}

/// Reassembles `τ` from a pair by hanging the remainder trees back onto the
/// subtree, trying every attachment. Used to check decompositions.
pub fn reconstructs(tau: &Tree, pair: &SubtreePair) -> bool {
    let cut: Vec<Tree> = pair.nonempty_remainder().cloned().collect();
    if pair.subtree.is_empty() {
        return cut.len() == 1 && cut[0] == *tau;
    }
    if cut.is_empty() {
        return pair.subtree == *tau;
    }
    graft_all(&pair.subtree, &cut).contains(tau)
}

/// Every tree obtained by attaching each of `forest` below some vertex of `base`.
pub fn graft_all(base: &Tree, forest: &[Tree]) -> Vec<Tree> {
    let mut results = vec![base.clone()];
    for t in forest {
        let mut next = Vec::new();
        for r in &results {
            next.extend(graft_one(r, t));
        }
        next.sort();
        next.dedup();
        results = next;
    }
    results
}

fn graft_one(base: &Tree, extra: &Tree) -> Vec<Tree> {
    let label: NodeLabel = match base.label() {
        Some(l) => l,
        None => return Vec::new(),
    };
    let mut out = Vec::new();
    let mut here = base.children().to_vec();
    here.push(extra.clone());
    out.push(Tree::node(label, here));
    for (i, c) in base.children().iter().enumerate() {
        for replaced in graft_one(c, extra) {
            let mut children = base.children().to_vec();
            children[i] = replaced;
            out.push(Tree::node(label, children));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numbers::int;

    fn t(s: &str) -> Tree {
        s.parse().unwrap()
    }

    fn langevin_tree() -> Tree {
        t("[[[g(2,1,0),g(2,1,0)]g(1,2,0),g(1,1,0)]g(1,1,1),g(2,1,0)]g(1,2,0)")
    }

    #[test]
    fn leaf_decompositions() {
        let leaf = t("g(1,2,1)");
        let st = subtree_pairs(&leaf);
        assert_eq!(st.len(), 2);
        assert_eq!(st[0].format(), "(e, {g(1,2,1)})");
        assert_eq!(st[1].format(), "(g(1,2,1), {e})");
        assert!(st.iter().all(|p| p.coefficient == int(1)));
        assert_eq!(split_pairs(&leaf).len(), 2);
    }

    #[test]
    fn single_edge_tree() {
        let tau = t("[1]0");
        let st: Vec<String> = subtree_pairs(&tau).iter().map(SubtreePair::format).collect();
        assert_eq!(st, ["(e, {[1]0})", "(0, {1})", "([1]0, {e})"]);
    }

    #[test]
    fn langevin_tree_split_pairs() {
        let tau = langevin_tree();
        let sp: Vec<String> = split_pairs(&tau).iter().map(SubtreePair::format).collect();
        let b = "g(2,1,0)";
        let c = "g(1,1,0)";
        let y = format!("[{b},{b}]g(1,2,0)");
        let x = format!("[{y},{c}]g(1,1,1)");
        let mut expected = vec![
            format!("(e, {{{tau}}})"),
            format!("([{b}]g(1,2,0), {{{x}}})"),
            format!("([{x}]g(1,2,0), {{{b}}})"),
            format!("([[{c}]g(1,1,1),{b}]g(1,2,0), {{{y}}})"),
            format!("([[[{b}]g(1,2,0),{c}]g(1,1,1),{b}]g(1,2,0), {{{b}}})"),
            format!("([[{y}]g(1,1,1),{b}]g(1,2,0), {{{c}}})"),
        ];
        let mut got = sp.clone();
        got.sort();
        expected.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn repeated_leaves_double_gamma() {
        let tau = t("[0,0]0");
        assert_eq!(gamma(&tau, &t("[0]0"), &[t("0")]).unwrap(), int(2));
        assert_eq!(gamma(&tau, &t("0"), &[t("0"), t("0")]).unwrap(), int(1));
        assert_eq!(gamma(&tau, &tau, &[Tree::empty(1), Tree::empty(1)]).unwrap(), int(1));
        assert!(gamma(&tau, &t("[0]0"), &[t("1")]).is_err());
    }

    #[test]
    fn gamma_of_empty_tree() {
        let e = Tree::empty(2);
        assert_eq!(gamma(&e, &e, std::slice::from_ref(&e)).unwrap(), int(1));
    }

    #[test]
    fn every_pair_reconstructs_the_tree() {
        let tau = langevin_tree();
        for p in subtree_pairs(&tau) {
            assert!(reconstructs(&tau, &p), "{}", p.format());
        }
    }
}
