use super::{NodeLabel, Root, Tree};
use crate::error::{Error, Result};

/// Which family of trees is in use, with its dimensions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeModel {
    /// Partitioned SDE with `partitions` blocks and colors `0..=colors`;
    /// `nu[m][q - 1]` is the number of variants `v` of color `m` in partition `q`.
    GeneralPartitioned {
        partitions: u32,
        colors: u32,
        nu: Vec<Vec<u32>>,
    },
    /// Single partition whose coefficients may depend on `t = W_0` and on
    /// `W_1..=W_wiener_nodes`; `nu[m]` variants per color.
    NonAutonomous {
        colors: u32,
        wiener_nodes: u32,
        nu: Vec<u32>,
    },
    /// `dX = A(t)X dt + Σ_m g_m(X, t) ⋆dW_m`.
    SemiLinear { colors: u32 },
}

impl TreeModel {
    pub fn semilinear(colors: u32) -> TreeModel {
        TreeModel::SemiLinear { colors }
    }

    /// Single-partition deterministic trees of classical Butcher theory.
    pub fn classical() -> TreeModel {
        TreeModel::GeneralPartitioned {
            partitions: 1,
            colors: 0,
            nu: vec![vec![1]],
        }
    }

    /// The splitting of the Langevin equation into `X¹ = (R, V)`, `X² = t` with
    /// `g_0^{(1,1)}`, `g_0^{(1,2)}`, `g_1^{(1,1)}` and `g_0^{(2,1)}`.
    pub fn langevin() -> TreeModel {
        TreeModel::GeneralPartitioned {
            partitions: 2,
            colors: 1,
            nu: vec![vec![2, 1], vec![1, 0]],
        }
    }

    /// Validated constructor for the general model.
    pub fn general(partitions: u32, colors: u32, nu: Vec<Vec<u32>>) -> Result<TreeModel> {
        if partitions == 0 {
            return Err(Error::InvalidArgument("at least one partition is required".into()));
        }
        if nu.len() != colors as usize + 1 || nu.iter().any(|row| row.len() != partitions as usize) {
            return Err(Error::InvalidArgument(format!(
                "variant table must have {} rows of {} entries",
                colors + 1,
                partitions
            )));
        }
        Ok(TreeModel::GeneralPartitioned { partitions, colors, nu })
    }

    pub fn colors(&self) -> u32 {
        match self {
            TreeModel::GeneralPartitioned { colors, .. }
            | TreeModel::NonAutonomous { colors, .. }
            | TreeModel::SemiLinear { colors } => *colors,
        }
    }

    pub fn partitions(&self) -> u32 {
        match self {
            TreeModel::GeneralPartitioned { partitions, .. } => *partitions,
            _ => 1,
        }
    }

    /// Labels that may appear at internal nodes or as the root of a tree.
    pub fn node_labels(&self) -> Vec<NodeLabel> {
        match self {
            TreeModel::GeneralPartitioned { partitions, colors, nu } => {
                let mut out = Vec::new();
                for q in 1..=*partitions {
                    for m in 0..=*colors {
                        for v in 1..=nu[m as usize][q as usize - 1] {
                            out.push(NodeLabel::General { q, v, m });
                        }
                    }
                }
                out
            }
            TreeModel::NonAutonomous { colors, nu, .. } => {
                let mut out = Vec::new();
                for m in 0..=*colors {
                    for v in 1..=nu[m as usize] {
                        out.push(NodeLabel::General { q: 1, v, m });
                    }
                }
                out
            }
            TreeModel::SemiLinear { colors } => {
                let mut out: Vec<NodeLabel> = (0..=*colors).map(NodeLabel::G).collect();
                out.push(NodeLabel::A);
                out
            }
        }
    }

    /// Labels that only occur as leaves below some other node.
    pub fn leaf_only_labels(&self) -> Vec<NodeLabel> {
        match self {
            TreeModel::GeneralPartitioned { .. } => Vec::new(),
            TreeModel::NonAutonomous { wiener_nodes, .. } => {
                let mut out = vec![NodeLabel::T];
                out.extend((1..=*wiener_nodes).map(NodeLabel::W));
                out
            }
            TreeModel::SemiLinear { .. } => vec![NodeLabel::T],
        }
    }

    pub fn empty_partitions(&self) -> Vec<u32> {
        (1..=self.partitions()).collect()
    }

    fn label_valid(&self, label: NodeLabel) -> bool {
        self.node_labels().contains(&label) || self.leaf_only_labels().contains(&label)
    }

    /// Checks every vertex of `tree` against the model. Leaf-only labels are
    /// accepted as a standalone tree (they occur as remainders of subtree
    /// decompositions), never with children.
    pub fn check(&self, tree: &Tree) -> Result<()> {
        match tree.root() {
            Root::Empty(q) => {
                if q == 0 || q > self.partitions() {
                    return Err(Error::InvalidLabel {
                        label: tree.to_string(),
                        reason: format!("empty tree partition must be in 1..={}", self.partitions()),
                    });
                }
                Ok(())
            }
            Root::Node(_) => self.check_node(tree, tree),
        }
    }

    fn check_node(&self, whole: &Tree, t: &Tree) -> Result<()> {
        let label = match t.root() {
            Root::Node(l) => l,
            Root::Empty(_) => {
                return Err(Error::InvalidLabel {
                    label: "e".into(),
                    reason: format!("empty tree used as a child in {whole}"),
                })
            }
        };
        if !self.label_valid(label) {
            return Err(Error::InvalidLabel {
                label: label.to_string(),
                reason: format!("not a label of the {} model", self.name()),
            });
        }
        if label.is_leaf_only() && !t.children().is_empty() {
            return Err(Error::InvalidLabel {
                label: label.to_string(),
                reason: "t and W nodes cannot have children".into(),
            });
        }
        if label == NodeLabel::A {
            let count = t.children().iter().filter(|c| c.label() != Some(NodeLabel::T)).count();
            if count > 1 {
                return Err(Error::SemiLinearArity {
                    tree: whole.to_string(),
                    count,
                });
            }
        }
        t.children().iter().try_for_each(|c| self.check_node(whole, c))
    }

    /// Checks a tree `[τ_1, …, τ_κ]_f` of the function-of-series expansion.
    pub fn check_function_tree(&self, tree: &Tree) -> Result<()> {
        if tree.label() != Some(NodeLabel::F) {
            return Err(Error::InvalidLabel {
                label: tree.to_string(),
                reason: "function trees are rooted at f".into(),
            });
        }
        tree.children().iter().try_for_each(|c| self.check_node(tree, c))
    }

    pub fn name(&self) -> &'static str {
        match self {
            TreeModel::GeneralPartitioned { .. } => "general",
            TreeModel::NonAutonomous { .. } => "nonautonomous",
            TreeModel::SemiLinear { .. } => "semilinear",
        }
    }

    /// Semi-linear A-trees `T̄_A`: no coefficient-function nodes anywhere
    /// (the empty tree included).
    pub fn is_a_tree(tree: &Tree) -> bool {
        !tree.any_label(&|l| matches!(l, NodeLabel::G(_)))
    }
}
