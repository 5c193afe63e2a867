//! Bracket notation.
//!
//! ```text
//! tree := leaf | "[" tree ("," tree)* "]" leaf
//! leaf := "g(" q "," v "," m ")" | "W" i | "t" | "A" | digits | "f" | "e" | "e(" q ")"
//! ```
//!
//! Digits denote the `g`-node of that color in the semi-linear model, `e` is
//! the empty tree. Whitespace between tokens is ignored.

use std::str::FromStr;

use super::{NodeLabel, Root, Tree, TreeModel};
use crate::error::{Error, Result};

/// Tree as written, before children are sorted or labels checked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawTree {
    pub root: Root,
    pub children: Vec<RawTree>,
}

impl RawTree {
    pub fn leaf(label: NodeLabel) -> RawTree {
        RawTree {
            root: Root::Node(label),
            children: Vec::new(),
        }
    }

    pub fn node(label: NodeLabel, children: Vec<RawTree>) -> RawTree {
        RawTree {
            root: Root::Node(label),
            children,
        }
    }

    pub fn parse(input: &str) -> Result<RawTree> {
        let mut p = Parser {
            input,
            bytes: input.as_bytes(),
            pos: 0,
        };
        let t = p.tree()?;
        p.skip_ws();
        if p.pos != p.bytes.len() {
            return Err(p.error("trailing characters"));
        }
        Ok(t)
    }

    /// Sorts children into canonical order without validating labels.
    pub fn to_tree(&self) -> Tree {
        match self.root {
            Root::Empty(q) => Tree::empty(q),
            Root::Node(label) => Tree::node(label, self.children.iter().map(RawTree::to_tree).collect()),
        }
    }
}

impl From<&Tree> for RawTree {
    fn from(t: &Tree) -> Self {
        RawTree {
            root: t.root(),
            children: t.children().iter().map(RawTree::from).collect(),
        }
    }
}

/// Canonical form of `raw`, validated against `model`.
pub fn canonicalize(raw: &RawTree, model: &TreeModel) -> Result<Tree> {
    let tree = raw.to_tree();
    model.check(&tree)?;
    Ok(tree)
}

impl FromStr for Tree {
    type Err = Error;

    /// Parses and canonicalizes without a model check.
    fn from_str(s: &str) -> Result<Tree> {
        Ok(RawTree::parse(s)?.to_tree())
    }
}

struct Parser<'a> {
    input: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Parse {
            input: self.input.to_string(),
            pos: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn number(&mut self) -> Result<u32> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected a number"));
        }
        self.input[start..self.pos]
            .parse()
            .map_err(|_| self.error("number out of range"))
    }

    fn tree(&mut self) -> Result<RawTree> {
        if self.peek() == Some(b'[') {
            self.pos += 1;
            let mut children = vec![self.tree()?];
            loop {
                match self.peek() {
                    Some(b',') => {
                        self.pos += 1;
                        children.push(self.tree()?);
                    }
                    Some(b']') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.error("expected ',' or ']'")),
                }
            }
            match self.root()? {
                Root::Node(label) => Ok(RawTree::node(label, children)),
                Root::Empty(_) => Err(self.error("the empty tree cannot have children")),
            }
        } else {
            let root = self.root()?;
            Ok(RawTree {
                root,
                children: Vec::new(),
            })
        }
    }

    fn root(&mut self) -> Result<Root> {
        let c = self.peek().ok_or_else(|| self.error("unexpected end of input"))?;
        let label = match c {
            b'g' => {
                self.pos += 1;
                self.expect(b'(')?;
                let q = self.number()?;
                self.expect(b',')?;
                let v = self.number()?;
                self.expect(b',')?;
                let m = self.number()?;
                self.expect(b')')?;
                NodeLabel::General { q, v, m }
            }
            b'W' => {
                self.pos += 1;
                match self.number()? {
                    0 => NodeLabel::T,
                    i => NodeLabel::W(i),
                }
            }
            b't' => {
                self.pos += 1;
                NodeLabel::T
            }
            b'A' => {
                self.pos += 1;
                NodeLabel::A
            }
            b'f' => {
                self.pos += 1;
                NodeLabel::F
            }
            b'e' => {
                self.pos += 1;
                if self.peek() == Some(b'(') {
                    self.pos += 1;
                    let q = self.number()?;
                    self.expect(b')')?;
                    return Ok(Root::Empty(q));
                }
                return Ok(Root::Empty(1));
            }
            b'0'..=b'9' => NodeLabel::G(self.number()?),
            _ => return Err(self.error("expected a node label")),
        };
        Ok(Root::Node(label))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_of_printed_form() {
        for s in [
            "[[[t,t]A,0]1,t]A",
            "[[[g(2,1,0),g(2,1,0)]g(1,2,0),g(1,1,0)]g(1,1,1),g(2,1,0)]g(1,2,0)",
            "e",
            "e(2)",
            "[1,W3]12",
            "f",
        ] {
            let t: Tree = s.parse().unwrap();
            assert_eq!(t.to_string(), s);
        }
    }

    #[test]
    fn whitespace_is_ignored() {
        let t: Tree = " [ t , [t] A ] A ".parse().unwrap();
        assert_eq!(t.to_string(), "[[t]A,t]A");
    }

    #[test]
    fn malformed_inputs() {
        for s in ["", "[", "[t]", "[t,]A", "[]A", "g(1,2)", "x", "t t", "[t]e", "W"] {
            assert!(s.parse::<Tree>().is_err(), "{s:?} should not parse");
        }
    }

    #[test]
    fn canonicalize_rejects_semilinear_arity() {
        let raw = RawTree::parse("[0,1]A").unwrap();
        let err = canonicalize(&raw, &TreeModel::semilinear(1)).unwrap_err();
        assert!(matches!(err, Error::SemiLinearArity { count: 2, .. }));
    }

    #[test]
    fn canonicalize_rejects_out_of_range_labels() {
        let model = TreeModel::semilinear(1);
        assert!(matches!(
            canonicalize(&RawTree::parse("[2]0").unwrap(), &model),
            Err(Error::InvalidLabel { .. })
        ));
        assert!(matches!(
            canonicalize(&RawTree::parse("[t]t").unwrap(), &model),
            Err(Error::InvalidLabel { .. })
        ));
        let m = TreeModel::langevin();
        assert!(canonicalize(&RawTree::parse("g(2,1,1)").unwrap(), &m).is_err());
        assert!(canonicalize(&RawTree::parse("g(1,3,0)").unwrap(), &m).is_err());
        assert!(canonicalize(&RawTree::parse("[g(1,2,0)]g(1,1,1)").unwrap(), &m).is_ok());
    }

    #[test]
    fn canonicalize_is_idempotent_and_order_free() {
        let model = TreeModel::semilinear(1);
        let a = canonicalize(&RawTree::parse("[t,[t]A]A").unwrap(), &model).unwrap();
        let b = canonicalize(&RawTree::parse("[[t]A,t]A").unwrap(), &model).unwrap();
        assert_eq!(a, b);
        let again = canonicalize(&RawTree::from(&a), &model).unwrap();
        assert_eq!(again, a);
    }
}
