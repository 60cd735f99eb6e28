use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ast::{CmpOp, PolicyAst};
use super::attribute::{bit_leaf, check_width, DEFAULT_WIDTH};
use super::PolicyError;

/// One node of a compiled threshold tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TreeNode {
    /// Satisfied when at least `threshold` children are satisfied.
    Gate {
        threshold: usize,
        children: Vec<usize>,
    },
    /// Satisfied when the canonical attribute string is held.
    Leaf { attribute: String },
}

/// A threshold tree whose nodes are stored in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolicyTree {
    nodes: Vec<TreeNode>,
}

impl PolicyTree {
    /// Builds a tree from preorder nodes, checking indices and thresholds.
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self, PolicyError> {
        if nodes.is_empty() {
            return Err(PolicyError::InvalidAst("empty tree"));
        }
        let mut seen = vec![false; nodes.len()];
        seen[0] = true;
        for (i, node) in nodes.iter().enumerate() {
            if let TreeNode::Gate {
                threshold,
                children,
            } = node
            {
                if children.is_empty() || *threshold == 0 || *threshold > children.len() {
                    return Err(PolicyError::InvalidAst("threshold out of range"));
                }
                for &c in children {
                    if c <= i || c >= nodes.len() || seen[c] {
                        return Err(PolicyError::InvalidAst("child index is not preorder"));
                    }
                    seen[c] = true;
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(PolicyError::InvalidAst("unreachable node"));
        }
        Ok(PolicyTree { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &TreeNode {
        &self.nodes[index]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(index, attribute)` for every leaf, in preorder.
    pub fn leaves(&self) -> impl Iterator<Item = (usize, &str)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n {
            TreeNode::Leaf { attribute } => Some((i, attribute.as_str())),
            TreeNode::Gate { .. } => None,
        })
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    pub fn is_satisfied_by(&self, held: &BTreeSet<String>) -> bool {
        self.satisfied_at(0, held)
    }

    fn satisfied_at(&self, index: usize, held: &BTreeSet<String>) -> bool {
        match &self.nodes[index] {
            TreeNode::Leaf { attribute } => held.contains(attribute),
            TreeNode::Gate {
                threshold,
                children,
            } => {
                children
                    .iter()
                    .filter(|&&c| self.satisfied_at(c, held))
                    .count()
                    >= *threshold
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Expr {
    Gate(usize, Vec<Expr>),
    Leaf(String),
}

/// Outcome of expanding a comparison before it is known to be non-trivial.
enum Bits {
    False,
    Expr(Expr),
}

fn and2(a: Expr, b: Bits) -> Bits {
    match b {
        Bits::False => Bits::False,
        Bits::Expr(b) => Bits::Expr(Expr::Gate(2, vec![a, b])),
    }
}

fn or2(a: Expr, b: Bits) -> Bits {
    match b {
        Bits::False => Bits::Expr(a),
        Bits::Expr(b) => Bits::Expr(Expr::Gate(1, vec![a, b])),
    }
}

/// `v > n` over bits `bit..=0` of `v`.
fn greater(name: &str, n: u64, bit: u32) -> Bits {
    let one = Expr::Leaf(bit_leaf(name, bit, true));
    let rest = if bit == 0 {
        Bits::False
    } else {
        greater(name, n, bit - 1)
    };
    if (n >> bit) & 1 == 1 {
        and2(one, rest)
    } else {
        or2(one, rest)
    }
}

/// `v < n` over bits `bit..=0` of `v`.
fn less(name: &str, n: u64, bit: u32) -> Bits {
    let zero = Expr::Leaf(bit_leaf(name, bit, false));
    let rest = if bit == 0 {
        Bits::False
    } else {
        less(name, n, bit - 1)
    };
    if (n >> bit) & 1 == 0 {
        and2(zero, rest)
    } else {
        or2(zero, rest)
    }
}

fn always(name: &str) -> Expr {
    Expr::Gate(
        1,
        vec![
            Expr::Leaf(bit_leaf(name, 0, false)),
            Expr::Leaf(bit_leaf(name, 0, true)),
        ],
    )
}

fn never(name: &str) -> Expr {
    Expr::Gate(
        2,
        vec![
            Expr::Leaf(bit_leaf(name, 0, false)),
            Expr::Leaf(bit_leaf(name, 0, true)),
        ],
    )
}

/// Bag-of-bits subtree satisfied by the bit attributes of `v` iff `v op bound`.
fn expand_comparison(name: &str, op: CmpOp, bound: u64, width: u32) -> Result<Expr, PolicyError> {
    check_width(name, bound, width)?;
    let top = width - 1;
    let max = if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    };
    let bits = match op {
        CmpOp::Gt => greater(name, bound, top),
        CmpOp::Ge if bound == 0 => return Ok(always(name)),
        CmpOp::Ge => greater(name, bound - 1, top),
        CmpOp::Lt => less(name, bound, top),
        CmpOp::Le if bound == max => return Ok(always(name)),
        CmpOp::Le => less(name, bound + 1, top),
    };
    Ok(match bits {
        Bits::False => never(name),
        Bits::Expr(e) => e,
    })
}

fn to_expr(ast: &PolicyAst, widths: &BTreeMap<String, u32>) -> Result<Expr, PolicyError> {
    Ok(match ast {
        PolicyAst::And(c) => Expr::Gate(
            c.len(),
            c.iter().map(|n| to_expr(n, widths)).collect::<Result<_, _>>()?,
        ),
        PolicyAst::Or(c) => Expr::Gate(
            1,
            c.iter().map(|n| to_expr(n, widths)).collect::<Result<_, _>>()?,
        ),
        PolicyAst::Eq { name, value } => Expr::Leaf(format!("{name}={value}")),
        PolicyAst::Flag(name) => Expr::Leaf(format!("{name}=True")),
        PolicyAst::Cmp {
            name, op, bound, ..
        } => {
            let width = widths.get(name).copied().unwrap_or(DEFAULT_WIDTH);
            expand_comparison(name, *op, *bound, width)?
        }
    })
}

fn flatten(expr: Expr, nodes: &mut Vec<TreeNode>) -> usize {
    let index = nodes.len();
    match expr {
        Expr::Leaf(attribute) => nodes.push(TreeNode::Leaf { attribute }),
        Expr::Gate(threshold, children) => {
            nodes.push(TreeNode::Gate {
                threshold,
                children: Vec::new(),
            });
            let ids: Vec<usize> = children.into_iter().map(|c| flatten(c, nodes)).collect();
            if let TreeNode::Gate { children, .. } = &mut nodes[index] {
                *children = ids;
            }
        }
    }
    index
}

/// Compiles a policy into a threshold tree.
///
/// `And` becomes an n-of-n gate and `Or` a 1-of-n gate. Comparisons are
/// expanded into gates over bit attributes `name.bit_j=0|1`, using the width
/// from `widths` or [`DEFAULT_WIDTH`].
pub fn compile_policy(
    ast: &PolicyAst,
    widths: &BTreeMap<String, u32>,
) -> Result<PolicyTree, PolicyError> {
    ast.validate()?;
    let mut nodes = Vec::new();
    flatten(to_expr(ast, widths)?, &mut nodes);
    Ok(PolicyTree { nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{evaluate, materialize_numeric, parse_policy, Attribute, AttributeSet};

    fn held_for(name: &str, v: u64, width: u32) -> BTreeSet<String> {
        materialize_numeric(name, v, width)
            .unwrap()
            .canonical_strings()
    }

    #[test]
    fn epoch_at_least_three() {
        let tree = compile_policy(
            &PolicyAst::cmp("epoch", CmpOp::Ge, 3),
            &BTreeMap::from([("epoch".to_string(), 4)]),
        )
        .unwrap();
        let satisfied: Vec<u64> = (0..16)
            .filter(|&v| tree.is_satisfied_by(&held_for("epoch", v, 4)))
            .collect();
        assert_eq!(satisfied, (3..16).collect::<Vec<_>>());
    }

    #[test]
    fn at_most_zero_is_all_bits_clear() {
        let tree = compile_policy(
            &PolicyAst::cmp("x", CmpOp::Le, 0),
            &BTreeMap::from([("x".to_string(), 4)]),
        )
        .unwrap();
        let leaves: BTreeSet<&str> = tree.leaves().map(|(_, a)| a).collect();
        let expected: BTreeSet<&str> =
            ["x.bit_0=0", "x.bit_1=0", "x.bit_2=0", "x.bit_3=0"].into();
        assert_eq!(leaves, expected);
        // Only two-of-two gates are produced, so every leaf is required.
        assert!(tree.nodes().iter().all(|n| match n {
            TreeNode::Gate { threshold, children } => *threshold == children.len(),
            TreeNode::Leaf { .. } => true,
        }));
        for v in 0..16 {
            assert_eq!(tree.is_satisfied_by(&held_for("x", v, 4)), v == 0);
        }
    }

    #[test]
    fn exhaustive_comparisons_width_four() {
        let widths = BTreeMap::from([("x".to_string(), 4)]);
        for op in [CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge] {
            for bound in 0..16 {
                let tree = compile_policy(&PolicyAst::cmp("x", op, bound), &widths).unwrap();
                for v in 0..16 {
                    assert_eq!(
                        tree.is_satisfied_by(&held_for("x", v, 4)),
                        op.holds(v, bound),
                        "{v} {op:?} {bound}"
                    );
                }
                assert!(!tree.is_satisfied_by(&BTreeSet::new()));
            }
        }
    }

    #[test]
    fn gates_are_and_or_only() {
        let ast = parse_policy("(a or b or c) and d and (e = f or g > 9)").unwrap();
        let tree = compile_policy(&ast, &BTreeMap::new()).unwrap();
        match tree.node(0) {
            TreeNode::Gate {
                threshold,
                children,
            } => {
                assert_eq!(*threshold, 3);
                assert_eq!(children.len(), 3);
            }
            _ => panic!("root should be a gate"),
        }
        assert!(matches!(
            tree.node(1),
            TreeNode::Gate { threshold: 1, children } if children.len() == 3
        ));
        for node in tree.nodes() {
            if let TreeNode::Gate {
                threshold,
                children,
            } = node
            {
                assert!(*threshold == 1 || *threshold == children.len());
            }
        }
    }

    #[test]
    fn preorder_indices_are_deterministic() {
        let ast = parse_policy("(a or b) and c").unwrap();
        let tree = compile_policy(&ast, &BTreeMap::new()).unwrap();
        assert_eq!(
            tree.nodes(),
            &[
                TreeNode::Gate {
                    threshold: 2,
                    children: vec![1, 4]
                },
                TreeNode::Gate {
                    threshold: 1,
                    children: vec![2, 3]
                },
                TreeNode::Leaf {
                    attribute: "a=True".into()
                },
                TreeNode::Leaf {
                    attribute: "b=True".into()
                },
                TreeNode::Leaf {
                    attribute: "c=True".into()
                },
            ]
        );
        assert_eq!(tree, compile_policy(&ast, &BTreeMap::new()).unwrap());
        assert_eq!(PolicyTree::from_nodes(tree.nodes().to_vec()).unwrap(), tree);
    }

    #[test]
    fn width_overflow() {
        let widths = BTreeMap::from([("x".to_string(), 4)]);
        assert!(matches!(
            compile_policy(&PolicyAst::cmp("x", CmpOp::Lt, 16), &widths),
            Err(PolicyError::WidthOverflow { .. })
        ));
    }

    #[test]
    fn scenario_five_equivalence() {
        use rand::{Rng, SeedableRng};
        let ast = parse_policy(
            "(Project = Genome1) and (PI = John Smith) and (Role = Graduate Assistant) \
             and (Date <= 05/01/2021) and IS_VALID",
        )
        .unwrap();
        let tree = compile_policy(&ast, &BTreeMap::new()).unwrap();
        let leaves: Vec<&str> = tree.leaves().map(|(_, a)| a).collect();
        assert!(leaves.contains(&"IS_VALID=True"));
        assert!(leaves.iter().any(|l| l.starts_with("Date.bit_")));

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mut attrs = AttributeSet::new();
            let pick = |rng: &mut rand_chacha::ChaCha8Rng, a: &str, b: &str| {
                if rng.gen_bool(0.8) { a.to_string() } else { b.to_string() }
            };
            for (name, yes, no) in [
                ("Project", "Genome1", "Biology1"),
                ("PI", "John Smith", "Jack Robinson"),
                ("Role", "Graduate Assistant", "Faculty"),
                ("IS_VALID", "True", "False"),
            ] {
                if rng.gen_bool(0.95) {
                    attrs.insert(Attribute::string(name, &pick(&mut rng, yes, no)).unwrap()).unwrap();
                }
            }
            if rng.gen_bool(0.9) {
                let day = rng.gen_range(18700..18800);
                attrs.insert(Attribute::int("Date", day).unwrap()).unwrap();
            }
            let held = crate::policy::materialize_all(&attrs).unwrap().canonical_strings();
            assert_eq!(tree.is_satisfied_by(&held), evaluate(&ast, &attrs), "{attrs:?}");
        }
    }

    #[test]
    fn rejects_malformed_trees() {
        assert!(PolicyTree::from_nodes(vec![]).is_err());
        assert!(PolicyTree::from_nodes(vec![TreeNode::Gate {
            threshold: 2,
            children: vec![1]
        }, TreeNode::Leaf { attribute: "a=1".into() }])
        .is_err());
        assert!(PolicyTree::from_nodes(vec![
            TreeNode::Gate { threshold: 1, children: vec![1, 1] },
            TreeNode::Leaf { attribute: "a=1".into() },
        ])
        .is_err());
    }
}
