//! Shamir sharing of a secret down a threshold tree.

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};

use super::field::Scalar;
use super::AbeError;
use crate::policy::{PolicyTree, TreeNode};

/// Evaluates the polynomial with `coeffs[0]` as constant term at `x`.
fn eval_poly(coeffs: &[Scalar], x: &Scalar) -> Scalar {
    coeffs
        .iter()
        .rev()
        .fold(Scalar::zero(), |acc, c| acc.mul(x).add(c))
}

/// Splits `secret` over the tree and returns the value at every leaf.
///
/// A 1-of-n gate passes its value to each child; an n-of-n gate picks a random
/// polynomial `f` of degree n-1 with `f(0)` equal to its value and hands child
/// `i` (1-based) the share `f(i)`.
pub fn share_over_tree<R: RngCore + CryptoRng + ?Sized>(
    tree: &PolicyTree,
    secret: &Scalar,
    rng: &mut R,
) -> Result<BTreeMap<usize, Scalar>, AbeError> {
    let mut out = BTreeMap::new();
    share_node(tree, 0, secret.clone(), rng, &mut out)?;
    Ok(out)
}

fn share_node<R: RngCore + CryptoRng + ?Sized>(
    tree: &PolicyTree,
    index: usize,
    value: Scalar,
    rng: &mut R,
    out: &mut BTreeMap<usize, Scalar>,
) -> Result<(), AbeError> {
    match tree.node(index) {
        TreeNode::Leaf { .. } => {
            out.insert(index, value);
        }
        TreeNode::Gate {
            threshold,
            children,
        } => {
            let n = children.len();
            if *threshold == 1 {
                for &c in children {
                    share_node(tree, c, value.clone(), rng, out)?;
                }
            } else if *threshold == n {
                let mut coeffs = Vec::with_capacity(n);
                coeffs.push(value);
                coeffs.extend((1..n).map(|_| Scalar::random(rng)));
                for (i, &c) in children.iter().enumerate() {
                    let share = eval_poly(&coeffs, &Scalar::from_u64(i as u64 + 1));
                    share_node(tree, c, share, rng, out)?;
                }
            } else {
                return Err(AbeError::UnsupportedThreshold {
                    threshold: *threshold,
                    children: n,
                });
            }
        }
    }
    Ok(())
}

/// Lagrange interpolation at zero through `(x, y)` points with distinct `x`.
pub fn interpolate_at_zero(points: &[(u64, Scalar)]) -> Scalar {
    let mut acc = Scalar::zero();
    for (i, (xi, yi)) in points.iter().enumerate() {
        let xi = Scalar::from_u64(*xi);
        let mut num = Scalar::from_u64(1);
        let mut den = Scalar::from_u64(1);
        for (j, (xj, _)) in points.iter().enumerate() {
            if i != j {
                let xj = Scalar::from_u64(*xj);
                num = num.mul(&xj);
                den = den.mul(&xj.sub(&xi));
            }
        }
        let coeff = num.mul(&den.invert().expect("distinct interpolation points"));
        acc = acc.add(&yi.mul(&coeff));
    }
    acc
}

/// Recovers the root value from whatever leaf values are available, or
/// `None` when the available leaves do not satisfy the tree.
pub fn reconstruct(tree: &PolicyTree, leaves: &BTreeMap<usize, Scalar>) -> Option<Scalar> {
    reconstruct_node(tree, 0, leaves)
}

fn reconstruct_node(
    tree: &PolicyTree,
    index: usize,
    leaves: &BTreeMap<usize, Scalar>,
) -> Option<Scalar> {
    match tree.node(index) {
        TreeNode::Leaf { .. } => leaves.get(&index).cloned(),
        TreeNode::Gate {
            threshold,
            children,
        } => {
            if *threshold == 1 {
                return children
                    .iter()
                    .find_map(|&c| reconstruct_node(tree, c, leaves));
            }
            let points: Vec<(u64, Scalar)> = children
                .iter()
                .enumerate()
                .filter_map(|(i, &c)| reconstruct_node(tree, c, leaves).map(|v| (i as u64 + 1, v)))
                .take(*threshold)
                .collect();
            (points.len() >= *threshold).then(|| interpolate_at_zero(&points))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{compile_policy, parse_policy};
    use rand::SeedableRng;
    use std::collections::BTreeMap as Map;

    fn tree(text: &str) -> PolicyTree {
        compile_policy(&parse_policy(text).unwrap(), &Map::new()).unwrap()
    }

    #[test]
    fn or_copies_the_secret() {
        let t = tree("a or b");
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        let s = Scalar::random(&mut rng);
        let shares = share_over_tree(&t, &s, &mut rng).unwrap();
        assert_eq!(shares.len(), 2);
        assert!(shares.values().all(|v| *v == s));
    }

    #[test]
    fn and_uses_a_line() {
        let t = tree("a and b");
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(4);
        let s = Scalar::random(&mut rng);
        let shares = share_over_tree(&t, &s, &mut rng).unwrap();
        let f1 = shares[&1].clone();
        let f2 = shares[&2].clone();
        assert_ne!(f1, s);
        // For a line, f(0) = 2 f(1) - f(2).
        assert_eq!(f1.add(&f1).sub(&f2), s);
        assert_eq!(interpolate_at_zero(&[(1, f1), (2, f2)]), s);
        assert_eq!(reconstruct(&t, &shares), Some(s));
    }

    #[test]
    fn missing_leaf_blocks_and() {
        let t = tree("a and b and c");
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        let s = Scalar::random(&mut rng);
        let mut shares = share_over_tree(&t, &s, &mut rng).unwrap();
        shares.remove(&2);
        assert_eq!(reconstruct(&t, &shares), None);
    }

    #[test]
    fn rejects_k_of_n() {
        let t = PolicyTree::from_nodes(vec![
            TreeNode::Gate {
                threshold: 2,
                children: vec![1, 2, 3],
            },
            TreeNode::Leaf { attribute: "a=1".into() },
            TreeNode::Leaf { attribute: "b=1".into() },
            TreeNode::Leaf { attribute: "c=1".into() },
        ])
        .unwrap();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(6);
        assert!(matches!(
            share_over_tree(&t, &Scalar::from_u64(9), &mut rng),
            Err(AbeError::UnsupportedThreshold { threshold: 2, children: 3 })
        ));
    }
}
