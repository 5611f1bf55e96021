//! Tree attention mask: node `i` may attend to node `j` iff `j` is `i` or
//! one of its ancestors. The committed prefix is visible to every node and
//! is not represented.

use super::DraftTree;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeMask {
    size: usize,
    bits: Vec<bool>,
}

impl TreeMask {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn visible(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.size..(i + 1) * self.size]
    }
}

/// Each row is its parent's row plus the diagonal; parents precede children,
/// so a single forward pass suffices.
pub fn tree_mask(tree: &DraftTree) -> TreeMask {
    let n = tree.len();
    let mut bits = vec![false; n * n];
    for i in 0..n {
        if let Some(p) = tree.node(i).parent {
            let (done, rest) = bits.split_at_mut(i * n);
            rest[..n].copy_from_slice(&done[p * n..(p + 1) * n]);
        }
        bits[i * n + i] = true;
    }
    TreeMask { size: n, bits }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{build_tree, DraftMode, ToyLm};

    #[test]
    fn siblings_are_mutually_invisible() {
        let lm = ToyLm::from_fn(3, 0, |_| vec![0.5, 0.3, 0.2]).unwrap();
        let t = build_tree(&lm, &[], 2, 1, 4, DraftMode::Greedy, 0).unwrap();
        let m = tree_mask(&t);
        assert_eq!(m.row(1), &[true, true, false]);
        assert_eq!(m.row(2), &[true, false, true]);
        assert_eq!(m.row(0), &[true, false, false]);
    }

    #[test]
    fn chain_is_lower_triangular() {
        let lm = ToyLm::from_fn(2, 0, |_| vec![0.9, 0.1]).unwrap();
        let t = build_tree(&lm, &[], 1, 5, 5, DraftMode::Greedy, 0).unwrap();
        let m = tree_mask(&t);
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(m.visible(i, j), j <= i);
            }
        }
    }
}
