//! Candidate-tree construction from a draft model.
//!
//! Expansion is breadth-first. Every node at depth `< depth` spawns up to
//! `top_c` children, and the tree is then cut down to the `budget` non-root
//! nodes with the highest path probability (product of draft probabilities
//! from the root). Ties rank by shallower depth, then lower token id, then
//! creation order. A child's path probability never exceeds its parent's,
//! so the kept set is closed under taking ancestors.

use rand::Rng;

use super::{rng_from_seed, sample_index, SimError, ToyLm, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DraftMode {
    /// Children are the `top_c` most probable tokens.
    Greedy,
    /// Children are `top_c` distinct draws, sampled without replacement.
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    /// `None` for the root.
    pub parent: Option<usize>,
    /// For the root, the last prefix token (begin token on an empty prefix).
    pub token: Token,
    /// Draft probability of `token` given the path above it (1 for the root).
    pub draft_prob: f64,
    pub path_prob: f64,
    pub depth: usize,
    /// Draft distribution this node's children were drawn from; `None` for
    /// nodes that were never expanded.
    pub child_dist: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DraftTree {
    nodes: Vec<TreeNode>,
    children: Vec<Vec<usize>>,
    top_c: usize,
    max_depth: usize,
}

impl DraftTree {
    /// Assembles a tree from nodes listed parent-before-child, with node 0
    /// the only root.
    pub fn from_nodes(nodes: Vec<TreeNode>, top_c: usize) -> Result<Self, SimError> {
        if nodes.is_empty() || nodes[0].parent.is_some() {
            return Err(SimError::Model("tree must start with a single root".into()));
        }
        let mut children = vec![Vec::new(); nodes.len()];
        for (i, n) in nodes.iter().enumerate().skip(1) {
            match n.parent {
                Some(p) if p < i => children[p].push(i),
                _ => return Err(SimError::Model(format!("node {i} does not follow its parent"))),
            }
            if n.depth != nodes[n.parent.unwrap()].depth + 1 {
                return Err(SimError::Model(format!("node {i} has inconsistent depth")));
            }
        }
        if children.iter().any(|c| c.len() > top_c) {
            return Err(SimError::Model(format!("a node has more than top_c = {top_c} children")));
        }
        let max_depth = nodes.iter().map(|n| n.depth).max().unwrap_or(0);
        Ok(Self { nodes, children, top_c, max_depth })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn top_c(&self) -> usize {
        self.top_c
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Number of root-to-leaf paths.
    pub fn path_count(&self) -> usize {
        if self.nodes.len() == 1 {
            return 0;
        }
        self.children.iter().skip(1).filter(|c| c.is_empty()).count()
    }

    /// Draft tokens from the root (exclusive) down to `i` (inclusive).
    pub fn path_tokens(&self, mut i: usize) -> Vec<Token> {
        let mut out = Vec::with_capacity(self.nodes[i].depth);
        while let Some(p) = self.nodes[i].parent {
            out.push(self.nodes[i].token);
            i = p;
        }
        out.reverse();
        out
    }
}

pub fn build_tree(
    draft: &ToyLm,
    prefix: &[Token],
    top_c: usize,
    depth: usize,
    budget: usize,
    mode: DraftMode,
    rng_seed: u64,
) -> Result<DraftTree, SimError> {
    for (name, v) in [("top_c", top_c), ("depth", depth), ("budget", budget)] {
        if v == 0 {
            return Err(SimError::NonPositive(name));
        }
    }
    if top_c > draft.vocab() {
        return Err(SimError::TopCExceedsVocab { top_c, vocab: draft.vocab() });
    }
    let mut rng = rng_from_seed(rng_seed);

    let mut nodes = vec![TreeNode {
        parent: None,
        token: prefix.last().copied().unwrap_or(draft.begin_token()),
        draft_prob: 1.0,
        path_prob: 1.0,
        depth: 0,
        child_dist: None,
    }];
    let mut frontier = vec![0usize];
    let mut history = prefix.to_vec();

    for level in 1..=depth {
        let mut level_nodes = Vec::new();
        for &parent in &frontier {
            history.truncate(prefix.len());
            history.extend(path_of(&nodes, parent));
            let q = draft.dist(&history).to_vec();
            let picks = match mode {
                DraftMode::Greedy => top_tokens(&q, top_c),
                DraftMode::Sampled => sample_distinct(&q, top_c, &mut rng),
            };
            for tok in picks {
                level_nodes.push(TreeNode {
                    parent: Some(parent),
                    token: tok,
                    draft_prob: q[tok],
                    path_prob: nodes[parent].path_prob * q[tok],
                    depth: level,
                    child_dist: None,
                });
            }
            nodes[parent].child_dist = Some(q);
        }
        // A node outside its level's best `budget` cannot make the global cut.
        let start = nodes.len();
        nodes.extend(level_nodes);
        let mut level_ids: Vec<usize> = (start..nodes.len()).collect();
        level_ids.sort_by(|&a, &b| rank(&nodes, a, b));
        level_ids.truncate(budget);
        level_ids.sort_unstable();
        frontier = level_ids;
        if frontier.is_empty() {
            break;
        }
    }

    let mut ranked: Vec<usize> = (1..nodes.len()).collect();
    ranked.sort_by(|&a, &b| rank(&nodes, a, b));
    ranked.truncate(budget);
    let mut keep = vec![false; nodes.len()];
    keep[0] = true;
    for &i in &ranked {
        keep[i] = true;
    }

    // Compact in creation (breadth-first) order, remapping parents.
    let mut remap = vec![usize::MAX; nodes.len()];
    let mut kept = Vec::with_capacity(ranked.len() + 1);
    for (i, mut n) in nodes.into_iter().enumerate() {
        if !keep[i] {
            continue;
        }
        if let Some(p) = n.parent {
            debug_assert!(keep[p], "budget cut must keep ancestors");
            n.parent = Some(remap[p]);
        }
        remap[i] = kept.len();
        kept.push(n);
    }
    DraftTree::from_nodes(kept, top_c)
}

fn path_of(nodes: &[TreeNode], mut i: usize) -> Vec<Token> {
    let mut out = Vec::new();
    while let Some(p) = nodes[i].parent {
        out.push(nodes[i].token);
        i = p;
    }
    out.reverse();
    out
}

fn rank(nodes: &[TreeNode], a: usize, b: usize) -> std::cmp::Ordering {
    let (x, y) = (&nodes[a], &nodes[b]);
    y.path_prob
        .total_cmp(&x.path_prob)
        .then(x.depth.cmp(&y.depth))
        .then(x.token.cmp(&y.token))
        .then(a.cmp(&b))
}

/// The `n` most probable tokens with positive probability, ties to the
/// lower id.
fn top_tokens(q: &[f64], n: usize) -> Vec<Token> {
    let mut ids: Vec<Token> = (0..q.len()).filter(|&t| q[t] > 0.0).collect();
    ids.sort_by(|&a, &b| q[b].total_cmp(&q[a]).then(a.cmp(&b)));
    ids.truncate(n);
    ids
}

/// Up to `n` distinct tokens drawn sequentially without replacement.
fn sample_distinct<R: Rng>(q: &[f64], n: usize, rng: &mut R) -> Vec<Token> {
    let mut weights = q.to_vec();
    let mut out = Vec::with_capacity(n);
    while out.len() < n && weights.iter().any(|&w| w > 0.0) {
        let t = sample_index(&weights, rng);
        out.push(t);
        weights[t] = 0.0;
    }
    out
}
