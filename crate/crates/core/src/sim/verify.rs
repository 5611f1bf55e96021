//! Target-side verification of a draft tree.
//!
//! Both walks start at the root and descend one level per accepted token.
//! Every cycle commits at least one token: a replacement when a level is
//! rejected, or a bonus token drawn from the target after reaching a leaf.

use rand::Rng;

use super::{argmax, rng_from_seed, sample_index, DraftTree, SimError, ToyLm, Token};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOutcome {
    /// Committed tokens, the trailing replacement or bonus token included.
    pub accepted_tokens: Vec<Token>,
    pub accepted_count: usize,
    /// Depth of the first level whose candidates were all rejected.
    pub rejected_at: Option<usize>,
    /// Token emitted in place of the rejected candidates.
    pub replacement_token: Option<Token>,
}

impl VerifyOutcome {
    fn finish(mut path: Vec<Token>, last: Token, rejected_at: Option<usize>) -> Self {
        path.push(last);
        Self {
            accepted_count: path.len(),
            accepted_tokens: path,
            replacement_token: rejected_at.map(|_| last),
            rejected_at,
        }
    }

    pub fn csv_row(&self, cycle: usize) -> String {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        format!("{cycle},{},{},{}", self.accepted_count, opt(self.rejected_at), opt(self.replacement_token))
    }
}

fn check_tokens(target: &ToyLm, prefix: &[Token], tree: &DraftTree) -> Result<(), SimError> {
    let vocab = target.vocab();
    let bad = prefix
        .iter()
        .copied()
        .chain(tree.nodes().iter().skip(1).map(|n| n.token))
        .find(|&t| t >= vocab);
    match bad {
        Some(token) => Err(SimError::TokenOutOfRange { token, vocab }),
        None => Ok(()),
    }
}

/// Accepts the child matching the target argmax at each level.
pub fn verify_greedy(target: &ToyLm, prefix: &[Token], tree: &DraftTree) -> Result<VerifyOutcome, SimError> {
    check_tokens(target, prefix, tree)?;
    let mut history = prefix.to_vec();
    let mut path = Vec::new();
    let mut node = 0;
    loop {
        let best = argmax(target.dist(&history));
        let kids = tree.children(node);
        if kids.is_empty() {
            return Ok(VerifyOutcome::finish(path, best, None));
        }
        match kids.iter().find(|&&c| tree.node(c).token == best) {
            Some(&c) => {
                node = c;
                path.push(best);
                history.push(best);
            }
            None => {
                let depth = path.len();
                return Ok(VerifyOutcome::finish(path, best, Some(depth)));
            }
        }
    }
}

/// Recursive rejection sampling. Siblings are tried in stored order; child
/// `t` is accepted with probability `min(1, p(t)/q(t))`. After a rejection
/// the target becomes `norm(max(0, p - q))` and `t` is removed from the
/// draft distribution `q`, which is renormalized.
pub fn verify_sampled(
    target: &ToyLm,
    prefix: &[Token],
    tree: &DraftTree,
    rng_seed: u64,
) -> Result<VerifyOutcome, SimError> {
    check_tokens(target, prefix, tree)?;
    let mut rng = rng_from_seed(rng_seed);
    let mut history = prefix.to_vec();
    let mut path = Vec::new();
    let mut node = 0;
    'levels: loop {
        let mut p = target.dist(&history).to_vec();
        let kids = tree.children(node);
        if kids.is_empty() {
            let bonus = sample_index(&p, &mut rng);
            return Ok(VerifyOutcome::finish(path, bonus, None));
        }
        let mut q = tree
            .node(node)
            .child_dist
            .clone()
            .unwrap_or_else(|| single_child_dist(tree, kids, target.vocab()));
        for &c in kids {
            let t = tree.node(c).token;
            if q[t] <= 0.0 {
                return Err(SimError::ZeroDraftProb(c));
            }
            if rng.random::<f64>() < (p[t] / q[t]).min(1.0) {
                node = c;
                path.push(t);
                history.push(t);
                continue 'levels;
            }
            p = residual(&p, &q)?;
            q[t] = 0.0;
            let mass: f64 = q.iter().sum();
            if mass > 0.0 {
                q.iter_mut().for_each(|x| *x /= mass);
            }
        }
        let replacement = sample_index(&p, &mut rng);
        let depth = path.len();
        return Ok(VerifyOutcome::finish(path, replacement, Some(depth)));
    }
}

/// Fallback draft distribution for hand-built trees whose nodes carry no
/// stored distribution: each child's own draft probability.
fn single_child_dist(tree: &DraftTree, kids: &[usize], vocab: usize) -> Vec<f64> {
    let mut q = vec![0.0; vocab];
    for &c in kids {
        q[tree.node(c).token] = tree.node(c).draft_prob;
    }
    q
}

/// `norm(max(0, p - q))`.
pub(crate) fn residual(p: &[f64], q: &[f64]) -> Result<Vec<f64>, SimError> {
    let mut r: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a - b).max(0.0)).collect();
    let mass: f64 = r.iter().sum();
    if mass <= 0.0 || !mass.is_finite() {
        return Err(SimError::EmptyResidual);
    }
    r.iter_mut().for_each(|x| *x /= mass);
    Ok(r)
}
