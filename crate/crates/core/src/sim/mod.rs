//! Token-level simulator of tree-based draft-and-verify decoding over small
//! Markov-table language models.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`; every stochastic entry point takes an explicit seed, so
//! a run is bit-reproducible. Uniform variates are `rng.random::<f64>()`
//! (53-bit mantissa in `[0, 1)`).

mod decode;
mod mask;
mod toylm;
mod tree;
mod verify;

pub use decode::{run_decode, DecodeMode, DecodeRun, TreeParams, CYCLE_CSV_HEADER};
pub use mask::{tree_mask, TreeMask};
pub use toylm::{ToyLm, MAX_VOCAB};
pub use tree::{build_tree, DraftMode, DraftTree, TreeNode};
pub use verify::{verify_greedy, verify_sampled, VerifyOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type Token = usize;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("toy model: {0}")]
    Model(String),
    #[error("toy model line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0} must be >= 1")]
    NonPositive(&'static str),
    #[error("top_c ({top_c}) exceeds vocabulary size ({vocab})")]
    TopCExceedsVocab { top_c: usize, vocab: usize },
    #[error("token {token} outside vocabulary of size {vocab}")]
    TokenOutOfRange { token: Token, vocab: usize },
    #[error("target and draft vocabularies differ ({target} vs {draft})")]
    VocabMismatch { target: usize, draft: usize },
    #[error("tree node {0} has zero draft probability")]
    ZeroDraftProb(usize),
    #[error("rejection left an empty residual distribution")]
    EmptyResidual,
}

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Inverse-CDF draw from an unnormalized non-negative weight vector with
/// positive total mass. The last positive entry absorbs rounding slack.
pub(crate) fn sample_index<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0);
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if target < acc {
                return i;
            }
        }
    }
    last
}

/// Lowest-index maximum.
pub(crate) fn argmax(dist: &[f64]) -> Token {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best
}
