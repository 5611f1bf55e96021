//! Multi-cycle draft-and-verify loop.

use rand::RngCore;
use serde::Serialize;

use super::{build_tree, rng_from_seed, verify_greedy, verify_sampled, DraftMode, SimError, ToyLm, Token, VerifyOutcome};

pub const CYCLE_CSV_HEADER: &str = "cycle,accepted_count,rejected_at,replacement_token";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TreeParams {
    pub top_c: usize,
    pub depth: usize,
    /// Node budget (`top_k`), root excluded.
    pub budget: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Greedy drafting and argmax verification.
    Greedy,
    /// Sampled drafting and rejection-sampling verification.
    Sampled,
}

impl std::str::FromStr for DecodeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "sampled" => Ok(Self::Sampled),
            _ => Err(format!("unknown mode `{s}` (expected greedy or sampled)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeRun {
    /// Mean accepted tokens per cycle.
    pub acceptance_rate: f64,
    /// Tokens generated after the prefix.
    pub tokens: Vec<Token>,
    pub per_cycle: Vec<VerifyOutcome>,
}

impl DecodeRun {
    pub fn write_cycle_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CYCLE_CSV_HEADER}")?;
        for (i, c) in self.per_cycle.iter().enumerate() {
            writeln!(w, "{}", c.csv_row(i))?;
        }
        Ok(())
    }
}

/// Each cycle draws its tree seed and verify seed, in that order, from a
/// ChaCha8 stream seeded with `rng_seed`.
pub fn run_decode(
    target: &ToyLm,
    draft: &ToyLm,
    prefix: &[Token],
    cycles: usize,
    params: TreeParams,
    mode: DecodeMode,
    rng_seed: u64,
) -> Result<DecodeRun, SimError> {
    if cycles == 0 {
        return Err(SimError::NonPositive("cycles"));
    }
    if target.vocab() != draft.vocab() {
        return Err(SimError::VocabMismatch { target: target.vocab(), draft: draft.vocab() });
    }
    if let Some(&token) = prefix.iter().find(|&&t| t >= target.vocab()) {
        return Err(SimError::TokenOutOfRange { token, vocab: target.vocab() });
    }
    let mut seeder = rng_from_seed(rng_seed);
    let mut history = prefix.to_vec();
    let mut per_cycle = Vec::with_capacity(cycles);
    for _ in 0..cycles {
        let tree_seed = seeder.next_u64();
        let verify_seed = seeder.next_u64();
        let draft_mode = match mode {
            DecodeMode::Greedy => DraftMode::Greedy,
            DecodeMode::Sampled => DraftMode::Sampled,
        };
        let tree = build_tree(draft, &history, params.top_c, params.depth, params.budget, draft_mode, tree_seed)?;
        let out = match mode {
            DecodeMode::Greedy => verify_greedy(target, &history, &tree)?,
            DecodeMode::Sampled => verify_sampled(target, &history, &tree, verify_seed)?,
        };
        history.extend_from_slice(&out.accepted_tokens);
        per_cycle.push(out);
    }
    let total: usize = per_cycle.iter().map(|c| c.accepted_count).sum();
    Ok(DecodeRun {
        acceptance_rate: total as f64 / cycles as f64,
        tokens: history.split_off(prefix.len()),
        per_cycle,
    })
}
