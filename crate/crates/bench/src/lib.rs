//! Shared inputs for the criterion benches.

use specroof::sim::ToyLm;
use specroof::{DeployConfig, HardwareSpec, ModelSpec};

/// 72B-class target with a one-layer draft.
pub fn large_model() -> ModelSpec {
    ModelSpec {
        hidden: 8192,
        kv_dim: 1024,
        mlp_dim: 29568,
        target_layers: 80,
        vocab: 152064,
        draft_layers: 1,
        draft_steps: 5,
        num_heads: 64,
    }
}

pub fn h800() -> HardwareSpec {
    HardwareSpec::new(9.89e14, 3.35e12)
}

pub fn deploy(batch: u64) -> DeployConfig {
    DeployConfig { batch, prefill_len: 10_000, topk_paths: 60, draft_tokens: 10, accepted_tokens: 4.0 }
}

pub fn toy_pair(vocab: usize) -> (ToyLm, ToyLm) {
    (ToyLm::random(vocab, 2, 4.0, 1).unwrap(), ToyLm::random(vocab, 2, 2.0, 2).unwrap())
}
