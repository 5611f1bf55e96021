//! Per-operator FLOP and memory-traffic accounting for one decode cycle.
//!
//! Memory traffic is counted in *elements*; conversion to bytes happens in
//! the roofline layer. One cycle is three kinds of forward pass:
//!
//! * a target-model verification pass over `top_k + 1` tokens (the candidate
//!   nodes plus the root token),
//! * `D` autoregressive draft passes over `k` tokens each,
//! * one draft prefill pass over the accepted tokens.
//!
//! Draft passes start with an FC layer fusing `[embedding; hidden]` (`2h -> h`).
//! The context length `s_pre` is held fixed across the draft passes.

use std::fmt;
use std::io::Write;

use thiserror::Error;

use crate::config::{DeployConfig, ModelSpec};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("element or FLOP count overflows 128 bits")]
    Overflow,
    #[error("{0} must be >= 1")]
    NonPositive(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Fc,
    QkvProj,
    SelfAttention,
    OutProj,
    UpGateProj,
    DownProj,
    Residual,
    LayerNorm,
    Activation,
    LmHead,
}

impl OpKind {
    /// Canonical row order for breakdowns and CSV output.
    pub const ALL: [OpKind; 10] = [
        OpKind::Fc,
        OpKind::QkvProj,
        OpKind::SelfAttention,
        OpKind::OutProj,
        OpKind::UpGateProj,
        OpKind::DownProj,
        OpKind::Residual,
        OpKind::LayerNorm,
        OpKind::Activation,
        OpKind::LmHead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Fc => "FC",
            OpKind::QkvProj => "QKV_Proj",
            OpKind::SelfAttention => "Self_Attention",
            OpKind::OutProj => "Out_Proj",
            OpKind::UpGateProj => "UpGate_Proj",
            OpKind::DownProj => "Down_Proj",
            OpKind::Residual => "Residual",
            OpKind::LayerNorm => "LayerNorm",
            OpKind::Activation => "Activation",
            OpKind::LmHead => "LM_Head",
        }
    }

    /// Element-wise ops carry no counted FLOPs.
    pub fn is_elementwise(self) -> bool {
        matches!(self, OpKind::Residual | OpKind::LayerNorm | OpKind::Activation)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpCost {
    pub op: OpKind,
    pub flops: u128,
    pub read_elems: u128,
    pub write_elems: u128,
}

impl OpCost {
    fn zero(op: OpKind) -> Self {
        Self { op, flops: 0, read_elems: 0, write_elems: 0 }
    }
}

/// Per-op costs in [`OpKind::ALL`] order plus exact totals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadBreakdown {
    pub per_op: Vec<OpCost>,
    pub total_flops: u128,
    pub total_read: u128,
    pub total_write: u128,
    pub total_mem_elems: u128,
}

impl WorkloadBreakdown {
    pub fn from_ops(per_op: Vec<OpCost>) -> Result<Self, WorkloadError> {
        let mut total_flops = 0u128;
        let mut total_read = 0u128;
        let mut total_write = 0u128;
        for c in &per_op {
            total_flops = total_flops.checked_add(c.flops).ok_or(WorkloadError::Overflow)?;
            total_read = total_read.checked_add(c.read_elems).ok_or(WorkloadError::Overflow)?;
            total_write = total_write.checked_add(c.write_elems).ok_or(WorkloadError::Overflow)?;
        }
        Ok(Self {
            per_op,
            total_flops,
            total_read,
            total_write,
            total_mem_elems: total_read.checked_add(total_write).ok_or(WorkloadError::Overflow)?,
        })
    }

    fn empty() -> Self {
        Self::from_ops(OpKind::ALL.iter().map(|&op| OpCost::zero(op)).collect())
            .expect("zero totals")
    }

    pub fn get(&self, op: OpKind) -> Option<&OpCost> {
        self.per_op.iter().find(|c| c.op == op)
    }

    /// Op-wise sum of two breakdowns.
    pub fn combine(&self, other: &Self) -> Result<Self, WorkloadError> {
        let mut rows: Vec<OpCost> = OpKind::ALL.iter().map(|&op| OpCost::zero(op)).collect();
        for c in self.per_op.iter().chain(&other.per_op) {
            let slot = rows.iter_mut().find(|r| r.op == c.op).expect("canonical op");
            slot.flops = slot.flops.checked_add(c.flops).ok_or(WorkloadError::Overflow)?;
            slot.read_elems = slot.read_elems.checked_add(c.read_elems).ok_or(WorkloadError::Overflow)?;
            slot.write_elems = slot.write_elems.checked_add(c.write_elems).ok_or(WorkloadError::Overflow)?;
        }
        Self::from_ops(rows)
    }

    /// Every count multiplied by `n`.
    pub fn repeated(&self, n: u64) -> Result<Self, WorkloadError> {
        let n = n as u128;
        let rows = self
            .per_op
            .iter()
            .map(|c| {
                Ok(OpCost {
                    op: c.op,
                    flops: c.flops.checked_mul(n).ok_or(WorkloadError::Overflow)?,
                    read_elems: c.read_elems.checked_mul(n).ok_or(WorkloadError::Overflow)?,
                    write_elems: c.write_elems.checked_mul(n).ok_or(WorkloadError::Overflow)?,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_ops(rows)
    }

    /// CSV with header `op,flops,read_elems,write_elems`, one row per op.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "op,flops,read_elems,write_elems")?;
        for c in &self.per_op {
            writeln!(out, "{},{},{},{}", c.op, c.flops, c.read_elems, c.write_elems)?;
        }
        Ok(())
    }
}

/// Which forward pass of the cycle, with the number of tokens it processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassKind {
    TargetVerify { tokens: u64 },
    DraftDecodeStep { tokens: u64 },
    DraftPrefill { tokens: u64 },
}

impl PassKind {
    pub fn tokens(self) -> u64 {
        match self {
            PassKind::TargetVerify { tokens }
            | PassKind::DraftDecodeStep { tokens }
            | PassKind::DraftPrefill { tokens } => tokens,
        }
    }

    /// Verification covers every candidate node plus the root token.
    pub fn target_verify(deploy: &DeployConfig) -> Self {
        PassKind::TargetVerify { tokens: deploy.topk_paths + 1 }
    }

    pub fn draft_step(deploy: &DeployConfig) -> Self {
        PassKind::DraftDecodeStep { tokens: deploy.draft_tokens }
    }

    pub fn draft_prefill(deploy: &DeployConfig) -> Self {
        PassKind::DraftPrefill { tokens: prefill_tokens(deploy.accepted_tokens) }
    }
}

/// Accepted-token average rounded to a positive token count.
pub fn prefill_tokens(accepted: f64) -> u64 {
    if accepted.is_finite() && accepted >= 1.5 {
        accepted.round() as u64
    } else {
        1
    }
}

struct Checked;

impl Checked {
    fn mul(xs: &[u128]) -> Result<u128, WorkloadError> {
        xs.iter().try_fold(1u128, |acc, &x| acc.checked_mul(x)).ok_or(WorkloadError::Overflow)
    }

    fn add(xs: &[u128]) -> Result<u128, WorkloadError> {
        xs.iter().try_fold(0u128, |acc, &x| acc.checked_add(x)).ok_or(WorkloadError::Overflow)
    }
}

/// Costs of one forward pass over `s` new tokens per sequence with `s_pre`
/// cached tokens. Per-layer rows are multiplied by `layers`; the FC and
/// LM-head rows are counted once. Without `with_fc` the FC row is all zero.
pub fn op_costs(
    spec: &ModelSpec,
    b: u64,
    s: u64,
    s_pre: u64,
    with_fc: bool,
    layers: u64,
) -> Result<WorkloadBreakdown, WorkloadError> {
    for (name, v) in [("b", b), ("s", s), ("layers", layers)] {
        if v == 0 {
            return Err(WorkloadError::NonPositive(name));
        }
    }
    let (b, s, s_pre, l) = (b as u128, s as u128, s_pre as u128, layers as u128);
    let h = spec.hidden as u128;
    let hkv = spec.kv_dim as u128;
    let hm = spec.mlp_dim as u128;
    let v = spec.vocab as u128;
    let m = Checked::mul;
    let a = Checked::add;

    let bsh = m(&[b, s, h])?;
    let bs_hm = m(&[b, s, hm])?;
    let ctx = s + s_pre;
    let qkv_width = h + 2 * hkv;

    let per_layer = |op: OpKind, flops: u128, read: u128, write: u128| -> Result<OpCost, WorkloadError> {
        Ok(OpCost {
            op,
            flops: m(&[flops, l])?,
            read_elems: m(&[read, l])?,
            write_elems: m(&[write, l])?,
        })
    };

    let fc = if with_fc {
        OpCost {
            op: OpKind::Fc,
            flops: m(&[4, bsh, h])?,
            read_elems: a(&[m(&[2, bsh])?, m(&[2, h, h])?])?,
            write_elems: bsh,
        }
    } else {
        OpCost::zero(OpKind::Fc)
    };

    let rows = vec![
        fc,
        per_layer(
            OpKind::QkvProj,
            m(&[2, bsh, qkv_width])?,
            // weights plus bias: (h + 1) x (h + 2 h_kv)
            a(&[bsh, m(&[h + 1, qkv_width])?])?,
            m(&[b, s, qkv_width])?,
        )?,
        per_layer(
            OpKind::SelfAttention,
            m(&[4, bsh, ctx])?,
            a(&[bsh, m(&[2, b, ctx, hkv])?])?,
            bsh,
        )?,
        per_layer(OpKind::OutProj, m(&[2, bsh, h])?, a(&[bsh, m(&[h, h])?])?, bsh)?,
        per_layer(
            OpKind::UpGateProj,
            m(&[4, bsh, hm])?,
            m(&[2, a(&[bsh, m(&[h, hm])?])?])?,
            m(&[2, bs_hm])?,
        )?,
        per_layer(OpKind::DownProj, m(&[2, bsh, hm])?, a(&[bs_hm, m(&[h, hm])?])?, bsh)?,
        per_layer(OpKind::Residual, 0, m(&[4, bsh])?, m(&[2, bsh])?)?,
        per_layer(OpKind::LayerNorm, 0, m(&[2, a(&[h, bsh])?])?, m(&[2, bsh])?)?,
        per_layer(OpKind::Activation, 0, m(&[2, bs_hm])?, bs_hm)?,
        OpCost {
            op: OpKind::LmHead,
            flops: m(&[2, bsh, v])?,
            read_elems: a(&[bsh, m(&[h, v])?])?,
            write_elems: m(&[b, s, v])?,
        },
    ];
    WorkloadBreakdown::from_ops(rows)
}

/// One forward pass of the cycle under `deploy`'s batch and context length.
pub fn pass_workload(
    spec: &ModelSpec,
    deploy: &DeployConfig,
    pass: PassKind,
) -> Result<WorkloadBreakdown, WorkloadError> {
    let (with_fc, layers) = match pass {
        PassKind::TargetVerify { .. } => (false, spec.target_layers),
        PassKind::DraftDecodeStep { .. } | PassKind::DraftPrefill { .. } => (true, spec.draft_layers),
    };
    op_costs(spec, deploy.batch, pass.tokens(), deploy.prefill_len, with_fc, layers)
}

/// Verify pass + `D` draft steps + draft prefill.
pub fn cycle_workload(spec: &ModelSpec, deploy: &DeployConfig) -> Result<WorkloadBreakdown, WorkloadError> {
    let verify = pass_workload(spec, deploy, PassKind::target_verify(deploy))?;
    let drafting = pass_workload(spec, deploy, PassKind::draft_step(deploy))?.repeated(spec.draft_steps)?;
    let prefill = pass_workload(spec, deploy, PassKind::draft_prefill(deploy))?;
    WorkloadBreakdown::empty().combine(&verify)?.combine(&drafting)?.combine(&prefill)
}
