//! Roofline analysis of a full draft-and-verify cycle.
//!
//! Latency is the roofline bound `max(FLOPs / P_peak, bytes / B_mem)` over
//! the whole cycle and throughput is `b * t_acc / latency`. The planner looks
//! for the tree size at which the cycle's arithmetic intensity reaches the
//! hardware's critical intensity `P_peak / B_mem`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use thiserror::Error;

use crate::config::{DeployConfig, HardwareSpec, ModelSpec};
use crate::workload::{cycle_workload, WorkloadError};

/// Upper bound on tree sizes the planner will consider.
pub const MAX_PLAN_TOPK: u64 = 1 << 20;

/// Relative bracket width at which the crossing bisection stops.
pub const PLAN_REL_TOL: f64 = 1e-9;

/// Stated validity range of the saturating acceptance curve's scale factor.
pub const SCALE_RANGE: (f64, f64) = (0.9, 1.2);

pub const CURVE_CSV_HEADER: &str = "b,top_k,intensity,regime,latency_s,throughput_tps";
pub const INTERPLAY_CSV_HEADER: &str = "b,kappa,argmax_top_k,max_throughput_tps";

#[derive(Debug, Error, PartialEq)]
pub enum AcceptanceError {
    #[error("scale factor {0} outside [0.9, 1.2]")]
    ScaleOutOfRange(f64),
    #[error("constant acceptance must be finite and > 0, got {0}")]
    BadConstant(f64),
    #[error("expected `const:<tokens>` or `eq8:<scale>`, got `{0}`")]
    Syntax(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    MemoryBound,
    ComputeBound,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::MemoryBound => "memory-bound",
            Regime::ComputeBound => "compute-bound",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How many tokens a cycle commits as a function of the tree size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AcceptanceModel {
    /// Fixed, measured average.
    Constant(f64),
    /// `t_acc(top_k) = 6 - 6.25 * (0.2 * scale)^(top_k / 30)`, clamped to
    /// `[0, top_k + 1]`.
    Saturating { scale: f64 },
}

impl AcceptanceModel {
    pub fn constant(tokens: f64) -> Result<Self, AcceptanceError> {
        if tokens.is_finite() && tokens > 0.0 {
            Ok(Self::Constant(tokens))
        } else {
            Err(AcceptanceError::BadConstant(tokens))
        }
    }

    pub fn saturating(scale: f64) -> Result<Self, AcceptanceError> {
        if (SCALE_RANGE.0..=SCALE_RANGE.1).contains(&scale) {
            Ok(Self::Saturating { scale })
        } else {
            Err(AcceptanceError::ScaleOutOfRange(scale))
        }
    }

    pub fn accepted_tokens(&self, top_k: u64) -> f64 {
        match *self {
            AcceptanceModel::Constant(t) => t,
            AcceptanceModel::Saturating { scale } => {
                saturating_acceptance(top_k as f64, scale).clamp(0.0, top_k as f64 + 1.0)
            }
        }
    }
}

/// Unclamped saturating acceptance curve.
pub fn saturating_acceptance(top_k: f64, scale: f64) -> f64 {
    6.0 - 6.25 * (0.2 * scale).powf(top_k / 30.0)
}

impl FromStr for AcceptanceModel {
    type Err = AcceptanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || AcceptanceError::Syntax(s.to_string());
        let (kind, value) = s.split_once(':').ok_or_else(syntax)?;
        let value: f64 = value.trim().parse().map_err(|_| syntax())?;
        match kind.trim() {
            "const" => Self::constant(value),
            "eq8" => Self::saturating(value),
            _ => Err(syntax()),
        }
    }
}

impl fmt::Display for AcceptanceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AcceptanceModel::Constant(t) => write!(f, "const:{t}"),
            AcceptanceModel::Saturating { scale } => write!(f, "eq8:{scale}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RooflinePoint {
    pub batch: u64,
    pub top_k: u64,
    pub accepted_tokens: f64,
    pub flops: f64,
    pub bytes: f64,
    pub intensity: f64,
    pub regime: Regime,
    pub compute_s: f64,
    pub memory_s: f64,
    pub latency_s: f64,
    pub throughput_tps: f64,
}

impl RooflinePoint {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.batch, self.top_k, self.intensity, self.regime, self.latency_s, self.throughput_tps
        )
    }
}

pub fn write_curve_csv<W: Write>(points: &[RooflinePoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CURVE_CSV_HEADER}")?;
    for p in points {
        writeln!(out, "{}", p.csv_row())?;
    }
    Ok(())
}

pub fn critical_intensity(hw: &HardwareSpec) -> f64 {
    hw.peak_flops / hw.mem_bandwidth
}

/// FLOPs per byte moved over one cycle, with `deploy.accepted_tokens`
/// driving the draft prefill size.
pub fn intensity(spec: &ModelSpec, hw: &HardwareSpec, deploy: &DeployConfig) -> Result<f64, WorkloadError> {
    let (flops, bytes) = cycle_cost(spec, hw, deploy)?;
    Ok(flops / bytes)
}

fn cycle_cost(spec: &ModelSpec, hw: &HardwareSpec, deploy: &DeployConfig) -> Result<(f64, f64), WorkloadError> {
    let w = cycle_workload(spec, deploy)?;
    Ok((w.total_flops as f64, w.total_mem_elems as f64 * hw.dtype_bytes))
}

fn effective_deploy(deploy: &DeployConfig, acc: &AcceptanceModel) -> DeployConfig {
    DeployConfig {
        accepted_tokens: acc.accepted_tokens(deploy.topk_paths),
        ..*deploy
    }
}

/// Roofline evaluation of one cycle. The acceptance model overrides
/// `deploy.accepted_tokens`.
pub fn roofline_point(
    spec: &ModelSpec,
    hw: &HardwareSpec,
    deploy: &DeployConfig,
    acc: &AcceptanceModel,
) -> Result<RooflinePoint, WorkloadError> {
    let deploy = effective_deploy(deploy, acc);
    let (flops, bytes) = cycle_cost(spec, hw, &deploy)?;
    let intensity = flops / bytes;
    let compute_s = flops / hw.peak_flops;
    let memory_s = bytes / hw.mem_bandwidth;
    let regime = if intensity < critical_intensity(hw) {
        Regime::MemoryBound
    } else {
        Regime::ComputeBound
    };
    let latency_s = compute_s.max(memory_s);
    Ok(RooflinePoint {
        batch: deploy.batch,
        top_k: deploy.topk_paths,
        accepted_tokens: deploy.accepted_tokens,
        flops,
        bytes,
        intensity,
        regime,
        compute_s,
        memory_s,
        latency_s,
        throughput_tps: deploy.batch as f64 * deploy.accepted_tokens / latency_s,
    })
}

/// One roofline point per tree size, in the order given.
pub fn throughput_curve(
    spec: &ModelSpec,
    hw: &HardwareSpec,
    template: &DeployConfig,
    acc: &AcceptanceModel,
    topks: &[u64],
) -> Result<Vec<RooflinePoint>, WorkloadError> {
    topks
        .iter()
        .map(|&k| roofline_point(spec, hw, &template.with_topk(k), acc))
        .collect()
}

/// Highest-throughput point of a curve; ties go to the smaller tree.
pub fn argmax_throughput(points: &[RooflinePoint]) -> Option<&RooflinePoint> {
    points.iter().fold(None, |best: Option<&RooflinePoint>, p| match best {
        Some(b) if b.throughput_tps >= p.throughput_tps => Some(b),
        _ => Some(p),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStatus {
    /// Intensity crosses the critical value inside the searched range.
    Crossing,
    /// Already compute-bound with a single candidate; recommends `top_k = 1`.
    AlreadyComputeBound,
    /// Never reaches the critical intensity up to [`MAX_PLAN_TOPK`].
    NoRoot,
}

impl PlanStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanStatus::Crossing => "ok",
            PlanStatus::AlreadyComputeBound => "already-compute-bound",
            PlanStatus::NoRoot => "no-root",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanResult {
    pub batch: u64,
    /// Real-relaxed tree size at which intensity equals the critical value.
    pub optimal_topk_real: f64,
    /// Largest integer tree size that is not compute-bound.
    pub optimal_topk_int: u64,
    pub achieved_intensity: f64,
    pub critical_intensity: f64,
    /// Roofline throughput at `optimal_topk_int`.
    pub throughput_at_opt: f64,
    pub status: PlanStatus,
}

/// Tree size that puts the cycle at the roofline knee for `template`'s batch
/// and context length (`template.topk_paths` is ignored).
///
/// Between integer tree sizes the cycle's FLOPs and bytes are interpolated
/// linearly, and the crossing is located by bisection.
pub fn plan_topk(
    spec: &ModelSpec,
    hw: &HardwareSpec,
    template: &DeployConfig,
    acc: &AcceptanceModel,
) -> Result<PlanResult, WorkloadError> {
    let crit = critical_intensity(hw);
    let cost = |k: u64| cycle_cost(spec, hw, &effective_deploy(&template.with_topk(k), acc));
    let at = |k: u64| -> Result<f64, WorkloadError> {
        let (f, b) = cost(k)?;
        Ok(f / b)
    };
    let finish = |k: u64, real: f64, achieved: f64, status| -> Result<PlanResult, WorkloadError> {
        Ok(PlanResult {
            batch: template.batch,
            optimal_topk_real: real,
            optimal_topk_int: k,
            achieved_intensity: achieved,
            critical_intensity: crit,
            throughput_at_opt: roofline_point(spec, hw, &template.with_topk(k), acc)?.throughput_tps,
            status,
        })
    };

    let i1 = at(1)?;
    if i1 >= crit {
        return finish(1, 1.0, i1, PlanStatus::AlreadyComputeBound);
    }

    // Bracket the crossing between powers of two.
    let mut lo = 1u64;
    let mut hi = 2u64;
    loop {
        if at(hi)? > crit {
            break;
        }
        if hi == MAX_PLAN_TOPK {
            let i = at(hi)?;
            return finish(hi, hi as f64, i, PlanStatus::NoRoot);
        }
        lo = hi;
        hi = (hi * 2).min(MAX_PLAN_TOPK);
    }
    // Largest integer with I <= I_crit.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if at(mid)? <= crit {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let (f0, b0) = cost(lo)?;
    let (f1, b1) = cost(lo + 1)?;
    let interp = |x: f64| {
        let t = x - lo as f64;
        (f0 + t * (f1 - f0)) / (b0 + t * (b1 - b0))
    };
    let (mut a, mut z) = (lo as f64, lo as f64 + 1.0);
    if interp(a) == crit {
        return finish(lo, a, crit, PlanStatus::Crossing);
    }
    while z - a > PLAN_REL_TOL * a {
        let mid = 0.5 * (a + z);
        if interp(mid) <= crit {
            a = mid;
        } else {
            z = mid;
        }
    }
    let root = 0.5 * (a + z);
    finish(lo, root, interp(root), PlanStatus::Crossing)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterplayRow {
    pub batch: u64,
    pub scale: f64,
    pub argmax_topk: u64,
    pub max_throughput: f64,
}

impl InterplayRow {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.batch, self.scale, self.argmax_topk, self.max_throughput)
    }
}

pub fn write_interplay_csv<W: Write>(rows: &[InterplayRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{INTERPLAY_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Throughput argmax over `topks` for every `(batch, scale)` pair under the
/// saturating acceptance curve, batch-major.
pub fn interplay_sweep(
    spec: &ModelSpec,
    hw: &HardwareSpec,
    template: &DeployConfig,
    batches: &[u64],
    scales: &[f64],
    topks: &[u64],
) -> Result<Vec<InterplayRow>, InterplayError> {
    let mut rows = Vec::with_capacity(batches.len() * scales.len());
    for &b in batches {
        for &scale in scales {
            let acc = AcceptanceModel::saturating(scale)?;
            let curve = throughput_curve(spec, hw, &template.with_batch(b), &acc, topks)?;
            let best = argmax_throughput(&curve).ok_or(InterplayError::EmptyRange)?;
            rows.push(InterplayRow {
                batch: b,
                scale,
                argmax_topk: best.top_k,
                max_throughput: best.throughput_tps,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Error, PartialEq)]
pub enum InterplayError {
    #[error(transparent)]
    Acceptance(#[from] AcceptanceError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("empty top_k range")]
    EmptyRange,
}
