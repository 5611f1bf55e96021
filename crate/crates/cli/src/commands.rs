use std::fmt::{self, Write as _};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use specroof::roofline::{write_curve_csv, write_interplay_csv, InterplayError};
use specroof::sim::{run_decode, DecodeMode, SimError, ToyLm, TreeParams};
use specroof::{
    critical_intensity, cycle_workload, fit as fit_series, ingest_csv, interplay_sweep, load_deploy_config,
    load_hardware_spec, load_model_spec, plan_topk, roofline_point, throughput_curve, AcceptanceModel, DeployConfig,
    HardwareSpec, LawForm, ModelSpec, RooflinePoint, WorkloadError,
};

use crate::ranges::{parse_f64_list, parse_tokens, parse_u64_set};
use crate::{AnalyzeArgs, FitArgs, FitFormat, Format, Mode, PlanArgs, SimulateArgs, SweepArgs, SweepKind};

/// Marks failures of library invariants, reported with exit code 2.
#[derive(Debug)]
pub struct Internal(pub String);

impl fmt::Display for Internal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "internal invariant violated: {}", self.0)
    }
}

impl std::error::Error for Internal {}

fn workload_err(e: WorkloadError) -> anyhow::Error {
    match e {
        WorkloadError::Overflow => anyhow!(Internal(e.to_string())),
        other => anyhow!(other),
    }
}

fn sim_err(e: SimError) -> anyhow::Error {
    match e {
        SimError::EmptyResidual | SimError::ZeroDraftProb(_) => anyhow!(Internal(e.to_string())),
        other => anyhow!(other),
    }
}

fn interplay_err(e: InterplayError) -> anyhow::Error {
    match e {
        InterplayError::Workload(w) => workload_err(w),
        other => anyhow!(other),
    }
}

pub fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).context("cannot write to stdout")?;
            stdout.flush().context("cannot write to stdout")
        }
    }
}

fn model(path: &Path) -> Result<ModelSpec> {
    load_model_spec(path).with_context(|| format!("model config {}", path.display()))
}

fn hardware(path: &Path) -> Result<HardwareSpec> {
    load_hardware_spec(path).with_context(|| format!("hardware config {}", path.display()))
}

fn deploy(path: &Path) -> Result<DeployConfig> {
    load_deploy_config(path).with_context(|| format!("deploy config {}", path.display()))
}

fn acceptance(text: &str) -> Result<AcceptanceModel> {
    text.parse().with_context(|| format!("--acc-model `{text}`"))
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> String {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("reports are UTF-8")
}

pub fn analyze(a: &AnalyzeArgs) -> Result<String> {
    let spec = model(&a.model)?;
    let hw = hardware(&a.hardware)?;
    let d = deploy(&a.deploy)?;
    let acc = match &a.acc_model {
        Some(text) => acceptance(text)?,
        None => AcceptanceModel::Constant(d.accepted_tokens),
    };
    let effective = DeployConfig { accepted_tokens: acc.accepted_tokens(d.topk_paths), ..d };
    let w = cycle_workload(&spec, &effective).map_err(workload_err)?;
    let pt = roofline_point(&spec, &hw, &d, &acc).map_err(workload_err)?;

    let mut out = String::new();
    match a.format {
        Format::Csv => {
            out.push_str(&csv_bytes(|buf| w.write_csv(buf)));
            writeln!(out, "total,{},{},{}", w.total_flops, w.total_read, w.total_write)?;
            out.push('\n');
            out.push_str(&csv_bytes(|buf| write_curve_csv(std::slice::from_ref(&pt), buf)));
        }
        Format::Human => {
            writeln!(
                out,
                "cycle workload: b={} s_pre={} top_k={} k={} t_acc={} D={} ({acc})",
                d.batch, d.prefill_len, d.topk_paths, d.draft_tokens, pt.accepted_tokens, spec.draft_steps
            )?;
            writeln!(out, "{:<16}{:>24}{:>24}{:>24}", "op", "flops", "read_elems", "write_elems")?;
            for c in &w.per_op {
                writeln!(out, "{:<16}{:>24}{:>24}{:>24}", c.op.name(), c.flops, c.read_elems, c.write_elems)?;
            }
            writeln!(out, "{:<16}{:>24}{:>24}{:>24}", "total", w.total_flops, w.total_read, w.total_write)?;
            out.push('\n');
            write_point_human(&mut out, &pt, critical_intensity(&hw))?;
        }
    }
    Ok(out)
}

fn write_point_human(out: &mut String, pt: &RooflinePoint, crit: f64) -> fmt::Result {
    writeln!(out, "roofline")?;
    writeln!(out, "  intensity       {} FLOP/byte", pt.intensity)?;
    writeln!(out, "  critical        {} FLOP/byte", crit)?;
    writeln!(out, "  regime          {}", pt.regime)?;
    writeln!(out, "  compute_s       {}", pt.compute_s)?;
    writeln!(out, "  memory_s        {}", pt.memory_s)?;
    writeln!(out, "  latency_s       {}", pt.latency_s)?;
    writeln!(out, "  throughput_tps  {}", pt.throughput_tps)
}

pub const PLAN_CSV_HEADER: &str =
    "b,optimal_topk_real,optimal_topk_int,achieved_intensity,critical_intensity,throughput_tps,status";

pub fn plan(a: &PlanArgs) -> Result<String> {
    let spec = model(&a.model)?;
    let hw = hardware(&a.hardware)?;
    let acc = acceptance(&a.acc_model)?;
    let batches = match (&a.batch_list, a.batch) {
        (Some(list), _) => parse_u64_set(list).context("--batch-list")?,
        (None, Some(b)) => vec![b],
        (None, None) => unreachable!("clap requires one of the batch options"),
    };
    if a.draft_tokens == 0 {
        bail!("--draft-tokens must be >= 1");
    }
    let mut rows = Vec::with_capacity(batches.len());
    for &b in &batches {
        if b == 0 {
            bail!("batch sizes must be >= 1");
        }
        let template =
            DeployConfig { batch: b, prefill_len: a.prefill, topk_paths: 1, draft_tokens: a.draft_tokens, accepted_tokens: 1.0 };
        rows.push(plan_topk(&spec, &hw, &template, &acc).map_err(workload_err)?);
    }

    let mut out = String::new();
    match a.format {
        Format::Csv => {
            writeln!(out, "{PLAN_CSV_HEADER}")?;
            for r in &rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.batch,
                    r.optimal_topk_real,
                    r.optimal_topk_int,
                    r.achieved_intensity,
                    r.critical_intensity,
                    r.throughput_at_opt,
                    r.status.as_str()
                )?;
            }
        }
        Format::Human => {
            writeln!(out, "critical intensity {} FLOP/byte; s_pre={} k={} ({acc})", critical_intensity(&hw), a.prefill, a.draft_tokens)?;
            writeln!(out, "{:>6}{:>24}{:>10}{:>24}{:>24}  status", "b", "top_k (real)", "top_k", "intensity", "throughput_tps")?;
            for r in &rows {
                writeln!(
                    out,
                    "{:>6}{:>24}{:>10}{:>24}{:>24}  {}",
                    r.batch,
                    r.optimal_topk_real,
                    r.optimal_topk_int,
                    r.achieved_intensity,
                    r.throughput_at_opt,
                    r.status.as_str()
                )?;
            }
        }
    }
    Ok(out)
}

pub fn fit(a: &FitArgs) -> Result<String> {
    let form: LawForm = a.form.parse()?;
    let series = ingest_csv(&a.csv).with_context(|| format!("fit input {}", a.csv.display()))?;
    let result = fit_series(&series, form)?;
    let mut out = String::new();
    match a.format {
        FitFormat::Json => writeln!(out, "{}", result.to_json())?,
        FitFormat::Human => {
            writeln!(out, "form       {}", result.form.as_str())?;
            let params: Vec<String> = result.params.iter().map(|p| p.to_string()).collect();
            writeln!(out, "params     {}", params.join(" "))?;
            writeln!(out, "r_squared  {}", result.r_squared)?;
            writeln!(out, "n_points   {}", result.n_points)?;
            writeln!(out, "converged  {}", result.converged)?;
        }
    }
    Ok(out)
}

pub fn simulate(a: &SimulateArgs) -> Result<String> {
    let load = |p: &Path| ToyLm::load(p).with_context(|| format!("toy model {}", p.display()));
    let target = load(&a.target)?;
    let draft = load(&a.draft)?;
    let prefix = parse_tokens(&a.prefix)?;
    let params = TreeParams { top_c: a.topc, depth: a.depth, budget: a.budget };
    let mode = match a.mode {
        Mode::Greedy => DecodeMode::Greedy,
        Mode::Sampled => DecodeMode::Sampled,
    };
    let run = run_decode(&target, &draft, &prefix, a.cycles, params, mode, a.seed).map_err(sim_err)?;
    let cycles = csv_bytes(|buf| run.write_cycle_csv(buf));
    let mut out = String::new();
    match a.format {
        Format::Csv => out.push_str(&cycles),
        Format::Human => {
            writeln!(out, "acceptance_rate {}", run.acceptance_rate)?;
            writeln!(out, "cycles          {}", run.per_cycle.len())?;
            let toks: Vec<String> = run.tokens.iter().map(|t| t.to_string()).collect();
            writeln!(out, "tokens          {}", toks.join(" "))?;
            out.push('\n');
            out.push_str(&cycles);
        }
    }
    Ok(out)
}

pub fn sweep(a: &SweepArgs) -> Result<String> {
    let spec = model(&a.model)?;
    let hw = hardware(&a.hardware)?;
    let mut template = match &a.deploy {
        Some(p) => deploy(p)?,
        None => DeployConfig { batch: 1, prefill_len: 0, topk_paths: 1, draft_tokens: 10, accepted_tokens: 1.0 },
    };
    if let Some(s) = a.prefill {
        template.prefill_len = s;
    }
    if let Some(k) = a.draft_tokens {
        if k == 0 {
            bail!("--draft-tokens must be >= 1");
        }
        template.draft_tokens = k;
    }
    let batches = match &a.batch {
        Some(list) => parse_u64_set(list).context("--batch")?,
        None => vec![template.batch],
    };
    if batches.contains(&0) {
        bail!("batch sizes must be >= 1");
    }
    let topks = parse_u64_set(&a.topk).context("--topk")?;

    match a.what {
        SweepKind::TopkCurve => {
            let acc = match (&a.acc_model, &a.deploy) {
                (Some(text), _) => acceptance(text)?,
                (None, Some(_)) => AcceptanceModel::Constant(template.accepted_tokens),
                (None, None) => AcceptanceModel::saturating(1.0)?,
            };
            let mut points = Vec::with_capacity(batches.len() * topks.len());
            for &b in &batches {
                let curve = throughput_curve(&spec, &hw, &template.with_batch(b), &acc, &topks).map_err(workload_err)?;
                points.extend(curve);
            }
            Ok(csv_bytes(|buf| write_curve_csv(&points, buf)))
        }
        SweepKind::Interplay => {
            if a.acc_model.is_some() {
                bail!("--acc-model does not apply to the interplay sweep; use --kappa");
            }
            let scales = parse_f64_list(&a.kappa).context("--kappa")?;
            let rows = interplay_sweep(&spec, &hw, &template, &batches, &scales, &topks).map_err(interplay_err)?;
            Ok(csv_bytes(|buf| write_interplay_csv(&rows, buf)))
        }
    }
}
