mod common;

use common::{large, tiny, Dims};
use proptest::prelude::*;
use specroof::roofline::PLAN_REL_TOL;
use specroof::workload::prefill_tokens;
use specroof::{
    argmax_throughput, critical_intensity, intensity, plan_topk, roofline_point, throughput_curve, AcceptanceModel,
    DeployConfig, HardwareSpec, ModelSpec, PlanStatus, Regime,
};

fn deploy(b: u64, s_pre: u64) -> DeployConfig {
    DeployConfig { batch: b, prefill_len: s_pre, topk_paths: 1, draft_tokens: 2, accepted_tokens: 2.0 }
}

/// Intensity from the printed closed forms, prefill sized by the model.
fn oracle_intensity(spec: &ModelSpec, d: &DeployConfig, acc: &AcceptanceModel, dtype: f64) -> f64 {
    let dims = Dims::of(spec, d.batch, d.prefill_len);
    let v = dims.target(d.topk_paths as u128 + 1);
    let s = dims.draft(d.draft_tokens as u128);
    let p = dims.draft(prefill_tokens(acc.accepted_tokens(d.topk_paths)) as u128);
    let n = spec.draft_steps as u128;
    let flops = v.flops + n * s.flops + p.flops;
    let mem = v.read + v.write + n * (s.read + s.write) + p.read + p.write;
    flops as f64 / (mem as f64 * dtype)
}

#[test]
fn critical_intensity_is_the_ratio() {
    assert_eq!(critical_intensity(&HardwareSpec::new(400.0, 100.0)), 4.0);
    assert_eq!(critical_intensity(&HardwareSpec::new(7.0, 7.0)), 1.0);
    assert!((critical_intensity(&HardwareSpec::new(9.89e14, 3.35e12)) - 295.2).abs() < 0.05);
}

#[test]
fn intensity_matches_closed_form_oracle() {
    let acc = AcceptanceModel::saturating(1.0).unwrap();
    for spec in [tiny(), large()] {
        for b in [1, 3, 16] {
            for top_k in [0, 1, 7, 60] {
                let d = deploy(b, 100).with_topk(top_k);
                for dtype in [1.0, 2.0] {
                    let hw = HardwareSpec { dtype_bytes: dtype, ..HardwareSpec::new(1.0, 1.0) };
                    let got = roofline_point(&spec, &hw, &d, &acc).unwrap().intensity;
                    let want = oracle_intensity(&spec, &d, &acc, dtype);
                    assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
                }
            }
        }
    }
}

#[test]
fn doubling_dtype_halves_intensity() {
    let d = deploy(4, 32).with_topk(9);
    let one = intensity(&tiny(), &HardwareSpec { dtype_bytes: 1.0, ..HardwareSpec::new(1.0, 1.0) }, &d).unwrap();
    let two = intensity(&tiny(), &HardwareSpec::new(1.0, 1.0), &d).unwrap();
    assert_eq!(one, 2.0 * two);
}

#[test]
fn intensity_strictly_increases_in_topk_and_not_in_batch() {
    let hw = HardwareSpec::new(1.0, 1.0);
    for acc in [AcceptanceModel::Constant(2.0), AcceptanceModel::saturating(1.0).unwrap()] {
        for b in [1u64, 2, 4, 8, 16, 32, 64] {
            for s_pre in [0u64, 50] {
                let t = |b: u64, k: u64| roofline_point(&tiny(), &hw, &deploy(b, s_pre).with_topk(k), &acc).unwrap().intensity;
                for k in 0..=64 {
                    assert!(t(b, k + 1) > t(b, k), "b={b} k={k}");
                    assert!(t(b + 1, k) >= t(b, k), "b={b} k={k}");
                }
            }
        }
    }
}

#[test]
fn latency_is_the_slower_side() {
    let acc = AcceptanceModel::saturating(1.1).unwrap();
    for (p, bw) in [(100.0, 10.0), (1e3, 1.0), (1e14, 1e12)] {
        let hw = HardwareSpec::new(p, bw);
        for k in [1, 10, 100, 1000] {
            let pt = roofline_point(&tiny(), &hw, &deploy(2, 8).with_topk(k), &acc).unwrap();
            assert_eq!(pt.latency_s, (pt.flops / p).max(pt.bytes / bw));
            assert_eq!(pt.regime == Regime::MemoryBound, pt.intensity < critical_intensity(&hw));
            assert_eq!(pt.regime == Regime::MemoryBound, pt.memory_s > pt.compute_s);
            assert!((pt.throughput_tps - 2.0 * pt.accepted_tokens / pt.latency_s).abs() <= 1e-12 * pt.throughput_tps);
        }
    }
}

#[test]
fn at_the_knee_both_sides_agree() {
    let acc = AcceptanceModel::Constant(2.0);
    let d = deploy(1, 0).with_topk(8);
    let i = intensity(&tiny(), &HardwareSpec::new(1.0, 1.0), &d).unwrap();
    let hw = HardwareSpec::new(i * 1e12, 1e12);
    let pt = roofline_point(&tiny(), &hw, &d, &acc).unwrap();
    assert!((pt.compute_s - pt.memory_s).abs() <= 1e-12 * pt.memory_s);
}

#[test]
fn planner_hits_a_constructed_root() {
    let acc = AcceptanceModel::Constant(2.0);
    let template = deploy(1, 0);
    let i8 = intensity(&tiny(), &HardwareSpec::new(1.0, 1.0), &template.with_topk(8)).unwrap();
    let plan = plan_topk(&tiny(), &HardwareSpec::new(i8, 1.0), &template, &acc).unwrap();
    assert_eq!(plan.status, PlanStatus::Crossing);
    assert!((plan.optimal_topk_real - 8.0).abs() <= 1e-6, "{}", plan.optimal_topk_real);
    assert_eq!(plan.optimal_topk_int, 8);
}

#[test]
fn planner_root_brackets_integer_recommendation() {
    let acc = AcceptanceModel::saturating(1.0).unwrap();
    let hw = HardwareSpec::new(9.89e14, 3.35e12);
    let spec = large();
    let crit = critical_intensity(&hw);
    for b in [1u64, 2, 4, 8, 16, 32, 64] {
        let t = deploy(b, 10_000).with_topk(1);
        let t = DeployConfig { draft_tokens: 10, ..t };
        let plan = plan_topk(&spec, &hw, &t, &acc).unwrap();
        assert_eq!(plan.status, PlanStatus::Crossing);
        assert!(((plan.achieved_intensity - crit) / crit).abs() <= 1e-6);
        assert_eq!(plan.optimal_topk_int, plan.optimal_topk_real.floor() as u64);
        let at = |k| intensity(&spec, &hw, &DeployConfig { accepted_tokens: acc.accepted_tokens(k), ..t.with_topk(k) }).unwrap();
        assert!(at(plan.optimal_topk_int) <= crit && at(plan.optimal_topk_int + 1) > crit);
        const { assert!(PLAN_REL_TOL <= 1e-9) };
    }
}

#[test]
fn planner_flags_degenerate_configs() {
    let acc = AcceptanceModel::Constant(1.0);
    let plan = plan_topk(&tiny(), &HardwareSpec::new(1e-3, 1.0), &deploy(1, 0), &acc).unwrap();
    assert_eq!((plan.status, plan.optimal_topk_int), (PlanStatus::AlreadyComputeBound, 1));
    let plan = plan_topk(&tiny(), &HardwareSpec::new(1e12, 1.0), &deploy(1, 0), &acc).unwrap();
    assert_eq!((plan.status, plan.optimal_topk_int), (PlanStatus::NoRoot, 1 << 20));
}

#[test]
fn planner_decreases_with_batch_on_tiny_spec() {
    let acc = AcceptanceModel::saturating(1.0).unwrap();
    let template = deploy(1, 16);
    let crit = roofline_point(&tiny(), &HardwareSpec::new(1.0, 1.0), &template.with_topk(200), &acc).unwrap().intensity;
    let hw = HardwareSpec::new(crit, 1.0);
    let mut last = f64::INFINITY;
    for b in [1u64, 2, 4, 8, 16, 32, 64] {
        let plan = plan_topk(&tiny(), &hw, &template.with_batch(b), &acc).unwrap();
        assert_eq!(plan.status, PlanStatus::Crossing);
        assert!(plan.optimal_topk_real < last, "b={b}");
        last = plan.optimal_topk_real;
    }
}

#[test]
fn tiny_spec_argmax_sits_at_the_crossing() {
    let acc = AcceptanceModel::saturating(1.0).unwrap();
    let template = deploy(1, 0);
    let unit = HardwareSpec::new(1.0, 1.0);
    let at = |k| roofline_point(&tiny(), &unit, &template.with_topk(k), &acc).unwrap().intensity;
    let hw = HardwareSpec::new(0.5 * (at(10) + at(11)), 1.0);
    let plan = plan_topk(&tiny(), &hw, &template, &acc).unwrap();
    let topks: Vec<u64> = (1..=256).collect();
    let curve = throughput_curve(&tiny(), &hw, &template, &acc, &topks).unwrap();
    let best = argmax_throughput(&curve).unwrap().top_k as f64;
    assert!((best - plan.optimal_topk_real).abs() <= 2.0, "argmax {best} vs root {}", plan.optimal_topk_real);
}

#[test]
fn large_model_collapses_past_sixteen_at_batch_64() {
    let hw = HardwareSpec::new(9.89e14, 3.35e12);
    let template = DeployConfig { batch: 64, prefill_len: 10_000, topk_paths: 1, draft_tokens: 10, accepted_tokens: 1.0 };
    let topks: Vec<u64> = (1..=128).collect();
    for scale in [0.9, 1.0, 1.1, 1.2] {
        let acc = AcceptanceModel::saturating(scale).unwrap();
        let curve = throughput_curve(&large(), &hw, &template, &acc, &topks).unwrap();
        assert!(argmax_throughput(&curve).unwrap().top_k <= 16);
    }
}

#[test]
fn single_point_curve_is_the_point() {
    let acc = AcceptanceModel::saturating(1.0).unwrap();
    let hw = HardwareSpec::new(100.0, 3.0);
    let curve = throughput_curve(&tiny(), &hw, &deploy(2, 3), &acc, &[12]).unwrap();
    assert_eq!(curve, vec![roofline_point(&tiny(), &hw, &deploy(2, 3).with_topk(12), &acc).unwrap()]);
}

#[test]
fn constant_acceptance_throughput_falls_once_compute_bound() {
    let acc = AcceptanceModel::Constant(3.0);
    let knee = intensity(&tiny(), &HardwareSpec::new(1.0, 1.0), &deploy(4, 0).with_topk(100)).unwrap();
    let hw = HardwareSpec::new(knee, 1.0);
    let topks: Vec<u64> = (0..=300).collect();
    let curve = throughput_curve(&tiny(), &hw, &deploy(4, 0), &acc, &topks).unwrap();
    let first = curve.iter().position(|p| p.regime == Regime::ComputeBound).expect("regime flips");
    for w in curve[first..].windows(2) {
        assert!(w[1].throughput_tps <= w[0].throughput_tps);
    }
}

#[test]
fn saturating_spot_values() {
    let acc = AcceptanceModel::saturating(1.0).unwrap();
    assert!((acc.accepted_tokens(30) - 4.75).abs() < 1e-12);
    assert!((acc.accepted_tokens(100_000) - 6.0).abs() < 1e-12);
    assert_eq!(acc.accepted_tokens(0), 0.0);
}

proptest! {
    #[test]
    fn regime_latency_and_intensity_agree(
        p in 1.0f64..1e15, bw in 1.0f64..1e13, b in 1u64..64, k in 0u64..512, s_pre in 0u64..4096, scale in 0.9f64..=1.2,
    ) {
        let hw = HardwareSpec::new(p, bw);
        let pt = roofline_point(&large(), &hw, &deploy(b, s_pre).with_topk(k), &AcceptanceModel::saturating(scale).unwrap()).unwrap();
        let memory_side = pt.memory_s >= pt.compute_s;
        prop_assert!(pt.latency_s > 0.0);
        prop_assert_eq!(pt.regime == Regime::MemoryBound, pt.intensity < critical_intensity(&hw));
        if pt.regime == Regime::ComputeBound {
            prop_assert!(pt.compute_s >= pt.memory_s * (1.0 - 1e-12));
        } else {
            prop_assert!(memory_side || (pt.compute_s - pt.memory_s).abs() <= 1e-12 * pt.memory_s);
        }
    }
}
