//! Independent oracles shared by the integration suites. Nothing here calls
//! the library's accounting code.

#![allow(dead_code)]

use specroof::sim::{DraftTree, ToyLm, Token};
use specroof::ModelSpec;

pub fn tiny() -> ModelSpec {
    ModelSpec { hidden: 4, kv_dim: 2, mlp_dim: 8, target_layers: 1, vocab: 10, draft_layers: 1, draft_steps: 1, num_heads: 2 }
}

pub fn large() -> ModelSpec {
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

/// Printed closed forms for one pass over `s` tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Totals {
    pub flops: u128,
    pub read: u128,
    pub write: u128,
}

pub struct Dims {
    pub b: u128,
    pub s_pre: u128,
    pub h: u128,
    pub h_kv: u128,
    pub h_mlp: u128,
    pub v: u128,
    pub l: u128,
}

impl Dims {
    pub fn of(spec: &ModelSpec, b: u64, s_pre: u64) -> Self {
        Dims {
            b: b as u128,
            s_pre: s_pre as u128,
            h: spec.hidden as u128,
            h_kv: spec.kv_dim as u128,
            h_mlp: spec.mlp_dim as u128,
            v: spec.vocab as u128,
            l: spec.target_layers as u128,
        }
    }

    pub fn target(&self, s: u128) -> Totals {
        let Dims { b, s_pre, h, h_kv, h_mlp, v, l } = *self;
        Totals {
            flops: 2 * b * s * h * (v + l * (2 * h + 2 * s + 2 * s_pre + 2 * h_kv + 3 * h_mlp)),
            read: l
                * (11 * b * s * h
                    + 2 * b * (s + s_pre) * h_kv
                    + 3 * b * s * h_mlp
                    + 2 * h * h
                    + 2 * h * h_kv
                    + 3 * h * h_mlp
                    + 3 * h
                    + 2 * h_kv)
                + b * s * h
                + h * v,
            write: l * (8 * b * s * h + 2 * b * s * h_kv + 3 * b * s * h_mlp) + b * s * v,
        }
    }

    /// Single-layer draft pass with the fusion layer.
    pub fn draft(&self, s: u128) -> Totals {
        let Dims { b, s_pre, h, h_kv, h_mlp, v, .. } = *self;
        Totals {
            flops: 2 * b * s * h * (v + 4 * h + 2 * s + 2 * s_pre + 2 * h_kv + 3 * h_mlp),
            read: 13 * b * s * h
                + 2 * b * (s + s_pre) * h_kv
                + 3 * b * s * h_mlp
                + 4 * h * h
                + 2 * h * h_kv
                + 3 * h * h_mlp
                + 3 * h
                + 2 * h_kv
                + b * s * h
                + h * v,
            write: b * s * (9 * h + 2 * h_kv + 3 * h_mlp + v),
        }
    }

    /// The printed cycle summary, five drafting steps hardcoded.
    pub fn summary_d5(&self, top_k: u128, k: u128, t_acc: u128) -> Totals {
        let Dims { b, s_pre, h, h_kv, h_mlp, v, l } = *self;
        let s = top_k + 1;
        let flops = 2 * b * s * h * (v + l * (2 * h + 2 * s + 2 * s_pre + 2 * h_kv + 3 * h_mlp))
            + 5 * 2 * b * k * h * (v + 4 * h + 2 * k + 2 * s_pre + 2 * h_kv + 3 * h_mlp)
            + 2 * b * t_acc * h * (v + 4 * h + 2 * t_acc + 2 * s_pre + 2 * h_kv + 3 * h_mlp);
        let draft_read = |n: u128| {
            13 * b * n * h
                + 2 * b * (n + s_pre) * h_kv
                + 3 * b * n * h_mlp
                + 4 * h * h
                + 2 * h * h_kv
                + 3 * h * h_mlp
                + 3 * h
                + 2 * h_kv
                + b * n * h
                + h * v
        };
        let read = draft_read(t_acc)
            + 5 * draft_read(k)
            + l * (11 * b * s * h
                + 2 * b * (s + s_pre) * h_kv
                + 3 * b * s * h_mlp
                + 2 * h * h
                + 2 * h * h_kv
                + 3 * h * h_mlp
                + 3 * h
                + 2 * h_kv)
            + b * s * h
            + h * v;
        let write = b * t_acc * (9 * h + 2 * h_kv + 3 * h_mlp + v)
            + 5 * b * k * (9 * h + 2 * h_kv + 3 * h_mlp + v)
            + b * s * (l * (8 * h + 2 * h_kv + 3 * h_mlp) + v);
        Totals { flops, read, write }
    }
}

/// Ancestor closure by walking parent links from every node.
pub fn ancestor_closure(tree: &DraftTree) -> Vec<Vec<bool>> {
    let n = tree.len();
    let mut m = vec![vec![false; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        let mut cur = Some(i);
        while let Some(c) = cur {
            row[c] = true;
            cur = tree.node(c).parent;
        }
    }
    m
}

pub fn target_argmax(dist: &[f64]) -> Token {
    let mut best = 0;
    for i in 1..dist.len() {
        if dist[i] > dist[best] {
            best = i;
        }
    }
    best
}

/// Pure target greedy decoding.
pub fn greedy_continuation(lm: &ToyLm, prefix: &[Token], n: usize) -> Vec<Token> {
    let mut hist = prefix.to_vec();
    for _ in 0..n {
        let t = target_argmax(lm.dist(&hist));
        hist.push(t);
    }
    hist.split_off(prefix.len())
}

/// Exact probability of every length-`n` continuation under `lm`, indexed
/// by the base-`vocab` encoding of the tokens.
pub fn exact_sequence_dist(lm: &ToyLm, prefix: &[Token], n: usize) -> Vec<f64> {
    let v = lm.vocab();
    let mut out = vec![0.0; v.pow(n as u32)];
    for (code, slot) in out.iter_mut().enumerate() {
        let mut toks = vec![0; n];
        let mut c = code;
        for t in toks.iter_mut().rev() {
            *t = c % v;
            c /= v;
        }
        let mut hist = prefix.to_vec();
        let mut p = 1.0;
        for &t in &toks {
            p *= lm.dist(&hist)[t];
            hist.push(t);
        }
        *slot = p;
    }
    out
}

pub fn encode(tokens: &[Token], vocab: usize) -> usize {
    tokens.iter().fold(0, |acc, &t| acc * vocab + t)
}

pub fn tvd(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
