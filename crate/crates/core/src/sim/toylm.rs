//! Fixed-order Markov language model with an explicit probability table.
//!
//! File format:
//!
//! ```text
//! vocab=3 order=1
//! ^ : 0.5 0.25 0.25
//! 0 : 0.1 0.8 0.1
//! 1 : 1 0 0
//! 2 : 0.2 0.2 0.6
//! ```
//!
//! Each row maps a context of exactly `order` tokens to the next-token
//! distribution. `^` is the begin token used to left-pad histories shorter
//! than `order`; it only ever appears as a prefix of a context. `#` starts a
//! comment.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use super::{rng_from_seed, SimError, Token};

pub const MAX_VOCAB: usize = 16;

const ROW_TOLERANCE: f64 = 1e-12;
const MAX_DENSE_ENTRIES: usize = 1 << 24;
const BEGIN_MARK: &str = "^";

#[derive(Debug, Clone, PartialEq)]
pub struct ToyLm {
    vocab: usize,
    order: usize,
    table: HashMap<Vec<Token>, Vec<f64>>,
    /// Rows laid out by base-`vocab + 1` context code for allocation-free
    /// lookup.
    dense: Vec<f64>,
}

impl ToyLm {
    /// Validates that every row is a distribution over `vocab` tokens and that
    /// every reachable context has a row. The begin token is `vocab`.
    pub fn new(vocab: usize, order: usize, table: HashMap<Vec<Token>, Vec<f64>>) -> Result<Self, SimError> {
        if vocab == 0 || vocab > MAX_VOCAB {
            return Err(SimError::Model(format!("vocab must be in 1..={MAX_VOCAB}, got {vocab}")));
        }
        let entries = dense_len(vocab, order)?;
        let mut lm = Self { vocab, order, table, dense: Vec::new() };
        for (ctx, row) in &lm.table {
            if ctx.len() != order {
                return Err(SimError::Model(format!("context {ctx:?} has length {} != order {order}", ctx.len())));
            }
            if !lm.is_reachable(ctx) {
                return Err(SimError::Model(format!("context {ctx:?} is not a reachable context")));
            }
            if row.len() != vocab {
                return Err(SimError::Model(format!("row for {ctx:?} has {} entries, expected {vocab}", row.len())));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(SimError::Model(format!("row for {ctx:?} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(SimError::Model(format!("row for {ctx:?} sums to {sum}")));
            }
        }
        for ctx in lm.reachable_contexts() {
            if !lm.table.contains_key(&ctx) {
                return Err(SimError::Model(format!("missing row for context {}", lm.format_ctx(&ctx))));
            }
        }
        let mut dense = vec![0.0; entries];
        for (ctx, row) in &lm.table {
            let at = lm.code(ctx.iter().copied()) * vocab;
            dense[at..at + vocab].copy_from_slice(row);
        }
        lm.dense = dense;
        Ok(lm)
    }

    /// Builds a model by evaluating `row` on every reachable context.
    pub fn from_fn(vocab: usize, order: usize, mut row: impl FnMut(&[Token]) -> Vec<f64>) -> Result<Self, SimError> {
        if vocab == 0 || vocab > MAX_VOCAB {
            return Err(SimError::Model(format!("vocab must be in 1..={MAX_VOCAB}, got {vocab}")));
        }
        dense_len(vocab, order)?;
        let shell = Self { vocab, order, table: HashMap::new(), dense: Vec::new() };
        let table = shell.reachable_contexts().into_iter().map(|c| {
            let r = row(&c);
            (c, r)
        });
        Self::new(vocab, order, table.collect())
    }

    /// Random model whose rows are normalized `u^sharpness` weights; larger
    /// `sharpness` gives peakier rows.
    pub fn random(vocab: usize, order: usize, sharpness: f64, seed: u64) -> Result<Self, SimError> {
        let mut rng = rng_from_seed(seed);
        Self::from_fn(vocab, order, |_| {
            let w: Vec<f64> = (0..vocab).map(|_| rng.random::<f64>().powf(sharpness) + 1e-3).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|x| x / total).collect()
        })
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn begin_token(&self) -> Token {
        self.vocab
    }

    /// Next-token distribution after `history`; only the last `order`
    /// tokens matter, with begin-token padding on the left.
    pub fn dist(&self, history: &[Token]) -> &[f64] {
        let take = history.len().min(self.order);
        let pad = std::iter::repeat_n(self.begin_token(), self.order - take);
        let at = self.code(pad.chain(history[history.len() - take..].iter().copied())) * self.vocab;
        &self.dense[at..at + self.vocab]
    }

    fn code(&self, ctx: impl Iterator<Item = Token>) -> usize {
        ctx.fold(0, |acc, t| acc * (self.vocab + 1) + t)
    }

    pub fn context(&self, history: &[Token]) -> Vec<Token> {
        let take = history.len().min(self.order);
        let mut ctx = vec![self.begin_token(); self.order - take];
        ctx.extend_from_slice(&history[history.len() - take..]);
        ctx
    }

    fn is_reachable(&self, ctx: &[Token]) -> bool {
        let pad = ctx.iter().take_while(|&&t| t == self.vocab).count();
        ctx[pad..].iter().all(|&t| t < self.vocab)
    }

    fn reachable_contexts(&self) -> Vec<Vec<Token>> {
        let mut out = Vec::new();
        for pad in (0..=self.order).rev() {
            let free = self.order - pad;
            let count = self.vocab.pow(free as u32);
            for mut code in 0..count {
                let mut ctx = vec![self.vocab; self.order];
                for slot in (pad..self.order).rev() {
                    ctx[slot] = code % self.vocab;
                    code /= self.vocab;
                }
                out.push(ctx);
            }
        }
        out
    }

    fn format_ctx(&self, ctx: &[Token]) -> String {
        ctx.iter()
            .map(|&t| if t == self.vocab { BEGIN_MARK.to_string() } else { t.to_string() })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(SimError::Parse { line: 1, message: "empty file".into() })?;
        let header_err = |message: String| SimError::Parse { line: hline, message };
        let mut vocab = None;
        let mut order = None;
        for field in header.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| header_err(format!("expected `vocab=<n> order=<k>`, got `{header}`")))?;
            let v: usize = v.parse().map_err(|_| header_err(format!("bad number `{v}`")))?;
            match k {
                "vocab" => vocab = Some(v),
                "order" => order = Some(v),
                _ => return Err(header_err(format!("unknown header field `{k}`"))),
            }
        }
        let vocab = vocab.ok_or_else(|| header_err("missing `vocab=`".into()))?;
        let order = order.ok_or_else(|| header_err("missing `order=`".into()))?;
        if vocab == 0 || vocab > MAX_VOCAB {
            return Err(header_err(format!("vocab must be in 1..={MAX_VOCAB}")));
        }

        let mut table = HashMap::new();
        for (line, body) in lines {
            let err = |message: String| SimError::Parse { line, message };
            let (ctx_part, probs_part) =
                body.split_once(':').ok_or_else(|| err("expected `<context> : <probabilities>`".into()))?;
            let ctx = ctx_part
                .split_whitespace()
                .map(|t| {
                    if t == BEGIN_MARK {
                        Ok(vocab)
                    } else {
                        t.parse::<Token>()
                            .ok()
                            .filter(|&x| x < vocab)
                            .ok_or_else(|| err(format!("bad context token `{t}`")))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            let probs = probs_part
                .split_whitespace()
                .map(|p| p.parse::<f64>().map_err(|_| err(format!("bad probability `{p}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            if table.insert(ctx, probs).is_some() {
                return Err(err("duplicate context".into()));
            }
        }
        Self::new(vocab, order, table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Model(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Serializes in the file format, contexts in canonical order.
    pub fn to_text(&self) -> String {
        let mut out = format!("vocab={} order={}\n", self.vocab, self.order);
        for ctx in self.reachable_contexts() {
            let row = &self.table[&ctx];
            let probs: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            let _ = writeln!(out, "{} : {}", self.format_ctx(&ctx), probs.join(" "));
        }
        out
    }
}

fn dense_len(vocab: usize, order: usize) -> Result<usize, SimError> {
    u32::try_from(order)
        .ok()
        .and_then(|o| (vocab + 1).checked_pow(o))
        .and_then(|n| n.checked_mul(vocab))
        .filter(|&n| n <= MAX_DENSE_ENTRIES)
        .ok_or_else(|| SimError::Model(format!("order {order} is too large for vocab {vocab}")))
}
