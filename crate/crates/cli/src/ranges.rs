//! Integer and real lists given on the command line.

use anyhow::{bail, Context, Result};

/// `start:stop:step` (stop exclusive), a comma list, or a single value.
pub fn parse_u64_set(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, stop, step] = parts.as_slice() else {
            bail!("range `{text}` must have the form start:stop:step");
        };
        let num = |s: &str, what: &str| -> Result<u64> {
            s.trim().parse().with_context(|| format!("range `{text}`: bad {what} `{s}`"))
        };
        let (start, stop, step) = (num(start, "start")?, num(stop, "stop")?, num(step, "step")?);
        if step == 0 {
            bail!("range `{text}`: step must be >= 1");
        }
        if start >= stop {
            bail!("range `{text}` is empty (stop is exclusive)");
        }
        return Ok((start..stop).step_by(step as usize).collect());
    }
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad integer `{s}` in `{text}`")))
        .collect::<Result<Vec<_>>>()?;
    Ok(values)
}

pub fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            let v: f64 = s.trim().parse().with_context(|| format!("bad number `{s}` in `{text}`"))?;
            if !v.is_finite() {
                bail!("non-finite value `{s}` in `{text}`");
            }
            Ok(v)
        })
        .collect()
}

pub fn parse_tokens(text: &str) -> Result<Vec<usize>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().with_context(|| format!("bad token `{s}` in prefix")))
        .collect()
}
