//! Architecture, hardware and deployment parameters.
//!
//! All three live in flat `key = value` text files, one pair per line, with
//! `#` starting a comment. Keys are case-sensitive and must match exactly:
//!
//! | file       | keys                                  |
//! |------------|---------------------------------------|
//! | model      | `h, h_kv, h_mlp, l, V, L_d, D, n_h`   |
//! | hardware   | `P_peak, B_mem, dtype_bytes`          |
//! | deployment | `b, s_pre, top_k, k, t_acc`           |
//!
//! Unknown or repeated keys are rejected so typos surface instead of silently
//! falling back to defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("key `{key}`: cannot parse `{value}`")]
    BadValue { key: &'static str, value: String },
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

/// Transformer architecture constants shared by the target and draft models.
///
/// The draft model reuses `hidden`, `kv_dim`, `mlp_dim` and `vocab`; only its
/// depth differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub hidden: u64,
    pub kv_dim: u64,
    pub mlp_dim: u64,
    pub target_layers: u64,
    pub vocab: u64,
    /// Decoder layers in the draft model.
    pub draft_layers: u64,
    /// Autoregressive drafting passes per cycle. Zero is allowed and means
    /// the cycle is verify + draft prefill only.
    pub draft_steps: u64,
    /// Attention head count. Only validated, never used in a formula.
    pub num_heads: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardwareSpec {
    /// Peak arithmetic rate, FLOP/s.
    pub peak_flops: f64,
    /// Memory bandwidth, bytes/s.
    pub mem_bandwidth: f64,
    /// Bytes per stored element.
    pub dtype_bytes: f64,
}

/// Per-cycle deployment knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeployConfig {
    pub batch: u64,
    /// Cached context length during decode.
    pub prefill_len: u64,
    /// Candidate tree nodes submitted for verification. Zero degenerates to
    /// plain one-token decoding.
    pub topk_paths: u64,
    /// Tokens fed per drafting step.
    pub draft_tokens: u64,
    /// Average tokens committed per cycle.
    pub accepted_tokens: f64,
}

pub const DEFAULT_DTYPE_BYTES: f64 = 2.0;

impl ModelSpec {
    pub const KEYS: [&'static str; 8] = ["h", "h_kv", "h_mlp", "l", "V", "L_d", "D", "n_h"];

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("h", self.hidden),
            ("h_kv", self.kv_dim),
            ("h_mlp", self.mlp_dim),
            ("l", self.target_layers),
            ("V", self.vocab),
            ("L_d", self.draft_layers),
            ("n_h", self.num_heads),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(ConfigError::Invalid {
                    field,
                    reason: "must be >= 1".into(),
                });
            }
        }
        if self.kv_dim > self.hidden {
            return Err(ConfigError::Invalid {
                field: "h_kv",
                reason: format!("h_kv ({}) exceeds h ({})", self.kv_dim, self.hidden),
            });
        }
        if !self.hidden.is_multiple_of(self.num_heads) {
            return Err(ConfigError::Invalid {
                field: "n_h",
                reason: format!("h ({}) is not divisible by n_h ({})", self.hidden, self.num_heads),
            });
        }
        Ok(())
    }

    pub fn from_config_str(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::parse(text, &Self::KEYS)?;
        let spec = Self {
            hidden: kv.required("h")?,
            kv_dim: kv.required("h_kv")?,
            mlp_dim: kv.required("h_mlp")?,
            target_layers: kv.required("l")?,
            vocab: kv.required("V")?,
            draft_layers: kv.required("L_d")?,
            draft_steps: kv.required("D")?,
            num_heads: kv.required("n_h")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_config_string(&self) -> String {
        render(&[
            ("h", self.hidden.to_string()),
            ("h_kv", self.kv_dim.to_string()),
            ("h_mlp", self.mlp_dim.to_string()),
            ("l", self.target_layers.to_string()),
            ("V", self.vocab.to_string()),
            ("L_d", self.draft_layers.to_string()),
            ("D", self.draft_steps.to_string()),
            ("n_h", self.num_heads.to_string()),
        ])
    }
}

impl HardwareSpec {
    pub const KEYS: [&'static str; 3] = ["P_peak", "B_mem", "dtype_bytes"];

    pub fn new(peak_flops: f64, mem_bandwidth: f64) -> Self {
        Self {
            peak_flops,
            mem_bandwidth,
            dtype_bytes: DEFAULT_DTYPE_BYTES,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, v) in [
            ("P_peak", self.peak_flops),
            ("B_mem", self.mem_bandwidth),
            ("dtype_bytes", self.dtype_bytes),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid {
                    field,
                    reason: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn from_config_str(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::parse(text, &Self::KEYS)?;
        let hw = Self {
            peak_flops: kv.required("P_peak")?,
            mem_bandwidth: kv.required("B_mem")?,
            dtype_bytes: kv.optional("dtype_bytes")?.unwrap_or(DEFAULT_DTYPE_BYTES),
        };
        hw.validate()?;
        Ok(hw)
    }

    pub fn to_config_string(&self) -> String {
        render(&[
            ("P_peak", self.peak_flops.to_string()),
            ("B_mem", self.mem_bandwidth.to_string()),
            ("dtype_bytes", self.dtype_bytes.to_string()),
        ])
    }
}

impl DeployConfig {
    pub const KEYS: [&'static str; 5] = ["b", "s_pre", "top_k", "k", "t_acc"];

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.batch == 0 {
            return Err(ConfigError::Invalid {
                field: "b",
                reason: "must be >= 1".into(),
            });
        }
        if self.draft_tokens == 0 {
            return Err(ConfigError::Invalid {
                field: "k",
                reason: "must be >= 1".into(),
            });
        }
        if !(self.accepted_tokens.is_finite() && self.accepted_tokens > 0.0) {
            return Err(ConfigError::Invalid {
                field: "t_acc",
                reason: format!("must be finite and > 0, got {}", self.accepted_tokens),
            });
        }
        Ok(())
    }

    pub fn from_config_str(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::parse(text, &Self::KEYS)?;
        let deploy = Self {
            batch: kv.required("b")?,
            prefill_len: kv.required("s_pre")?,
            topk_paths: kv.required("top_k")?,
            draft_tokens: kv.required("k")?,
            accepted_tokens: kv.required("t_acc")?,
        };
        deploy.validate()?;
        Ok(deploy)
    }

    pub fn to_config_string(&self) -> String {
        render(&[
            ("b", self.batch.to_string()),
            ("s_pre", self.prefill_len.to_string()),
            ("top_k", self.topk_paths.to_string()),
            ("k", self.draft_tokens.to_string()),
            ("t_acc", self.accepted_tokens.to_string()),
        ])
    }

    /// Same deployment with a different verification tree size.
    pub fn with_topk(self, topk_paths: u64) -> Self {
        Self { topk_paths, ..self }
    }

    pub fn with_batch(self, batch: u64) -> Self {
        Self { batch, ..self }
    }
}

pub fn load_model_spec(path: impl AsRef<Path>) -> Result<ModelSpec, ConfigError> {
    ModelSpec::from_config_str(&read(path.as_ref())?)
}

pub fn load_hardware_spec(path: impl AsRef<Path>) -> Result<HardwareSpec, ConfigError> {
    HardwareSpec::from_config_str(&read(path.as_ref())?)
}

pub fn load_deploy_config(path: impl AsRef<Path>) -> Result<DeployConfig, ConfigError> {
    DeployConfig::from_config_str(&read(path.as_ref())?)
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn render(pairs: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

struct KeyValues {
    values: BTreeMap<&'static str, String>,
}

impl KeyValues {
    fn parse(text: &str, allowed: &[&'static str]) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let known = allowed
                .iter()
                .copied()
                .find(|k| *k == key)
                .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
            if value.is_empty() {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    message: format!("empty value for `{key}`"),
                });
            }
            if values.insert(known, value.to_string()).is_some() {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self { values })
    }

    fn optional<T: FromStr>(&mut self, key: &'static str) -> Result<Option<T>, ConfigError> {
        match self.values.remove(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| ConfigError::BadValue { key, value: raw }),
        }
    }

    fn required<T: FromStr>(&mut self, key: &'static str) -> Result<T, ConfigError> {
        self.optional(key)?.ok_or(ConfigError::MissingKey(key))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const QWEN_72B: &str = "# Qwen2.5-72B-class\nh = 8192\nh_kv = 1024\nh_mlp = 29568\nl = 80\nV = 152064\nL_d = 1\nD = 5\nn_h = 64\n";

    #[test]
    fn parses_72b_class_model() {
        let spec = ModelSpec::from_config_str(QWEN_72B).unwrap();
        assert_eq!(spec.hidden, 8192);
        assert_eq!(spec.kv_dim, 1024);
        assert_eq!(spec.mlp_dim, 29568);
        assert_eq!(spec.target_layers, 80);
        assert_eq!(spec.vocab, 152064);
        assert_eq!(spec.draft_layers, 1);
        assert_eq!(spec.draft_steps, 5);
        assert_eq!(spec.num_heads, 64);
    }

    #[test]
    fn parses_tiny_model() {
        let spec =
            ModelSpec::from_config_str("h=4\nh_kv=2\nh_mlp=8\nl=1\nV=10\nL_d=1\nD=1\nn_h=2").unwrap();
        assert_eq!(spec.hidden, 4);
        assert_eq!(spec.num_heads, 2);
    }

    #[test]
    fn zero_kv_dim_names_field() {
        let err = ModelSpec::from_config_str("h=4\nh_kv=0\nh_mlp=8\nl=1\nV=10\nL_d=1\nD=1\nn_h=2")
            .unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { field: "h_kv", .. }), "{err}");
    }

    #[test]
    fn kv_dim_larger_than_hidden_rejected() {
        let err = ModelSpec::from_config_str("h=4\nh_kv=8\nh_mlp=8\nl=1\nV=10\nL_d=1\nD=1\nn_h=2")
            .unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { field: "h_kv", .. }));
    }

    #[test]
    fn heads_must_divide_hidden() {
        let err = ModelSpec::from_config_str("h=6\nh_kv=2\nh_mlp=8\nl=1\nV=10\nL_d=1\nD=1\nn_h=4")
            .unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { field: "n_h", .. }));
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(
            ModelSpec::from_config_str("h 4").unwrap_err(),
            ConfigError::Syntax { line: 1, .. }
        ));
        assert!(matches!(
            HardwareSpec::from_config_str("P_peak=1\nP_peak=2\nB_mem=1").unwrap_err(),
            ConfigError::Syntax { line: 2, .. }
        ));
        assert!(matches!(
            HardwareSpec::from_config_str("P_peak=1\nB_mem=1\nfoo=3").unwrap_err(),
            ConfigError::UnknownKey(k) if k == "foo"
        ));
        assert!(matches!(
            HardwareSpec::from_config_str("P_peak=x\nB_mem=1").unwrap_err(),
            ConfigError::BadValue { key: "P_peak", .. }
        ));
        assert!(matches!(
            HardwareSpec::from_config_str("P_peak=1").unwrap_err(),
            ConfigError::MissingKey("B_mem")
        ));
    }

    #[test]
    fn hardware_defaults_and_validation() {
        let hw = HardwareSpec::from_config_str("P_peak = 4e14\nB_mem = 2e12\n").unwrap();
        assert_eq!(hw.dtype_bytes, 2.0);
        assert_eq!(hw.peak_flops, 4e14);
        let explicit = HardwareSpec::from_config_str("P_peak=4e14\nB_mem=2e12\ndtype_bytes=2").unwrap();
        assert_eq!(hw, explicit);
        let err = HardwareSpec::from_config_str("P_peak=0\nB_mem=2e12").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { field: "P_peak", .. }));
        let err = HardwareSpec::from_config_str("P_peak=1\nB_mem=-3").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { field: "B_mem", .. }));
    }

    #[test]
    fn deploy_validation() {
        let d = DeployConfig::from_config_str("b=4\ns_pre=100\ntop_k=8\nk=10\nt_acc=3.5 # measured").unwrap();
        assert_eq!(d.batch, 4);
        assert_eq!(d.accepted_tokens, 3.5);
        let err = DeployConfig::from_config_str("b=0\ns_pre=0\ntop_k=8\nk=10\nt_acc=3").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { field: "b", .. }));
        let err = DeployConfig::from_config_str("b=1\ns_pre=0\ntop_k=8\nk=10\nt_acc=0").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { field: "t_acc", .. }));
    }

    #[test]
    fn missing_file_reports_path() {
        let err = load_model_spec("/nonexistent/model.cfg").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/model.cfg"));
    }

    fn model_strategy() -> impl Strategy<Value = ModelSpec> {
        (1u64..64, 1u64..4096, 1u64..100_000, 1u64..200, 1u64..300_000, 1u64..8, 0u64..8)
            .prop_flat_map(|(heads, head_dim, mlp, l, v, ld, d)| {
                let h = heads * head_dim;
                (1..=h).prop_map(move |kv| ModelSpec {
                    hidden: h,
                    kv_dim: kv,
                    mlp_dim: mlp,
                    target_layers: l,
                    vocab: v,
                    draft_layers: ld,
                    draft_steps: d,
                    num_heads: heads,
                })
            })
    }

    proptest! {
        #[test]
        fn model_round_trip(spec in model_strategy()) {
            let back = ModelSpec::from_config_str(&spec.to_config_string()).unwrap();
            prop_assert_eq!(back, spec);
        }

        #[test]
        fn hardware_round_trip(p in 1e-3f64..1e18, bw in 1e-3f64..1e15, bytes in 0.125f64..16.0) {
            let hw = HardwareSpec { peak_flops: p, mem_bandwidth: bw, dtype_bytes: bytes };
            prop_assert_eq!(HardwareSpec::from_config_str(&hw.to_config_string()).unwrap(), hw);
        }

        #[test]
        fn deploy_round_trip(b in 1u64..1024, s in 0u64..100_000, tk in 0u64..512, k in 1u64..64, t in 1e-6f64..64.0) {
            let d = DeployConfig { batch: b, prefill_len: s, topk_paths: tk, draft_tokens: k, accepted_tokens: t };
            prop_assert_eq!(DeployConfig::from_config_str(&d.to_config_string()).unwrap(), d);
        }
    }
}
