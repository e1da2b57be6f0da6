//! Output formatting for the CLI: fixed-precision
//! CSV numbers, content hashes and run manifests.

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::de::DeConfig;

/// Formats with exactly 10 significant digits. Values in `[1e-5, 1e10)`
/// are written in positional notation, others in scientific notation.
/// Infinities are written as `inf` / `-inf`.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..10).contains(&exp) {
        return sci;
    }
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let body = if exp >= 0 {
        let point = exp as usize + 1;
        format!("{}.{}", &digits[..point], &digits[point..])
    } else {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    };
    let body = body.strip_suffix('.').map(str::to_string).unwrap_or(body);
    format!("{sign}{body}")
}

/// Git-style object id: SHA-256 over `"blob <len>\0" || bytes`, hex encoded.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputDigest {
    pub path: String,
    pub bytes: usize,
    pub hash: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub params: BTreeMap<String, serde_json::Value>,
    pub tolerances: DeConfig,
    pub seed: u64,
    pub jobs: usize,
    pub wall_clock_secs: f64,
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn new(command: &str, tolerances: DeConfig, seed: u64, jobs: usize) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            params: BTreeMap::new(),
            tolerances,
            seed,
            jobs,
            wall_clock_secs: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("serializable parameter");
        self.params.insert(key.into(), v);
    }

    pub fn add_output(&mut self, path: &str, bytes: &[u8]) {
        self.outputs.push(OutputDigest {
            path: path.into(),
            bytes: bytes.len(),
            hash: content_hash(bytes),
        });
    }
}
