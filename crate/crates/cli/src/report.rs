//! Machine-readable run reports and number formatting.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub subcommand: String,
    /// Arguments after the program name.
    pub command: Vec<String>,
    pub tool_version: String,
    /// SHA-256 of the model file bytes.
    pub model_hash: String,
    pub seed: Option<u64>,
    pub timings: Timings,
    pub results: Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `x` rounded to 12 significant digits.
pub fn sig12(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

pub fn sig12_vec(v: &[f64]) -> Vec<f64> {
    v.iter().copied().map(sig12).collect()
}

/// `x` with 12 significant digits, fixed notation for moderate magnitudes.
pub fn fmt12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let s = format!("{:.*}", (11 - exp) as usize, x);
        trim_zeros(&s).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
