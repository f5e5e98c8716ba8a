//! JSON checkpoints with an architecture header. Parameters are written as
//! hexadecimal floats (`0x1.8p+1`), which round-trip doubles bit-exactly.

use serde::{Deserialize, Serialize};

use super::{Architecture, NetworkParams};
use crate::error::{Error, Result};

const FORMAT: &str = "pinn-pricing-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    seed: u64,
    architecture: Architecture,
    params: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub seed: u64,
    pub params: NetworkParams,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let file = CheckpointFile {
            format: FORMAT.to_string(),
            version: VERSION,
            seed: self.seed,
            architecture: self.architecture.clone(),
            params: self.params.as_slice().iter().map(|&v| format_hex_float(v)).collect(),
        };
        serde_json::to_string_pretty(&file).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(s).map_err(|e| Error::Config(format!("checkpoint: {e}")))?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(Error::Config(format!("unsupported checkpoint {} v{}", file.format, file.version)));
        }
        file.architecture.validate()?;
        let values = file.params.iter().map(|s| parse_hex_float(s)).collect::<Result<Vec<_>>>()?;
        let params = NetworkParams::from_vec(file.architecture.layer_shapes(), values)?;
        Ok(Self { architecture: file.architecture, seed: file.seed, params })
    }
}

/// C99-style hexadecimal float, e.g. `-0x1.999999999999ap-4`.
pub fn format_hex_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    let sign = if v.is_sign_negative() { "-" } else { "" };
    if v.is_infinite() {
        return format!("{sign}inf");
    }
    let bits = v.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let mant = bits & ((1u64 << 52) - 1);
    let (lead, e) = match (exp, mant) {
        (0, 0) => return format!("{sign}0x0p+0"),
        (0, _) => (0, -1022),
        _ => (1, exp - 1023),
    };
    let mut frac = format!("{mant:013x}");
    while frac.ends_with('0') {
        frac.pop();
    }
    let dot = if frac.is_empty() { String::new() } else { format!(".{frac}") };
    let esign = if e < 0 { '-' } else { '+' };
    format!("{sign}0x{lead}{dot}p{esign}{}", e.abs())
}

pub fn parse_hex_float(s: &str) -> Result<f64> {
    let bad = || Error::Config(format!("malformed hex float {s:?}"));
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let apply = |v: f64| if neg { -v } else { v };
    match body {
        "inf" => return Ok(apply(f64::INFINITY)),
        "nan" => return Ok(f64::NAN),
        _ => {}
    }
    let body = body.strip_prefix("0x").ok_or_else(bad)?;
    let (mantissa, exponent) = body.split_once('p').ok_or_else(bad)?;
    let e: i64 = exponent.parse().map_err(|_| bad())?;
    let (lead, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if frac.len() > 13 || !frac.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(bad());
    }
    let frac_bits =
        if frac.is_empty() { 0 } else { u64::from_str_radix(frac, 16).map_err(|_| bad())? << (4 * (13 - frac.len())) };
    let bits = match lead {
        "1" => {
            let biased = e + 1023;
            if !(1..=2046).contains(&biased) {
                return Err(bad());
            }
            ((biased as u64) << 52) | frac_bits
        }
        "0" if frac_bits == 0 => 0,
        "0" if e == -1022 => frac_bits,
        _ => return Err(bad()),
    };
    Ok(apply(f64::from_bits(bits)))
}
