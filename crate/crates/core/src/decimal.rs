//! Report scalars written with exactly six decimal places.
//!
//! Use with `#[serde(with = "crate::decimal")]`. Non-finite values are written
//! as `null` and read back as NaN.

use serde::ser::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn format(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        let n: serde_json::Number = format(*v).parse().map_err(S::Error::custom)?;
        n.serialize(s)
    } else {
        s.serialize_none()
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

pub mod option {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => super::serialize(x, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Option::<f64>::deserialize(d)
    }
}

/// Checks that a JSON number literal is in the fixed format.
pub fn is_fixed(literal: &str) -> bool {
    match literal.split_once('.') {
        Some((int, frac)) => {
            frac.len() == 6
                && frac.bytes().all(|b| b.is_ascii_digit())
                && !int.is_empty()
                && int.trim_start_matches('-').bytes().all(|b| b.is_ascii_digit())
        }
        None => false,
    }
}
