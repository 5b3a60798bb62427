//! Serde helpers that write `f64` fields as JSON numbers with 17
//! significant digits, enough to round-trip every finite double exactly
//! and to keep report files byte-stable across runs.
//!
//! Use with `#[serde(with = "crate::floatfmt")]` on `f64` fields.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    if !value.is_finite() {
        return Err(serde::ser::Error::custom(format!(
            "cannot serialize non-finite float {value}"
        )));
    }
    let literal = format!("{value:.16e}");
    let number: serde_json::Number = literal
        .parse()
        .map_err(|e| serde::ser::Error::custom(format!("bad float literal {literal}: {e}")))?;
    number.serialize(serializer)
}

pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
    f64::deserialize(deserializer)
}

/// Formats a float with 17 significant digits for CSV output.
pub fn csv(value: f64) -> String {
    format!("{value:.16e}")
}
