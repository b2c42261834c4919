//! JSON and CSV emission helpers shared by the report types.
//!
//! Every float in an emitted document is written with 17 significant digits,
//! which round-trips any finite f64 losslessly, and key order follows struct
//! declaration order, so identical values produce byte-identical documents.

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io;

/// Formats a finite f64 with 17 significant digits; +inf prints as "inf".
pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{:.16e}", v)
    }
}

struct Float17;

impl serde_json::ser::Formatter for Float17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        if value.is_finite() {
            write!(writer, "{:.16e}", value)
        } else {
            // Non-finite floats must go through ExtReal; this arm only keeps
            // the output well-formed JSON if one slips through.
            writer.write_all(b"null")
        }
    }
}

/// Serializes a report to canonical JSON: 17-significant-digit floats,
/// struct-declaration key order, compact layout.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Float17);
    value
        .serialize(&mut ser)
        .expect("report serialization cannot fail");
    String::from_utf8(out).expect("canonical JSON is UTF-8")
}

/// An extended real in [0, +inf]: finite values serialize as numbers, +inf as
/// the string "inf". Used for rates and for argmin gaps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtReal(pub f64);

impl ExtReal {
    pub const INF: ExtReal = ExtReal(f64::INFINITY);

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

struct ExtRealVisitor;

impl<'de> Visitor<'de> for ExtRealVisitor {
    type Value = ExtReal;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "a number or the string \"inf\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<ExtReal, E> {
        Ok(ExtReal(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<ExtReal, E> {
        Ok(ExtReal(v as f64))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<ExtReal, E> {
        Ok(ExtReal(v as f64))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<ExtReal, E> {
        if v == "inf" {
            Ok(ExtReal::INF)
        } else {
            Err(E::custom(format!(
                "expected a number or \"inf\", got string {v:?}"
            )))
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<ExtReal, D::Error> {
        deserializer.deserialize_any(ExtRealVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_round_trips_through_seventeen_digits() {
        for v in [0.3, 1.0 / 3.0, 2.0_f64.powi(-40), 123456.789e-12, -0.1] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn ext_real_serializes_infinity_as_inf_string() {
        #[derive(Serialize, Deserialize)]
        struct Row {
            r: ExtReal,
        }
        let json = to_canonical_json(&Row { r: ExtReal::INF });
        assert_eq!(json, r#"{"r":"inf"}"#);
        let back: Row = serde_json::from_str(&json).unwrap();
        assert_eq!(back.r, ExtReal::INF);

        let json = to_canonical_json(&Row { r: ExtReal(0.25) });
        assert_eq!(json, r#"{"r":2.5000000000000000e-1}"#);
        let back: Row = serde_json::from_str(&json).unwrap();
        assert_eq!(back.r.0, 0.25);
    }
}
