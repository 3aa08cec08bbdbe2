//! Canonical serialization and 128-bit hashing of structured payloads.
//!
//! Canonical form: object keys sorted lexicographically, integral floats
//! written as integers, strings NFC-normalized. Two payloads with the same
//! canonical form hash identically.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fmt;
use unicode_normalization::UnicodeNormalization;

/// 128-bit payload hash used as the result-cache key component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArgHash(pub u128);

impl fmt::Display for ArgHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

pub fn canonical_form(v: &Value) -> String {
    let mut out = String::new();
    write_canonical(v, &mut out);
    out
}

pub fn canonical_arg_hash(args: &Value) -> ArgHash {
    let digest = Sha256::digest(canonical_form(args).as_bytes());
    let mut bytes = [0u8; 16];
    bytes.copy_from_slice(&digest[..16]);
    ArgHash(u128::from_be_bytes(bytes))
}

/// Payload equality modulo canonicalization.
pub fn canonical_eq(a: &Value, b: &Value) -> bool {
    canonical_form(a) == canonical_form(b)
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(n, out),
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(String, &Value)> =
                map.iter().map(|(k, v)| (k.nfc().collect::<String>(), v)).collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            out.push('{');
            for (i, (k, v)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                push_json_str(k, out);
                out.push(':');
                write_canonical(v, out);
            }
            out.push('}');
        }
    }
}

fn write_number(n: &serde_json::Number, out: &mut String) {
    if let Some(i) = n.as_i64() {
        out.push_str(&i.to_string());
    } else if let Some(u) = n.as_u64() {
        out.push_str(&u.to_string());
    } else if let Some(f) = n.as_f64() {
        // 2^63 bound keeps the integer rendering exact.
        if f.is_finite() && f.fract() == 0.0 && f.abs() < 9.223_372_036_854_776e18 {
            out.push_str(&(f as i64).to_string());
        } else {
            out.push_str(&serde_json::Number::from_f64(f).map(|n| n.to_string()).unwrap_or_default());
        }
    }
}

fn write_string(s: &str, out: &mut String) {
    let normalized: String = s.nfc().collect();
    push_json_str(&normalized, out);
}

fn push_json_str(s: &str, out: &mut String) {
    // serde_json escaping of a &str cannot fail.
    out.push_str(&serde_json::to_string(s).unwrap_or_default());
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn key_order_does_not_matter() {
        let a: Value = serde_json::from_str(r#"{"b":1,"a":2}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a":2,"b":1}"#).unwrap();
        assert_eq!(canonical_arg_hash(&a), canonical_arg_hash(&b));
    }

    #[test]
    fn different_leaf_different_hash() {
        assert_ne!(canonical_arg_hash(&json!({"u":"x"})), canonical_arg_hash(&json!({"u":"y"})));
    }

    #[test]
    fn integral_floats_render_as_integers() {
        assert_eq!(canonical_form(&json!({"n": 3.0})), canonical_form(&json!({"n": 3})));
        assert_eq!(canonical_form(&json!(-0.0)), "0");
        assert_eq!(canonical_form(&json!(2.5)), "2.5");
    }

    #[test]
    fn nfc_normalization() {
        // "é" precomposed vs e + combining acute
        let a = json!({"s": "caf\u{e9}"});
        let b = json!({"s": "cafe\u{301}"});
        assert!(canonical_eq(&a, &b));
    }

    #[test]
    fn list_order_matters() {
        assert_ne!(canonical_arg_hash(&json!([1, 2])), canonical_arg_hash(&json!([2, 1])));
    }

    #[test]
    fn string_and_number_are_distinct() {
        assert_ne!(canonical_arg_hash(&json!("1")), canonical_arg_hash(&json!(1)));
    }
}
