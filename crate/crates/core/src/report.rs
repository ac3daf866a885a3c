//! Serialized form of pipeline results.
//!
//! JSON floats are written in scientific notation with 17 significant
//! digits, so every value round-trips exactly and identical runs give
//! identical bytes. Field order follows struct declaration order.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Pretty-printing formatter with fixed-precision floats.
pub struct FixedPrecision<'a> {
    inner: PrettyFormatter<'a>,
}

impl Default for FixedPrecision<'_> {
    fn default() -> Self {
        Self { inner: PrettyFormatter::with_indent(b"  ") }
    }
}

fn write_fixed<W: ?Sized + io::Write>(writer: &mut W, value: f64) -> io::Result<()> {
    if value == 0.0 {
        // keep the sign of negative zero out of the output
        return writer.write_all(b"0.0000000000000000e0");
    }
    write!(writer, "{value:.16e}")
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(
            #[inline]
            fn $name<W: ?Sized + io::Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.inner.$name(writer $(, $arg)*)
            }
        )*
    };
}

impl Formatter for FixedPrecision<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write_fixed(writer, value)
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write_fixed(writer, f64::from(value))
    }

    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        end_object_key();
        begin_object_value();
        end_object_value();
    }
}

/// Serializes `value` as pretty JSON with fixed-precision floats and a
/// trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedPrecision::default());
    value
        .serialize(&mut ser)
        .map_err(|e| Error::InvalidParameter(format!("report serialization: {e}")))?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, serde::Deserialize, PartialEq, Debug)]
    struct Sample {
        b: f64,
        a: Vec<f64>,
        n: u32,
    }

    #[test]
    fn floats_have_17_significant_digits() {
        let s = to_json(&Sample { b: 0.1, a: vec![1.0, -2.5e-300, 0.0, -0.0], n: 3 }).unwrap();
        assert!(s.contains("\"b\": 1.0000000000000001e-1"), "{s}");
        assert!(s.contains("-2.5000000000000000e-300"));
        assert!(!s.contains("-0.0000000000000000e0"));
        assert!(s.find("\"b\"").unwrap() < s.find("\"a\"").unwrap());
        assert!(s.ends_with("}\n"));
    }

    #[test]
    fn values_round_trip() {
        let v = Sample { b: std::f64::consts::PI, a: vec![1.0 / 3.0, 6.02e23, f64::MIN_POSITIVE], n: 0 };
        let back: Sample = serde_json::from_str(&to_json(&v).unwrap()).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn non_finite_becomes_null() {
        assert_eq!(to_json(&vec![f64::NAN]).unwrap(), "[\n  null\n]\n");
    }
}
