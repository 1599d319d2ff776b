//! JSON reports with fixed 17-significant-digit number formatting.

use std::collections::BTreeMap;
use std::io;

use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;
use serde_json::ser::Formatter;

use crate::tensor::CMat;

/// Report schema version; bump when field meanings change.
pub const SCHEMA_VERSION: u32 = 1;

/// Serializes a complex matrix as rows of `[re, im]` pairs.
pub fn ser_cmat<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect();
    let mut seq = s.serialize_seq(Some(rows.len()))?;
    for r in &rows {
        seq.serialize_element(r)?;
    }
    seq.end()
}

/// Constants a consumer needs to undo the normalizations used.
#[derive(Debug, Clone, Serialize, Default)]
pub struct Conventions {
    /// `unit-mass` (fiber volume pinned to 1) or `raw` (`∫ ω^r / r!`).
    pub volume_normalization: String,
    /// Factor from the unit-mass measure to the raw one.
    pub raw_over_unit: f64,
    pub positivity_tolerance: f64,
    pub resolution: usize,
    pub seed: u64,
    /// Lelong-number convention.
    pub lelong: String,
    pub fitted: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SceneInfo {
    pub name: String,
    pub digest: String,
    pub n: usize,
    pub rank: usize,
    pub chart: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub schema: u32,
    pub analysis: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneInfo>,
    pub conventions: Conventions,
    pub passed: bool,
    pub results: serde_json::Value,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_seconds: Option<f64>,
}

impl Report {
    pub fn new(analysis: &str, conventions: Conventions) -> Self {
        Report {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            schema: SCHEMA_VERSION,
            analysis: analysis.to_string(),
            scene: None,
            conventions,
            passed: true,
            results: serde_json::Value::Null,
            warnings: Vec::new(),
            timing_seconds: None,
        }
    }

    pub fn to_json(&self) -> String {
        to_json_string(self)
    }
}

/// Pretty formatter writing every float as `d.dddddddddddddddde±x`.
struct FixedDigits<'a> {
    inner: serde_json::ser::PrettyFormatter<'a>,
}

impl Formatter for FixedDigits<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        write!(w, "{:.16e}", value as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serializes any value with 17 significant digits per float.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    // Round-trip through `Value` so map keys come out sorted and floats
    // pass through the fixed-digit formatter.
    let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
    let mut buf = Vec::new();
    let fmt = FixedDigits {
        inner: serde_json::ser::PrettyFormatter::with_indent(b"  "),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    v.serialize(&mut ser).expect("in-memory JSON serialization");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        let s = to_json_string(&serde_json::json!({"b": 0.1, "a": [1.5, f64::NAN], "k": 15}));
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("1.5000000000000000e0"));
        assert!(s.contains("null") && s.contains("15"));
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        let back: f64 = "1.0000000000000001e-1".parse().unwrap();
        assert_eq!(back, 0.1);
    }
}
