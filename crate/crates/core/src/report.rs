//! Machine-readable run reports. Every float is written with 17 significant
//! digits so that reports round-trip exactly.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL: &str = "euler-mvs";

/// `x` in scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

struct SigFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Formatter for SigFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
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

/// Pretty-printed JSON with 17-digit floats.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFormatter { inner: PrettyFormatter::new() });
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// One certificate of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    /// `"<="` or `">"`, relating `value` to `threshold`.
    pub relation: &'static str,
    pub threshold: f64,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), passed: value <= threshold, value, relation: "<=", threshold }
    }

    pub fn above(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), passed: value > threshold, value, relation: ">", threshold }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Self { name: name.into(), passed: ok, value: if ok { 1.0 } else { 0.0 }, relation: ">", threshold: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stage {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margin {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub schema_version: u32,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_unix: Option<u64>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<String>,
    pub inputs: Value,
    pub checks: Vec<Check>,
    pub margins: Vec<Margin>,
    pub results: serde_json::Map<String, Value>,
    pub stages: Vec<Stage>,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn new(command: &str, inputs: Value) -> Self {
        Self {
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            generated_unix: None,
            passed: false,
            first_failure: None,
            inputs,
            checks: Vec::new(),
            margins: Vec::new(),
            results: serde_json::Map::new(),
            stages: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn result<T: Serialize + ?Sized>(&mut self, key: &str, value: &T) -> serde_json::Result<()> {
        self.results.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn margin(&mut self, name: &str, value: f64) {
        self.margins.push(Margin { name: name.into(), value });
    }

    /// Sets `passed` from the checks and names the first failing one.
    pub fn finish(&mut self) {
        self.first_failure = self.checks.iter().find(|c| !c.passed).map(|c| c.name.clone());
        self.passed = self.first_failure.is_none();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_17_digits() {
        for x in [1.4, -5.0 / 14f64.sqrt(), 1e-300, 0.1 + 0.2, 123456789.0, -0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
            let digits: String = s.trim_start_matches('-').split('e').next().unwrap().replace('.', "");
            assert_eq!(digits.len(), 17);
        }
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn json_uses_the_formatter_and_stays_valid() {
        let v = serde_json::json!({"a": 1.4, "b": [0.5, 2], "c": {"d": -1e-20}});
        let s = to_json_string(&v).unwrap();
        assert!(s.contains("1.3999999999999999e0"));
        assert!(s.contains("\"b\": [\n"));
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn finish_names_first_failure() {
        let mut r = RunReport::new("x", Value::Null);
        r.checks.push(Check::at_most("small", 1e-13, 1e-12));
        r.checks.push(Check::above("positive", 0.0, 0.0));
        r.checks.push(Check::flag("never", false));
        r.finish();
        assert!(!r.passed);
        assert_eq!(r.first_failure.as_deref(), Some("positive"));
    }
}
