//! Record writers: JSON lines or CSV, each led by the resolved configuration.

use std::io::Write;

use serde_json::{Map, Value};

use crate::config::Resolved;

/// A field value of an output record.
#[derive(Debug, Clone)]
pub enum Field {
    Int(i64),
    UInt(u64),
    Float(f64),
    Bool(bool),
    Str(String),
}

impl From<u64> for Field {
    fn from(v: u64) -> Self {
        Field::UInt(v)
    }
}

impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::UInt(v as u64)
    }
}

impl From<u32> for Field {
    fn from(v: u32) -> Self {
        Field::UInt(u64::from(v))
    }
}

impl From<i64> for Field {
    fn from(v: i64) -> Self {
        Field::Int(v)
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Float(v)
    }
}

impl From<bool> for Field {
    fn from(v: bool) -> Self {
        Field::Bool(v)
    }
}

impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Str(v.to_string())
    }
}

impl From<String> for Field {
    fn from(v: String) -> Self {
        Field::Str(v)
    }
}

fn float_text(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

impl Field {
    fn text(&self) -> String {
        match self {
            Field::Int(v) => v.to_string(),
            Field::UInt(v) => v.to_string(),
            Field::Float(v) => float_text(*v),
            Field::Bool(v) => v.to_string(),
            Field::Str(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Field::Int(v) => Value::from(*v),
            Field::UInt(v) => Value::from(*v),
            Field::Float(v) if v.is_finite() => Value::from(*v),
            Field::Float(_) => Value::Null,
            Field::Bool(v) => Value::from(*v),
            Field::Str(s) => Value::from(s.as_str()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

pub struct Sink<W: Write> {
    out: W,
    format: Format,
    last_header: Option<(String, Vec<String>)>,
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl<W: Write> Sink<W> {
    pub fn new(mut out: W, format: Format, cfg: &Resolved) -> std::io::Result<Self> {
        let version = env!("CARGO_PKG_VERSION");
        match format {
            Format::Jsonl => {
                let mut map = Map::new();
                for (k, v) in cfg.entries() {
                    map.insert(k.to_string(), Value::from(v));
                }
                let mut rec = Map::new();
                rec.insert("type".into(), "config".into());
                rec.insert("tool".into(), "ebaloha".into());
                rec.insert("version".into(), version.into());
                rec.insert("command".into(), cfg.command.into());
                rec.insert("config".into(), Value::Object(map));
                writeln!(out, "{}", Value::Object(rec))?;
            }
            Format::Csv => {
                writeln!(out, "# ebaloha {version} {}", cfg.command)?;
                let pairs: Vec<String> = cfg.entries().map(|(k, v)| format!("{k}={v}")).collect();
                writeln!(out, "# config: {}", pairs.join(" "))?;
            }
        }
        Ok(Sink { out, format, last_header: None })
    }

    pub fn record(&mut self, kind: &str, fields: &[(&str, Field)]) -> std::io::Result<()> {
        match self.format {
            Format::Jsonl => {
                let mut map = Map::new();
                map.insert("type".into(), kind.into());
                for (k, v) in fields {
                    map.insert((*k).to_string(), v.json());
                }
                writeln!(self.out, "{}", Value::Object(map))
            }
            Format::Csv => {
                let names: Vec<String> = fields.iter().map(|(k, _)| (*k).to_string()).collect();
                let header = (kind.to_string(), names);
                if self.last_header.as_ref() != Some(&header) {
                    let cols: Vec<String> = header.1.iter().map(|s| csv_cell(s)).collect();
                    writeln!(self.out, "type,{}", cols.join(","))?;
                    self.last_header = Some(header);
                }
                let cells: Vec<String> = fields.iter().map(|(_, v)| csv_cell(&v.text())).collect();
                writeln!(self.out, "{},{}", csv_cell(kind), cells.join(","))
            }
        }
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::command;
    use std::collections::BTreeMap;

    fn cfg() -> Resolved {
        Resolved::build(command("classify").unwrap(), &BTreeMap::new(), &BTreeMap::new()).unwrap()
    }

    #[test]
    fn jsonl_floats_and_nan() {
        let mut buf = Vec::new();
        let mut s = Sink::new(&mut buf, Format::Jsonl, &cfg()).unwrap();
        s.record("x", &[("a", 0.5.into()), ("b", f64::NAN.into()), ("c", 3u64.into())]).unwrap();
        s.finish().unwrap();
        let text = String::from_utf8(buf).unwrap();
        let last = text.lines().last().unwrap();
        assert_eq!(last, r#"{"a":0.5,"b":null,"c":3,"type":"x"}"#);
    }

    #[test]
    fn csv_headers_follow_record_type() {
        let mut buf = Vec::new();
        let mut s = Sink::new(&mut buf, Format::Csv, &cfg()).unwrap();
        s.record("a", &[("v", 1u64.into())]).unwrap();
        s.record("a", &[("v", 2u64.into())]).unwrap();
        s.record("b", &[("w", "x,y".into())]).unwrap();
        s.finish().unwrap();
        let text = String::from_utf8(buf).unwrap();
        let body: Vec<&str> = text.lines().skip(2).collect();
        assert_eq!(body, ["type,v", "a,1", "a,2", "type,w", "b,\"x,y\""]);
    }
}
