use std::fmt::Write as _;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{Map, Value};

/// Arrays longer than this are left to the JSON output.
const TABLE_ARRAY_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

/// Result fields of one command plus the run metadata. Keys are kept
/// sorted so identical runs give identical bytes.
pub struct Report {
    fields: Map<String, Value>,
}

impl Report {
    pub fn new(command: &str, seed: u64) -> Self {
        let mut fields = Map::new();
        fields.insert("command".into(), command.into());
        fields.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        fields.insert("seed".into(), seed.into());
        fields.insert("tolerances".into(), tolerances());
        Self { fields }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("report values serialize");
        self.fields.insert(key.into(), v);
    }

    /// Merges the fields of a serializable struct.
    pub fn extend(&mut self, value: impl Serialize) {
        if let Value::Object(m) = serde_json::to_value(value).expect("report values serialize") {
            self.fields.extend(m);
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.fields).expect("serializable");
                s.push('\n');
                s
            }
            Format::Table => {
                let rows = self.rows();
                let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
                let mut s = String::new();
                for (k, v) in rows {
                    let _ = writeln!(s, "{k:<width$}  {v}");
                }
                s
            }
            Format::Csv => {
                let mut s = String::from("key,value\n");
                for (k, v) in self.rows() {
                    let _ = writeln!(s, "{},{}", csv_field(&k), csv_field(&v));
                }
                s
            }
        }
    }

    fn rows(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (k, v) in &self.fields {
            flatten(k, v, &mut out);
        }
        out
    }
}

fn tolerances() -> Value {
    serde_json::json!({
        "hermitian": lqhv::tensor::HERMITIAN_TOL,
        "positivity": lqhv::norms::POSITIVITY_TOL,
        "refutation": lqhv::norms::REFUTATION_TOL,
        "lhv": lqhv::gamma::LHV_TOL,
        "dim_cap": lqhv::tensor::dim_cap(),
        "lp_cell_cap": lqhv::gamma::DEFAULT_CELL_CAP,
        "enumeration_cap": lqhv::scenarios::DEFAULT_ENUMERATION_CAP,
    })
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("-".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

fn flatten(key: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            // matrices are summarized rather than spelled out
            if m.contains_key("rows") && m.contains_key("data") {
                out.push((key.into(), format!("{}x{} matrix", m["rows"], m["cols"])));
                return;
            }
            for (k, x) in m {
                flatten(&format!("{key}.{k}"), x, out);
            }
        }
        Value::Array(items) if items.is_empty() => out.push((key.into(), "(none)".into())),
        Value::Array(items) => {
            if let Some(parts) = items.iter().map(scalar).collect::<Option<Vec<_>>>() {
                if items.len() <= TABLE_ARRAY_LIMIT {
                    out.push((key.into(), parts.join(" ")));
                } else {
                    out.push((key.into(), format!("{} values (see json output)", items.len())));
                }
            } else if items.iter().all(Value::is_object) && items.len() <= TABLE_ARRAY_LIMIT {
                for (i, x) in items.iter().enumerate() {
                    flatten(&format!("{key}.{i}"), x, out);
                }
            } else {
                out.push((key.into(), "nested array (see json output)".into()));
            }
        }
        _ => out.push((key.into(), scalar(v).expect("scalar"))),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_and_csv_rows() {
        let mut r = Report::new("demo", 3);
        r.set("value", 1.5);
        r.set("list", [1, 2]);
        r.set("entries", serde_json::json!([{"label": "a,b", "value": 2.0}]));
        let table = r.render(Format::Table);
        assert!(table.contains("value ") && table.contains("1.5"));
        assert!(table.contains("entries.0.label"));
        let csv = r.render(Format::Csv);
        assert!(csv.starts_with("key,value\n"));
        assert!(csv.contains("entries.0.label,\"a,b\""));
        let json: Value = serde_json::from_str(&r.render(Format::Json)).unwrap();
        assert_eq!(json["seed"], 3);
        assert_eq!(json["list"], serde_json::json!([1, 2]));
    }
}
