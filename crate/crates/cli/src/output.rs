//! Deterministic JSON and CSV writers: sorted keys and `{:.16e}` floats.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::RunError;

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |out: &mut String, n: usize| out.push_str(&" ".repeat(n));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&float(n.as_f64().expect("f64 number")));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string escapes")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            let scalar = items.iter().all(|x| !x.is_array() && !x.is_object());
            if scalar {
                out.push('[');
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, x, indent);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                pad(out, indent + 2);
                write_value(out, x, indent + 2);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(out, indent + 2);
                out.push_str(&serde_json::to_string(k).expect("key escapes"));
                out.push_str(": ");
                write_value(out, &map[k.as_str()], indent + 2);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

/// Pretty JSON with sorted keys. Non-finite floats serialize as `null`
/// through `serde_json`, so they never reach this writer as numbers.
pub fn json_string(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}

pub fn write_json(path: &Path, v: &Value) -> Result<(), RunError> {
    std::fs::write(path, json_string(v)).map_err(|e| RunError::Internal(format!("cannot write {}: {e}", path.display())))
}

/// Columns of equal length under a header row.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<(&str, Vec<f64>)>) -> Table {
        let (headers, columns) = columns.into_iter().map(|(h, c)| (h.to_string(), c)).unzip();
        Table { headers, columns }
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn csv_string(&self) -> String {
        let mut out = self.headers.join(",");
        out.push('\n');
        for i in 0..self.rows() {
            for (j, col) in self.columns.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&float(col[i]));
            }
            out.push('\n');
        }
        out
    }
}

pub fn write_csv(path: &Path, table: &Table) -> Result<(), RunError> {
    if table.columns.iter().any(|c| c.len() != table.rows()) {
        return Err(RunError::Internal(format!("ragged columns for {}", path.display())));
    }
    std::fs::write(path, table.csv_string()).map_err(|e| RunError::Internal(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn sorted_keys_and_fixed_floats() {
        let v = json!({"b": 1.5, "a": [1, 2.0], "c": {"z": true, "y": null}, "d": "x\"y"});
        let s = json_string(&v);
        assert_eq!(
            s,
            "{\n  \"a\": [1, 2.0000000000000000e0],\n  \"b\": 1.5000000000000000e0,\n  \"c\": {\n    \"y\": null,\n    \"z\": true\n  },\n  \"d\": \"x\\\"y\"\n}\n"
        );
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["b"], json!(1.5));
    }

    #[test]
    fn csv_rows() {
        let t = Table::new(vec![("s", vec![1.0, 2.0]), ("z", vec![-0.5, 0.25])]);
        assert_eq!(t.csv_string(), "s,z\n1.0000000000000000e0,-5.0000000000000000e-1\n2.0000000000000000e0,2.5000000000000000e-1\n");
    }
}
