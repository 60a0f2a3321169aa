//! Output assembly: schema-versioned CSV or JSON, written to `--out` or
//! stdout. Numeric cells use the shortest round-trip float formatting, so
//! files are byte-identical across runs (wall-time columns aside).

use std::io::Write;
use std::path::Path;

use crate::CliError;

pub struct Table {
    pub schema: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# schema: {}\n", self.schema));
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        // Label-like columns stay strings even when they look numeric.
        const LABEL_COLUMNS: [&str; 4] = ["orders", "method", "status", "is_g_stable"];
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = serde_json::Map::new();
                for (col, cell) in self.columns.iter().zip(row) {
                    let value = if LABEL_COLUMNS.contains(col) {
                        serde_json::json!(cell)
                    } else {
                        match cell.parse::<f64>() {
                            Ok(v) if v.is_finite() => serde_json::json!(v),
                            _ => serde_json::json!(cell),
                        }
                    };
                    obj.insert((*col).to_string(), value);
                }
                serde_json::Value::Object(obj)
            })
            .collect();
        let doc = serde_json::json!({ "schema": self.schema, "rows": rows });
        serde_json::to_string_pretty(&doc).expect("table serialization")
    }
}

/// Writes to the path (with context on failure) or stdout.
pub fn emit(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(content.as_bytes())
            .map_err(|e| CliError::Config(format!("cannot write stdout: {e}"))),
    }
}

/// Shortest round-trip formatting for all numeric cells; scientific
/// notation outside a readable magnitude band.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v == 0.0 || (1e-4..1e16).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
