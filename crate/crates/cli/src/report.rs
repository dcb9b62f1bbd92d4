//! Key-value and CSV rendering of flat reports.

use crate::Format;

/// Ordered `(key, value)` rows.
#[derive(Debug, Default)]
pub struct Report {
    rows: Vec<(String, String)>,
}

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.rows.push((key.into(), value.to_string()));
        self
    }

    pub fn num(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.push(key, fmt(value))
    }

    pub fn render(&self, format: Format) -> String {
        let mut s = String::new();
        match format {
            Format::Kv => {
                for (k, v) in &self.rows {
                    s.push_str(&format!("{k} = {v}\n"));
                }
            }
            Format::Csv => {
                s.push_str("key,value\n");
                for (k, v) in &self.rows {
                    s.push_str(&format!("{k},{v}\n"));
                }
            }
        }
        s
    }
}

pub fn fmt(v: f64) -> String {
    if v == 0.0 || (1e-3..1e6).contains(&v.abs()) {
        format!("{v:.6}")
    } else {
        format!("{v:.6e}")
    }
}
