//! In-memory run artifacts and their atomic placement on disk.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::CliError;

/// CSV table with a `#` comment header describing the columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// Path relative to the output directory.
    pub path: String,
    pub comment: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(path: &str, comment: &str, columns: &[&str]) -> Self {
        Self {
            path: path.into(),
            comment: comment.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width of {}", self.path);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Integers print without exponent; other values use the shortest
    /// round-trip scientific form, so equal data gives identical text.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for line in self.comment.lines() {
            writeln!(s, "# {line}").unwrap();
        }
        writeln!(s, "{}", self.columns.join(",")).unwrap();
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| format_cell(x)).collect();
            writeln!(s, "{}", cells.join(",")).unwrap();
        }
        s
    }
}

fn format_cell(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:e}")
    }
}

/// Everything a run produces; nothing touches the disk until [`Artifacts::write`].
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub tables: Vec<Table>,
    pub files: Vec<(String, Vec<u8>)>,
    pub metadata: Map<String, Value>,
    /// Human-readable result lines printed after the run.
    pub summary: Vec<String>,
}

impl Artifacts {
    pub fn table(&self, path: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.path == path)
    }

    pub fn meta(&mut self, key: &str, value: impl serde::Serialize) {
        self.metadata.insert(key.into(), serde_json::to_value(value).expect("metadata serializes"));
    }

    /// Writes into a staging directory next to `out_dir`, then moves each
    /// entry into place; a failed write leaves `out_dir` untouched.
    pub fn write(&self, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let parent = out_dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(parent)?;
        let name = out_dir.file_name().and_then(|n| n.to_str()).unwrap_or("out");
        let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if staging.exists() {
            std::fs::remove_dir_all(&staging)?;
        }
        let result = self.write_into(&staging).and_then(|entries| {
            std::fs::create_dir_all(out_dir)?;
            let mut written = Vec::new();
            for rel in entries {
                let target = out_dir.join(&rel);
                if let Some(dir) = target.parent() {
                    std::fs::create_dir_all(dir)?;
                }
                std::fs::rename(staging.join(&rel), &target)?;
                written.push(target);
            }
            Ok(written)
        });
        let _ = std::fs::remove_dir_all(&staging);
        result.map_err(CliError::Io)
    }

    fn write_into(&self, dir: &Path) -> std::io::Result<Vec<String>> {
        let mut entries = Vec::new();
        let mut put = |rel: &str, bytes: &[u8]| -> std::io::Result<()> {
            let path = dir.join(rel);
            if let Some(p) = path.parent() {
                std::fs::create_dir_all(p)?;
            }
            std::fs::write(path, bytes)?;
            entries.push(rel.to_string());
            Ok(())
        };
        for t in &self.tables {
            put(&t.path, t.to_csv().as_bytes())?;
        }
        for (rel, bytes) in &self.files {
            put(rel, bytes)?;
        }
        let json = serde_json::to_string_pretty(&Value::Object(self.metadata.clone())).expect("metadata serializes");
        put("run.json", json.as_bytes())?;
        Ok(entries)
    }
}
