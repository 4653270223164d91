//! CSV emission and ingestion.
//!
//! Every output file starts with a single `#` metadata line carrying the
//! tool version, the file kind, and the canonical config hash, followed by a
//! column header and rows. No timestamps or absolute paths appear anywhere,
//! so reruns with the same effective config are byte-identical.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Shortest round-trip decimal representation; deterministic.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone)]
pub struct FileMeta {
    pub kind: String,
    pub config_hash: String,
    /// Extra key=value pairs, emitted in insertion order.
    pub extras: Vec<(String, String)>,
}

impl FileMeta {
    pub fn new(kind: &str, config_hash: &str) -> Self {
        Self {
            kind: kind.into(),
            config_hash: config_hash.into(),
            extras: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.extras.push((key.into(), value.into()));
        self
    }

    pub fn header_line(&self) -> String {
        let mut line = format!(
            "# dde-bounds v{} kind={} ",
            env!("CARGO_PKG_VERSION"),
            self.kind
        );
        for (k, v) in &self.extras {
            line.push_str(&format!("{k}={v} "));
        }
        line.push_str(&format!("config_sha256={}", self.config_hash));
        line
    }
}

pub fn write_csv(
    path: &Path,
    meta: &FileMeta,
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| format!("cannot create {}: {e}", parent.display()))?;
        }
    }
    let mut out = String::new();
    out.push_str(&meta.header_line());
    out.push('\n');
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)
        .map_err(|e| format!("cannot create {}: {e}", path.display()))?;
    file.write_all(out.as_bytes())
        .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    Ok(())
}

/// A parsed CSV output file.
#[derive(Debug, Clone)]
pub struct CsvFile {
    pub meta: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvFile {
    pub fn read(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| format!("{}: empty file", path.display()))?;
        if !header.starts_with('#') {
            return Err(format!("{}: missing metadata header", path.display()));
        }
        let mut meta = BTreeMap::new();
        for token in header.trim_start_matches('#').split_whitespace() {
            if let Some((k, v)) = token.split_once('=') {
                meta.insert(k.to_string(), v.to_string());
            }
        }
        let columns: Vec<String> = lines
            .next()
            .ok_or_else(|| format!("{}: missing column header", path.display()))?
            .split(',')
            .map(str::to_string)
            .collect();
        let rows = lines
            .filter(|l| !l.is_empty())
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
        Ok(Self {
            meta,
            columns,
            rows,
        })
    }

    pub fn kind(&self) -> &str {
        self.meta.get("kind").map(String::as_str).unwrap_or("")
    }

    pub fn column_index(&self, name: &str) -> Result<usize, String> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| format!("column {name} not found"))
    }

    /// Numeric column; empty cells become NaN.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>, String> {
        let idx = self.column_index(name)?;
        self.rows
            .iter()
            .map(|r| {
                let cell = r.get(idx).map(String::as_str).unwrap_or("");
                if cell.is_empty() {
                    Ok(f64::NAN)
                } else {
                    cell.parse::<f64>()
                        .map_err(|e| format!("bad numeric cell {cell:?}: {e}"))
                }
            })
            .collect()
    }

    pub fn string_column(&self, name: &str) -> Result<Vec<String>, String> {
        let idx = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[idx].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -42.5, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let meta = FileMeta::new("bounds", "deadbeef").with("model", "vdp");
        let rows = vec![
            vec!["0".into(), "1.5".into()],
            vec!["0.5".into(), "2.25".into()],
        ];
        write_csv(&path, &meta, &["t", "v"], &rows).unwrap();
        let parsed = CsvFile::read(&path).unwrap();
        assert_eq!(parsed.kind(), "bounds");
        assert_eq!(parsed.meta.get("model").unwrap(), "vdp");
        assert_eq!(parsed.meta.get("config_sha256").unwrap(), "deadbeef");
        assert_eq!(parsed.numeric_column("v").unwrap(), vec![1.5, 2.25]);
    }
}
