//! CSV and JSON Lines artifacts.
//!
//! Every CSV starts with one `#` comment line naming the tool version, the
//! hash of the resolved configuration and the master seed, followed by a
//! header row. Floats use Rust's shortest round-trip exponent form, so
//! identical runs produce identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance carried by every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub master_seed: u64,
}

impl Provenance {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            tool: "dyadic",
            version: VERSION,
            config_sha256: cfg.hash(),
            master_seed: cfg.run.master_seed,
        }
    }

    pub fn comment_line(&self) -> String {
        format!(
            "# {} {} config_sha256={} master_seed={}",
            self.tool, self.version, self.config_sha256, self.master_seed
        )
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

/// Builds a CSV artifact in memory.
pub struct CsvTable {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| fmt_f64(x)).collect());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self, prov: &Provenance) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        writeln!(out, "{}", prov.comment_line())?;
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(&self.columns).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush()?;
        drop(w);
        Ok(out)
    }

    pub fn write(&self, path: &Path, prov: &Provenance) -> Result<()> {
        std::fs::write(path, self.to_bytes(prov)?)?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// Line-delimited JSON writer.
pub struct JsonLines {
    w: BufWriter<File>,
}

impl JsonLines {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            w: BufWriter::new(File::create(path)?),
        })
    }

    pub fn write<T: Serialize>(&mut self, kind: &str, value: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Tagged<'a, T> {
            kind: &'a str,
            #[serde(flatten)]
            value: &'a T,
        }
        serde_json::to_writer(&mut self.w, &Tagged { kind, value })?;
        self.w.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_comment_and_header() {
        let cfg = RunConfig::default();
        let prov = Provenance::new(&cfg);
        let mut t = CsvTable::new(["t", "x"]);
        t.push_f64(&[0.0, 1.5]);
        t.push_f64(&[0.1, 1e-20]);
        let s = String::from_utf8(t.to_bytes(&prov).unwrap()).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[0].starts_with("# dyadic ") && lines[0].contains(&cfg.hash()));
        assert!(lines[0].ends_with("master_seed=0"));
        assert_eq!(lines[1], "t,x");
        assert_eq!(lines[2], "0e0,1.5e0");
        assert_eq!(lines[3], "1e-1,1e-20");
    }

    #[test]
    fn jsonl_lines_are_tagged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let mut j = JsonLines::create(&path).unwrap();
        j.write("config", &RunConfig::default().model).unwrap();
        j.finish().unwrap();
        let s = std::fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(s.lines().next().unwrap()).unwrap();
        assert_eq!(v["kind"], "config");
        assert_eq!(v["lambda"], 2.0);
    }
}
