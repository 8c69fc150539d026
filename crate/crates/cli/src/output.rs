//! Artifact writers: CSV tables, the run manifest, and the failure marker.
//!
//! Float cells use the shortest round-trip decimal form, so re-running a
//! config with identical inputs reproduces every file byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use toml::value::Table;
use toml::Value;

/// Resolved artifact locations for one run: everything derives from the
/// output directory and the config's output stem.
#[derive(Debug, Clone)]
pub struct Artifacts {
    dir: PathBuf,
    stem: String,
    written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path, stem: &str) -> Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Artifacts { dir: dir.to_path_buf(), stem: stem.to_string(), written: Vec::new() })
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}{suffix}", self.stem))
    }

    pub fn csv_path(&self, tag: Option<&str>) -> PathBuf {
        match tag {
            Some(t) => self.path(&format!("_{t}.csv")),
            None => self.path(".csv"),
        }
    }

    pub fn write_csv(&mut self, tag: Option<&str>, header: &[&str], rows: &[Vec<Cell>]) -> Result<PathBuf> {
        let path = self.csv_path(tag);
        let mut text = String::new();
        text.push_str(&header.join(","));
        text.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), header.len(), "CSV row width mismatch");
            let line: Vec<String> = row.iter().map(Cell::render).collect();
            text.push_str(&line.join(","));
            text.push('\n');
        }
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        self.record(&path);
        Ok(path)
    }

    pub fn write_manifest(&mut self, manifest: &Table) -> Result<PathBuf> {
        let path = self.path(".manifest.toml");
        let text = toml::to_string_pretty(&Value::Table(manifest.clone()))
            .context("cannot serialize manifest")?;
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        self.record(&path);
        Ok(path)
    }

    /// Marks the run as failed, preserving whatever artifacts exist.
    pub fn write_failed_marker(&self, message: &str) {
        let path = self.path(".FAILED");
        let _ = fs::write(&path, format!("{message}\n"));
    }

    fn record(&mut self, path: &Path) {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned());
        if let Some(name) = name {
            if !self.written.contains(&name) {
                self.written.push(name);
            }
        }
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

/// One CSV cell; numbers render in shortest round-trip form.
#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => format!("{v}"),
            Cell::Bool(v) => format!("{v}"),
        }
    }
}

pub fn table(entries: Vec<(&str, Value)>) -> Table {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub fn float_array(values: &[f64]) -> Value {
    Value::Array(values.iter().map(|v| Value::Float(*v)).collect())
}

pub fn string_array(values: &[String]) -> Value {
    Value::Array(values.iter().map(|v| Value::String(v.clone())).collect())
}
