//! CSV artifact writing. Every file starts with a comment line carrying the
//! config hash and effective seed so artifacts are traceable to their inputs.

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

pub fn config_hash(config_text: &str) -> String {
    let digest = Sha256::digest(config_text.as_bytes());
    let mut hex = String::with_capacity(64);
    for b in digest {
        write!(hex, "{b:02x}").unwrap();
    }
    hex
}

/// A cell is formatted with `Display`, which for floats emits the shortest
/// string that round-trips — byte-stable across runs and thread counts.
pub enum Cell {
    F(f64),
    U(u64),
    S(String),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::F(v) => write!(f, "{v}"),
            Cell::U(v) => write!(f, "{v}"),
            Cell::S(v) => write!(f, "{v}"),
        }
    }
}

pub struct CsvFile {
    buffer: String,
    columns: usize,
}

impl CsvFile {
    pub fn new(hash: &str, seed: u64, columns: &[&str]) -> Self {
        let mut buffer = String::new();
        writeln!(buffer, "# config_hash={hash} seed={seed}").unwrap();
        writeln!(buffer, "{}", columns.join(",")).unwrap();
        CsvFile { buffer, columns: columns.len() }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        assert_eq!(cells.len(), self.columns, "row width mismatch");
        let line: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
        writeln!(self.buffer, "{}", line.join(",")).unwrap();
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<()> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output dir {}", dir.display()))?;
        let path = dir.join(name);
        std::fs::write(&path, &self.buffer)
            .with_context(|| format!("writing {}", path.display()))
    }
}
