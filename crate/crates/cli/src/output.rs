//! Artifact writing: CSV/JSON files, checksums and the run manifest.
//!
//! Every file is written to a temporary sibling and renamed into place. CSV
//! floats use `{:.16e}` (17 significant digits), which round-trips `f64`
//! exactly. Each CSV starts with a `# <schema> v<version>` line; the same
//! version is listed in the manifest.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_SCHEMA: u32 = 1;

/// One cell of a CSV row.
#[derive(Debug, Clone, Copy)]
pub enum Cell<'a> {
    F(f64),
    I(usize),
    B(bool),
    S(&'a str),
}

impl From<f64> for Cell<'_> {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell<'_> {
    fn from(v: usize) -> Self {
        Cell::I(v)
    }
}

impl From<bool> for Cell<'_> {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl<'a> From<&'a str> for Cell<'a> {
    fn from(v: &'a str) -> Self {
        Cell::S(v)
    }
}

fn push_cell(line: &mut String, c: Cell) {
    match c {
        Cell::F(v) if v.is_nan() => line.push_str("nan"),
        Cell::F(v) => {
            let _ = write!(line, "{v:.16e}");
        }
        Cell::I(v) => {
            let _ = write!(line, "{v}");
        }
        Cell::B(v) => line.push_str(if v { "1" } else { "0" }),
        Cell::S(v) => line.push_str(v),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    pub name: String,
    pub schema: String,
    pub version: u32,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    /// Exact configuration; running it again reproduces the data files.
    config: &'a RunConfig,
    config_toml: String,
    threads: usize,
    wall_time_s: f64,
    files: &'a [FileRecord],
}

/// Writes the artifacts of one run into a directory.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    files: Vec<FileRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write-temp-then-rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

impl ArtifactWriter {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileRecord] {
        &self.files
    }

    fn record(&mut self, name: &str, schema: &str, version: u32, bytes: &[u8]) -> io::Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.files.push(FileRecord {
            name: name.into(),
            schema: schema.into(),
            version,
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn csv<'a, I>(&mut self, name: &str, schema: &str, version: u32, header: &[&str], rows: I) -> io::Result<()>
    where
        I: IntoIterator<Item = Vec<Cell<'a>>>,
    {
        let mut text = format!("# {schema} v{version}\n{}\n", header.join(","));
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            for (k, c) in row.into_iter().enumerate() {
                if k > 0 {
                    text.push(',');
                }
                push_cell(&mut text, c);
            }
            text.push('\n');
        }
        self.record(name, schema, version, text.as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, schema: &str, version: u32, value: &T) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        self.record(name, schema, version, text.as_bytes())
    }

    /// Writes `manifest.json` and returns its path.
    pub fn finish(self, subcommand: &str, config: &RunConfig, threads: usize, wall: Duration) -> io::Result<PathBuf> {
        let manifest = Manifest {
            schema_version: MANIFEST_SCHEMA,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config,
            config_toml: config.to_toml(),
            threads,
            wall_time_s: wall.as_secs_f64(),
            files: &self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
        text.push('\n');
        let path = self.dir.join(MANIFEST);
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_csv_cells() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let mut s = String::new();
            push_cell(&mut s, Cell::F(v));
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        let mut s = String::new();
        push_cell(&mut s, Cell::F(f64::NAN));
        assert_eq!(s, "nan");
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn writes_are_atomic_and_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path().join("out")).unwrap();
        w.csv("a.csv", "demo", 2, &["t", "x"], vec![vec![Cell::F(0.5), Cell::I(3)]]).unwrap();
        let text = fs::read_to_string(dir.path().join("out/a.csv")).unwrap();
        assert_eq!(text, "# demo v2\nt,x\n5.0000000000000000e-1,3\n");
        assert_eq!(w.files()[0].sha256, sha256_hex(text.as_bytes()));
        let leftovers: Vec<_> = fs::read_dir(dir.path().join("out"))
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
