//! Output files. Every JSON document and CSV header carries the schema
//! version, the resolved configuration and the seeds used.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance<'a> {
    pub schema_version: u32,
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub seeds: Vec<u64>,
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    #[serde(flatten)]
    provenance: &'a Provenance<'a>,
    results: &'a T,
}

/// Output directory writer.
pub struct OutputDir<'a> {
    dir: PathBuf,
    provenance: Provenance<'a>,
}

impl<'a> OutputDir<'a> {
    pub fn create(command: &'a str, config: &'a RunConfig, seeds: Vec<u64>) -> Result<Self, CliError> {
        fs::create_dir_all(&config.out)?;
        Ok(Self {
            dir: config.out.clone(),
            provenance: Provenance { schema_version: SCHEMA_VERSION, command, config, seeds },
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, results: &T) -> Result<PathBuf, CliError> {
        let doc = Document { provenance: &self.provenance, results };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        let path = self.path(name);
        fs::write(&path, text)?;
        Ok(path)
    }

    /// Writes `# key=value` provenance lines, the column header, then `rows`.
    pub fn write_csv(&self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut w = std::io::BufWriter::new(fs::File::create(&path)?);
        csv_header(&mut w, &self.provenance)?;
        writeln!(w, "{}", columns.join(","))?;
        for r in rows {
            writeln!(w, "{}", r.join(","))?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, bytes)?;
        Ok(path)
    }
}

pub fn csv_header<W: Write>(w: &mut W, p: &Provenance) -> Result<(), CliError> {
    writeln!(w, "# schema_version={}", p.schema_version)?;
    writeln!(w, "# command={}", p.command)?;
    writeln!(w, "# config={}", serde_json::to_string(p.config)?)?;
    let seeds: Vec<String> = p.seeds.iter().map(u64::to_string).collect();
    writeln!(w, "# seeds={}", seeds.join(" "))?;
    Ok(())
}

/// Strips the `#` provenance lines of a CSV file written here.
pub fn csv_body(path: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect())
}
