//! CSV tables, JSON sidecars and gnuplot scripts. All writes go through
//! [`Output`], which remembers the checksum of every file it produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub struct Output {
    dir: PathBuf,
    checksums: BTreeMap<String, String>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), checksums: BTreeMap::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        let digest: String = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
        self.checksums.insert(name.to_string(), digest);
        Ok(())
    }

    /// Writes a CSV with the given header; every row must match its width.
    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        let path = self.path(name);
        w.write_record(header).map_err(|e| io_err(&path, e))?;
        for row in rows {
            w.write_record(row).map_err(|e| io_err(&path, e))?;
        }
        let bytes = w.into_inner().map_err(|e| io_err(&path, e))?;
        self.write_bytes(name, &bytes)
    }

    pub fn text(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        self.write_bytes(name, content.as_bytes())
    }

    /// `<command>.json`: configuration, versions, checksums of the files
    /// written so far and command-specific metadata.
    pub fn sidecar(&mut self, command: &str, config: &impl Serialize, metadata: serde_json::Value) -> Result<(), CliError> {
        let doc = serde_json::json!({
            "command": command,
            "config": config,
            "versions": {
                "billiard-cli": env!("CARGO_PKG_VERSION"),
                "breathing-billiard": breathing_billiard::VERSION,
            },
            "checksums": self.checksums,
            "metadata": metadata,
        });
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write_bytes(&format!("{command}.json"), text.as_bytes())
    }
}

/// Shortest round-trip representation, so identical runs give identical files.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub mod plot {
    /// Levels E_i(ζ) against the phase.
    pub fn levels(labels: &[usize]) -> String {
        let mut s = String::from(
            "set datafile separator ','\nset key outside right\nset xlabel 'phase ζ'\nset ylabel 'E'\n",
        );
        let curves: Vec<String> =
            labels.iter().enumerate().map(|(i, l)| format!("'levels.csv' using 1:{} with lines title '{l}'", i + 2)).collect();
        s.push_str(&format!("plot {}\n", curves.join(", \\\n     ")));
        s
    }

    pub fn energy() -> String {
        "set datafile separator ','\nset xlabel 't/T'\nset ylabel 'E'\nplot 'energy.csv' using 1:2 with lines notitle\n".into()
    }

    pub fn populations(labels: &[usize]) -> String {
        let mut s = String::from("set datafile separator ','\nset key outside right\nset xlabel 't/T'\nset ylabel 'p'\n");
        let curves: Vec<String> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| format!("'populations.csv' using 1:{} with lines title 'p_{l}'", i + 2))
            .collect();
        s.push_str(&format!("plot {}\n", curves.join(", \\\n     ")));
        s
    }

    pub fn scan(title: &str) -> String {
        format!(
            "set datafile separator ','\nset title '{title}'\nset xlabel 'ω'\nset ylabel 'E'\n\
             plot 'scan.csv' using 1:2 with linespoints pt 7 ps 0.3 title 'E_max', \\\n     \
             'scan.csv' using 1:3 with linespoints pt 7 ps 0.3 title 'E_min'\n"
        )
    }
}
