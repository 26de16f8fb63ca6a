//! Report writers. Reports never embed paths, times or host details so that
//! re-runs are byte-identical.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

/// `path` with `suffix` appended to the full file name.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

/// Comma-delimited table preceded by `# key=value` lines. Meta lines always
/// precede the rows, whenever they are added.
#[derive(Default)]
pub struct Table {
    head: String,
    body: String,
}

impl Table {
    pub fn new(title: &str) -> Self {
        Self {
            head: format!("# {title}\n"),
            body: String::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.head.push_str(&format!("# {key}={value}\n"));
        self
    }

    pub fn header(&mut self, columns: &[&str]) -> &mut Self {
        self.body.push_str(&columns.join(","));
        self.body.push('\n');
        self
    }

    pub fn row(&mut self, cells: &[&dyn Display]) -> &mut Self {
        let cells: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, format!("{}{}", self.head, self.body).as_bytes())
    }
}

/// Empty cell for missing values.
pub fn opt<T: Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}
