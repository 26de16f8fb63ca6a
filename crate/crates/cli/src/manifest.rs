//! Run manifests and replay.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::commands::{Command, Outcome};
use crate::output::{file_sha256, write_json};

pub const TOOL: &str = "unicity";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_owned(),
            sha256: file_sha256(path)?,
        })
    }
}

/// Everything needed to re-run a command and check its outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    #[serde(flatten)]
    pub command: Command,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Informational; outputs do not depend on it.
    pub workers: usize,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn new(command: Command, outcome: &Outcome, workers: usize, elapsed: Duration) -> Result<Self> {
        Ok(Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            seed: command.seed(),
            inputs: command
                .inputs()
                .iter()
                .map(|p| FileDigest::of(p))
                .collect::<Result<_>>()?,
            outputs: outcome
                .outputs
                .iter()
                .map(|p| FileDigest::of(p))
                .collect::<Result<_>>()?,
            command,
            workers,
            duration_seconds: elapsed.as_secs_f64(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Outputs of a replay whose digests differ from the manifest.
#[derive(Debug)]
pub struct ReplayMismatch(pub Vec<PathBuf>);

impl std::fmt::Display for ReplayMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} output(s) differ from the manifest", self.0.len())
    }
}

impl std::error::Error for ReplayMismatch {}

/// Re-runs `manifest` with outputs redirected into `dir` and compares
/// digests. Inputs must still match their recorded digests.
pub fn replay(manifest: &RunManifest, dir: &Path) -> Result<Vec<(FileDigest, FileDigest)>> {
    if manifest.tool != TOOL {
        bail!("not a {TOOL} manifest (tool = {:?})", manifest.tool);
    }
    if manifest.version != VERSION {
        eprintln!(
            "warning: manifest written by version {}, replaying with {VERSION}",
            manifest.version
        );
    }
    for input in &manifest.inputs {
        let now = file_sha256(&input.path)?;
        if now != input.sha256 {
            bail!("input {} changed since the recorded run", input.path.display());
        }
    }
    let mut command = manifest.command.clone();
    for (i, path) in command.outputs_mut().into_iter().enumerate() {
        let name = path
            .file_name()
            .map(|n| n.to_os_string())
            .unwrap_or_else(|| "output".into());
        let mut redirected = std::ffi::OsString::from(format!("{i}-"));
        redirected.push(name);
        *path = dir.join(redirected);
    }
    let outcome = command.run()?;
    if outcome.outputs.len() != manifest.outputs.len() {
        bail!(
            "replay wrote {} outputs, manifest lists {}",
            outcome.outputs.len(),
            manifest.outputs.len()
        );
    }
    let pairs: Vec<(FileDigest, FileDigest)> = manifest
        .outputs
        .iter()
        .zip(&outcome.outputs)
        .map(|(recorded, path)| Ok((recorded.clone(), FileDigest::of(path)?)))
        .collect::<Result<_>>()?;
    let differing: Vec<PathBuf> = pairs
        .iter()
        .filter(|(a, b)| a.sha256 != b.sha256)
        .map(|(a, _)| a.path.clone())
        .collect();
    if !differing.is_empty() {
        return Err(ReplayMismatch(differing).into());
    }
    Ok(pairs)
}
