//! Run manifests: the resolved invocation recorded next to a run's outputs
//! so the run can be replayed exactly.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::args::Command;

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub seed: Option<u64>,
    pub command: Command,
}

impl RunManifest {
    pub fn new(command: &Command) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: command.name().to_string(),
            seed: command.seed(),
            command: command.clone(),
        }
    }
}

/// Write `manifest.json` into the run's output directory.
pub fn write(dir: &Path, command: &Command) -> anyhow::Result<()> {
    let manifest = RunManifest::new(command);
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), json + "\n")
        .with_context(|| format!("writing manifest under {}", dir.display()))?;
    Ok(())
}

pub fn load(path: &Path) -> anyhow::Result<RunManifest> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading manifest {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
}
