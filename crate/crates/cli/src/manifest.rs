use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use petabc::scenario::ScenarioConfig;
use petabc::Result;

use crate::{Command, Scale};

#[derive(Serialize)]
struct Versions {
    petabc: &'static str,
    cli: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a Command,
    config: &'a ScenarioConfig,
    config_hash: String,
    seed: u64,
    scale: Scale,
    reference: Option<String>,
    outputs: &'a [String],
    versions: Versions,
}

/// SHA-256 of the canonical JSON form of the config.
pub fn config_hash(config: &ScenarioConfig) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[allow(clippy::too_many_arguments)]
pub fn write(
    out: &Path,
    command: &Command,
    config: &ScenarioConfig,
    seed: u64,
    scale: Scale,
    reference: Option<&Path>,
    outputs: &[String],
) -> Result<()> {
    let m = Manifest {
        command,
        config,
        config_hash: config_hash(config)?,
        seed,
        scale,
        reference: reference.map(|p| p.display().to_string()),
        outputs,
        versions: Versions {
            petabc: petabc::VERSION,
            cli: env!("CARGO_PKG_VERSION"),
        },
    };
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    fs::write(out.join("manifest.json"), text)?;
    Ok(())
}
