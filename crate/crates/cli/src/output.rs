use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
struct Meta<'a> {
    file: &'a str,
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    version: &'a str,
}

/// Files produced by one command, held in memory until the command finishes
/// so that a single writer puts them on disk in a fixed order.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every file plus a `<name>.meta.json` sidecar.
    pub fn write(&self, dir: &Path, command: &str, config_hash: &str, seed: u64) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::with_capacity(2 * self.files.len());
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            let meta = Meta {
                file: name,
                command,
                config_hash,
                seed,
                version: VERSION,
            };
            let mut meta_bytes = serde_json::to_vec_pretty(&meta)?;
            meta_bytes.push(b'\n');
            let meta_path = dir.join(format!("{name}.meta.json"));
            std::fs::write(&meta_path, meta_bytes).with_context(|| format!("writing {}", meta_path.display()))?;
            written.push(path);
            written.push(meta_path);
        }
        Ok(written)
    }
}
