use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{Loaded, SeedSource};

/// A fresh directory for one run. Existing directories are never reused.
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, command: &str) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%.3f");
        let base = format!("{command}-{stamp}");
        for attempt in 0.. {
            let name = if attempt == 0 { base.clone() } else { format!("{base}-{attempt}") };
            let path = root.join(name);
            match std::fs::create_dir(&path) {
                Ok(()) => return Ok(RunDir { path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e).with_context(|| format!("creating {}", path.display())),
            }
        }
        unreachable!()
    }

    pub fn file(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.path.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    /// Writes via `body` and flushes.
    pub fn write_with(&self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
        let mut out = self.file(name)?;
        body(&mut out).with_context(|| format!("writing {name}"))?;
        out.flush()?;
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        self.write_with(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value).map_err(std::io::Error::other)?;
            writeln!(out)
        })
    }

    /// `run.json`: command, version, effective seed and where it came from,
    /// and the parsed configuration.
    pub fn write_manifest(&self, command: &str, loaded: &Loaded) -> Result<()> {
        let manifest = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config_path": loaded.path.display().to_string(),
            "seed": loaded.config.study.seed,
            "seed_source": loaded.seed_source,
            "seed_env": match loaded.seed_source {
                SeedSource::Environment => Some(crate::config::SEED_ENV),
                SeedSource::Config => None,
            },
            "config": loaded.config,
        });
        self.write_json("run.json", &manifest)?;
        self.write_with("config.toml", |out| out.write_all(loaded.text.as_bytes()))
    }
}
