//! Artifact writer. Every file starts with the config hash and seed.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// SHA-256 of the canonical JSON form of the validated configuration.
pub fn config_hash(cfg: &RunConfig) -> String {
    let canonical = serde_json::to_vec(cfg).expect("configuration serializes");
    hex::encode(Sha256::digest(&canonical))
}

pub struct Artifacts<'a> {
    dir: PathBuf,
    subcommand: &'static str,
    cfg: &'a RunConfig,
    hash: String,
    written: Vec<PathBuf>,
}

impl<'a> Artifacts<'a> {
    pub fn new(dir: &Path, subcommand: &'static str, cfg: &'a RunConfig) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Artifacts { dir: dir.to_path_buf(), subcommand, cfg, hash: config_hash(cfg), written: Vec::new() })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// CSV with a `# config_hash=…,seed=…` line, then the header row.
    pub fn csv<R>(&mut self, name: &str, header: &[&str], rows: R) -> Result<()>
    where
        R: IntoIterator<Item = Vec<String>>,
    {
        let path = self.dir.join(name);
        let mut buf = format!("# config_hash={},seed={}\n", self.hash, self.cfg.run.seed).into_bytes();
        {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
            w.write_record(header)?;
            for row in rows {
                w.write_record(&row)?;
            }
            w.flush()?;
        }
        fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    /// One JSON document: metadata, the effective configuration and `result`.
    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'b, T> {
            schema_version: u32,
            subcommand: &'b str,
            config_hash: &'b str,
            seed: u64,
            config: &'b RunConfig,
            result: &'b T,
        }
        let doc = Doc {
            schema_version: SCHEMA_VERSION,
            subcommand: self.subcommand,
            config_hash: &self.hash,
            seed: self.cfg.run.seed,
            config: self.cfg,
            result,
        };
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }
}

/// Shortest round-trip formatting; non-finite values as `inf`, `-inf`, `nan`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}
