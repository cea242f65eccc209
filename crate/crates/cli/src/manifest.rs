//! `manifest.txt`: what produced an output directory.
//!
//! A directory that already holds a manifest from a different command,
//! configuration or tool version is never overwritten.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::exit::{io_error, CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const FORMAT: &str = "seqcoupon-manifest/1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    /// `(key, value)` facts about the run, in insertion order.
    pub facts: Vec<(String, String)>,
    /// `(relative path, sha256)` of every file written, sorted by path.
    pub outputs: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_toml: &str) -> Self {
        Self {
            command: command.into(),
            seed,
            config_sha256: sha256_hex(config_toml.as_bytes()),
            facts: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn fact(&mut self, key: &str, value: impl ToString) {
        self.facts.push((key.into(), value.to_string()));
    }

    pub fn output(&mut self, rel: &str, bytes: &[u8]) {
        self.outputs.push((rel.into(), sha256_hex(bytes)));
        self.outputs.sort();
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format = {FORMAT}");
        let _ = writeln!(s, "tool_version = {TOOL_VERSION}");
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "config_sha256 = {}", self.config_sha256);
        for (k, v) in &self.facts {
            let _ = writeln!(s, "fact.{k} = {v}");
        }
        for (p, h) in &self.outputs {
            let _ = writeln!(s, "output.{p} = {h}");
        }
        s
    }

    /// Reads the identity fields of an existing manifest.
    fn identity(text: &str) -> Vec<(String, String)> {
        text.lines()
            .filter_map(|l| l.split_once(" = "))
            .filter(|(k, _)| {
                matches!(
                    *k,
                    "format" | "tool_version" | "command" | "seed" | "config_sha256"
                )
            })
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    /// Refuses to reuse `dir` when it holds a manifest from another run.
    pub fn check_resume(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(io_error(path.display(), e)),
        };
        let existing = Self::identity(&text);
        let mine = Self::identity(&self.render());
        if existing != mine {
            let diff: Vec<String> = mine
                .iter()
                .filter(|kv| !existing.contains(kv))
                .map(|(k, _)| k.clone())
                .collect();
            return Err(CliError::Io(format!(
                "{} belongs to a different run (differs in: {}); refusing to overwrite",
                path.display(),
                if diff.is_empty() {
                    "format".to_string()
                } else {
                    diff.join(", ")
                }
            )));
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.render()).map_err(|e| io_error(path.display(), e))
    }
}
