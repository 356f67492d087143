//! Append-only provenance log: one JSON line per command invocation,
//! guarded by an advisory file lock.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::os::unix::io::AsRawFd;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

use mkws_core::fingerprint::sha256_hex;

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub timestamp_unix: u64,
    pub command: String,
    pub toolkit_version: String,
    pub config_hash: String,
    pub input_hashes: BTreeMap<String, String>,
    pub output_paths: Vec<String>,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn new(config_json: &str) -> Self {
        let argv: Vec<String> = std::env::args().collect();
        Self {
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            command: argv.join(" "),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: sha256_hex(config_json.as_bytes()),
            input_hashes: BTreeMap::new(),
            output_paths: Vec::new(),
        wall_time_s: 0.0,
        }
    }

    /// Hash an input file's bytes into the record; directories and missing
    /// paths are recorded by path only.
    pub fn add_input(&mut self, path: &Path) {
        let key = path.display().to_string();
        match std::fs::read(path) {
            Ok(bytes) => {
                self.input_hashes.insert(key, sha256_hex(&bytes));
            }
            Err(_) => {
                self.input_hashes.insert(key, "unhashed".to_string());
            }
        }
    }

    pub fn add_outputs(&mut self, outputs: &[PathBuf]) {
        for p in outputs {
            self.output_paths.push(p.display().to_string());
        }
    }
}

/// Append one record to `<dir>/runs.jsonl` under an exclusive flock.
pub fn append(dir: &Path, record: &RunRecord) -> Result<()> {
    std::fs::create_dir_all(dir).ok();
    let path = dir.join("runs.jsonl");
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .with_context(|| format!("opening run log {}", path.display()))?;
    let fd = file.as_raw_fd();
    // advisory lock; released when the fd closes
    unsafe {
        libc::flock(fd, libc::LOCK_EX);
    }
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    file.write_all(line.as_bytes())?;
    unsafe {
        libc::flock(fd, libc::LOCK_UN);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appends_json_lines() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = RunRecord::new("{}");
        rec.wall_time_s = 1.25;
        rec.add_outputs(&[dir.path().join("model.mkws")]);
        append(dir.path(), &rec).unwrap();
        append(dir.path(), &rec).unwrap();

        let text = std::fs::read_to_string(dir.path().join("runs.jsonl")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(v["wall_time_s"], 1.25);
        assert!(v["config_hash"].as_str().unwrap().len() == 64);
    }

    #[test]
    fn input_hash_stable() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("input.bin");
        std::fs::write(&f, b"payload").unwrap();
        let mut a = RunRecord::new("{}");
        a.add_input(&f);
        let mut b = RunRecord::new("{}");
        b.add_input(&f);
        assert_eq!(a.input_hashes, b.input_hashes);
    }
}
