//! Run manifests: a JSON record (config echo, version, timing, outcome
//! notes) written next to every command's outputs. Only the `timing` block
//! varies between identical reruns.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

#[derive(Serialize)]
pub struct Timing {
    pub started_unix_secs: u64,
    pub duration_secs: f64,
}

#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub jobs: Option<usize>,
    pub notes: Vec<String>,
    pub timing: Timing,
}

pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    jobs: Option<usize>,
    notes: Vec<String>,
    started: SystemTime,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config,
            jobs: None,
            notes: Vec::new(),
            started: SystemTime::now(),
        }
    }

    pub fn jobs(mut self, jobs: Option<usize>) -> Self {
        self.jobs = jobs;
        self
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn write(self, dir: &Path) -> std::io::Result<()> {
        let started_unix_secs = self
            .started
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let duration_secs = self.started.elapsed().map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            jobs: self.jobs,
            notes: self.notes,
            timing: Timing {
                started_unix_secs,
                duration_secs,
            },
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), text)
    }
}
