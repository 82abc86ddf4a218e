//! Output files: every file opens with the toolkit version and the resolved
//! configuration, and is written to a temporary name before being renamed
//! into place.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use tempfile::NamedTempFile;

use crate::config::Config;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Outputs {
    dir: PathBuf,
    command: &'static str,
    header: Vec<String>,
}

impl Outputs {
    pub fn new(command: &'static str, config: &Config) -> Result<Self, CliError> {
        let dir = config.out_dir();
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::data("prepare output", format!("{}: {e}", dir.display())))?;
        let mut header = vec![format!("mltc {VERSION}"), format!("command = {command}")];
        header.extend(config.render().lines().map(str::to_owned));
        Ok(Outputs { dir, command, header })
    }

    /// Header lines without comment markers.
    pub fn header_lines(&self) -> &[String] {
        &self.header
    }

    /// Header as `#` comment lines.
    pub fn header_comment(&self) -> String {
        self.header.iter().map(|l| format!("# {l}\n")).collect()
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `body` preceded by the comment header.
    pub fn write(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        self.write_raw(name, &format!("{}{body}", self.header_comment()))
    }

    /// Writes `content` verbatim; the caller embeds the header itself.
    pub fn write_raw(&self, name: &str, content: &str) -> Result<PathBuf, CliError> {
        let target = self.path(name);
        atomic_write(&self.dir, &target, content.as_bytes())
            .map_err(|e| CliError::data("write output", format!("{}: {e}", target.display())))?;
        Ok(target)
    }

    /// Wall-clock since `started` and peak memory, kept apart from the
    /// deterministic outputs.
    pub fn write_timing(&self, workers: usize, started: Instant) -> Result<(), CliError> {
        let mut body = format!(
            "command = {}\nworkers = {workers}\nwall_clock_seconds = {:.3}\n",
            self.command,
            started.elapsed().as_secs_f64()
        );
        match peak_memory_kb() {
            Some(kb) => body.push_str(&format!("peak_memory_kb = {kb}\n")),
            None => body.push_str("peak_memory_kb = unavailable\n"),
        }
        self.write_raw("timing.txt", &format!("# mltc {VERSION}\n{body}"))?;
        Ok(())
    }
}

fn atomic_write(dir: &Path, target: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(target).map_err(|e| e.error)?;
    Ok(())
}

/// Resident-set high-water mark from `/proc/self/status`, where available.
fn peak_memory_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}
