//! Writes an emission to `--out` (plus the `run_meta.json` sidecar) or to stdout.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;

use stretchwalk_core::Result;

use crate::commands::Emission;
use crate::config::Flags;

pub fn emit(command: &str, flags: &Flags, e: &Emission) -> Result<()> {
    let Some(dir) = flags.out_dir() else {
        let mut out = std::io::stdout().lock();
        out.write_all(e.primary.body.as_bytes())?;
        return Ok(());
    };
    std::fs::create_dir_all(dir)?;
    for a in std::iter::once(&e.primary).chain(&e.extra) {
        std::fs::write(dir.join(&a.file), &a.body)?;
    }
    write_meta(dir, command, flags, e)
}

/// The only place wall-clock time is recorded, so primary files stay reproducible.
fn write_meta(dir: &Path, command: &str, flags: &Flags, e: &Emission) -> Result<()> {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default();
    let files: Vec<&str> = std::iter::once(&e.primary)
        .chain(&e.extra)
        .map(|a| a.file.as_str())
        .collect();
    let meta = json!({
        "command": command,
        "unix_time": now.as_secs(),
        "version": env!("CARGO_PKG_VERSION"),
        "flags": flags,
        "files": files,
    });
    let mut body = serde_json::to_string_pretty(&meta).unwrap();
    body.push('\n');
    std::fs::write(dir.join("run_meta.json"), body)?;
    Ok(())
}
