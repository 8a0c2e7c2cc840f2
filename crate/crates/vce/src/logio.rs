//! JSON-lines action logs.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use vce_core::ActionLogEntry;

use crate::error::{Result, VceError};

pub fn write_entries<W: Write>(mut w: W, entries: &[ActionLogEntry]) -> Result<()> {
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_log(path: &Path, entries: &[ActionLogEntry]) -> Result<()> {
    let file = File::create(path).map_err(VceError::io(path))?;
    write_entries(BufWriter::new(file), entries).map_err(|e| with_path(e, path))
}

/// Appends and flushes to disk before returning.
pub fn append_log(path: &Path, entries: &[ActionLogEntry]) -> Result<()> {
    if entries.is_empty() {
        return Ok(());
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(VceError::io(path))?;
    let mut buf = Vec::new();
    write_entries(&mut buf, entries)?;
    file.write_all(&buf).map_err(VceError::io(path))?;
    file.sync_data().map_err(VceError::io(path))
}

/// Reads a log. A final line without a newline is a torn write and is
/// dropped; any other unparsable line is an error.
pub fn read_log(path: &Path) -> Result<Vec<ActionLogEntry>> {
    let file = File::open(path).map_err(VceError::io(path))?;
    let mut out = Vec::new();
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(VceError::io(path))?;
        if n == 0 {
            break;
        }
        lineno += 1;
        let complete = line.ends_with('\n');
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str(text) {
            Ok(entry) => out.push(entry),
            Err(_) if !complete => break,
            Err(e) => return Err(VceError::parse(path, format!("line {lineno}: {e}"))),
        }
    }
    Ok(out)
}

pub fn read_log_if_exists(path: &Path) -> Result<Vec<ActionLogEntry>> {
    if fs::metadata(path).is_ok() {
        read_log(path)
    } else {
        Ok(Vec::new())
    }
}

fn with_path(e: VceError, path: &Path) -> VceError {
    match e {
        VceError::Io { source, .. } => VceError::Io { path: path.to_path_buf(), source },
        other => other,
    }
}
