use std::fs;
use std::path::{Path, PathBuf};

use csdecon::io::write_atomic;
use csdecon::{Error, Result};

/// Files of one command, held in memory until every one is ready so a failed
/// run leaves nothing behind.
#[derive(Default)]
pub struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Staged {
    pub fn add(&mut self, path: PathBuf, bytes: impl Into<Vec<u8>>) {
        self.files.push((path, bytes.into()));
    }

    pub fn commit(self) -> Result<()> {
        for (path, bytes) in &self.files {
            if let Some(dir) = path.parent() {
                ensure_dir(dir)?;
            }
            write_atomic(path, bytes)?;
        }
        Ok(())
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    if dir.as_os_str().is_empty() {
        return Ok(());
    }
    fs::create_dir_all(dir).map_err(|e| Error::Format(format!("cannot create {}: {e}", dir.display())))
}

/// Serializes a header and rows into CSV bytes.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

/// Existing rows of `path` (empty if absent); the header must match.
pub fn read_csv_rows(path: &Path, header: &[&str]) -> Result<Vec<Vec<String>>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let found: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::Format(format!("{} has an unexpected header", path.display())));
    }
    r.records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()).map_err(csv_err))
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}
