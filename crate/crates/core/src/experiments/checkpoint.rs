//! Append-only replication log used to resume interrupted studies.
//!
//! Line 1 is a header naming the study kind and a digest of its configuration; every
//! further line is one finished replication as JSON. A torn final line (from a kill
//! mid-write) is dropped on reopen.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifies a replication within a study: `(grid index, replication index)`.
pub trait Keyed {
    fn key(&self) -> (usize, usize);
}

#[derive(Serialize, Deserialize, PartialEq)]
struct Header {
    study: String,
    config_digest: String,
}

pub struct Checkpoint<R> {
    file: Option<Mutex<File>>,
    done: BTreeMap<(usize, usize), R>,
}

impl<R: Keyed + Serialize + DeserializeOwned> Checkpoint<R> {
    /// A checkpoint that records nothing.
    pub fn disabled() -> Self {
        Checkpoint {
            file: None,
            done: BTreeMap::new(),
        }
    }

    /// Opens (or creates) the log at `path`. An existing log must carry the same
    /// study kind and configuration digest.
    pub fn open(path: &Path, study: &str, config_digest: &str) -> Result<Self> {
        let header = Header {
            study: study.into(),
            config_digest: config_digest.into(),
        };
        let mut done = BTreeMap::new();
        if path.exists() {
            let lines: Vec<String> = BufReader::new(File::open(path)?).lines().collect::<std::io::Result<_>>()?;
            if let Some(first) = lines.first() {
                let found: Header = serde_json::from_str(first).map_err(|e| Error::Parse {
                    line: 1,
                    message: format!("checkpoint header: {e}"),
                })?;
                if found != header {
                    return Err(Error::input(format!(
                        "checkpoint {} belongs to a different study configuration",
                        path.display()
                    )));
                }
                let last = lines.len() - 1;
                for (i, line) in lines.iter().enumerate().skip(1) {
                    match serde_json::from_str::<R>(line) {
                        Ok(r) => {
                            done.insert(r.key(), r);
                        }
                        Err(_) if i == last => {}
                        Err(e) => {
                            return Err(Error::Parse {
                                line: i + 1,
                                message: format!("checkpoint record: {e}"),
                            })
                        }
                    }
                }
            }
        }
        // Rewrite the valid prefix so appends never follow a torn line.
        let tmp = path.with_extension("tmp");
        {
            let mut f = File::create(&tmp)?;
            writeln!(f, "{}", serde_json::to_string(&header)?)?;
            for r in done.values() {
                writeln!(f, "{}", serde_json::to_string(r)?)?;
            }
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Checkpoint {
            file: Some(Mutex::new(file)),
            done,
        })
    }

    pub fn done(&self) -> &BTreeMap<(usize, usize), R> {
        &self.done
    }

    pub fn into_done(self) -> BTreeMap<(usize, usize), R> {
        self.done
    }

    /// Appends one finished replication.
    pub fn record(&self, r: &R) -> Result<()> {
        if let Some(file) = &self.file {
            let line = format!("{}\n", serde_json::to_string(r)?);
            let mut f = file.lock().expect("checkpoint lock poisoned");
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }
}
