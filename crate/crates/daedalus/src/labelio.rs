//! On-disk persistence of the label store.
//!
//! `labels/log.jsonl` holds one [`LogEntry`] per line and is only ever
//! appended to (and fsynced after each batch). `labels/snapshot.json` is a
//! periodic checkpoint in the snapshot document format, replaced atomically
//! via a temporary file. Opening loads the snapshot, then applies any log
//! entries beyond it; a torn last log line from an interrupted write is
//! dropped with a warning.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use daedalus_core::labels::{LabelStore, LogEntry, MergePolicy, Snapshot, Stamp};

pub const LABEL_DIR: &str = "labels";
pub const LOG_FILE: &str = "log.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
/// Log entries between two automatic snapshots.
pub const DEFAULT_SNAPSHOT_EVERY: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum LabelIoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: line {line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Store {
        path: PathBuf,
        source: daedalus_core::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LabelIoError + '_ {
    move |source| LabelIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Milliseconds since the Unix epoch.
pub fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as i64)
}

/// Canonical serialization of a snapshot document.
pub fn encode_snapshot(snapshot: &Snapshot) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(snapshot).expect("snapshot serializes");
    out.push(b'\n');
    out
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, LabelIoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| LabelIoError::Json {
        path: path.to_path_buf(),
        line: 0,
        source,
    })
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// `particle,alphabet_id,alphabet,label_id,label` rows of every assignment.
pub fn export_csv(store: &LabelStore, out: impl Write) -> io::Result<()> {
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(["particle", "alphabet_id", "alphabet", "label_id", "label"])?;
    for row in store.assignments().rows() {
        let alphabet = store.alphabet(row.1).map_err(io::Error::other)?;
        let label = alphabet.label(row.2).map_or("", |l| l.name.as_str());
        csv.write_record([
            row.0.as_str(),
            &row.1.to_string(),
            &alphabet.name,
            &row.2.to_string(),
            label,
        ])?;
    }
    csv.flush()
}

/// Persistence handle for one dataset directory. Single writer.
#[derive(Debug)]
pub struct LabelRepo {
    dir: PathBuf,
    log: File,
    persisted: usize,
    since_snapshot: usize,
    snapshot_every: usize,
}

impl LabelRepo {
    /// Opens (creating if needed) `<root>/labels` and rebuilds the store.
    /// Returns the repo, the store and warnings about recovered damage.
    pub fn open<I, S>(
        root: &Path,
        particles: I,
    ) -> Result<(LabelRepo, LabelStore, Vec<String>), LabelIoError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let dir = root.join(LABEL_DIR);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut store = LabelStore::new(particles);
        let mut warnings = Vec::new();

        let snapshot_path = dir.join(SNAPSHOT_FILE);
        if snapshot_path.exists() {
            let snapshot = read_snapshot(&snapshot_path)?;
            store
                .import_snapshot(&snapshot, MergePolicy::Reject, &Stamp::new("open", 0))
                .map_err(|source| LabelIoError::Store {
                    path: snapshot_path.clone(),
                    source,
                })?;
        }

        let log_path = dir.join(LOG_FILE);
        let mut log = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;
        let (in_file, valid_len) = Self::apply_log(&log_path, &mut store, &mut warnings)?;
        let file_len = log.metadata().map_err(io_err(&log_path))?.len();
        if valid_len < file_len {
            log.set_len(valid_len).map_err(io_err(&log_path))?;
            log.seek(SeekFrom::End(0)).map_err(io_err(&log_path))?;
        }
        let mut repo = LabelRepo {
            dir,
            log,
            persisted: in_file,
            since_snapshot: 0,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
        };
        // the snapshot may be ahead of a lost or shortened log
        if in_file < store.log().len() {
            repo.sync(&store).map_err(io_err(&log_path))?;
        }
        Ok((repo, store, warnings))
    }

    /// Applies log entries not yet in `store`. Returns the number of valid
    /// entries in the file and the byte length they occupy.
    fn apply_log(
        path: &Path,
        store: &mut LabelStore,
        warnings: &mut Vec<String>,
    ) -> Result<(usize, u64), LabelIoError> {
        let mut reader = BufReader::new(File::open(path).map_err(io_err(path))?);
        let mut line = String::new();
        let (mut count, mut offset, mut lineno) = (0usize, 0u64, 0usize);
        loop {
            line.clear();
            let read = reader.read_line(&mut line).map_err(io_err(path))?;
            if read == 0 {
                break;
            }
            lineno += 1;
            // every write ends with a newline, so a line without one is torn
            if !line.ends_with('\n') {
                warnings.push(format!(
                    "{}: dropped incomplete last line {lineno}",
                    path.display()
                ));
                break;
            }
            let entry: LogEntry =
                serde_json::from_str(line.trim_end()).map_err(|source| LabelIoError::Json {
                    path: path.to_path_buf(),
                    line: lineno,
                    source,
                })?;
            let known = store.log().len();
            let seq = entry.seq as usize;
            if seq == 0 || seq > known + 1 {
                return Err(LabelIoError::Store {
                    path: path.to_path_buf(),
                    source: daedalus_core::Error::Snapshot {
                        pointer: format!("/{lineno}/seq"),
                        message: format!(
                            "sequence gap: expected at most {}, found {seq}",
                            known + 1
                        ),
                    },
                });
            }
            if seq == known + 1 {
                store
                    .apply_entry(&entry)
                    .map_err(|source| LabelIoError::Store {
                        path: path.to_path_buf(),
                        source,
                    })?;
            } else if store.log()[seq - 1] != entry {
                return Err(LabelIoError::Store {
                    path: path.to_path_buf(),
                    source: daedalus_core::Error::Snapshot {
                        pointer: format!("/{lineno}"),
                        message: format!("log entry {seq} disagrees with the snapshot"),
                    },
                });
            }
            count += 1;
            offset += read as u64;
        }
        Ok((count, offset))
    }

    pub fn with_snapshot_every(mut self, entries: usize) -> Self {
        self.snapshot_every = entries.max(1);
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Number of log entries on disk.
    pub fn persisted(&self) -> usize {
        self.persisted
    }

    /// Appends the entries of `store` not yet on disk and fsyncs. Writes a
    /// snapshot every `snapshot_every` entries.
    pub fn sync(&mut self, store: &LabelStore) -> io::Result<()> {
        let pending = store.log().get(self.persisted..).unwrap_or_default();
        if pending.is_empty() {
            return Ok(());
        }
        let mut out = BufWriter::new(&self.log);
        for entry in pending {
            serde_json::to_writer(&mut out, entry)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        drop(out);
        self.log.sync_data()?;
        self.persisted += pending.len();
        self.since_snapshot += pending.len();
        if self.since_snapshot >= self.snapshot_every {
            self.write_snapshot(store)?;
        }
        Ok(())
    }

    pub fn write_snapshot(&mut self, store: &LabelStore) -> io::Result<()> {
        write_atomic(
            &self.dir.join(SNAPSHOT_FILE),
            &encode_snapshot(&store.export_snapshot()),
        )?;
        self.since_snapshot = 0;
        Ok(())
    }
}
