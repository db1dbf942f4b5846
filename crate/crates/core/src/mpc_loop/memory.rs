use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use super::record::TaskRecord;
use super::LoopError;

/// A line of the memory file that could not be read back.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedLine {
    /// 1-based line number.
    pub line: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemoryContents {
    pub records: Vec<TaskRecord>,
    pub skipped: Vec<SkippedLine>,
}

/// Append-only NDJSON store of task records.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceMemory {
    path: PathBuf,
}

impl ExperienceMemory {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn io_err(&self, source: std::io::Error) -> LoopError {
        LoopError::Io {
            path: self.path.display().to_string(),
            source,
        }
    }

    /// Appends one record as a single line and flushes it to disk.
    pub fn append(&self, record: &TaskRecord) -> Result<(), LoopError> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| self.io_err(e))?;
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| self.io_err(e))?;
        f.write_all(line.as_bytes()).map_err(|e| self.io_err(e))?;
        f.sync_data().map_err(|e| self.io_err(e))
    }

    /// Reads every record. Lines that fail to parse are skipped and reported;
    /// a missing file reads as empty.
    pub fn load(&self) -> Result<MemoryContents, LoopError> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(MemoryContents::default()),
            Err(e) => return Err(self.io_err(e)),
        };
        let mut out = MemoryContents::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<TaskRecord>(line) {
                Ok(r) => out.records.push(r),
                Err(e) => {
                    log::warn!(
                        "{}:{}: skipping unreadable record: {e}",
                        self.path.display(),
                        i + 1
                    );
                    out.skipped.push(SkippedLine {
                        line: i + 1,
                        error: e.to_string(),
                    });
                }
            }
        }
        Ok(out)
    }
}
