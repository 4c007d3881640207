//! Content-addressed response cache, persisted as JSONL.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::sha256_hex;

/// One recorded backend answer. Replay fixtures use the same layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub prompt_hash: String,
    pub backend_id: String,
    pub raw_text: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl CacheRecord {
    pub fn new(backend_id: &str, prompt: &str, raw_text: &str) -> Self {
        CacheRecord {
            prompt_hash: prompt_hash(prompt),
            backend_id: backend_id.to_string(),
            raw_text: raw_text.to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    sha256_hex(prompt.as_bytes())
}

pub fn read_records(path: &Path) -> Result<Vec<CacheRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            location: format!("{}:{}", path.display(), i + 1),
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

type Key = (String, String);

/// Cache keyed by (backend id, prompt hash). Writes go through to disk when
/// a path is configured, so interrupted runs resume without re-querying.
#[derive(Debug)]
pub struct ResponseCache {
    entries: Mutex<HashMap<Key, CacheRecord>>,
    sink: Option<(PathBuf, Mutex<File>)>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache {
            entries: Mutex::new(HashMap::new()),
            sink: None,
        }
    }

    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            for r in read_records(path)? {
                entries.insert((r.backend_id.clone(), r.prompt_hash.clone()), r);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(ResponseCache {
            entries: Mutex::new(entries),
            sink: Some((path.to_path_buf(), Mutex::new(file))),
        })
    }

    pub fn get(&self, backend_id: &str, prompt: &str) -> Option<CacheRecord> {
        self.entries
            .lock()
            .unwrap()
            .get(&(backend_id.to_string(), prompt_hash(prompt)))
            .cloned()
    }

    pub fn put(&self, record: CacheRecord) -> Result<()> {
        let key = (record.backend_id.clone(), record.prompt_hash.clone());
        let mut entries = self.entries.lock().unwrap();
        if entries.contains_key(&key) {
            return Ok(());
        }
        if let Some((path, file)) = &self.sink {
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            let mut f = file.lock().unwrap();
            f.write_all(line.as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| Error::io(path, e))?;
        }
        entries.insert(key, record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
