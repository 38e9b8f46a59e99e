use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::transport::{ApiRequest, ApiResponse, Transport, TransportError};

/// One recorded exchange. `index` counts earlier occurrences of the same
/// digest, so repeated identical requests replay in recorded order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CassetteEntry {
    pub digest: String,
    pub index: usize,
    pub response: ApiResponse,
}

pub fn read_cassette(path: &Path) -> Result<Vec<CassetteEntry>, TransportError> {
    let file = File::open(path)
        .map_err(|e| TransportError::Cassette(format!("cannot open {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| TransportError::Cassette(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line)
            .map_err(|e| TransportError::Cassette(format!("{} line {}: {e}", path.display(), n + 1)))?;
        entries.push(entry);
    }
    Ok(entries)
}

type EntryMap = HashMap<(String, usize), ApiResponse>;

fn index_entries(entries: Vec<CassetteEntry>) -> Result<EntryMap, TransportError> {
    let mut map = HashMap::with_capacity(entries.len());
    for e in entries {
        let key = (e.digest, e.index);
        if map.contains_key(&key) {
            return Err(TransportError::Cassette(format!(
                "duplicate entry for digest {} index {}",
                key.0, key.1
            )));
        }
        map.insert(key, e.response);
    }
    Ok(map)
}

fn next_index(counters: &Mutex<HashMap<String, usize>>, digest: &str) -> usize {
    let mut counters = counters.lock().expect("cassette counters poisoned");
    let slot = counters.entry(digest.to_string()).or_insert(0);
    let i = *slot;
    *slot += 1;
    i
}

/// Serves responses from a cassette only; never touches the network.
pub struct ReplayTransport {
    entries: EntryMap,
    counters: Mutex<HashMap<String, usize>>,
}

impl ReplayTransport {
    pub fn open(path: &Path) -> Result<Self, TransportError> {
        Self::from_entries(read_cassette(path)?)
    }

    pub fn from_entries(entries: Vec<CassetteEntry>) -> Result<Self, TransportError> {
        Ok(Self { entries: index_entries(entries)?, counters: Mutex::new(HashMap::new()) })
    }
}

impl Transport for ReplayTransport {
    fn send(&self, request: &ApiRequest) -> Result<ApiResponse, TransportError> {
        let digest = request.digest();
        let index = next_index(&self.counters, &digest);
        self.entries
            .get(&(digest.clone(), index))
            .cloned()
            .ok_or(TransportError::CassetteMiss { digest, index })
    }

    fn is_offline(&self) -> bool {
        true
    }
}

/// Forwards to an inner transport and appends every exchange to a cassette.
///
/// Exchanges already on the cassette are served from it, so re-running a
/// recording session only appends what is new. Holds `<cassette>.lock`
/// for its lifetime; a second writer fails to open.
pub struct RecordingTransport<T> {
    inner: T,
    existing: EntryMap,
    counters: Mutex<HashMap<String, usize>>,
    file: Mutex<File>,
    lock_path: PathBuf,
}

pub fn lock_path(cassette: &Path) -> PathBuf {
    let mut name = cassette.as_os_str().to_os_string();
    name.push(".lock");
    PathBuf::from(name)
}

impl<T: Transport> RecordingTransport<T> {
    pub fn open(inner: T, path: &Path) -> Result<Self, TransportError> {
        let lock = lock_path(path);
        OpenOptions::new().write(true).create_new(true).open(&lock).map_err(|e| {
            TransportError::Cassette(format!("cannot acquire {} ({e}); is another recorder running?", lock.display()))
        })?;
        let existing = if path.exists() {
            read_cassette(path).and_then(index_entries)
        } else {
            Ok(HashMap::new())
        };
        let file = existing.and_then(|existing| {
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map(|f| (existing, f))
                .map_err(|e| TransportError::Cassette(format!("cannot open {}: {e}", path.display())))
        });
        match file {
            Ok((existing, file)) => Ok(Self {
                inner,
                existing,
                counters: Mutex::new(HashMap::new()),
                file: Mutex::new(file),
                lock_path: lock,
            }),
            Err(e) => {
                let _ = fs::remove_file(&lock);
                Err(e)
            }
        }
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn send(&self, request: &ApiRequest) -> Result<ApiResponse, TransportError> {
        let digest = request.digest();
        let index = next_index(&self.counters, &digest);
        if let Some(resp) = self.existing.get(&(digest.clone(), index)) {
            return Ok(resp.clone());
        }
        let response = self.inner.send(request)?;
        let entry = CassetteEntry { digest, index, response };
        let mut line = serde_json::to_string(&entry).expect("entries serialize");
        line.push('\n');
        let mut file = self.file.lock().expect("cassette file poisoned");
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| TransportError::Cassette(e.to_string()))?;
        Ok(entry.response)
    }

    fn is_offline(&self) -> bool {
        self.inner.is_offline()
    }
}

impl<T> Drop for RecordingTransport<T> {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock_path);
    }
}
