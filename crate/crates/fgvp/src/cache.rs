//! Content-addressed on-disk cache for backend responses.
//!
//! Each entry lives at `<dir>/<k[0..2]>/<k>.bin` and carries a small header:
//! magic, creation time, payload length and the SHA-256 of the payload.
//! Entries are written to a temp file and renamed into place, so concurrent
//! writers of one key leave a valid entry (last write wins; values for one
//! key are identical by construction). Anything that fails the checksum is
//! reported and treated as a miss.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

const MAGIC: &[u8; 8] = b"FGVPC01\n";
const HEADER_LEN: usize = 8 + 8 + 8 + 32;

/// Key over (endpoint, model tag, input bytes); hex SHA-256.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(endpoint: &str, model: &str, input: &[u8]) -> Self {
        let mut h = Sha256::new();
        for part in [endpoint.as_bytes(), model.as_bytes(), input] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
        CacheKey(hex::encode(h.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CacheStats {
    pub enabled: bool,
    pub entries: u64,
    pub bytes: u64,
    pub hits: u64,
    pub misses: u64,
    pub writes: u64,
    pub corrupt: u64,
}

#[derive(Debug, Default)]
pub struct DiskCache {
    dir: Option<PathBuf>,
    hits: AtomicU64,
    misses: AtomicU64,
    writes: AtomicU64,
    corrupt: AtomicU64,
}

impl DiskCache {
    /// Opens (creating if needed) a cache rooted at `dir`. A directory that
    /// cannot be written disables the cache with a warning.
    pub fn open(dir: impl Into<PathBuf>) -> Self {
        let dir = dir.into();
        match probe(&dir) {
            Ok(()) => Self {
                dir: Some(dir),
                ..Self::default()
            },
            Err(e) => {
                log::warn!("cache disabled: {} is not writable ({e})", dir.display());
                Self::disabled()
            }
        }
    }

    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn is_enabled(&self) -> bool {
        self.dir.is_some()
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn entry_path(&self, key: &CacheKey) -> Option<PathBuf> {
        let dir = self.dir.as_ref()?;
        Some(dir.join(&key.0[..2]).join(format!("{}.bin", key.0)))
    }

    pub fn get(&self, key: &CacheKey) -> Option<Vec<u8>> {
        let path = self.entry_path(key)?;
        let raw = match std::fs::read(&path) {
            Ok(raw) => raw,
            Err(_) => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                return None;
            }
        };
        match parse_entry(&raw) {
            Some(payload) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                Some(payload.to_vec())
            }
            None => {
                log::warn!("cache entry {} is corrupt; ignoring it", path.display());
                self.corrupt.fetch_add(1, Ordering::Relaxed);
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    /// Stores `value`; failures are logged, never returned.
    pub fn put(&self, key: &CacheKey, value: &[u8]) {
        let Some(path) = self.entry_path(key) else {
            return;
        };
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut bytes = Vec::with_capacity(HEADER_LEN + value.len());
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&created.to_le_bytes());
        bytes.extend_from_slice(&(value.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&Sha256::digest(value));
        bytes.extend_from_slice(value);
        match write_entry(&path, &bytes) {
            Ok(()) => {
                self.writes.fetch_add(1, Ordering::Relaxed);
            }
            Err(e) => log::warn!("cache write to {} failed: {e}", path.display()),
        }
    }

    pub fn stats(&self) -> CacheStats {
        let mut stats = CacheStats {
            enabled: self.is_enabled(),
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            writes: self.writes.load(Ordering::Relaxed),
            corrupt: self.corrupt.load(Ordering::Relaxed),
            ..CacheStats::default()
        };
        for path in self.entry_files() {
            if let Ok(meta) = std::fs::metadata(&path) {
                stats.entries += 1;
                stats.bytes += meta.len();
            }
        }
        stats
    }

    /// Removes every entry; returns how many were deleted.
    pub fn clear(&self) -> io::Result<u64> {
        let mut removed = 0;
        for path in self.entry_files() {
            std::fs::remove_file(&path)?;
            removed += 1;
        }
        Ok(removed)
    }

    fn entry_files(&self) -> Vec<PathBuf> {
        let Some(dir) = &self.dir else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let Ok(shards) = std::fs::read_dir(dir) else {
            return out;
        };
        for shard in shards.flatten() {
            if !shard.path().is_dir() {
                continue;
            }
            if let Ok(files) = std::fs::read_dir(shard.path()) {
                out.extend(
                    files
                        .flatten()
                        .map(|f| f.path())
                        .filter(|p| p.extension().is_some_and(|e| e == "bin")),
                );
            }
        }
        out.sort();
        out
    }
}

fn probe(dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = tempfile::NamedTempFile::new_in(dir)?;
    f.write_all(b"probe")?;
    Ok(())
}

fn write_entry(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let parent = path.parent().expect("entries live in a shard directory");
    std::fs::create_dir_all(parent)?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn parse_entry(raw: &[u8]) -> Option<&[u8]> {
    if raw.len() < HEADER_LEN || &raw[..8] != MAGIC {
        return None;
    }
    let len = u64::from_le_bytes(raw[16..24].try_into().ok()?) as usize;
    let payload = &raw[HEADER_LEN..];
    if payload.len() != len || Sha256::digest(payload).as_slice() != &raw[24..56] {
        return None;
    }
    Some(payload)
}
