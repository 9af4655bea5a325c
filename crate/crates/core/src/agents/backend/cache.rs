use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{BackendError, CompletionBackend, DecodeParams};
use crate::hashing;

/// Content-addressed reply store, laid out as `<dir>/<2-hex-prefix>/<hash>`.
///
/// The key is `hash(backend_name, decode_params, prompt)`. Without an inner
/// backend the cache is replay-only and a miss is an error; with one, misses
/// are forwarded and written through.
pub struct ReplayCache {
    dir: PathBuf,
    backend_name: String,
    inner: Option<Arc<dyn CompletionBackend>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl ReplayCache {
    /// Replay-only cache for replies recorded under `backend_name`.
    pub fn replay(dir: impl Into<PathBuf>, backend_name: impl Into<String>) -> Self {
        Self {
            dir: dir.into(),
            backend_name: backend_name.into(),
            inner: None,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    /// Write-through cache in front of `inner`.
    pub fn wrap(dir: impl Into<PathBuf>, inner: Arc<dyn CompletionBackend>) -> Self {
        Self {
            dir: dir.into(),
            backend_name: inner.name().to_string(),
            inner: Some(inner),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn key(&self, prompt: &str, params: &DecodeParams) -> String {
        hashing::content_hash(&[
            self.backend_name.as_bytes(),
            params.canonical().as_bytes(),
            prompt.as_bytes(),
        ])
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(key)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    fn store(&self, path: &Path, reply: &str) -> Result<(), BackendError> {
        let parent = path.parent().expect("cache path has a prefix directory");
        std::fs::create_dir_all(parent)?;
        // Concurrent writers of the same key race on rename, which is atomic.
        let tmp = parent.join(format!(
            ".{}.{:?}.tmp",
            path.file_name().and_then(|s| s.to_str()).unwrap_or("entry"),
            std::thread::current().id()
        ));
        std::fs::write(&tmp, reply)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

impl CompletionBackend for ReplayCache {
    fn name(&self) -> &str {
        &self.backend_name
    }

    fn complete(&self, prompt: &str, params: &DecodeParams) -> Result<String, BackendError> {
        let key = self.key(prompt, params);
        let path = self.path_for(&key);
        match std::fs::read_to_string(&path) {
            Ok(reply) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(reply);
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let inner = self.inner.as_ref().ok_or(BackendError::CacheMiss(key))?;
        let reply = inner.complete(prompt, params)?;
        self.store(&path, &reply)?;
        Ok(reply)
    }
}
