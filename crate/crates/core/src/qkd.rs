//! QKD key sources.
//!
//! A provider hands out λ-bit keys addressed by `(stream_id, index)`; both
//! endpoints of a stream must receive the same bytes for the same handle.
//! Two providers ship: a deterministic simulator and a file of hex keys.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use thiserror::Error;

use crate::suite::{prf, HASH_LEN};
use crate::Secret;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QkdError {
    #[error("simulator seed must be at least 16 bytes, got {0}")]
    SeedTooShort(usize),
    #[error("key index {index} out of range ({available} keys available)")]
    IndexOutOfRange { index: u64, available: usize },
    #[error("line {line}: invalid hex")]
    BadHex { line: usize },
    #[error("key {index} has {got} bytes, need {need}")]
    WrongLength { index: u64, got: usize, need: usize },
    #[error("provider serves stream {serves:?}, not {asked:?}")]
    UnknownStream { serves: String, asked: String },
    #[error("key length of {0} bits is not supported")]
    UnsupportedLength(u32),
    #[error("key handle {0:?} already consumed")]
    HandleReused(QkdKeyHandle),
    #[error("cannot read key file {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QkdKeyHandle {
    pub stream_id: String,
    pub index: u64,
}

impl QkdKeyHandle {
    pub fn new(stream_id: impl Into<String>, index: u64) -> Self {
        QkdKeyHandle { stream_id: stream_id.into(), index }
    }
}

pub trait QkdProvider: Send + Sync {
    /// Returns the `lambda / 8`-byte key for `handle`.
    fn get_key(&self, handle: &QkdKeyHandle, lambda: u32) -> Result<Secret, QkdError>;
}

fn key_len(lambda: u32) -> Result<usize, QkdError> {
    if lambda == 0 || lambda % 8 != 0 {
        return Err(QkdError::UnsupportedLength(lambda));
    }
    Ok(lambda as usize / 8)
}

/// Deterministic stand-in for a QKD link:
/// `key(i) = F(seed, stream_id || i as u64 BE || lambda as u32 BE)`.
#[derive(Clone)]
pub struct Simulator {
    seed: Secret,
    stream_id: String,
}

impl Simulator {
    pub fn new(seed: &[u8], stream_id: impl Into<String>) -> Result<Self, QkdError> {
        if seed.len() < 16 {
            return Err(QkdError::SeedTooShort(seed.len()));
        }
        Ok(Simulator { seed: Secret::from_slice(seed), stream_id: stream_id.into() })
    }

    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }
}

impl QkdProvider for Simulator {
    fn get_key(&self, handle: &QkdKeyHandle, lambda: u32) -> Result<Secret, QkdError> {
        if handle.stream_id != self.stream_id {
            return Err(QkdError::UnknownStream { serves: self.stream_id.clone(), asked: handle.stream_id.clone() });
        }
        let n = key_len(lambda)?;
        if n > HASH_LEN {
            return Err(QkdError::UnsupportedLength(lambda));
        }
        let mut input = self.stream_id.as_bytes().to_vec();
        input.extend_from_slice(&handle.index.to_be_bytes());
        input.extend_from_slice(&lambda.to_be_bytes());
        Ok(Secret::from_slice(&prf(self.seed.as_bytes(), &input)[..n]))
    }
}

/// Keys read from a text file, one hex key per line; line `i` (0-based) is
/// the key for index `i` of any stream. Blank lines and `#` comments are
/// skipped without consuming an index. Longer keys are truncated to λ/8
/// bytes, shorter ones are an error. The file is re-read on every request.
pub struct FileProvider {
    path: PathBuf,
    lock: Mutex<()>,
}

impl FileProvider {
    pub fn new(path: impl AsRef<Path>) -> Result<Self, QkdError> {
        let p = FileProvider { path: path.as_ref().to_path_buf(), lock: Mutex::new(()) };
        p.load()?;
        Ok(p)
    }

    fn load(&self) -> Result<Vec<Vec<u8>>, QkdError> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let text = std::fs::read_to_string(&self.path)
            .map_err(|e| QkdError::Io { path: self.path.clone(), reason: e.to_string() })?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .map(|(n, l)| hex::decode(l.trim()).map_err(|_| QkdError::BadHex { line: n + 1 }))
            .collect()
    }
}

impl QkdProvider for FileProvider {
    fn get_key(&self, handle: &QkdKeyHandle, lambda: u32) -> Result<Secret, QkdError> {
        let need = key_len(lambda)?;
        let keys = self.load()?;
        let key = usize::try_from(handle.index)
            .ok()
            .and_then(|i| keys.get(i))
            .ok_or(QkdError::IndexOutOfRange { index: handle.index, available: keys.len() })?;
        if key.len() < need {
            return Err(QkdError::WrongLength { index: handle.index, got: key.len(), need });
        }
        Ok(Secret::from_slice(&key[..need]))
    }
}

/// Wraps a provider and refuses to hand out the same handle twice. Give each
/// endpoint its own wrapper.
pub struct ConsumeOnce<P> {
    inner: P,
    used: Mutex<HashSet<QkdKeyHandle>>,
}

impl<P: QkdProvider> ConsumeOnce<P> {
    pub fn new(inner: P) -> Self {
        ConsumeOnce { inner, used: Mutex::new(HashSet::new()) }
    }
}

impl<P: QkdProvider> QkdProvider for ConsumeOnce<P> {
    fn get_key(&self, handle: &QkdKeyHandle, lambda: u32) -> Result<Secret, QkdError> {
        let mut used = self.used.lock().unwrap_or_else(|e| e.into_inner());
        if !used.insert(handle.clone()) {
            return Err(QkdError::HandleReused(handle.clone()));
        }
        drop(used);
        self.inner.get_key(handle, lambda)
    }
}

impl<P: QkdProvider + ?Sized> QkdProvider for std::sync::Arc<P> {
    fn get_key(&self, handle: &QkdKeyHandle, lambda: u32) -> Result<Secret, QkdError> {
        (**self).get_key(handle, lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tmp(contents: &str) -> PathBuf {
        use std::sync::atomic::{AtomicUsize, Ordering};
        static N: AtomicUsize = AtomicUsize::new(0);
        let p = std::env::temp_dir().join(format!(
            "vmuckle-qkd-{}-{}.txt",
            std::process::id(),
            N.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::File::create(&p).unwrap().write_all(contents.as_bytes()).unwrap();
        p
    }

    #[test]
    fn simulator_agreement_and_distinct_indices() {
        let a = Simulator::new(&[7; 16], "link").unwrap();
        let b = Simulator::new(&[7; 16], "link").unwrap();
        let mut seen = HashSet::new();
        for i in 0..1000 {
            let h = QkdKeyHandle::new("link", i);
            let ka = a.get_key(&h, 256).unwrap();
            assert_eq!(ka, b.get_key(&h, 256).unwrap());
            assert_eq!(ka.len(), 32);
            assert!(seen.insert(ka.as_bytes().to_vec()));
        }
    }

    #[test]
    fn simulator_checks() {
        assert_eq!(Simulator::new(&[0; 15], "s").err(), Some(QkdError::SeedTooShort(15)));
        let s = Simulator::new(&[0; 16], "s").unwrap();
        assert!(matches!(s.get_key(&QkdKeyHandle::new("t", 0), 256), Err(QkdError::UnknownStream { .. })));
        assert_eq!(s.get_key(&QkdKeyHandle::new("s", 0), 128).unwrap().len(), 16);
        assert!(s.get_key(&QkdKeyHandle::new("s", 0), 512).is_err());
    }

    #[test]
    fn file_provider() {
        let k = |b: u8| hex::encode([b; 32]);
        let p = tmp(&format!("{}\n# comment\n{}\n{}\n", k(1), k(2), k(3)));
        let f = FileProvider::new(&p).unwrap();
        assert_eq!(f.get_key(&QkdKeyHandle::new("any", 1), 256).unwrap().as_bytes(), &[2; 32]);
        assert_eq!(f.get_key(&QkdKeyHandle::new("any", 1), 128).unwrap().as_bytes(), &[2; 16]);
        assert_eq!(
            f.get_key(&QkdKeyHandle::new("any", 3), 256).err(),
            Some(QkdError::IndexOutOfRange { index: 3, available: 3 })
        );
        assert!(matches!(f.get_key(&QkdKeyHandle::new("any", 0), 384), Err(QkdError::WrongLength { .. })));
        std::fs::remove_file(p).unwrap();
    }

    #[test]
    fn file_provider_bad_hex() {
        let p = tmp("abc\n");
        assert_eq!(FileProvider::new(&p).err(), Some(QkdError::BadHex { line: 1 }));
        std::fs::remove_file(p).unwrap();
    }

    #[test]
    fn consume_once() {
        let p = ConsumeOnce::new(Simulator::new(&[1; 16], "s").unwrap());
        let h = QkdKeyHandle::new("s", 4);
        p.get_key(&h, 256).unwrap();
        assert_eq!(p.get_key(&h, 256).err(), Some(QkdError::HandleReused(h)));
    }
}
