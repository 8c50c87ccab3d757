//! On-disk response cache keyed by a hash of the full request.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedResponse {
    pub model: String,
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(ResponseCache { dir: dir.to_path_buf() })
    }

    /// SHA-256 of model, temperature and prompt.
    pub fn key(model: &str, temperature: f64, prompt: &str) -> String {
        let mut h = Sha256::new();
        h.update(model.as_bytes());
        h.update([0]);
        h.update(temperature.to_le_bytes());
        h.update(prompt.as_bytes());
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<CachedResponse> {
        let text = std::fs::read_to_string(self.path(key)).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// Writes through a temporary file so readers never see partial entries.
    pub fn put(&self, key: &str, entry: &CachedResponse) -> std::io::Result<()> {
        let tmp = self.dir.join(format!("{key}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec(entry)?)?;
        std::fs::rename(tmp, self.path(key))
    }
}
