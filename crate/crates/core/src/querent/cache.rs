//! Append-only JSONL cache of raw model replies.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::DecodingParams;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::seed::digest_hex;

/// Key over everything that can change a reply: pixels, prompt, model and
/// decoding settings.
pub fn cache_key(image: &ImageBuffer, prompt_id: &str, model_id: &str, params: &DecodingParams) -> String {
    let dims = format!("{}x{}x{}", image.width(), image.height(), image.channels());
    let params = format!("t={};max={}", params.temperature, params.max_tokens);
    digest_hex([image.pixels(), dims.as_bytes(), prompt_id.as_bytes(), model_id.as_bytes(), params.as_bytes()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedResponse {
    pub key: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

/// Reply cache, optionally backed by a file. Safe to share across threads.
#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: RwLock<HashMap<String, CachedResponse>>,
    sink: Option<(PathBuf, Mutex<File>)>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Load existing entries from `path` and append new ones to it.
    /// Unparseable trailing lines (e.g. from an interrupted write) are skipped.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut entries = HashMap::new();
        let mut torn = false;
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for line in text.lines() {
                if let Ok(r) = serde_json::from_str::<CachedResponse>(line) {
                    entries.insert(r.key.clone(), r);
                }
            }
            torn = !text.is_empty() && !text.ends_with('\n');
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if torn {
            file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(Self {
            entries: RwLock::new(entries),
            sink: Some((path.to_path_buf(), Mutex::new(file))),
        })
    }

    pub fn get(&self, key: &str) -> Option<CachedResponse> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, entry: CachedResponse) -> Result<()> {
        if let Some((path, file)) = &self.sink {
            let mut line = serde_json::to_string(&entry)?;
            line.push('\n');
            let mut f = file.lock().expect("cache file lock");
            f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        self.entries.write().expect("cache lock").insert(entry.key.clone(), entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_every_input() {
        let img = ImageBuffer::solid(4, 4, [1, 2, 3]).unwrap();
        let p = DecodingParams::default();
        let k = cache_key(&img, "p", "m", &p);
        assert_eq!(k, cache_key(&img, "p", "m", &p));
        assert_ne!(k, cache_key(&ImageBuffer::solid(4, 4, [1, 2, 4]).unwrap(), "p", "m", &p));
        assert_ne!(k, cache_key(&ImageBuffer::solid(2, 8, [1, 2, 3]).unwrap(), "p", "m", &p));
        assert_ne!(k, cache_key(&img, "q", "m", &p));
        assert_ne!(k, cache_key(&img, "p", "n", &p));
        let hot = DecodingParams { temperature: 0.7, ..p.clone() };
        assert_ne!(k, cache_key(&img, "p", "m", &hot));
    }

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/cache.jsonl");
        {
            let c = ResponseCache::open(&path).unwrap();
            c.insert(CachedResponse { key: "a".into(), response: "TEXT: NONE".into(), timestamp: Some(1) })
                .unwrap();
        }
        // simulate a torn write
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"key\":\"b\",\"resp").unwrap();
        drop(f);
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.get("a").unwrap().timestamp, Some(1));
        assert!(c.get("b").is_none());
        c.insert(CachedResponse { key: "c".into(), response: "x".into(), timestamp: None }).unwrap();
        drop(c);
        assert_eq!(ResponseCache::open(&path).unwrap().len(), 2);
    }
}
