//! Response cache.
//!
//! One file per entry under the cache directory, named by the hex cache key.
//! Entries are written to a temporary file and renamed into place, so
//! concurrent readers never observe a partial entry. A corrupt entry is
//! ignored with a warning and recomputed (which repairs it).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backend, ClientError, CompletionRequest, CompletionResponse};

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    cache_key: String,
    model_id: String,
    prompt_hash: String,
    response: CompletionResponse,
}

/// Completes via the cache: a hit returns the stored response with
/// `from_cache = true` and no backend call; a miss calls the backend and
/// persists the result.
pub fn cached_complete(
    request: &CompletionRequest,
    backend: &Backend,
    cache_dir: &Path,
) -> Result<CompletionResponse, ClientError> {
    request.validate()?;
    std::fs::create_dir_all(cache_dir).map_err(|e| ClientError::Cache {
        path: cache_dir.to_path_buf(),
        message: format!("cannot create cache directory: {e}"),
    })?;
    let key = request.cache_key();
    let path = cache_dir.join(format!("{key}.json"));
    if path.exists() {
        match read_entry(&path, &key) {
            Ok(mut response) => {
                response.from_cache = true;
                return Ok(response);
            }
            Err(reason) => {
                log::warn!("ignoring corrupt cache entry {}: {reason}", path.display());
            }
        }
    }
    let response = backend.complete(request)?;
    let entry = CacheEntry {
        cache_key: key,
        model_id: request.model_id.clone(),
        prompt_hash: request.prompt_hash(),
        response: response.clone(),
    };
    write_entry(&path, cache_dir, &entry)?;
    Ok(response)
}

fn read_entry(path: &Path, expected_key: &str) -> Result<CompletionResponse, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let entry: CacheEntry = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    if entry.cache_key != expected_key {
        return Err(format!(
            "stored key {} does not match file name",
            entry.cache_key
        ));
    }
    Ok(entry.response)
}

fn write_entry(path: &Path, cache_dir: &Path, entry: &CacheEntry) -> Result<(), ClientError> {
    let cache_err = |message: String| ClientError::Cache {
        path: path.to_path_buf(),
        message,
    };
    let mut tmp = tempfile::NamedTempFile::new_in(cache_dir)
        .map_err(|e| cache_err(format!("cannot create temp file: {e}")))?;
    let body = serde_json::to_vec_pretty(entry).expect("cache entry serializes");
    tmp.write_all(&body)
        .map_err(|e| cache_err(format!("cannot write entry: {e}")))?;
    tmp.persist(path)
        .map_err(|e| cache_err(format!("cannot persist entry: {e}")))?;
    Ok(())
}
