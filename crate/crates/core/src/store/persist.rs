use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EmbeddedQuery, PolicyStore, StoreError};
use crate::clock::Clock;
use crate::embed::EmbeddingProvider;
use crate::policy::{parse_policy_file, PolicyId};

pub const CACHE_FILE: &str = "embeddings.cache";
const CACHE_FORMAT: &str = "govgate-embeddings";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    version: u32,
    provider_signature: String,
    dimension: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    policy_id: PolicyId,
    query: String,
    vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum CacheStatus {
    Reused,
    Rebuilt(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub policies: usize,
    pub cache: CacheStatus,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_owned(), source }
}

type CachedVectors = HashMap<(PolicyId, String), Vec<f64>>;

fn read_cache(path: &Path, embedder: &dyn EmbeddingProvider) -> Result<CachedVectors, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("unreadable: {e}"))?;
    let mut lines = text.lines();
    let header: CacheHeader = lines
        .next()
        .ok_or("empty file")
        .and_then(|l| serde_json::from_str(l).map_err(|_| "bad header"))?;
    if header.format != CACHE_FORMAT || header.version != CACHE_VERSION {
        return Err("unsupported format".into());
    }
    if header.provider_signature != embedder.signature() {
        return Err("provider signature changed".into());
    }
    if header.dimension != embedder.dimension() {
        return Err("dimension changed".into());
    }
    let mut out = HashMap::new();
    for line in lines {
        let r: CacheRecord = serde_json::from_str(line).map_err(|_| "corrupt record")?;
        if r.vector.len() != header.dimension {
            return Err("corrupt record".into());
        }
        out.insert((r.policy_id, r.query), r.vector);
    }
    Ok(out)
}

impl PolicyStore {
    /// Loads every `*.md` policy file in `dir`, reusing cached embeddings
    /// when the cache is valid for `embedder` and complete.
    pub fn load(
        dir: &Path,
        embedder: Arc<dyn EmbeddingProvider>,
        clock: Arc<dyn Clock>,
    ) -> Result<(Self, LoadReport), StoreError> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "md") && p.is_file())
            .collect();
        files.sort();

        let mut parsed = Vec::with_capacity(files.len());
        for path in files {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let policy = parse_policy_file(&text)
                .map_err(|source| StoreError::PolicyFile { path: path.clone(), source })?;
            if path.file_stem().and_then(|s| s.to_str()) != Some(policy.id.as_str()) {
                return Err(StoreError::FileNameMismatch { path, id: policy.id });
            }
            parsed.push((policy, text));
        }

        let mut cache = read_cache(&dir.join(CACHE_FILE), embedder.as_ref());
        if let Ok(vectors) = &cache {
            let complete = parsed.iter().all(|(p, _)| {
                p.nl_triggers()
                    .flat_map(|t| &t.queries)
                    .all(|q| vectors.contains_key(&(p.id.clone(), q.clone())))
            });
            if !complete {
                cache = Err("missing entries".into());
            }
        }

        let mut store = PolicyStore::new(embedder).with_clock(clock);
        let count = parsed.len();
        for (policy, text) in parsed {
            let embedded = match &cache {
                Ok(vectors) => policy
                    .nl_triggers()
                    .flat_map(|t| &t.queries)
                    .map(|q| EmbeddedQuery {
                        query: q.clone(),
                        vector: vectors[&(policy.id.clone(), q.clone())].clone(),
                    })
                    .collect(),
                Err(_) => store.embed_queries(&policy),
            };
            store.insert(policy, text, embedded);
        }
        let cache = match cache {
            Ok(_) => CacheStatus::Reused,
            Err(reason) => CacheStatus::Rebuilt(reason),
        };
        Ok((store, LoadReport { policies: count, cache }))
    }

    /// Writes every policy file and the embeddings cache into `dir`, and
    /// removes policy files of policies no longer in the store.
    pub fn save(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for stored in self.policies.values() {
            let path = dir.join(format!("{}.md", stored.policy.id));
            fs::write(&path, &stored.source).map_err(io_err(&path))?;
        }
        for entry in fs::read_dir(dir).map_err(io_err(dir))?.flatten() {
            let path = entry.path();
            if path.extension().is_some_and(|x| x == "md") {
                let known = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .is_some_and(|s| self.policies.contains_key(&PolicyId::from(s)));
                if !known {
                    fs::remove_file(&path).map_err(io_err(&path))?;
                }
            }
        }
        self.save_cache(dir)
    }

    /// Writes only the embeddings cache.
    pub fn save_cache(&self, dir: &Path) -> Result<(), StoreError> {
        let path = dir.join(CACHE_FILE);
        let tmp = dir.join(format!("{CACHE_FILE}.tmp"));
        let mut out = Vec::new();
        let header = CacheHeader {
            format: CACHE_FORMAT.into(),
            version: CACHE_VERSION,
            provider_signature: self.embedder.signature(),
            dimension: self.embedder.dimension(),
        };
        serde_json::to_writer(&mut out, &header).expect("header serializes");
        out.push(b'\n');
        for stored in self.policies.values() {
            for q in &stored.embedded_queries {
                let record = CacheRecord {
                    policy_id: stored.policy.id.clone(),
                    query: q.query.clone(),
                    vector: q.vector.clone(),
                };
                serde_json::to_writer(&mut out, &record).expect("record serializes");
                out.push(b'\n');
            }
        }
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(&out).map_err(io_err(&tmp))?;
        drop(f);
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    /// Writes or removes the file of a single policy.
    pub fn sync_policy_file(&self, dir: &Path, id: &PolicyId) -> Result<(), StoreError> {
        let path = dir.join(format!("{id}.md"));
        match self.policies.get(id) {
            Some(stored) => fs::write(&path, &stored.source).map_err(io_err(&path)),
            None => match fs::remove_file(&path) {
                Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(io_err(&path)(e)),
                _ => Ok(()),
            },
        }
    }
}
