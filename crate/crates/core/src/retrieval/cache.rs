use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use sha2::{Digest, Sha256};

use super::{EmbeddingProvider, EmbeddingVector, Result};

type Key = (String, [u8; 32]);

/// Embeddings memoized by `(provider cache id, sha256(text))`.
///
/// Clones share storage, so one cache can serve concurrent sweep cells.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingCache {
    inner: Arc<RwLock<HashMap<Key, EmbeddingVector>>>,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn key(label: &str, text: &str) -> Key {
        (label.to_owned(), Sha256::digest(text.as_bytes()).into())
    }

    /// Embeds `texts` through `provider`, sending only uncached texts (each
    /// distinct text once) and filling the cache with the answers.
    pub fn embed(
        &self,
        provider: &dyn EmbeddingProvider,
        texts: &[String],
    ) -> Result<Vec<EmbeddingVector>> {
        let id = provider.cache_id();
        let keys: Vec<Key> = texts.iter().map(|t| Self::key(&id, t)).collect();
        let mut missing: Vec<String> = Vec::new();
        {
            let map = self.inner.read().expect("cache lock poisoned");
            let mut queued = std::collections::HashSet::new();
            for (t, k) in texts.iter().zip(&keys) {
                if !map.contains_key(k) && queued.insert(k.clone()) {
                    missing.push(t.clone());
                }
            }
        }
        if !missing.is_empty() {
            let fresh = provider.embed_batch(&missing)?;
            super::check_uniform(&fresh, missing.len())?;
            let mut map = self.inner.write().expect("cache lock poisoned");
            for (t, v) in missing.iter().zip(fresh) {
                map.insert(Self::key(&id, t), v);
            }
        }
        let map = self.inner.read().expect("cache lock poisoned");
        Ok(keys.iter().map(|k| map[k].clone()).collect())
    }
}

/// Wraps a provider so every call goes through an [`EmbeddingCache`].
pub struct CachedEmbedder<P> {
    provider: P,
    cache: EmbeddingCache,
}

impl<P: EmbeddingProvider> CachedEmbedder<P> {
    pub fn new(provider: P, cache: EmbeddingCache) -> Self {
        Self { provider, cache }
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedEmbedder<P> {
    fn label(&self) -> &str {
        self.provider.label()
    }

    fn cache_id(&self) -> String {
        self.provider.cache_id()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        self.cache.embed(&self.provider, texts)
    }
}
