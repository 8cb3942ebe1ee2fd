//! Network-free embedders.
//!
//! # `hashed-bow-v1`
//!
//! [`MockEmbedder`] maps text to a unit vector of `dim` components:
//!
//! 1. Features are the maximal runs of alphanumeric characters, each
//!    lowercased. A text with no such run has the single feature equal to
//!    the whole text.
//! 2. Feature `f` gets a pseudo-random vector `g_f`. For block
//!    `j = 0, 1, ..` compute `SHA-256("chunkbench-mock-v1\0" ‖ utf8(f) ‖
//!    u32_le(j))`, read the digest as four little-endian `u64` words `w`,
//!    and append `(w >> 11) · 2⁻⁵³ · 2 − 1` for each. Truncate to `dim`.
//! 3. Sum the `g_f` of all features in text order (repeats included),
//!    adding component-wise left to right in `f64`.
//! 4. Divide by the Euclidean norm (squares summed left to right, then
//!    `sqrt`). A zero sum stays zero.
//!
//! Every step is exact or a single correctly-rounded IEEE operation, so any
//! language reproduces the vectors bit-for-bit. Texts sharing words get
//! correlated vectors, which gives top-k search something to find.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::{EmbeddingProvider, EmbeddingVector, Result, RetrievalError};

pub const MOCK_DOMAIN_TAG: &[u8] = b"chunkbench-mock-v1\0";
pub(super) const DEFAULT_DIM: usize = 64;

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
    label: String,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "mock embedding dim must be positive");
        Self {
            dim,
            label: "mock".into(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, text: &str) -> EmbeddingVector {
        let mut acc = vec![0.0f64; self.dim];
        for feature in features(text) {
            for (a, g) in acc.iter_mut().zip(feature_vector(&feature, self.dim)) {
                *a += g;
            }
        }
        let norm = acc.iter().fold(0.0, |s, x| s + x * x).sqrt();
        if norm > 0.0 {
            for a in &mut acc {
                *a /= norm;
            }
        }
        EmbeddingVector(acc)
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn label(&self) -> &str {
        &self.label
    }

    fn cache_id(&self) -> String {
        format!("mock:hashed-bow-v1:{}", self.dim)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(RetrievalError::EmptyInput);
        }
        Ok(texts.iter().map(|t| self.embed(t)).collect())
    }
}

fn features(text: &str) -> Vec<String> {
    let feats: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect();
    if feats.is_empty() {
        vec![text.to_owned()]
    } else {
        feats
    }
}

fn feature_vector(feature: &str, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim + 3);
    let mut block: u32 = 0;
    while out.len() < dim {
        let mut h = Sha256::new();
        h.update(MOCK_DOMAIN_TAG);
        h.update(feature.as_bytes());
        h.update(block.to_le_bytes());
        let digest = h.finalize();
        for word in digest.chunks_exact(8) {
            let w = u64::from_le_bytes(word.try_into().expect("8-byte chunk"));
            out.push((w >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0);
        }
        block += 1;
    }
    out.truncate(dim);
    out
}

/// Returns fixed vectors for known texts. Unknown texts are an error, which
/// keeps hand-built test scenarios honest.
#[derive(Debug, Clone, Default)]
pub struct ScriptedEmbedder {
    label: String,
    table: HashMap<String, EmbeddingVector>,
}

impl ScriptedEmbedder {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            table: HashMap::new(),
        }
    }

    pub fn with(mut self, text: impl Into<String>, values: Vec<f64>) -> Self {
        let v = EmbeddingVector::new(values).expect("scripted vectors must be finite");
        self.table.insert(text.into(), v);
        self
    }
}

impl EmbeddingProvider for ScriptedEmbedder {
    fn label(&self) -> &str {
        &self.label
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        texts
            .iter()
            .map(|t| {
                self.table.get(t).cloned().ok_or_else(|| {
                    RetrievalError::ProviderError {
                        status: 404,
                        body: format!("no scripted vector for {t:?}"),
                    }
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::cosine_similarity;

    fn texts(t: &[&str]) -> Vec<String> {
        t.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let m = MockEmbedder::new(64);
        let v = m.embed_batch(&texts(&["a", "a", "b"])).unwrap();
        assert_eq!(v[0], v[1]);
        assert!((v[0].norm() - 1.0).abs() < 1e-12);
        assert!((v[2].norm() - 1.0).abs() < 1e-12);
        assert!(cosine_similarity(&v[0], &v[2]) < 1.0);
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        let m = MockEmbedder::new(16);
        assert_eq!(m.embed("Beta, gamma!"), m.embed("beta gamma"));
        assert_ne!(m.embed("?!"), m.embed("??"));
        assert_eq!(m.embed("x").dim(), 16);
        assert_eq!(MockEmbedder::new(3).embed("x").dim(), 3);
    }

    #[test]
    fn shared_words_raise_similarity() {
        let m = MockEmbedder::new(64);
        let q = m.embed("metformin lowered HbA1c");
        let hit = m.embed("metformin plus exercise lowered HbA1c by 0.9 points");
        let miss = m.embed("the backdoor beacons over HTTPS");
        assert!(cosine_similarity(&q, &hit) > cosine_similarity(&q, &miss));
    }

    #[test]
    fn vectors_match_reference_values() {
        // frozen from tools/golden_oracle.py (Python hashlib)
        assert_eq!(
            feature_vector("a", 6),
            [
                -0.09239100656385824,
                0.8818266755433983,
                0.5021519272258788,
                -0.6390326665507449,
                -0.37244439308877375,
                0.5380857579010709
            ]
        );
        assert_eq!(
            MockEmbedder::new(8).embed("Alpha beta").values(),
            [
                -0.40083902136755556,
                0.609540122227012,
                -0.056136541962631306,
                -0.3619546034248431,
                -0.5209223100301611,
                -0.006759026892586883,
                -0.014034588523671775,
                0.24904570836273984
            ]
        );
    }

    #[test]
    fn scripted_embedder_rejects_unknown_text() {
        let s = ScriptedEmbedder::new("s").with("q", vec![1.0, 0.0]);
        assert_eq!(s.embed_batch(&texts(&["q"])).unwrap()[0].values(), &[1.0, 0.0]);
        assert!(s.embed_batch(&texts(&["other"])).is_err());
    }
}
