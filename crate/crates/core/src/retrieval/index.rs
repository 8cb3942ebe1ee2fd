use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{EmbeddingVector, Result, RetrievalError};
use crate::chunking::Chunk;

/// Cosine similarity clamped to `[-1, 1]`; 0 when either vector is zero.
///
/// Dimensions are assumed equal; extra components are ignored.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let dot = a
        .values()
        .iter()
        .zip(b.values())
        .fold(0.0, |acc, (x, y)| acc + x * y);
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk_id: usize,
    pub score: f64,
}

/// Top-k hits, best first; equal scores ordered by ascending chunk id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Retrieved(pub Vec<ScoredChunk>);

impl Retrieved {
    pub fn chunk_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|s| s.chunk_id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn rank(a: &ScoredChunk, b: &ScoredChunk) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.chunk_id.cmp(&b.chunk_id))
}

/// Exact brute-force cosine index. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    dim: Option<usize>,
    entries: Vec<(usize, EmbeddingVector)>,
}

impl VectorIndex {
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Builds from `(chunk_id, vector)` pairs. Chunk ids must be unique.
    pub fn from_entries(entries: Vec<(usize, EmbeddingVector)>) -> Result<Self> {
        let dim = entries.first().map(|(_, v)| v.dim());
        if let Some(d) = dim {
            if let Some((_, bad)) = entries.iter().find(|(_, v)| v.dim() != d) {
                return Err(RetrievalError::DimensionMismatch {
                    expected: d,
                    actual: bad.dim(),
                });
            }
        }
        let mut ids: Vec<usize> = entries.iter().map(|(id, _)| *id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(RetrievalError::Config("duplicate chunk id in index".into()));
        }
        Ok(Self { dim, entries })
    }

    /// Restricts the index to the given chunk ids.
    pub fn subset(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .filter(|(id, _)| keep(*id))
                .cloned()
                .collect(),
        }
    }

    /// Exact top-k by cosine similarity. Returns fewer than `k` hits only
    /// when the index holds fewer than `k` entries.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Retrieved> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        let Some(dim) = self.dim else {
            return Ok(Retrieved::default());
        };
        if query.dim() != dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: dim,
                actual: query.dim(),
            });
        }
        let mut scored: Vec<ScoredChunk> = self
            .entries
            .iter()
            .map(|(id, v)| ScoredChunk {
                chunk_id: *id,
                score: cosine_similarity(v, query),
            })
            .collect();
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, rank);
            scored.truncate(k);
        }
        scored.sort_unstable_by(rank);
        Ok(Retrieved(scored))
    }
}

pub fn build_index(chunks: &[Chunk], vectors: Vec<EmbeddingVector>) -> Result<VectorIndex> {
    if chunks.len() != vectors.len() {
        return Err(RetrievalError::LengthMismatch {
            chunks: chunks.len(),
            vectors: vectors.len(),
        });
    }
    VectorIndex::from_entries(chunks.iter().map(|c| c.chunk_id).zip(vectors).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    fn basis() -> VectorIndex {
        VectorIndex::from_entries(vec![(0, v(&[1.0, 0.0])), (1, v(&[0.0, 1.0]))]).unwrap()
    }

    fn fake_chunks(n: usize) -> Vec<Chunk> {
        (0..n)
            .map(|i| Chunk {
                chunk_id: i,
                doc_id: "d".into(),
                token_start: i,
                token_end: i + 1,
                char_start: 0,
                char_end: 1,
                text: String::new(),
            })
            .collect()
    }

    #[test]
    fn orthogonal_basis() {
        let hits = basis().search(&v(&[1.0, 0.0]), 1).unwrap();
        assert_eq!(hits.0, [ScoredChunk { chunk_id: 0, score: 1.0 }]);
        let all = basis().search(&v(&[1.0, 0.0]), 5).unwrap();
        assert_eq!(all.chunk_ids().collect::<Vec<_>>(), [0, 1]);
        assert_eq!(all.0[1].score, 0.0);
    }

    #[test]
    fn ties_break_on_chunk_id() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let idx = VectorIndex::from_entries(vec![(1, v(&[0.0, 1.0])), (0, v(&[1.0, 0.0]))]).unwrap();
        let hits = idx.search(&v(&[s, s]), 2).unwrap();
        assert_eq!(hits.chunk_ids().collect::<Vec<_>>(), [0, 1]);
        assert!((hits.0[0].score - s).abs() < 1e-12);
        assert_eq!(hits.0[0].score, hits.0[1].score);
    }

    #[test]
    fn build_errors() {
        let empty = build_index(&[], vec![]).unwrap();
        assert!(empty.search(&v(&[1.0]), 3).unwrap().is_empty());
        let two = build_index(&fake_chunks(2), vec![v(&[0.5; 8]), v(&[1.0; 8])]).unwrap();
        assert_eq!(two.dim(), Some(8));
        assert!(matches!(
            build_index(&fake_chunks(2), vec![v(&[0.5; 8]), v(&[1.0; 16])]),
            Err(RetrievalError::DimensionMismatch { expected: 8, actual: 16 })
        ));
        assert!(matches!(
            build_index(&fake_chunks(2), vec![v(&[0.5; 8])]),
            Err(RetrievalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            two.search(&v(&[1.0; 4]), 1),
            Err(RetrievalError::DimensionMismatch { .. })
        ));
        assert_eq!(two.search(&v(&[1.0; 8]), 0), Err(RetrievalError::InvalidK));
    }

    #[test]
    fn zero_vectors_score_zero() {
        let idx = VectorIndex::from_entries(vec![(0, v(&[0.0, 0.0])), (1, v(&[1.0, 1.0]))]).unwrap();
        let hits = idx.search(&v(&[-1.0, -1.0]), 2).unwrap();
        assert_eq!(hits.0[0], ScoredChunk { chunk_id: 0, score: 0.0 });
        assert!((hits.0[1].score + 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_full_sort(vals in prop::collection::vec(prop::collection::vec(-3i8..3, 3), 0..40),
                             q in prop::collection::vec(-3i8..3, 3),
                             k in 1usize..50) {
            let to = |x: &Vec<i8>| v(&x.iter().map(|&i| i as f64).collect::<Vec<_>>());
            let idx = VectorIndex::from_entries(vals.iter().enumerate().map(|(i, x)| (i, to(x))).collect()).unwrap();
            let mut naive: Vec<(f64, usize)> = vals.iter().enumerate().map(|(i, x)| (cosine_similarity(&to(x), &to(&q)), i)).collect();
            naive.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            naive.truncate(k);
            let got: Vec<(f64, usize)> = idx.search(&to(&q), k).unwrap().0.iter().map(|s| (s.score, s.chunk_id)).collect();
            prop_assert_eq!(got, naive);
        }
    }
}
