//! Token-level retrieval metrics and their aggregation.
//!
//! Every metric compares two positional token sets: `highlights` (the
//! ground-truth tokens of a query) and `retrieved` (the tokens covered by
//! the retrieved chunks). Degenerate denominators resolve by vacuous truth:
//!
//! | case                         | value                          |
//! |------------------------------|--------------------------------|
//! | no highlight tokens          | recall = 1, precision Ω = 1    |
//! | nothing retrieved            | precision = 1 iff no highlights, else 0 |
//! | both sets empty              | IoU = 1                        |

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunking::{chunks_to_token_set, Chunk, TokenSet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("cannot aggregate an empty list of values")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricQuadruple {
    pub iou: f64,
    pub recall: f64,
    pub precision: f64,
    pub precision_omega: f64,
}

/// Set sizes a metric needs, counted once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlapCounts {
    pub highlights: usize,
    pub retrieved: usize,
    pub overlap: usize,
}

impl OverlapCounts {
    pub fn of(highlights: &TokenSet, retrieved: &TokenSet) -> Self {
        Self {
            highlights: highlights.len(),
            retrieved: retrieved.len(),
            overlap: highlights.intersection_len(retrieved),
        }
    }

    pub fn recall(&self) -> f64 {
        if self.highlights == 0 {
            1.0
        } else {
            self.overlap as f64 / self.highlights as f64
        }
    }

    pub fn precision(&self) -> f64 {
        match (self.retrieved, self.highlights) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            (r, _) => self.overlap as f64 / r as f64,
        }
    }

    pub fn iou(&self) -> f64 {
        let union = self.highlights + self.retrieved - self.overlap;
        if union == 0 {
            1.0
        } else {
            self.overlap as f64 / union as f64
        }
    }
}

pub fn recall(highlights: &TokenSet, retrieved: &TokenSet) -> f64 {
    OverlapCounts::of(highlights, retrieved).recall()
}

pub fn precision(highlights: &TokenSet, retrieved: &TokenSet) -> f64 {
    OverlapCounts::of(highlights, retrieved).precision()
}

pub fn iou(highlights: &TokenSet, retrieved: &TokenSet) -> f64 {
    OverlapCounts::of(highlights, retrieved).iou()
}

/// Best precision reachable by retrieving exactly the chunks that touch a
/// highlight token.
///
/// `all_chunks` must be the complete chunking, not a retrieval result; the
/// value depends only on chunk boundaries.
pub fn precision_omega(all_chunks: &[Chunk], highlights: &TokenSet) -> f64 {
    if highlights.is_empty() {
        return 1.0;
    }
    let touching = all_chunks
        .iter()
        .filter(|c| highlights.intersects_range(&c.doc_id, c.token_range()));
    let ideal = chunks_to_token_set(touching);
    if ideal.is_empty() {
        // highlights not covered by any chunk; nothing retrievable
        return 0.0;
    }
    highlights.intersection_len(&ideal) as f64 / ideal.len() as f64
}

/// `|t_e ∩ t_r| / (|t_r| + |t_e|)`, the literal ratio sometimes quoted for
/// precision Ω. It caps at 0.5 and uses the retrieval result, so it is kept
/// only for comparison runs.
pub fn precision_omega_literal(highlights: &TokenSet, retrieved: &TokenSet) -> f64 {
    let c = OverlapCounts::of(highlights, retrieved);
    let den = c.highlights + c.retrieved;
    if den == 0 {
        1.0
    } else {
        c.overlap as f64 / den as f64
    }
}

/// Which definition fills the `precision_omega` column.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionOmegaMode {
    /// Chunks overlapping the highlights, independent of retrieval.
    #[default]
    Procedural,
    /// [`precision_omega_literal`].
    LiteralFormula,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Arithmetic mean and sample (n − 1) standard deviation; std is 0 for a
/// single value. Sums run left to right so results are reproducible
/// bit-for-bit in other languages.
pub fn aggregate(values: &[f64]) -> Result<AggregateStats, MetricsError> {
    let n = values.len();
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let mean = values.iter().fold(0.0, |acc, v| acc + v) / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        let ss = values.iter().fold(0.0, |acc, v| acc + (v - mean) * (v - mean));
        (ss / (n - 1) as f64).sqrt()
    };
    Ok(AggregateStats { mean, std, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunking::{chunk_fixed, tokenize};
    use crate::corpus::Document;
    use proptest::prelude::*;

    fn set(idx: impl IntoIterator<Item = usize>) -> TokenSet {
        let mut s = TokenSet::new();
        for i in idx {
            s.insert("d", i);
        }
        s
    }

    fn ten_token_chunks(size: usize) -> Vec<Chunk> {
        let d = Document::new("d", "t0 t1 t2 t3 t4 t5 t6 t7 t8 t9").unwrap();
        chunk_fixed(&d, &tokenize(&d), size).unwrap()
    }

    #[test]
    fn worked_examples() {
        let te = set(0..100);
        let tr = set(30..230);
        assert_eq!(recall(&te, &tr), 0.7);
        assert_eq!(precision(&te, &tr), 0.35);
        assert_eq!(iou(&te, &tr), 70.0 / 230.0);
    }

    #[test]
    fn identity_and_disjoint() {
        let a = set(0..10);
        assert_eq!(recall(&a, &a), 1.0);
        assert_eq!(precision(&a, &a), 1.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(recall(&a, &TokenSet::new()), 0.0);
        assert_eq!(precision(&a, &set(20..25)), 0.0);
        assert_eq!(iou(&set([0, 1]), &set([1, 2])), 1.0 / 3.0);
    }

    #[test]
    fn degenerate_policy() {
        let empty = TokenSet::new();
        let some = set(0..3);
        assert_eq!(recall(&empty, &some), 1.0);
        assert_eq!(precision(&empty, &empty), 1.0);
        assert_eq!(precision(&some, &empty), 0.0);
        assert_eq!(iou(&empty, &empty), 1.0);
        assert_eq!(iou(&empty, &some), 0.0);
        assert_eq!(precision_omega(&ten_token_chunks(5), &empty), 1.0);
    }

    #[test]
    fn documents_are_separate_positions() {
        let mut a = set([0]);
        a.insert("other", 0);
        let b = set([0]);
        assert_eq!(recall(&a, &b), 0.5);
    }

    #[test]
    fn precision_omega_examples() {
        // t_e = {4,5} straddles the boundary of [0,5) and [5,10)
        assert_eq!(precision_omega(&ten_token_chunks(5), &set([4, 5])), 0.2);
        // perfectly tiled
        assert_eq!(precision_omega(&ten_token_chunks(5), &set(0..5)), 1.0);
        // each touched chunk twice the highlight
        assert_eq!(precision_omega(&ten_token_chunks(2), &set([0, 2, 4])), 0.5);
        assert_eq!(precision_omega_literal(&set(0..10), &set(0..10)), 0.5);
    }

    #[test]
    fn aggregate_cases() {
        assert_eq!(aggregate(&[0.5]).unwrap(), AggregateStats { mean: 0.5, std: 0.0, n: 1 });
        let two = aggregate(&[0.0, 1.0]).unwrap();
        assert_eq!(two.mean, 0.5);
        assert!((two.std - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(aggregate(&[]), Err(MetricsError::EmptyInput));
    }

    proptest! {
        #[test]
        fn ranges_and_identities(te in prop::collection::btree_set(0usize..64, 0..40),
                                 tr in prop::collection::btree_set(0usize..64, 0..40)) {
            let (a, b) = (set(te.iter().copied()), set(tr.iter().copied()));
            let (r, p, j) = (recall(&a, &b), precision(&a, &b), iou(&a, &b));
            for v in [r, p, j] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(j <= r.min(p) + 1e-15);
            prop_assert_eq!(iou(&a, &b), iou(&b, &a));
            if !a.is_empty() && !b.is_empty() {
                prop_assert_eq!(recall(&a, &b), precision(&b, &a));
            }
            if a.intersection_len(&b) > 0 {
                let lhs = 1.0 / j;
                let rhs = 1.0 / p + 1.0 / r - 1.0;
                prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
            }
        }

        #[test]
        fn adding_a_chunk_never_lowers_recall(te in prop::collection::btree_set(0usize..10, 1..10),
                                               picks in prop::collection::vec(0usize..5, 0..5),
                                               extra in 0usize..5) {
            let chunks = ten_token_chunks(2);
            let te = set(te);
            let before = chunks_to_token_set(picks.iter().map(|&i| &chunks[i]));
            let after = chunks_to_token_set(picks.iter().chain([&extra]).map(|&i| &chunks[i]));
            prop_assert!(recall(&te, &after) >= recall(&te, &before));
        }
    }
}
