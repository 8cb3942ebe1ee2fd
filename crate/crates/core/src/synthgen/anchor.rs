//! Locating model-quoted excerpts in the source document.

use log::warn;
use thiserror::Error;

use crate::corpus::{Document, HighlightSpan};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnchorError {
    #[error("excerpt not found in document {doc_id}: {excerpt:?}")]
    NotFound { doc_id: String, excerpt: String },
    #[error("excerpt is empty")]
    Empty,
}

/// A located excerpt. `occurrences > 1` means the first match was chosen
/// among several.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anchored {
    pub span: HighlightSpan,
    pub occurrences: usize,
}

impl Anchored {
    pub fn is_ambiguous(&self) -> bool {
        self.occurrences > 1
    }
}

/// Document text with every whitespace run collapsed to one space, plus the
/// original char offset of each collapsed char (indexed by byte).
struct Collapsed {
    text: String,
    orig_at_byte: Vec<usize>,
}

fn collapse(text: &str) -> Collapsed {
    let mut out = String::with_capacity(text.len());
    let mut orig_at_byte = Vec::with_capacity(text.len());
    let mut in_ws = false;
    for (i, ch) in text.chars().enumerate() {
        let emitted = if ch.is_whitespace() {
            if in_ws {
                continue;
            }
            in_ws = true;
            ' '
        } else {
            in_ws = false;
            ch
        };
        out.push(emitted);
        orig_at_byte.resize(out.len(), i);
    }
    Collapsed {
        text: out,
        orig_at_byte,
    }
}

/// Trims and collapses whitespace runs to single spaces.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Finds `excerpt` in `doc`, treating any whitespace run as equal to any
/// other and ignoring leading/trailing whitespace of the excerpt. The span
/// uses original document offsets, so its excerpt is the exact document
/// slice. The first occurrence wins; ambiguity is logged, not fatal.
pub fn anchor_excerpt(doc: &Document, excerpt: &str) -> Result<Anchored, AnchorError> {
    let needle = collapse_whitespace(excerpt);
    if needle.is_empty() {
        return Err(AnchorError::Empty);
    }
    let hay = collapse(doc.text());
    let Some(first) = hay.text.find(&needle) else {
        return Err(AnchorError::NotFound {
            doc_id: doc.doc_id().to_owned(),
            excerpt: excerpt.to_owned(),
        });
    };

    let mut occurrences = 1;
    let step = needle.chars().next().map_or(1, char::len_utf8);
    let mut from = first + step;
    while let Some(off) = hay.text[from..].find(&needle) {
        occurrences += 1;
        from += off + step;
    }

    let last_char_len = needle.chars().next_back().map_or(1, char::len_utf8);
    let start = hay.orig_at_byte[first];
    let end = hay.orig_at_byte[first + needle.len() - last_char_len] + 1;
    if occurrences > 1 {
        warn!(
            "excerpt {:?} occurs {occurrences} times in {}; using the first at char {start}",
            needle,
            doc.doc_id()
        );
    }
    let span = HighlightSpan::from_document(doc, start, end)
        .expect("anchored span lies inside the document");
    Ok(Anchored { span, occurrences })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate_span;

    fn doc(t: &str) -> Document {
        Document::new("d", t).unwrap()
    }

    fn bounds(a: &Anchored) -> (usize, usize) {
        (a.span.start, a.span.end)
    }

    #[test]
    fn exact_and_whitespace_tolerant() {
        let d = doc("alpha beta gamma");
        assert_eq!(bounds(&anchor_excerpt(&d, "beta").unwrap()), (6, 10));
        let a = anchor_excerpt(&d, "beta  gamma").unwrap();
        assert_eq!(bounds(&a), (6, 16));
        assert_eq!(a.span.excerpt, "beta gamma");
        assert_eq!(
            anchor_excerpt(&d, "delta"),
            Err(AnchorError::NotFound {
                doc_id: "d".into(),
                excerpt: "delta".into()
            })
        );
        assert_eq!(anchor_excerpt(&d, " \n "), Err(AnchorError::Empty));
    }

    #[test]
    fn document_whitespace_is_preserved_in_span() {
        let d = doc("one\n\n  two three");
        let a = anchor_excerpt(&d, " one two ").unwrap();
        assert_eq!(bounds(&a), (0, 10));
        assert_eq!(a.span.excerpt, "one\n\n  two");
        assert!(validate_span(&d, a.span).is_ok());
    }

    #[test]
    fn non_ascii_offsets() {
        let d = doc("capex of about €600 m");
        let a = anchor_excerpt(&d, "€600 m").unwrap();
        assert_eq!(bounds(&a), (15, 21));
    }

    #[test]
    fn first_occurrence_wins() {
        let d = doc("aa x aa y aa");
        let a = anchor_excerpt(&d, "aa").unwrap();
        assert_eq!(bounds(&a), (0, 2));
        assert_eq!(a.occurrences, 3);
        assert!(a.is_ambiguous());
        // overlapping repeats are counted
        assert_eq!(anchor_excerpt(&doc("aaa"), "aa").unwrap().occurrences, 2);
        assert!(!anchor_excerpt(&d, "x").unwrap().is_ambiguous());
    }

    #[test]
    fn case_matters() {
        assert!(anchor_excerpt(&doc("Alpha"), "alpha").is_err());
    }
}
