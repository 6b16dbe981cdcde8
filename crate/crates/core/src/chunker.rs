//! Recursive character splitting of knowledge-base documents.
//!
//! The body is cut into contiguous pieces by trying each separator in turn
//! (paragraph break, line break, sentence end, space, single characters)
//! until every piece fits in `chunk_size`. Pieces are then packed greedily
//! into chunks. Each chunk after the first starts up to `overlap` characters
//! before the previous chunk ended, snapped to a piece boundary, so chunks
//! are exact substrings of the body and stripping the overlaps rebuilds it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SEPARATORS: [&str; 5] = ["\n\n", "\n", ". ", " ", ""];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkerConfig {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkerConfig {
    fn default() -> Self {
        Self {
            chunk_size: 512,
            overlap: 50,
        }
    }
}

impl ChunkerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 {
            return Err(Error::ConfigInvalid("chunk_size must be > 0".into()));
        }
        if self.overlap >= self.chunk_size {
            return Err(Error::ConfigInvalid(format!(
                "overlap {} must be smaller than chunk_size {}",
                self.overlap, self.chunk_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub doc_id: String,
    pub title: String,
    pub body: String,
}

/// A chunk before embedding. `start..end` are character offsets into the body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextChunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    pub start: usize,
    pub end: usize,
}

pub fn split_document(doc: &RawDocument, cfg: &ChunkerConfig) -> Result<Vec<TextChunk>> {
    cfg.validate()?;
    let spans = split_spans(&doc.body, cfg);
    // byte offset -> char offset, for reporting
    let char_at: Vec<usize> = {
        let mut map = vec![0; doc.body.len() + 1];
        let mut n = 0;
        for (b, c) in doc.body.char_indices() {
            map[b] = n;
            n += 1;
            let _ = c;
        }
        map[doc.body.len()] = n;
        map
    };
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(i, (s, e))| TextChunk {
            chunk_id: format!("{}#{i}", doc.doc_id),
            doc_id: doc.doc_id.clone(),
            text: doc.body[s..e].to_string(),
            start: char_at[s],
            end: char_at[e],
        })
        .collect())
}

/// Byte ranges of the chunks of `text`.
fn split_spans(text: &str, cfg: &ChunkerConfig) -> Vec<(usize, usize)> {
    if text.is_empty() {
        return Vec::new();
    }
    let mut pieces = Vec::new();
    split_recursive(text, 0, text.len(), 0, cfg.chunk_size, &mut pieces);

    // Piece boundaries as (byte, char) pairs; boundaries[0] is the start.
    let mut bounds = Vec::with_capacity(pieces.len() + 1);
    bounds.push((0usize, 0usize));
    let mut chars = 0;
    for &(s, e) in &pieces {
        chars += text[s..e].chars().count();
        bounds.push((e, chars));
    }

    let size = cfg.chunk_size;
    let mut spans = Vec::new();
    let mut start = 0; // index into bounds
    loop {
        // Extend as far as the size limit allows; always take at least one piece.
        let mut end = start + 1;
        while end + 1 < bounds.len() && bounds[end + 1].1 - bounds[start].1 <= size {
            end += 1;
        }
        spans.push((bounds[start].0, bounds[end].0));
        if end + 1 >= bounds.len() {
            break;
        }
        // Earliest boundary inside the previous chunk's last `overlap`
        // characters that still lets the next piece fit.
        let next_piece_end = bounds[end + 1].1;
        let mut next = end;
        for b in (start + 1)..end {
            let c = bounds[b].1;
            if bounds[end].1 - c <= cfg.overlap && next_piece_end - c <= size {
                next = b;
                break;
            }
        }
        start = next;
    }
    spans
}

fn split_recursive(
    text: &str,
    from: usize,
    to: usize,
    level: usize,
    limit: usize,
    out: &mut Vec<(usize, usize)>,
) {
    let slice = &text[from..to];
    if slice.chars().count() <= limit {
        out.push((from, to));
        return;
    }
    let sep = SEPARATORS[level.min(SEPARATORS.len() - 1)];
    if sep.is_empty() {
        for (i, c) in slice.char_indices() {
            out.push((from + i, from + i + c.len_utf8()));
        }
        return;
    }
    if !slice.contains(sep) {
        split_recursive(text, from, to, level + 1, limit, out);
        return;
    }
    let mut offset = from;
    for part in slice.split_inclusive(sep) {
        let end = offset + part.len();
        split_recursive(text, offset, end, level + 1, limit, out);
        offset = end;
    }
}

/// Loads every `.txt` file in `dir` as a document: the file stem is the
/// doc id and the first line is the title. Files are returned sorted by id.
pub fn load_corpus_dir(dir: impl AsRef<Path>) -> Result<Vec<RawDocument>> {
    let dir = dir.as_ref();
    let entries =
        std::fs::read_dir(dir).map_err(|e| Error::io(format!("reading {}", dir.display()), e))?;
    let mut docs = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Error::io(format!("reading {}", dir.display()), e))?
            .path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let Some(doc_id) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let content = std::fs::read_to_string(&path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let title = content.lines().next().unwrap_or_default().trim().to_string();
        docs.push(RawDocument {
            doc_id: doc_id.to_string(),
            title,
            body: content,
        });
    }
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(body: &str) -> RawDocument {
        RawDocument {
            doc_id: "pricing".into(),
            title: "Pricing".into(),
            body: body.into(),
        }
    }

    /// Linear scan: checks sizes, order, coverage and that dropping each
    /// chunk's overlap with its predecessor rebuilds the body.
    fn check(body: &str, cfg: &ChunkerConfig, chunks: &[TextChunk]) {
        let chars: Vec<char> = body.chars().collect();
        let mut covered = vec![false; chars.len()];
        let mut rebuilt = String::new();
        let mut prev_end = 0;
        for (i, c) in chunks.iter().enumerate() {
            assert_eq!(c.chunk_id, format!("pricing#{i}"));
            assert!(c.text.chars().count() <= cfg.chunk_size);
            assert_eq!(c.text, chars[c.start..c.end].iter().collect::<String>());
            assert!(c.start <= prev_end, "gap before chunk {i}");
            assert!(prev_end - c.start <= cfg.overlap);
            covered[c.start..c.end].iter_mut().for_each(|x| *x = true);
            rebuilt.extend(&chars[prev_end.max(c.start)..c.end]);
            prev_end = c.end;
        }
        assert!(covered.iter().all(|&x| x));
        assert_eq!(rebuilt, body);
    }

    #[test]
    fn short_body_is_one_chunk() {
        let body = "x".repeat(100);
        let chunks = split_document(&doc(&body), &ChunkerConfig::default()).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, body);
    }

    #[test]
    fn empty_body_has_no_chunks() {
        assert!(split_document(&doc(""), &ChunkerConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn unseparated_body_overlaps_by_exactly_fifty() {
        let body: String = (0..1024).map(|i| (b'a' + (i % 26) as u8) as char).collect();
        let cfg = ChunkerConfig::default();
        let chunks = split_document(&doc(&body), &cfg).unwrap();
        check(&body, &cfg, &chunks);
        for w in chunks.windows(2) {
            assert_eq!(w[0].end - w[1].start, 50);
        }
        let ranges: Vec<_> = chunks.iter().map(|c| (c.start, c.end)).collect();
        assert_eq!(ranges, [(0, 512), (462, 974), (924, 1024)]);
    }

    #[test]
    fn prose_overlap_snaps_to_words() {
        let body = "alpha beta gamma delta epsilon ".repeat(40);
        let cfg = ChunkerConfig { chunk_size: 100, overlap: 20 };
        let chunks = split_document(&doc(&body), &cfg).unwrap();
        check(&body, &cfg, &chunks);
        for c in &chunks[1..] {
            let first = c.text.chars().next().unwrap();
            assert!(first.is_alphabetic(), "{:?}", c.text);
        }
    }

    #[test]
    fn paragraphs_stay_whole_when_they_fit() {
        let p1 = "First paragraph about pricing.".to_string();
        let p2 = "Second paragraph about billing.".to_string();
        let body = format!("{p1}\n\n{p2}");
        let cfg = ChunkerConfig { chunk_size: 40, overlap: 5 };
        let chunks = split_document(&doc(&body), &cfg).unwrap();
        check(&body, &cfg, &chunks);
        assert_eq!(chunks[0].text, format!("{p1}\n\n"));
        assert_eq!(chunks.last().unwrap().text, p2);
    }

    #[test]
    fn multibyte_text_counts_characters() {
        let body = "héllo wörld ünïcode ".repeat(30);
        let cfg = ChunkerConfig { chunk_size: 64, overlap: 8 };
        let chunks = split_document(&doc(&body), &cfg).unwrap();
        check(&body, &cfg, &chunks);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = ChunkerConfig { chunk_size: 50, overlap: 50 };
        assert!(split_document(&doc("abc"), &cfg).is_err());
    }

    proptest! {
        #[test]
        fn chunks_respect_size_coverage_and_order(
            body in "[a-z .\n]{0,700}",
            size in 8usize..120,
            overlap_frac in 0.0f64..0.9,
        ) {
            let overlap = ((size as f64) * overlap_frac) as usize;
            let cfg = ChunkerConfig { chunk_size: size, overlap };
            let chunks = split_document(&doc(&body), &cfg).unwrap();
            check(&body, &cfg, &chunks);
            prop_assert!(chunks.windows(2).all(|w| w[0].start < w[1].start));
        }
    }
}
