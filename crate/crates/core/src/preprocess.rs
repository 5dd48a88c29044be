//! From resolved relations to fixed-length model instances.
//!
//! Text is cleaned and split into word tokens while keeping, for every
//! token, the character range it came from in the stripped segment. Entity
//! spans are located through those ranges; an entity is anchored at its
//! first token.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Document, EntitySpan, Label, RelationRecord, ResolvedRelation};
use crate::embeddings::Vocabulary;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PreprocessError {
    #[error("entity `{entity}` does not start on a token")]
    UnresolvableSpan { entity: String },
    #[error("position {position} is outside a sequence of length {length}")]
    PositionOutOfRange { position: usize, length: usize },
    #[error(
        "entity heads are {distance} tokens apart, more than max_seq_len {max_seq_len} allows"
    )]
    EntitiesTooFarApart { distance: usize, max_seq_len: usize },
    #[error("both entities start on token {0}")]
    SameHead(usize),
    #[error("entities `{0}` and `{1}` are not in the same segment")]
    DifferentSegments(String, String),
    #[error("invalid preprocessing configuration: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub max_seq_len: usize,
    pub position_window: usize,
    pub lowercase: bool,
    pub number_token: String,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            max_seq_len: 200,
            position_window: 30,
            lowercase: true,
            number_token: "<num>".to_owned(),
        }
    }
}

impl PreprocessConfig {
    pub fn with_len(&self, max_seq_len: usize) -> PreprocessConfig {
        PreprocessConfig {
            max_seq_len,
            ..self.clone()
        }
    }

    /// Lists every violated constraint.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.max_seq_len < 2 {
            out.push(format!(
                "max_seq_len must be at least 2 (got {})",
                self.max_seq_len
            ));
        }
        if self.position_window == 0 {
            out.push("position_window must be positive".to_owned());
        }
        if self.number_token.is_empty() || self.number_token.chars().any(char::is_whitespace) {
            out.push(format!(
                "number_token must be non-empty without whitespace (got {:?})",
                self.number_token
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    /// Row in the direction embedding table.
    pub fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Reverse => 1,
        }
    }
}

/// Tokens of one text with the character range each token covers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenizedSegment {
    pub tokens: Vec<String>,
    pub spans: Vec<Range<usize>>,
}

impl TokenizedSegment {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of the token that covers character `offset`.
    pub fn char_to_token(&self, offset: usize) -> Option<usize> {
        let i = self.spans.partition_point(|s| s.end <= offset);
        (i < self.spans.len() && self.spans[i].start <= offset).then_some(i)
    }

    /// Index of the first token starting at or after `offset`.
    fn next_token_from(&self, offset: usize) -> Option<usize> {
        let i = self.spans.partition_point(|s| s.start < offset);
        (i < self.spans.len()).then_some(i)
    }
}

/// One classification example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationInstance {
    /// Vocabulary ids, padded with the PAD id to `max_seq_len`.
    pub token_ids: Vec<usize>,
    pub p1: usize,
    pub p2: usize,
    pub rel_pos1: Vec<i32>,
    pub rel_pos2: Vec<i32>,
    pub direction: Direction,
    pub label: Option<Label>,
    pub real_length: usize,
    pub arg1_id: String,
    pub arg2_id: String,
}

impl RelationInstance {
    pub fn max_seq_len(&self) -> usize {
        self.token_ids.len()
    }
}

fn is_hyphen(c: char) -> bool {
    matches!(c, '-' | '\u{2010}' | '\u{2011}')
}

/// Cleaned tokens with the character range each came from.
fn clean_tokens(text: &str, cfg: &PreprocessConfig) -> Vec<(String, Range<usize>)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() {
            let c = chars[i];
            let joins = is_hyphen(c)
                && i > start
                && chars[i - 1].is_alphanumeric()
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            if c.is_alphanumeric() || joins {
                i += 1;
            } else {
                break;
            }
        }
        let raw: String = chars[start..i].iter().collect();
        out.push((normalize_token(&raw, cfg), start..i));
    }
    out
}

fn normalize_token(raw: &str, cfg: &PreprocessConfig) -> String {
    let cased = if cfg.lowercase {
        raw.to_lowercase()
    } else {
        raw.to_owned()
    };
    if cased.chars().any(char::is_alphabetic) {
        return cased;
    }
    // purely numeric tokens: each digit run becomes the number token
    let mut out = String::new();
    let mut in_digits = false;
    for c in cased.chars() {
        if c.is_numeric() {
            if !in_digits {
                out.push_str(&cfg.number_token);
            }
            in_digits = true;
        } else {
            out.push(c);
            in_digits = false;
        }
    }
    out
}

/// Removes standalone punctuation, keeps intra-word hyphens and
/// letter/digit mixtures, replaces numbers by `cfg.number_token`, and
/// optionally lowercases. Tokens are joined by single spaces.
pub fn clean(text: &str, cfg: &PreprocessConfig) -> String {
    clean_tokens(text, cfg)
        .into_iter()
        .map(|(t, _)| t)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Whitespace tokenization of already cleaned text.
pub fn tokenize(text: &str) -> TokenizedSegment {
    let mut seg = TokenizedSegment::default();
    let mut start: Option<usize> = None;
    let mut current = String::new();
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        n = i + 1;
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                seg.tokens.push(std::mem::take(&mut current));
                seg.spans.push(s..i);
            }
        } else {
            start.get_or_insert(i);
            current.push(c);
        }
    }
    if let Some(s) = start {
        seg.tokens.push(current);
        seg.spans.push(s..n);
    }
    seg
}

/// Cleans and tokenizes a raw segment. Token spans refer to the raw text, so
/// entity offsets can be resolved directly. The tokens are the same as
/// `tokenize(&clean(raw, cfg)).tokens`.
pub fn tokenize_segment(raw: &str, cfg: &PreprocessConfig) -> TokenizedSegment {
    let (tokens, spans) = clean_tokens(raw, cfg).into_iter().unzip();
    TokenizedSegment { tokens, spans }
}

/// Every token of every title and abstract in `corpora`.
pub fn corpus_tokens<'a>(
    corpora: impl IntoIterator<Item = &'a Corpus>,
    cfg: &PreprocessConfig,
) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for corpus in corpora {
        for doc in &corpus.documents {
            out.extend(tokenize_segment(&doc.title, cfg).tokens);
            out.extend(tokenize_segment(&doc.abstract_text, cfg).tokens);
        }
    }
    out
}

/// Token index of the first token of an entity mention.
///
/// A start character that cleaning removed (a leading bracket, say) resolves
/// to the next token, provided that token still begins inside the mention.
pub fn head_position(
    segment: &TokenizedSegment,
    span: &EntitySpan,
) -> Result<usize, PreprocessError> {
    if let Some(i) = segment.char_to_token(span.start_char) {
        return Ok(i);
    }
    segment
        .next_token_from(span.start_char)
        .filter(|&i| segment.spans[i].start < span.end_char)
        .ok_or_else(|| PreprocessError::UnresolvableSpan {
            entity: span.entity_id.clone(),
        })
}

/// Signed distance of every position to `p`, clipped to `[-window, window]`.
pub fn relative_positions(
    length: usize,
    p: usize,
    window: usize,
) -> Result<Vec<i32>, PreprocessError> {
    if p >= length {
        return Err(PreprocessError::PositionOutOfRange {
            position: p,
            length,
        });
    }
    let w = window as i64;
    Ok((0..length)
        .map(|i| (i as i64 - p as i64).clamp(-w, w) as i32)
        .collect())
}

/// Start of the `max_seq_len` window kept from a longer segment: centered on
/// the midpoint of the two heads and shifted to keep both heads and stay in
/// bounds.
fn truncation_start(n: usize, a: usize, b: usize, max_seq_len: usize) -> usize {
    debug_assert!(a < b && b - a < max_seq_len && n > max_seq_len);
    let mid = (a + b) / 2;
    let centered = mid.saturating_sub(max_seq_len / 2);
    centered
        .clamp((b + 1).saturating_sub(max_seq_len), a)
        .min(n - max_seq_len)
}

/// Builds the instance for one relation. Only the segment holding both
/// entities is used.
pub fn build_instance(
    doc: &Document,
    e1: &EntitySpan,
    e2: &EntitySpan,
    rel: &RelationRecord,
    vocab: &Vocabulary,
    cfg: &PreprocessConfig,
) -> Result<RelationInstance, PreprocessError> {
    if e1.in_title != e2.in_title {
        return Err(PreprocessError::DifferentSegments(
            e1.entity_id.clone(),
            e2.entity_id.clone(),
        ));
    }
    let segment = tokenize_segment(doc.segment_text(e1), cfg);
    let h1 = head_position(&segment, e1)?;
    let h2 = head_position(&segment, e2)?;
    if h1 == h2 {
        return Err(PreprocessError::SameHead(h1));
    }
    let (a, b) = (h1.min(h2), h1.max(h2));
    let max_len = cfg.max_seq_len;
    if b - a >= max_len {
        return Err(PreprocessError::EntitiesTooFarApart {
            distance: b - a,
            max_seq_len: max_len,
        });
    }

    let n = segment.len();
    let offset = if n > max_len {
        truncation_start(n, a, b, max_len)
    } else {
        0
    };
    let real_length = n.min(max_len);
    let (p1, p2) = (h1 - offset, h2 - offset);

    let mut token_ids: Vec<usize> = segment.tokens[offset..offset + real_length]
        .iter()
        .map(|t| vocab.id(t))
        .collect();
    token_ids.resize(max_len, vocab.pad_id());

    Ok(RelationInstance {
        token_ids,
        p1,
        p2,
        rel_pos1: relative_positions(max_len, p1, cfg.position_window)?,
        rel_pos2: relative_positions(max_len, p2, cfg.position_window)?,
        direction: if rel.reverse {
            Direction::Reverse
        } else {
            Direction::Forward
        },
        label: Some(rel.label),
        real_length,
        arg1_id: rel.arg1_id.clone(),
        arg2_id: rel.arg2_id.clone(),
    })
}

/// Instances built from a list of relations, with the relations that could
/// not be turned into instances.
#[derive(Clone, Debug, Default)]
pub struct InstanceSet {
    pub instances: Vec<RelationInstance>,
    pub rejected: Vec<(String, PreprocessError)>,
}

pub fn build_instances(
    resolved: &[ResolvedRelation<'_>],
    vocab: &Vocabulary,
    cfg: &PreprocessConfig,
) -> InstanceSet {
    let mut set = InstanceSet::default();
    for r in resolved {
        match build_instance(r.document, r.arg1, r.arg2, r.relation, vocab, cfg) {
            Ok(inst) => set.instances.push(inst),
            Err(e) => set.rejected.push((r.relation.to_string(), e)),
        }
    }
    set
}

/// Segment length in tokens and head distance of a relation, before any
/// truncation.
pub fn relation_geometry(
    r: &ResolvedRelation<'_>,
    cfg: &PreprocessConfig,
) -> Result<(usize, usize), PreprocessError> {
    let segment = tokenize_segment(r.document.segment_text(r.arg1), cfg);
    let h1 = head_position(&segment, r.arg1)?;
    let h2 = head_position(&segment, r.arg2)?;
    Ok((segment.len(), h1.abs_diff(h2)))
}
