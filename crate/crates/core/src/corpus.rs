//! Entity-annotated document and relation list parsing.
//!
//! Documents follow the shared-task release markup:
//!
//! ```text
//! <text id="P05-1057">
//! <title>...</title>
//! <abstract>use of <entity id="P05-1057.4">bigrams</entity> ...</abstract>
//! </text>
//! ```
//!
//! Entity tags are stripped and their spans recorded as character offsets
//! (Unicode scalar values) into the stripped title or abstract. Relations
//! are one per line, `LABEL(id1,id2)` or `LABEL(id1,id2,REVERSE)`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Element and attribute names of the release markup. Kept in one place so a
/// dataset revision only has to touch this table.
pub mod markup {
    pub const DOCUMENT: &str = "text";
    pub const TITLE: &str = "title";
    pub const ABSTRACT: &str = "abstract";
    pub const ENTITY: &str = "entity";
    pub const ID_ATTR: &str = "id";
    pub const REVERSE_FLAG: &str = "REVERSE";
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("parse error in document {doc} at byte {offset} (line {line}): {message}", doc = doc_id.as_deref().unwrap_or("<none>"))]
    Parse {
        doc_id: Option<String>,
        offset: usize,
        line: usize,
        message: String,
    },
    #[error("relations line {line}: unknown label `{label}` (valid labels: USAGE, RESULT, MODEL, PART_WHOLE, TOPIC, COMPARISON)")]
    UnknownLabel { line: usize, label: String },
    #[error("relations line {line}: malformed relation `{text}`: {message}")]
    MalformedRelation {
        line: usize,
        text: String,
        message: String,
    },
    #[error("duplicate document id `{0}`")]
    DuplicateDocument(String),
    #[error("relation {relation} (line {line}): {message}")]
    Resolution {
        relation: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: String,
        #[source]
        source: Box<CorpusError>,
    },
}

/// The six relation classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Usage,
    Result,
    Model,
    PartWhole,
    Topic,
    Comparison,
}

/// Accepted label spellings. The release files spell two of the classes
/// differently from their short names; both are accepted on input, and the
/// short names are used on output.
const LABEL_SPELLINGS: &[(&str, Label)] = &[
    ("USAGE", Label::Usage),
    ("RESULT", Label::Result),
    ("MODEL", Label::Model),
    ("MODEL-FEATURE", Label::Model),
    ("PART_WHOLE", Label::PartWhole),
    ("TOPIC", Label::Topic),
    ("COMPARISON", Label::Comparison),
    ("COMPARE", Label::Comparison),
];

impl Label {
    pub const COUNT: usize = 6;
    pub const ALL: [Label; 6] = [
        Label::Usage,
        Label::Result,
        Label::Model,
        Label::PartWhole,
        Label::Topic,
        Label::Comparison,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Usage => "USAGE",
            Label::Result => "RESULT",
            Label::Model => "MODEL",
            Label::PartWhole => "PART_WHOLE",
            Label::Topic => "TOPIC",
            Label::Comparison => "COMPARISON",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LABEL_SPELLINGS
            .iter()
            .find(|(name, _)| *name == s)
            .map(|&(_, label)| label)
            .ok_or(())
    }
}

/// An entity mention inside the title or the abstract of a document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub entity_id: String,
    /// First character of the mention, counted in the stripped segment.
    pub start_char: usize,
    /// One past the last character.
    pub end_char: usize,
    pub in_title: bool,
    pub surface: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub entities: Vec<EntitySpan>,
}

impl Document {
    /// The stripped text of the segment that contains `span`.
    pub fn segment_text(&self, span: &EntitySpan) -> &str {
        if span.in_title {
            &self.title
        } else {
            &self.abstract_text
        }
    }

    pub fn entity(&self, entity_id: &str) -> Option<&EntitySpan> {
        self.entities.iter().find(|e| e.entity_id == entity_id)
    }

    /// Entities of one segment, in document order.
    pub fn segment_entities(&self, in_title: bool) -> impl Iterator<Item = &EntitySpan> {
        self.entities.iter().filter(move |e| e.in_title == in_title)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationRecord {
    pub label: Label,
    pub arg1_id: String,
    pub arg2_id: String,
    pub reverse: bool,
    /// 1-based source line, 0 when the record did not come from a file.
    #[serde(default)]
    pub line: usize,
}

impl RelationRecord {
    pub fn new(label: Label, arg1_id: &str, arg2_id: &str, reverse: bool) -> Self {
        RelationRecord {
            label,
            arg1_id: arg1_id.to_owned(),
            arg2_id: arg2_id.to_owned(),
            reverse,
            line: 0,
        }
    }
}

impl fmt::Display for RelationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{}", self.label, self.arg1_id, self.arg2_id)?;
        if self.reverse {
            write!(f, ",{}", markup::REVERSE_FLAG)?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceTag {
    #[serde(rename = "task1.1")]
    Task11,
    #[serde(rename = "task1.2")]
    Task12,
    #[serde(rename = "merged")]
    Merged,
}

impl SourceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Task11 => "task1.1",
            SourceTag::Task12 => "task1.2",
            SourceTag::Merged => "merged",
        }
    }
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "task1.1" | "1.1" => Ok(SourceTag::Task11),
            "task1.2" | "1.2" => Ok(SourceTag::Task12),
            "merged" => Ok(SourceTag::Merged),
            other => Err(format!("unknown source tag `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub relations: Vec<RelationRecord>,
    pub source: SourceTag,
}

/// A relation joined to its document and argument spans.
#[derive(Clone, Copy, Debug)]
pub struct ResolvedRelation<'a> {
    pub document: &'a Document,
    pub arg1: &'a EntitySpan,
    pub arg2: &'a EntitySpan,
    pub relation: &'a RelationRecord,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate document ids.
    pub fn new(
        documents: Vec<Document>,
        relations: Vec<RelationRecord>,
        source: SourceTag,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for doc in &documents {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(CorpusError::DuplicateDocument(doc.doc_id.clone()));
            }
        }
        Ok(Corpus {
            documents,
            relations,
            source,
        })
    }

    pub fn empty(source: SourceTag) -> Self {
        Corpus {
            documents: Vec::new(),
            relations: Vec::new(),
            source,
        }
    }

    /// Reads and parses a document file and a relations file.
    pub fn load(
        text_path: impl AsRef<Path>,
        relations_path: impl AsRef<Path>,
        source: SourceTag,
    ) -> Result<Self, CorpusError> {
        let documents = read_with(text_path.as_ref(), parse_documents)?;
        let relations = read_with(relations_path.as_ref(), parse_relations)?;
        Corpus::new(documents, relations, source)
    }

    /// Joins every relation to its document and entity spans.
    pub fn resolve(&self) -> Result<Vec<ResolvedRelation<'_>>, CorpusError> {
        let mut index: HashMap<&str, (usize, usize)> = HashMap::new();
        let mut ambiguous = HashSet::new();
        for (d, doc) in self.documents.iter().enumerate() {
            for (e, span) in doc.entities.iter().enumerate() {
                if index.insert(span.entity_id.as_str(), (d, e)).is_some() {
                    ambiguous.insert(span.entity_id.as_str());
                }
            }
        }

        let lookup = |rel: &RelationRecord, id: &str| {
            if ambiguous.contains(id) {
                return Err(resolution_error(
                    rel,
                    format!("entity id `{id}` occurs in more than one document"),
                ));
            }
            index
                .get(id)
                .copied()
                .ok_or_else(|| resolution_error(rel, format!("unknown entity id `{id}`")))
        };

        self.relations
            .iter()
            .map(|rel| {
                let (d1, e1) = lookup(rel, &rel.arg1_id)?;
                let (d2, e2) = lookup(rel, &rel.arg2_id)?;
                if d1 != d2 {
                    return Err(resolution_error(
                        rel,
                        "arguments belong to different documents".to_owned(),
                    ));
                }
                let document = &self.documents[d1];
                let (arg1, arg2) = (&document.entities[e1], &document.entities[e2]);
                if arg1.in_title != arg2.in_title {
                    return Err(resolution_error(
                        rel,
                        "arguments straddle the title and the abstract".to_owned(),
                    ));
                }
                Ok(ResolvedRelation {
                    document,
                    arg1,
                    arg2,
                    relation: rel,
                })
            })
            .collect()
    }

    pub fn class_histogram(&self) -> BTreeMap<Label, usize> {
        class_histogram(&self.relations)
    }

    /// Writes one JSON record per document, then one per relation.
    pub fn write_dump<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        #[serde(tag = "kind", rename_all = "lowercase")]
        enum Record<'a> {
            Document {
                source: SourceTag,
                #[serde(flatten)]
                document: &'a Document,
            },
            Relation {
                source: SourceTag,
                #[serde(flatten)]
                relation: &'a RelationRecord,
            },
        }

        for document in &self.documents {
            let record = Record::Document {
                source: self.source,
                document,
            };
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n")?;
        }
        for relation in &self.relations {
            let record = Record::Relation {
                source: self.source,
                relation,
            };
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn resolution_error(rel: &RelationRecord, message: String) -> CorpusError {
    CorpusError::Resolution {
        relation: rel.to_string(),
        line: rel.line,
        message,
    }
}

fn read_with<T>(
    path: &Path,
    parse: impl FnOnce(&str) -> Result<T, CorpusError>,
) -> Result<T, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text).map_err(|e| CorpusError::InFile {
        path: path.display().to_string(),
        source: Box::new(e),
    })
}

/// Counts relations per class. Every class is present in the map.
pub fn class_histogram(relations: &[RelationRecord]) -> BTreeMap<Label, usize> {
    let mut counts: BTreeMap<Label, usize> = Label::ALL.iter().map(|&l| (l, 0)).collect();
    for rel in relations {
        *counts.entry(rel.label).or_default() += 1;
    }
    counts
}

/// Parses a relations file.
pub fn parse_relations(raw: &str) -> Result<Vec<RelationRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let malformed = |message: &str| CorpusError::MalformedRelation {
            line: line_no,
            text: text.to_owned(),
            message: message.to_owned(),
        };

        let open = text.find('(').ok_or_else(|| malformed("missing `(`"))?;
        if !text.ends_with(')') {
            return Err(malformed("missing closing `)`"));
        }
        let label_text = text[..open].trim();
        let label = label_text
            .parse::<Label>()
            .map_err(|_| CorpusError::UnknownLabel {
                line: line_no,
                label: label_text.to_owned(),
            })?;

        let args: Vec<&str> = text[open + 1..text.len() - 1]
            .split(',')
            .map(str::trim)
            .collect();
        let reverse = match args.len() {
            2 => false,
            3 if args[2] == markup::REVERSE_FLAG => true,
            3 => return Err(malformed("third argument must be REVERSE")),
            _ => return Err(malformed("expected two entity ids")),
        };
        if args[0].is_empty() || args[1].is_empty() {
            return Err(malformed("empty entity id"));
        }
        if args[0] == args[1] {
            return Err(malformed("both arguments are the same entity"));
        }
        out.push(RelationRecord {
            label,
            arg1_id: args[0].to_owned(),
            arg2_id: args[1].to_owned(),
            reverse,
            line: line_no,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Segment {
    Title,
    Abstract,
}

struct Tag<'a> {
    closing: bool,
    name: &'a str,
    attrs: &'a str,
    /// Byte offset one past `>`.
    end: usize,
}

struct OpenEntity {
    id: String,
    start_char: usize,
    start_byte: usize,
    offset: usize,
}

struct DocBuilder {
    doc_id: String,
    offset: usize,
    title: Option<String>,
    abstract_text: Option<String>,
    entities: Vec<EntitySpan>,
}

/// Parser state for one call of [`parse_documents`].
struct Parser<'a> {
    raw: &'a str,
}

impl<'a> Parser<'a> {
    fn error(
        &self,
        doc_id: Option<&str>,
        offset: usize,
        message: impl Into<String>,
    ) -> CorpusError {
        let line = self.raw[..offset.min(self.raw.len())].matches('\n').count() + 1;
        CorpusError::Parse {
            doc_id: doc_id.map(str::to_owned),
            offset,
            line,
            message: message.into(),
        }
    }

    /// Reads the tag starting at byte `at` (which holds `<`).
    fn tag(&self, at: usize, doc_id: Option<&str>) -> Result<Tag<'a>, CorpusError> {
        let rest = &self.raw[at + 1..];
        let close = rest
            .find('>')
            .ok_or_else(|| self.error(doc_id, at, "unclosed tag"))?;
        if let Some(nested) = rest[..close].find('<') {
            return Err(self.error(doc_id, at + 1 + nested, "unexpected `<` inside tag"));
        }
        let body = rest[..close].trim_end_matches('/');
        let (closing, body) = match body.strip_prefix('/') {
            Some(b) => (true, b),
            None => (false, body),
        };
        let name_end = body.find(|c: char| c.is_whitespace()).unwrap_or(body.len());
        Ok(Tag {
            closing,
            name: &body[..name_end],
            attrs: body[name_end..].trim(),
            end: at + 1 + close + 1,
        })
    }

    fn id_attr(
        &self,
        tag: &Tag<'_>,
        at: usize,
        doc_id: Option<&str>,
    ) -> Result<String, CorpusError> {
        let mut rest = tag.attrs;
        while !rest.is_empty() {
            let eq = rest.find('=').ok_or_else(|| {
                self.error(
                    doc_id,
                    at,
                    format!("malformed attributes in <{}>", tag.name),
                )
            })?;
            let key = rest[..eq].trim();
            let after = rest[eq + 1..].trim_start();
            let quote = after
                .chars()
                .next()
                .filter(|&c| c == '"' || c == '\'')
                .ok_or_else(|| self.error(doc_id, at, "attribute value must be quoted"))?;
            let value_end = after[1..]
                .find(quote)
                .ok_or_else(|| self.error(doc_id, at, "unterminated attribute value"))?;
            let value = &after[1..1 + value_end];
            if key == markup::ID_ATTR {
                if value.is_empty() {
                    return Err(self.error(doc_id, at, format!("empty id in <{}>", tag.name)));
                }
                return Ok(value.to_owned());
            }
            rest = after[1 + value_end + 1..].trim_start();
        }
        Err(self.error(
            doc_id,
            at,
            format!("<{}> is missing its id attribute", tag.name),
        ))
    }

    /// Parses segment content from byte `start` up to the matching closing
    /// tag. Returns the stripped text and the byte offset after the closing tag.
    fn segment(
        &self,
        doc: &mut DocBuilder,
        start: usize,
        segment: Segment,
    ) -> Result<(String, usize), CorpusError> {
        let closing_name = match segment {
            Segment::Title => markup::TITLE,
            Segment::Abstract => markup::ABSTRACT,
        };
        let owned_id = doc.doc_id.clone();
        let doc_id = Some(owned_id.as_str());
        let mut text = String::new();
        let mut chars = 0usize;
        let mut open: Option<OpenEntity> = None;
        let mut pos = start;

        loop {
            let next = self.raw[pos..].find('<').map(|i| pos + i);
            let Some(at) = next else {
                if let Some(entity) = &open {
                    return Err(self.error(
                        doc_id,
                        entity.offset,
                        format!("entity `{}` is never closed", entity.id),
                    ));
                }
                return Err(self.error(doc_id, start, format!("<{closing_name}> is never closed")));
            };
            let chunk = &self.raw[pos..at];
            text.push_str(chunk);
            chars += chunk.chars().count();

            let tag = self.tag(at, doc_id)?;
            match (tag.closing, tag.name) {
                (false, markup::ENTITY) => {
                    if let Some(outer) = &open {
                        return Err(self.error(
                            doc_id,
                            at,
                            format!("nested entity inside `{}`", outer.id),
                        ));
                    }
                    let id = self.id_attr(&tag, at, doc_id)?;
                    if doc.entities.iter().any(|e| e.entity_id == id) {
                        return Err(self.error(doc_id, at, format!("duplicate entity id `{id}`")));
                    }
                    open = Some(OpenEntity {
                        id,
                        start_char: chars,
                        start_byte: text.len(),
                        offset: at,
                    });
                }
                (true, markup::ENTITY) => {
                    let entity = open.take().ok_or_else(|| {
                        self.error(doc_id, at, "closing entity tag without an opening tag")
                    })?;
                    if chars == entity.start_char {
                        return Err(self.error(
                            doc_id,
                            entity.offset,
                            format!("entity `{}` is empty", entity.id),
                        ));
                    }
                    doc.entities.push(EntitySpan {
                        entity_id: entity.id,
                        start_char: entity.start_char,
                        end_char: chars,
                        in_title: segment == Segment::Title,
                        surface: text[entity.start_byte..].to_owned(),
                    });
                }
                (true, name) if name == closing_name => {
                    if let Some(entity) = &open {
                        return Err(self.error(
                            doc_id,
                            entity.offset,
                            format!("entity `{}` is never closed", entity.id),
                        ));
                    }
                    return Ok((text, tag.end));
                }
                _ => {
                    return Err(self.error(
                        doc_id,
                        at,
                        format!(
                            "unexpected tag <{}{}> inside <{closing_name}>",
                            if tag.closing { "/" } else { "" },
                            tag.name
                        ),
                    ))
                }
            }
            pos = tag.end;
        }
    }

    fn run(&self) -> Result<Vec<Document>, CorpusError> {
        let mut documents = Vec::new();
        let mut current: Option<DocBuilder> = None;
        let mut pos = 0;

        while let Some(i) = self.raw[pos..].find('<') {
            let at = pos + i;
            let doc_id = current.as_ref().map(|d| d.doc_id.as_str());
            let tag = self.tag(at, doc_id)?;
            pos = tag.end;
            match (tag.closing, tag.name, current.as_mut()) {
                (false, markup::DOCUMENT, None) => {
                    let id = self.id_attr(&tag, at, None)?;
                    current = Some(DocBuilder {
                        doc_id: id,
                        offset: at,
                        title: None,
                        abstract_text: None,
                        entities: Vec::new(),
                    });
                }
                (false, markup::DOCUMENT, Some(doc)) => {
                    return Err(self.error(
                        Some(&doc.doc_id),
                        at,
                        "document opened inside another document",
                    ));
                }
                (true, markup::DOCUMENT, Some(_)) => {
                    let doc = current.take().expect("checked above");
                    documents.push(Document {
                        doc_id: doc.doc_id,
                        title: doc.title.unwrap_or_default(),
                        abstract_text: doc.abstract_text.unwrap_or_default(),
                        entities: doc.entities,
                    });
                }
                (true, markup::DOCUMENT, None) => {
                    return Err(self.error(
                        None,
                        at,
                        "closing document tag without an opening tag",
                    ));
                }
                (false, name @ (markup::TITLE | markup::ABSTRACT), Some(doc)) => {
                    let segment = if name == markup::TITLE {
                        Segment::Title
                    } else {
                        Segment::Abstract
                    };
                    let already = match segment {
                        Segment::Title => doc.title.is_some(),
                        Segment::Abstract => doc.abstract_text.is_some(),
                    };
                    if already {
                        return Err(self.error(
                            Some(&doc.doc_id),
                            at,
                            format!("second <{name}> in document"),
                        ));
                    }
                    let (text, end) = self.segment(doc, tag.end, segment)?;
                    match segment {
                        Segment::Title => doc.title = Some(text),
                        Segment::Abstract => doc.abstract_text = Some(text),
                    }
                    pos = end;
                }
                (_, markup::ENTITY, d) => {
                    return Err(self.error(
                        d.map(|d| d.doc_id.as_str()),
                        at,
                        "entity tag outside of a title or abstract",
                    ));
                }
                // declarations, the outer <doc> element and anything else
                // between documents carry no content
                _ => {}
            }
        }

        if let Some(doc) = current {
            return Err(self.error(Some(&doc.doc_id), doc.offset, "document is never closed"));
        }
        Ok(documents)
    }
}

/// Parses an entity-annotated document file.
pub fn parse_documents(raw: &str) -> Result<Vec<Document>, CorpusError> {
    let documents = Parser { raw }.run()?;
    let mut seen = HashSet::new();
    for doc in &documents {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(CorpusError::DuplicateDocument(doc.doc_id.clone()));
        }
    }
    Ok(documents)
}

/// Re-inserts entity tags into a stripped segment. Spans must belong to the
/// segment and be non-overlapping.
pub fn render_segment<'a>(text: &str, spans: impl IntoIterator<Item = &'a EntitySpan>) -> String {
    let mut spans: Vec<&EntitySpan> = spans.into_iter().collect();
    spans.sort_by_key(|s| s.start_char);
    let mut out = String::with_capacity(text.len() + spans.len() * 32);
    let mut next = spans.iter().peekable();
    let mut open_end: Option<usize> = None;
    for (i, c) in text.chars().enumerate() {
        if open_end == Some(i) {
            out.push_str("</entity>");
            open_end = None;
        }
        if let Some(span) = next.next_if(|s| s.start_char == i) {
            out.push_str(&format!(
                "<entity {}=\"{}\">",
                markup::ID_ATTR,
                span.entity_id
            ));
            open_end = Some(span.end_char);
        }
        out.push(c);
    }
    if open_end.is_some() {
        out.push_str("</entity>");
    }
    out
}

/// Renders a document back into release markup.
pub fn render_document(doc: &Document) -> String {
    format!(
        "<text id=\"{}\">\n<title>{}</title>\n<abstract>{}</abstract>\n</text>\n",
        doc.doc_id,
        render_segment(&doc.title, doc.segment_entities(true)),
        render_segment(&doc.abstract_text, doc.segment_entities(false)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(abstract_markup: &str) -> String {
        format!(
            "<text id=\"D\">\n<title>T</title>\n<abstract>{abstract_markup}</abstract>\n</text>\n"
        )
    }

    #[test]
    fn strips_entity_tags() {
        let docs = parse_documents(&doc("use of <entity id=\"D.1\">bigrams</entity>")).unwrap();
        assert_eq!(docs.len(), 1);
        let d = &docs[0];
        assert_eq!(d.abstract_text, "use of bigrams");
        assert_eq!(d.entities.len(), 1);
        let e = &d.entities[0];
        assert_eq!((e.start_char, e.end_char), (7, 14));
        assert_eq!(e.surface, "bigrams");
        assert!(!e.in_title);
    }

    #[test]
    fn document_without_entities() {
        let docs = parse_documents(&doc("plain text, nothing tagged")).unwrap();
        assert!(docs[0].entities.is_empty());
        assert_eq!(docs[0].abstract_text, "plain text, nothing tagged");
    }

    #[test]
    fn offsets_count_characters_not_bytes() {
        let docs = parse_documents(&doc("é ü <entity id=\"D.1\">naïve</entity>")).unwrap();
        let e = &docs[0].entities[0];
        assert_eq!((e.start_char, e.end_char), (4, 9));
        let chars: String = docs[0].abstract_text.chars().skip(4).take(5).collect();
        assert_eq!(chars, "naïve");
    }

    #[test]
    fn title_entities_and_release_preamble() {
        let raw = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<doc>\n<text id=\"A\">\n<title><entity id=\"A.1\">Parsing</entity> of text</title>\n<abstract>\nA <entity id=\"A.2\">parser</entity>.\n</abstract>\n</text>\n</doc>\n";
        let docs = parse_documents(raw).unwrap();
        assert_eq!(docs[0].title, "Parsing of text");
        assert!(docs[0].entities[0].in_title);
        assert_eq!(docs[0].abstract_text, "\nA parser.\n");
        assert_eq!(docs[0].entities[1].start_char, 3);
    }

    #[test]
    fn unclosed_entity_reports_offset() {
        let raw = doc("a <entity id=\"D.1\">b c");
        let at = raw.find("<entity").unwrap();
        match parse_documents(&raw) {
            Err(CorpusError::Parse { doc_id, offset, .. }) => {
                assert_eq!(doc_id.as_deref(), Some("D"));
                assert_eq!(offset, at);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_id_is_an_error() {
        assert!(matches!(
            parse_documents(&doc("a <entity>b</entity>")),
            Err(CorpusError::Parse { .. })
        ));
    }

    #[test]
    fn unterminated_tag_is_an_error() {
        assert!(matches!(
            parse_documents(&doc("a <entity id=\"D.1\" b")),
            Err(CorpusError::Parse { .. })
        ));
    }

    #[test]
    fn duplicate_and_nested_entities_are_errors() {
        let dup = doc("<entity id=\"D.1\">a</entity> <entity id=\"D.1\">b</entity>");
        assert!(matches!(
            parse_documents(&dup),
            Err(CorpusError::Parse { .. })
        ));
        let nested = doc("<entity id=\"D.1\">a <entity id=\"D.2\">b</entity></entity>");
        assert!(matches!(
            parse_documents(&nested),
            Err(CorpusError::Parse { .. })
        ));
    }

    #[test]
    fn duplicate_document_ids_are_errors() {
        let raw = format!("{}{}", doc("x"), doc("y"));
        assert!(matches!(
            parse_documents(&raw),
            Err(CorpusError::DuplicateDocument(_))
        ));
    }

    #[test]
    fn relation_lines() {
        let rels =
            parse_relations("USAGE(P05-1057.4,P05-1057.3,REVERSE)\n\nTOPIC(A.1,A.2)\n").unwrap();
        assert_eq!(
            rels[0],
            RelationRecord {
                label: Label::Usage,
                arg1_id: "P05-1057.4".into(),
                arg2_id: "P05-1057.3".into(),
                reverse: true,
                line: 1,
            }
        );
        assert_eq!(rels[1].label, Label::Topic);
        assert!(!rels[1].reverse);
        assert_eq!(rels[1].line, 3);
    }

    #[test]
    fn release_label_spellings() {
        let rels = parse_relations("MODEL-FEATURE(A.1,A.2)\nCOMPARE(A.3,A.4)").unwrap();
        assert_eq!(rels[0].label, Label::Model);
        assert_eq!(rels[1].label, Label::Comparison);
    }

    #[test]
    fn unknown_label() {
        let err = parse_relations("TOPIC(A.1,A.2)\nCAUSE(A.1,A.2)").unwrap_err();
        match &err {
            CorpusError::UnknownLabel { line, label } => {
                assert_eq!((*line, label.as_str()), (2, "CAUSE"));
            }
            other => panic!("{other:?}"),
        }
        let msg = err.to_string();
        for l in Label::ALL {
            assert!(msg.contains(l.as_str()), "{msg}");
        }
    }

    #[test]
    fn malformed_relation_lines() {
        for bad in [
            "USAGE A.1,A.2",
            "USAGE(A.1)",
            "USAGE(A.1,A.2",
            "USAGE(A.1,A.2,FLIP)",
            "USAGE(A.1,A.1)",
        ] {
            assert!(
                matches!(
                    parse_relations(bad),
                    Err(CorpusError::MalformedRelation { line: 1, .. })
                ),
                "{bad}"
            );
        }
    }

    fn small_corpus() -> Corpus {
        let raw = format!(
            "{}<text id=\"E\"><title><entity id=\"E.1\">x</entity></title><abstract><entity id=\"E.2\">y</entity></abstract></text>",
            doc("<entity id=\"D.1\">a</entity> and <entity id=\"D.2\">b</entity>")
        );
        let docs = parse_documents(&raw).unwrap();
        Corpus::new(docs, Vec::new(), SourceTag::Task11).unwrap()
    }

    #[test]
    fn resolve_joins_relations() {
        let mut corpus = small_corpus();
        corpus.relations = parse_relations("USAGE(D.1,D.2)\nTOPIC(D.2,D.1,REVERSE)").unwrap();
        let resolved = corpus.resolve().unwrap();
        assert_eq!(resolved.len(), 2);
        assert_eq!(resolved[0].arg1.surface, "a");
        assert_eq!(resolved[1].arg1.surface, "b");
        assert_eq!(resolved[0].document.doc_id, "D");
    }

    #[test]
    fn resolve_rejects_dangling_and_cross_segment() {
        let mut corpus = small_corpus();
        corpus.relations = parse_relations("USAGE(D.1,D.2)\nUSAGE(D.1,D.9)").unwrap();
        match corpus.resolve() {
            Err(CorpusError::Resolution { line, relation, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(relation, "USAGE(D.1,D.9)");
            }
            other => panic!("{other:?}"),
        }
        corpus.relations = parse_relations("USAGE(E.1,E.2)").unwrap();
        assert!(matches!(
            corpus.resolve(),
            Err(CorpusError::Resolution { .. })
        ));
        corpus.relations = parse_relations("USAGE(D.1,E.2)").unwrap();
        assert!(matches!(
            corpus.resolve(),
            Err(CorpusError::Resolution { .. })
        ));
    }

    #[test]
    fn histogram_counts() {
        let empty = Corpus::empty(SourceTag::Task11);
        let h = empty.class_histogram();
        assert_eq!(h.len(), 6);
        assert!(h.values().all(|&c| c == 0));

        let rels = parse_relations("USAGE(a,b)\nUSAGE(c,d)\nTOPIC(e,f)\nUSAGE(g,h)").unwrap();
        let h = class_histogram(&rels);
        assert_eq!(h[&Label::Usage], 3);
        assert_eq!(h[&Label::Topic], 1);
        assert_eq!(h.values().sum::<usize>(), 4);
    }

    #[test]
    fn dump_has_one_line_per_record() {
        let mut corpus = small_corpus();
        corpus.relations = parse_relations("USAGE(D.1,D.2)").unwrap();
        let mut buf = Vec::new();
        corpus.write_dump(&mut buf).unwrap();
        let lines: Vec<serde_json::Value> = String::from_utf8(buf)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0]["kind"], "document");
        assert_eq!(lines[2]["kind"], "relation");
        assert_eq!(lines[2]["label"], "USAGE");
        assert_eq!(lines[0]["source"], "task1.1");
    }

    /// Segment text pieces and which of them are tagged.
    fn segment_strategy() -> impl Strategy<Value = Vec<(String, bool)>> {
        prop::collection::vec(("[a-zA-Zé ,.\\-0-9\n]{1,12}", any::<bool>()), 0..8)
    }

    fn markup_of(pieces: &[(String, bool)], prefix: &str) -> String {
        let mut out = String::new();
        for (i, (text, tagged)) in pieces.iter().enumerate() {
            if *tagged {
                out.push_str(&format!("<entity id=\"{prefix}.{i}\">{text}</entity>"));
            } else {
                out.push_str(text);
            }
        }
        out
    }

    proptest! {
        #[test]
        fn markup_round_trips(title in segment_strategy(), abs in segment_strategy()) {
            let title_markup = markup_of(&title, "T");
            let abstract_markup = markup_of(&abs, "A");
            let raw = format!("<text id=\"X\">\n<title>{title_markup}</title>\n<abstract>{abstract_markup}</abstract>\n</text>\n");
            let docs = parse_documents(&raw).unwrap();
            let d = &docs[0];
            prop_assert_eq!(render_segment(&d.title, d.segment_entities(true)), title_markup);
            prop_assert_eq!(render_segment(&d.abstract_text, d.segment_entities(false)), abstract_markup);
            prop_assert_eq!(render_document(d), raw);
            for e in &d.entities {
                let seg = d.segment_text(e);
                prop_assert!(e.start_char < e.end_char);
                prop_assert!(e.end_char <= seg.chars().count());
                let slice: String = seg.chars().skip(e.start_char).take(e.end_char - e.start_char).collect();
                prop_assert_eq!(&slice, &e.surface);
            }
        }

        #[test]
        fn histogram_sums_to_relation_count(labels in prop::collection::vec(0usize..6, 0..50)) {
            let rels: Vec<RelationRecord> = labels
                .iter()
                .enumerate()
                .map(|(i, &l)| RelationRecord::new(Label::ALL[l], &format!("a{i}"), &format!("b{i}"), false))
                .collect();
            prop_assert_eq!(class_histogram(&rels).values().sum::<usize>(), rels.len());
        }
    }
}
