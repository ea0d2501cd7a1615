//! Sentences with one tagged subject and one tagged object.
//!
//! The markup is `<subject>…</subject>` and `<object>…</object>`. On ingest,
//! tag names are matched case-insensitively and whitespace inside the angle
//! brackets is tolerated (`< Subject >`); rendering always emits the canonical
//! lowercase form. Spans are character (Unicode scalar) offsets into the
//! de-tagged text.

use std::fmt;
use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SUBJECT_OPEN: &str = "<subject>";
pub const SUBJECT_CLOSE: &str = "</subject>";
pub const OBJECT_OPEN: &str = "<object>";
pub const OBJECT_CLOSE: &str = "</object>";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TagError {
    #[error("missing {0} tag")]
    MissingTag(Role),
    #[error("more than one {0} tag")]
    DuplicateTag(Role),
    #[error("malformed tag markup: {0}")]
    MalformedTag(String),
    #[error("empty {0} span")]
    EmptySpan(Role),
    #[error("invalid span: {0}")]
    InvalidSpan(String),
    #[error("empty sentence")]
    Empty,
}

/// Which entity a span marks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Subject,
    Object,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Subject => f.write_str("subject"),
            Role::Object => f.write_str("object"),
        }
    }
}

/// Half-open character interval plus the surface form it covers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

impl Span {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TaggedSentence {
    text: String,
    subject: Span,
    object: Span,
}

impl TaggedSentence {
    /// Build from de-tagged text and character ranges.
    pub fn new(
        text: impl Into<String>,
        subject: Range<usize>,
        object: Range<usize>,
    ) -> Result<Self, TagError> {
        let text = text.into();
        if text.is_empty() {
            return Err(TagError::Empty);
        }
        let n_chars = text.chars().count();
        let subject = make_span(&text, n_chars, subject, Role::Subject)?;
        let object = make_span(&text, n_chars, object, Role::Object)?;
        if subject.overlaps(&object) {
            return Err(TagError::InvalidSpan(format!(
                "subject {:?} overlaps object {:?}",
                subject.range(),
                object.range()
            )));
        }
        Ok(Self { text, subject, object })
    }

    /// De-tagged text.
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn subject(&self) -> &Span {
        &self.subject
    }

    pub fn object(&self) -> &Span {
        &self.object
    }

    pub fn render(&self) -> String {
        render_tagged(self)
    }
}

fn make_span(text: &str, n_chars: usize, r: Range<usize>, role: Role) -> Result<Span, TagError> {
    if r.start >= r.end {
        return Err(TagError::EmptySpan(role));
    }
    if r.end > n_chars {
        return Err(TagError::InvalidSpan(format!(
            "{role} span {r:?} exceeds text length {n_chars}"
        )));
    }
    let surface: String = text.chars().skip(r.start).take(r.end - r.start).collect();
    Ok(Span { start: r.start, end: r.end, surface })
}

impl fmt::Display for TaggedSentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_tagged(self))
    }
}

impl Serialize for TaggedSentence {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&render_tagged(self))
    }
}

impl<'de> Deserialize<'de> for TaggedSentence {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        parse_tagged(&raw).map_err(serde::de::Error::custom)
    }
}

fn tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)<\s*(/?)\s*(subject|object)\s*>").expect("valid regex"))
}

/// Parse a sentence carrying subject/object tag markup.
pub fn parse_tagged(raw: &str) -> Result<TaggedSentence, TagError> {
    if raw.trim().is_empty() {
        return Err(TagError::Empty);
    }
    let mut text = String::with_capacity(raw.len());
    let mut chars = 0usize;
    let mut last = 0usize;
    let mut open: Option<(Role, usize)> = None;
    let mut subject: Option<Range<usize>> = None;
    let mut object: Option<Range<usize>> = None;

    for caps in tag_regex().captures_iter(raw) {
        let whole = caps.get(0).expect("group 0");
        let chunk = &raw[last..whole.start()];
        text.push_str(chunk);
        chars += chunk.chars().count();
        last = whole.end();

        let closing = !caps[1].is_empty();
        let role = if caps[2].eq_ignore_ascii_case("subject") { Role::Subject } else { Role::Object };
        let slot = match role {
            Role::Subject => &mut subject,
            Role::Object => &mut object,
        };
        match (closing, open) {
            (false, None) => {
                if slot.is_some() {
                    return Err(TagError::DuplicateTag(role));
                }
                open = Some((role, chars));
            }
            (false, Some((outer, _))) => {
                return Err(TagError::MalformedTag(format!(
                    "<{role}> opened inside <{outer}>"
                )));
            }
            (true, Some((current, start))) if current == role => {
                if start == chars {
                    return Err(TagError::EmptySpan(role));
                }
                *slot = Some(start..chars);
                open = None;
            }
            (true, Some((current, _))) => {
                return Err(TagError::MalformedTag(format!(
                    "</{role}> closes <{current}>"
                )));
            }
            (true, None) => {
                return Err(TagError::MalformedTag(format!("</{role}> without opening tag")));
            }
        }
    }
    if let Some((role, _)) = open {
        return Err(TagError::MalformedTag(format!("unclosed <{role}>")));
    }
    text.push_str(&raw[last..]);

    let subject = subject.ok_or(TagError::MissingTag(Role::Subject))?;
    let object = object.ok_or(TagError::MissingTag(Role::Object))?;
    TaggedSentence::new(text, subject, object)
}

/// Render with canonical tags.
pub fn render_tagged(s: &TaggedSentence) -> String {
    let mut marks = [
        (s.subject.start, SUBJECT_OPEN),
        (s.subject.end, SUBJECT_CLOSE),
        (s.object.start, OBJECT_OPEN),
        (s.object.end, OBJECT_CLOSE),
    ];
    // Adjacent spans: a closing tag at offset i sorts before an opening tag at i.
    marks.sort_by_key(|(pos, tag)| (*pos, !tag.starts_with("</")));
    let mut out = String::with_capacity(s.text.len() + 40);
    let mut next = marks.iter().peekable();
    for (i, ch) in s.text.chars().enumerate() {
        while let Some((_, tag)) = next.next_if(|(pos, _)| *pos == i) {
            out.push_str(tag);
        }
        out.push(ch);
    }
    for (_, tag) in next {
        out.push_str(tag);
    }
    out
}

/// Lowercased whitespace tokens of the de-tagged text.
pub fn token_set(s: &TaggedSentence) -> std::collections::BTreeSet<String> {
    s.text.split_whitespace().map(str::to_lowercase).collect()
}
