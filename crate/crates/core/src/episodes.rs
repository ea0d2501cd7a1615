//! Line-delimited episode files.
//!
//! One JSON object per line:
//!
//! ```text
//! {"episode_id": "...",
//!  "relations": [{"name", "description", "subject_type", "object_type", "support": ["<tagged>"]}],
//!  "queries":   [{"text": "<tagged>", "gold_label", "subject_type"?, "object_type"?}]}
//! ```
//!
//! A line that is not valid JSON or does not match the field layout is a
//! schema error (fatal for a run). A well-formed record whose content breaks an
//! episode invariant, including bad tag markup, is an invariant violation and
//! only affects that episode.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    CandidateRelation, EntityType, Episode, Label, Query, RelationSpec, TypeInventory, TypePair,
};
use crate::tagged::{parse_tagged, render_tagged};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("episode `{episode_id}` (line {line}) violates an invariant: {reason}")]
    InvariantViolation { line: usize, episode_id: String, reason: String },
}

impl LoadError {
    /// Schema and I/O errors abort a run; invariant violations do not.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, LoadError::InvariantViolation { .. })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationRecord {
    pub name: String,
    pub description: String,
    pub subject_type: String,
    pub object_type: String,
    pub support: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRecord {
    pub text: String,
    pub gold_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_type: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub relations: Vec<RelationRecord>,
    pub queries: Vec<QueryRecord>,
}

impl EpisodeRecord {
    pub fn from_episode(ep: &Episode) -> Self {
        Self {
            episode_id: ep.episode_id.clone(),
            relations: ep
                .relations
                .iter()
                .map(|r| RelationRecord {
                    name: r.spec.name.clone(),
                    description: r.spec.description.clone(),
                    subject_type: r.spec.subject_type.to_string(),
                    object_type: r.spec.object_type.to_string(),
                    support: vec![render_tagged(&r.support)],
                })
                .collect(),
            queries: ep
                .queries
                .iter()
                .map(|q| QueryRecord {
                    text: render_tagged(&q.sentence),
                    gold_label: q.gold_label.to_string(),
                    subject_type: q.types.as_ref().map(|t| t.subject.to_string()),
                    object_type: q.types.as_ref().map(|t| t.object.to_string()),
                })
                .collect(),
        }
    }

    /// Convert to a validated [`Episode`]; the error is a human-readable reason.
    pub fn into_episode(self, inventory: &TypeInventory) -> Result<Episode, String> {
        let mut relations = Vec::with_capacity(self.relations.len());
        for r in self.relations {
            if r.support.len() != 1 {
                return Err(format!(
                    "relation `{}` has {} gold supports, expected exactly 1",
                    r.name,
                    r.support.len()
                ));
            }
            let support = parse_tagged(&r.support[0])
                .map_err(|e| format!("support of `{}`: {e}", r.name))?;
            relations.push(CandidateRelation {
                spec: RelationSpec {
                    name: r.name,
                    description: r.description,
                    subject_type: EntityType::new(r.subject_type),
                    object_type: EntityType::new(r.object_type),
                },
                support,
            });
        }
        let mut queries = Vec::with_capacity(self.queries.len());
        for (i, q) in self.queries.into_iter().enumerate() {
            let sentence = parse_tagged(&q.text).map_err(|e| format!("query {i}: {e}"))?;
            let types = match (q.subject_type, q.object_type) {
                (Some(s), Some(o)) => Some(TypePair::new(EntityType::new(s), EntityType::new(o))),
                (None, None) => None,
                _ => {
                    return Err(format!(
                        "query {i}: subject_type and object_type must be given together"
                    ))
                }
            };
            queries.push(Query { sentence, gold_label: Label::parse(&q.gold_label), types });
        }
        let episode = Episode { episode_id: self.episode_id, relations, queries };
        episode.validate(inventory)?;
        Ok(episode)
    }
}

/// Streaming reader: holds one line at a time.
pub struct EpisodeReader<R> {
    input: R,
    line_no: usize,
    buf: String,
    inventory: TypeInventory,
}

impl EpisodeReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LoadError> {
        Ok(Self::new(BufReader::new(File::open(path)?)))
    }
}

impl<R: BufRead> EpisodeReader<R> {
    pub fn new(input: R) -> Self {
        Self { input, line_no: 0, buf: String::new(), inventory: TypeInventory::Open }
    }

    pub fn with_inventory(mut self, inventory: TypeInventory) -> Self {
        self.inventory = inventory;
        self
    }

    /// 1-based number of the last line read.
    pub fn line(&self) -> usize {
        self.line_no
    }
}

impl<R: BufRead> Iterator for EpisodeReader<R> {
    type Item = Result<Episode, LoadError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            let record: EpisodeRecord = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(e) => {
                    return Some(Err(LoadError::Schema { line: self.line_no, message: e.to_string() }))
                }
            };
            let episode_id = record.episode_id.clone();
            return Some(record.into_episode(&self.inventory).map_err(|reason| {
                LoadError::InvariantViolation { line: self.line_no, episode_id, reason }
            }));
        }
    }
}

/// Read a whole file, failing on the first error of any kind.
pub fn load_episodes(path: impl AsRef<Path>) -> Result<Vec<Episode>, LoadError> {
    EpisodeReader::open(path)?.collect()
}

pub fn write_episodes<'a, W: Write>(
    mut out: W,
    episodes: impl IntoIterator<Item = &'a Episode>,
) -> io::Result<()> {
    for ep in episodes {
        serde_json::to_writer(&mut out, &EpisodeRecord::from_episode(ep))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Cursor, Read};

    fn relation_json(name: &str) -> String {
        format!(
            r#"{{"name":"{name}","description":"d","subject_type":"PERSON","object_type":"CITY","support":["<subject>A</subject> in <object>B</object>"]}}"#
        )
    }

    fn episode_json(id: &str, n_rel: usize, gold: &str) -> String {
        let rels: Vec<String> = (0..n_rel).map(|i| relation_json(&format!("r{i}"))).collect();
        let q = format!(r#"{{"text":"<subject>X</subject> at <object>Y</object>","gold_label":"{gold}"}}"#);
        format!(
            r#"{{"episode_id":"{id}","relations":[{}],"queries":[{q},{q},{q}]}}"#,
            rels.join(",")
        )
    }

    #[test]
    fn reads_two_episodes() {
        let data = format!("{}\n\n{}\n", episode_json("e1", 5, "r0"), episode_json("e2", 5, "no_relation"));
        let eps: Vec<_> = EpisodeReader::new(Cursor::new(data)).collect::<Result<_, _>>().unwrap();
        assert_eq!(eps.len(), 2);
        assert_eq!(eps[0].episode_id, "e1");
        assert!(eps.iter().all(|e| e.queries.len() == 3));
        assert_eq!(eps[1].queries[0].gold_label, Label::NoRelation);
    }

    #[test]
    fn four_relations_is_invariant_violation() {
        let data = episode_json("bad", 4, "r0");
        let err = EpisodeReader::new(Cursor::new(data)).next().unwrap().unwrap_err();
        match err {
            LoadError::InvariantViolation { episode_id, line, .. } => {
                assert_eq!(episode_id, "bad");
                assert_eq!(line, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gold_label_closure() {
        let data = episode_json("e", 5, "r9");
        let err = EpisodeReader::new(Cursor::new(data)).next().unwrap().unwrap_err();
        assert!(!err.is_fatal());
        assert!(err.to_string().contains("r9"));
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let data = format!("{}\n{{\"episode_id\": 3}}\n", episode_json("e1", 5, "r0"));
        let mut reader = EpisodeReader::new(Cursor::new(data));
        assert!(reader.next().unwrap().is_ok());
        let err = reader.next().unwrap().unwrap_err();
        assert!(matches!(err, LoadError::Schema { line: 2, .. }), "{err}");
        assert!(err.is_fatal());
    }

    #[test]
    fn unknown_field_is_schema_error() {
        let data = episode_json("e1", 5, "r0").replacen("\"queries\"", "\"extra\":1,\"queries\"", 1);
        let err = EpisodeReader::new(Cursor::new(data)).next().unwrap().unwrap_err();
        assert!(matches!(err, LoadError::Schema { .. }));
    }

    #[test]
    fn malformed_query_tag_is_not_fatal() {
        let data = episode_json("e1", 5, "r0").replace("at <object>Y</object>", "at Y");
        let err = EpisodeReader::new(Cursor::new(data)).next().unwrap().unwrap_err();
        assert!(!err.is_fatal());
    }

    #[test]
    fn two_gold_supports_rejected() {
        let data = episode_json("e1", 5, "r0").replacen(
            r#""support":["<subject>A</subject> in <object>B</object>"]"#,
            r#""support":["<subject>A</subject> in <object>B</object>","<subject>A</subject> in <object>B</object>"]"#,
            1,
        );
        let err = EpisodeReader::new(Cursor::new(data)).next().unwrap().unwrap_err();
        assert!(err.to_string().contains("exactly 1"));
    }

    #[test]
    fn closed_inventory_rejects_unknown_types() {
        let data = episode_json("e1", 5, "r0").replace("CITY", "NATIONALITY");
        let reader = EpisodeReader::new(Cursor::new(data)).with_inventory(TypeInventory::standard());
        let errs: Vec<_> = reader.collect();
        assert!(errs[0].is_err());
    }

    #[test]
    fn write_then_read() {
        let data = episode_json("e1", 5, "r3");
        let eps: Vec<_> = EpisodeReader::new(Cursor::new(data)).collect::<Result<_, _>>().unwrap();
        let mut out = Vec::new();
        write_episodes(&mut out, &eps).unwrap();
        let back: Vec<_> = EpisodeReader::new(Cursor::new(out)).collect::<Result<_, _>>().unwrap();
        assert_eq!(back, eps);
    }

    /// Produces episode lines on demand so the file never exists in memory.
    struct LazyEpisodes {
        next: usize,
        total: usize,
        pending: Vec<u8>,
        pos: usize,
    }

    impl Read for LazyEpisodes {
        fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
            if self.pos == self.pending.len() {
                if self.next == self.total {
                    return Ok(0);
                }
                self.pending = format!("{}\n", episode_json(&format!("e{}", self.next), 5, "r1")).into_bytes();
                self.pos = 0;
                self.next += 1;
            }
            let n = out.len().min(self.pending.len() - self.pos);
            out[..n].copy_from_slice(&self.pending[self.pos..self.pos + n]);
            self.pos += n;
            Ok(n)
        }
    }

    #[test]
    fn streams_ten_thousand_episodes() {
        let src = LazyEpisodes { next: 0, total: 10_000, pending: Vec::new(), pos: 0 };
        let mut reader = EpisodeReader::new(BufReader::with_capacity(4096, src));
        let mut count = 0;
        let mut queries = 0;
        for ep in &mut reader {
            let ep = ep.unwrap();
            queries += ep.queries.len();
            count += 1;
        }
        assert_eq!(count, 10_000);
        assert_eq!(queries, 30_000);
        assert_eq!(reader.line(), 10_000);
    }
}
