//! Embedding file formats.
//!
//! Line-delimited JSON, one record per line:
//! `{"id", "text", "subject_type", "object_type", "vector": [..], "rule"?, "source"?}`.
//!
//! The optional binary sidecar stores the vectors of the same records, in the
//! same order: a 16-byte little-endian header (magic `RSV1`, `u32` dimension,
//! `u64` count) followed by `count × dimension` `f32` values, row-major. When a
//! sidecar is given, the `vector` field of the JSON lines may be omitted.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddingRecord, StoreError, VectorIndex, VectorSource};
use crate::model::TypePair;
use crate::tagged::parse_tagged;

pub const SIDECAR_MAGIC: [u8; 4] = *b"RSV1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingLine {
    pub id: u64,
    pub text: String,
    pub subject_type: String,
    pub object_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<VectorSource>,
}

impl From<&EmbeddingRecord> for EmbeddingLine {
    fn from(r: &EmbeddingRecord) -> Self {
        Self {
            id: r.id,
            text: r.sentence.render(),
            subject_type: r.type_pair.subject.to_string(),
            object_type: r.type_pair.object.to_string(),
            vector: Some(r.vector.clone()),
            rule: r.rule.clone(),
            source: Some(r.source),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> StoreError {
    StoreError::Format(format!("{}: {e}", path.display()))
}

/// Read a sidecar file into (dimension, rows).
pub fn read_sidecar(path: &Path) -> Result<(usize, Vec<Vec<f32>>), StoreError> {
    let mut r = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(|e| io_err(path, e))?;
    if header[..4] != SIDECAR_MAGIC {
        return Err(StoreError::Format(format!("{}: bad sidecar magic", path.display())));
    }
    let dim = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes")) as usize;
    let count = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
    let mut rows = Vec::with_capacity(count);
    let mut buf = vec![0u8; dim * 4];
    for i in 0..count {
        r.read_exact(&mut buf)
            .map_err(|e| StoreError::Format(format!("{}: row {i}: {e}", path.display())))?;
        rows.push(
            buf.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect(),
        );
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| io_err(path, e))? != 0 {
        return Err(StoreError::Format(format!("{}: trailing bytes after {count} rows", path.display())));
    }
    Ok((dim, rows))
}

pub fn write_sidecar(path: &Path, records: &[EmbeddingRecord]) -> Result<(), StoreError> {
    let dim = records.first().map_or(0, |r| r.vector.len());
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    let mut header = Vec::with_capacity(16);
    header.extend_from_slice(&SIDECAR_MAGIC);
    header.extend_from_slice(&(dim as u32).to_le_bytes());
    header.extend_from_slice(&(records.len() as u64).to_le_bytes());
    w.write_all(&header).map_err(|e| io_err(path, e))?;
    for r in records {
        if r.vector.len() != dim {
            return Err(StoreError::DimensionMismatch { expected: dim, got: r.vector.len() });
        }
        for x in &r.vector {
            w.write_all(&x.to_le_bytes()).map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Read an embedding file (and optional sidecar) into records.
///
/// `default_source` applies to lines without a `source` field.
pub fn read_embeddings(
    path: &Path,
    sidecar: Option<&Path>,
    default_source: VectorSource,
) -> Result<Vec<EmbeddingRecord>, StoreError> {
    let mut side_rows = match sidecar {
        Some(p) => Some(read_sidecar(p)?.1.into_iter()),
        None => None,
    };
    let reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ln = i + 1;
        let parsed: EmbeddingLine = serde_json::from_str(&line)
            .map_err(|e| StoreError::Format(format!("{}:{ln}: {e}", path.display())))?;
        let vector = match side_rows.as_mut() {
            Some(rows) => rows.next().ok_or_else(|| {
                StoreError::Format(format!("{}: sidecar has fewer rows than records", path.display()))
            })?,
            None => parsed.vector.ok_or_else(|| {
                StoreError::Format(format!("{}:{ln}: missing `vector`", path.display()))
            })?,
        };
        let sentence = parse_tagged(&parsed.text)
            .map_err(|e| StoreError::Format(format!("{}:{ln}: {e}", path.display())))?;
        out.push(EmbeddingRecord {
            id: parsed.id,
            sentence,
            vector,
            type_pair: TypePair::new(parsed.subject_type.as_str(), parsed.object_type.as_str()),
            rule: parsed.rule,
            source: parsed.source.unwrap_or(default_source),
        });
    }
    if let Some(mut rows) = side_rows {
        if rows.next().is_some() {
            return Err(StoreError::Format(format!("{}: sidecar has more rows than records", path.display())));
        }
    }
    Ok(out)
}

pub fn load_embeddings(
    path: &Path,
    sidecar: Option<&Path>,
    default_source: VectorSource,
) -> Result<VectorIndex, StoreError> {
    VectorIndex::build(read_embeddings(path, sidecar, default_source)?)
}

/// Write records as JSON lines; vectors are omitted when `with_vectors` is false.
pub fn write_embeddings(path: &Path, records: &[EmbeddingRecord], with_vectors: bool) -> Result<(), StoreError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    for r in records {
        let mut line = EmbeddingLine::from(r);
        if !with_vectors {
            line.vector = None;
        }
        serde_json::to_writer(&mut w, &line).map_err(|e| StoreError::Format(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::normalize;

    fn records() -> Vec<EmbeddingRecord> {
        (0..5u64)
            .map(|i| EmbeddingRecord {
                id: 100 + i,
                sentence: parse_tagged(&format!("<subject>S{i}</subject> joined <object>O{i}</object>")).unwrap(),
                vector: normalize(&[1.0 + i as f32, 0.5, -0.25 * i as f32]),
                type_pair: TypePair::new("PERSON", "ORGANIZATION"),
                rule: (i % 2 == 0).then(|| "[entity=PERSON]+ <nsubj joined >dobj [entity=ORGANIZATION]+".to_string()),
                source: VectorSource::RuleEmbedding,
            })
            .collect()
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let recs = records();
        write_embeddings(&path, &recs, true).unwrap();
        let back = read_embeddings(&path, None, VectorSource::SentenceEmbedding).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let meta = dir.path().join("emb.jsonl");
        let side = dir.path().join("emb.bin");
        let recs = records();
        write_embeddings(&meta, &recs, false).unwrap();
        write_sidecar(&side, &recs).unwrap();
        let bytes = std::fs::read(&side).unwrap();
        assert_eq!(&bytes[..4], b"RSV1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 5);
        assert_eq!(bytes.len(), 16 + 5 * 3 * 4);
        let back = read_embeddings(&meta, Some(&side), VectorSource::SentenceEmbedding).unwrap();
        assert_eq!(back, recs);
        let index = load_embeddings(&meta, Some(&side), VectorSource::SentenceEmbedding).unwrap();
        assert_eq!(index.len(), 5);
    }

    #[test]
    fn missing_vector_without_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let meta = dir.path().join("emb.jsonl");
        write_embeddings(&meta, &records(), false).unwrap();
        let err = read_embeddings(&meta, None, VectorSource::SentenceEmbedding).unwrap_err();
        assert!(err.to_string().contains("missing `vector`"));
    }

    #[test]
    fn sidecar_row_count_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let meta = dir.path().join("emb.jsonl");
        let side = dir.path().join("emb.bin");
        let recs = records();
        write_embeddings(&meta, &recs, false).unwrap();
        write_sidecar(&side, &recs[..3]).unwrap();
        assert!(read_embeddings(&meta, Some(&side), VectorSource::SentenceEmbedding).is_err());
    }

    #[test]
    fn source_defaults_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        std::fs::write(
            &path,
            "{\"id\":1,\"text\":\"<subject>A</subject> <object>B</object>\",\"subject_type\":\"PERSON\",\"object_type\":\"CITY\",\"vector\":[1.0,0.0]}\n\
             {\"id\":2,\"text\":\"<subject>A</subject> <object>B</object>\",\"subject_type\":\"PERSON\",\"object_type\":\"CITY\",\"vector\":[0.0,1.0],\"source\":\"rule-embedding-fallback\"}\n",
        )
        .unwrap();
        let recs = read_embeddings(&path, None, VectorSource::RuleEmbedding).unwrap();
        assert_eq!(recs[0].source, VectorSource::RuleEmbedding);
        assert_eq!(recs[1].source, VectorSource::RuleEmbeddingFallback);
    }
}
