//! File formats: embedding CSV, similarity CSV, JSON result envelopes,
//! JSONL transcripts and decision logs.
//!
//! Embedding CSV is one row per object with `d` comma-separated floats,
//! an optional header line and an optional leading name column.
//! Similarity CSV is a plain `n x n` float matrix. Result files carry a
//! deterministic `payload` object; the generation timestamp lives in a
//! separate top-level field so payloads compare byte for byte.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::Embedding;
use crate::oracle::{SimilarityMatrix, TranscriptRecord};
use crate::robust::DecisionRecord;

/// Parse an embedding CSV; returns the embedding and object names when a
/// name column is present.
pub fn read_embedding_csv(path: &Path) -> Result<(Embedding, Option<Vec<String>>)> {
    let reader = BufReader::new(File::open(path)?);
    parse_embedding_csv(reader)
}

pub fn parse_embedding_csv<R: BufRead>(reader: R) -> Result<(Embedding, Option<Vec<String>>)> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut named = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let numeric: Vec<Option<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        let all_numeric = numeric.iter().all(Option::is_some);
        let tail_numeric = numeric.len() > 1 && numeric[1..].iter().all(Option::is_some);

        if rows.is_empty() && !all_numeric && !(numeric[0].is_none() && tail_numeric) {
            // Header line: more than one non-numeric field.
            continue;
        }
        if all_numeric && !(named && !rows.is_empty()) {
            rows.push(numeric.into_iter().map(Option::unwrap).collect());
        } else if numeric[0].is_none() && tail_numeric {
            if !rows.is_empty() && !named {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "name column appears after unnamed rows".into(),
                });
            }
            named = true;
            names.push(fields[0].to_string());
            rows.push(numeric[1..].iter().map(|v| v.unwrap()).collect());
        } else if all_numeric && named {
            return Err(Error::Parse {
                line: idx + 1,
                message: "unnamed row in a named file".into(),
            });
        } else {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("cannot parse '{trimmed}' as coordinates"),
            });
        }
    }
    let emb = Embedding::new(rows)?;
    Ok((emb, if named { Some(names) } else { None }))
}

pub fn write_embedding_csv(path: &Path, emb: &Embedding, names: Option<&[String]>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (i, p) in emb.points().enumerate() {
        let coords: Vec<String> = p.iter().map(|c| format!("{c}")).collect();
        match names {
            Some(names) => writeln!(out, "{},{}", names[i], coords.join(","))?,
            None => writeln!(out, "{}", coords.join(","))?,
        }
    }
    Ok(())
}

/// Parse an `n x n` similarity CSV and validate symmetry.
pub fn read_similarity_csv(path: &Path) -> Result<SimilarityMatrix> {
    let reader = BufReader::new(File::open(path)?);
    parse_similarity_csv(reader)
}

pub fn parse_similarity_csv<R: BufRead>(reader: R) -> Result<SimilarityMatrix> {
    let mut values: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: Vec<f64> = trimmed
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: idx + 1,
                    message: format!("cannot parse '{f}' as a float"),
                })
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {w} columns, got {}", row.len()),
                })
            }
            _ => {}
        }
        values.extend(row);
    }
    let n = width.ok_or_else(|| Error::invalid("empty similarity file"))?;
    if values.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: values.len(),
        });
    }
    SimilarityMatrix::new(n, values)
}

pub fn write_similarity_csv(path: &Path, sim: &SimilarityMatrix) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for row in sim.rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Deterministic JSON bytes of a result payload: identical payloads give
/// identical bytes.
pub fn payload_bytes<T: Serialize>(payload: &T) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec_pretty(payload)?)
}

/// Write `{ "generated_at": ..., "payload": ... }`. Only the timestamp
/// differs between reruns with the same config and seed.
pub fn write_result_json<T: Serialize>(path: &Path, payload: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    // Emit the payload with its struct field order, not Value's sorted
    // keys, so the bytes match payload_bytes exactly.
    writeln!(
        out,
        "{{\n  \"generated_at\": \"{}\",\n  \"payload\": {}\n}}",
        unix_now_string(),
        indent_tail(&String::from_utf8(payload_bytes(payload)?).unwrap())
    )?;
    Ok(())
}

/// Read back the payload object of a result file.
pub fn read_result_payload<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = BufReader::new(File::open(path)?);
    let value: serde_json::Value = serde_json::from_reader(file)?;
    Ok(serde_json::from_value(value["payload"].clone())?)
}

fn indent_tail(s: &str) -> String {
    let mut lines = s.lines();
    let mut out = String::new();
    if let Some(first) = lines.next() {
        out.push_str(first);
    }
    for line in lines {
        out.push_str("\n  ");
        out.push_str(line);
    }
    out
}

fn unix_now_string() -> String {
    use std::time::{SystemTime, UNIX_EPOCH};
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    format!("{secs:.3}")
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        writeln!(out, "{}", serde_json::to_string(record)?)?;
    }
    Ok(())
}

pub fn write_transcript(path: &Path, records: &[TranscriptRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptRecord>> {
    read_jsonl(path)
}

pub fn write_run_log(path: &Path, records: &[DecisionRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn read_run_log(path: &Path) -> Result<Vec<DecisionRecord>> {
    read_jsonl(path)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

/// Write aggregate rows as CSV: a header line, then one line per row.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn embedding_roundtrip_plain() {
        let emb = Embedding::new(vec![vec![0.25, -1.5], vec![3.0, 0.125]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        write_embedding_csv(&path, &emb, None).unwrap();
        let (back, names) = read_embedding_csv(&path).unwrap();
        assert!(names.is_none());
        assert_eq!(
            emb.points().collect::<Vec<_>>(),
            back.points().collect::<Vec<_>>()
        );
    }

    #[test]
    fn embedding_roundtrip_named() {
        let emb = Embedding::new(vec![vec![0.5], vec![2.5], vec![4.0]]).unwrap();
        let names = vec!["ale".to_string(), "stout".to_string(), "lager".to_string()];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("named.csv");
        write_embedding_csv(&path, &emb, Some(&names)).unwrap();
        let (back, got) = read_embedding_csv(&path).unwrap();
        assert_eq!(got.as_deref(), Some(names.as_slice()));
        assert_eq!(back.n(), 3);
    }

    #[test]
    fn embedding_header_is_skipped() {
        let text = "x,y\n0.0,1.0\n2.0,3.0\n";
        let (emb, names) = parse_embedding_csv(Cursor::new(text)).unwrap();
        assert_eq!(emb.n(), 2);
        assert!(names.is_none());
    }

    #[test]
    fn embedding_bad_row_reports_line() {
        let text = "0.0,1.0\n2.0,oops\n";
        let err = parse_embedding_csv(Cursor::new(text)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn similarity_roundtrip_and_validation() {
        let sim = SimilarityMatrix::new(2, vec![0.0, 0.25, 0.25, 0.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sim.csv");
        write_similarity_csv(&path, &sim).unwrap();
        let back = read_similarity_csv(&path).unwrap();
        assert_eq!(back.get(0, 1), 0.25);

        let bad = "0.0,0.5\n0.4,0.0\n";
        assert!(matches!(
            parse_similarity_csv(Cursor::new(bad)),
            Err(Error::AsymmetricMatrix { .. })
        ));
    }

    #[test]
    fn result_payload_roundtrips_and_is_deterministic() {
        #[derive(Serialize, serde::Deserialize, PartialEq, Debug)]
        struct Payload {
            label: String,
            values: Vec<f64>,
        }
        let payload = Payload {
            label: "demo".into(),
            values: vec![1.0, 0.5],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("result.json");
        write_result_json(&path, &payload).unwrap();
        let back: Payload = read_result_payload(&path).unwrap();
        assert_eq!(back, payload);
        assert_eq!(
            payload_bytes(&payload).unwrap(),
            payload_bytes(&back).unwrap()
        );
    }

    #[test]
    fn jsonl_roundtrip() {
        let records = vec![
            TranscriptRecord {
                pair: (0, 1),
                answer: 1,
                timestamp: 123.0,
            },
            TranscriptRecord {
                pair: (2, 0),
                answer: 0,
                timestamp: 124.0,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_transcript(&path, &records).unwrap();
        let back = read_transcript(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].pair, (0, 1));
        assert_eq!(back[1].answer, 0);
    }
}
