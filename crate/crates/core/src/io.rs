//! File-format codecs: similarity CSV, detections JSONL, ranking CSV, and
//! JSON helpers. All writers are atomic (temp file + rename) and all formats
//! round-trip f64 values bit-exactly via shortest round-trip decimals.

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

use crate::error::CoreError;
use crate::graph::Detection;
use crate::linalg::RealMatrix;
use crate::metrics::{Direction, SimilarityMatrix};
use crate::rerank::RerankedList;
use crate::Result;

/// Write bytes so that an interrupted run never leaves a truncated file:
/// the content lands in a sibling temp file which is renamed over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}tmp{}",
        path.extension()
            .map(|e| format!("{}.", e.to_string_lossy()))
            .unwrap_or_default(),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn check_id(id: &str, what: &str) -> Result<()> {
    if id.is_empty() {
        return Err(CoreError::Validation {
            line: 0,
            msg: format!("empty {what} identifier"),
        });
    }
    if id.contains(',') || id.contains('\n') || id.contains('\r') {
        return Err(CoreError::Validation {
            line: 0,
            msg: format!("{what} identifier {id:?} contains a comma or line break"),
        });
    }
    Ok(())
}

/// Shortest decimal that parses back to the same f64.
fn render_f64(v: f64) -> String {
    format!("{v}")
}

/// Serialize a similarity matrix as CSV: header `qid,<target ids>`, then one
/// row per query with full-precision scores.
pub fn similarity_to_csv(sim: &SimilarityMatrix<f64>) -> Result<String> {
    let mut out = String::from("qid");
    for t in sim.target_ids() {
        check_id(t, "target")?;
        out.push(',');
        out.push_str(t);
    }
    out.push('\n');
    for (i, q) in sim.query_ids().iter().enumerate() {
        check_id(q, "query")?;
        out.push_str(q);
        for j in 0..sim.num_targets() {
            out.push(',');
            out.push_str(&render_f64(sim.scores().get(i, j)));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_similarity_csv(path: &Path, sim: &SimilarityMatrix<f64>) -> Result<()> {
    write_atomic(path, similarity_to_csv(sim)?.as_bytes())
}

/// Parse a similarity CSV. Errors carry 1-based line numbers; duplicate ids,
/// ragged rows and non-numeric cells are rejected.
pub fn similarity_from_csv(text: &str, direction: Direction) -> Result<SimilarityMatrix<f64>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(CoreError::Parse {
        line: 1,
        msg: "missing header row".into(),
    })?;
    let mut cols = header.split(',');
    if cols.next() != Some("qid") {
        return Err(CoreError::Parse {
            line: 1,
            msg: "header must start with 'qid'".into(),
        });
    }
    let target_ids: Vec<String> = cols.map(str::to_string).collect();
    for (idx, t) in target_ids.iter().enumerate() {
        if t.is_empty() {
            return Err(CoreError::Parse {
                line: 1,
                msg: format!("empty target id in column {}", idx + 2),
            });
        }
        if target_ids[..idx].contains(t) {
            return Err(CoreError::Parse {
                line: 1,
                msg: format!("duplicate target id {t:?} in column {}", idx + 2),
            });
        }
    }

    let mut query_ids = Vec::new();
    let mut data = Vec::new();
    for (zero_line, row) in lines {
        let line = zero_line + 1;
        if row.is_empty() {
            continue;
        }
        let mut cells = row.split(',');
        let qid = cells.next().unwrap_or_default().to_string();
        if qid.is_empty() {
            return Err(CoreError::Parse {
                line,
                msg: "empty query id".into(),
            });
        }
        if query_ids.contains(&qid) {
            return Err(CoreError::Parse {
                line,
                msg: format!("duplicate query id {qid:?}"),
            });
        }
        let scores: Vec<&str> = cells.collect();
        if scores.len() != target_ids.len() {
            return Err(CoreError::Parse {
                line,
                msg: format!(
                    "expected {} scores, found {}",
                    target_ids.len(),
                    scores.len()
                ),
            });
        }
        for cell in scores {
            let v: f64 = cell.parse().map_err(|_| CoreError::Parse {
                line,
                msg: format!("non-numeric cell {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(CoreError::Validation {
                    line,
                    msg: format!("non-finite score {cell:?}"),
                });
            }
            data.push(v);
        }
        query_ids.push(qid);
    }

    let scores = RealMatrix::new(query_ids.len(), target_ids.len(), data)?;
    SimilarityMatrix::new(query_ids, target_ids, scores, direction)
}

pub fn read_similarity_csv(path: &Path, direction: Direction) -> Result<SimilarityMatrix<f64>> {
    similarity_from_csv(&fs::read_to_string(path)?, direction)
}

/// Serialize detections as JSON Lines, one object per line.
pub fn detections_to_jsonl(detections: &[Detection<f64>]) -> Result<String> {
    let mut out = String::new();
    for d in detections {
        out.push_str(&serde_json::to_string(d)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_detections_jsonl(path: &Path, detections: &[Detection<f64>]) -> Result<()> {
    write_atomic(path, detections_to_jsonl(detections)?.as_bytes())
}

/// Parse JSON Lines detections with range validation; errors cite the line.
pub fn detections_from_jsonl(text: &str) -> Result<Vec<Detection<f64>>> {
    let mut out = Vec::new();
    for (zero_line, row) in text.lines().enumerate() {
        let line = zero_line + 1;
        if row.trim().is_empty() {
            continue;
        }
        let det: Detection<f64> = serde_json::from_str(row).map_err(|e| {
            // detection validation errors surface through serde; keep the line
            CoreError::Validation {
                line,
                msg: e.to_string(),
            }
        })?;
        out.push(det);
    }
    Ok(out)
}

pub fn read_detections_jsonl(path: &Path) -> Result<Vec<Detection<f64>>> {
    detections_from_jsonl(&fs::read_to_string(path)?)
}

/// Serialize re-ranked lists: per query a row of `qid`, alternating
/// `target_id,score` pairs for the rescored block, then the tail ids.
pub fn reranked_to_csv(lists: &[RerankedList<f64>]) -> Result<String> {
    let mut out = String::new();
    for list in lists {
        check_id(&list.query_id, "query")?;
        out.push_str(&list.query_id);
        for entry in &list.entries {
            check_id(&entry.target_id, "target")?;
            if entry.target_id.parse::<f64>().is_ok() {
                return Err(CoreError::Validation {
                    line: 0,
                    msg: format!(
                        "target id {:?} is indistinguishable from a score in the ranking CSV",
                        entry.target_id
                    ),
                });
            }
            out.push(',');
            out.push_str(&entry.target_id);
            out.push(',');
            out.push_str(&render_f64(entry.score));
        }
        for t in &list.tail {
            check_id(t, "target")?;
            out.push(',');
            out.push_str(t);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_reranked_csv(path: &Path, lists: &[RerankedList<f64>]) -> Result<()> {
    write_atomic(path, reranked_to_csv(lists)?.as_bytes())
}

/// Parse a ranking CSV back into per-query orderings (ids only).
///
/// Scored pairs are consumed while the token after an id parses as a number;
/// the remaining tokens are the tail. Ids that parse as numbers are rejected
/// at write time, so the grammar is unambiguous for files this crate wrote.
pub fn rankings_from_csv(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut out = Vec::new();
    for (zero_line, row) in text.lines().enumerate() {
        let line = zero_line + 1;
        if row.is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split(',').collect();
        let qid = cells[0].to_string();
        if qid.is_empty() {
            return Err(CoreError::Parse {
                line,
                msg: "empty query id".into(),
            });
        }
        let mut ids = Vec::new();
        let mut i = 1;
        while i < cells.len() {
            if cells[i].is_empty() {
                return Err(CoreError::Parse {
                    line,
                    msg: "empty target id".into(),
                });
            }
            ids.push(cells[i].to_string());
            // a following numeric token is this entry's score
            if i + 1 < cells.len() && cells[i + 1].parse::<f64>().is_ok() {
                i += 2;
            } else {
                i += 1;
            }
        }
        out.push((qid, ids));
    }
    Ok(out)
}

pub fn read_rankings_csv(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    rankings_from_csv(&fs::read_to_string(path)?)
}

/// Pretty-printed JSON writer for any serializable value.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Training-trace CSV: `step,loss` rows, full precision.
pub fn trace_to_csv(trace: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (i, loss) in trace.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", render_f64(*loss)));
    }
    out
}

pub fn write_trace_csv(path: &Path, trace: &[f64]) -> Result<()> {
    write_atomic(path, trace_to_csv(trace).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Direction;

    fn sample_sim() -> SimilarityMatrix<f64> {
        SimilarityMatrix::new(
            vec!["q0".into(), "q1".into()],
            vec!["a".into(), "b".into(), "c".into()],
            RealMatrix::new(2, 3, vec![0.1, -0.25, 1.0 / 3.0, 0.9, 0.5, 1e-17]).unwrap(),
            Direction::Generic,
        )
        .unwrap()
    }

    #[test]
    fn similarity_csv_round_trip_is_byte_identical() {
        let sim = sample_sim();
        let csv = similarity_to_csv(&sim).unwrap();
        let back = similarity_from_csv(&csv, Direction::Generic).unwrap();
        assert_eq!(back.scores(), sim.scores());
        assert_eq!(similarity_to_csv(&back).unwrap(), csv);
    }

    #[test]
    fn similarity_csv_minimal_file() {
        let back = similarity_from_csv("qid,t\nq,0.5\n", Direction::Generic).unwrap();
        assert_eq!(back.num_queries(), 1);
        assert_eq!(back.num_targets(), 1);
        assert_eq!(back.scores().get(0, 0), 0.5);
    }

    #[test]
    fn similarity_csv_rejects_malformed_input() {
        let dup_target = "qid,a,a\nq,1,2\n";
        let err = similarity_from_csv(dup_target, Direction::Generic).unwrap_err();
        assert!(err.to_string().contains("duplicate target id"));

        let ragged = "qid,a,b\nq,1\n";
        let err = similarity_from_csv(ragged, Direction::Generic).unwrap_err();
        assert!(matches!(err, CoreError::Parse { line: 2, .. }));

        let non_numeric = "qid,a\nq,abc\n";
        let err = similarity_from_csv(non_numeric, Direction::Generic).unwrap_err();
        assert!(matches!(err, CoreError::Parse { line: 2, .. }));

        let dup_query = "qid,a\nq,1\nq,2\n";
        let err = similarity_from_csv(dup_query, Direction::Generic).unwrap_err();
        assert!(matches!(err, CoreError::Parse { line: 3, .. }));

        let bad_header = "id,a\nq,1\n";
        assert!(similarity_from_csv(bad_header, Direction::Generic).is_err());

        let non_finite = "qid,a\nq,inf\n";
        let err = similarity_from_csv(non_finite, Direction::Generic).unwrap_err();
        assert!(matches!(err, CoreError::Validation { line: 2, .. }));
    }

    #[test]
    fn detections_jsonl_round_trip() {
        let dets = vec![
            Detection::new("a".into(), "car".into(), 0.42, 0.17, 0.031, 0.93).unwrap(),
            Detection::new("b".into(), "ship".into(), 1.0 / 3.0, 0.0, 1.0, 1e-9).unwrap(),
        ];
        let text = detections_to_jsonl(&dets).unwrap();
        let back = detections_from_jsonl(&text).unwrap();
        assert_eq!(back, dets);
        assert_eq!(detections_to_jsonl(&back).unwrap(), text);
    }

    #[test]
    fn detections_jsonl_empty_and_order() {
        assert!(detections_from_jsonl("").unwrap().is_empty());
        let text = r#"{"id":"x","category":"car","cx":0.1,"cy":0.2,"area":0.3,"prob":0.4}
{"id":"y","category":"car","cx":0.5,"cy":0.6,"area":0.7,"prob":0.8}
{"id":"z","category":"ship","cx":0.9,"cy":0.1,"area":0.2,"prob":0.3}
"#;
        let dets = detections_from_jsonl(text).unwrap();
        assert_eq!(dets.len(), 3);
        assert_eq!(dets[0].id, "x");
        assert_eq!(dets[2].id, "z");
    }

    #[test]
    fn detections_jsonl_range_error_cites_line() {
        let text = "{\"id\":\"x\",\"category\":\"car\",\"cx\":0.1,\"cy\":0.2,\"area\":0.3,\"prob\":0.4}\n{\"id\":\"y\",\"category\":\"car\",\"cx\":0.5,\"cy\":0.6,\"area\":1.5,\"prob\":0.8}\n";
        let err = detections_from_jsonl(text).unwrap_err();
        match err {
            CoreError::Validation { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("area"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ranking_csv_round_trip() {
        use crate::rerank::{RerankEntry, RerankedList};
        let lists = vec![RerankedList {
            query_id: "q0".into(),
            entries: vec![
                RerankEntry {
                    target_id: "tb".into(),
                    score: 1.5,
                    original_rank: 1,
                },
                RerankEntry {
                    target_id: "ta".into(),
                    score: 0.25,
                    original_rank: 0,
                },
            ],
            tail: vec!["tc".into(), "td".into()],
        }];
        let csv = reranked_to_csv(&lists).unwrap();
        assert_eq!(csv, "q0,tb,1.5,ta,0.25,tc,td\n");
        let rankings = rankings_from_csv(&csv).unwrap();
        assert_eq!(rankings.len(), 1);
        assert_eq!(rankings[0].0, "q0");
        assert_eq!(rankings[0].1, ["tb", "ta", "tc", "td"]);
    }

    #[test]
    fn ranking_csv_rejects_numeric_ids() {
        use crate::rerank::{RerankEntry, RerankedList};
        let lists = vec![RerankedList {
            query_id: "q0".into(),
            entries: vec![RerankEntry {
                target_id: "12".into(),
                score: 1.5,
                original_rank: 0,
            }],
            tail: vec![],
        }];
        assert!(reranked_to_csv(&lists).is_err());
    }

    #[test]
    fn atomic_write_creates_and_replaces() {
        let dir = std::env::temp_dir().join(format!("crossrank-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.csv");
        write_atomic(&path, b"first").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"first");
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn trace_csv_format() {
        let csv = trace_to_csv(&[1.5, 0.75]);
        assert_eq!(csv, "step,loss\n0,1.5\n1,0.75\n");
    }
}
