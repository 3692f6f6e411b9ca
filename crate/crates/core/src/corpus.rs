//! Line-delimited JSON corpus and ground-truth files.
//!
//! Corpus records look like
//! `{"show_id":"show-0001","trace":[0,1,1,0],"target":2.0}`, one per trace;
//! records of one show may be spread across the file. Ground-truth records
//! are `{"show_id":...,"stickiness":...,"mean_trace":[...]}`.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::belief::Trace;
use crate::error::{Error, Result};
use crate::synthetic::ShowGroundTruth;
use crate::training::ShowHistory;

#[derive(Serialize)]
struct RecordOut<'a> {
    show_id: &'a str,
    trace: Vec<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordIn {
    show_id: String,
    trace: Vec<f64>,
    #[serde(default)]
    target: Option<f64>,
}

pub fn write_corpus<W: Write>(mut out: W, histories: &[ShowHistory]) -> Result<()> {
    for h in histories {
        for (m, trace) in h.traces.iter().enumerate() {
            let record = RecordOut {
                show_id: &h.show_id,
                trace: trace.observed().iter().map(|&v| u8::from(v != 0.0)).collect(),
                target: h.targets.as_ref().map(|t| t[m]),
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a corpus, grouping records by show in order of first appearance.
///
/// Every trace must have the same length and only contain 0 and 1. A show's
/// targets are kept only if every one of its records carries one.
pub fn read_corpus<R: BufRead>(input: R, source: &str) -> Result<Vec<ShowHistory>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut order: Vec<String> = Vec::new();
    let mut shows: HashMap<String, (Vec<Trace>, Vec<Option<f64>>)> = HashMap::new();
    let mut dim: Option<usize> = None;

    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordIn =
            serde_json::from_str(&line).map_err(|e| parse_err(line_no, e.to_string()))?;
        if rec.trace.is_empty() {
            return Err(parse_err(line_no, "empty trace".into()));
        }
        match dim {
            None => dim = Some(rec.trace.len()),
            Some(k) if k != rec.trace.len() => {
                return Err(parse_err(
                    line_no,
                    format!("trace has length {}, expected {k}", rec.trace.len()),
                ))
            }
            _ => {}
        }
        if let Some(v) = rec.trace.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(parse_err(line_no, format!("trace value {v} is not 0 or 1")));
        }
        if rec.target.is_some_and(|y| !y.is_finite()) {
            return Err(parse_err(line_no, "target is not finite".into()));
        }
        let entry = shows.entry(rec.show_id.clone()).or_insert_with(|| {
            order.push(rec.show_id.clone());
            (Vec::new(), Vec::new())
        });
        entry.0.push(Trace::full(rec.trace));
        entry.1.push(rec.target);
    }

    order
        .into_iter()
        .map(|id| {
            let (traces, targets) = shows.remove(&id).expect("show recorded in order");
            let targets: Option<Vec<f64>> = targets.into_iter().collect();
            ShowHistory::new(id, traces, targets)
        })
        .collect()
}

pub fn write_ground_truth<W: Write>(mut out: W, truths: &[ShowGroundTruth]) -> Result<()> {
    for t in truths {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ground_truth<R: BufRead>(input: R, source: &str) -> Result<Vec<ShowGroundTruth>> {
    let mut truths = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: ShowGroundTruth = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        truths.push(t);
    }
    Ok(truths)
}
