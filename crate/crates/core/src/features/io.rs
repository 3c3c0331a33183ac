//! Feature-frame CSV: header `t,<field>...`, NaN written as `nan`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::{FeatureFrame, FeatureSchema};

#[derive(Debug, Error)]
pub enum FrameIoError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

pub fn write_frames_csv(frames: &[FeatureFrame], schema: &FeatureSchema, path: &Path) -> Result<(), FrameIoError> {
    let io = |source| FrameIoError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "t,{}", schema.fields.join(",")).map_err(io)?;
    for f in frames {
        let row: Vec<String> = std::iter::once(format!("{}", f.t)).chain(f.values.iter().map(|&v| fmt_value(v))).collect();
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads frames and the schema named by the header.
pub fn read_frames_csv(path: &Path) -> Result<(FeatureSchema, Vec<FeatureFrame>), FrameIoError> {
    let io = |source| FrameIoError::Io { path: path.display().to_string(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(io)?,
        None => return Err(FrameIoError::Malformed { line: 1, message: "missing header".into() }),
    };
    let mut cols = header.trim().split(',');
    if cols.next() != Some("t") {
        return Err(FrameIoError::Malformed { line: 1, message: "first column must be `t`".into() });
    }
    let schema = FeatureSchema { fields: cols.map(str::to_string).collect() };
    let mut frames = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = line.trim().split(',').map(|s| s.parse::<f64>()).collect();
        let row = parsed.map_err(|e| FrameIoError::Malformed { line: i + 1, message: e.to_string() })?;
        if row.len() != schema.len() + 1 {
            return Err(FrameIoError::Malformed {
                line: i + 1,
                message: format!("expected {} columns, got {}", schema.len() + 1, row.len()),
            });
        }
        frames.push(FeatureFrame::new(row[0], row[1..].to_vec()));
    }
    Ok((schema, frames))
}
