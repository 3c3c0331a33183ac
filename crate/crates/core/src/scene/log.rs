//! JSON-Lines detection logs and `t,interruptible` label files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::{Detection, DetectionRecord, GroundTruthLabel};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: field `{field}`: {message}")]
    Malformed { line: usize, field: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LogError + '_ {
    move |source| LogError::Io { path: path.display().to_string(), source }
}

pub fn write_detection_log(log: &[DetectionRecord], path: &Path) -> Result<(), LogError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for record in log {
        let line = serde_json::to_string(record).expect("detection records serialize");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_detection_log(path: &Path) -> Result<Vec<DetectionRecord>, LogError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line, i + 1)?);
    }
    Ok(out)
}

/// Parses one log line, locating the offending field on failure.
pub fn parse_record(line: &str, line_no: usize) -> Result<DetectionRecord, LogError> {
    let malformed = |field: &str, message: String| LogError::Malformed {
        line: line_no,
        field: field.to_string(),
        message,
    };
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| malformed("<json>", e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| malformed("<json>", "expected an object".into()))?;
    let t = obj
        .get("t")
        .and_then(|v| v.as_f64())
        .ok_or_else(|| malformed("t", "missing or not a number".into()))?;
    let detector = obj
        .get("detector")
        .and_then(|v| v.as_str())
        .ok_or_else(|| malformed("detector", "missing or not a string".into()))?;
    if !matches!(detector, "PERSON" | "FACE" | "OBJECT" | "POSE") {
        return Err(malformed("detector", format!("unknown detector `{detector}`")));
    }
    if !obj.contains_key("payload") {
        return Err(malformed("payload", "missing".into()));
    }
    let detection: Detection = serde_json::from_value(value.clone())
        .map_err(|e| malformed("payload", e.to_string()))?;
    Ok(DetectionRecord { t, detection })
}

pub fn write_labels_csv(labels: &[GroundTruthLabel], path: &Path) -> Result<(), LogError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "t,interruptible").map_err(io_err(path))?;
    for l in labels {
        writeln!(w, "{},{}", l.t, l.interruptible).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<GroundTruthLabel>, LogError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let line_no = i + 1;
        if i == 0 {
            if line.trim() != "t,interruptible" {
                return Err(LogError::Malformed {
                    line: 1,
                    field: "<header>".into(),
                    message: format!("expected `t,interruptible`, got `{line}`"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let bad = |field: &str, message: &str| LogError::Malformed {
            line: line_no,
            field: field.into(),
            message: message.into(),
        };
        let t: f64 = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("t", "not a number"))?;
        let interruptible: u8 = match parts.next().map(str::trim) {
            Some("0") => 0,
            Some("1") => 1,
            _ => return Err(bad("interruptible", "expected 0 or 1")),
        };
        out.push(GroundTruthLabel { t, interruptible });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::*;

    #[test]
    fn one_record_per_detector_gives_four_lines() {
        let kp = Keypoint { x: 0.5, y: 0.5, confidence: 0.9 };
        let p = Point::new(0.5, 0.4);
        let bbox = BBox { cx: 0.5, cy: 0.5, w: 0.2, h: 0.4 };
        let log = vec![
            DetectionRecord { t: 0.0, detection: Detection::Person(PersonDetection { bbox }) },
            DetectionRecord {
                t: 0.1,
                detection: Detection::Face(Some(FaceKeypoints {
                    left_eye: p,
                    right_eye: p,
                    nose: p,
                    mouth_left: p,
                    mouth_right: p,
                })),
            },
            DetectionRecord {
                t: 0.2,
                detection: Detection::Object(ObjectDetection {
                    class: ObjectClass::CellPhone,
                    bbox,
                    counted: true,
                }),
            },
            DetectionRecord {
                t: 0.3,
                detection: Detection::Pose(PoseKeypoints {
                    nose: kp,
                    left_eye: kp,
                    right_eye: kp,
                    left_shoulder: kp,
                    right_shoulder: kp,
                    left_elbow: kp,
                    right_elbow: kp,
                    left_wrist: kp,
                    right_wrist: kp,
                }),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        write_detection_log(&log, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("\"cell phone\""));
        assert_eq!(read_detection_log(&path).unwrap(), log);
    }

    #[test]
    fn empty_log_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        write_detection_log(&[], &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 0);
        assert!(read_detection_log(&path).unwrap().is_empty());
    }

    #[test]
    fn malformed_lines_name_line_and_field() {
        let ok = r#"{"t":0.5,"detector":"FACE","payload":null}"#;
        assert!(parse_record(ok, 1).is_ok());
        let cases = [
            (r#"{"detector":"FACE","payload":null}"#, "t"),
            (r#"{"t":1,"detector":"SONAR","payload":null}"#, "detector"),
            (r#"{"t":1,"detector":"PERSON","payload":{"box":3}}"#, "payload"),
            (r#"{"t":1,"detector":"OBJECT","payload":{"class":"banana","box":{"cx":0,"cy":0,"w":0,"h":0},"counted":true}}"#, "payload"),
        ];
        for (line, field) in cases {
            match parse_record(line, 7) {
                Err(LogError::Malformed { line: 7, field: f, .. }) => assert_eq!(f, field),
                other => panic!("{line}: {other:?}"),
            }
        }
    }

    #[test]
    fn labels_csv_round_trip() {
        let labels: Vec<_> = (0..5)
            .map(|i| GroundTruthLabel { t: i as f64 * 0.5, interruptible: (i % 2) as u8 })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        write_labels_csv(&labels, &path).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("t,interruptible\n0,0\n"));
        assert_eq!(read_labels_csv(&path).unwrap(), labels);
    }
}
