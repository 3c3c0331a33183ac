use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_interrupt-engine");

const COMMANDS: [&str; 9] =
    ["generate", "fuse", "train", "predict", "crossval", "simulate", "report", "serve", "export-annotations"];

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).env("INTERRUPT_ENGINE_LOG", "error").output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Exit code and the parsed `error:` line.
fn fails(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = run(dir, args);
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line = stderr.lines().find(|l| l.starts_with("error: code=")).unwrap_or_else(|| panic!("no error line: {stderr}"));
    let rest = line.strip_prefix("error: code=").unwrap();
    let (code, rest) = rest.split_once(' ').unwrap();
    let (exit, message) = rest.split_once(' ').unwrap();
    let exit: i32 = exit.strip_prefix("exit=").unwrap().parse().unwrap();
    let message: String = serde_json_lite(message.strip_prefix("message=").unwrap());
    assert_eq!(out.status.code(), Some(exit), "{stderr}");
    (exit, code.to_string(), message)
}

/// Unquotes a JSON string literal without escapes beyond `\"` and `\\`.
fn serde_json_lite(s: &str) -> String {
    let inner = s.strip_prefix('"').and_then(|s| s.strip_suffix('"')).expect("quoted message");
    inner.replace("\\\"", "\"").replace("\\\\", "\\")
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn top_level(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

#[test]
fn help_on_every_command() {
    let dir = tempfile::tempdir().unwrap();
    let top = ok(dir.path(), &["--help"]);
    for c in COMMANDS {
        assert!(top.contains(c), "{c} missing from:\n{top}");
        let help = ok(dir.path(), &[c, "--help"]);
        assert!(help.contains("--out"), "{c}:\n{help}");
        assert!(help.contains("--seed") && help.contains("--config"), "{c}:\n{help}");
    }
    assert!(top_level(dir.path()).is_empty());
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (unknown, code, _) = fails(d, &["generate", "--bogus", "--out", "g"]);
    assert_eq!(code, "unknown_flag");
    let (missing, code, message) = fails(d, &["train", "--frames", "nowhere", "--out", "m"]);
    assert_eq!(code, "missing_file");
    assert!(message.contains("nowhere"));

    fs::write(d.join("old_model.json"), r#"{"format_version": 99}"#).unwrap();
    fs::write(d.join("x.frames.csv"), "t,a\n0,1\n").unwrap();
    let (schema, code, _) = fails(d, &["predict", "--model", "old_model.json", "x.frames.csv", "--out", "p"]);
    assert_eq!(code, "schema_version");
    fs::create_dir(d.join("logs")).unwrap();
    fs::write(d.join("logs/a.trial_log.json"), r#"{"format_version": 99}"#).unwrap();
    assert_eq!(fails(d, &["report", "--logs", "logs", "--out", "r"]).0, schema);

    ok(d, &["generate", "--trials", "4", "--duration", "60", "--out", "g"]);
    ok(d, &["fuse", "g", "--out", "f"]);
    let (pre, code, message) = fails(d, &["crossval", "--folds", "5", "--frames", "f", "--labels", "g", "--out", "cv"]);
    assert_eq!(code, "precondition");
    assert!(message.contains("fewer trials than folds"), "{message}");

    fs::write(d.join("bad.toml"), "[schedule]\nwhatever = 1\n").unwrap();
    let (bad, code, _) = fails(d, &["--config", "bad.toml", "generate", "--out", "g2"]);
    assert_eq!(code, "invalid_input");

    let (usage, code, _) = fails(d, &["simulate", "--condition", "coin", "--out", "s"]);
    assert_eq!(code, "usage");
    let codes = [unknown, missing, schema, pre, bad, usage];
    let distinct: std::collections::BTreeSet<i32> = codes.iter().copied().collect();
    assert_eq!(distinct.len(), codes.len(), "{codes:?}");
    assert!(codes.iter().all(|c| *c != 0));
}

fn pipeline(dir: &Path) {
    fs::write(dir.join("exp.toml"), "[training]\ntrials = 3\n\n[training.script]\nduration_s = 120.0\n").unwrap();
    let c = ["--config", "exp.toml", "--seed", "17"];
    let with = |args: &[&'static str]| -> Vec<&'static str> { c.iter().copied().chain(args.iter().copied()).collect() };
    ok(dir, &with(&["generate", "--trials", "6", "--out", "gen"]));
    ok(dir, &with(&["fuse", "gen", "--out", "frames"]));
    ok(dir, &with(&["train", "--frames", "frames", "--labels", "gen", "--max-iterations", "15", "--out", "model"]));
    ok(dir, &with(&["predict", "--model", "model/model.json", "frames/trial-000.frames.csv", "--out", "pred"]));
    ok(dir, &with(&["predict", "--online", "--model", "model/model.json", "frames/trial-001.frames.csv", "--out", "pred_online"]));
    ok(dir, &with(&["crossval", "--folds", "3", "--max-iterations", "10", "--frames", "frames", "--labels", "gen", "--out", "cv"]));
    ok(dir, &with(&["simulate", "--condition", "rnd,mdl,woz", "--trials", "2", "--model", "model/model.json", "--out", "sim"]));
    ok(dir, &with(&["report", "--logs", "sim", "--out", "report"]));
}

#[test]
fn pipeline_is_byte_reproducible_and_stays_in_out() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (path, bytes) in &fa {
        assert!(fb[path] == *bytes, "{} differs between runs", path.display());
    }
    let expected = ["cv", "exp.toml", "frames", "gen", "model", "pred", "pred_online", "report", "sim"];
    assert_eq!(top_level(a.path()), expected);
    for name in ["summary.csv", "tests.csv", "observations.csv", "report.txt"] {
        assert!(fa.contains_key(&PathBuf::from("report").join(name)), "{name}");
    }
    assert_eq!(fa.keys().filter(|p| p.starts_with("sim")).count(), 6);
}

#[test]
fn seed_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "1", "generate", "--trials", "1", "--duration", "60", "--out", "a"]);
    ok(d, &["--seed", "2", "generate", "--trials", "1", "--duration", "60", "--out", "b"]);
    assert_ne!(fs::read(d.join("a/trial-000.detections.jsonl")).unwrap(), fs::read(d.join("b/trial-000.detections.jsonl")).unwrap());
}

#[test]
fn exported_annotations_train_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--trials", "2", "--duration", "60", "--out", "gen"]);
    ok(d, &["fuse", "gen", "--out", "frames"]);
    // Two annotators toggling at the same scene times.
    let mut decisions = Vec::new();
    for (t, v) in [(0.0, 1), (20.0, 0), (41.5, 1)] {
        for a in ["ann1", "ann2"] {
            decisions.push(format!(
                r#"{{"t_received": {t}, "t_scene": {t}, "kind": "LABEL", "value": {v}, "annotator_id": "{a}", "status": "recorded"}}"#
            ));
        }
    }
    fs::write(d.join("s1.decisions.json"), format!("[{}]", decisions.join(","))).unwrap();
    for trial in ["trial-000", "trial-001"] {
        let replay = format!("gen/{trial}.detections.jsonl");
        let out = ok(d, &["export-annotations", "--decisions", "s1.decisions.json", "--replay", &replay, "--out", "labels"]);
        assert!(out.contains("alpha 1.0000"), "{out}");
        let agreement: String = fs::read_to_string(d.join("labels/agreement.json")).unwrap();
        assert!(agreement.contains("\"alpha\": 1.0") && agreement.contains("\"disagreements\": []"), "{agreement}");
    }
    let labels = fs::read_to_string(d.join("labels/ann1/trial-000.labels.csv")).unwrap();
    let frames = fs::read_to_string(d.join("frames/trial-000.frames.csv")).unwrap();
    assert_eq!(labels.lines().count(), frames.lines().count());
    ok(d, &["train", "--frames", "frames", "--labels", "labels/ann1", "--max-iterations", "5", "--out", "model"]);
    assert!(d.join("model/model.json").exists());

    let (code, name, _) = fails(d, &["export-annotations", "--decisions", "s1.decisions.json", "--replay", "gen/trial-000.detections.jsonl", "--annotator", "../escape", "--out", "labels"]);
    assert_eq!(name, "invalid_input");
    assert_eq!(code, 7);
    assert!(!d.join("escape").exists());
}
