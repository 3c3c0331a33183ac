use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use interrupt_engine::analysis::{build_report, compute_metrics};
use interrupt_engine::features::{fuse, read_frames_csv, write_frames_csv, FeatureFrame, FeatureSchema};
use interrupt_engine::ldcrf::{
    cross_validate, load_model, predict, save_model, train, LabeledSequence, OnlineSession, Prediction,
};
use interrupt_engine::par;
use interrupt_engine::policy::PolicyKind;
use interrupt_engine::scene::{read_detection_log, read_labels_csv, write_detection_log, write_labels_csv, DetectionRecord};
use interrupt_engine::sim::{run_experiment, synthetic_trial, train_mdl_model, ExperimentConfig, TrialLog};
use interrupt_woz::{
    agreement_report, export_annotations, DecisionKind, DecisionRecord, Replay, Service, ServiceConfig,
};

use crate::error::{io_error, CliError, ErrorKind};
use crate::{Cli, Command, DataArgs, ExportArgs, FuseArgs, GenerateArgs, PredictArgs, ReportArgs, ServeArgs, SimulateArgs};
use crate::{CrossvalArgs, TrainArgs};

const DETECTIONS: &str = ".detections.jsonl";
const FRAMES: &str = ".frames.csv";
const LABELS: &str = ".labels.csv";
const TRIAL_LOG: &str = ".trial_log.json";

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(a) => generate(cli, a),
        Command::Fuse(a) => fuse_logs(cli, a),
        Command::Train(a) => train_model(cli, a),
        Command::Predict(a) => predict_frames(a),
        Command::Crossval(a) => crossval(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve(cli, a),
        Command::ExportAnnotations(a) => export(a),
    }
}

/// The output directory. Every file a command writes goes through here.
struct Out(PathBuf);

impl Out {
    fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Self(dir.to_path_buf()))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    fn subdir(&self, name: &str) -> Result<Self, CliError> {
        Self::create(&self.path(name))
    }
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::new(ErrorKind::MissingFile, format!("{} does not exist", path.display())))
    }
}

fn precondition(message: impl Into<String>) -> CliError {
    CliError::new(ErrorKind::Precondition, message)
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError::new(ErrorKind::InvalidInput, message)
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let Some(path) = &cli.config else {
        return Ok(ExperimentConfig::default());
    };
    require(path)?;
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    ExperimentConfig::from_toml_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Trial id of a file named `<id><suffix>`.
fn trial_id(path: &Path, suffix: &str) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    match name.strip_suffix(suffix) {
        Some(id) => id.to_string(),
        None => path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or(name),
    }
}

/// Files in `dir` ending in `suffix`, sorted by name.
fn listing(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>, CliError> {
    require(dir)?;
    let entries = fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        if path.is_file() && path.to_string_lossy().ends_with(suffix) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(precondition(format!("no *{suffix} files in {}", dir.display())));
    }
    Ok(out)
}

fn read_log(path: &Path) -> Result<Vec<DetectionRecord>, CliError> {
    require(path)?;
    let mut log = read_detection_log(path)?;
    log.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(log)
}

fn generate(cli: &Cli, args: &GenerateArgs) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let mut script = cfg.training.script;
    if let Some(d) = args.duration {
        if !(d > 0.0 && d.is_finite()) {
            return Err(invalid(format!("--duration must be positive, got {d}")));
        }
        script.duration_s = d;
    }
    if args.trials == 0 {
        return Err(precondition("--trials must be at least 1"));
    }
    let out = Out::create(&args.out)?;
    let trials = par::map_range(args.trials, |k| synthetic_trial(k, &script, &cfg.noise, cli.seed));
    for (k, trial) in trials.into_iter().enumerate() {
        let (_, log, labels) = trial?;
        let id = format!("trial-{k:03}");
        write_detection_log(&log, &out.path(&format!("{id}{DETECTIONS}")))?;
        write_labels_csv(&labels, &out.path(&format!("{id}{LABELS}")))?;
    }
    println!("generated {} trials in {}", args.trials, args.out.display());
    Ok(())
}

fn fuse_logs(cli: &Cli, args: &FuseArgs) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let mut files = Vec::new();
    for input in &args.inputs {
        require(input)?;
        if input.is_dir() {
            files.extend(listing(input, DETECTIONS)?);
        } else {
            files.push(input.clone());
        }
    }
    let out = Out::create(&args.out)?;
    let schema = FeatureSchema::standard();
    for file in &files {
        let log = read_log(file)?;
        let frames = fuse(&log, &cfg.fusion);
        let id = trial_id(file, DETECTIONS);
        write_frames_csv(&frames, &schema, &out.path(&format!("{id}{FRAMES}")))?;
        log::info!("{id}: {} records, {} frames", log.len(), frames.len());
    }
    println!("fused {} logs into {}", files.len(), args.out.display());
    Ok(())
}

/// Pairs each label with the frame at the same tick. Labels past the last
/// frame get an all-missing frame, exactly what fusion emits for an empty
/// window.
fn align(id: &str, frames: Vec<FeatureFrame>, labels: &[(f64, u8)], width: usize) -> Result<LabeledSequence, CliError> {
    let last = frames.last().map_or(f64::NEG_INFINITY, |f| f.t);
    let mut aligned = Vec::with_capacity(labels.len());
    for &(t, _) in labels {
        if t > last + 1e-9 {
            aligned.push(FeatureFrame::missing(t, width));
            continue;
        }
        let i = frames.partition_point(|f| f.t < t - 1e-9);
        match frames.get(i) {
            Some(f) if (f.t - t).abs() <= 1e-9 => aligned.push(f.clone()),
            _ => return Err(invalid(format!("{id}: label at t={t} has no frame on the same tick"))),
        }
    }
    Ok(LabeledSequence::new(id, aligned, labels.iter().map(|l| l.1).collect()))
}

fn load_dataset(data: &DataArgs) -> Result<(FeatureSchema, Vec<LabeledSequence>), CliError> {
    let label_dir = data.labels.as_ref().unwrap_or(&data.frames);
    require(label_dir)?;
    let mut schema: Option<FeatureSchema> = None;
    let mut out = Vec::new();
    for file in listing(&data.frames, FRAMES)? {
        let id = trial_id(&file, FRAMES);
        let (s, frames) = read_frames_csv(&file)?;
        match &schema {
            Some(prev) if *prev != s => return Err(invalid(format!("{}: feature columns differ from the other files", file.display()))),
            Some(_) => {}
            None => schema = Some(s.clone()),
        }
        let label_file = label_dir.join(format!("{id}{LABELS}"));
        require(&label_file)?;
        let labels: Vec<(f64, u8)> = read_labels_csv(&label_file)?.iter().map(|l| (l.t, l.interruptible)).collect();
        out.push(align(&id, frames, &labels, s.len())?);
    }
    Ok((schema.expect("listing is non-empty"), out))
}

fn train_model(cli: &Cli, args: &TrainArgs) -> Result<(), CliError> {
    let (schema, data) = load_dataset(&args.data)?;
    let trained = train(&data, &schema, args.model.hyperparams(), cli.seed)?;
    let out = Out::create(&args.out)?;
    save_model(&trained.model, &out.path("model.json"))?;
    let diagnostics = serde_json::to_string_pretty(&trained.diagnostics).expect("diagnostics serialize");
    out.write("diagnostics.json", &diagnostics)?;
    let d = &trained.diagnostics;
    println!(
        "trained on {} trials: objective {:.4} -> {:.4} in {} iterations (converged: {})",
        data.len(),
        d.objective_trace.first().copied().unwrap_or(f64::NAN),
        d.objective_trace.last().copied().unwrap_or(f64::NAN),
        d.iterations,
        d.converged
    );
    Ok(())
}

fn predict_frames(args: &PredictArgs) -> Result<(), CliError> {
    require(&args.model)?;
    let model = Arc::new(load_model(&args.model)?);
    let mut files = Vec::new();
    for input in &args.inputs {
        require(input)?;
        files.push(input.clone());
    }
    let out = Out::create(&args.out)?;
    for file in &files {
        let (schema, frames) = read_frames_csv(file)?;
        if schema != model.schema {
            return Err(invalid(format!("{}: feature columns do not match the model", file.display())));
        }
        let prepared = model.preprocess(&frames)?;
        let prediction = if args.online {
            let mut session = OnlineSession::new(model.clone());
            let mut p = Prediction { labels: Vec::new(), posterior: Vec::new() };
            for frame in prepared {
                let step = session.push(frame)?;
                p.labels.push(step.label);
                p.posterior.push(step.posterior);
            }
            p
        } else {
            predict(&model, &prepared)?
        };
        let mut csv = String::from("t,label,p_interruptible\n");
        for ((f, y), p) in frames.iter().zip(&prediction.labels).zip(&prediction.posterior) {
            csv.push_str(&format!("{},{y},{p}\n", f.t));
        }
        out.write(&format!("{}.predictions.csv", trial_id(file, FRAMES)), &csv)?;
    }
    println!("labelled {} sequences into {}", files.len(), args.out.display());
    Ok(())
}

fn crossval(cli: &Cli, args: &CrossvalArgs) -> Result<(), CliError> {
    let (schema, data) = load_dataset(&args.data)?;
    let cv = cross_validate(&data, &schema, args.model.hyperparams(), args.folds, cli.seed)?;
    let out = Out::create(&args.out)?;
    out.write("crossval.json", &serde_json::to_string_pretty(&cv).expect("reports serialize"))?;
    for fold in &cv.folds {
        println!("fold {}: f1 {:.4} accuracy {:.4} ({} trials)", fold.fold, fold.f1, fold.accuracy, fold.test_trials.len());
    }
    println!("pooled: f1 {:.4} accuracy {:.4}", cv.f1, cv.accuracy);
    Ok(())
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    if args.trials == 0 {
        return Err(precondition("--trials must be at least 1"));
    }
    let mut conditions: Vec<PolicyKind> = Vec::new();
    for c in &args.condition {
        if !conditions.contains(c) {
            conditions.push(*c);
        }
    }
    let out = Out::create(&args.out)?;
    let model = if conditions.contains(&PolicyKind::Mdl) {
        let model = match &args.model {
            Some(path) => {
                require(path)?;
                load_model(path)?
            }
            None => {
                let model = train_mdl_model(&cfg, cli.seed)?;
                save_model(&model, &out.path("mdl_model.json"))?;
                model
            }
        };
        Some(Arc::new(model))
    } else {
        None
    };
    let logs = run_experiment(&cfg, &conditions, args.trials, model, cli.seed)?;
    for log in &logs {
        log.write(&out.path(&format!("{}{TRIAL_LOG}", log.trial_id)))?;
    }
    println!("simulated {} trials into {}", logs.len(), args.out.display());
    Ok(())
}

fn report(args: &ReportArgs) -> Result<(), CliError> {
    let mut metrics = Vec::new();
    for file in listing(&args.logs, TRIAL_LOG)? {
        let log = TrialLog::read(&file)?;
        metrics.push(compute_metrics(&log).map_err(|e| invalid(format!("{}: {e}", file.display())))?);
    }
    let report = build_report(&metrics);
    report.write(&Out::create(&args.out)?.0).map_err(|e| io_error(&args.out, e))?;
    print!("{}", report.text_table());
    Ok(())
}

fn serve(cli: &Cli, args: &ServeArgs) -> Result<(), CliError> {
    let mut cfg = load_config(cli)?;
    if let Some(scale) = args.time_scale {
        cfg.serve.time_scale = scale;
    }
    let bind = args.bind.clone().unwrap_or_else(|| cfg.serve.bind.clone());
    let mut replays = Vec::new();
    for path in &args.replay {
        replays.push(Replay::new(trial_id(path, DETECTIONS), read_log(path)?));
    }
    let service = Service::new(ServiceConfig { experiment: cfg, replays, out_dir: args.out.clone(), seed: cli.seed })?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::new(ErrorKind::Failure, e.to_string()))?;
    runtime.block_on(async {
        let listener = interrupt_woz::bind(&bind).await?;
        let addr = listener.local_addr().map_err(|e| CliError::new(ErrorKind::Failure, e.to_string()))?;
        println!("listening on http://{addr}");
        interrupt_woz::serve(listener, service, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

fn safe_name(id: &str) -> Result<&str, CliError> {
    let ok = !id.is_empty() && id != "." && id != ".." && !id.contains(['/', '\\']);
    if ok {
        Ok(id)
    } else {
        Err(invalid(format!("annotator id `{id}` cannot name an output directory")))
    }
}

fn export(args: &ExportArgs) -> Result<(), CliError> {
    require(&args.decisions)?;
    let text = fs::read_to_string(&args.decisions).map_err(|e| io_error(&args.decisions, e))?;
    let decisions: Vec<DecisionRecord> =
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", args.decisions.display())))?;
    let trial = trial_id(&args.replay, DETECTIONS);
    let ticks = Replay::new(trial.clone(), read_log(&args.replay)?).ticks();
    let mut annotators = args.annotator.clone();
    if annotators.is_empty() {
        for d in &decisions {
            if matches!(d.kind, DecisionKind::Label(_)) && !annotators.contains(&d.annotator_id) {
                annotators.push(d.annotator_id.clone());
            }
        }
    }
    if annotators.is_empty() {
        return Err(precondition("the decision log has no label events"));
    }
    for a in &annotators {
        safe_name(a)?;
    }
    let out = Out::create(&args.out)?;
    let mut exports = Vec::new();
    for a in &annotators {
        let export = export_annotations(&trial, &decisions, a, &ticks)?;
        export.write_csv(&out.subdir(a)?.path(&format!("{trial}{LABELS}")))?;
        exports.push(export);
    }
    if exports.len() >= 2 {
        let report = agreement_report(&exports)?;
        out.write("agreement.json", &serde_json::to_string_pretty(&report).expect("reports serialize"))?;
        println!("alpha {:.4} over {} annotators, {} disagreeing ticks", report.alpha, exports.len(), report.disagreements.len());
    }
    println!("exported {} annotators on {} ticks into {}", exports.len(), ticks.len(), args.out.display());
    Ok(())
}
