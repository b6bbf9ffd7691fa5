//! The work behind each subcommand, writing human and `key=value` output to
//! a caller-supplied sink.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subtask_core::data::{generate_dataset, ClassVocabulary, StreamNormalizer, TaskGrammar, Video};
use subtask_core::exec::{execute_plan, plan_from_transcript, DmpLibrary, GoalTable, StepOutcome};
use subtask_core::loss::TransitionMatrix;
use subtask_core::metrics::{transcript, MetricAccumulator, MetricReport};
use subtask_core::model::ModelParams;
use subtask_core::postprocess::postprocess;
use subtask_core::tcn::{make_schedule, probe_receptive_field, receptive_field, ScheduleKind};
use subtask_core::trainer::{fit_with, EpochRecord, FitResult};

use crate::checkpoint::{read_checkpoint, write_checkpoint};
use crate::config::Config;
use crate::error::{io_err, usage, AppError, Result};
use crate::formats::*;

pub const MANIFEST: &str = "manifest.tsv";
pub const MAPPING: &str = "mapping.txt";
pub const TRANSITIONS: &str = "transitions.txt";
pub const CONFIG: &str = "config.txt";
pub const ZSCORE: &str = "zscore.txt";
pub const METRICS_LOG: &str = "metrics.log";
pub const BEST: &str = "best.ckpt";
pub const FINAL: &str = "final.ckpt";

fn out_err(e: std::io::Error) -> AppError {
    AppError::Io {
        path: "<output>".into(),
        source: e,
    }
}

macro_rules! say {
    ($w:expr, $($arg:tt)*) => {
        writeln!($w, $($arg)*).map_err(out_err)?
    };
}

/// Model initialization draws from its own stream of the root seed.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    rng
}

/// Writes a synthetic dataset under `out`: features, labels, mapping,
/// transition matrix, manifest and the config used.
pub fn gen_data(cfg: &Config, out: &Path, w: &mut dyn Write) -> Result<()> {
    let vocab = ClassVocabulary::standard();
    let grammar = TaskGrammar::standard(&vocab)?;
    let generator = cfg.generator(&vocab)?;
    let ds = generate_dataset(&grammar, &generator, &cfg.split(grammar.len()), cfg.jitter)?;
    let mut entries = Vec::with_capacity(ds.train.len() + ds.val.len());
    for (split, videos) in [("train", &ds.train), ("val", &ds.val)] {
        for v in videos {
            let stem = sanitize(&v.name);
            let features = PathBuf::from("features").join(format!("{}.sseq", stem));
            let labels = PathBuf::from("labels").join(format!("{}.txt", stem));
            write_streams(&out.join(&features), &v.rgb, &v.flow)?;
            write_labels(&out.join(&labels), &v.labels, &vocab)?;
            entries.push(ManifestEntry {
                split: split.into(),
                task: v.task.clone(),
                features,
                labels,
            });
        }
    }
    write_file(&out.join(MANIFEST), encode_manifest(&entries))?;
    write_file(&out.join(MAPPING), encode_mapping(&vocab))?;
    write_file(
        &out.join(TRANSITIONS),
        encode_transitions(&grammar.transition_matrix(vocab.len())),
    )?;
    write_file(&out.join(CONFIG), cfg.to_text())?;
    say!(w, "seed={}", cfg.seed);
    say!(w, "train_videos={}", ds.train.len());
    say!(w, "val_videos={}", ds.val.len());
    say!(w, "manifest={}", out.join(MANIFEST).display());
    Ok(())
}

/// Loads the videos of one manifest split with labels resolved by `vocab`.
pub fn load_split(
    entries: &[ManifestEntry],
    split: &str,
    vocab: &ClassVocabulary,
) -> Result<Vec<Video>> {
    entries
        .iter()
        .filter(|e| e.split == split)
        .map(|e| {
            let (rgb, flow) = read_streams(&e.features)?;
            let labels = read_labels(&e.labels, vocab)?;
            if labels.len() != rgb.rows() {
                return Err(AppError::Format {
                    path: e.labels.clone(),
                    at: crate::error::Location::Line(labels.len().min(rgb.rows()) + 1),
                    msg: format!("{} labels for {} feature frames", labels.len(), rgb.rows()),
                });
            }
            Ok(Video {
                name: e.name(),
                task: e.task.clone(),
                rgb,
                flow,
                labels,
            })
        })
        .collect()
}

fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn metrics_line(r: &EpochRecord) -> String {
    let mut s = format!(
        "epoch={} lr={} train_loss={} val_loss={}",
        r.epoch, r.lr, r.train_loss, r.val_loss
    );
    for (k, v) in r.val.key_values() {
        s.push_str(&format!(" {}={}", k, v));
    }
    s
}

fn report_lines(w: &mut dyn Write, report: &MetricReport) -> Result<()> {
    say!(w, "{:<8}{:>8}", "metric", "value");
    for (k, v) in report.key_values() {
        say!(w, "{:<8}{:>8.2}", k, v);
    }
    for (k, v) in report.key_values() {
        say!(w, "{}={}", k, v);
    }
    Ok(())
}

/// Trains on the `train` split of `manifest`, validating on `val`, and fills
/// `run_dir` with the config snapshot, normalization statistics, metrics log
/// and the best and final checkpoints.
pub fn train(
    cfg: &Config,
    manifest: &Path,
    mapping: Option<&Path>,
    run_dir: &Path,
    w: &mut dyn Write,
) -> Result<FitResult> {
    let base = manifest_dir(manifest);
    let mapping = mapping.map_or_else(|| base.join(MAPPING), Path::to_path_buf);
    let vocab = read_mapping(&mapping)?;
    let entries = read_manifest(manifest)?;
    let train = load_split(&entries, "train", &vocab)?;
    let val = load_split(&entries, "val", &vocab)?;
    if train.is_empty() || val.is_empty() {
        return Err(usage(format!(
            "{} needs both train and val entries",
            manifest.display()
        )));
    }
    let width = train[0].rgb.cols();
    if let Some(v) = train.iter().chain(&val).find(|v| v.rgb.cols() != width) {
        return Err(usage(format!(
            "{} has width {}, expected {}",
            v.name,
            v.rgb.cols(),
            width
        )));
    }
    let mut cfg = cfg.clone();
    if cfg.feature_dim != width {
        log::info!(
            "feature_dim {} taken from the data (config said {})",
            width,
            cfg.feature_dim
        );
        cfg.feature_dim = width;
    }
    let normalizer = StreamNormalizer::fit(&train)?;
    let train = normalizer.apply_all(&train)?;
    let val = normalizer.apply_all(&val)?;
    let transitions_path = base.join(TRANSITIONS);
    let matrix = if transitions_path.exists() {
        read_transitions(&transitions_path)?
    } else {
        TransitionMatrix::from_sequences(vocab.len(), train.iter().map(|v| v.labels.as_slice()))
    };
    if matrix.size() != vocab.len() {
        return Err(usage(format!(
            "transition matrix is {0}×{0}, vocabulary has {1}",
            matrix.size(),
            vocab.len()
        )));
    }
    let loss = cfg.loss(vocab.len(), train.iter().map(|v| v.labels.as_slice()))?;
    let tc = cfg.train()?;
    let model = ModelParams::init(cfg.model(vocab.len())?, &mut init_rng(cfg.seed))?;

    std::fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;
    write_file(&run_dir.join(CONFIG), cfg.to_text())?;
    write_file(&run_dir.join(MAPPING), encode_mapping(&vocab))?;
    write_file(&run_dir.join(TRANSITIONS), encode_transitions(&matrix))?;
    write_file(&run_dir.join(ZSCORE), encode_normalizer(&normalizer))?;
    let log_path = run_dir.join(METRICS_LOG);
    let mut log_file = BufWriter::new(File::create(&log_path).map_err(io_err(&log_path))?);
    let mut log_err = None;
    let result = fit_with(model, &train, &val, &loss, &matrix, &tc, |r| {
        if let Err(e) = writeln!(log_file, "{}", metrics_line(r)).and_then(|_| log_file.flush()) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(AppError::Io {
            path: log_path,
            source: e,
        });
    }
    write_checkpoint(&run_dir.join(BEST), &result.best)?;
    write_checkpoint(&run_dir.join(FINAL), &result.last)?;
    let best = &result.history[result.best_epoch];
    say!(w, "seed={}", cfg.seed);
    say!(w, "epochs={}", result.history.len());
    say!(w, "stopped_early={}", result.stopped_early);
    say!(w, "best_epoch={}", result.best_epoch);
    say!(w, "val_loss={}", best.val_loss);
    report_lines(w, &best.val)?;
    Ok(result)
}

/// A trained model with its normalization statistics and vocabulary.
#[derive(Debug, Clone)]
pub struct Run {
    pub model: ModelParams,
    pub normalizer: StreamNormalizer,
    pub vocab: ClassVocabulary,
}

impl Run {
    /// Loads `run_dir`, using `checkpoint` instead of the best one if given.
    pub fn load(run_dir: &Path, checkpoint: Option<&Path>) -> Result<Self> {
        let ckpt = checkpoint.map_or_else(|| run_dir.join(BEST), Path::to_path_buf);
        let model = read_checkpoint(&ckpt)?;
        let zpath = run_dir.join(ZSCORE);
        let normalizer = decode_normalizer(&read_text(&zpath)?).map_err(|e| e.in_file(&zpath))?;
        let vocab = read_mapping(&run_dir.join(MAPPING))?;
        let c = &model.config;
        if normalizer.rgb.dim() != c.feature_dim
            || normalizer.flow.dim() != c.feature_dim
            || vocab.len() != c.classes
        {
            return Err(usage(format!(
                "{} does not match its statistics or mapping ({} features, {} classes)",
                ckpt.display(),
                c.feature_dim,
                c.classes
            )));
        }
        Ok(Self {
            model,
            normalizer,
            vocab,
        })
    }

    /// Post-processed labels for one stored feature file.
    pub fn predict_file(&self, features: &Path, cfg: &Config) -> Result<Vec<usize>> {
        let (rgb, flow) = read_streams(features)?;
        let d = self.model.config.feature_dim;
        if rgb.cols() != d {
            return Err(AppError::Format {
                path: features.to_path_buf(),
                at: crate::error::Location::Byte(9),
                msg: format!("width {} per stream, model expects {}", rgb.cols(), d),
            });
        }
        let raw = self.model.predict(
            &self.normalizer.rgb.apply(&rgb)?,
            &self.normalizer.flow.apply(&flow)?,
        )?;
        Ok(postprocess(&raw, &cfg.postprocess())?)
    }
}

/// Feature files named explicitly, or taken from one split of a manifest.
pub fn manifest_features(manifest: &Path, split: &str) -> Result<Vec<PathBuf>> {
    let entries = read_manifest(manifest)?;
    let files: Vec<PathBuf> = entries
        .into_iter()
        .filter(|e| e.split == split)
        .map(|e| e.features)
        .collect();
    if files.is_empty() {
        return Err(usage(format!(
            "{} has no `{}` entries",
            manifest.display(),
            split
        )));
    }
    Ok(files)
}

/// Writes `<stem>.txt` label files into `out` for every feature file.
pub fn infer(
    cfg: &Config,
    run: &Run,
    features: &[PathBuf],
    out: &Path,
    w: &mut dyn Write,
) -> Result<()> {
    if features.is_empty() {
        return Err(usage("no feature files given"));
    }
    for f in features {
        let labels = run.predict_file(f, cfg)?;
        let stem = f
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let path = out.join(format!("{}.txt", stem));
        write_labels(&path, &labels, &run.vocab)?;
        say!(
            w,
            "{}\tframes={}\tsegments={}",
            path.display(),
            labels.len(),
            transcript(&labels).len()
        );
    }
    Ok(())
}

fn label_pairs(pred: &Path, gt: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    match (pred.is_dir(), gt.is_dir()) {
        (false, false) => Ok(vec![(pred.to_path_buf(), gt.to_path_buf())]),
        (true, true) => {
            let mut names: Vec<PathBuf> = std::fs::read_dir(pred)
                .map_err(io_err(pred))?
                .map(|e| e.map(|e| e.path()).map_err(io_err(pred)))
                .collect::<Result<Vec<_>>>()?;
            names.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"));
            names.sort();
            if names.is_empty() {
                return Err(usage(format!(
                    "{} holds no .txt label files",
                    pred.display()
                )));
            }
            Ok(names
                .into_iter()
                .map(|p| {
                    let g = gt.join(p.file_name().expect("file"));
                    (p, g)
                })
                .collect())
        }
        _ => Err(usage(
            "pred and gt must both be files or both be directories",
        )),
    }
}

/// Scores predicted label files against ground truth. For directories,
/// every prediction is paired with the ground-truth file of the same name.
pub fn eval(
    cfg: &Config,
    pred: &Path,
    gt: &Path,
    mapping: &Path,
    w: &mut dyn Write,
) -> Result<MetricReport> {
    let vocab = read_mapping(mapping)?;
    let mut acc = MetricAccumulator::new(cfg.matching()?);
    for (p, g) in label_pairs(pred, gt)? {
        let gt_labels = read_labels(&g, &vocab)?;
        let pred_labels = read_labels(&p, &vocab)?;
        if pred_labels.len() != gt_labels.len() {
            return Err(AppError::Format {
                path: p,
                at: crate::error::Location::Line(pred_labels.len().min(gt_labels.len()) + 1),
                msg: format!(
                    "{} predicted frames, ground truth has {}",
                    pred_labels.len(),
                    gt_labels.len()
                ),
            });
        }
        acc.add(&pred_labels, &gt_labels)?;
    }
    let report = acc.report()?;
    say!(w, "videos={}", acc.videos());
    report_lines(w, &report)?;
    Ok(report)
}

/// Runs a trained model over one manifest split and scores it.
pub fn eval_run(
    cfg: &Config,
    run: &Run,
    manifest: &Path,
    split: &str,
    w: &mut dyn Write,
) -> Result<MetricReport> {
    let entries = read_manifest(manifest)?;
    let mut acc = MetricAccumulator::new(cfg.matching()?);
    for e in entries.iter().filter(|e| e.split == split) {
        let gt = read_labels(&e.labels, &run.vocab)?;
        let pred = run.predict_file(&e.features, cfg)?;
        if pred.len() != gt.len() {
            return Err(usage(format!(
                "{}: {} frames but {} labels",
                e.name(),
                pred.len(),
                gt.len()
            )));
        }
        acc.add(&pred, &gt)?;
    }
    if acc.videos() == 0 {
        return Err(usage(format!(
            "{} has no `{}` entries",
            manifest.display(),
            split
        )));
    }
    let report = acc.report()?;
    say!(w, "videos={}", acc.videos());
    report_lines(w, &report)?;
    Ok(report)
}

/// Plans and simulates execution of a predicted label file.
///
/// Writes `plan.tsv` and one trajectory dump per step into `out` if given.
pub fn simulate_exec(
    cfg: &Config,
    labels: &Path,
    mapping: &Path,
    goals: Option<&Path>,
    out: Option<&Path>,
    w: &mut dyn Write,
) -> Result<Vec<StepOutcome>> {
    let vocab = read_mapping(mapping)?;
    let grammar = TaskGrammar::standard(&vocab)?;
    let mut table = GoalTable::standard(&vocab);
    if let Some(g) = goals {
        table = read_goals(g, &vocab, table)?;
    }
    let predicted = read_labels(labels, &vocab)?;
    let plan = plan_from_transcript(&transcript(&predicted), &grammar, &table)?;
    let home = cfg.home();
    let library = DmpLibrary::learn(&table, home, cfg.n_basis, cfg.dmp_duration, cfg.dmp_dt)?;
    let controller = cfg.controller()?;
    let outcomes = execute_plan(&plan, &library, home, &controller, cfg.max_servo_steps)?;
    say!(w, "task={}", plan.task);
    if let Some(dir) = out {
        write_file(&dir.join("plan.tsv"), encode_plan(&plan, &vocab)?)?;
    }
    let mut t0 = 0.0;
    for (i, o) in outcomes.iter().enumerate() {
        let name = vocab.name(o.label)?;
        if let Some(dir) = out {
            let path = dir.join(format!("{:02}-{}.traj", i + 1, sanitize(name)));
            write_file(&path, encode_trajectory(&o.trajectory, t0))?;
        }
        t0 += o.trajectory.duration() + o.servo.steps as f64 * library.dt;
        let [x, y, z] = o.servo.pose;
        say!(
            w,
            "step={} subtask={} servo_steps={} success={} pose={} {} {}",
            i + 1,
            name,
            o.servo.steps,
            o.success(),
            x,
            y,
            z
        );
    }
    say!(w, "success={}", outcomes.iter().all(StepOutcome::success));
    Ok(outcomes)
}

/// Dilations and analytic versus probed receptive fields for both
/// schedule kinds.
pub fn rf_report(cfg: &Config, w: &mut dyn Write) -> Result<Vec<(ScheduleKind, usize, usize)>> {
    let mut rows = Vec::new();
    for kind in [ScheduleKind::Fibonacci, ScheduleKind::Exponential] {
        let schedule = make_schedule(kind, cfg.layers)?;
        let analytic = receptive_field(&schedule, cfg.kernel);
        let probed = probe_receptive_field(
            &schedule,
            cfg.kernel,
            cfg.channels.min(8),
            &mut init_rng(cfg.seed),
        )?;
        let dilations: Vec<String> = schedule.dilations().iter().map(usize::to_string).collect();
        say!(
            w,
            "schedule={} layers={} kernel={} dilations={} rf_analytic={} rf_probed={}",
            kind.name(),
            cfg.layers,
            cfg.kernel,
            dilations.join(","),
            analytic,
            probed
        );
        rows.push((kind, analytic, probed));
    }
    Ok(rows)
}
