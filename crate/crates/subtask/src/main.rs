use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subtask::commands::{self, Run};
use subtask::{AppError, Config, Result};

/// Sub-task segmentation of demonstrations and simulated primitive execution.
#[derive(Parser)]
#[command(name = "subtask", version)]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Median-filter window.
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Minimum run length kept by run collapsing.
    #[arg(long, global = true)]
    min_len: Option<usize>,
    #[arg(long, global = true)]
    no_median: bool,
    #[arg(long, global = true)]
    no_collapse: bool,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

impl GlobalOpts {
    fn overrides(&self) -> Vec<String> {
        let mut o = self.set.clone();
        o.extend(self.seed.map(|s| format!("seed={}", s)));
        o.extend(self.window.map(|s| format!("window={}", s)));
        o.extend(self.min_len.map(|s| format!("min_len={}", s)));
        if self.no_median {
            o.push("median=false".into());
        }
        if self.no_collapse {
            o.push("collapse=false".into());
        }
        o
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a manifest.
    GenData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a run directory.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Defaults to mapping.txt next to the manifest.
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted labels against ground truth, or a run on a manifest split.
    Eval {
        #[arg(long, requires = "gt", conflicts_with = "run")]
        pred: Option<PathBuf>,
        #[arg(long, requires = "pred")]
        gt: Option<PathBuf>,
        #[arg(long, requires = "pred")]
        mapping: Option<PathBuf>,
        #[arg(long, requires = "manifest")]
        run: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "val")]
        split: String,
        /// Segment matching: optimal or reference.
        #[arg(long)]
        matching: Option<String>,
    },
    /// Predict label files from feature files.
    Infer {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Take feature files from this manifest instead of the positional list.
        #[arg(long, conflicts_with = "features")]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "val")]
        split: String,
        #[arg(long)]
        out: PathBuf,
        features: Vec<PathBuf>,
    },
    /// Plan and simulate execution of a predicted label file.
    SimulateExec {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        mapping: PathBuf,
        /// Goal poses in plan format, overriding the built-in table.
        #[arg(long)]
        goals: Option<PathBuf>,
        /// Directory for plan.tsv and trajectory dumps.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print dilations and receptive fields for both schedules.
    RfReport {
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        kernel: Option<usize>,
    },
}

fn run(cli: Cli, w: &mut dyn Write) -> Result<()> {
    let mut overrides = cli.opts.overrides();
    match &cli.command {
        Command::Eval {
            matching: Some(m), ..
        } => overrides.push(format!("matching={}", m)),
        Command::RfReport { layers, kernel } => {
            overrides.extend(layers.map(|l| format!("layers={}", l)));
            overrides.extend(kernel.map(|k| format!("kernel={}", k)));
        }
        _ => {}
    }
    let cfg = Config::load(cli.opts.config.as_deref(), &overrides)?;
    match cli.command {
        Command::GenData { out } => commands::gen_data(&cfg, &out, w),
        Command::Train {
            manifest,
            mapping,
            out,
        } => commands::train(&cfg, &manifest, mapping.as_deref(), &out, w).map(|_| ()),
        Command::Eval {
            pred: Some(pred),
            gt: Some(gt),
            mapping,
            ..
        } => {
            let mapping = mapping
                .ok_or_else(|| AppError::Usage("--mapping is required with --pred".into()))?;
            commands::eval(&cfg, &pred, &gt, &mapping, w).map(|_| ())
        }
        Command::Eval {
            run: Some(dir),
            checkpoint,
            manifest: Some(manifest),
            split,
            ..
        } => {
            let run = Run::load(&dir, checkpoint.as_deref())?;
            commands::eval_run(&cfg, &run, &manifest, &split, w).map(|_| ())
        }
        Command::Eval { .. } => Err(AppError::Usage(
            "eval needs --pred/--gt/--mapping or --run/--manifest".into(),
        )),
        Command::Infer {
            run,
            checkpoint,
            manifest,
            split,
            out,
            features,
        } => {
            let r = Run::load(&run, checkpoint.as_deref())?;
            let files = match manifest {
                Some(m) => commands::manifest_features(&m, &split)?,
                None => features,
            };
            commands::infer(&cfg, &r, &files, &out, w)
        }
        Command::SimulateExec {
            labels,
            mapping,
            goals,
            out,
        } => commands::simulate_exec(&cfg, &labels, &mapping, goals.as_deref(), out.as_deref(), w)
            .map(|_| ()),
        Command::RfReport { .. } => commands::rf_report(&cfg, w).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = if cli.opts.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
