use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sparsae::checkpoint::Checkpoint;
use sparsae::commands::{
    convert_strokes_file, evaluate_autoencoder, evaluate_classifier, gen_synth, load_autoencoder, load_dataset,
    reconstruct, train_autoencoder, train_head, write_atomic, Classifier, GenSynth,
};
use sparsae::config::RunConfig;
use sparsae::{Error, Result};

/// Sparse convolutional autoencoders and downstream heads.
#[derive(Parser)]
#[command(name = "sparsae", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file: checkpoint, report, dump or dataset.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for data preparation and kernels.
    #[arg(long, global = true)]
    device_threads: Option<usize>,
    /// Extra `key=value` settings, applied after the configuration file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an autoencoder with the hierarchical loss.
    TrainAe {
        /// Training data (overrides `train`).
        #[arg(long)]
        train: Option<PathBuf>,
    },
    /// Train a classifier head or baseline network.
    TrainHead {
        /// Training data (overrides `train`).
        #[arg(long)]
        train: Option<PathBuf>,
        /// Held-out data scored after training (overrides `test`).
        #[arg(long)]
        test: Option<PathBuf>,
        /// Autoencoder checkpoint for the unsupervised protocol.
        #[arg(long)]
        encoder: Option<PathBuf>,
        /// linear, mlp, nonconvnet, unet or shape-context.
        #[arg(long)]
        head: Option<String>,
        /// unsupervised, untrained or supervised.
        #[arg(long)]
        protocol: Option<String>,
    },
    /// Evaluate a checkpoint and write a JSON report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluation data (defaults to `test`, then `train`).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Dump free-running reconstructions as point-cloud records.
    Reconstruct {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input data (defaults to `test`, then `train`).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Write a synthetic point-cloud dataset.
    GenSynth {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 16)]
        size: usize,
        /// polyline, shell or random.
        #[arg(long, default_value = "polyline")]
        style: String,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        vertices: usize,
        /// Activation probability for the random style.
        #[arg(long, default_value_t = 0.1)]
        p: f64,
    },
    /// Convert pen-trace or digit-vector files to the stroke format.
    ConvertStrokes {
        /// UNIPEN-style pen trace or comma-separated digit-vector file.
        #[arg(long)]
        input: PathBuf,
    },
}

fn config(common: &Common, base: &[(&str, String)], extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (k, v) in base {
        cfg.set(k, v)?;
    }
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    for pair in &common.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set {pair}: expected KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    for (k, v) in extra {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_path(common: &Common) -> Result<&Path> {
    common.out.as_deref().ok_or_else(|| Error::Config("--out is required".into()))
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

/// Settings recorded in a checkpoint that describe its data layout.
fn checkpoint_base(ck: &Checkpoint) -> Vec<(&'static str, String)> {
    let mut base: Vec<(&str, String)> = Vec::new();
    for key in ["format", "grid", "resolution"] {
        if let Some(v) = ck.meta.get(key) {
            base.push((key, v.clone()));
        }
    }
    if let Ok(spec) = ck.spec() {
        base.push(("d", spec.d.to_string()));
    }
    base
}

fn run(cli: Cli, w: &mut dyn Write) -> Result<()> {
    if let Some(n) = cli.common.device_threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--device-threads {n}: {e}")))?;
    }
    let common = &cli.common;
    match cli.command {
        Command::TrainAe { train } => {
            let cfg = config(common, &[], &[("train", path_str(&train))])?;
            train_autoencoder(&cfg, out_path(common)?, w)?;
        }
        Command::TrainHead {
            train,
            test,
            encoder,
            head,
            protocol,
        } => {
            let cfg = config(
                common,
                &[],
                &[
                    ("train", path_str(&train)),
                    ("test", path_str(&test)),
                    ("encoder", path_str(&encoder)),
                    ("head", head),
                    ("protocol", protocol),
                ],
            )?;
            train_head(&cfg, out_path(common)?, w)?;
        }
        Command::Eval { checkpoint, data } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let cfg = config(common, &checkpoint_base(&ck), &[])?;
            let path = data.or_else(|| cfg.test.clone()).or_else(|| cfg.train.clone());
            let ds = load_dataset(&cfg, path.as_deref(), "evaluation")?;
            let (json, pairs) = match ck.meta_get("kind")? {
                "autoencoder" => {
                    let (ae, mut store) = load_autoencoder(&ck)?;
                    let r = evaluate_autoencoder(&ae, &mut store, &ds, cfg.batch_size, &cfg.loss)?;
                    let pairs = vec![
                        ("samples", r.samples.to_string()),
                        ("mse", r.mse.to_string()),
                        ("loss", r.loss.to_string()),
                        ("pattern_acc", r.teacher_forced_accuracy.to_string()),
                        ("decoded_acc", r.decoded_accuracy.to_string()),
                        ("tp", r.decoded.tp.to_string()),
                        ("fp", r.decoded.fp.to_string()),
                        ("fn", r.decoded.fn_.to_string()),
                        ("occupancy", r.mean_occupancy.to_string()),
                    ];
                    (serde_json::to_string_pretty(&r), pairs)
                }
                "classifier" => {
                    let (clf, mut store) = Classifier::load(&ck)?;
                    let r = evaluate_classifier(&clf, &mut store, &ds, cfg.batch_size)?;
                    let mut pairs = vec![
                        ("samples", r.samples.to_string()),
                        ("error", r.error_percent.to_string()),
                        ("occupancy", r.mean_occupancy.to_string()),
                    ];
                    if let Some(iou) = &r.iou {
                        pairs.push(("iou", iou.mean.to_string()));
                    }
                    if let Some(iou) = &r.point_iou {
                        pairs.push(("point_iou", iou.mean.to_string()));
                    }
                    (serde_json::to_string_pretty(&r), pairs)
                }
                other => return Err(Error::SpecMismatch(format!("unknown checkpoint kind `{other}`"))),
            };
            let json = json.map_err(|e| Error::Config(format!("report serialization: {e}")))?;
            let report = common.out.clone().unwrap_or_else(|| {
                let mut name = checkpoint.file_name().map(|n| n.to_os_string()).unwrap_or_default();
                name.push(".eval.json");
                checkpoint.with_file_name(name)
            });
            write_atomic(&report, format!("{json}\n").as_bytes())?;
            sparsae::commands::emit(w, &pairs)?;
        }
        Command::Reconstruct { checkpoint, input } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let cfg = config(common, &checkpoint_base(&ck), &[])?;
            let path = input.or_else(|| cfg.test.clone()).or_else(|| cfg.train.clone());
            let ds = load_dataset(&cfg, path.as_deref(), "input")?;
            let (ae, mut store) = load_autoencoder(&ck)?;
            let mut dump = Vec::new();
            let confusions = reconstruct(&ae, &mut store, &ds, &mut dump)?;
            write_atomic(out_path(common)?, &dump)?;
            let (tp, fp, fn_) = confusions.iter().fold((0, 0, 0), |a, c| (a.0 + c.tp, a.1 + c.fp, a.2 + c.fn_));
            sparsae::commands::emit(
                w,
                &[
                    ("samples", confusions.len().to_string()),
                    ("tp", tp.to_string()),
                    ("fp", fp.to_string()),
                    ("fn", fn_.to_string()),
                ],
            )?;
        }
        Command::GenSynth {
            d,
            size,
            style,
            count,
            vertices,
            p,
        } => {
            let opts = GenSynth {
                d,
                size,
                style,
                count,
                vertices,
                p,
                seed: common.seed.unwrap_or(0),
            };
            let n = gen_synth(&opts, out_path(common)?)?;
            sparsae::commands::emit(w, &[("samples", n.to_string())])?;
        }
        Command::ConvertStrokes { input } => {
            let (source, n) = convert_strokes_file(&input, out_path(common)?)?;
            sparsae::commands::emit(w, &[("source", source.to_string()), ("samples", n.to_string())])?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_kind() as u8)
        }
    }
}
