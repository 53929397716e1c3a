use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use platter_core::dataset::{compute_stats, load_dataset, read_class_counts, split_dataset};
use platter_core::detect::{read_detection_dir, stub_detect, write_detection_dir, DetectorConfig};
use platter_core::eval::{
    classification_metrics, confidence_sweep, confusion_matrix, evaluate_detections, label_samples,
    pair_detections, read_probability_table, EvalOptions,
};
use platter_core::nutrition::BandThresholds;
use platter_core::{Dataset, DetectionSet};

#[derive(Parser)]
#[command(
    name = "platter",
    version,
    about = "Dish-detection dataset QA, evaluation and diet tracking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Class list, one name per line; line order gives class ids.
    #[arg(long)]
    classes: PathBuf,
    /// Directory of YOLO label files (`<image_id>.txt`).
    #[arg(long)]
    labels: PathBuf,
}

#[derive(Args)]
struct DetArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Directory of detection files (`<image_id>.txt`).
    #[arg(long)]
    detections: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Check a class list, label files and optionally detection files.
    Validate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        detections: Option<PathBuf>,
    },
    /// Per-class image and annotation counts with mean and spread.
    Stats {
        #[command(flatten)]
        data: Option<DataArgs>,
        /// Table of `name,images,annotations` rows instead of a label directory.
        #[arg(long, conflicts_with_all = ["classes", "labels"])]
        counts: Option<PathBuf>,
    },
    /// Seeded train/test split; writes `train.txt` and `test.txt` image lists.
    Split {
        #[command(flatten)]
        data: DataArgs,
        /// Share of images assigned to the training list.
        #[arg(long, default_value_t = 0.9)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay ground truth as detections with optional noise.
    StubDetect {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.0)]
        drop_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        #[arg(long, default_value_t = 0.0)]
        flip_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class precision, recall, F1 and AP with the summary row.
    EvalDet {
        #[command(flatten)]
        det: DetArgs,
        #[arg(long, default_value_t = 0.5)]
        conf: f64,
        /// Print the full report as JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Multi-label classification metrics from a probability table.
    EvalCls {
        #[command(flatten)]
        data: DataArgs,
        /// Delimited table with header `image_id,<class names in order>`.
        #[arg(long)]
        probabilities: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        json: bool,
    },
    /// Precision, recall and F1 against confidence, and the PR curve.
    Curves {
        #[command(flatten)]
        det: DetArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Confusion matrix with a background row and column.
    Confusion {
        #[command(flatten)]
        det: DetArgs,
        #[arg(long, default_value_t = 0.5)]
        conf: f64,
    },
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "PLATTER_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long, env = "PLATTER_DATA_DIR")]
    data_dir: PathBuf,
    /// `class_id,name,kcal` table.
    #[arg(long, env = "PLATTER_CALORIE_TABLE")]
    calorie_table: PathBuf,
    #[arg(long, env = "PLATTER_CLASSES")]
    classes: PathBuf,
    /// Detections below this confidence are not counted in logged meals.
    #[arg(long, env = "PLATTER_CONF", default_value_t = 0.5)]
    conf: f64,
    #[arg(long, env = "PLATTER_SNAPSHOT_EVERY", default_value_t = 1000)]
    snapshot_every: u64,
    #[arg(long, env = "PLATTER_EVAL_WORKERS", default_value_t = 2)]
    eval_workers: usize,
    /// Band edges as fractions of the goal: yellow, orange, red.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.5, 0.75, 1.0])]
    bands: Vec<f64>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// Joins the cause chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn load(data: &DataArgs) -> Result<Dataset> {
    load_dataset(&data.classes, &data.labels).context("loading dataset")
}

fn load_detections(det: &DetArgs) -> Result<(Dataset, Vec<DetectionSet>)> {
    let ds = load(&det.data)?;
    let sets = read_detection_dir(&det.detections, ds.registry()).context("loading detections")?;
    Ok((ds, sets))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { data, detections } => {
            let ds = load(&data)?;
            let mut line = format!(
                "ok: {} classes, {} images, {} boxes",
                ds.num_classes(),
                ds.images().len(),
                ds.total_boxes()
            );
            if let Some(dir) = detections {
                let sets = read_detection_dir(&dir, ds.registry()).context("loading detections")?;
                pair_detections(&ds, &sets)?;
                let n: usize = sets.iter().map(|s| s.predictions.len()).sum();
                line.push_str(&format!(", {} detection files, {n} detections", sets.len()));
            }
            println!("{line}");
        }
        Command::Stats { data, counts } => {
            let (registry, stats) = match (counts, data) {
                (Some(path), _) => {
                    let f = fs::File::open(&path)
                        .with_context(|| format!("opening {}", path.display()))?;
                    read_class_counts(f).with_context(|| path.display().to_string())?
                }
                (None, Some(data)) => {
                    let ds = load(&data)?;
                    (ds.registry().clone(), compute_stats(&ds))
                }
                (None, None) => anyhow::bail!("give --classes and --labels, or --counts"),
            };
            print!("{}", stats.to_table(&registry));
        }
        Command::Split {
            data,
            fraction,
            seed,
            out,
        } => {
            let ds = load(&data)?;
            let (train, test) = split_dataset(&ds, fraction, seed)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (name, part) in [("train.txt", &train), ("test.txt", &test)] {
                let list: String = part
                    .images()
                    .iter()
                    .map(|r| format!("{}\n", r.image_id))
                    .collect();
                write_file(&out.join(name), &list)?;
            }
            println!(
                "train,{}\ntest,{}",
                train.images().len(),
                test.images().len()
            );
        }
        Command::StubDetect {
            data,
            drop_rate,
            jitter,
            flip_rate,
            seed,
            out,
        } => {
            let ds = load(&data)?;
            let config = DetectorConfig {
                drop_rate,
                jitter,
                class_flip_rate: flip_rate,
                seed,
            };
            let sets = ds
                .images()
                .iter()
                .map(|r| stub_detect(r, &config, ds.num_classes()))
                .collect::<Result<Vec<_>, _>>()?;
            write_detection_dir(&out, &sets)?;
            let n: usize = sets.iter().map(|s| s.predictions.len()).sum();
            println!("wrote {} files, {n} detections", sets.len());
        }
        Command::EvalDet { det, conf, json } => {
            let (ds, sets) = load_detections(&det)?;
            let options = EvalOptions {
                iou_threshold: det.iou,
                confidence_threshold: conf,
                with_curves: false,
            };
            let report = evaluate_detections(&ds, &sets, &options)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_table());
            }
        }
        Command::EvalCls {
            data,
            probabilities,
            threshold,
            json,
        } => {
            let ds = load(&data)?;
            let f = fs::File::open(&probabilities)
                .with_context(|| format!("opening {}", probabilities.display()))?;
            let rows = read_probability_table(f, ds.registry())
                .with_context(|| probabilities.display().to_string())?;
            let samples = label_samples(&ds, rows)?;
            let report = classification_metrics(&samples, ds.registry(), threshold)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_table());
            }
        }
        Command::Curves { det, out } => {
            let (ds, sets) = load_detections(&det)?;
            if !(0.0..=1.0).contains(&det.iou) {
                anyhow::bail!("--iou {} outside [0, 1]", det.iou);
            }
            let images = pair_detections(&ds, &sets)?;
            let curves = confidence_sweep(&images, ds.num_classes(), det.iou);
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let reg = ds.registry();
            write_file(
                &out.join("precision.csv"),
                &curves.precision.to_table("confidence", reg),
            )?;
            write_file(
                &out.join("recall.csv"),
                &curves.recall.to_table("confidence", reg),
            )?;
            write_file(&out.join("f1.csv"), &curves.f1.to_table("confidence", reg))?;
            write_file(&out.join("pr.csv"), &curves.pr.to_table("recall", reg))?;
            println!(
                "best_f1,{:.4}\nbest_confidence,{:.6}",
                curves.best_f1.f1, curves.best_f1.confidence
            );
        }
        Command::Confusion { det, conf } => {
            let (ds, sets) = load_detections(&det)?;
            for (name, v) in [("--iou", det.iou), ("--conf", conf)] {
                if !(0.0..=1.0).contains(&v) {
                    anyhow::bail!("{name} {v} outside [0, 1]");
                }
            }
            let images = pair_detections(&ds, &sets)?;
            let cm = confusion_matrix(&images, ds.num_classes(), det.iou, conf);
            print!("{}", cm.to_table(ds.registry()));
        }
        Command::Serve(args) => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
                )
                .init();
            let bands = BandThresholds::new(args.bands[0], args.bands[1], args.bands[2])?;
            let config = platter_service::Config {
                listen: args.listen,
                data_dir: args.data_dir,
                calorie_table: args.calorie_table,
                classes: args.classes,
                confidence_threshold: args.conf,
                snapshot_every: args.snapshot_every,
                eval_workers: args.eval_workers,
                bands,
            };
            tokio::runtime::Runtime::new()?.block_on(platter_service::serve(config))?;
        }
    }
    Ok(())
}
