use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use mnist_fraction::bench::{self, BenchConfig, CheckMode};
use mnist_fraction::cnn::{self, Checkpoint, CnnArch, CnnParams, TrainHyper};
use mnist_fraction::dataset::{self, AugmentParams, LabeledDataset, SplitIndices, DEFAULT_RATIOS};
use mnist_fraction::generate::{self, GenerationConfig};
use mnist_fraction::{idx, metrics, parser, NUM_CLASSES};

const SPLIT_FILE: &str = "split.json";

#[derive(Parser)]
#[command(name = "mnist-fraction", version, about = "Handwritten-fraction dataset toolkit")]
struct Cli {
    /// Directory holding the MNIST IDX files.
    #[arg(long, global = true, env = "MNIST_FRACTION_DATA", default_value = "data/mnist")]
    mnist_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON config file for this command.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum Table {
    Desk,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Desk,
    Published,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a dataset: IDX images and labels plus a manifest.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
    },
    /// Stratified 70/15/15 split of a generated dataset.
    Split {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the CNN and write a checkpoint plus JSON-lines history.
    TrainCnn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        cap_train: Option<usize>,
    },
    /// Score a checkpoint on the test split: metrics report as JSON.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        cap_test: Option<usize>,
    },
    /// Repeated classical-classifier benchmark.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "desk")]
        table: Table,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        cap_train: Option<usize>,
        #[arg(long)]
        cap_test: Option<usize>,
        /// Exit with status 4 if any row misses its target.
        #[arg(long, value_enum)]
        check: Option<Check>,
    },
    /// Decode fraction images (PGM files) into JSON lines.
    Parse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Write dataset samples as PGM files.
    ExportPgm {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 20)]
        limit: usize,
    },
}

enum Failure {
    Config(String),
    Data(String),
    Check(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Check(_) => 4,
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

fn read_config<T: DeserializeOwned>(path: &Option<PathBuf>) -> Result<Option<T>, Failure> {
    let Some(p) = path else { return Ok(None) };
    let text = fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| data_err(format!("{}: {e}", path.display())))
}

fn load_data(dir: &Path) -> Result<(LabeledDataset, SplitIndices), Failure> {
    let data = LabeledDataset::load(dir).map_err(data_err)?;
    let split = SplitIndices::load(&dir.join(SPLIT_FILE)).map_err(|e| Failure::Data(format!("{e} (run `split` first)")))?;
    Ok((data, split))
}

fn load_params(path: &Path) -> Result<CnnParams<f32>, Failure> {
    Ok(cnn::load_checkpoint(path).map_err(data_err)?.params)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainConfig {
    arch: Option<CnnArch>,
    hyper: Option<TrainHyper>,
    augment: Option<AugmentParams>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Generate { common, preset } => {
            let mut cfg: GenerationConfig = match read_config(&common.config)? {
                Some(c) => c,
                None => match preset {
                    Preset::Desk => GenerationConfig::desk(0),
                    Preset::Paper => GenerationConfig::paper_scale(0),
                },
            };
            if let Some(s) = common.seed {
                cfg.master_seed = s;
            }
            let out = common.out.ok_or_else(|| Failure::Config("--out is required".into()))?;
            let mnist = idx::Mnist::load_dir(&cli.mnist_dir).map_err(data_err)?;
            let set = generate::generate_dataset(&cfg, &mnist).map_err(|e| match e {
                generate::GenerateError::InvalidConfig(m) => Failure::Config(m),
                other => data_err(other),
            })?;
            dataset::save_generated(&set, &out).map_err(data_err)?;
            write_json(&out.join("generation.json"), &cfg)?;
            eprintln!("wrote {} samples to {}", set.images.len(), out.display());
        }
        Cmd::Split { common, data } => {
            let ds = LabeledDataset::load(&data).map_err(data_err)?;
            let split = dataset::stratified_split(&ds.labels, DEFAULT_RATIOS, common.seed.unwrap_or(0)).map_err(data_err)?;
            let out = common.out.unwrap_or_else(|| data.join(SPLIT_FILE));
            split.save(&out).map_err(data_err)?;
            eprintln!(
                "train {} / val {} / test {} -> {}",
                split.train.len(),
                split.val.len(),
                split.test.len(),
                out.display()
            );
        }
        Cmd::TrainCnn {
            common,
            data,
            epochs,
            cap_train,
        } => {
            let cfg: TrainConfig = read_config(&common.config)?.unwrap_or_default();
            let arch = cfg.arch.unwrap_or_else(CnnArch::standard);
            let mut hyper = cfg.hyper.unwrap_or_default();
            if let Some(s) = common.seed {
                hyper.seed = s;
            }
            if let Some(e) = epochs {
                hyper.epochs = e;
            }
            hyper.validate().map_err(|e| Failure::Config(e.to_string()))?;
            let aug = cfg.augment.unwrap_or_default();
            let out = common.out.ok_or_else(|| Failure::Config("--out is required".into()))?;
            let (ds, mut split) = load_data(&data)?;
            if let Some(cap) = cap_train {
                split.train = bench::cap_indices(&split.train, &ds.labels, cap).map_err(|e| Failure::Config(e.to_string()))?;
            }
            let params = CnnParams::<f32>::init(&arch, hyper.seed).map_err(|e| Failure::Config(e.to_string()))?;
            let (params, history) = cnn::train(params, &ds, &split, &hyper, &aug, |r| {
                eprintln!("epoch {:>3}  loss {:.4}  val {:.4}", r.epoch, r.loss, r.val_accuracy)
            })
            .map_err(data_err)?;
            let ckpt = Checkpoint {
                params,
                hyper: Some(hyper),
                augment: Some(aug),
            };
            cnn::save_checkpoint(&out, &ckpt).map_err(data_err)?;
            let hist = out.with_extension("history.jsonl");
            fs::write(&hist, cnn::history_jsonl(&history)).map_err(data_err)?;
        }
        Cmd::Eval {
            common,
            data,
            checkpoint,
            cap_test,
        } => {
            let (ds, split) = load_data(&data)?;
            let params = load_params(&checkpoint)?;
            let test = match cap_test {
                Some(cap) => bench::cap_indices(&split.test, &ds.labels, cap).map_err(|e| Failure::Config(e.to_string()))?,
                None => split.test.clone(),
            };
            let (preds, _) = cnn::evaluate(&params, &ds, &test).map_err(data_err)?;
            let cm = metrics::confusion(&ds.labels_at(&test), &preds, NUM_CLASSES).map_err(data_err)?;
            let report = metrics::summarize(&cm);
            print!("{}", report.render());
            if let Some(out) = common.out {
                write_json(&out, &report)?;
            }
        }
        Cmd::Bench {
            common,
            data,
            table,
            repeats,
            cap_train,
            cap_test,
            check,
        } => {
            let entries = match table {
                Table::Desk => bench::desk_checks(),
                Table::Full => bench::table1(),
            };
            let mut cfg = read_config::<BenchConfig>(&common.config)?.unwrap_or_else(|| BenchConfig::new(entries, 0));
            if let Some(s) = common.seed {
                cfg.master_seed = s;
            }
            if let Some(r) = repeats {
                cfg.repeats = r;
            }
            cfg.cap_train = cap_train.or(cfg.cap_train);
            cfg.cap_test = cap_test.or(cfg.cap_test);
            let (ds, split) = load_data(&data)?;
            let result = bench::run_benchmark_with(&cfg, &ds, &split, |entry, r, acc| {
                eprintln!("{} {} repeat {}: {acc:.4}", entry.name, entry.params, r + 1)
            })
            .map_err(|e| match e {
                bench::BenchError::NoRepeats | bench::BenchError::CapTooSmall { .. } => Failure::Config(e.to_string()),
                other => data_err(other),
            })?;
            print!("{}", result.render());
            if let Some(out) = &common.out {
                write_json(out, &result)?;
            }
            if let Some(mode) = check {
                let mode = match mode {
                    Check::Desk => CheckMode::Desk,
                    Check::Published => CheckMode::Published,
                };
                let lines = result.check(mode);
                for l in &lines {
                    println!("{} {} {}: {:.4} (target {})", if l.pass { "PASS" } else { "FAIL" }, l.name, l.params, l.mean, l.target);
                }
                let failed = lines.iter().filter(|l| !l.pass).count();
                if failed > 0 {
                    return Err(Failure::Check(format!("{failed} row(s) missed their target")));
                }
            }
        }
        Cmd::Parse {
            common: _,
            checkpoint,
            images,
        } => {
            let params = load_params(&checkpoint)?;
            let model = parser::CnnDigitClassifier { params: &params };
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for path in images {
                let bytes = fs::read(&path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
                let img = idx::read_pgm(&bytes).map_err(data_err)?;
                let line = match parser::decode_fraction(&img, &model) {
                    Ok(r) => {
                        let mut j = r.to_json();
                        j["file"] = path.display().to_string().into();
                        j
                    }
                    Err(e) => serde_json::json!({ "file": path.display().to_string(), "error": e.to_string() }),
                };
                writeln!(out, "{line}").map_err(data_err)?;
            }
        }
        Cmd::ExportPgm { common, data, limit } => {
            let ds = LabeledDataset::load(&data).map_err(data_err)?;
            let out = common.out.ok_or_else(|| Failure::Config("--out is required".into()))?;
            fs::create_dir_all(&out).map_err(data_err)?;
            for (i, (img, label)) in ds.images.iter().zip(&ds.labels).take(limit).enumerate() {
                let path = out.join(format!("{i:06}_label{label}.pgm"));
                fs::write(&path, idx::write_pgm(img)).map_err(data_err)?;
            }
            eprintln!("wrote {} images to {}", limit.min(ds.len()), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(m) | Failure::Data(m) | Failure::Check(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}
