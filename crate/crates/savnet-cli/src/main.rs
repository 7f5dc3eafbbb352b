//! `savnet`: synthetic corpus generation, feature extraction, training,
//! evaluation, and similarity-map export as one reproducible pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. `SAVNET_THREADS`
//! caps the worker pool; it may change speed but never results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use savnet_core::attributes::Task;
use savnet_core::audio::{load_wav, FrontEnd, N_FRAMES, N_MELS};
use savnet_core::checkpoint::{load_checkpoint, save_checkpoint};
use savnet_core::eval::evaluate;
use savnet_core::synth::{
    generate_corpus, load_dataset, CorpusManifest, SampleSplit, DEFAULT_PER_CLASS,
    DEFAULT_SEEN_CLASSES, DEFAULT_UNSEEN_CLASSES,
};
use savnet_core::train::{train, TrainConfig};
use savnet_core::viz::export_similarity_maps;
use savnet_core::{ClassDictionary, MelSpectrogram, Split};

#[derive(Parser)]
#[command(
    name = "savnet",
    version,
    about = "Attribute-based zero-shot sound event classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic attribute-controlled corpus.
    Synth {
        /// Output directory (receives wav/, manifest.csv, dictionary.csv).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_SEEN_CLASSES)]
        seen: usize,
        #[arg(long, default_value_t = DEFAULT_UNSEEN_CLASSES)]
        unseen: usize,
        #[arg(long, default_value_t = DEFAULT_PER_CLASS)]
        per_class: usize,
    },
    /// Extract log-mel features from one WAV into a CSV grid.
    Features {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the manifest's train split and write a checkpoint.
    Train {
        /// Training config file (`key = value` lines).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the manifest's test split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        /// zs: unseen samples, unseen candidates; gzs: unseen samples, all
        /// candidates; seen: seen samples, all candidates.
        #[arg(long, value_parser = ["zs", "gzs", "seen"])]
        task: String,
        /// Where to write the per-class CSV report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Export per-attribute similarity maps for one WAV.
    Viz {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

type CliError = Box<dyn std::error::Error>;

fn main() -> ExitCode {
    if let Err(message) = configure_threads() {
        eprintln!("error: {message}");
        return ExitCode::from(1);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// `SAVNET_THREADS` sizes the worker pool up front. Results are reduced
/// in fixed order everywhere, so this affects wall time only.
fn configure_threads() -> Result<(), String> {
    match std::env::var("SAVNET_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let n: usize = raw
                .parse()
                .map_err(|_| format!("SAVNET_THREADS must be a positive integer, got `{raw}`"))?;
            if n == 0 {
                return Err("SAVNET_THREADS must be a positive integer, got `0`".into());
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| format!("could not size the thread pool: {e}"))
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth {
            out,
            seed,
            seen,
            unseen,
            per_class,
        } => {
            let (manifest, dict) = generate_corpus(&out, seen, unseen, per_class, seed)?;
            let train_rows = manifest.rows_for(SampleSplit::Train).count();
            let test_rows = manifest.rows_for(SampleSplit::Test).count();
            println!(
                "wrote {} clips ({train_rows} train, {test_rows} test), {} classes -> {}",
                manifest.rows.len(),
                dict.len(),
                out.display()
            );
            Ok(())
        }
        Command::Features { wav, out } => {
            let clip = load_wav(&wav)?;
            let front = FrontEnd::new()?;
            let spec = front.process(&clip, &wav.display().to_string())?;
            std::fs::write(&out, feature_csv(&spec))?;
            println!(
                "wrote {} ({N_MELS} mel bins x {N_FRAMES} frames)",
                out.display()
            );
            Ok(())
        }
        Command::Train {
            config,
            manifest,
            dict,
            out,
        } => {
            let config = TrainConfig::load(&config)?;
            let dict = load_dictionary(&dict)?;
            let (manifest, base) = load_manifest(&manifest, &dict)?;
            let front = FrontEnd::new()?;
            let dataset = load_dataset(&base, &manifest, SampleSplit::Train, &front)?;
            println!(
                "training on {} clips, {} seen classes",
                dataset.len(),
                dict.labels(Split::Seen).len()
            );
            let result = train(&dataset, &dict, &config, |epoch, loss| {
                println!("epoch {epoch}: loss {loss:.6}");
            })?;
            save_checkpoint(&out, &result.params, &config.to_config_string())?;
            println!("wrote checkpoint {}", out.display());
            Ok(())
        }
        Command::Eval {
            ckpt,
            manifest,
            dict,
            task,
            report,
        } => {
            let task = Task::parse(&task).expect("clap constrained the value");
            let (params, _) = load_checkpoint(&ckpt)?;
            let dict = load_dictionary(&dict)?;
            let (manifest, base) = load_manifest(&manifest, &dict)?;
            let front = FrontEnd::new()?;
            let test = load_dataset(&base, &manifest, SampleSplit::Test, &front)?;
            // zs and gzs grade unseen-class samples; seen grades the rest.
            let wanted = match task {
                Task::Zs | Task::Gzs => Split::Unseen,
                Task::Seen => Split::Seen,
            };
            let dataset: Vec<(MelSpectrogram, String)> = test
                .into_iter()
                .filter(|(_, label)| matches!(dict.get(label), Some((_, s)) if s == wanted))
                .collect();
            let report_data = evaluate(&dataset, &dict, &params, task)?;
            print!("{}", report_data.to_text());
            println!(
                "{}_accuracy={}",
                task.as_str(),
                report_data.overall_accuracy()
            );
            println!("{}_micro_f1={}", task.as_str(), report_data.attributes.f1);
            if let Some(path) = report {
                std::fs::write(&path, report_data.to_csv_string())?;
                println!("wrote report {}", path.display());
            }
            Ok(())
        }
        Command::Viz { ckpt, wav, out } => {
            let (params, _) = load_checkpoint(&ckpt)?;
            let clip = load_wav(&wav)?;
            let front = FrontEnd::new()?;
            let spec = front.process(&clip, &wav.display().to_string())?;
            let infos = export_similarity_maps(&spec, &params, &out)?;
            for info in &infos {
                println!(
                    "{}: score {:.4}, argmax ({}, {})",
                    info.attribute, info.score, info.row, info.col
                );
            }
            println!("wrote {} maps -> {}", infos.len(), out.display());
            Ok(())
        }
    }
}

fn load_dictionary(path: &Path) -> Result<ClassDictionary, CliError> {
    let dict = ClassDictionary::load(path)?;
    for group in dict.duplicate_sav_groups() {
        eprintln!(
            "warning: classes {{{}}} share one attribute vector and cannot be told apart",
            group.join(", ")
        );
    }
    Ok(dict)
}

/// Manifest paths are relative to the manifest file's directory.
fn load_manifest(
    path: &Path,
    dict: &ClassDictionary,
) -> Result<(CorpusManifest, PathBuf), CliError> {
    let manifest = CorpusManifest::load(path)?;
    manifest.validate(dict)?;
    let base = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    Ok((manifest, base))
}

fn feature_csv(spec: &MelSpectrogram) -> String {
    let data = spec.values().data();
    let dims = spec.values().dims();
    let (rows, cols) = (dims[1], dims[2]);
    let mut out = String::new();
    for i in 0..rows {
        for j in 0..cols {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", data[i * cols + j]);
        }
        out.push('\n');
    }
    out
}
