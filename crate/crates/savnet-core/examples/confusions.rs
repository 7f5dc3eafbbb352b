//! Per-clip confusion dump for a checkpoint on a corpus: prints every
//! misclassified test clip with its predicted label and the distance gap
//! to the true class.
//!
//! Usage: confusions <checkpoint> <corpus_dir> <task>

use std::path::Path;

use savnet_core::attributes::Split;
use savnet_core::audio::FrontEnd;
use savnet_core::checkpoint::load_checkpoint;
use savnet_core::eval::{attribute_probabilities, nearest_label};
use savnet_core::model::infer;
use savnet_core::synth::{load_dataset, CorpusManifest, SampleSplit};
use savnet_core::{ClassDictionary, Task};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    if args.len() != 4 {
        eprintln!("usage: confusions <checkpoint> <corpus_dir> <task>");
        std::process::exit(1);
    }
    let corpus = Path::new(&args[2]);
    let task = Task::parse(&args[3]).ok_or("task must be zs, gzs, or seen")?;
    let (params, _) = load_checkpoint(Path::new(&args[1]))?;
    let dict = ClassDictionary::load(&corpus.join("dictionary.csv"))?;
    let manifest = CorpusManifest::load(&corpus.join("manifest.csv"))?;
    let front = FrontEnd::new()?;
    let test = load_dataset(corpus, &manifest, SampleSplit::Test, &front)?;
    let candidates = dict.candidates(task)?;

    let dist = |probs: &[f64; 15], label: &str| -> f64 {
        let sav = dict.sav(label).unwrap();
        probs
            .iter()
            .zip(sav.bits())
            .map(|(p, &b)| (p - f64::from(b)).powi(2))
            .sum()
    };

    let wanted = match task {
        Task::Zs | Task::Gzs => Split::Unseen,
        Task::Seen => Split::Seen,
    };
    for (spec, label) in &test {
        if !matches!(dict.get(label), Some((_, s)) if s == wanted) {
            continue;
        }
        let inference = infer(&params, spec)?;
        let probs = attribute_probabilities(&inference.g);
        let pred = nearest_label(&probs, &candidates)?;
        if pred != label {
            println!(
                "{label} -> {pred}  d_true {:.3} d_pred {:.3}",
                dist(&probs, label),
                dist(&probs, pred)
            );
        }
    }
    Ok(())
}
