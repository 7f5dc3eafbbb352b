//! Per-attribute detection breakdown for a checkpoint on a corpus:
//! how well each of the 15 attribute scores separates test clips that
//! carry the attribute from those that do not, split by seen/unseen.
//!
//! Usage: attribute_report <checkpoint> <corpus_dir>

use std::path::Path;

use savnet_core::attributes::{Split, ATTRIBUTE_NAMES, NUM_ATTRIBUTES};
use savnet_core::audio::FrontEnd;
use savnet_core::checkpoint::load_checkpoint;
use savnet_core::eval::attribute_probabilities;
use savnet_core::model::infer;
use savnet_core::synth::{load_dataset, CorpusManifest, SampleSplit};
use savnet_core::ClassDictionary;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    if args.len() != 3 {
        eprintln!("usage: attribute_report <checkpoint> <corpus_dir>");
        std::process::exit(1);
    }
    let corpus = Path::new(&args[2]);
    let (params, _) = load_checkpoint(Path::new(&args[1]))?;
    let dict = ClassDictionary::load(&corpus.join("dictionary.csv"))?;
    let manifest = CorpusManifest::load(&corpus.join("manifest.csv"))?;
    let front = FrontEnd::new()?;
    let test = load_dataset(corpus, &manifest, SampleSplit::Test, &front)?;

    for split in [Split::Seen, Split::Unseen] {
        let clips: Vec<_> = test
            .iter()
            .filter(|(_, label)| matches!(dict.get(label), Some((_, s)) if s == split))
            .collect();
        println!("{:?} test clips ({}):", split, clips.len());
        let mut mean = [[0.0f64; 2]; NUM_ATTRIBUTES];
        let mut count = [[0usize; 2]; NUM_ATTRIBUTES];
        let mut correct = [0usize; NUM_ATTRIBUTES];
        for (spec, label) in &clips {
            let sav = dict.get(label).unwrap().0;
            let probs = attribute_probabilities(&infer(&params, spec)?.g);
            for k in 0..NUM_ATTRIBUTES {
                let bit = sav.bit(k) as usize;
                mean[k][bit] += probs[k];
                count[k][bit] += 1;
                if (probs[k] >= 0.5) == (bit == 1) {
                    correct[k] += 1;
                }
            }
        }
        for k in 0..NUM_ATTRIBUTES {
            let avg = |bit: usize| {
                if count[k][bit] > 0 {
                    format!("{:.2}", mean[k][bit] / count[k][bit] as f64)
                } else {
                    "  - ".into()
                }
            };
            println!(
                "  {:16} acc {:.2}   mean p | present {} (n={:3}) | absent {} (n={:3})",
                ATTRIBUTE_NAMES[k],
                correct[k] as f64 / clips.len() as f64,
                avg(1),
                count[k][1],
                avg(0),
                count[k][0],
            );
        }
    }

    println!("unseen classes:");
    for label in dict.labels(Split::Unseen) {
        println!("  {} {}", label, dict.get(label).unwrap().0);
    }
    Ok(())
}
