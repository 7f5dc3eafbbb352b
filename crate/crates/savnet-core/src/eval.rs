//! Inference-side protocols: nearest-attribute-vector classification,
//! per-task accuracy reports with confusion matrices, and micro-averaged
//! attribute detection metrics.
//!
//! Classification uses the global scores g(x), not the local scores h(x).
//! The predicted label is the candidate minimizing the squared Euclidean
//! distance between Sigmoid(g) and the candidate's attribute vector, with
//! distance ties broken toward the lexicographically smallest label so the
//! result never depends on candidate order.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::attributes::{ClassDictionary, DictError, Sav, Task, NUM_ATTRIBUTES};
use crate::audio::MelSpectrogram;
use crate::model::{infer, sigmoid, ModelError, ModelParams};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("evaluation contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Dict(#[from] DictError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Sigmoid(g): per-attribute detection probabilities.
pub fn attribute_probabilities(g: &[f64; NUM_ATTRIBUTES]) -> [f64; NUM_ATTRIBUTES] {
    let mut out = [0.0; NUM_ATTRIBUTES];
    for (o, &v) in out.iter_mut().zip(g) {
        *o = sigmoid(v);
    }
    out
}

fn squared_distance(probs: &[f64; NUM_ATTRIBUTES], sav: &Sav) -> f64 {
    let phi = sav.to_f64();
    probs.iter().zip(&phi).map(|(p, t)| (p - t) * (p - t)).sum()
}

/// The candidate whose attribute vector is nearest to `probs` in squared
/// Euclidean distance. Equal distances resolve to the lexicographically
/// smallest label regardless of slice order.
pub fn nearest_label<'a>(
    probs: &[f64; NUM_ATTRIBUTES],
    candidates: &'a [(String, Sav)],
) -> Result<&'a str, EvalError> {
    let mut best: Option<(&str, f64)> = None;
    for (label, sav) in candidates {
        let d = squared_distance(probs, sav);
        let better = match best {
            None => true,
            Some((bl, bd)) => d < bd || (d == bd && label.as_str() < bl),
        };
        if better {
            best = Some((label, d));
        }
    }
    best.map(|(label, _)| label)
        .ok_or_else(|| EvalError::Contract("empty candidate set".into()))
}

/// Classify one clip against an explicit candidate set.
pub fn classify<'a>(
    x: &MelSpectrogram,
    params: &ModelParams,
    candidates: &'a [(String, Sav)],
) -> Result<&'a str, EvalError> {
    let inference = infer(params, x)?;
    nearest_label(&attribute_probabilities(&inference.g), candidates)
}

/// Micro-averaged attribute detection counts and rates over every
/// (sample, attribute) pair. An attribute counts as detected when its
/// probability is >= 0.5; the boundary itself detects. Precision and
/// recall are 0 when their denominators are empty, as is F1 when both
/// rates vanish.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributeMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl AttributeMetrics {
    fn from_counts(counts: DetectionCounts) -> Self {
        let DetectionCounts { tp, fp, fn_, tn } = counts;
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let recall = if tp + fn_ > 0 {
            tp as f64 / (tp + fn_) as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        AttributeMetrics {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            true_negatives: tn,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct DetectionCounts {
    tp: usize,
    fp: usize,
    fn_: usize,
    tn: usize,
}

impl DetectionCounts {
    fn add(&mut self, probs: &[f64; NUM_ATTRIBUTES], truth: &Sav) {
        for (k, &p) in probs.iter().enumerate() {
            let detected = p >= 0.5;
            let present = truth.bit(k) == 1;
            match (detected, present) {
                (true, true) => self.tp += 1,
                (true, false) => self.fp += 1,
                (false, true) => self.fn_ += 1,
                (false, false) => self.tn += 1,
            }
        }
    }
}

/// One task's classification outcome. Accuracies and counts derive from
/// the confusion matrix, so they cannot disagree with it.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub task: Task,
    /// Candidate labels in lexicographic order; the axis of `confusion`.
    pub labels: Vec<String>,
    /// `confusion[i][j]`: samples of true class `labels[i]` predicted as
    /// `labels[j]`. Rows of classes absent from the dataset stay zero.
    pub confusion: Vec<Vec<usize>>,
    /// Attribute detection metrics over the same samples.
    pub attributes: AttributeMetrics,
}

impl EvalReport {
    pub fn samples(&self) -> usize {
        self.confusion
            .iter()
            .map(|row| row.iter().sum::<usize>())
            .sum()
    }

    pub fn class_count(&self, i: usize) -> usize {
        self.confusion[i].iter().sum()
    }

    /// Fraction of class `i`'s samples classified correctly, None when the
    /// dataset had no samples of that class.
    pub fn class_accuracy(&self, i: usize) -> Option<f64> {
        let count = self.class_count(i);
        (count > 0).then(|| self.confusion[i][i] as f64 / count as f64)
    }

    pub fn correct(&self) -> usize {
        (0..self.labels.len()).map(|i| self.confusion[i][i]).sum()
    }

    pub fn overall_accuracy(&self) -> f64 {
        self.correct() as f64 / self.samples() as f64
    }

    /// One row per candidate class plus an OVERALL row. Accuracy cells of
    /// classes without samples stay empty.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("label,count,correct,accuracy\n");
        for (i, label) in self.labels.iter().enumerate() {
            let count = self.class_count(i);
            let acc = match self.class_accuracy(i) {
                Some(a) => a.to_string(),
                None => String::new(),
            };
            let _ = writeln!(out, "{label},{count},{},{acc}", self.confusion[i][i]);
        }
        let _ = writeln!(
            out,
            "OVERALL,{},{},{}",
            self.samples(),
            self.correct(),
            self.overall_accuracy()
        );
        out
    }

    /// Human-readable block: headline numbers, per-class accuracy, and the
    /// confusion matrix in the same label order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "task: {}", self.task.as_str());
        let _ = writeln!(out, "samples: {}", self.samples());
        let _ = writeln!(
            out,
            "overall accuracy: {:.4} ({}/{})",
            self.overall_accuracy(),
            self.correct(),
            self.samples()
        );
        let a = &self.attributes;
        let _ = writeln!(
            out,
            "attribute detection (micro): precision {:.4} recall {:.4} f1 {:.4}",
            a.precision, a.recall, a.f1
        );
        let width = self.labels.iter().map(|l| l.len()).max().unwrap_or(0);
        let _ = writeln!(out, "per-class accuracy:");
        for (i, label) in self.labels.iter().enumerate() {
            match self.class_accuracy(i) {
                Some(acc) => {
                    let _ = writeln!(
                        out,
                        "  {label:width$}  {acc:.4} ({}/{})",
                        self.confusion[i][i],
                        self.class_count(i)
                    );
                }
                None => {
                    let _ = writeln!(out, "  {label:width$}  - (no samples)");
                }
            }
        }
        let _ = writeln!(
            out,
            "confusion matrix (row true, column predicted, label order as above):"
        );
        for (i, label) in self.labels.iter().enumerate() {
            let _ = write!(out, "  {label:width$} ");
            for j in 0..self.labels.len() {
                let _ = write!(out, " {:4}", self.confusion[i][j]);
            }
            out.push('\n');
        }
        out
    }
}

fn truth_for<'a>(
    dataset: &'a [(MelSpectrogram, String)],
    dict: &ClassDictionary,
) -> Result<Vec<(&'a MelSpectrogram, &'a str, Sav)>, EvalError> {
    dataset
        .iter()
        .map(|(x, label)| {
            let (sav, _) = dict.get(label).ok_or_else(|| {
                EvalError::Contract(format!(
                    "evaluation label `{label}` is not in the dictionary"
                ))
            })?;
            Ok((x, label.as_str(), sav))
        })
        .collect()
}

/// Run the model over `dataset` and score it under `task`'s candidate set
/// (zs: unseen classes; gzs and seen: the full dictionary). Every dataset
/// label must be a candidate; a seen-class sample under `zs` is a contract
/// error rather than a silent guaranteed miss.
pub fn evaluate(
    dataset: &[(MelSpectrogram, String)],
    dict: &ClassDictionary,
    params: &ModelParams,
    task: Task,
) -> Result<EvalReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::Contract("empty evaluation dataset".into()));
    }
    let candidates = dict.candidates(task)?;
    let index: BTreeMap<&str, usize> = candidates
        .iter()
        .enumerate()
        .map(|(i, (label, _))| (label.as_str(), i))
        .collect();
    let samples = truth_for(dataset, dict)?;
    for (_, label, _) in &samples {
        if !index.contains_key(label) {
            return Err(EvalError::Contract(format!(
                "label `{label}` is not a candidate under task {}",
                task.as_str()
            )));
        }
    }

    let predictions: Vec<Result<([f64; NUM_ATTRIBUTES], usize), EvalError>> = samples
        .par_iter()
        .map(|(x, _, _)| {
            let inference = infer(params, x)?;
            let probs = attribute_probabilities(&inference.g);
            let pred = nearest_label(&probs, &candidates)?;
            Ok((probs, index[pred]))
        })
        .collect();

    let mut confusion = vec![vec![0usize; candidates.len()]; candidates.len()];
    let mut counts = DetectionCounts::default();
    for ((_, label, sav), prediction) in samples.iter().zip(predictions) {
        let (probs, pred) = prediction?;
        confusion[index[label]][pred] += 1;
        counts.add(&probs, sav);
    }

    Ok(EvalReport {
        task,
        labels: candidates.into_iter().map(|(label, _)| label).collect(),
        confusion,
        attributes: AttributeMetrics::from_counts(counts),
    })
}

/// Attribute detection metrics alone, without a classification task.
pub fn attribute_metrics(
    dataset: &[(MelSpectrogram, String)],
    dict: &ClassDictionary,
    params: &ModelParams,
) -> Result<AttributeMetrics, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::Contract("empty evaluation dataset".into()));
    }
    let samples = truth_for(dataset, dict)?;
    let probs: Vec<Result<[f64; NUM_ATTRIBUTES], EvalError>> = samples
        .par_iter()
        .map(|(x, _, _)| {
            let inference = infer(params, x)?;
            Ok(attribute_probabilities(&inference.g))
        })
        .collect();
    let mut counts = DetectionCounts::default();
    for ((_, _, sav), p) in samples.iter().zip(probs) {
        counts.add(&p?, sav);
    }
    Ok(AttributeMetrics::from_counts(counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::Split;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sav_from(bits: &[u8]) -> Sav {
        Sav::from_slice(bits).unwrap()
    }

    fn random_sav(rng: &mut ChaCha8Rng) -> Sav {
        let bits: Vec<u8> = (0..NUM_ATTRIBUTES).map(|_| rng.gen_range(0..2)).collect();
        sav_from(&bits)
    }

    /// Independent of nearest_label: all distances, global min, then the
    /// lexicographically smallest label among the minimizers.
    fn oracle<'a>(probs: &[f64; NUM_ATTRIBUTES], candidates: &'a [(String, Sav)]) -> &'a str {
        let distances: Vec<f64> = candidates
            .iter()
            .map(|(_, sav)| {
                let phi = sav.to_f64();
                probs.iter().zip(&phi).map(|(p, t)| (p - t) * (p - t)).sum()
            })
            .collect();
        let min = distances.iter().cloned().fold(f64::INFINITY, f64::min);
        candidates
            .iter()
            .zip(&distances)
            .filter(|(_, &d)| d == min)
            .map(|((label, _), _)| label.as_str())
            .min()
            .unwrap()
    }

    #[test]
    fn exact_attribute_vector_wins_at_distance_zero() {
        let a = sav_from(&[1, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0]);
        let b = sav_from(&[0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        let candidates = vec![("alpha".to_string(), a), ("beta".to_string(), b)];
        let got = nearest_label(&b.to_f64(), &candidates).unwrap();
        assert_eq!(got, "beta");
    }

    #[test]
    fn single_candidate_always_returned() {
        let sav = sav_from(&[1; NUM_ATTRIBUTES]);
        let candidates = vec![("only".to_string(), sav)];
        let probs = [0.0; NUM_ATTRIBUTES];
        assert_eq!(nearest_label(&probs, &candidates).unwrap(), "only");
    }

    #[test]
    fn empty_candidates_rejected() {
        let probs = [0.5; NUM_ATTRIBUTES];
        assert!(nearest_label(&probs, &[]).is_err());
    }

    #[test]
    fn matches_exhaustive_oracle_on_random_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..100 {
            let n = rng.gen_range(1..=8);
            let mut candidates: Vec<(String, Sav)> = (0..n)
                .map(|i| (format!("class_{i:02}"), random_sav(&mut rng)))
                .collect();
            // Duplicate attribute vectors under new labels force real ties.
            if n >= 2 && case % 3 == 0 {
                let dup = candidates[0].1;
                candidates.push((format!("class_{n:02}_dup"), dup));
            }
            let mut probs = [0.0; NUM_ATTRIBUTES];
            for p in &mut probs {
                // Half-integer grid keeps exact equidistant cases common.
                *p = rng.gen_range(0..=2) as f64 * 0.5;
            }
            let got = nearest_label(&probs, &candidates).unwrap();
            assert_eq!(got, oracle(&probs, &candidates), "case {case}");
        }
    }

    #[test]
    fn tie_breaks_to_lexicographically_smallest_label() {
        let sav = sav_from(&[1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        // Same vector under two labels, the later one lexicographically first.
        let candidates = vec![("zeta".to_string(), sav), ("alpha".to_string(), sav)];
        let probs = [0.25; NUM_ATTRIBUTES];
        assert_eq!(nearest_label(&probs, &candidates).unwrap(), "alpha");

        // Equidistant but distinct vectors: probs sits exactly between two
        // vectors differing in one bit.
        let a = sav_from(&[1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        let b = sav_from(&[0; NUM_ATTRIBUTES]);
        let mut probs = [0.0; NUM_ATTRIBUTES];
        probs[0] = 0.5;
        let candidates = vec![("far".to_string(), a), ("near".to_string(), b)];
        assert_eq!(nearest_label(&probs, &candidates).unwrap(), "far");
    }

    #[test]
    fn argmin_agrees_between_distances_and_squared_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let candidates: Vec<(String, Sav)> = (0..6)
                .map(|i| (format!("c{i}"), random_sav(&mut rng)))
                .collect();
            let mut probs = [0.0; NUM_ATTRIBUTES];
            for p in &mut probs {
                *p = rng.gen();
            }
            let by_squared = nearest_label(&probs, &candidates).unwrap();
            // Oracle over plain (non-squared) Euclidean distance.
            let mut best: Option<(&str, f64)> = None;
            for (label, sav) in &candidates {
                let phi = sav.to_f64();
                let d: f64 = probs
                    .iter()
                    .zip(&phi)
                    .map(|(p, t)| (p - t) * (p - t))
                    .sum::<f64>()
                    .sqrt();
                let better = match best {
                    None => true,
                    Some((bl, bd)) => d < bd || (d == bd && label.as_str() < bl),
                };
                if better {
                    best = Some((label, d));
                }
            }
            assert_eq!(by_squared, best.unwrap().0);
        }
    }

    #[test]
    fn perfect_detector_scores_unit_metrics() {
        let mut counts = DetectionCounts::default();
        let sav = sav_from(&[1, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 1, 1, 0]);
        counts.add(&sav.to_f64(), &sav);
        let m = AttributeMetrics::from_counts(counts);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        assert_eq!(m.false_positives + m.false_negatives, 0);
    }

    #[test]
    fn all_negative_detector_has_zero_recall_and_f1() {
        let mut counts = DetectionCounts::default();
        let sav = sav_from(&[1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        counts.add(&[0.0; NUM_ATTRIBUTES], &sav);
        let m = AttributeMetrics::from_counts(counts);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.true_positives, 0);
    }

    #[test]
    fn half_probability_is_detected_giving_full_recall() {
        // At exactly 0.5 everything is detected, so recall is 1 and
        // precision is the density of set bits in the ground truth.
        let savs = [
            sav_from(&[1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]),
            sav_from(&[1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]),
            sav_from(&[1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]),
        ];
        let mut counts = DetectionCounts::default();
        for sav in &savs {
            counts.add(&[0.5; NUM_ATTRIBUTES], sav);
        }
        let m = AttributeMetrics::from_counts(counts);
        let ones = 1 + 3 + 8;
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.precision, ones as f64 / (3 * NUM_ATTRIBUTES) as f64);
    }

    #[test]
    fn micro_f1_from_counts_equals_f1_from_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let counts = DetectionCounts {
                tp: rng.gen_range(1..100),
                fp: rng.gen_range(0..100),
                fn_: rng.gen_range(0..100),
                tn: rng.gen_range(0..100),
            };
            let m = AttributeMetrics::from_counts(counts);
            let direct = 2.0 * counts.tp as f64
                / (2.0 * counts.tp as f64 + counts.fp as f64 + counts.fn_ as f64);
            assert!((m.f1 - direct).abs() < 1e-12);
        }
    }

    fn two_class_dict() -> ClassDictionary {
        let mut dict = ClassDictionary::new();
        dict.insert(
            "hum",
            sav_from(&[0, 1, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0]),
            Split::Seen,
        )
        .unwrap();
        dict.insert(
            "tick",
            sav_from(&[1, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0]),
            Split::Unseen,
        )
        .unwrap();
        dict
    }

    fn tiny_params() -> ModelParams {
        let config = crate::model::ModelConfig {
            encoder: crate::model::EncoderConfig {
                blocks: vec![(4, 1), (8, 1)],
            },
            basemod_hidden: 16,
        };
        crate::model::init_params(&config, 7).unwrap()
    }

    fn random_spec(rng: &mut ChaCha8Rng) -> MelSpectrogram {
        use crate::audio::{N_FRAMES, N_MELS};
        let data: Vec<f64> = (0..N_MELS * N_FRAMES)
            .map(|_| rng.gen_range(-6.0..4.0))
            .collect();
        let t = crate::tensor::Tensor::new(vec![1, N_MELS, N_FRAMES], data).unwrap();
        MelSpectrogram::new(t, "eval-test".into()).unwrap()
    }

    #[test]
    fn report_invariants_hold_on_a_real_model() {
        let dict = two_class_dict();
        let params = tiny_params();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut dataset = Vec::new();
        for _ in 0..5 {
            dataset.push((random_spec(&mut rng), "hum".to_string()));
        }
        for _ in 0..3 {
            dataset.push((random_spec(&mut rng), "tick".to_string()));
        }
        let report = evaluate(&dataset, &dict, &params, Task::Gzs).unwrap();
        assert_eq!(report.labels, vec!["hum".to_string(), "tick".to_string()]);
        assert_eq!(report.samples(), 8);
        assert_eq!(report.class_count(0), 5);
        assert_eq!(report.class_count(1), 3);
        let acc = report.overall_accuracy();
        assert!((0.0..=1.0).contains(&acc));
        let trace: usize = (0..2).map(|i| report.confusion[i][i]).sum();
        assert_eq!(report.correct(), trace);
        // Standalone attribute metrics agree with the embedded ones.
        let standalone = attribute_metrics(&dataset, &dict, &params).unwrap();
        assert_eq!(standalone, report.attributes);
    }

    #[test]
    fn zs_task_restricts_candidates_to_unseen() {
        let dict = two_class_dict();
        let params = tiny_params();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let dataset = vec![(random_spec(&mut rng), "tick".to_string())];
        let report = evaluate(&dataset, &dict, &params, Task::Zs).unwrap();
        // Single unseen candidate: always predicted, accuracy 1.
        assert_eq!(report.labels, vec!["tick".to_string()]);
        assert_eq!(report.overall_accuracy(), 1.0);
    }

    #[test]
    fn seen_sample_under_zs_task_is_a_contract_error() {
        let dict = two_class_dict();
        let params = tiny_params();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dataset = vec![(random_spec(&mut rng), "hum".to_string())];
        let err = evaluate(&dataset, &dict, &params, Task::Zs).unwrap_err();
        assert!(err.to_string().contains("not a candidate"));
    }

    #[test]
    fn unknown_label_is_rejected() {
        let dict = two_class_dict();
        let params = tiny_params();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let dataset = vec![(random_spec(&mut rng), "warble".to_string())];
        let err = evaluate(&dataset, &dict, &params, Task::Gzs).unwrap_err();
        assert!(err.to_string().contains("not in the dictionary"));
    }

    #[test]
    fn uniform_random_predictions_score_near_chance() {
        // Feeds the counting path directly: 6000 predictions drawn uniformly
        // over 6 classes give accuracy 1/6 up to binomial noise (4 sigma).
        let n_classes = 6;
        let n = 6000;
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for _ in 0..n {
            let truth = rng.gen_range(0..n_classes);
            let pred = rng.gen_range(0..n_classes);
            confusion[truth][pred] += 1;
        }
        let report = EvalReport {
            task: Task::Zs,
            labels: (0..n_classes).map(|i| format!("c{i}")).collect(),
            confusion,
            attributes: AttributeMetrics::from_counts(DetectionCounts::default()),
        };
        let p = 1.0 / n_classes as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let acc = report.overall_accuracy();
        assert!(
            (acc - p).abs() < 4.0 * sigma,
            "accuracy {acc} not within 4 sigma of {p}"
        );
    }

    #[test]
    fn csv_has_one_row_per_class_plus_overall() {
        let report = EvalReport {
            task: Task::Gzs,
            labels: vec!["a".into(), "b".into(), "c".into()],
            confusion: vec![vec![3, 1, 0], vec![0, 4, 0], vec![0, 0, 0]],
            attributes: AttributeMetrics::from_counts(DetectionCounts::default()),
        };
        let csv = report.to_csv_string();
        let expected = "label,count,correct,accuracy\n\
                        a,4,3,0.75\n\
                        b,4,4,1\n\
                        c,0,0,\n\
                        OVERALL,8,7,0.875\n";
        assert_eq!(csv, expected);
        let text = report.to_text();
        assert!(text.contains("overall accuracy: 0.8750 (7/8)"));
        assert!(text.contains("c  - (no samples)"));
    }
}
