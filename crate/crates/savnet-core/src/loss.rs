//! The four training objectives.
//!
//! The global head is trained either with mean binary cross-entropy against
//! the SAV bits or with a softmax over the seen classes whose logits are the
//! correlations between the rescaled SAVs and Tanh of the scores. The local
//! head adds a squared-error pull of h(x) toward the SAV, weighted by
//! lambda. Batch reduction (mean over samples) belongs to the trainer.

use crate::attributes::{ClassDictionary, Sav, Split, NUM_ATTRIBUTES};
use crate::tape::{GradientTape, NodeId};
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("loss contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    Bce,
    Sm,
}

impl LossMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bce" => Some(LossMode::Bce),
            "sm" => Some(LossMode::Sm),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LossMode::Bce => "bce",
            LossMode::Sm => "sm",
        }
    }
}

/// Which objective to optimize and how hard to weight the local term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub mode: LossMode,
    pub use_local: bool,
    pub lambda: f64,
}

impl LossConfig {
    pub fn new(mode: LossMode, use_local: bool, lambda: f64) -> Result<Self, LossError> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(LossError::Contract(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        Ok(Self {
            mode,
            use_local,
            lambda,
        })
    }

    /// The four studied configurations. Lambda defaults reflect the scale
    /// ratio between the two mode losses: 1.0 alongside BCE, 10.0 alongside
    /// the softmax loss.
    pub fn bce() -> Self {
        Self {
            mode: LossMode::Bce,
            use_local: false,
            lambda: 0.0,
        }
    }

    pub fn bce_local() -> Self {
        Self {
            mode: LossMode::Bce,
            use_local: true,
            lambda: 1.0,
        }
    }

    pub fn sm() -> Self {
        Self {
            mode: LossMode::Sm,
            use_local: false,
            lambda: 0.0,
        }
    }

    pub fn sm_local() -> Self {
        Self {
            mode: LossMode::Sm,
            use_local: true,
            lambda: 10.0,
        }
    }

    /// Short tag used in reports and filenames, e.g. `sm+local`.
    pub fn tag(&self) -> String {
        if self.use_local {
            format!("{}+local", self.mode.as_str())
        } else {
            self.mode.as_str().to_string()
        }
    }
}

/// Mean binary cross-entropy of Sigmoid(g) against the SAV bits.
pub fn bce_loss(tape: &mut GradientTape, g: NodeId, sav: &Sav) -> Result<NodeId, TensorError> {
    tape.bce_mean(g, &sav.to_f64())
}

/// Seen-class SAV matrix in label-lexicographic order, rescaled to {-1,+1};
/// the logits of the softmax loss are this matrix times Tanh(g).
pub struct SeenSavMatrix {
    labels: Vec<String>,
    scaled: Vec<f64>,
}

impl SeenSavMatrix {
    pub fn build(dict: &ClassDictionary) -> Result<Self, LossError> {
        let labels: Vec<String> = dict
            .labels(Split::Seen)
            .into_iter()
            .map(str::to_string)
            .collect();
        if labels.is_empty() {
            return Err(LossError::Contract("no seen classes in dictionary".into()));
        }
        let mut scaled = Vec::with_capacity(labels.len() * NUM_ATTRIBUTES);
        for label in &labels {
            let sav = dict.sav(label).expect("label came from the dictionary");
            scaled.extend_from_slice(&sav.scaled());
        }
        Ok(Self { labels, scaled })
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Softmax cross-entropy over the seen classes with logits
/// phi'(y) . Tanh(g), evaluated in stable log-sum-exp form.
pub fn softmax_loss(
    tape: &mut GradientTape,
    g: NodeId,
    label: &str,
    seen: &SeenSavMatrix,
) -> Result<NodeId, LossError> {
    let target = seen
        .index_of(label)
        .ok_or_else(|| LossError::Contract(format!("label `{label}` is not a seen class")))?;
    let t = tape.tanh(g)?;
    let logits = tape.matvec_const(&seen.scaled, seen.num_classes(), NUM_ATTRIBUTES, t)?;
    Ok(tape.cross_entropy_logits(logits, target)?)
}

/// Squared Euclidean pull of the local scores onto the SAV (sum reduction).
pub fn local_loss(tape: &mut GradientTape, h: NodeId, sav: &Sav) -> Result<NodeId, TensorError> {
    tape.mse_sum(h, &sav.to_f64())
}

/// Per-sample total: mode loss plus lambda times the local term.
pub fn total_loss(
    tape: &mut GradientTape,
    config: &LossConfig,
    g: NodeId,
    h: NodeId,
    label: &str,
    dict: &ClassDictionary,
    seen: &SeenSavMatrix,
) -> Result<NodeId, LossError> {
    let sav = dict
        .sav(label)
        .ok_or_else(|| LossError::Contract(format!("label `{label}` not in dictionary")))?;
    let mode = match config.mode {
        LossMode::Bce => bce_loss(tape, g, &sav)?,
        LossMode::Sm => softmax_loss(tape, g, label, seen)?,
    };
    if !config.use_local {
        return Ok(mode);
    }
    let local = local_loss(tape, h, &sav)?;
    Ok(tape.weighted_sum(&[(mode, 1.0), (local, config.lambda)])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vec_leaf(tape: &mut GradientTape, v: &[f64]) -> NodeId {
        tape.leaf(Tensor::new(vec![v.len()], v.to_vec()).unwrap())
    }

    fn random_sav(rng: &mut ChaCha8Rng) -> Sav {
        let mut bits = [0u8; NUM_ATTRIBUTES];
        for b in &mut bits {
            *b = rng.gen_range(0..2);
        }
        Sav::new(bits).unwrap()
    }

    fn dict_with(labels_savs: &[(&str, Sav, Split)]) -> ClassDictionary {
        let mut dict = ClassDictionary::new();
        for (label, sav, split) in labels_savs {
            dict.insert(label, *sav, *split).unwrap();
        }
        dict
    }

    #[test]
    fn bce_of_zero_scores_is_ln_two_for_any_sav() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let sav = random_sav(&mut rng);
            let mut tape = GradientTape::new();
            let g = vec_leaf(&mut tape, &[0.0; NUM_ATTRIBUTES]);
            let loss = bce_loss(&mut tape, g, &sav).unwrap();
            assert!((tape.value(loss).scalar_value() - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn bce_saturated_in_the_right_direction_vanishes() {
        let mut bits = [0u8; NUM_ATTRIBUTES];
        bits[0] = 1;
        bits[7] = 1;
        let sav = Sav::new(bits).unwrap();
        let g: Vec<f64> = sav
            .to_f64()
            .iter()
            .map(|&b| if b == 1.0 { 80.0 } else { -80.0 })
            .collect();
        let mut tape = GradientTape::new();
        let gid = vec_leaf(&mut tape, &g);
        let loss = bce_loss(&mut tape, gid, &sav).unwrap();
        assert!(tape.value(loss).scalar_value() < 1e-20);
    }

    #[test]
    fn bce_matches_naive_elementwise_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let sav = random_sav(&mut rng);
            let g: Vec<f64> = (0..NUM_ATTRIBUTES)
                .map(|_| rng.gen_range(-4.0..4.0))
                .collect();
            let mut tape = GradientTape::new();
            let gid = vec_leaf(&mut tape, &g);
            let loss = bce_loss(&mut tape, gid, &sav).unwrap();

            let naive: f64 = g
                .iter()
                .zip(sav.to_f64())
                .map(|(&gk, b)| {
                    let s = 1.0 / (1.0 + (-gk).exp());
                    -(b * s.ln() + (1.0 - b) * (1.0 - s).ln())
                })
                .sum::<f64>()
                / NUM_ATTRIBUTES as f64;
            assert!((tape.value(loss).scalar_value() - naive).abs() <= 1e-10);
        }
    }

    #[test]
    fn bce_never_increases_when_a_true_attribute_score_rises() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut sav = random_sav(&mut rng);
            if sav.to_f64().iter().all(|&b| b == 0.0) {
                let mut bits = *sav.bits();
                bits[0] = 1;
                sav = Sav::new(bits).unwrap();
            }
            let k = (0..NUM_ATTRIBUTES).find(|&k| sav.bit(k) == 1).unwrap();
            let g: Vec<f64> = (0..NUM_ATTRIBUTES)
                .map(|_| rng.gen_range(-3.0..3.0))
                .collect();
            let eval = |gk: f64| {
                let mut gg = g.clone();
                gg[k] = gk;
                let mut tape = GradientTape::new();
                let gid = vec_leaf(&mut tape, &gg);
                let loss = bce_loss(&mut tape, gid, &sav).unwrap();
                tape.value(loss).scalar_value()
            };
            let lo = eval(g[k]);
            let hi = eval(g[k] + 1.5);
            assert!(hi <= lo + 1e-15, "raising a true score increased the loss");
        }
    }

    #[test]
    fn softmax_over_single_seen_class_is_exactly_zero() {
        let mut bits = [0u8; NUM_ATTRIBUTES];
        bits[2] = 1;
        let dict = dict_with(&[("only", Sav::new(bits).unwrap(), Split::Seen)]);
        let seen = SeenSavMatrix::build(&dict).unwrap();
        let mut tape = GradientTape::new();
        let g = vec_leaf(&mut tape, &[0.3; NUM_ATTRIBUTES]);
        let loss = softmax_loss(&mut tape, g, "only", &seen).unwrap();
        assert_eq!(tape.value(loss).scalar_value(), 0.0);
    }

    #[test]
    fn softmax_with_duplicate_savs_is_ln_two_for_any_scores() {
        let mut bits = [0u8; NUM_ATTRIBUTES];
        bits[4] = 1;
        let sav = Sav::new(bits).unwrap();
        let dict = dict_with(&[("a", sav, Split::Seen), ("b", sav, Split::Seen)]);
        let seen = SeenSavMatrix::build(&dict).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let g: Vec<f64> = (0..NUM_ATTRIBUTES)
                .map(|_| rng.gen_range(-5.0..5.0))
                .collect();
            let mut tape = GradientTape::new();
            let gid = vec_leaf(&mut tape, &g);
            let loss = softmax_loss(&mut tape, gid, "a", &seen).unwrap();
            assert!((tape.value(loss).scalar_value() - std::f64::consts::LN_2).abs() < 1e-10);
        }
    }

    #[test]
    fn softmax_matches_directly_coded_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            // 4 seen classes with random SAVs
            let savs: Vec<Sav> = (0..4).map(|_| random_sav(&mut rng)).collect();
            let dict = dict_with(&[
                ("c0", savs[0], Split::Seen),
                ("c1", savs[1], Split::Seen),
                ("c2", savs[2], Split::Seen),
                ("c3", savs[3], Split::Seen),
            ]);
            let seen = SeenSavMatrix::build(&dict).unwrap();
            let g: Vec<f64> = (0..NUM_ATTRIBUTES)
                .map(|_| rng.gen_range(-3.0..3.0))
                .collect();
            let target = rng.gen_range(0..4usize);
            let label = format!("c{target}");

            let mut tape = GradientTape::new();
            let gid = vec_leaf(&mut tape, &g);
            let loss = softmax_loss(&mut tape, gid, &label, &seen).unwrap();

            // direct transcription: -ln softmax(logit_target)
            let logits: Vec<f64> = savs
                .iter()
                .map(|s| {
                    s.scaled()
                        .iter()
                        .zip(&g)
                        .map(|(p, gk)| p * gk.tanh())
                        .sum::<f64>()
                })
                .collect();
            let denom: f64 = logits.iter().map(|l| l.exp()).sum();
            let naive = -(logits[target].exp() / denom).ln();
            assert!(
                (tape.value(loss).scalar_value() - naive).abs() <= 1e-10,
                "{} vs {naive}",
                tape.value(loss).scalar_value()
            );
        }
    }

    #[test]
    fn softmax_rejects_non_seen_label() {
        let mut bits = [0u8; NUM_ATTRIBUTES];
        bits[0] = 1;
        let dict = dict_with(&[("s", Sav::new(bits).unwrap(), Split::Seen)]);
        let seen = SeenSavMatrix::build(&dict).unwrap();
        let mut tape = GradientTape::new();
        let g = vec_leaf(&mut tape, &[0.0; NUM_ATTRIBUTES]);
        let err = softmax_loss(&mut tape, g, "ghost", &seen).unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn local_loss_closed_forms() {
        let mut bits = [0u8; NUM_ATTRIBUTES];
        bits[1] = 1;
        bits[3] = 1;
        bits[9] = 1;
        let sav = Sav::new(bits).unwrap();

        let mut tape = GradientTape::new();
        let exact = vec_leaf(&mut tape, &sav.to_f64());
        let loss = local_loss(&mut tape, exact, &sav).unwrap();
        assert_eq!(tape.value(loss).scalar_value(), 0.0);

        let zeros = vec_leaf(&mut tape, &[0.0; NUM_ATTRIBUTES]);
        let loss = local_loss(&mut tape, zeros, &sav).unwrap();
        assert_eq!(tape.value(loss).scalar_value(), 3.0); // one per set bit
    }

    #[test]
    fn total_composes_mode_and_weighted_local() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let savs: Vec<Sav> = (0..3).map(|_| random_sav(&mut rng)).collect();
        let dict = dict_with(&[
            ("a", savs[0], Split::Seen),
            ("b", savs[1], Split::Seen),
            ("c", savs[2], Split::Seen),
        ]);
        let seen = SeenSavMatrix::build(&dict).unwrap();
        let g: Vec<f64> = (0..NUM_ATTRIBUTES)
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect();
        let h: Vec<f64> = (0..NUM_ATTRIBUTES)
            .map(|_| rng.gen_range(-1.0..2.0))
            .collect();

        for config in [
            LossConfig::bce(),
            LossConfig::bce_local(),
            LossConfig::sm(),
            LossConfig::sm_local(),
        ] {
            let mut tape = GradientTape::new();
            let gid = vec_leaf(&mut tape, &g);
            let hid = vec_leaf(&mut tape, &h);
            let total = total_loss(&mut tape, &config, gid, hid, "b", &dict, &seen).unwrap();

            let mode_val = {
                let mut t = GradientTape::new();
                let gi = vec_leaf(&mut t, &g);
                let l = match config.mode {
                    LossMode::Bce => bce_loss(&mut t, gi, &savs[1]).unwrap(),
                    LossMode::Sm => softmax_loss(&mut t, gi, "b", &seen).unwrap(),
                };
                t.value(l).scalar_value()
            };
            let local_val = {
                let mut t = GradientTape::new();
                let hi = vec_leaf(&mut t, &h);
                let l = local_loss(&mut t, hi, &savs[1]).unwrap();
                t.value(l).scalar_value()
            };
            let want = if config.use_local {
                mode_val + config.lambda * local_val
            } else {
                mode_val
            };
            assert_eq!(tape.value(total).scalar_value(), want, "{}", config.tag());
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sav = random_sav(&mut rng);
        let savs = [sav, random_sav(&mut rng), random_sav(&mut rng)];
        let dict = dict_with(&[
            ("a", savs[0], Split::Seen),
            ("b", savs[1], Split::Seen),
            ("c", savs[2], Split::Seen),
        ]);
        let seen = SeenSavMatrix::build(&dict).unwrap();
        let x: Vec<f64> = (0..NUM_ATTRIBUTES)
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect();

        // each closure evaluates one loss at a given score vector
        type Case<'a> = (&'a str, Box<dyn Fn(&[f64]) -> f64>);
        let cases: Vec<Case> = vec![
            (
                "bce",
                Box::new({
                    let sav = savs[0];
                    move |v: &[f64]| {
                        let mut t = GradientTape::new();
                        let id = t.leaf(Tensor::new(vec![v.len()], v.to_vec()).unwrap());
                        let l = bce_loss(&mut t, id, &sav).unwrap();
                        t.value(l).scalar_value()
                    }
                }),
            ),
            (
                "sm",
                Box::new({
                    let seen = SeenSavMatrix::build(&dict).unwrap();
                    move |v: &[f64]| {
                        let mut t = GradientTape::new();
                        let id = t.leaf(Tensor::new(vec![v.len()], v.to_vec()).unwrap());
                        let l = softmax_loss(&mut t, id, "a", &seen).unwrap();
                        t.value(l).scalar_value()
                    }
                }),
            ),
            (
                "local",
                Box::new({
                    let sav = savs[0];
                    move |v: &[f64]| {
                        let mut t = GradientTape::new();
                        let id = t.leaf(Tensor::new(vec![v.len()], v.to_vec()).unwrap());
                        let l = local_loss(&mut t, id, &sav).unwrap();
                        t.value(l).scalar_value()
                    }
                }),
            ),
        ];

        for (name, eval) in &cases {
            // analytic gradient
            let mut tape = GradientTape::new();
            let id = tape.leaf(Tensor::new(vec![x.len()], x.clone()).unwrap());
            let loss = match *name {
                "bce" => bce_loss(&mut tape, id, &savs[0]).unwrap(),
                "sm" => softmax_loss(&mut tape, id, "a", &seen).unwrap(),
                _ => local_loss(&mut tape, id, &savs[0]).unwrap(),
            };
            let grads = tape.backward(loss).unwrap();
            let analytic = grads.get(id).unwrap().data();

            let eps = 1e-6;
            for k in 0..NUM_ATTRIBUTES {
                let mut plus = x.clone();
                plus[k] += eps;
                let mut minus = x.clone();
                minus[k] -= eps;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * eps);
                // absolute floor absorbs the ~1e-10 cancellation noise of
                // central differences at this step size
                let tol = 1e-8 + 1e-6 * analytic[k].abs().max(fd.abs());
                assert!(
                    (analytic[k] - fd).abs() <= tol,
                    "{name}[{k}]: analytic {} vs fd {fd}",
                    analytic[k]
                );
            }
        }
    }
}
