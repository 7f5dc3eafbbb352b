//! Attribute-controlled synthetic sound generator and corpus builder.
//!
//! Every acoustic decision is driven by the attribute fields of an
//! [`EventRecipe`], so a rendered clip's attribute vector is true by
//! construction: pitch picks the fundamental band, length the active
//! duration, material the partial structure and decay, and the situation
//! flags the temporal macro-structure. Class identity lives in a timbre
//! seed (base fundamental, detunings, periods); instance seeds only jitter
//! around it. Rendering is a pure function of (recipe, instance seed).

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::attributes::{ClassDictionary, DictError, Sav, Split, NUM_ATTRIBUTES};
use crate::audio::{load_wav, AudioClip, AudioError, FrontEnd, MelSpectrogram, SAMPLE_RATE};
use crate::wav::write_wav;

pub const DEFAULT_SEEN_CLASSES: usize = 12;
pub const DEFAULT_UNSEEN_CLASSES: usize = 4;
pub const DEFAULT_PER_CLASS: usize = 40;
/// Hard ceiling on rendered clip length, seconds.
pub const MAX_CLIP_SECONDS: f64 = 1.2;

/// Peak amplitude after normalization; leaves headroom for quantization.
const PEAK: f64 = 0.5;
/// Partials whose class-level frequency exceeds this are dropped so that
/// instance jitter can never push a component past Nyquist.
const MAX_PARTIAL_HZ: f64 = 7600.0;
const SR: f64 = SAMPLE_RATE as f64;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("synthesis contract violation: {0}")]
    Contract(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Dict(#[from] DictError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pitch {
    High,
    Middle,
    Low,
}

impl Pitch {
    /// Fundamental band in Hz.
    fn band(self) -> (f64, f64) {
        match self {
            Pitch::High => (3000.0, 6000.0),
            Pitch::Middle => (800.0, 2500.0),
            Pitch::Low => (150.0, 600.0),
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Pitch::High => "high",
            Pitch::Middle => "mid",
            Pitch::Low => "low",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthClass {
    Long,
    Middle,
    Short,
}

impl LengthClass {
    /// Active-duration range in seconds. Kept strictly inside the class
    /// boundaries (long >= 0.8, middle in 0.3..0.8, short < 0.3).
    fn seconds(self) -> (f64, f64) {
        match self {
            LengthClass::Long => (0.85, 1.1),
            LengthClass::Middle => (0.35, 0.75),
            LengthClass::Short => (0.12, 0.25),
        }
    }

    fn tag(self) -> &'static str {
        match self {
            LengthClass::Long => "long",
            LengthClass::Middle => "mid",
            LengthClass::Short => "short",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Material {
    Wood,
    Metal,
    Plastic,
    Ceramic,
}

impl Material {
    fn tag(self) -> &'static str {
        match self {
            Material::Wood => "wood",
            Material::Metal => "metal",
            Material::Plastic => "plastic",
            Material::Ceramic => "ceramic",
        }
    }
}

/// A sound event class. The enums make the structural invariants
/// unrepresentable to violate: exactly one pitch, exactly one length, at
/// most one material. The attribute vector is derived, never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecipe {
    pub label: String,
    pub pitch: Pitch,
    pub length: LengthClass,
    pub material: Option<Material>,
    pub repeating: bool,
    pub noise_like: bool,
    pub falling: bool,
    pub collision: bool,
    pub many: bool,
    /// Class identity: fixes the fundamental, detunings, and periods that
    /// all instances of the class share.
    pub timbre_seed: u64,
}

impl EventRecipe {
    /// The 15-bit attribute vector in canonical order.
    pub fn sav(&self) -> Sav {
        let mut bits = [0u8; NUM_ATTRIBUTES];
        bits[match self.pitch {
            Pitch::High => 0,
            Pitch::Middle => 1,
            Pitch::Low => 2,
        }] = 1;
        bits[match self.length {
            LengthClass::Long => 3,
            LengthClass::Middle => 4,
            LengthClass::Short => 5,
        }] = 1;
        if let Some(material) = self.material {
            bits[match material {
                Material::Wood => 6,
                Material::Metal => 7,
                Material::Plastic => 8,
                Material::Ceramic => 9,
            }] = 1;
        }
        bits[10] = self.repeating as u8;
        bits[11] = self.noise_like as u8;
        bits[12] = self.falling as u8;
        bits[13] = self.collision as u8;
        bits[14] = self.many as u8;
        Sav::new(bits).expect("bits are binary by construction")
    }
}

/// Class-level acoustic identity, a pure function of the recipe.
///
/// Material cues are chosen to survive every pitch band and length class:
/// partial-ratio structure where bandwidth allows, and time-domain
/// texture (attack, decay, beating, tremolo, noise bed) where it does
/// not. Wood is clean fast-dying harmonics, metal rings and beats,
/// plastic carries a broadband bed, ceramic a sharp attack with a fast
/// tremolo shimmer.
struct Timbre {
    /// Fundamental for this clip, drawn from the pitch band per instance
    /// so a class exercises its whole band rather than one frequency.
    base_f0: f64,
    /// (frequency ratio, relative amplitude); filtered against
    /// [`MAX_PARTIAL_HZ`] at render time once the clip f0 is known.
    partials: Vec<(f64, f64)>,
    attack: f64,
    decay: f64,
    /// Broadband bed amplitude (plastic's damped noise floor).
    bed_amp: f64,
    /// Amplitude tremolo (rate Hz, depth in [0,1)); rate 0 disables.
    am: (f64, f64),
    /// Repetition period, seconds; independent of the length class so the
    /// repeating texture looks alike across durations.
    period: f64,
    /// First bounce interval, seconds; later intervals shrink
    /// geometrically at `bounce_ratio`.
    bounce_interval: f64,
    bounce_ratio: f64,
    bounce_amp_ratio: f64,
    /// Band for noise-like content, Hz.
    noise_band: (f64, f64),
}

/// Class-level timbre means, drawn from the timbre seed alone.
fn timbre_of(recipe: &EventRecipe) -> Timbre {
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.timbre_seed);
    let (lo, hi) = recipe.pitch.band();

    let mut am = (0.0, 0.0);
    let (partials, attack, decay, bed_amp): (Vec<(f64, f64)>, f64, f64, f64) = match recipe.material
    {
        None => (
            vec![(1.0, 1.0)],
            rng.gen_range(0.008..0.014),
            rng.gen_range(0.12..0.3),
            0.0,
        ),
        Some(Material::Wood) => (
            vec![(1.0, 1.0), (2.0, 0.55), (3.0, 0.3)],
            rng.gen_range(0.004..0.008),
            rng.gen_range(0.035..0.08),
            0.0,
        ),
        Some(Material::Metal) => (
            vec![
                (1.0, 1.0),
                // Twin partial a few cents off: slow beating that
                // marks metal even when the decay is hidden.
                (rng.gen_range(1.003..1.006), 0.8),
                (rng.gen_range(1.47..1.56), 0.75),
                (rng.gen_range(2.2..2.4), 0.55),
                (rng.gen_range(2.9..3.2), 0.4),
                (rng.gen_range(3.8..4.2), 0.25),
            ],
            rng.gen_range(0.006..0.01),
            rng.gen_range(0.35..0.8),
            0.0,
        ),
        Some(Material::Plastic) => (
            vec![(1.0, 1.0), (rng.gen_range(1.8..2.2), 0.4)],
            rng.gen_range(0.005..0.009),
            rng.gen_range(0.05..0.12),
            0.5,
        ),
        Some(Material::Ceramic) => {
            // Tremolo shimmer: a texture cue that needs no bandwidth,
            // so high-pitched ceramic stays identifiable after its
            // ratio partials fall past the clamp.
            am = (rng.gen_range(25.0..45.0), rng.gen_range(0.5..0.7));
            (
                vec![
                    (1.0, 0.9),
                    (rng.gen_range(2.65..2.9), 0.8),
                    (rng.gen_range(5.2..5.6), 0.5),
                ],
                rng.gen_range(0.0015..0.003),
                rng.gen_range(0.09..0.2),
                0.0,
            )
        }
    };

    Timbre {
        base_f0: (lo + hi) * 0.5,
        partials,
        attack,
        decay,
        bed_amp,
        am,
        period: rng.gen_range(0.12..0.3),
        bounce_interval: rng.gen_range(0.12..0.22),
        bounce_ratio: rng.gen_range(0.68..0.78),
        bounce_amp_ratio: rng.gen_range(0.7..0.8),
        noise_band: (lo, hi),
    }
}

/// Per-clip draw around the class means. The fundamental sweeps the whole
/// pitch band and every envelope parameter wiggles, so the class is a
/// distribution the attribute detectors must generalize over, not one
/// fingerprint they can memorize.
fn instance_timbre(recipe: &EventRecipe, class: &Timbre, rng: &mut ChaCha8Rng) -> Timbre {
    let (lo, hi) = recipe.pitch.band();
    // A noise burst shows its band only through the filter edges, so keep
    // its center away from the neighbouring bands and the skirt narrow;
    // otherwise adjacent pitch classes overlap and the bit is unlearnable.
    let (f_lo, f_hi, skirt) = if recipe.noise_like {
        (lo * 1.15, hi * 0.85, (0.80, 1.25))
    } else {
        (lo * 1.04, hi / 1.04, (0.72, 1.38))
    };
    let base_f0 = f_lo * (f_hi / f_lo).powf(rng.gen::<f64>());
    let am = (
        class.am.0 * rng.gen_range(0.85..1.15),
        (class.am.1 * rng.gen_range(0.85..1.15)).min(0.95),
    );
    Timbre {
        base_f0,
        partials: class.partials.clone(),
        attack: class.attack * rng.gen_range(0.75..1.3),
        decay: class.decay * rng.gen_range(0.78..1.28),
        bed_amp: class.bed_amp,
        am,
        period: class.period * rng.gen_range(0.85..1.15),
        bounce_interval: class.bounce_interval * rng.gen_range(0.85..1.15),
        bounce_ratio: class.bounce_ratio,
        bounce_amp_ratio: class.bounce_amp_ratio,
        noise_band: (
            (base_f0 * skirt.0).max(80.0),
            (base_f0 * skirt.1).min(MAX_PARTIAL_HZ),
        ),
    }
}

fn clip_rng(timbre_seed: u64, instance_seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&timbre_seed.to_le_bytes());
    key[8..16].copy_from_slice(&instance_seed.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[derive(Clone, Copy)]
struct Component {
    freq: f64,
    amp: f64,
}

fn tonal_components(timbre: &Timbre, f0: f64, rng: &mut ChaCha8Rng) -> Vec<Component> {
    let mut out: Vec<Component> = timbre
        .partials
        .iter()
        .filter(|&&(ratio, _)| f0 * ratio < MAX_PARTIAL_HZ)
        .map(|&(ratio, amp)| Component {
            freq: f0 * ratio,
            amp: amp * rng.gen_range(0.85..1.15),
        })
        .collect();
    if timbre.bed_amp > 0.0 {
        let (lo, hi) = ((f0 * 0.4).max(80.0), (f0 * 4.0).min(MAX_PARTIAL_HZ));
        for _ in 0..24 {
            out.push(Component {
                freq: rng.gen_range(lo..hi),
                amp: timbre.bed_amp * rng.gen_range(0.3..1.0) / 5.0,
            });
        }
    }
    out
}

fn noise_components(band: (f64, f64), rng: &mut ChaCha8Rng) -> Vec<Component> {
    const M: usize = 48;
    (0..M)
        .map(|_| Component {
            freq: rng.gen_range(band.0..band.1),
            amp: rng.gen_range(0.5..1.0) * 3.5 / (M as f64).sqrt(),
        })
        .collect()
}

/// Mix one enveloped burst of `components` into `out` at `start`. Each
/// component runs as a rotating phasor with a random initial phase, under
/// an attack-decay envelope, an optional amplitude tremolo, and a
/// raised-cosine tail that ends the burst at exactly zero. A collision
/// adds a broadband click at the onset.
#[allow(clippy::too_many_arguments)]
fn add_burst(
    out: &mut [f64],
    start: usize,
    len: usize,
    amp: f64,
    attack: f64,
    decay: f64,
    am: (f64, f64),
    components: &[Component],
    collision: bool,
    rng: &mut ChaCha8Rng,
) {
    if start >= out.len() {
        return;
    }
    let len = len.min(out.len() - start);
    if len == 0 {
        return;
    }
    let mut osc: Vec<(f64, f64, f64, f64, f64)> = components
        .iter()
        .map(|c| {
            let w = 2.0 * std::f64::consts::PI * c.freq / SR;
            let phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            (phase.cos(), phase.sin(), w.cos(), w.sin(), c.amp)
        })
        .collect();
    let attack = if collision { 0.0008 } else { attack };
    let attack_mul = (-1.0 / (SR * attack)).exp();
    let decay_mul = (-1.0 / (SR * decay)).exp();
    // Tremolo runs as one more phasor; factor stays in [1-depth, 1].
    let (am_rate, am_depth) = am;
    let am_w = 2.0 * std::f64::consts::PI * am_rate / SR;
    let (am_cw, am_sw) = (am_w.cos(), am_w.sin());
    let am_phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
    let (mut am_re, mut am_im) = (am_phase.cos(), am_phase.sin());
    let fade = (len / 10).clamp(4, 192);
    let mut a = 1.0;
    let mut d = 1.0;
    for i in 0..len {
        let tail = len - 1 - i;
        let fade_w = if tail < fade {
            0.5 * (1.0 - (std::f64::consts::PI * (fade - tail) as f64 / fade as f64).cos())
        } else {
            1.0
        };
        let trem = 1.0 - am_depth * 0.5 * (1.0 + am_im);
        let env = (1.0 - a) * d * amp * fade_w * trem;
        let mut s = 0.0;
        for o in &mut osc {
            s += o.4 * o.1;
            let re = o.0 * o.2 - o.1 * o.3;
            let im = o.0 * o.3 + o.1 * o.2;
            o.0 = re;
            o.1 = im;
        }
        out[start + i] += env * s;
        let re = am_re * am_cw - am_im * am_sw;
        am_im = am_re * am_sw + am_im * am_cw;
        am_re = re;
        a *= attack_mul;
        d *= decay_mul;
    }
    if collision {
        let click_len = ((0.015 * SR) as usize).min(len);
        let click_mul = (-1.0 / (SR * 0.005)).exp();
        let mut c = amp;
        for i in 0..click_len {
            out[start + i] += c * rng.gen_range(-1.0..1.0);
            c *= click_mul;
        }
    }
}

/// One event body (no `many` handling): the situation flags decide between
/// a single sustained burst, a fixed-period train, or a bounce train with
/// geometrically shrinking intervals and amplitudes.
fn render_core(
    recipe: &EventRecipe,
    timbre: &Timbre,
    duration: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n = (duration * SR).round() as usize;
    let mut out = vec![0.0; n.max(1)];
    let f0 = timbre.base_f0;
    let components = |rng: &mut ChaCha8Rng| {
        if recipe.noise_like {
            noise_components(timbre.noise_band, rng)
        } else {
            tonal_components(timbre, f0, rng)
        }
    };

    if recipe.falling {
        // Bounce intervals shrink geometrically from a start that grows
        // only with sqrt(duration): long and short falls stay locally
        // similar (mostly the bounce count differs) yet the train still
        // spans windows of every length class.
        // Floor keeps the loop guard satisfiable in tiny windows (a short
        // fall inside a `many` sub-event still gets its taps).
        let mut interval = (timbre.bounce_interval * (duration / 0.6).sqrt())
            .min(duration * 0.45)
            .max(0.022);
        let mut t = 0.0;
        let mut amp = 1.0;
        while t < duration * 0.96 && interval >= 0.02 {
            let burst_len = (interval * 0.9).clamp(0.015, 0.09);
            let comps = components(rng);
            add_burst(
                &mut out,
                (t * SR) as usize,
                (burst_len * SR) as usize,
                amp,
                timbre.attack,
                timbre.decay.min(burst_len * 0.6),
                timbre.am,
                &comps,
                recipe.collision,
                rng,
            );
            t += interval;
            interval *= timbre.bounce_ratio;
            amp *= timbre.bounce_amp_ratio;
        }
    } else if recipe.repeating {
        let bursts = ((duration / timbre.period).round() as usize).clamp(2, 8);
        let period = duration / bursts as f64;
        let burst_len = (period * 0.72 * SR) as usize;
        for k in 0..bursts {
            let comps = components(rng);
            add_burst(
                &mut out,
                (k as f64 * period * SR) as usize,
                burst_len,
                1.0,
                timbre.attack,
                timbre.decay.min(period * 0.5),
                timbre.am,
                &comps,
                recipe.collision,
                rng,
            );
        }
    } else if recipe.material.is_some() && timbre.decay * 4.0 < duration {
        // The material decays too fast to fill this window, so the event
        // becomes a dense roll of overlapping micro-strikes. The true
        // decay slope stays visible at micro scale in every length class,
        // and the roll rate (tied to the decay) is well above the gapped
        // repeating-train rates.
        let period = timbre.decay * 1.25;
        let burst_len = (period * 2.5 * SR) as usize;
        let mut t = 0.0;
        while t < duration - period {
            let comps = components(rng);
            add_burst(
                &mut out,
                (t * SR) as usize,
                burst_len,
                rng.gen_range(0.6..1.0),
                timbre.attack,
                timbre.decay,
                timbre.am,
                &comps,
                recipe.collision,
                rng,
            );
            t += period * rng.gen_range(0.95..1.05);
        }
    } else {
        // A lone burst must carry its length class, so the decay is not
        // allowed to gut the window; material still shows in the attack,
        // the partial structure, and the visible part of the decay slope.
        let comps = components(rng);
        add_burst(
            &mut out,
            0,
            n,
            1.0,
            timbre.attack,
            timbre.decay.max(0.35 * duration),
            timbre.am,
            &comps,
            recipe.collision,
            rng,
        );
    }
    out
}

/// Render one clip. Pure in (recipe, instance_seed): byte-identical on
/// repeat calls. Output is 16 kHz mono, peak-normalized to 0.5, never
/// longer than [`MAX_CLIP_SECONDS`].
pub fn render(recipe: &EventRecipe, instance_seed: u64) -> Result<AudioClip, SynthError> {
    let class_timbre = timbre_of(recipe);
    let mut rng = clip_rng(recipe.timbre_seed, instance_seed);
    let timbre = instance_timbre(recipe, &class_timbre, &mut rng);
    let (lo, hi) = recipe.length.seconds();
    let duration = rng.gen_range(lo..hi);

    let mut samples = if recipe.many {
        // Superposition of independent sub-events of the same class, each
        // fully inside the window. Sub-events stay well shorter than the
        // window so their staggered onsets remain countable.
        let n = (duration * SR).round() as usize;
        let mut out = vec![0.0; n];
        let events = rng.gen_range(3..=5);
        for _ in 0..events {
            let sub_duration = duration * rng.gen_range(0.25..0.55);
            let sub = render_core(recipe, &timbre, sub_duration, &mut rng);
            let start = rng.gen_range(0..=n.saturating_sub(sub.len()));
            for (o, s) in out[start..start + sub.len()].iter_mut().zip(&sub) {
                *o += s;
            }
        }
        out
    } else {
        render_core(recipe, &timbre, duration, &mut rng)
    };

    let peak = samples.iter().fold(0.0_f64, |m, &s| m.max(s.abs()));
    if peak <= 0.0 {
        return Err(SynthError::Contract(format!(
            "recipe `{}` rendered silence",
            recipe.label
        )));
    }
    let scale = PEAK / peak;
    for s in &mut samples {
        *s *= scale;
    }
    debug_assert!(samples.len() as f64 <= MAX_CLIP_SECONDS * SR);
    Ok(AudioClip::new(samples, SAMPLE_RATE)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSplit {
    Train,
    Test,
}

impl SampleSplit {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SampleSplit::Train),
            "test" => Some(SampleSplit::Test),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SampleSplit::Train => "train",
            SampleSplit::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    /// WAV path relative to the manifest's directory.
    pub path: String,
    pub label: String,
    pub split: SampleSplit,
}

/// The corpus index: which file carries which class in which split.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusManifest {
    pub rows: Vec<ManifestRow>,
}

impl CorpusManifest {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("path,label,split\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{}\n",
                row.path,
                row.label,
                row.split.as_str()
            ));
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self, SynthError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "path,label,split")) => {}
            _ => {
                return Err(SynthError::Manifest(
                    "missing `path,label,split` header".into(),
                ))
            }
        }
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(SynthError::Manifest(format!(
                    "line {line_no}: expected 3 fields, got {}",
                    fields.len()
                )));
            }
            let split = SampleSplit::parse(fields[2]).ok_or_else(|| {
                SynthError::Manifest(format!(
                    "line {line_no}: unknown split `{}` (expected train|test)",
                    fields[2]
                ))
            })?;
            if fields[0].is_empty() {
                return Err(SynthError::Manifest(format!("line {line_no}: empty path")));
            }
            rows.push(ManifestRow {
                path: fields[0].to_string(),
                label: fields[1].to_string(),
                split,
            });
        }
        Ok(CorpusManifest { rows })
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SynthError> {
        Ok(std::fs::write(path, self.to_csv_string())?)
    }

    /// Every label must exist in the dictionary, and train rows must not
    /// touch unseen classes (zero-shot discipline).
    pub fn validate(&self, dict: &ClassDictionary) -> Result<(), SynthError> {
        for row in &self.rows {
            match dict.get(&row.label) {
                None => {
                    return Err(SynthError::Manifest(format!(
                        "label `{}` is not in the dictionary",
                        row.label
                    )))
                }
                Some((_, Split::Unseen)) if row.split == SampleSplit::Train => {
                    return Err(SynthError::Manifest(format!(
                        "train row references unseen class `{}`",
                        row.label
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    pub fn rows_for(&self, split: SampleSplit) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }
}

/// Load one split as (mel spectrogram, label) pairs, reading WAVs relative
/// to `base`.
pub fn load_dataset(
    base: &Path,
    manifest: &CorpusManifest,
    split: SampleSplit,
    front: &FrontEnd,
) -> Result<Vec<(MelSpectrogram, String)>, SynthError> {
    let rows: Vec<&ManifestRow> = manifest.rows_for(split).collect();
    rows.par_iter()
        .map(|row| {
            let clip = load_wav(&base.join(&row.path))?;
            let spec = front.process(&clip, &row.path)?;
            Ok((spec, row.label.clone()))
        })
        .collect()
}

fn hamming(a: &Sav, b: &Sav) -> usize {
    a.bits()
        .iter()
        .zip(b.bits())
        .filter(|(x, y)| x != y)
        .count()
}

fn balanced_pool<T: Copy>(options: &[T], n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut pool: Vec<T> = (0..n).map(|i| options[i % options.len()]).collect();
    pool.shuffle(rng);
    pool
}

struct Skeleton {
    pitch: Pitch,
    length: LengthClass,
    material: Option<Material>,
    flags: [bool; 5],
}

impl Skeleton {
    fn sav(&self) -> Sav {
        self.recipe("probe", 0).sav()
    }

    fn recipe(&self, label: &str, timbre_seed: u64) -> EventRecipe {
        EventRecipe {
            label: label.to_string(),
            pitch: self.pitch,
            length: self.length,
            material: self.material,
            repeating: self.flags[0],
            noise_like: self.flags[1],
            falling: self.flags[2],
            collision: self.flags[3],
            many: self.flags[4],
            timbre_seed,
        }
    }

    fn descriptor(&self) -> String {
        let mut s = format!("{}_{}", self.pitch.tag(), self.length.tag());
        if let Some(m) = self.material {
            s.push('_');
            s.push_str(m.tag());
        }
        for (on, tag) in self
            .flags
            .iter()
            .zip(["rep", "noise", "fall", "coll", "many"])
        {
            if *on {
                s.push('_');
                s.push_str(tag);
            }
        }
        s
    }
}

const RESAMPLE_LIMIT: usize = 200_000;

const MATERIAL_OPTIONS: [Material; 4] = [
    Material::Wood,
    Material::Metal,
    Material::Plastic,
    Material::Ceramic,
];

/// Seen classes get balanced pitch/length/material assignments (so every
/// primitive is trained on) and each situation flag lands on a few random
/// classes. Resampled until all attribute vectors are pairwise distinct.
fn sample_seen_skeletons(n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Skeleton>, SynthError> {
    let pitches = [Pitch::High, Pitch::Middle, Pitch::Low];
    let lengths = [LengthClass::Long, LengthClass::Middle, LengthClass::Short];
    let materials = [
        Some(Material::Wood),
        Some(Material::Metal),
        Some(Material::Plastic),
        Some(Material::Ceramic),
        None,
    ];
    for _ in 0..RESAMPLE_LIMIT {
        let p = balanced_pool(&pitches, n, rng);
        let l = balanced_pool(&lengths, n, rng);
        let mut flags = vec![[false; 5]; n];
        // Each flag lands on a third of the seen classes so it is
        // observed across varied pitch/length/material contexts.
        let per_flag = (n / 3).max(2).min(n);
        #[allow(clippy::needless_range_loop)]
        for f in 0..5 {
            for i in rand::seq::index::sample(rng, n, per_flag) {
                flags[i][f] = true;
            }
        }
        // Noise replaces the tonal body, so a material bit on a
        // noise-like class would promise an inaudible cue; materials are
        // balanced over the remaining slots.
        let open: Vec<usize> = (0..n).filter(|&i| !flags[i][1]).collect();
        let mut m: Vec<Option<Material>> = vec![None; n];
        for (&slot, mat) in open.iter().zip(balanced_pool(&materials, open.len(), rng)) {
            m[slot] = mat;
        }
        let skeletons: Vec<Skeleton> = (0..n)
            .map(|i| Skeleton {
                pitch: p[i],
                length: l[i],
                material: m[i],
                flags: flags[i],
            })
            .collect();
        let savs: Vec<Sav> = skeletons.iter().map(|s| s.sav()).collect();
        let distinct = savs
            .iter()
            .enumerate()
            .all(|(i, a)| savs[..i].iter().all(|b| a != b));
        // At realistic sizes, every material that occurs must also occur
        // in sustained non-short form, so its held texture (ring or
        // micro-roll) is part of the training evidence.
        let covered = n < 8
            || MATERIAL_OPTIONS.iter().all(|&mm| {
                !skeletons.iter().any(|s| s.material == Some(mm))
                    || skeletons.iter().any(|s| {
                        s.material == Some(mm)
                            && !s.flags[0]
                            && !s.flags[2]
                            && s.length != LengthClass::Short
                    })
            });
        // Each flag's carriers must spread over pitches and lengths,
        // otherwise the flag gets bound to whatever pitch/length it
        // happened to co-occur with and the binding breaks zero-shot
        // transfer.
        let need = per_flag.min(3);
        let spread = n < 8
            || (0..5).all(|f| {
                let carriers: Vec<&Skeleton> = skeletons.iter().filter(|s| s.flags[f]).collect();
                let pitches_hit = [Pitch::High, Pitch::Middle, Pitch::Low]
                    .iter()
                    .filter(|&&v| carriers.iter().any(|s| s.pitch == v))
                    .count();
                let lengths_hit = [LengthClass::Long, LengthClass::Middle, LengthClass::Short]
                    .iter()
                    .filter(|&&v| carriers.iter().any(|s| s.length == v))
                    .count();
                pitches_hit >= need && lengths_hit >= need
            });
        if distinct && covered && spread {
            return Ok(skeletons);
        }
    }
    Err(SynthError::Contract(
        "could not sample distinct seen-class attribute vectors".into(),
    ))
}

/// Unseen classes are fresh draws restricted to primitives the seen set
/// exercises (an attribute with no training evidence cannot transfer),
/// kept distinct from every existing vector and at Hamming distance >= 2
/// from each other so no pair differs in a single attribute.
fn sample_unseen_skeletons(
    n: usize,
    taken: &[Sav],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Skeleton>, SynthError> {
    let bit_present = |k: usize| taken.iter().any(|s| s.bits()[k] == 1);
    let pitches: Vec<Pitch> = [Pitch::High, Pitch::Middle, Pitch::Low]
        .into_iter()
        .enumerate()
        .filter(|&(i, _)| bit_present(i))
        .map(|(_, p)| p)
        .collect();
    let lengths: Vec<LengthClass> = [LengthClass::Long, LengthClass::Middle, LengthClass::Short]
        .into_iter()
        .enumerate()
        .filter(|&(i, _)| bit_present(3 + i))
        .map(|(_, l)| l)
        .collect();
    let mut materials: Vec<Option<Material>> = MATERIAL_OPTIONS
        .into_iter()
        .enumerate()
        .filter(|&(i, _)| bit_present(6 + i))
        .map(|(_, m)| Some(m))
        .collect();
    materials.push(None);
    let flag_present: Vec<bool> = (10..15).map(bit_present).collect();
    let mut out: Vec<Skeleton> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut ok = false;
        for _ in 0..RESAMPLE_LIMIT {
            let mut flags = [false; 5];
            for (f, present) in flags.iter_mut().zip(&flag_present) {
                *f = *present && rng.gen_bool(0.25);
            }
            let candidate = Skeleton {
                pitch: *pitches.choose(rng).unwrap(),
                length: *lengths.choose(rng).unwrap(),
                material: if flags[1] {
                    None
                } else {
                    *materials.choose(rng).unwrap()
                },
                flags,
            };
            let sav = candidate.sav();
            let fresh =
                taken.iter().all(|t| *t != sav) && out.iter().all(|s| hamming(&s.sav(), &sav) >= 2);
            if fresh {
                out.push(candidate);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(SynthError::Contract(
                "could not sample distinct unseen-class attribute vectors".into(),
            ));
        }
    }
    Ok(out)
}

/// Build the full corpus under `out_dir`: WAVs in `wav/`, `manifest.csv`,
/// and `dictionary.csv`. 75% of each seen class trains; the rest and all
/// unseen clips test. Deterministic in `seed`, independent of thread
/// count.
pub fn generate_corpus(
    out_dir: &Path,
    n_seen: usize,
    n_unseen: usize,
    per_class: usize,
    seed: u64,
) -> Result<(CorpusManifest, ClassDictionary), SynthError> {
    if n_seen == 0 || per_class == 0 {
        return Err(SynthError::Contract(
            "need at least one seen class and one clip per class".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seen = sample_seen_skeletons(n_seen, &mut rng)?;
    let seen_savs: Vec<Sav> = seen.iter().map(|s| s.sav()).collect();
    let unseen = sample_unseen_skeletons(n_unseen, &seen_savs, &mut rng)?;

    let mut dict = ClassDictionary::new();
    let mut recipes: Vec<(EventRecipe, Split)> = Vec::with_capacity(n_seen + n_unseen);
    for (i, sk) in seen.iter().enumerate() {
        let label = format!("seen{i:02}_{}", sk.descriptor());
        let recipe = sk.recipe(&label, rng.gen());
        dict.insert(&label, recipe.sav(), Split::Seen)?;
        recipes.push((recipe, Split::Seen));
    }
    for (i, sk) in unseen.iter().enumerate() {
        let label = format!("unseen{i:02}_{}", sk.descriptor());
        let recipe = sk.recipe(&label, rng.gen());
        dict.insert(&label, recipe.sav(), Split::Unseen)?;
        recipes.push((recipe, Split::Unseen));
    }

    let n_train = per_class * 3 / 4;
    let mut rows = Vec::with_capacity(recipes.len() * per_class);
    let mut jobs = Vec::with_capacity(recipes.len() * per_class);
    for (recipe, split) in &recipes {
        for i in 0..per_class {
            let path = format!("wav/{}_{i:02}.wav", recipe.label);
            let sample_split = if *split == Split::Seen && i < n_train {
                SampleSplit::Train
            } else {
                SampleSplit::Test
            };
            rows.push(ManifestRow {
                path: path.clone(),
                label: recipe.label.clone(),
                split: sample_split,
            });
            jobs.push((recipe, rng.gen::<u64>(), path));
        }
    }

    std::fs::create_dir_all(out_dir.join("wav"))?;
    jobs.par_iter()
        .try_for_each(|(recipe, instance_seed, path)| -> Result<(), SynthError> {
            let clip = render(recipe, *instance_seed)?;
            write_wav(&out_dir.join(path), clip.samples(), SAMPLE_RATE)?;
            Ok(())
        })?;

    let manifest = CorpusManifest { rows };
    manifest.save(&out_dir.join("manifest.csv"))?;
    dict.save(&out_dir.join("dictionary.csv"))?;
    Ok((manifest, dict))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::num_complex::Complex;
    use rustfft::FftPlanner;

    fn recipe(
        pitch: Pitch,
        length: LengthClass,
        material: Option<Material>,
        flags: [bool; 5],
        timbre_seed: u64,
    ) -> EventRecipe {
        EventRecipe {
            label: "test".into(),
            pitch,
            length,
            material,
            repeating: flags[0],
            noise_like: flags[1],
            falling: flags[2],
            collision: flags[3],
            many: flags[4],
            timbre_seed,
        }
    }

    #[test]
    fn sav_sets_expected_bits() {
        let r = recipe(
            Pitch::High,
            LengthClass::Short,
            Some(Material::Metal),
            [false, false, false, true, false],
            1,
        );
        let bits = *r.sav().bits();
        let mut expected = [0u8; NUM_ATTRIBUTES];
        expected[0] = 1;
        expected[5] = 1;
        expected[7] = 1;
        expected[13] = 1;
        assert_eq!(bits, expected);

        let plain = recipe(Pitch::Low, LengthClass::Long, None, [false; 5], 1);
        assert_eq!(plain.sav().bits().iter().sum::<u8>(), 2);
        assert_eq!(plain.sav().bit(2), 1);
        assert_eq!(plain.sav().bit(3), 1);
    }

    #[test]
    fn render_is_deterministic() {
        let r = recipe(
            Pitch::Middle,
            LengthClass::Middle,
            Some(Material::Wood),
            [true, false, false, false, false],
            42,
        );
        let a = render(&r, 7).unwrap();
        let b = render(&r, 7).unwrap();
        assert_eq!(a.samples(), b.samples());
        let c = render(&r, 8).unwrap();
        assert_ne!(a.samples(), c.samples());
    }

    #[test]
    fn renders_are_normalized_and_bounded() {
        let mut seed = 0;
        for pitch in [Pitch::High, Pitch::Middle, Pitch::Low] {
            for length in [LengthClass::Long, LengthClass::Middle, LengthClass::Short] {
                for flags in [
                    [false; 5],
                    [true, false, false, true, false],
                    [false, true, true, false, true],
                ] {
                    seed += 1;
                    let r = recipe(pitch, length, Some(Material::Metal), flags, seed);
                    let clip = render(&r, seed).unwrap();
                    let peak = clip.samples().iter().fold(0.0_f64, |m, &s| m.max(s.abs()));
                    assert!((peak - PEAK).abs() < 1e-9, "peak {peak}");
                    assert!(clip.samples().len() as f64 <= MAX_CLIP_SECONDS * SR);
                }
            }
        }
    }

    fn power_spectrum(samples: &[f64]) -> Vec<f64> {
        let n = 16384;
        let mut buf: Vec<Complex<f64>> = samples
            .iter()
            .map(|&s| Complex::new(s, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(n)
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        buf[..n / 2].iter().map(|c| c.norm_sqr()).collect()
    }

    fn centroid_hz(samples: &[f64]) -> f64 {
        let spectrum = power_spectrum(samples);
        let df = SR / 16384.0;
        let total: f64 = spectrum.iter().sum();
        let weighted: f64 = spectrum
            .iter()
            .enumerate()
            .map(|(i, p)| i as f64 * df * p)
            .sum();
        weighted / total
    }

    #[test]
    fn low_pitch_has_lower_spectral_centroid_than_high() {
        for seed in 0..10u64 {
            let material = match seed % 5 {
                0 => None,
                1 => Some(Material::Wood),
                2 => Some(Material::Metal),
                3 => Some(Material::Plastic),
                _ => Some(Material::Ceramic),
            };
            let flags = [seed % 2 == 0, seed % 3 == 0, false, seed % 4 == 0, false];
            let low = recipe(Pitch::Low, LengthClass::Middle, material, flags, seed);
            let high = recipe(Pitch::High, LengthClass::Middle, material, flags, seed);
            let cl = centroid_hz(render(&low, seed).unwrap().samples());
            let ch = centroid_hz(render(&high, seed).unwrap().samples());
            assert!(cl < ch, "seed {seed}: low centroid {cl} vs high {ch}");
        }
    }

    #[test]
    fn short_renders_have_no_energy_past_300ms() {
        for seed in 0..8u64 {
            let flags = [
                seed % 2 == 0,
                false,
                seed % 3 == 0,
                seed % 4 == 0,
                seed % 5 == 0,
            ];
            let r = recipe(
                Pitch::Middle,
                LengthClass::Short,
                Some(Material::Ceramic),
                flags,
                seed,
            );
            let clip = render(&r, seed + 100).unwrap();
            let cut = (0.3 * SR) as usize;
            let total: f64 = clip.samples().iter().map(|s| s * s).sum();
            let tail: f64 = clip.samples().iter().skip(cut).map(|s| s * s).sum();
            assert!(
                tail < 0.01 * total,
                "seed {seed}: tail energy {tail} of {total}"
            );
        }
    }

    #[test]
    fn long_renders_fill_their_window() {
        for seed in 0..6u64 {
            let r = recipe(
                Pitch::Low,
                LengthClass::Long,
                Some(Material::Wood),
                [false; 5],
                seed,
            );
            let clip = render(&r, seed).unwrap();
            assert!(clip.samples().len() as f64 >= 0.8 * SR);
            // Sustained single events keep energy in the back half too.
            let half = clip.samples().len() / 2;
            let back: f64 = clip.samples()[half..].iter().map(|s| s * s).sum();
            let total: f64 = clip.samples().iter().map(|s| s * s).sum();
            assert!(
                back > 0.05 * total,
                "seed {seed}: back half starved ({back} of {total})"
            );
        }
    }

    #[test]
    fn high_band_energy_stump_separates_pitch_classes() {
        // Depth-1 decision stump on the fraction of spectral power above
        // 2 kHz must separate high from low renders almost perfectly.
        let mut scored: Vec<(f64, bool)> = Vec::new();
        for seed in 0..20u64 {
            let material = match seed % 5 {
                0 => None,
                1 => Some(Material::Wood),
                2 => Some(Material::Metal),
                3 => Some(Material::Plastic),
                _ => Some(Material::Ceramic),
            };
            let flags = [seed % 2 == 0, seed % 3 == 0, seed % 7 == 0, false, false];
            for (pitch, is_high) in [(Pitch::High, true), (Pitch::Low, false)] {
                let r = recipe(pitch, LengthClass::Middle, material, flags, seed * 2 + 1);
                let clip = render(&r, seed).unwrap();
                let spectrum = power_spectrum(clip.samples());
                let df = SR / 16384.0;
                let cut = (2000.0 / df) as usize;
                let total: f64 = spectrum.iter().sum();
                let high_band: f64 = spectrum[cut..].iter().sum();
                scored.push((high_band / total, is_high));
            }
        }
        let mut best = 0;
        for &(threshold, _) in &scored {
            let correct = scored
                .iter()
                .filter(|(v, is_high)| (*v >= threshold) == *is_high)
                .count();
            best = best.max(correct);
        }
        let accuracy = best as f64 / scored.len() as f64;
        assert!(accuracy >= 0.95, "stump accuracy {accuracy}");
    }

    #[test]
    fn manifest_round_trips_and_validates() {
        let manifest = CorpusManifest {
            rows: vec![
                ManifestRow {
                    path: "wav/a_00.wav".into(),
                    label: "a".into(),
                    split: SampleSplit::Train,
                },
                ManifestRow {
                    path: "wav/b_00.wav".into(),
                    label: "b".into(),
                    split: SampleSplit::Test,
                },
            ],
        };
        let parsed = CorpusManifest::from_csv_str(&manifest.to_csv_string()).unwrap();
        assert_eq!(parsed, manifest);

        let mut dict = ClassDictionary::new();
        dict.insert(
            "a",
            Sav::new([1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]).unwrap(),
            Split::Seen,
        )
        .unwrap();
        dict.insert(
            "b",
            Sav::new([0, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]).unwrap(),
            Split::Unseen,
        )
        .unwrap();
        manifest.validate(&dict).unwrap();

        let bad = CorpusManifest {
            rows: vec![ManifestRow {
                path: "wav/b_01.wav".into(),
                label: "b".into(),
                split: SampleSplit::Train,
            }],
        };
        let err = bad.validate(&dict).unwrap_err();
        assert!(err.to_string().contains("unseen class `b`"));

        assert!(CorpusManifest::from_csv_str("nope\n").is_err());
        assert!(CorpusManifest::from_csv_str("path,label,split\nx,y\n").is_err());
        assert!(CorpusManifest::from_csv_str("path,label,split\nx,y,weird\n").is_err());
    }

    #[test]
    fn small_corpus_has_expected_structure() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, dict) = generate_corpus(dir.path(), 4, 2, 8, 3).unwrap();
        assert_eq!(dict.len(), 6);
        assert_eq!(manifest.rows.len(), 6 * 8);
        manifest.validate(&dict).unwrap();
        let train: Vec<_> = manifest.rows_for(SampleSplit::Train).collect();
        let test: Vec<_> = manifest.rows_for(SampleSplit::Test).collect();
        assert_eq!(train.len(), 4 * 6);
        assert_eq!(test.len(), 4 * 2 + 2 * 8);
        for row in train {
            assert_eq!(dict.get(&row.label).unwrap().1, Split::Seen);
        }
        for row in &manifest.rows {
            assert!(dir.path().join(&row.path).is_file(), "missing {}", row.path);
        }
        // All class vectors distinct, unseen ones with margin.
        assert!(dict.duplicate_sav_groups().is_empty());
        let unseen: Vec<Sav> = dict
            .labels(Split::Unseen)
            .iter()
            .map(|l| dict.get(l).unwrap().0)
            .collect();
        for i in 0..unseen.len() {
            for j in 0..i {
                assert!(hamming(&unseen[i], &unseen[j]) >= 2);
            }
        }
    }

    #[test]
    fn same_seed_reproduces_corpus_byte_for_byte() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_corpus(a.path(), 3, 2, 4, 11).unwrap();
        generate_corpus(b.path(), 3, 2, 4, 11).unwrap();
        let manifest_a = std::fs::read(a.path().join("manifest.csv")).unwrap();
        let manifest_b = std::fs::read(b.path().join("manifest.csv")).unwrap();
        assert_eq!(manifest_a, manifest_b);
        let dict_a = std::fs::read(a.path().join("dictionary.csv")).unwrap();
        let dict_b = std::fs::read(b.path().join("dictionary.csv")).unwrap();
        assert_eq!(dict_a, dict_b);
        let manifest =
            CorpusManifest::from_csv_str(std::str::from_utf8(&manifest_a).unwrap()).unwrap();
        for row in &manifest.rows {
            let wav_a = std::fs::read(a.path().join(&row.path)).unwrap();
            let wav_b = std::fs::read(b.path().join(&row.path)).unwrap();
            assert_eq!(wav_a, wav_b, "wav differs: {}", row.path);
        }
        let c = tempfile::tempdir().unwrap();
        generate_corpus(c.path(), 3, 2, 4, 12).unwrap();
        let manifest_c = std::fs::read(c.path().join("manifest.csv")).unwrap();
        assert_ne!(manifest_a, manifest_c);
    }

    #[test]
    fn dataset_loads_back_as_features() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, dict) = generate_corpus(dir.path(), 2, 1, 4, 5).unwrap();
        let front = FrontEnd::new().unwrap();
        let train = load_dataset(dir.path(), &manifest, SampleSplit::Train, &front).unwrap();
        assert_eq!(train.len(), 2 * 3);
        for (spec, label) in &train {
            assert!(dict.get(label).is_some());
            assert_eq!(
                spec.values().dims(),
                [1, crate::audio::N_MELS, crate::audio::N_FRAMES]
            );
        }
    }
}
