//! Fixture builders shared by the criterion benches. Everything is
//! deterministic so runs compare like with like.

use savnet_core::{
    render, ClassDictionary, EncoderConfig, EventRecipe, FrontEnd, LengthClass, Material,
    MelSpectrogram, ModelConfig, Pitch, Split,
};

/// A one-second mid-band metallic ring: a representative load for the
/// frontend and the model (dense partials, long envelope).
pub fn demo_recipe() -> EventRecipe {
    EventRecipe {
        label: "bench_ring".into(),
        pitch: Pitch::Middle,
        length: LengthClass::Long,
        material: Some(Material::Metal),
        repeating: false,
        noise_like: false,
        falling: false,
        collision: false,
        many: false,
        timbre_seed: 7,
    }
}

/// A short wooden tap, the cheap end of the render spectrum.
pub fn tap_recipe() -> EventRecipe {
    EventRecipe {
        label: "bench_tap".into(),
        pitch: Pitch::Low,
        length: LengthClass::Short,
        material: Some(Material::Wood),
        repeating: false,
        noise_like: false,
        falling: false,
        collision: true,
        many: false,
        timbre_seed: 11,
    }
}

pub fn demo_spec() -> MelSpectrogram {
    let clip = render(&demo_recipe(), 0).expect("render");
    FrontEnd::new()
        .expect("frontend")
        .process(&clip, "bench_ring")
        .expect("mel")
}

/// The desk-scale encoder used across the benches.
pub fn small_model() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            blocks: vec![(8, 1), (16, 1), (32, 1)],
        },
        basemod_hidden: 64,
    }
}

/// Two classes with distinct vectors, enough to drive the losses.
pub fn bench_dict() -> ClassDictionary {
    let mut dict = ClassDictionary::new();
    dict.insert("bench_ring", demo_recipe().sav(), Split::Seen)
        .expect("insert");
    dict.insert("bench_tap", tap_recipe().sav(), Split::Seen)
        .expect("insert");
    dict
}

/// `n` clips alternating between the two bench classes.
pub fn bench_dataset(n: usize) -> Vec<(MelSpectrogram, String)> {
    let front = FrontEnd::new().expect("frontend");
    (0..n)
        .map(|i| {
            let recipe = if i % 2 == 0 {
                demo_recipe()
            } else {
                tap_recipe()
            };
            let clip = render(&recipe, i as u64).expect("render");
            let spec = front.process(&clip, &recipe.label).expect("mel");
            (spec, recipe.label)
        })
        .collect()
}
