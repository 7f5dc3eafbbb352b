//! Zero-shot sound event classification over a shared attribute space.
//!
//! Sound classes are described by 15 binary attributes (pitch, length,
//! material, and situation descriptors). A small convolutional encoder
//! feeds two heads trained jointly: a global head scoring each attribute
//! from pooled features, and a local head scoring attributes through
//! spatial similarity against learned per-attribute prototypes. Classes
//! never enter the model; at inference a clip is assigned to whichever
//! candidate class's attribute vector sits nearest the predicted
//! attribute probabilities, which is what lets training classes and test
//! classes be disjoint.
//!
//! The crate is self-contained: audio I/O and the log-mel frontend
//! ([`audio`]), a reverse-mode tape over dense tensors ([`tape`],
//! [`tensor`]), the model ([`model`]), its losses ([`loss`]) and training
//! loop ([`train`]), checkpoints ([`checkpoint`]), evaluation protocols
//! ([`eval`]), similarity-map export ([`viz`]), and an
//! attribute-controlled synthetic corpus generator ([`synth`]) that makes
//! the whole pipeline reproducible without external data.
//!
//! Everything is deterministic: a (config, seed) pair fixes training
//! bit-for-bit regardless of thread count, and the generator fixes the
//! corpus the same way.

pub mod attributes;
pub mod audio;
pub mod checkpoint;
pub mod eval;
pub mod loss;
pub mod model;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod viz;
pub mod wav;

pub use attributes::{
    ClassDictionary, DictError, Sav, Split, Task, ATTRIBUTE_NAMES, NUM_ATTRIBUTES,
};
pub use audio::{AudioClip, AudioError, FrontEnd, MelSpectrogram};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use eval::{attribute_metrics, classify, evaluate, AttributeMetrics, EvalError, EvalReport};
pub use loss::{LossConfig, LossError, LossMode};
pub use model::{
    infer, init_params, EncoderConfig, Inference, ModelConfig, ModelError, ModelParams,
};
pub use synth::{
    generate_corpus, render, CorpusManifest, EventRecipe, LengthClass, Material, Pitch,
    SampleSplit, SynthError,
};
pub use tape::{Activation, GradientTape, Gradients, NodeId, Padding};
pub use tensor::{Tensor, TensorError};
pub use train::{train, OptimizerKind, TrainConfig, TrainError, TrainResult};
pub use viz::{export_similarity_maps, MapInfo, VizError};
