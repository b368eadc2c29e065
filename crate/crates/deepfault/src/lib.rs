//! Spectrum-based localization of suspicious neurons in dense feed-forward
//! classifiers, with guided synthesis of inputs that exercise them.
//!
//! The pipeline has three stages:
//!
//! 1. **Analysis** ([`spectrum`]): run a test set through a trained network
//!    and build a per-neuron hit spectrum counting (active, inactive) x
//!    (success, fail) outcomes.
//! 2. **Identification** ([`suspicious`]): score the spectra with Tarantula,
//!    Ochiai or D* and select the k most suspicious hidden neurons, with a
//!    random baseline for comparison.
//! 3. **Synthesis** ([`synthesis`]): perturb correctly classified inputs
//!    along the mean gradient of the suspicious neurons' activations, under
//!    an L-infinity distance bound and domain clamping.
//!
//! [`network`] provides inference with activation tracing and exact input
//! gradients, [`train`] a deterministic SGD trainer, [`evaluate`] run
//! metrics and significance tests, and [`model_io`]/[`idx`] persistence.

pub mod error;
pub mod evaluate;
pub mod idx;
pub mod model_io;
pub mod network;
pub mod spectrum;
pub mod suspicious;
pub mod synthesis;
pub mod train;

pub use error::{Error, Result};
pub use evaluate::{DistanceStats, Distances, EvalSummary};
pub use network::{ForwardTrace, LabeledInput, Matrix, Network, NeuronId};
pub use spectrum::{ClassFilter, HitSpectrum, SpectrumTable};
pub use suspicious::{Measure, RankedNeuron, SuspiciousnessReport};
pub use synthesis::{BatchOutcome, SynthesisConfig, SynthesisResult};
pub use train::TrainConfig;
