pub mod audio;
pub mod jnd;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod pairgen;
pub mod scalar;
pub mod seed;
pub mod synth;
pub mod train;

pub use scalar::Scalar;

/// Concrete single- and double-precision instantiations.
pub type Clip32 = audio::AudioClip<f32>;
pub type Clip64 = audio::AudioClip<f64>;
pub type Corpus32 = audio::Corpus<f32>;
pub type Corpus64 = audio::Corpus<f64>;
pub type Params32 = model::ModelParams<f32>;
pub type Params64 = model::ModelParams<f64>;
pub type Checkpoint32 = train::Checkpoint<f32>;
pub type Checkpoint64 = train::Checkpoint<f64>;
