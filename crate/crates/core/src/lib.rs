//! Sustained-phonation analysis: audio conditioning, pitch and pulse
//! tracking, phonatory and modulation power spectrum features, group
//! statistics, ElasticNet models with a repeated learning-testing harness,
//! and a synthetic vowel generator used as a verification oracle.

pub mod audio;
pub mod dataset;
pub mod error;
pub mod matrix;
pub mod mfcc;
pub mod ml;
pub mod mps;
pub mod nonlinear;
pub mod phonatory;
pub mod pitch;
pub mod stats;
pub mod synth;

mod par;

pub use audio::{load_wav, resample, AudioClip};
pub use dataset::{FeatureSet, FeatureTable, Group, ManifestRow, SubjectRecord, Target};
pub use error::{Error, Result};
pub use mps::MpsMatrix;
pub use phonatory::{extract_all, ExtractionConfig, Feature, PhonatoryFeatures};
pub use pitch::{PitchConfig, PitchTrack, PulseSequence, VoicedSegment};
pub use synth::{synth_vowel, CohortSpec, SynthParams};
