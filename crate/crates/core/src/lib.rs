//! Few-shot sound recognition engine.
//!
//! The pipeline runs from raw WAV bytes to a verdict:
//! [`audio`] canonicalizes and segments audio, [`dsp`] turns each
//! one-second segment into a normalized 100×64 log-mel patch, [`nn`] embeds
//! patches with a small CNN, and [`fewshot`] builds per-location class
//! prototypes (with soundscape augmentation) and classifies queries with an
//! open-set distance-ratio test and a loudness gate. [`eval`] provides
//! synthetic corpora, episodic N-way K-shot evaluation and statistics.

pub mod audio;
pub mod container;
pub mod dsp;
pub mod eval;
pub mod fewshot;
pub mod nn;
pub mod sampling;

pub use audio::{AudioClip, AudioError, Segment};
pub use dsp::{FeatureExtractor, LogMelPatch, MelFilterbank};
pub use fewshot::{LocationModel, QueryDecision, SupportSet, Verdict};
pub use nn::{ClassifierHead, EmbedderConfig, EmbedderModel};
