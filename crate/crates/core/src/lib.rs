//! Streaming activity recognition over binary smart-home sensor events.
//!
//! The engine segments a live event stream into activity episodes with a
//! two-level hierarchical HMM: a begin detector watches a short window of
//! events, a bank of per-class HMMs reports the ongoing activity after every
//! event, and an end detector closes the segment. Completed segments are then
//! relabelled by a per-class joint density over (time of day, duration).
//!
//! Modules:
//!
//! * [`events`]: sensor events, CASAS-style log parsing, the observation
//!   alphabet and a seeded synthetic home generator.
//! * [`hmm`]: discrete HMM core in log space (filtering, likelihood, Viterbi,
//!   supervised fitting).
//! * [`hhmm`]: the hierarchical model, its streaming engine and tuning sweeps.
//! * [`correction`]: duration × time-of-day density threshold.
//! * [`baselines`]: six sliding-window comparison classifiers.
//! * [`eval`]: segment matching, confusion matrices, F1 and cross-validation.
//! * [`model`]: the versioned JSON model document.

pub mod baselines;
pub mod correction;
pub mod eval;
pub mod events;
pub mod hhmm;
pub mod hmm;
pub mod logspace;
pub mod model;
pub mod par;
mod report;

pub use events::{
    ActivityClass, Annotation, ClassRegistry, Episode, LabeledStream, Marker, ObservationAlphabet,
    SensorEvent, Strictness, Symbol,
};

pub use hhmm::{EngineOutput, EngineState, HhmmConfig, HhmmModel, Segment};
pub use hmm::{FilterState, HmmParams};
