//! Two-level hierarchical HMM for streaming activity segmentation.
//!
//! Under the root sit a begin detector, an ongoing classifier and an end
//! detector. The detectors are fixed-lag chains over the last β symbols and
//! fire on a log-likelihood ratio; the classifier is a bank of per-class
//! HMMs filtered in parallel, whose argmax is the current estimate.

mod chain;
mod engine;
mod fit;
pub mod theta;
mod trace;
mod sweep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{ClassRegistry, EventsError, ObservationAlphabet};
use crate::hmm::{HmmError, HmmParams};

pub use chain::ChainScorer;
pub use engine::{run_many, run_outputs, run_stream, EngineOutput, EngineState, Mode, OngoingEstimate, Segment, TraceRow};
pub use fit::fit_hhmm;
pub use sweep::{boundary_f1, match_boundaries, match_spans, sweep_beta, BetaSweep, BetaSweepRow};
pub use theta::HhmmTheta;
pub use trace::likelihood_trace;

/// Candidate margins searched when fitting with [`Margins::Auto`].
pub const MARGIN_GRID: [f64; 12] = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 12.0];

/// Margins used when the held-out slice is unusable.
pub const FALLBACK_MARGINS: (f64, f64) = (2.0, 2.0);

#[derive(Debug, Error)]
pub enum HhmmError {
    #[error("no activity class has a training episode of at least {min_len} events")]
    InsufficientTraining { min_len: usize },
    #[error("training symbol {sensor}={value} is not in the alphabet")]
    AlphabetMismatch { sensor: String, value: String },
    #[error("event {index} is earlier than the previous event")]
    NonMonotonicTimestamp { index: usize },
    #[error("segment has an empty trace")]
    EmptyTrace,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid parameter set: {0}")]
    InvalidTheta(String),
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error(transparent)]
    Events(#[from] EventsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Margins {
    /// Grid-searched on a held-out tail of the training stream.
    #[default]
    Auto,
    Fixed { begin: f64, end: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HhmmConfig {
    /// Window length of the begin and end detectors.
    pub beta: usize,
    /// Add-κ smoothing for every count table.
    pub kappa: f64,
    /// Hidden states per class body model.
    pub body_states: usize,
    pub margins: Margins,
    /// Fraction of the training stream held out for margin tuning.
    pub holdout: f64,
}

impl Default for HhmmConfig {
    fn default() -> Self {
        Self {
            beta: 3,
            kappa: 1.0,
            body_states: 3,
            margins: Margins::Auto,
            holdout: 0.2,
        }
    }
}

impl HhmmConfig {
    pub fn validate(&self) -> Result<(), HhmmError> {
        let bad = |m: &str| Err(HhmmError::InvalidConfig(m.into()));
        if self.beta < 2 {
            return bad("beta must be at least 2");
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad("kappa must be positive");
        }
        if self.body_states == 0 {
            return bad("body_states must be at least 1");
        }
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return bad("holdout must lie in (0, 1)");
        }
        if let Margins::Fixed { begin, end } = self.margins {
            if !begin.is_finite() || !end.is_finite() {
                return bad("margins must be finite");
            }
        }
        Ok(())
    }
}

/// Detectors and body model of one activity class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub name: String,
    pub episodes: usize,
    pub own_events: usize,
    /// Whether the class ever interrupts another in training.
    pub interrupts: bool,
    pub begin: ChainScorer,
    pub end: ChainScorer,
    /// Windows inside the class that do not close it.
    pub continuation: ChainScorer,
    pub body: HmmParams,
}

/// A fitted model. Immutable; share it between engines freely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HhmmModel {
    pub beta: usize,
    pub kappa: f64,
    pub body_states: usize,
    pub begin_margin: f64,
    pub end_margin: f64,
    pub alphabet: ObservationAlphabet,
    /// Surviving classes in id order, plus `Other`.
    pub registry: ClassRegistry,
    pub classes: Vec<ClassModel>,
    pub background: ChainScorer,
    /// Classes present in training but without a usable episode.
    pub dropped: Vec<String>,
    pub theta: HhmmTheta,
}

impl HhmmModel {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_name(&self, id: usize) -> &str {
        &self.classes[id].name
    }

    /// Best begin class for a window and its ratio against background.
    pub fn begin_llr(&self, w: &[usize]) -> (usize, f64) {
        let (c, s) = self.best_begin(w);
        (c, s - self.background.score(w))
    }

    pub(crate) fn best_begin(&self, w: &[usize]) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (c, m) in self.classes.iter().enumerate() {
            let s = m.begin.score(w);
            if s > best.1 {
                best = (c, s);
            }
        }
        best
    }

    pub fn with_margins(&self, begin: f64, end: f64) -> Self {
        let mut m = self.clone();
        m.begin_margin = begin;
        m.end_margin = end;
        m
    }
}
