//! Six sliding-window comparison classifiers.
//!
//! All six share the feature scaffold of [`windows::features`] and the
//! [`CountClassifier`]; they differ only in how a window is cut and
//! weighted. Each labels every event with the class of its window, and runs
//! of one class become predicted segments.

mod classifier;
pub mod windows;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classifier::CountClassifier;
pub use windows::{
    default_decay, features, windows_dw, windows_sw, windows_swmi, windows_swtw, windows_tw, MiTable, Window,
    WindowFeatures,
};

use crate::eval::{runs_to_spans, Span};
use crate::events::{ClassRegistry, LabeledStream, ObservationAlphabet, SensorEvent};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("empty event stream")]
    EmptyStream,
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("classifier has no training windows")]
    NotFitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Sw,
    Tw,
    Swmi,
    Swtw,
    Dw,
    Pwpa,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 6] = [Self::Sw, Self::Tw, Self::Swmi, Self::Swtw, Self::Dw, Self::Pwpa];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sw => "SW",
            Self::Tw => "TW",
            Self::Swmi => "SWMI",
            Self::Swtw => "SWTW",
            Self::Dw => "DW",
            Self::Pwpa => "PWPA",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = BaselineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| BaselineError::BadParameter(format!("unknown baseline '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineParams {
    /// Events per fixed-size window.
    pub n: usize,
    /// Trailing span of TW windows, seconds.
    pub span_secs: f64,
    /// SWTW decay per second; derived from training spans when unset.
    pub lambda: Option<f64>,
    pub kappa: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            n: 20,
            span_secs: 60.0,
            lambda: None,
            kappa: 0.1,
        }
    }
}

/// A fitted baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub kind: BaselineKind,
    pub params: BaselineParams,
    pub alphabet: ObservationAlphabet,
    pub registry: ClassRegistry,
    windowing: Windowing,
    classifier: CountClassifier,
}

/// Everything needed to cut windows once trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Windowing {
    kind: BaselineKind,
    n: usize,
    span_secs: f64,
    other: usize,
    /// SW classifier for DW previews and PWPA's first level.
    preview: Option<CountClassifier>,
    mi: Option<MiTable>,
    lambda: f64,
    /// DW window size per class id.
    sizes: Vec<usize>,
}

/// Class id of each event's innermost episode, `Other` outside episodes.
pub fn event_labels(stream: &LabeledStream, registry: &ClassRegistry) -> Vec<usize> {
    stream
        .innermost_episode()
        .iter()
        .map(|e| e.map_or(registry.other_id(), |k| registry.id_or_other(&stream.episodes[k].class)))
        .collect()
}

fn featurize(events: &[SensorEvent], symbols: &[usize], alphabet: &ObservationAlphabet, ws: &[Window]) -> Vec<WindowFeatures> {
    par::map(ws, |w| features(events, symbols, alphabet, w))
}

fn median(mut v: Vec<usize>) -> Option<usize> {
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    Some(v[v.len() / 2])
}

impl Windowing {
    fn windows(&self, events: &[SensorEvent], preview: Option<&[Option<usize>]>) -> Result<Vec<Window>, BaselineError> {
        let n = self.n;
        match self.kind {
            BaselineKind::Sw | BaselineKind::Pwpa => windows_sw(events, n),
            BaselineKind::Tw => windows_tw(events, self.span_secs),
            BaselineKind::Swmi => windows_swmi(events, n, self.mi.as_ref().expect("fitted with a table")),
            BaselineKind::Swtw => windows_swtw(events, n, self.lambda),
            BaselineKind::Dw => windows_dw(events, preview.expect("dw needs a preview"), &self.sizes, n),
        }
    }

    fn previews(&self, events: &[SensorEvent], symbols: &[usize], alphabet: &ObservationAlphabet) -> Result<Vec<usize>, BaselineError> {
        let level1 = self.preview.as_ref().expect("fitted with a preview classifier");
        let ws = windows_sw(events, self.n)?;
        let fs = featurize(events, symbols, alphabet, &ws);
        Ok(par::map(&fs, |f| level1.predict(f, None)))
    }

    fn as_preview(&self, ids: &[usize]) -> Vec<Option<usize>> {
        let other = self.other;
        ids.iter().map(|&c| (c != other).then_some(c)).collect()
    }

    /// Previous-window context for PWPA: the first window sees `Other`.
    fn shifted(&self, ids: &[usize]) -> Vec<usize> {
        let mut ctx = Vec::with_capacity(ids.len());
        ctx.push(self.other);
        ctx.extend_from_slice(&ids[..ids.len().saturating_sub(1)]);
        ctx
    }
}

impl Baseline {
    /// Fits on an annotated stream.
    pub fn fit(
        kind: BaselineKind,
        train: &LabeledStream,
        alphabet: &ObservationAlphabet,
        params: &BaselineParams,
    ) -> Result<Self, BaselineError> {
        if train.is_empty() {
            return Err(BaselineError::EmptyStream);
        }
        if params.n == 0 || !(params.kappa > 0.0) {
            return Err(BaselineError::BadParameter("n and kappa must be positive".into()));
        }
        let registry = ClassRegistry::from_stream(train);
        let k = registry.len();
        let events = &train.events;
        let symbols = alphabet.encode_stream(train);
        let labels = event_labels(train, &registry);
        let needs_preview = matches!(kind, BaselineKind::Dw | BaselineKind::Pwpa);
        let preview = if needs_preview {
            let ws = windows_sw(events, params.n)?;
            Some(CountClassifier::fit(&featurize(events, &symbols, alphabet, &ws), &labels, k, None, params.kappa)?)
        } else {
            None
        };
        let sizes: Vec<usize> = registry
            .iter()
            .map(|c| {
                let lens: Vec<usize> = train.episodes.iter().filter(|e| e.class == c.name).map(|e| e.len()).collect();
                median(lens).unwrap_or(params.n)
            })
            .collect();
        let b = Windowing {
            kind,
            n: params.n,
            span_secs: params.span_secs,
            other: registry.other_id(),
            preview,
            mi: (kind == BaselineKind::Swmi).then(|| MiTable::fit(events)),
            lambda: params.lambda.unwrap_or_else(|| default_decay(events, params.n)),
            sizes,
        };
        let (ws, context) = match kind {
            // train DW on windows sized by the true class
            BaselineKind::Dw => {
                let truth = b.as_preview(&labels);
                (b.windows(events, Some(&truth))?, None)
            }
            BaselineKind::Pwpa => {
                let prev = b.previews(events, &symbols, alphabet)?;
                (b.windows(events, None)?, Some(b.shifted(&prev)))
            }
            _ => (b.windows(events, None)?, None),
        };
        let fs = featurize(events, &symbols, alphabet, &ws);
        let classifier = CountClassifier::fit(&fs, &labels, k, context.as_deref().map(|c| (c, k)), params.kappa)?;
        Ok(Self {
            kind,
            params: params.clone(),
            alphabet: alphabet.clone(),
            registry,
            windowing: b,
            classifier,
        })
    }

    /// One class id per event.
    pub fn predict(&self, events: &[SensorEvent]) -> Result<Vec<usize>, BaselineError> {
        if events.is_empty() {
            return Err(BaselineError::EmptyStream);
        }
        let symbols: Vec<usize> = events.iter().map(|e| self.alphabet.encode_event(e)).collect();
        let w = &self.windowing;
        let (ws, context) = match self.kind {
            BaselineKind::Dw => {
                let p = w.as_preview(&w.previews(events, &symbols, &self.alphabet)?);
                (w.windows(events, Some(&p))?, None)
            }
            BaselineKind::Pwpa => {
                let prev = w.previews(events, &symbols, &self.alphabet)?;
                (w.windows(events, None)?, Some(w.shifted(&prev)))
            }
            _ => (w.windows(events, None)?, None),
        };
        let fs = featurize(events, &symbols, &self.alphabet, &ws);
        Ok(par::map_range(fs.len(), |i| self.classifier.predict(&fs[i], context.as_ref().map(|c| c[i]))))
    }

    /// Per-event predictions merged into labelled spans.
    pub fn predict_spans(&self, events: &[SensorEvent]) -> Result<Vec<Span>, BaselineError> {
        let ids = self.predict(events)?;
        let names: Vec<String> = ids.iter().map(|&c| self.registry.name(c).to_owned()).collect();
        Ok(runs_to_spans(&names))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{generate_synthetic, presets};

    #[test]
    fn kinds_parse() {
        for k in BaselineKind::ALL {
            assert_eq!(k.name().to_lowercase().parse::<BaselineKind>().unwrap(), k);
        }
        assert!("xx".parse::<BaselineKind>().is_err());
    }

    #[test]
    fn every_kind_predicts_once_per_event() {
        let s = generate_synthetic(&presets::home_a(), 60, 5).unwrap();
        let alphabet = ObservationAlphabet::build([&s]).unwrap();
        let (train, test) = (s.slice(0..s.len() / 2), s.slice(s.len() / 2..s.len()));
        for k in BaselineKind::ALL {
            let b = Baseline::fit(k, &train, &alphabet, &BaselineParams::default()).unwrap();
            let p = b.predict(&test.events).unwrap();
            assert_eq!(p.len(), test.len(), "{k}");
            assert!(p.iter().all(|&c| c < b.registry.len()));
        }
    }
}
