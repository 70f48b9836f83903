use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EventsError, LabeledStream, SensorEvent};

/// An observation symbol: a (sensor id, value) pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(String, String)", into = "(String, String)")]
pub struct Symbol {
    pub sensor: String,
    pub value: String,
}

impl Symbol {
    pub fn new(sensor: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            sensor: sensor.into(),
            value: value.into(),
        }
    }

    pub fn of(event: &SensorEvent) -> Self {
        Self::new(event.sensor_id.clone(), event.value.clone())
    }
}

impl From<(String, String)> for Symbol {
    fn from((sensor, value): (String, String)) -> Self {
        Self { sensor, value }
    }
}

impl From<Symbol> for (String, String) {
    fn from(s: Symbol) -> Self {
        (s.sensor, s.value)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.sensor, self.value)
    }
}

/// The finite observation set, ordered by sensor id then value.
///
/// Indices `0..len()` are the known symbols. Index `len()` is reserved for
/// symbols never seen in training, so models carry `len() + 1` emission
/// columns (see [`ObservationAlphabet::n_columns`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Symbol>", into = "Vec<Symbol>")]
pub struct ObservationAlphabet {
    symbols: Vec<Symbol>,
    index: BTreeMap<Symbol, usize>,
}

impl From<Vec<Symbol>> for ObservationAlphabet {
    fn from(mut symbols: Vec<Symbol>) -> Self {
        symbols.sort();
        symbols.dedup();
        let index = symbols.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Self { symbols, index }
    }
}

impl From<ObservationAlphabet> for Vec<Symbol> {
    fn from(a: ObservationAlphabet) -> Self {
        a.symbols
    }
}

impl ObservationAlphabet {
    /// Collects every (sensor, value) pair occurring in `streams`.
    pub fn build<'a, I>(streams: I) -> Result<Self, EventsError>
    where
        I: IntoIterator<Item = &'a LabeledStream>,
    {
        let mut seen = std::collections::BTreeSet::new();
        for s in streams {
            for e in &s.events {
                seen.insert((e.sensor_id.as_str(), e.value.as_str()));
            }
        }
        if seen.is_empty() {
            return Err(EventsError::EmptyInput);
        }
        Ok(seen
            .into_iter()
            .map(|(s, v)| Symbol::new(s, v))
            .collect::<Vec<_>>()
            .into())
    }

    pub fn from_symbols(symbols: Vec<Symbol>) -> Result<Self, EventsError> {
        if symbols.is_empty() {
            return Err(EventsError::EmptyInput);
        }
        Ok(symbols.into())
    }

    /// Number of known symbols.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Emission columns models need: known symbols plus the unknown slot.
    pub fn n_columns(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn unknown_index(&self) -> usize {
        self.symbols.len()
    }

    pub fn index_of(&self, symbol: &Symbol) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    /// Index of a (sensor, value) pair, or the unknown slot.
    pub fn encode(&self, sensor: &str, value: &str) -> usize {
        // symbols are sorted, so this avoids building an owned key
        self.symbols
            .binary_search_by(|s| (s.sensor.as_str(), s.value.as_str()).cmp(&(sensor, value)))
            .unwrap_or(self.symbols.len())
    }

    pub fn encode_event(&self, e: &SensorEvent) -> usize {
        self.encode(&e.sensor_id, &e.value)
    }

    pub fn encode_stream(&self, s: &LabeledStream) -> Vec<usize> {
        s.events.iter().map(|e| self.encode_event(e)).collect()
    }

    pub fn symbol(&self, k: usize) -> Option<&Symbol> {
        self.symbols.get(k)
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    /// Hex SHA-256 over the canonical symbol list; used to tie persisted
    /// models to the alphabet they were fitted with.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.symbols {
            h.update(s.sensor.as_bytes());
            h.update([0u8]);
            h.update(s.value.as_bytes());
            h.update([0xffu8]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
