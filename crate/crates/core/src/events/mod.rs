//! Sensor events, annotated streams, the observation alphabet and the
//! synthetic home generator.

mod alphabet;
mod parse;
pub mod presets;
mod report;
mod synth;

use std::collections::BTreeSet;
use std::ops::Range;

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alphabet::{ObservationAlphabet, Symbol};
pub use parse::{format_timestamp, parse_event, parse_stream, parse_timestamp, Strictness};
pub use report::{activation_frequency_report, ActivationReport, ActivationRow};
pub use synth::{
    generate_synthetic, BackgroundProfile, ClassProfile, DurationProfile, HomeSpec,
    InterruptionSpec, TimeOfDayComponent, WeightedSymbol,
};

/// Name used for the catch-all class.
pub const OTHER: &str = "Other";

/// Deepest annotation nesting accepted (one interruption level).
pub const MAX_NESTING: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventsError {
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("unmatched annotation for '{activity}' at event {index}")]
    UnmatchedAnnotation { activity: String, index: usize },
    #[error("annotation nesting deeper than {MAX_NESTING} at event {index}")]
    NestingTooDeep { index: usize },
    #[error("timestamp at event {index} is earlier than its predecessor")]
    NonMonotonicTimestamp { index: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("stream has no annotated episodes")]
    NoEpisodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Marker {
    Begin,
    End,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub activity: String,
    pub marker: Marker,
}

/// One timestamped sensor reading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorEvent {
    pub timestamp: NaiveDateTime,
    pub sensor_id: String,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<Annotation>,
}

impl SensorEvent {
    pub fn new(timestamp: NaiveDateTime, sensor_id: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            timestamp,
            sensor_id: sensor_id.into(),
            value: value.into(),
            annotation: None,
        }
    }

    pub fn annotated(mut self, activity: impl Into<String>, marker: Marker) -> Self {
        self.annotation = Some(Annotation {
            activity: activity.into(),
            marker,
        });
        self
    }

    /// Seconds since local midnight.
    pub fn seconds_of_day(&self) -> f64 {
        seconds_of_day(&self.timestamp)
    }
}

pub fn seconds_of_day(ts: &NaiveDateTime) -> f64 {
    ts.num_seconds_from_midnight() as f64 + ts.nanosecond() as f64 * 1e-9
}

/// Seconds from `a` to `b`.
pub fn seconds_between(a: &NaiveDateTime, b: &NaiveDateTime) -> f64 {
    let d = *b - *a;
    d.num_milliseconds() as f64 / 1000.0
}

/// One annotated activity episode; indices are inclusive event positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub class: String,
    pub begin: usize,
    pub end: usize,
    /// Index (into the episode list) of the episode this one interrupted.
    pub parent: Option<usize>,
    /// 1 for top-level episodes, 2 for interruptions.
    pub depth: usize,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.end - self.begin + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn range(&self) -> Range<usize> {
        self.begin..self.end + 1
    }
}

/// An event sequence plus the episodes derived from its annotations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledStream {
    pub events: Vec<SensorEvent>,
    /// Sorted by begin index; a nested episode follows its parent.
    pub episodes: Vec<Episode>,
    /// Lines skipped by a lenient parse.
    #[serde(default)]
    pub skipped_lines: usize,
    /// Annotations dropped by a lenient parse.
    #[serde(default)]
    pub dropped_annotations: usize,
}

impl LabeledStream {
    /// Builds a stream from events, pairing annotations strictly.
    pub fn from_events(events: Vec<SensorEvent>) -> Result<Self, EventsError> {
        check_monotonic(&events)?;
        let episodes = pair_annotations(&events, Strictness::Strict)?.0;
        Ok(Self {
            events,
            episodes,
            skipped_lines: 0,
            dropped_annotations: 0,
        })
    }

    pub(crate) fn from_events_with(
        mut events: Vec<SensorEvent>,
        strictness: Strictness,
    ) -> Result<Self, EventsError> {
        check_monotonic(&events)?;
        let (episodes, dropped) = pair_annotations(&events, strictness)?;
        for &i in &dropped {
            events[i].annotation = None;
        }
        Ok(Self {
            events,
            episodes,
            skipped_lines: 0,
            dropped_annotations: dropped.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Deepest annotation nesting present (0 when unannotated).
    pub fn max_depth(&self) -> usize {
        self.episodes.iter().map(|e| e.depth).max().unwrap_or(0)
    }

    /// Event indices that belong to episode `k` itself, excluding any
    /// interruption nested inside it.
    pub fn own_indices(&self, k: usize) -> Vec<usize> {
        let ep = &self.episodes[k];
        let children: Vec<Range<usize>> = self
            .episodes
            .iter()
            .filter(|c| c.parent == Some(k))
            .map(Episode::range)
            .collect();
        ep.range()
            .filter(|i| !children.iter().any(|r| r.contains(i)))
            .collect()
    }

    /// For every event, the innermost episode covering it.
    pub fn innermost_episode(&self) -> Vec<Option<usize>> {
        let mut cover = vec![None; self.events.len()];
        // parents precede children, so later writes are deeper
        for (k, ep) in self.episodes.iter().enumerate() {
            for c in &mut cover[ep.range()] {
                *c = Some(k);
            }
        }
        cover
    }

    /// Sorted distinct activity names.
    pub fn class_names(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.episodes.iter().map(|e| e.class.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Sub-stream over an event range. Episodes not wholly inside the range
    /// lose their annotations.
    pub fn slice(&self, range: Range<usize>) -> LabeledStream {
        let start = range.start;
        let mut events: Vec<SensorEvent> = self.events[range.clone()].to_vec();
        for ep in &self.episodes {
            let inside = ep.begin >= range.start && ep.end < range.end;
            if !inside {
                for i in [ep.begin, ep.end] {
                    if range.contains(&i) {
                        events[i - start].annotation = None;
                    }
                }
            }
        }
        LabeledStream::from_events(events).expect("slice of a valid stream is valid")
    }

    /// Concatenates streams in order. Timestamps must stay monotone.
    pub fn concat(parts: &[LabeledStream]) -> Result<LabeledStream, EventsError> {
        let events: Vec<SensorEvent> = parts.iter().flat_map(|p| p.events.iter().cloned()).collect();
        LabeledStream::from_events(events)
    }

    /// Event positions at which the stream can be cut without splitting an
    /// episode: `i` is a cut point if no episode spans both `i - 1` and `i`.
    pub fn cut_points(&self) -> Vec<usize> {
        let n = self.events.len();
        let mut open = vec![0i32; n + 1];
        for ep in self.episodes.iter().filter(|e| e.depth == 1) {
            open[ep.begin + 1] += 1;
            open[ep.end + 1] -= 1;
        }
        let mut cuts = Vec::new();
        let mut running = 0;
        for (i, delta) in open.iter().enumerate().take(n + 1) {
            running += delta;
            if running == 0 {
                cuts.push(i);
            }
        }
        cuts
    }

    /// Serializes back to the whitespace-separated text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&parse::format_event(e));
            out.push('\n');
        }
        out
    }
}

fn check_monotonic(events: &[SensorEvent]) -> Result<(), EventsError> {
    for (i, w) in events.windows(2).enumerate() {
        if w[1].timestamp < w[0].timestamp {
            return Err(EventsError::NonMonotonicTimestamp { index: i + 1 });
        }
    }
    Ok(())
}

/// Pairs begin/end annotations into episodes. In lenient mode, annotations
/// that cannot be paired are returned for removal instead of failing.
fn pair_annotations(
    events: &[SensorEvent],
    strictness: Strictness,
) -> Result<(Vec<Episode>, Vec<usize>), EventsError> {
    struct Open {
        activity: String,
        index: usize,
        slot: usize,
    }
    let mut stack: Vec<Open> = Vec::new();
    let mut slots: Vec<Option<Episode>> = Vec::new();
    let mut dropped = Vec::new();
    let lenient = strictness == Strictness::Lenient;

    for (i, ev) in events.iter().enumerate() {
        let Some(ann) = &ev.annotation else { continue };
        match ann.marker {
            Marker::Begin => {
                if stack.len() >= MAX_NESTING {
                    if lenient {
                        dropped.push(i);
                        continue;
                    }
                    return Err(EventsError::NestingTooDeep { index: i });
                }
                let slot = slots.len();
                slots.push(None);
                stack.push(Open {
                    activity: ann.activity.clone(),
                    index: i,
                    slot,
                });
            }
            Marker::End => {
                let matches_top = stack.last().is_some_and(|o| o.activity == ann.activity);
                if !matches_top {
                    if lenient {
                        dropped.push(i);
                        continue;
                    }
                    return Err(EventsError::UnmatchedAnnotation {
                        activity: ann.activity.clone(),
                        index: i,
                    });
                }
                let open = stack.pop().expect("checked non-empty");
                let parent_slot = stack.last().map(|o| o.slot);
                slots[open.slot] = Some(Episode {
                    class: open.activity,
                    begin: open.index,
                    end: i,
                    parent: parent_slot,
                    depth: stack.len() + 1,
                });
            }
        }
    }
    if let Some(open) = stack.first() {
        if !lenient {
            return Err(EventsError::UnmatchedAnnotation {
                activity: open.activity.clone(),
                index: open.index,
            });
        }
        dropped.extend(stack.iter().map(|o| o.index));
    }

    // Slots are in begin order already; drop unfilled ones and remap parents.
    let mut remap = vec![None; slots.len()];
    let mut episodes = Vec::new();
    for (s, ep) in slots.iter().enumerate() {
        if ep.is_some() {
            remap[s] = Some(episodes.len());
            episodes.push(ep.clone().expect("filled"));
        }
    }
    for ep in &mut episodes {
        ep.parent = ep.parent.and_then(|p| remap[p]);
        if ep.parent.is_none() {
            ep.depth = 1;
        }
    }
    dropped.sort_unstable();
    Ok((episodes, dropped))
}

/// One activity class; ids are dense and exactly one class is `Other`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityClass {
    pub name: String,
    pub id: usize,
    pub is_other: bool,
}

/// Named classes with ids `0..n`, followed by `Other` with id `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRegistry {
    classes: Vec<ActivityClass>,
}

impl ClassRegistry {
    /// Builds a registry from activity names. Duplicates and any literal
    /// `Other` are folded; names keep their given order.
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut classes: Vec<ActivityClass> = Vec::new();
        for n in names {
            let n = n.as_ref();
            if n == OTHER || classes.iter().any(|c| c.name == n) {
                continue;
            }
            classes.push(ActivityClass {
                name: n.to_owned(),
                id: classes.len(),
                is_other: false,
            });
        }
        classes.push(ActivityClass {
            name: OTHER.to_owned(),
            id: classes.len(),
            is_other: true,
        });
        Self { classes }
    }

    pub fn from_stream(stream: &LabeledStream) -> Self {
        Self::new(stream.class_names())
    }

    /// Total classes including `Other`.
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of named (non-Other) classes.
    pub fn named_len(&self) -> usize {
        self.classes.len() - 1
    }

    pub fn other_id(&self) -> usize {
        self.classes.len() - 1
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    /// Id of `name`, falling back to `Other` for unknown names.
    pub fn id_or_other(&self, name: &str) -> usize {
        self.id_of(name).unwrap_or_else(|| self.other_id())
    }

    pub fn name(&self, id: usize) -> &str {
        &self.classes[id].name
    }

    pub fn get(&self, id: usize) -> Option<&ActivityClass> {
        self.classes.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ActivityClass> {
        self.classes.iter()
    }

    pub fn named(&self) -> impl Iterator<Item = &ActivityClass> {
        self.classes.iter().filter(|c| !c.is_other)
    }
}
