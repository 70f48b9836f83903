//! Seeded synthetic labelled streams.
//!
//! A home is described by per-class profiles: a begin signature, a weighted
//! body distribution, an end signature, a body length range, a log-normal
//! duration and a time-of-day mixture. Between episodes the generator emits
//! background events drawn from a separate distribution.

use chrono::{Duration, NaiveDateTime, NaiveTime};
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::{EventsError, LabeledStream, Marker, SensorEvent, Symbol};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSymbol {
    pub sensor: String,
    pub value: String,
    pub weight: f64,
}

impl WeightedSymbol {
    pub fn new(sensor: impl Into<String>, value: impl Into<String>, weight: f64) -> Self {
        Self {
            sensor: sensor.into(),
            value: value.into(),
            weight,
        }
    }

    fn symbol(&self) -> Symbol {
        Symbol::new(self.sensor.clone(), self.value.clone())
    }
}

/// Log-normal episode duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationProfile {
    pub median_secs: f64,
    pub sigma: f64,
}

/// One normal component of a time-of-day mixture, in hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeOfDayComponent {
    pub hour: f64,
    pub sd_hours: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub name: String,
    /// Relative frequency among top-level episodes.
    pub weight: f64,
    pub begin: Vec<Symbol>,
    pub body: Vec<WeightedSymbol>,
    pub end: Vec<Symbol>,
    /// Inclusive range of body events between the signatures.
    pub body_events: (usize, usize),
    pub duration: DurationProfile,
    pub time_of_day: Vec<TimeOfDayComponent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundProfile {
    pub symbols: Vec<WeightedSymbol>,
    /// Inclusive range of background events between two episodes.
    pub events: (usize, usize),
    pub min_gap_secs: f64,
}

/// Nested episodes of `class` injected into eligible top-level episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterruptionSpec {
    pub rate: f64,
    pub class: String,
    /// Classes that may be interrupted; empty means every other class.
    #[serde(default)]
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeSpec {
    pub name: String,
    pub start: NaiveDateTime,
    /// Probability that each signature symbol is replaced by a body draw.
    #[serde(default)]
    pub signature_noise: f64,
    pub classes: Vec<ClassProfile>,
    pub background: BackgroundProfile,
    #[serde(default)]
    pub interruption: Option<InterruptionSpec>,
}

impl HomeSpec {
    pub fn validate(&self) -> Result<(), EventsError> {
        let bad = |m: String| Err(EventsError::InvalidProfile(m));
        if self.classes.is_empty() {
            return bad("no classes".into());
        }
        if !(0.0..=1.0).contains(&self.signature_noise) {
            return bad("signature_noise must lie in [0, 1]".into());
        }
        for c in &self.classes {
            if c.begin.is_empty() || c.end.is_empty() {
                return bad(format!("{}: begin and end signatures need at least one symbol", c.name));
            }
            check_weights(&c.body, &c.name)?;
            if !(c.weight > 0.0) || !c.weight.is_finite() {
                return bad(format!("{}: class weight must be positive", c.name));
            }
            if c.body_events.0 > c.body_events.1 {
                return bad(format!("{}: empty body length range", c.name));
            }
            if !(c.duration.median_secs > 0.0) || !(c.duration.sigma >= 0.0) {
                return bad(format!("{}: durations must be positive", c.name));
            }
            if c.time_of_day.is_empty()
                || c.time_of_day.iter().any(|t| !(t.weight > 0.0) || !(t.sd_hours >= 0.0))
            {
                return bad(format!("{}: invalid time-of-day distribution", c.name));
            }
        }
        check_weights(&self.background.symbols, "background")?;
        if self.background.events.0 > self.background.events.1 || !(self.background.min_gap_secs >= 0.0) {
            return bad("background: invalid event range or gap".into());
        }
        if let Some(i) = &self.interruption {
            if !(0.0..=1.0).contains(&i.rate) {
                return bad("interruption rate must lie in [0, 1]".into());
            }
            if !self.classes.iter().any(|c| c.name == i.class) {
                return bad(format!("interruption class '{}' has no profile", i.class));
            }
        }
        Ok(())
    }

    fn interruptible(&self, class: &str) -> bool {
        match &self.interruption {
            Some(i) if i.rate > 0.0 && i.class != class => {
                i.targets.is_empty() || i.targets.iter().any(|t| t == class)
            }
            _ => false,
        }
    }
}

fn check_weights(ws: &[WeightedSymbol], who: &str) -> Result<(), EventsError> {
    if ws.is_empty() {
        return Err(EventsError::InvalidProfile(format!("{who}: empty symbol distribution")));
    }
    if ws.iter().any(|w| !(w.weight >= 0.0) || !w.weight.is_finite()) || ws.iter().all(|w| w.weight == 0.0) {
        return Err(EventsError::InvalidProfile(format!("{who}: weights must be non-negative and not all zero")));
    }
    Ok(())
}

struct Sampler<'a> {
    spec: &'a HomeSpec,
    rng: ChaCha8Rng,
    classes: WeightedIndex<f64>,
    bodies: Vec<WeightedIndex<f64>>,
    background: WeightedIndex<f64>,
}

type Timed = (i64, Symbol, Option<(usize, Marker)>);

impl<'a> Sampler<'a> {
    fn new(spec: &'a HomeSpec, seed: u64) -> Self {
        let w = |ws: &[WeightedSymbol]| {
            WeightedIndex::new(ws.iter().map(|w| w.weight)).expect("validated weights")
        };
        Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            classes: WeightedIndex::new(spec.classes.iter().map(|c| c.weight)).expect("validated weights"),
            bodies: spec.classes.iter().map(|c| w(&c.body)).collect(),
            background: w(&spec.background.symbols),
        }
    }

    fn body_symbol(&mut self, c: usize) -> Symbol {
        let k = self.bodies[c].sample(&mut self.rng);
        self.spec.classes[c].body[k].symbol()
    }

    fn signature(&mut self, c: usize, sig: &[Symbol]) -> Vec<Symbol> {
        sig.iter()
            .map(|s| {
                if self.rng.random::<f64>() < self.spec.signature_noise {
                    self.body_symbol(c)
                } else {
                    s.clone()
                }
            })
            .collect()
    }

    /// Begin signature, body and end signature of one episode of class `c`.
    fn own_symbols(&mut self, c: usize) -> (Vec<Symbol>, usize) {
        let prof = &self.spec.classes[c];
        let (lo, hi) = prof.body_events;
        let n_body = self.rng.random_range(lo..=hi);
        let begin = prof.begin.clone();
        let end = prof.end.clone();
        let mut out = self.signature(c, &begin);
        for _ in 0..n_body {
            let s = self.body_symbol(c);
            out.push(s);
        }
        out.extend(self.signature(c, &end));
        (out, n_body)
    }

    fn duration_secs(&mut self, c: usize) -> f64 {
        let d = self.spec.classes[c].duration;
        if d.sigma == 0.0 {
            return d.median_secs;
        }
        LogNormal::new(d.median_secs.ln(), d.sigma)
            .expect("validated")
            .sample(&mut self.rng)
    }

    fn time_of_day_secs(&mut self, c: usize) -> u32 {
        let tod = &self.spec.classes[c].time_of_day;
        let k = WeightedIndex::new(tod.iter().map(|t| t.weight))
            .expect("validated")
            .sample(&mut self.rng);
        let comp = tod[k];
        let h = if comp.sd_hours == 0.0 {
            comp.hour
        } else {
            Normal::new(comp.hour, comp.sd_hours).expect("validated").sample(&mut self.rng)
        };
        let secs = (h * 3600.0).rem_euclid(86_400.0) as u32;
        secs.min(86_399)
    }

    /// `n` strictly increasing second offsets spanning roughly `duration`.
    fn spread(&mut self, n: usize, duration: f64) -> Vec<i64> {
        if n == 0 {
            return Vec::new();
        }
        let span = duration.max((n - 1) as f64);
        let mut pos: Vec<f64> = (0..n)
            .map(|i| {
                if i == 0 {
                    0.0
                } else if i == n - 1 {
                    span
                } else {
                    self.rng.random::<f64>() * span
                }
            })
            .collect();
        pos.sort_by(f64::total_cmp);
        let mut out: Vec<i64> = Vec::with_capacity(n);
        for p in pos {
            let t = p.round() as i64;
            let t = match out.last() {
                Some(&prev) if t <= prev => prev + 1,
                _ => t,
            };
            out.push(t);
        }
        out
    }

    /// One top-level episode (plus any interruption) with offsets from its
    /// first event. Annotation tags carry the class index.
    fn episode(&mut self, c: usize) -> Vec<Timed> {
        let (own, n_body) = self.own_symbols(c);
        let dur = self.duration_secs(c);
        let offsets = self.spread(own.len(), dur);
        let last = own.len() - 1;
        let mut out: Vec<Timed> = own
            .into_iter()
            .zip(offsets)
            .enumerate()
            .map(|(i, (s, t))| {
                let ann = if i == 0 {
                    Some((c, Marker::Begin))
                } else if i == last {
                    Some((c, Marker::End))
                } else {
                    None
                };
                (t, s, ann)
            })
            .collect();

        let name = &self.spec.classes[c].name;
        if self.spec.interruptible(name) {
            let rate = self.spec.interruption.as_ref().map_or(0.0, |i| i.rate);
            if self.rng.random::<f64>() < rate {
                let ic = self
                    .spec
                    .classes
                    .iter()
                    .position(|p| Some(&p.name) == self.spec.interruption.as_ref().map(|i| &i.class))
                    .expect("validated");
                let begin_len = self.spec.classes[c].begin.len();
                let split = begin_len + self.rng.random_range(n_body / 2..=n_body);
                let (nested, _) = self.own_symbols(ic);
                let nested_dur = self.duration_secs(ic);
                let nested_off = self.spread(nested.len(), nested_dur);
                let gap_in = self.rng.random_range(5..=30);
                let gap_out = self.rng.random_range(5..=30);
                let base = out[split - 1].0 + gap_in;
                let nested_end = base + nested_off.last().copied().unwrap_or(0);
                let delta = nested_end + gap_out - out[split - 1].0;
                for e in &mut out[split..] {
                    e.0 += delta;
                }
                let nlast = nested.len() - 1;
                let block: Vec<Timed> = nested
                    .into_iter()
                    .zip(nested_off)
                    .enumerate()
                    .map(|(i, (s, t))| {
                        let ann = if i == 0 {
                            Some((ic, Marker::Begin))
                        } else if i == nlast {
                            Some((ic, Marker::End))
                        } else {
                            None
                        };
                        (base + t, s, ann)
                    })
                    .collect();
                out.splice(split..split, block);
            }
        }
        out
    }
}

/// Generates `n_episodes` top-level episodes with background events between
/// them. Identical `(spec, n_episodes, seed)` give identical streams.
pub fn generate_synthetic(spec: &HomeSpec, n_episodes: usize, seed: u64) -> Result<LabeledStream, EventsError> {
    spec.validate()?;
    if n_episodes == 0 {
        return Err(EventsError::InvalidProfile("n_episodes must be at least 1".into()));
    }
    let mut s = Sampler::new(spec, seed);
    let mut events: Vec<SensorEvent> = Vec::new();
    let mut clock = spec.start;
    let min_gap = Duration::milliseconds((spec.background.min_gap_secs * 1000.0).round() as i64);

    for _ in 0..n_episodes {
        let c = s.classes.sample(&mut s.rng);
        let tod = s.time_of_day_secs(c);
        let earliest = clock + min_gap + Duration::seconds(1);
        let tod = NaiveTime::from_num_seconds_from_midnight_opt(tod, 0).expect("tod < 86400");
        let mut start = earliest.date().and_time(tod);
        if start < earliest {
            start += Duration::days(1);
        }

        let (lo, hi) = spec.background.events;
        let n_bg = s.rng.random_range(lo..=hi);
        let span = (start - clock).num_seconds();
        let mut bg: Vec<i64> = (0..n_bg).map(|_| s.rng.random_range(1..span.max(2))).collect();
        bg.sort_unstable();
        bg.dedup();
        for off in bg {
            if off >= span {
                continue;
            }
            let k = s.background.sample(&mut s.rng);
            let sym = &spec.background.symbols[k];
            events.push(SensorEvent::new(clock + Duration::seconds(off), sym.sensor.clone(), sym.value.clone()));
        }

        for (off, sym, ann) in s.episode(c) {
            let mut e = SensorEvent::new(start + Duration::seconds(off), sym.sensor, sym.value);
            if let Some((k, m)) = ann {
                e = e.annotated(spec.classes[k].name.clone(), m);
            }
            clock = e.timestamp;
            events.push(e);
        }
    }
    LabeledStream::from_events(events)
}
