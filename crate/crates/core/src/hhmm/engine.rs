//! Event-at-a-time engine.
//!
//! In `Idle` the engine keeps the last β events and fires a begin when the
//! best class begin chain beats background by the begin margin. In
//! `Tracking` every class body filter advances on each event; the end
//! detector compares the posterior-weighted end and continuation chains on
//! the context's last β own events. One interruption may be pushed while
//! tracking.

use std::collections::VecDeque;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{HhmmError, HhmmModel};
use crate::events::{seconds_between, seconds_of_day, SensorEvent};
use crate::hmm::{filter_init, FilterState};
use crate::logspace::{argmax, log_sum_exp};
use crate::model::logvec;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Idle,
    Tracking,
}

/// Per-class log-likelihoods after one tracked event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OngoingEstimate {
    pub index: usize,
    pub timestamp: NaiveDateTime,
    pub class: String,
    pub class_id: usize,
    #[serde(with = "logvec")]
    pub log_likelihoods: Vec<f64>,
}

/// One row of a segment's likelihood trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub index: usize,
    #[serde(with = "logvec")]
    pub log_likelihoods: Vec<f64>,
    pub argmax: usize,
}

/// A detected activity episode.
///
/// The trace holds one row per own event from the end of the begin window
/// onwards: its first row is at `begin_index + β - 1` and already reflects
/// the whole window. Events of a nested interruption have no rows here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub begin_index: usize,
    pub begin_timestamp: NaiveDateTime,
    pub end_index: usize,
    pub end_timestamp: NaiveDateTime,
    pub raw_label: String,
    pub raw_class_id: usize,
    /// Label after correction; equals `raw_label` until corrected.
    pub label: String,
    pub trace: Vec<TraceRow>,
    /// Begin index of the segment this one interrupted.
    pub parent: Option<usize>,
    pub duration: f64,
    pub time_of_day: f64,
    pub truncated: bool,
}

impl Segment {
    /// Events covered, inclusive of both ends.
    pub fn len(&self) -> usize {
        self.end_index - self.begin_index + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EngineOutput {
    Begin {
        index: usize,
        timestamp: NaiveDateTime,
    },
    Ongoing(OngoingEstimate),
    InterruptBegin {
        index: usize,
        timestamp: NaiveDateTime,
        suspended: String,
    },
    Resume {
        index: usize,
        timestamp: NaiveDateTime,
        class: String,
    },
    SegmentComplete {
        segment: Segment,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Buffered {
    index: usize,
    timestamp: NaiveDateTime,
    symbol: usize,
}

/// A begin that crossed the margin and may still move to a stronger window.
#[derive(Debug, Clone, PartialEq)]
struct Pending {
    /// Buffer offset of the best window so far.
    start: usize,
    llr: f64,
    /// Windows still to score.
    left: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Context {
    begin_index: usize,
    begin_timestamp: NaiveDateTime,
    parent: Option<usize>,
    filters: Vec<FilterState>,
    /// Filters before each of the last β own steps.
    history: VecDeque<Vec<FilterState>>,
    /// Last 2β own events.
    recent: VecDeque<Buffered>,
    own_count: usize,
    /// Own events since the context began or resumed.
    contiguous: usize,
    trace: Vec<TraceRow>,
}

impl Context {
    fn log_likelihoods(&self) -> Vec<f64> {
        self.filters.iter().map(|f| f.log_evidence).collect()
    }

    fn argmax(&self) -> usize {
        argmax(&self.log_likelihoods()).unwrap_or(0)
    }

    fn window(&self, beta: usize) -> Vec<usize> {
        self.recent.iter().skip(self.recent.len() - beta).map(|b| b.symbol).collect()
    }

    fn last(&self) -> &Buffered {
        self.recent.back().expect("a context always holds its begin window")
    }
}

/// Mutable state of one engine. Hold one per stream.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EngineState {
    buffer: VecDeque<Buffered>,
    pending: Option<Pending>,
    active: Option<Context>,
    suspended: Option<Context>,
    next_index: usize,
    last_timestamp: Option<NaiveDateTime>,
    scratch: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Thresholds {
    pub begin: f64,
    pub end: f64,
}

impl Thresholds {
    pub(crate) fn of(model: &HhmmModel) -> Self {
        Self {
            begin: model.begin_margin,
            end: model.end_margin,
        }
    }
}

impl EngineState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mode(&self) -> Mode {
        if self.active.is_some() {
            Mode::Tracking
        } else {
            Mode::Idle
        }
    }

    /// Suspended contexts; never more than one.
    pub fn stack_depth(&self) -> usize {
        usize::from(self.suspended.is_some())
    }

    /// Index the next event will get.
    pub fn events_seen(&self) -> usize {
        self.next_index
    }

    /// Feeds one event and returns what it produced.
    pub fn step(&mut self, model: &HhmmModel, event: &SensorEvent) -> Result<Vec<EngineOutput>, HhmmError> {
        let mut out = Vec::new();
        self.step_with(model, Thresholds::of(model), event, &mut out)?;
        Ok(out)
    }

    /// Closes any open context as a truncated segment: the active one at
    /// its last own event, a suspended one at the last event seen.
    pub fn finish(&mut self, model: &HhmmModel) -> Result<Vec<EngineOutput>, HhmmError> {
        self.finish_with(model, Thresholds::of(model))
    }

    pub(crate) fn step_with(
        &mut self,
        model: &HhmmModel,
        th: Thresholds,
        event: &SensorEvent,
        out: &mut Vec<EngineOutput>,
    ) -> Result<(), HhmmError> {
        let index = self.next_index;
        if let Some(last) = self.last_timestamp {
            if event.timestamp < last {
                return Err(HhmmError::NonMonotonicTimestamp { index });
            }
        }
        let item = Buffered {
            index,
            timestamp: event.timestamp,
            symbol: model.alphabet.encode_event(event),
        };
        if self.active.is_some() {
            self.track(model, th, item, out)?;
            self.next_index += 1;
            self.last_timestamp = Some(event.timestamp);
            Ok(())
        } else {
            self.next_index += 1;
            self.last_timestamp = Some(event.timestamp);
            self.idle(model, th, item, out)
        }
    }

    pub(crate) fn finish_with(&mut self, model: &HhmmModel, th: Thresholds) -> Result<Vec<EngineOutput>, HhmmError> {
        let mut out = Vec::new();
        if self.pending.is_some() {
            self.commit(model, th, &mut out)?;
        }
        self.buffer.clear();
        self.pending = None;
        if let Some(ctx) = self.active.take() {
            let end = ctx.last().clone();
            out.push(EngineOutput::SegmentComplete {
                segment: close(model, ctx, end.index, end.timestamp, true),
            });
        }
        if let (Some(ctx), Some(ts)) = (self.suspended.take(), self.last_timestamp) {
            out.push(EngineOutput::SegmentComplete {
                segment: close(model, ctx, self.next_index - 1, ts, true),
            });
        }
        Ok(out)
    }

    /// Once a window crosses the begin margin, the next β - 1 windows are
    /// also scored and the context opens on the strongest of them.
    fn idle(&mut self, model: &HhmmModel, th: Thresholds, item: Buffered, out: &mut Vec<EngineOutput>) -> Result<(), HhmmError> {
        let beta = model.beta;
        self.buffer.push_back(item);
        match &mut self.pending {
            None => {
                if self.buffer.len() > beta {
                    self.buffer.pop_front();
                }
                if self.buffer.len() == beta {
                    let w: Vec<usize> = self.buffer.iter().map(|b| b.symbol).collect();
                    let llr = model.begin_llr(&w).1;
                    if llr > th.begin {
                        self.pending = Some(Pending {
                            start: 0,
                            llr,
                            left: beta - 1,
                        });
                    }
                }
            }
            Some(p) => {
                let start = self.buffer.len() - beta;
                let w: Vec<usize> = self.buffer.iter().skip(start).map(|b| b.symbol).collect();
                let llr = model.begin_llr(&w).1;
                if llr > p.llr {
                    p.start = start;
                    p.llr = llr;
                }
                p.left -= 1;
            }
        }
        if self.pending.as_ref().is_some_and(|p| p.left == 0) {
            self.commit(model, th, out)?;
        }
        Ok(())
    }

    /// Opens the pending begin and replays the events buffered after it.
    fn commit(&mut self, model: &HhmmModel, th: Thresholds, out: &mut Vec<EngineOutput>) -> Result<(), HhmmError> {
        let p = self.pending.take().expect("a pending begin");
        let beta = model.beta;
        let mut events: Vec<Buffered> = self.buffer.drain(..).collect();
        let rest = events.split_off(p.start + beta);
        let window = events.split_off(p.start);
        out.push(EngineOutput::Begin {
            index: window[0].index,
            timestamp: window[0].timestamp,
        });
        let ctx = open(model, window, None)?;
        out.push(ongoing(model, &ctx));
        self.active = Some(ctx);
        for item in rest {
            if self.active.is_some() {
                self.track(model, th, item, out)?;
            } else {
                self.idle(model, th, item, out)?;
            }
        }
        Ok(())
    }

    fn track(&mut self, model: &HhmmModel, th: Thresholds, item: Buffered, out: &mut Vec<EngineOutput>) -> Result<(), HhmmError> {
        let beta = model.beta;
        let index = item.index;
        let mut ctx = self.active.take().expect("tracking");
        let snapshot = ctx.filters.clone();
        for (f, m) in ctx.filters.iter_mut().zip(&model.classes) {
            if let Err(e) = f.advance(&m.body, item.symbol, &mut self.scratch) {
                ctx.filters = snapshot;
                self.active = Some(ctx);
                return Err(e.into());
            }
        }
        ctx.history.push_back(snapshot);
        if ctx.history.len() > beta {
            ctx.history.pop_front();
        }
        ctx.recent.push_back(item.clone());
        if ctx.recent.len() > 2 * beta {
            ctx.recent.pop_front();
        }
        ctx.own_count += 1;
        ctx.contiguous += 1;
        let lls = ctx.log_likelihoods();
        let active_class = argmax(&lls).unwrap_or(0);
        ctx.trace.push(TraceRow {
            index,
            log_likelihoods: lls,
            argmax: active_class,
        });

        if ctx.own_count > beta && end_llr(model, &ctx, &ctx.window(beta)) > th.end {
            out.push(ongoing(model, &ctx));
            out.push(EngineOutput::SegmentComplete {
                segment: close(model, ctx, index, item.timestamp, false),
            });
            if let Some(mut outer) = self.suspended.take() {
                outer.contiguous = 0;
                out.push(EngineOutput::Resume {
                    index,
                    timestamp: item.timestamp,
                    class: model.class_name(outer.argmax()).to_owned(),
                });
                self.active = Some(outer);
            }
            return Ok(());
        }

        if ctx.own_count >= 2 * beta && ctx.contiguous >= beta {
            let w = ctx.window(beta);
            let (b, llr) = model.begin_llr(&w);
            let dominance = model.classes[b].begin.score(&w) - model.classes[active_class].continuation.score(&w);
            if llr > th.begin && dominance > th.begin {
                let window = rollback(&mut ctx, beta);
                let (first_index, first_ts) = (window[0].index, window[0].timestamp);
                if self.suspended.is_none() && b != active_class && model.classes[b].interrupts {
                    out.push(EngineOutput::InterruptBegin {
                        index: first_index,
                        timestamp: first_ts,
                        suspended: model.class_name(ctx.argmax()).to_owned(),
                    });
                    let nested = open(model, window, Some(ctx.begin_index))?;
                    out.push(ongoing(model, &nested));
                    self.suspended = Some(ctx);
                    self.active = Some(nested);
                    return Ok(());
                }
                // a begin that cannot be an interruption closes what is open
                let last = ctx.last().clone();
                out.push(EngineOutput::SegmentComplete {
                    segment: close(model, ctx, last.index, last.timestamp, false),
                });
                if let Some(outer) = self.suspended.take() {
                    out.push(EngineOutput::SegmentComplete {
                        segment: close(model, outer, last.index, last.timestamp, false),
                    });
                }
                out.push(EngineOutput::Begin {
                    index: first_index,
                    timestamp: first_ts,
                });
                let fresh = open(model, window, None)?;
                out.push(ongoing(model, &fresh));
                self.active = Some(fresh);
                return Ok(());
            }
        }

        out.push(ongoing(model, &ctx));
        self.active = Some(ctx);
        Ok(())
    }
}

/// Undoes the last β own steps of `ctx` and returns their events.
fn rollback(ctx: &mut Context, beta: usize) -> Vec<Buffered> {
    ctx.filters = ctx.history[ctx.history.len() - beta].clone();
    ctx.history.clear();
    let mut window = Vec::with_capacity(beta);
    for _ in 0..beta {
        window.push(ctx.recent.pop_back().expect("2β own events"));
        ctx.trace.pop();
    }
    window.reverse();
    ctx.own_count -= beta;
    ctx.contiguous = 0;
    window
}

/// Starts a context whose filters have consumed the begin window.
fn open(model: &HhmmModel, window: Vec<Buffered>, parent: Option<usize>) -> Result<Context, HhmmError> {
    let mut scratch = Vec::new();
    let mut filters = Vec::with_capacity(model.classes.len());
    for m in &model.classes {
        let mut f = filter_init(&m.body, window[0].symbol)?;
        for b in &window[1..] {
            f.advance(&m.body, b.symbol, &mut scratch)?;
        }
        filters.push(f);
    }
    let last = window.last().expect("β ≥ 2").clone();
    let mut ctx = Context {
        begin_index: window[0].index,
        begin_timestamp: window[0].timestamp,
        parent,
        filters,
        history: VecDeque::new(),
        own_count: window.len(),
        contiguous: window.len(),
        recent: window.into(),
        trace: Vec::new(),
    };
    let lls = ctx.log_likelihoods();
    ctx.trace.push(TraceRow {
        index: last.index,
        argmax: argmax(&lls).unwrap_or(0),
        log_likelihoods: lls,
    });
    Ok(ctx)
}

fn ongoing(model: &HhmmModel, ctx: &Context) -> EngineOutput {
    let row = ctx.trace.last().expect("trace is never empty while tracking");
    let last = ctx.last();
    EngineOutput::Ongoing(OngoingEstimate {
        index: last.index,
        timestamp: last.timestamp,
        class: model.class_name(row.argmax).to_owned(),
        class_id: row.argmax,
        log_likelihoods: row.log_likelihoods.clone(),
    })
}

/// Posterior-weighted ratio of end against continuation on the last β own
/// symbols.
fn end_llr(model: &HhmmModel, ctx: &Context, w: &[usize]) -> f64 {
    let lls = ctx.log_likelihoods();
    let z = log_sum_exp(&lls);
    let mut end = Vec::with_capacity(lls.len());
    let mut cont = Vec::with_capacity(lls.len());
    for (l, m) in lls.iter().zip(&model.classes) {
        let q = l - z;
        end.push(q + m.end.score(w));
        cont.push(q + m.continuation.score(w));
    }
    log_sum_exp(&end) - log_sum_exp(&cont)
}

fn close(model: &HhmmModel, ctx: Context, end_index: usize, end_ts: NaiveDateTime, truncated: bool) -> Segment {
    let c = ctx.argmax();
    let name = model.class_name(c).to_owned();
    Segment {
        begin_index: ctx.begin_index,
        begin_timestamp: ctx.begin_timestamp,
        end_index,
        end_timestamp: end_ts,
        raw_label: name.clone(),
        raw_class_id: c,
        label: name,
        trace: ctx.trace,
        parent: ctx.parent,
        duration: seconds_between(&ctx.begin_timestamp, &end_ts),
        time_of_day: seconds_of_day(&ctx.begin_timestamp),
        truncated,
    }
}

pub(crate) fn run_with(
    model: &HhmmModel,
    th: Thresholds,
    events: &[SensorEvent],
) -> Result<(Vec<Segment>, Vec<OngoingEstimate>), HhmmError> {
    let mut state = EngineState::new();
    let mut out = Vec::new();
    let mut segments = Vec::new();
    let mut estimates = Vec::new();
    let mut sink = |out: &mut Vec<EngineOutput>| {
        for o in out.drain(..) {
            match o {
                EngineOutput::SegmentComplete { segment } => segments.push(segment),
                EngineOutput::Ongoing(e) => estimates.push(e),
                _ => {}
            }
        }
    };
    for e in events {
        state.step_with(model, th, e, &mut out)?;
        sink(&mut out);
    }
    out.extend(state.finish_with(model, th)?);
    sink(&mut out);
    Ok((segments, estimates))
}

/// Runs a whole stream: completed segments in completion order, including
/// truncated ones, and every ongoing estimate.
pub fn run_stream(model: &HhmmModel, events: &[SensorEvent]) -> Result<(Vec<Segment>, Vec<OngoingEstimate>), HhmmError> {
    run_with(model, Thresholds::of(model), events)
}

/// Every output of a whole stream, in order, with the final flush.
pub fn run_outputs(model: &HhmmModel, events: &[SensorEvent]) -> Result<Vec<EngineOutput>, HhmmError> {
    let mut state = EngineState::new();
    let mut out = Vec::new();
    let th = Thresholds::of(model);
    for e in events {
        state.step_with(model, th, e, &mut out)?;
    }
    out.extend(state.finish_with(model, th)?);
    Ok(out)
}

/// [`run_stream`] over independent streams, one engine each.
pub fn run_many(
    model: &HhmmModel,
    streams: &[Vec<SensorEvent>],
) -> Vec<Result<(Vec<Segment>, Vec<OngoingEstimate>), HhmmError>> {
    par::map(streams, |s| run_stream(model, s))
}
