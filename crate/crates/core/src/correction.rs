//! Label correction from a per-class joint density over time of day and
//! segment duration.
//!
//! Each class gets a smoothed 2-D histogram on the unit square: the first
//! axis is the time of day (circular), the second the log of the duration
//! between [`MIN_DURATION_SECS`] and [`MAX_DURATION_SECS`]. A segment keeps
//! its raw label when the raw class's density at the segment's coordinates
//! reaches α; otherwise the best passing class takes over, or `Other`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{self, MatchPolicy};
use crate::events::{LabeledStream, OTHER};
use crate::hhmm::Segment;
use crate::par;
use crate::report::{num, to_csv_string};

pub const MIN_DURATION_SECS: f64 = 1.0;
pub const MAX_DURATION_SECS: f64 = 86_400.0;
const DAY_SECS: f64 = 86_400.0;

/// α candidates of the default sweep.
pub const ALPHA_GRID: [f64; 5] = [0.02, 0.04, 0.06, 0.08, 0.10];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrectionError {
    #[error("no training samples for class '{0}'")]
    NoSamples(String),
    #[error("no density for class '{0}'")]
    MissingPdf(String),
    #[error("invalid correction config: {0}")]
    InvalidConfig(String),
    #[error("evaluation failed: {0}")]
    Eval(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectionConfig {
    pub alpha: f64,
    pub tod_bins: usize,
    pub duration_bins: usize,
    /// Add-κ on every histogram cell.
    pub kappa: f64,
    /// Share of a sample's unit count also given to each of its four grid
    /// neighbours.
    pub neighbor_weight: f64,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.08,
            tod_bins: 24,
            duration_bins: 16,
            kappa: 0.01,
            neighbor_weight: 0.25,
        }
    }
}

impl CorrectionConfig {
    /// Default α for a named dataset profile.
    pub fn default_alpha(profile: &str) -> f64 {
        match profile {
            "home_b" | "home-b" | "homeb" => 0.06,
            _ => 0.08,
        }
    }

    pub fn validate(&self) -> Result<(), CorrectionError> {
        let bad = |m: &str| Err(CorrectionError::InvalidConfig(m.into()));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be a finite number >= 0");
        }
        if self.tod_bins < 2 || self.duration_bins < 2 {
            return bad("bin counts must be at least 2");
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad("kappa must be >= 0");
        }
        if !(self.neighbor_weight >= 0.0 && self.neighbor_weight.is_finite()) {
            return bad("neighbor_weight must be >= 0");
        }
        Ok(())
    }
}

/// A (time of day, duration) observation, both in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedSample {
    pub time_of_day: f64,
    pub duration: f64,
}

impl From<&Segment> for TimedSample {
    fn from(s: &Segment) -> Self {
        Self {
            time_of_day: s.time_of_day,
            duration: s.duration,
        }
    }
}

/// Smoothed histogram density of one class on the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPdf {
    pub class: String,
    pub tod_bins: usize,
    pub duration_bins: usize,
    /// Raw (spread) counts, row-major by time-of-day bin.
    pub counts: Vec<f64>,
    /// Density values; `Σ density × bin_area = 1`.
    pub density: Vec<f64>,
    pub sample_count: usize,
}

impl JointPdf {
    pub fn bin_area(&self) -> f64 {
        1.0 / (self.tod_bins * self.duration_bins) as f64
    }

    /// Bin edges along the time-of-day axis, in seconds.
    pub fn tod_edges(&self) -> Vec<f64> {
        (0..=self.tod_bins).map(|i| DAY_SECS * i as f64 / self.tod_bins as f64).collect()
    }

    /// Bin edges along the duration axis, in seconds (log-spaced).
    pub fn duration_edges(&self) -> Vec<f64> {
        let (lo, hi) = (MIN_DURATION_SECS.ln(), MAX_DURATION_SECS.ln());
        (0..=self.duration_bins)
            .map(|i| (lo + (hi - lo) * i as f64 / self.duration_bins as f64).exp())
            .collect()
    }

    pub fn bin_of(&self, s: TimedSample) -> (usize, usize) {
        bin_of(s, self.tod_bins, self.duration_bins)
    }

    pub fn density_at(&self, s: TimedSample) -> f64 {
        let (t, d) = self.bin_of(s);
        self.density[t * self.duration_bins + d]
    }

    /// Probability mass per bin.
    pub fn masses(&self) -> Vec<f64> {
        let a = self.bin_area();
        self.density.iter().map(|d| d * a).collect()
    }

    /// Highest density and its bin.
    pub fn mode(&self) -> ((usize, usize), f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, &d) in self.density.iter().enumerate() {
            if d > best.1 {
                best = (i, d);
            }
        }
        ((best.0 / self.duration_bins, best.0 % self.duration_bins), best.1)
    }
}

fn bin_of(s: TimedSample, tod_bins: usize, duration_bins: usize) -> (usize, usize) {
    let tod = s.time_of_day.rem_euclid(DAY_SECS) / DAY_SECS;
    let t = ((tod * tod_bins as f64) as usize).min(tod_bins - 1);
    let (lo, hi) = (MIN_DURATION_SECS.ln(), MAX_DURATION_SECS.ln());
    let dur = s.duration.clamp(MIN_DURATION_SECS, MAX_DURATION_SECS).ln();
    let d = (((dur - lo) / (hi - lo)) * duration_bins as f64) as usize;
    (t, d.min(duration_bins - 1))
}

/// Fits one class's density.
pub fn fit_joint_pdf(class: &str, samples: &[TimedSample], config: &CorrectionConfig) -> Result<JointPdf, CorrectionError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(CorrectionError::NoSamples(class.to_owned()));
    }
    let (nt, nd) = (config.tod_bins, config.duration_bins);
    let mut counts = vec![0.0; nt * nd];
    let w = config.neighbor_weight;
    for &s in samples {
        let (t, d) = bin_of(s, nt, nd);
        counts[t * nd + d] += 1.0;
        if w > 0.0 {
            counts[((t + 1) % nt) * nd + d] += w;
            counts[((t + nt - 1) % nt) * nd + d] += w;
            if d + 1 < nd {
                counts[t * nd + d + 1] += w;
            }
            if d > 0 {
                counts[t * nd + d - 1] += w;
            }
        }
    }
    let total: f64 = counts.iter().map(|c| c + config.kappa).sum();
    let cells = (nt * nd) as f64;
    let density = counts.iter().map(|c| (c + config.kappa) / total * cells).collect();
    Ok(JointPdf {
        class: class.to_owned(),
        tod_bins: nt,
        duration_bins: nd,
        counts,
        density,
        sample_count: samples.len(),
    })
}

/// Densities for every class, in class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfSet {
    pub pdfs: Vec<JointPdf>,
}

impl PdfSet {
    pub fn get(&self, class: &str) -> Option<&JointPdf> {
        self.pdfs.iter().find(|p| p.class == class)
    }
}

/// Ground-truth (time of day, duration) samples per class.
pub fn episode_samples(stream: &LabeledStream) -> BTreeMap<String, Vec<TimedSample>> {
    let mut out: BTreeMap<String, Vec<TimedSample>> = BTreeMap::new();
    for ep in &stream.episodes {
        let b = &stream.events[ep.begin];
        let e = &stream.events[ep.end];
        out.entry(ep.class.clone()).or_default().push(TimedSample {
            time_of_day: b.seconds_of_day(),
            duration: crate::events::seconds_between(&b.timestamp, &e.timestamp),
        });
    }
    out
}

/// Fits densities for `classes` from the training episodes.
pub fn fit_pdfs(train: &LabeledStream, classes: &[String], config: &CorrectionConfig) -> Result<PdfSet, CorrectionError> {
    let samples = episode_samples(train);
    let empty = Vec::new();
    let pdfs = par::map(classes, |c| fit_joint_pdf(c, samples.get(c).unwrap_or(&empty), config));
    Ok(PdfSet {
        pdfs: pdfs.into_iter().collect::<Result<_, _>>()?,
    })
}

/// Corrected label of a segment. Reads `raw_label`, so applying it again to
/// a corrected segment changes nothing.
pub fn correct_label(segment: &Segment, pdfs: &PdfSet, config: &CorrectionConfig) -> Result<String, CorrectionError> {
    correct_sample(&segment.raw_label, TimedSample::from(segment), pdfs, config.alpha)
}

fn correct_sample(raw: &str, s: TimedSample, pdfs: &PdfSet, alpha: f64) -> Result<String, CorrectionError> {
    if raw == OTHER {
        return Ok(OTHER.to_owned());
    }
    let own = pdfs.get(raw).ok_or_else(|| CorrectionError::MissingPdf(raw.to_owned()))?;
    if own.density_at(s) >= alpha {
        return Ok(raw.to_owned());
    }
    let mut best: Option<(&str, f64)> = None;
    for p in &pdfs.pdfs {
        let d = p.density_at(s);
        if d >= alpha && best.is_none_or(|(_, b)| d > b) {
            best = Some((&p.class, d));
        }
    }
    Ok(best.map_or(OTHER, |(c, _)| c).to_owned())
}

/// Sets `label` on every segment.
pub fn correct_segments(segments: &mut [Segment], pdfs: &PdfSet, config: &CorrectionConfig) -> Result<(), CorrectionError> {
    for s in segments.iter_mut() {
        s.label = correct_label(s, pdfs, config)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSweepRow {
    pub alpha: f64,
    pub accuracy: f64,
    /// Segments labelled `Other` after correction.
    pub other_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSweep {
    pub dataset: String,
    pub rows: Vec<AlphaSweepRow>,
}

impl AlphaSweep {
    /// Wide CSV: one row for the dataset, one accuracy column per α.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["dataset".to_owned()];
        header.extend(self.rows.iter().map(|r| format!("alpha_{}", num(r.alpha))));
        let mut row = vec![self.dataset.clone()];
        row.extend(self.rows.iter().map(|r| num(r.accuracy)));
        to_csv_string(&header, &[row])
    }

    /// Row with the highest accuracy; the smallest α wins ties.
    pub fn best(&self) -> Option<&AlphaSweepRow> {
        self.rows.iter().fold(None, |acc: Option<&AlphaSweepRow>, r| match acc {
            Some(b) if b.accuracy >= r.accuracy => Some(b),
            _ => Some(r),
        })
    }
}

/// Scores end-to-end accuracy of detected `segments` on `test` for each α,
/// with densities fitted once on `train`.
pub fn sweep_alpha(
    dataset: &str,
    train: &LabeledStream,
    segments: &[Segment],
    test: &LabeledStream,
    candidates: &[f64],
    base: &CorrectionConfig,
    policy: MatchPolicy,
) -> Result<AlphaSweep, CorrectionError> {
    if candidates.is_empty() {
        return Err(CorrectionError::InvalidConfig("no alpha candidates".into()));
    }
    let mut classes: Vec<String> = segments.iter().map(|s| s.raw_label.clone()).collect();
    classes.extend(test.class_names());
    classes.extend(train.class_names());
    classes.retain(|c| c != OTHER);
    classes.sort();
    classes.dedup();
    let pdfs = fit_pdfs(train, &classes, base)?;
    let rows = par::map(candidates, |&alpha| {
        let config = CorrectionConfig { alpha, ..base.clone() };
        config.validate()?;
        let mut segs = segments.to_vec();
        correct_segments(&mut segs, &pdfs, &config)?;
        let report = eval::score_segments(&segs, test, policy).map_err(|e| CorrectionError::Eval(e.to_string()))?;
        Ok(AlphaSweepRow {
            alpha,
            accuracy: report.accuracy,
            other_count: segs.iter().filter(|s| s.label == OTHER).count(),
        })
    });
    Ok(AlphaSweep {
        dataset: dataset.to_owned(),
        rows: rows.into_iter().collect::<Result<_, CorrectionError>>()?,
    })
}
