use serde::Serialize;

use super::engine::run_stream;
use super::fit::fit_hhmm;
use super::{HhmmConfig, HhmmError};
use crate::events::{LabeledStream, ObservationAlphabet};
use crate::par;
use crate::report::{num, to_csv_string};

/// One-to-one matching of detected to true boundary positions: each
/// detection, in order, takes the nearest unmatched truth within
/// `tolerance` events (earlier truth on ties). Returns the match count.
pub fn match_boundaries(detected: &[usize], truth: &[usize], tolerance: usize) -> usize {
    let mut truth: Vec<usize> = truth.to_vec();
    truth.sort_unstable();
    let mut used = vec![false; truth.len()];
    let mut detected: Vec<usize> = detected.to_vec();
    detected.sort_unstable();
    let mut hits = 0;
    for d in detected {
        let lo = truth.partition_point(|&t| t + tolerance < d);
        let mut best: Option<(usize, usize)> = None;
        for (i, &t) in truth.iter().enumerate().skip(lo) {
            if t > d + tolerance {
                break;
            }
            if used[i] {
                continue;
            }
            let dist = t.abs_diff(d);
            if best.is_none_or(|(_, bd)| dist < bd) {
                best = Some((i, dist));
            }
        }
        if let Some((i, _)) = best {
            used[i] = true;
            hits += 1;
        }
    }
    hits
}

/// Segment-level boundary F1: a detected `(begin, end)` pair hits a true
/// one when both boundaries lie within `tolerance` events. Pairs are
/// matched one-to-one, each detection taking the closest free truth.
pub fn boundary_f1(detected: &[(usize, usize)], truth: &[(usize, usize)], tolerance: usize) -> f64 {
    if detected.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let hits = match_spans(detected, truth, tolerance);
    2.0 * hits as f64 / (detected.len() + truth.len()) as f64
}

/// Number of one-to-one span matches within `tolerance` at both ends.
pub fn match_spans(detected: &[(usize, usize)], truth: &[(usize, usize)], tolerance: usize) -> usize {
    let mut truth: Vec<(usize, usize)> = truth.to_vec();
    truth.sort_unstable();
    let mut used = vec![false; truth.len()];
    let mut detected: Vec<(usize, usize)> = detected.to_vec();
    detected.sort_unstable();
    let mut hits = 0;
    for (b, e) in detected {
        let lo = truth.partition_point(|t| t.0 + tolerance < b);
        let mut best: Option<(usize, usize)> = None;
        for (i, t) in truth.iter().enumerate().skip(lo) {
            if t.0 > b + tolerance {
                break;
            }
            if used[i] || t.1.abs_diff(e) > tolerance {
                continue;
            }
            let dist = t.0.abs_diff(b) + t.1.abs_diff(e);
            if best.is_none_or(|(_, bd)| dist < bd) {
                best = Some((i, dist));
            }
        }
        if let Some((i, _)) = best {
            used[i] = true;
            hits += 1;
        }
    }
    hits
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaSweepRow {
    pub beta: usize,
    /// Matched begins over true begins plus unmatched detections.
    pub accuracy: f64,
    pub detected: usize,
    pub matched: usize,
    pub truth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaSweep {
    pub dataset: String,
    pub rows: Vec<BetaSweepRow>,
}

impl BetaSweep {
    /// Wide CSV: one row for the dataset, one accuracy column per β.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["dataset".to_owned()];
        header.extend(self.rows.iter().map(|r| format!("beta_{}", r.beta)));
        let mut row = vec![self.dataset.clone()];
        row.extend(self.rows.iter().map(|r| num(r.accuracy)));
        to_csv_string(&header, &[row])
    }

    pub fn accuracy(&self, beta: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.beta == beta).map(|r| r.accuracy)
    }
}

/// Fits and runs a full cycle per candidate β and scores begin detection:
/// a detected begin within β events of a true begin is correct.
pub fn sweep_beta(
    dataset: &str,
    train: &LabeledStream,
    test: &LabeledStream,
    alphabet: &ObservationAlphabet,
    candidates: &[usize],
    base: &HhmmConfig,
) -> Result<BetaSweep, HhmmError> {
    if candidates.is_empty() {
        return Err(HhmmError::InvalidConfig("no beta candidates".into()));
    }
    let truth: Vec<usize> = test.episodes.iter().map(|e| e.begin).collect();
    let rows = par::map(candidates, |&beta| {
        let config = HhmmConfig { beta, ..base.clone() };
        let model = fit_hhmm(train, alphabet, &config)?;
        let (segments, _) = run_stream(&model, &test.events)?;
        let begins: Vec<usize> = segments.iter().map(|s| s.begin_index).collect();
        let matched = match_boundaries(&begins, &truth, beta);
        let denom = truth.len() + begins.len() - matched;
        Ok(BetaSweepRow {
            beta,
            accuracy: if denom == 0 { 1.0 } else { matched as f64 / denom as f64 },
            detected: begins.len(),
            matched,
            truth: truth.len(),
        })
    });
    Ok(BetaSweep {
        dataset: dataset.to_owned(),
        rows: rows.into_iter().collect::<Result<_, HhmmError>>()?,
    })
}
