use serde::Serialize;

use super::{EventsError, LabeledStream, ObservationAlphabet};
use crate::report::{num, to_csv_string};

/// Normalized symbol frequencies of one class in the first `beta` events of
/// its episodes, the last `beta`, and everything between. A vector is empty
/// when no event fell in that region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivationRow {
    pub class: String,
    pub episodes: usize,
    pub begin: Vec<f64>,
    pub body: Vec<f64>,
    pub end: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivationReport {
    pub beta: usize,
    pub alphabet: ObservationAlphabet,
    pub rows: Vec<ActivationRow>,
}

fn normalized(counts: Vec<f64>) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return Vec::new();
    }
    counts.into_iter().map(|c| c / total).collect()
}

/// Per-class activation frequencies split into begin window, body and end
/// window. Interruptions are excluded from the episode they interrupt.
pub fn activation_frequency_report(stream: &LabeledStream, beta: usize) -> Result<ActivationReport, EventsError> {
    if stream.episodes.is_empty() {
        return Err(EventsError::NoEpisodes);
    }
    if beta == 0 {
        return Err(EventsError::InvalidProfile("window length must be at least 1".into()));
    }
    let alphabet = ObservationAlphabet::build([stream])?;
    let symbols = alphabet.encode_stream(stream);
    let n = alphabet.len();
    let mut rows = Vec::new();
    for class in stream.class_names() {
        let (mut b, mut m, mut e) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut count = 0;
        for (k, ep) in stream.episodes.iter().enumerate() {
            if ep.class != class {
                continue;
            }
            count += 1;
            let own = stream.own_indices(k);
            let head = beta.min(own.len());
            let tail = beta.min(own.len() - head);
            for (j, &i) in own.iter().enumerate() {
                let target = if j < head {
                    &mut b
                } else if j >= own.len() - tail {
                    &mut e
                } else {
                    &mut m
                };
                target[symbols[i]] += 1.0;
            }
        }
        rows.push(ActivationRow {
            class,
            episodes: count,
            begin: normalized(b),
            body: normalized(m),
            end: normalized(e),
        });
    }
    Ok(ActivationReport { beta, alphabet, rows })
}

impl ActivationReport {
    /// Long-format CSV: `class,region,sensor,value,frequency`, one line per
    /// non-zero frequency.
    pub fn to_csv(&self) -> String {
        let header: Vec<String> = ["class", "region", "sensor", "value", "frequency"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rows = Vec::new();
        for r in &self.rows {
            for (region, v) in [("begin", &r.begin), ("body", &r.body), ("end", &r.end)] {
                for (k, &f) in v.iter().enumerate() {
                    if f > 0.0 {
                        let s = self.alphabet.symbol(k).expect("index within alphabet");
                        rows.push(vec![r.class.clone(), region.into(), s.sensor.clone(), s.value.clone(), num(f)]);
                    }
                }
            }
        }
        to_csv_string(&header, &rows)
    }
}
